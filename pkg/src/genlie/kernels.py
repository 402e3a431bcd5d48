"""Hot inner loops, each with a numba kernel and a numpy twin.

The public names (``transient_counts``, ``average_ranks``, ``triplet_batch_all``)
dispatch to numba when available; the ``*_numpy`` and ``*_numba`` variants are
importable directly for cross-checking and benchmarking.
"""
import numpy as np

from ._accel import HAVE_NUMBA, njit

# ---------------------------------------------------------------------------
# micro-expression run lengths


def transient_counts_numpy(active, fps, max_duration):
    """Per-frame count of channels whose covering activation run is transient.

    ``active`` is a (T, A) boolean matrix. A run is a maximal block of True
    values in one column; it is transient iff ``length / fps < max_duration``.
    """
    active = np.asarray(active, dtype=bool)
    T, A = active.shape
    padded = np.zeros((A, T + 2), dtype=np.int8)
    padded[:, 1:-1] = active.T
    step = np.diff(padded, axis=1)
    # row-major nonzero on the transposed matrix pairs starts/ends per channel
    _, starts = np.nonzero(step == 1)
    _, ends = np.nonzero(step == -1)
    lengths = ends - starts
    keep = lengths / fps < max_duration
    delta = np.zeros(T + 1, dtype=np.int64)
    np.add.at(delta, starts[keep], 1)
    np.add.at(delta, ends[keep], -1)
    return np.cumsum(delta[:T])


def _transient_counts_loop(active, fps, max_duration):
    T, A = active.shape
    out = np.zeros(T, dtype=np.int64)
    for a in range(A):
        t = 0
        while t < T:
            if active[t, a]:
                start = t
                while t < T and active[t, a]:
                    t += 1
                if (t - start) / fps < max_duration:
                    for u in range(start, t):
                        out[u] += 1
            else:
                t += 1
    return out


_transient_counts_nb = njit(_transient_counts_loop)


def transient_counts_numba(active, fps, max_duration):
    if _transient_counts_nb is None:
        return _transient_counts_loop(np.asarray(active, dtype=np.bool_), float(fps), float(max_duration))
    return _transient_counts_nb(np.ascontiguousarray(active, dtype=np.bool_), float(fps), float(max_duration))


# ---------------------------------------------------------------------------
# tie-averaged ranks


def average_ranks_numpy(x):
    """1-based ranks with ties replaced by their average rank."""
    x = np.asarray(x, dtype=np.float64)
    _, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    starts = np.cumsum(counts) - counts
    avg = starts + (counts + 1) / 2.0
    return avg[inverse.reshape(-1)]


def _average_ranks_loop(x, order):
    n = x.shape[0]
    ranks = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and x[order[j + 1]] == x[order[i]]:
            j += 1
        r = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = r
        i = j + 1
    return ranks


_average_ranks_nb = njit(_average_ranks_loop)


def average_ranks_numba(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    # numpy's sort beats numba's; only the tie sweep is compiled
    order = np.argsort(x)
    if _average_ranks_nb is None:
        return _average_ranks_loop(x, order)
    return _average_ranks_nb(x, order)


# ---------------------------------------------------------------------------
# batch-all triplet hinge


def _sq_dists(z):
    diff = z[:, None, :] - z[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def triplet_batch_all_numpy(z, labels, margin):
    """Batch-all triplet hinge on squared distances.

    Returns ``(loss, grad, n_active, n_valid)`` where ``loss`` is the mean
    over triplets with strictly positive hinge (0 when none) and ``grad`` is
    its gradient with respect to ``z``.
    """
    z = np.asarray(z, dtype=np.float64)
    labels = np.asarray(labels)
    B = z.shape[0]
    d = _sq_dists(z)
    same = labels[:, None] == labels[None, :]
    pos = same & ~np.eye(B, dtype=bool)
    valid = pos[:, :, None] & ~same[:, None, :]
    hinge = d[:, :, None] - d[:, None, :] + margin
    act = valid & (hinge > 0)
    n_active = int(act.sum())
    n_valid = int(valid.sum())
    if n_active == 0:
        return 0.0, np.zeros_like(z), 0, n_valid
    loss = float(hinge[act].sum()) / n_active
    # coefficient matrix: grad = coef @ z
    w_ap = act.sum(axis=2).astype(np.float64)  # (a, p) active counts
    w_an = act.sum(axis=1).astype(np.float64)  # (a, n) active counts
    coef = np.zeros((B, B))
    # anchor: 2 (z_n - z_p)
    coef += 2.0 * w_an - 2.0 * w_ap
    # positive: 2 (z_p - z_a)
    coef += np.diag(2.0 * w_ap.sum(axis=0)) - 2.0 * w_ap.T
    # negative: 2 (z_a - z_n)
    coef += 2.0 * w_an.T - np.diag(2.0 * w_an.sum(axis=0))
    return loss, coef @ z / n_active, n_active, n_valid


def _triplet_loop(z, labels, margin):
    B, D = z.shape
    d = np.zeros((B, B))
    for i in range(B):
        for j in range(B):
            s = 0.0
            for k in range(D):
                t = z[i, k] - z[j, k]
                s += t * t
            d[i, j] = s
    coef = np.zeros((B, B))
    total = 0.0
    n_active = 0
    n_valid = 0
    for a in range(B):
        for p in range(B):
            if p == a or labels[p] != labels[a]:
                continue
            for n in range(B):
                if labels[n] == labels[a]:
                    continue
                n_valid += 1
                h = d[a, p] - d[a, n] + margin
                if h > 0:
                    n_active += 1
                    total += h
                    coef[a, n] += 2.0
                    coef[a, p] -= 2.0
                    coef[p, p] += 2.0
                    coef[p, a] -= 2.0
                    coef[n, a] += 2.0
                    coef[n, n] -= 2.0
    grad = np.zeros((B, D))
    if n_active > 0:
        grad = coef @ z / n_active
        total = total / n_active
    return total, grad, n_active, n_valid


_triplet_nb = njit(_triplet_loop)


def triplet_batch_all_numba(z, labels, margin):
    z = np.ascontiguousarray(z, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    fn = _triplet_nb if _triplet_nb is not None else _triplet_loop
    loss, grad, n_active, n_valid = fn(z, labels, float(margin))
    return float(loss), grad, int(n_active), int(n_valid)


if HAVE_NUMBA:
    transient_counts = transient_counts_numba
    average_ranks = average_ranks_numba
    triplet_batch_all = triplet_batch_all_numba
else:
    transient_counts = transient_counts_numpy
    average_ranks = average_ranks_numpy
    triplet_batch_all = triplet_batch_all_numpy
