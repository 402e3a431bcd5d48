"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat N]

Each kernel is warmed up once (numba compiles on first call), then the best
of ``--repeat`` runs is reported. Outputs are compared before timing.
"""
import argparse
import timeit

import numpy as np

from genlie import kernels
from genlie._accel import HAVE_NUMBA


def cases(rng):
    active = rng.random((4096, 17)) < 0.15
    scores = rng.integers(0, 500, size=20_000).astype(np.float64)
    z = rng.normal(size=(32, 64))
    labels = rng.integers(0, 2, size=32)
    return [
        ("transient_counts T=4096 A=17", "transient_counts", (active, 30.0, 0.5)),
        ("average_ranks n=20000", "average_ranks", (scores,)),
        ("triplet_batch_all B=32 E=64", "triplet_batch_all", (z, labels, 0.2)),
    ]


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-10, atol=1e-12)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        print("numba unavailable or disabled (GENLIE_DISABLE_NUMBA); timing numpy only")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<32} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for label, name, inputs in cases(rng):
        np_fn = getattr(kernels, f"{name}_numpy")
        t_np = min(timeit.repeat(lambda: np_fn(*inputs), number=1, repeat=args.repeat)) * 1e3
        if HAVE_NUMBA:
            nb_fn = getattr(kernels, f"{name}_numba")
            if not _same(nb_fn(*inputs), np_fn(*inputs)):
                raise SystemExit(f"{name}: numba and numpy outputs differ")
            t_nb = min(timeit.repeat(lambda: nb_fn(*inputs), number=1, repeat=args.repeat)) * 1e3
            print(f"{label:<32} {t_np:>10.3f} {t_nb:>10.3f} {t_np / t_nb:>7.1f}x")
        else:
            print(f"{label:<32} {t_np:>10.3f} {'-':>10} {'-':>8}")


if __name__ == "__main__":
    main()
