"""Binary checkpoint I/O (magic ``GLM1``).

Layout: ``<4s I I I I`` header (magic, D, H, D_out, C) followed by named
tensors, each ``<H`` name length, UTF-8 name, then the tensor's float64
values in row-major little-endian order. Tensor shapes follow from the
header; H == 0 marks a model without the re-embedding MLP.
"""
import struct
from pathlib import Path

import numpy as np

from .model import ModelConfig, param_order

MAGIC = b"GLM1"
_HEADER = struct.Struct("<4sIIII")


class CheckpointError(ValueError):
    pass


def _shapes(D, H, D_out, C):
    shapes = {}
    if H:
        shapes.update({"W1": (H, D), "b1": (H,), "W2": (D_out, H), "b2": (D_out,)})
    E = D_out if H else D
    shapes.update({"w_cls": (E,), "b_cls": (1,), "W_spk": (C, E), "b_spk": (C,)})
    return shapes


def checkpoint_bytes(params: dict, config: ModelConfig) -> bytes:
    H = config.hidden if config.use_reembedding else 0
    D_out = config.out_dim if config.use_reembedding else config.dim
    C = params["W_spk"].shape[0]
    shapes = _shapes(config.dim, H, D_out, C)
    out = [_HEADER.pack(MAGIC, config.dim, H, D_out, C)]
    for name in param_order(params):
        arr = np.asarray(params[name], dtype="<f8")
        if arr.shape != shapes[name]:
            raise CheckpointError(f"tensor {name} has shape {arr.shape}, expected {shapes[name]}")
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw + np.ascontiguousarray(arr).tobytes())
    return b"".join(out)


def save_checkpoint(path, params, config: ModelConfig) -> None:
    Path(path).write_bytes(checkpoint_bytes(params, config))


def load_checkpoint(path, dropout=0.0):
    """Returns ``(params, ModelConfig)``."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated header")
    magic, D, H, D_out, C = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    shapes = _shapes(D, H, D_out, C)
    params, off = {}, _HEADER.size
    while off < len(data):
        (n,) = struct.unpack_from("<H", data, off)
        name = data[off + 2:off + 2 + n].decode("utf-8")
        off += 2 + n
        if name not in shapes:
            raise CheckpointError(f"{path}: unexpected tensor {name!r}")
        count = int(np.prod(shapes[name]))
        if off + 8 * count > len(data):
            raise CheckpointError(f"{path}: tensor {name} truncated")
        params[name] = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shapes[name]).astype(np.float64)
        off += 8 * count
    missing = sorted(set(shapes) - set(params))
    if missing:
        raise CheckpointError(f"{path}: missing tensors {missing}")
    cfg = ModelConfig(dim=D, hidden=H or 1, out_dim=D_out, dropout=dropout, use_reembedding=bool(H))
    return params, cfg
