"""Dense float64 kernels: affine map, stable softmax, bilinear sampling.

Tensors are plain C-contiguous ``numpy.float64`` arrays, so the flat
buffer is row-major and ``arr.shape`` carries the extents.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError, ShapeError

MAX_RANK = 4


def as_tensor(values, *, min_rank: int = 1) -> np.ndarray:
    """Coerce ``values`` into a contiguous float64 array and check extents."""
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim < min_rank or arr.ndim > MAX_RANK:
        raise ShapeError(f"rank {arr.ndim} outside [{min_rank}, {MAX_RANK}]")
    if any(d < 1 for d in arr.shape):
        raise ShapeError(f"all extents must be >= 1, got {arr.shape}")
    return arr


def linear(inp, weight, bias) -> np.ndarray:
    """Apply ``inp @ weight.T + bias`` along the last axis."""
    inp = np.asarray(inp, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if weight.ndim != 2:
        raise ShapeError(f"weight must be 2-D, got shape {weight.shape}")
    d_out, d_in = weight.shape
    if inp.shape[-1] != d_in:
        raise ShapeError(f"input inner dim {inp.shape[-1]} != weight inner dim {d_in}")
    if bias.shape != (d_out,):
        raise ShapeError(f"bias shape {bias.shape} != ({d_out},)")
    return inp @ weight.T + bias


def softmax(inp, axis: int = -1) -> np.ndarray:
    inp = np.asarray(inp, dtype=np.float64)
    if np.isnan(inp).any():
        raise NumericError("softmax input contains NaN")
    if not -inp.ndim <= axis < inp.ndim:
        raise ShapeError(f"axis {axis} invalid for rank {inp.ndim}")
    shifted = inp - inp.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def bilinear_sample(fmap, points) -> np.ndarray:
    """Sample a ``[C, H, W]`` map at continuous ``(y, x)`` points.

    Points are clamped to ``[0, H-1] x [0, W-1]`` first (border
    replication). Returns ``[C, N]``. Integer points reproduce the pixel
    value exactly.
    """
    fmap = np.asarray(fmap, dtype=np.float64)
    if fmap.ndim != 3:
        raise ShapeError(f"map must be [C, H, W], got shape {fmap.shape}")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if np.isnan(pts).any():
        raise NumericError("sampling coordinates contain NaN")
    _, h, w = fmap.shape
    y = np.clip(pts[:, 0], 0.0, h - 1)
    x = np.clip(pts[:, 1], 0.0, w - 1)
    y0 = np.floor(y).astype(np.intp)
    x0 = np.floor(x).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = y - y0
    wx = x - x0
    top = fmap[:, y0, x0] * (1.0 - wx) + fmap[:, y0, x1] * wx
    bot = fmap[:, y1, x0] * (1.0 - wx) + fmap[:, y1, x1] * wx
    return top * (1.0 - wy) + bot * wy
