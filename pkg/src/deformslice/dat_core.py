"""Reference (unsliced) deformable attention over a full feature map.

Every query pixel belongs to one ``stride x stride`` cell of a reference
grid. The cell's reference point predicts ``n_points`` 2-D offsets per
head from its own feature; keys and values are bilinearly sampled at
``reference + offset`` and every query in the cell attends to that
sampled set. ``stride=1`` makes each pixel its own reference point.

The same region routine backs the sliced path in :mod:`deformslice.slicer`,
which is what makes the single-patch case bit-identical to the full pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import fileio
from .errors import FormatError, ShapeError
from .tensor import bilinear_sample, linear, softmax

# (y0, y1, x0, x1), half-open pixel bounds
Rect = tuple[int, int, int, int]

WEIGHT_NAMES = (
    "w_q", "b_q", "w_k", "b_k", "w_v", "b_v", "w_o", "b_o",
    "off_w1", "off_b1", "off_w2", "off_b2",
)


@dataclass(frozen=True, eq=False)
class DeformAttnParams:
    """Weights of one deformable attention layer.

    ``n_points`` is the number of sampling points each reference point
    emits per head. With ``shared_offsets`` one offset set is shared by
    all heads.
    """

    d_model: int
    n_heads: int
    n_points: int
    offset_scale: float
    w_q: np.ndarray
    b_q: np.ndarray
    w_k: np.ndarray
    b_k: np.ndarray
    w_v: np.ndarray
    b_v: np.ndarray
    w_o: np.ndarray
    b_o: np.ndarray
    off_w1: np.ndarray
    off_b1: np.ndarray
    off_w2: np.ndarray
    off_b2: np.ndarray
    stride: int = 1
    shared_offsets: bool = False
    seed: int | None = None

    def __post_init__(self):
        if self.d_model < 1 or self.n_heads < 1 or self.d_model % self.n_heads:
            raise ShapeError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if self.n_points < 1:
            raise ShapeError("n_points must be >= 1")
        if self.stride < 1:
            raise ShapeError("stride must be >= 1")
        if not self.offset_scale > 0:
            raise ValueError(f"offset_scale must be > 0, got {self.offset_scale}")
        c = self.d_model
        hidden = np.shape(self.off_w1)[0] if np.ndim(self.off_w1) == 2 else -1
        expected = {
            "w_q": (c, c), "b_q": (c,), "w_k": (c, c), "b_k": (c,),
            "w_v": (c, c), "b_v": (c,), "w_o": (c, c), "b_o": (c,),
            "off_w1": (hidden, c), "off_b1": (hidden,),
            "off_w2": (self.offset_channels, hidden), "off_b2": (self.offset_channels,),
        }
        for name, shape in expected.items():
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ShapeError(f"{name} has shape {arr.shape}, expected {shape}")
            object.__setattr__(self, name, arr)

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    @property
    def offset_groups(self) -> int:
        return 1 if self.shared_offsets else self.n_heads

    @property
    def offset_channels(self) -> int:
        return self.offset_groups * self.n_points * 2

    def weights(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in WEIGHT_NAMES}

    def with_zero_offsets(self) -> "DeformAttnParams":
        """Copy whose offset network always outputs exactly zero."""
        return replace(self, off_w2=np.zeros_like(self.off_w2), off_b2=np.zeros_like(self.off_b2))


def synthesize_params(d_model=16, n_heads=2, n_points=4, offset_scale=14.0, seed=0, *,
                      stride=1, shared_offsets=False, hidden=None) -> DeformAttnParams:
    """Draw every weight from U(-1/sqrt(fan_in), 1/sqrt(fan_in)) in a fixed order."""
    rng = np.random.default_rng(seed)
    hidden = hidden or d_model
    groups = 1 if shared_offsets else n_heads
    shapes = {
        "w_q": (d_model, d_model), "b_q": (d_model,),
        "w_k": (d_model, d_model), "b_k": (d_model,),
        "w_v": (d_model, d_model), "b_v": (d_model,),
        "w_o": (d_model, d_model), "b_o": (d_model,),
        "off_w1": (hidden, d_model), "off_b1": (hidden,),
        "off_w2": (groups * n_points * 2, hidden), "off_b2": (groups * n_points * 2,),
    }
    fan_in = {"off_w2": hidden, "off_b2": hidden}
    weights = {}
    for name, shape in shapes.items():
        bound = 1.0 / math.sqrt(fan_in.get(name, d_model))
        weights[name] = rng.uniform(-bound, bound, size=shape)
    return DeformAttnParams(d_model, n_heads, n_points, float(offset_scale), **weights,
                            stride=stride, shared_offsets=shared_offsets, seed=seed)


def save_params(path, params: DeformAttnParams) -> None:
    meta = np.array([
        params.d_model, params.n_heads, params.n_points, params.offset_scale,
        params.stride, float(params.shared_offsets),
        -1.0 if params.seed is None else params.seed,
    ], dtype=np.float64)
    fileio.save_sections(path, {"meta": meta, **params.weights()})


def load_params(path) -> DeformAttnParams:
    sections = fileio.load_sections(path)
    missing = {"meta", *WEIGHT_NAMES} - sections.keys()
    if missing:
        raise FormatError(f"{path}: missing sections {sorted(missing)}")
    meta = sections["meta"]
    if meta.shape != (7,):
        raise FormatError(f"{path}: meta section has shape {meta.shape}, expected (7,)")
    d_model, n_heads, n_points, scale, stride, shared, seed = meta.tolist()
    return DeformAttnParams(
        int(d_model), int(n_heads), int(n_points), scale,
        **{name: sections[name] for name in WEIGHT_NAMES},
        stride=int(stride), shared_offsets=bool(shared),
        seed=None if seed < 0 else int(seed),
    )


def make_params(d_model: int, n_heads: int, n_points: int, offset_scale: float, source, **kwargs
                ) -> DeformAttnParams:
    """Synthesize params from an integer seed, or load them from a DATP file path."""
    if isinstance(source, (str, Path)):
        params = load_params(source)
        got = (params.d_model, params.n_heads, params.n_points)
        if got != (d_model, n_heads, n_points):
            raise ShapeError(f"weights file has (d_model, n_heads, n_points)={got}, "
                             f"expected {(d_model, n_heads, n_points)}")
        return params
    if isinstance(source, (bool, float)) or not isinstance(source, (int, np.integer)):
        raise TypeError(f"source must be a seed or a path, got {type(source).__name__}")
    return synthesize_params(d_model, n_heads, n_points, offset_scale, int(source), **kwargs)


@dataclass(frozen=True, eq=False)
class ReferenceGrid:
    points: np.ndarray  # (N, 2) row-major (y, x)
    h: int
    w: int
    stride: int

    def __len__(self) -> int:
        return len(self.points)

    @property
    def shape(self) -> tuple[int, int]:
        return -(-self.h // self.stride), -(-self.w // self.stride)


def _cell_centers(extent: int, stride: int) -> np.ndarray:
    starts = np.arange(0, extent, stride)
    ends = np.minimum(starts + stride, extent)
    return (starts + ends - 1) / 2.0


def reference_grid(h: int, w: int, stride: int = 1) -> ReferenceGrid:
    """One point at the center of each ``stride x stride`` cell.

    Trailing cells narrower than ``stride`` are centred on what remains,
    so every point stays inside ``[0, h-1] x [0, w-1]``.
    """
    if h < 1 or w < 1:
        raise ShapeError(f"reference grid needs positive extents, got {h}x{w}")
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    ys = _cell_centers(h, stride)
    xs = _cell_centers(w, stride)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return ReferenceGrid(np.stack([yy.ravel(), xx.ravel()], axis=1), h, w, stride)


@dataclass(frozen=True, eq=False)
class SampleTrace:
    """Sampling coordinates used by one region, in global pixel coordinates.

    ``raw`` is reference + offset before clamping; ``points`` is what was
    actually sampled after clamping into ``bounds``. Both are shaped
    ``(n_ref, n_heads, n_points, 2)``.
    """

    reference: np.ndarray
    raw: np.ndarray
    points: np.ndarray
    bounds: Rect

    def __len__(self) -> int:
        return len(self.reference)

    def confined(self) -> bool:
        y0, y1, x0, x1 = self.bounds
        ys, xs = self.points[..., 0], self.points[..., 1]
        return bool(((ys >= y0) & (ys <= y1 - 1) & (xs >= x0) & (xs <= x1 - 1)).all())

    def stats(self) -> dict:
        return {
            "n_reference": len(self),
            "n_samples": int(self.points.size // 2),
            "bounds": list(self.bounds),
            "confined": self.confined(),
            "n_clamped": int(np.any(self.raw != self.points, axis=-1).sum()),
        }


def check_input(x, params: DeformAttnParams) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"feature map must be [C, H, W], got shape {x.shape}")
    if x.shape[0] != params.d_model:
        raise ShapeError(f"input has {x.shape[0]} channels, params expect {params.d_model}")
    return x


def attend_region(x: np.ndarray, params: DeformAttnParams, core: Rect, bounds: Rect
                  ) -> tuple[np.ndarray, SampleTrace]:
    """Deformable attention for the queries in ``core``, reading only ``bounds``.

    Returns the ``[C, core_h, core_w]`` output block and its trace.
    """
    cy0, cy1, cx0, cx1 = core
    by0, by1, bx0, bx1 = bounds
    crop = x[:, by0:by1, bx0:bx1]
    bh, bw = by1 - by0, bx1 - bx0
    ch, cw = cy1 - cy0, cx1 - cx0
    heads, npts, hd = params.n_heads, params.n_points, params.head_dim
    c = params.d_model

    grid = reference_grid(ch, cw, params.stride)
    origin = np.array([cy0 - by0, cx0 - bx0], dtype=np.float64)
    refs = grid.points + origin
    n_ref = len(refs)

    feat = bilinear_sample(crop, refs).T
    hidden = np.tanh(linear(feat, params.off_w1, params.off_b1))
    off = np.tanh(linear(hidden, params.off_w2, params.off_b2)) * params.offset_scale
    off = off.reshape(n_ref, params.offset_groups, npts, 2)
    off = np.broadcast_to(off, (n_ref, heads, npts, 2))

    raw = refs[:, None, None, :] + off
    pts = np.empty_like(raw)
    pts[..., 0] = np.clip(raw[..., 0], 0.0, bh - 1)
    pts[..., 1] = np.clip(raw[..., 1], 0.0, bw - 1)

    sampled = bilinear_sample(crop, pts.reshape(-1, 2)).T.reshape(n_ref, heads, npts, c)
    wk = params.w_k.reshape(heads, hd, c)
    wv = params.w_v.reshape(heads, hd, c)
    keys = np.einsum("nhpc,hdc->nhpd", sampled, wk) + params.b_k.reshape(1, heads, 1, hd)
    vals = np.einsum("nhpc,hdc->nhpd", sampled, wv) + params.b_v.reshape(1, heads, 1, hd)

    qpix = x[:, cy0:cy1, cx0:cx1].reshape(c, -1).T
    q = linear(qpix, params.w_q, params.b_q).reshape(-1, heads, hd)
    ncols = grid.shape[1]
    iy, ix = np.divmod(np.arange(ch * cw), cw)
    cell = (iy // params.stride) * ncols + ix // params.stride

    logits = np.einsum("qhd,qhpd->qhp", q, keys[cell]) / math.sqrt(hd)
    attn = softmax(logits, axis=-1)
    mixed = np.einsum("qhp,qhpd->qhd", attn, vals[cell]).reshape(-1, c)
    out = linear(mixed, params.w_o, params.b_o).T.reshape(c, ch, cw)

    shift = np.array([by0, bx0], dtype=np.float64)
    trace = SampleTrace(refs + shift, raw + shift, pts + shift, bounds)
    return out, trace


def forward_full(x, params: DeformAttnParams) -> tuple[np.ndarray, SampleTrace]:
    x = check_input(x, params)
    _, h, w = x.shape
    full = (0, h, 0, w)
    return attend_region(x, params, full, full)
