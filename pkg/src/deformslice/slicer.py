"""Inference-time slicing of deformable attention into independent patches.

Each patch owns a core rectangle of output pixels and may read a padded
rectangle (core grown by ``overlap`` on every side, clipped to the map).
Sampling coordinates are hard-clamped to the padded rectangle, so no
patch reads outside its own window and patches can run in any order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dat_core import DeformAttnParams, Rect, SampleTrace, attend_region, check_input, forward_full

OVERLAPS = (0, 1, 2)


@dataclass(frozen=True, order=True)
class SliceConfig:
    h_s: int
    w_s: int
    overlap: int = 0

    def __post_init__(self):
        for name in ("h_s", "w_s", "overlap"):
            if not isinstance(getattr(self, name), (int, np.integer)):
                raise TypeError(f"{name} must be an integer")
        if self.h_s < 1 or self.w_s < 1:
            raise ValueError(f"slice extents must be >= 1, got {self.h_s}x{self.w_s}")
        if self.overlap not in OVERLAPS:
            raise ValueError(f"overlap must be one of {OVERLAPS}, got {self.overlap}")

    def as_tuple(self) -> tuple[int, int, int]:
        return (int(self.h_s), int(self.w_s), int(self.overlap))

    def __str__(self) -> str:
        return f"{self.h_s}x{self.w_s}+{self.overlap}"


@dataclass(frozen=True)
class Patch:
    core: Rect
    padded: Rect

    @property
    def core_shape(self) -> tuple[int, int]:
        y0, y1, x0, x1 = self.core
        return y1 - y0, x1 - x0

    @property
    def padded_shape(self) -> tuple[int, int]:
        y0, y1, x0, x1 = self.padded
        return y1 - y0, x1 - x0


@dataclass(frozen=True)
class PatchLayout:
    h: int
    w: int
    cfg: SliceConfig
    patches: tuple[Patch, ...]

    def __len__(self) -> int:
        return len(self.patches)

    def __iter__(self):
        return iter(self.patches)

    @property
    def grid_shape(self) -> tuple[int, int]:
        return -(-self.h // self.cfg.h_s), -(-self.w // self.cfg.w_s)


def layout(h: int, w: int, cfg: SliceConfig) -> PatchLayout:
    """Tile an ``h x w`` map row-major; the last row/column absorbs the remainder."""
    if h < 1 or w < 1:
        raise ValueError(f"map extents must be >= 1, got {h}x{w}")
    k = cfg.overlap
    patches = []
    for y0 in range(0, h, cfg.h_s):
        y1 = min(y0 + cfg.h_s, h)
        for x0 in range(0, w, cfg.w_s):
            x1 = min(x0 + cfg.w_s, w)
            padded = (max(y0 - k, 0), min(y1 + k, h), max(x0 - k, 0), min(x1 + k, w))
            patches.append(Patch((y0, y1, x0, x1), padded))
    return PatchLayout(h, w, cfg, tuple(patches))


def forward_sliced(x, params: DeformAttnParams, cfg: SliceConfig, *,
                   order: Sequence[int] | None = None, workers: int = 1
                   ) -> tuple[np.ndarray, list[SampleTrace]]:
    """Run attention per patch and stitch the core blocks back together.

    ``order`` permutes the evaluation order and ``workers > 1`` runs patches
    on a thread pool; neither changes the result. Traces are returned in
    layout order regardless.
    """
    x = check_input(x, params)
    _, h, w = x.shape
    lay = layout(h, w, cfg)
    idx = list(range(len(lay))) if order is None else list(order)
    if sorted(idx) != list(range(len(lay))):
        raise ValueError("order must be a permutation of patch indices")

    def run(i):
        p = lay.patches[i]
        return i, attend_region(x, params, p.core, p.padded)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, idx))
    else:
        results = [run(i) for i in idx]

    out = np.empty_like(x)
    traces: list[SampleTrace | None] = [None] * len(lay)
    for i, (block, trace) in results:
        y0, y1, x0, x1 = lay.patches[i].core
        out[:, y0:y1, x0:x1] = block
        traces[i] = trace
    return out, traces


def _relative_error(diff: np.ndarray, ref: np.ndarray) -> float:
    ref_norm = np.linalg.norm(ref)
    diff_norm = np.linalg.norm(diff)
    if ref_norm == 0.0:
        return 0.0 if diff_norm == 0.0 else 1.0
    return min(1.0, diff_norm / ref_norm)


def fidelity(x, params: DeformAttnParams, cfg: SliceConfig, *, metric: str = "l2",
             full_out: np.ndarray | None = None) -> float:
    """Agreement in [0, 1] between sliced and unsliced outputs (1 = identical).

    ``metric="l2"`` uses the relative L2 error over the whole map;
    ``metric="patch_max"`` uses the worst per-patch relative error.
    ``full_out`` lets callers reuse a cached unsliced output.
    """
    if full_out is None:
        full_out, _ = forward_full(x, params)
    sliced, _ = forward_sliced(x, params, cfg)
    if metric == "l2":
        return 1.0 - _relative_error(sliced - full_out, full_out)
    if metric == "patch_max":
        _, h, w = full_out.shape
        worst = 0.0
        for p in layout(h, w, cfg):
            y0, y1, x0, x1 = p.core
            ref = full_out[:, y0:y1, x0:x1]
            worst = max(worst, _relative_error(sliced[:, y0:y1, x0:x1] - ref, ref))
        return 1.0 - worst
    raise ValueError(f"unknown fidelity metric {metric!r}")
