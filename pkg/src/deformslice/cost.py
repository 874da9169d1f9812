"""Slice resource formula and a burst-granular DRAM traffic model.

Traffic model
-------------
Feature maps are stored pixel-major with channels innermost (HWC), so a
rectangle spanning the full map width is one contiguous transfer and any
narrower rectangle costs one transfer per row. Every transfer is rounded
up to a whole number of DRAM bursts. The intermediate sampled-feature
tensor of a region holds ``samples_per_pixel`` C-channel vectors per
output pixel.

``baseline``  sampling layer and attention layer run one after the other:
              map read twice, intermediate written and read back, output
              written.
``fused``     one map read and one output write; the intermediate stays
              on chip iff the whole map fits in the buffer, else it is
              written and read back.
``sliced``    per patch: padded rectangle read once, core written once;
              the intermediate spills iff the padded tile does not fit.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Union

from .slicer import SliceConfig, layout

MODES = ("baseline", "fused", "sliced")


@dataclass(frozen=True)
class CostModelParams:
    bit_width: int = 16
    beta: int | float = 0
    buffer_capacity: int | float = 262_144  # bits
    burst_bytes: int = 64
    channels: int = 16
    samples_per_pixel: int = 1

    def __post_init__(self):
        if not isinstance(self.bit_width, int) or self.bit_width < 1:
            raise ValueError(f"bit_width must be a positive integer, got {self.bit_width!r}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if not self.buffer_capacity > 0:
            raise ValueError(f"buffer_capacity must be > 0, got {self.buffer_capacity}")
        b = self.burst_bytes
        if not isinstance(b, int) or b < 1 or b & (b - 1):
            raise ValueError(f"burst_bytes must be a power of two, got {b!r}")
        if self.channels < 1 or self.samples_per_pixel < 1:
            raise ValueError("channels and samples_per_pixel must be >= 1")

    @property
    def pixel_bits(self) -> int:
        return self.channels * self.bit_width

    @property
    def burst_bits(self) -> int:
        return 8 * self.burst_bytes

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(d["buffer_capacity"]):
            d["buffer_capacity"] = "inf"
        return d


def resource(cfg: SliceConfig, params: CostModelParams) -> int | float:
    """``bit_width * (w_s + overlap) * (h_s + overlap) + beta``.

    Overlap is counted once per axis. Integer inputs give an exact integer.
    """
    k = cfg.overlap
    return params.bit_width * (cfg.w_s + k) * (cfg.h_s + k) + params.beta


@dataclass
class TrafficReport:
    mode: str
    dram_reads_bits: int
    dram_writes_bits: int
    normalized: float
    h: int
    w: int
    params: CostModelParams
    cfg: SliceConfig | None = None
    per_patch: list[dict] = field(default_factory=list)

    @property
    def total_bits(self) -> int:
        return self.dram_reads_bits + self.dram_writes_bits

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "h": self.h,
            "w": self.w,
            "cfg": None if self.cfg is None else dict(zip(("h_s", "w_s", "overlap"), self.cfg.as_tuple())),
            "dram_reads_bits": self.dram_reads_bits,
            "dram_writes_bits": self.dram_writes_bits,
            "total_bits": self.total_bits,
            "normalized": self.normalized,
            "params": self.params.to_dict(),
            "per_patch": self.per_patch,
        }


def _xfer(bits: int, p: CostModelParams) -> int:
    return -(-bits // p.burst_bits) * p.burst_bits


def _rect_bits(rows: int, cols: int, w: int, p: CostModelParams) -> int:
    if cols == w:
        return _xfer(rows * cols * p.pixel_bits, p)
    return rows * _xfer(cols * p.pixel_bits, p)


def _intermediate_bits(pixels: int, p: CostModelParams) -> int:
    return _xfer(p.samples_per_pixel * pixels * p.pixel_bits, p)


def _raw_traffic(h: int, w: int, mode, p: CostModelParams) -> tuple[int, int, list[dict]]:
    full = _rect_bits(h, w, w, p)
    inter = _intermediate_bits(h * w, p)
    if mode == "baseline":
        return 2 * full + inter, inter + full, []
    if mode == "fused":
        spill = h * w * p.pixel_bits > p.buffer_capacity
        return full + spill * inter, full + spill * inter, []
    if not isinstance(mode, SliceConfig):
        raise ValueError(f"mode must be one of {MODES[:2]} or a SliceConfig, got {mode!r}")
    reads = writes = 0
    per_patch = []
    for patch in layout(h, w, mode):
        ph, pw = patch.padded_shape
        ch, cw = patch.core_shape
        r = _rect_bits(ph, pw, w, p)
        wr = _rect_bits(ch, cw, w, p)
        spill = ph * pw * p.pixel_bits > p.buffer_capacity
        if spill:
            pi = _intermediate_bits(ch * cw, p)
            r += pi
            wr += pi
        reads += r
        writes += wr
        per_patch.append({"core": list(patch.core), "padded": list(patch.padded),
                          "reads_bits": r, "writes_bits": wr, "spilled": spill})
    return reads, writes, per_patch


def simulate_traffic(h: int, w: int, channels: int | None, cfg_or_mode: Union[str, SliceConfig],
                     params: CostModelParams = CostModelParams()) -> TrafficReport:
    """DRAM traffic of one deformable attention layer, normalized to baseline.

    ``cfg_or_mode`` is ``"baseline"``, ``"fused"`` or a :class:`SliceConfig`
    (sliced mode). ``channels`` overrides ``params.channels`` when given.
    """
    if h < 1 or w < 1:
        raise ValueError(f"map extents must be >= 1, got {h}x{w}")
    if channels is not None and channels != params.channels:
        params = CostModelParams(**{**asdict(params), "channels": channels})
    base_r, base_w, _ = _raw_traffic(h, w, "baseline", params)
    reads, writes, per_patch = _raw_traffic(h, w, cfg_or_mode, params)
    is_cfg = isinstance(cfg_or_mode, SliceConfig)
    return TrafficReport(
        mode="sliced" if is_cfg else cfg_or_mode,
        dram_reads_bits=reads,
        dram_writes_bits=writes,
        normalized=1.0 if cfg_or_mode == "baseline" else (reads + writes) / (base_r + base_w),
        h=h, w=w, params=params,
        cfg=cfg_or_mode if is_cfg else None,
        per_patch=per_patch,
    )


def patch_footprint_bits(cfg: SliceConfig, params: CostModelParams) -> int:
    """On-chip footprint of an interior padded tile (overlap on both sides)."""
    k = cfg.overlap
    return params.pixel_bits * (cfg.w_s + 2 * k) * (cfg.h_s + 2 * k)
