import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from deformslice.cost import CostModelParams, patch_footprint_bits, resource, simulate_traffic
from deformslice.slicer import SliceConfig, layout

FIXTURE = CostModelParams(bit_width=16, beta=0, buffer_capacity=262_144, burst_bytes=64, channels=16)


def resource_by_counting(cfg, bit_width, beta):
    cells = sum(1 for _ in range(cfg.h_s + cfg.overlap) for _ in range(cfg.w_s + cfg.overlap))
    return bit_width * cells + beta


def transfer_bits(rect, h, w, p):
    """Burst-rounded cost of reading a rectangle: enumerate its byte ranges in HWC order."""
    y0, y1, x0, x1 = rect
    pix = p.pixel_bits // 8
    starts = sorted((i * w + j) * pix for i in range(y0, y1) for j in range(x0, x1))
    runs, run_len, prev = [], 0, None
    for a in starts:
        if prev is not None and a != prev + pix:
            runs.append(run_len)
            run_len = 0
        run_len += pix
        prev = a
    runs.append(run_len)
    return sum(math.ceil(r / p.burst_bytes) * p.burst_bytes * 8 for r in runs)


def bulk_bits(nbits, p):
    return math.ceil(nbits / p.burst_bits) * p.burst_bits


def oracle_totals(h, w, mode, p):
    full = transfer_bits((0, h, 0, w), h, w, p)
    inter = bulk_bits(p.samples_per_pixel * h * w * p.pixel_bits, p)
    if mode == "baseline":
        return 3 * full + 2 * inter
    if mode == "fused":
        return 2 * full + (2 * inter if h * w * p.pixel_bits > p.buffer_capacity else 0)
    total = 0
    for patch in layout(h, w, mode):
        total += transfer_bits(patch.padded, h, w, p) + transfer_bits(patch.core, h, w, p)
        ph, pw = patch.padded_shape
        if ph * pw * p.pixel_bits > p.buffer_capacity:
            ch, cw = patch.core_shape
            total += 2 * bulk_bits(p.samples_per_pixel * ch * cw * p.pixel_bits, p)
    return total


class TestResource:
    def test_paper_slice(self):
        assert resource(SliceConfig(28, 14, 1), CostModelParams(bit_width=16, beta=0)) == 6960

    def test_unit(self):
        assert resource(SliceConfig(1, 1, 0), CostModelParams(bit_width=1, beta=0)) == 1

    def test_beta(self):
        assert resource(SliceConfig(8, 8, 0), CostModelParams(bit_width=8, beta=100)) == 612

    def test_exact_integer(self):
        assert isinstance(resource(SliceConfig(28, 14, 1), CostModelParams()), int)

    @given(st.integers(1, 64), st.integers(1, 64), st.sampled_from([0, 1, 2]),
           st.sampled_from([8, 16, 32]), st.integers(0, 10_000))
    def test_matches_counting(self, h, w, k, bw, beta):
        cfg = SliceConfig(h, w, k)
        assert resource(cfg, CostModelParams(bit_width=bw, beta=beta)) == resource_by_counting(cfg, bw, beta)

    @given(st.integers(1, 40), st.integers(1, 40), st.sampled_from([0, 1]))
    def test_strictly_increasing(self, h, w, k):
        p = CostModelParams()
        r = resource(SliceConfig(h, w, k), p)
        assert resource(SliceConfig(h + 1, w, k), p) > r
        assert resource(SliceConfig(h, w + 1, k), p) > r
        assert resource(SliceConfig(h, w, k + 1), p) > r


class TestParams:
    @pytest.mark.parametrize("kwargs", [dict(bit_width=0), dict(burst_bytes=48), dict(buffer_capacity=0),
                                        dict(beta=-1), dict(channels=0), dict(bit_width=16.0)])
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            CostModelParams(**kwargs)

    def test_inf_serializes(self):
        assert CostModelParams(buffer_capacity=math.inf).to_dict()["buffer_capacity"] == "inf"


class TestTraffic:
    def test_baseline_normalized(self):
        assert simulate_traffic(56, 56, 16, "baseline", FIXTURE).normalized == 1.0

    @pytest.mark.parametrize("mode", ["baseline", "fused", SliceConfig(28, 14, 1), SliceConfig(20, 20, 2),
                                      SliceConfig(9, 13, 0), SliceConfig(56, 56, 0)])
    @pytest.mark.parametrize("buffer", [1_000, 262_144, math.inf])
    def test_matches_address_oracle(self, mode, buffer):
        p = CostModelParams(buffer_capacity=buffer)
        rep = simulate_traffic(56, 56, 16, mode, p)
        assert rep.total_bits == oracle_totals(56, 56, mode, p)

    def test_fixture_ordering(self):
        # buffer holds every padded 28x14 tile but not the full map
        assert patch_footprint_bits(SliceConfig(28, 14, 1), FIXTURE) <= FIXTURE.buffer_capacity
        assert 56 * 56 * FIXTURE.pixel_bits > FIXTURE.buffer_capacity
        sliced = simulate_traffic(56, 56, 16, SliceConfig(28, 14, 1), FIXTURE).normalized
        fused = simulate_traffic(56, 56, 16, "fused", FIXTURE).normalized
        assert sliced < fused < 1.0
        assert not any(p["spilled"] for p in simulate_traffic(56, 56, 16, SliceConfig(28, 14, 1), FIXTURE).per_patch)

    def test_single_patch_infinite_buffer_equals_fused(self):
        p = CostModelParams(buffer_capacity=math.inf)
        s = simulate_traffic(56, 56, 16, SliceConfig(56, 56, 0), p)
        f = simulate_traffic(56, 56, 16, "fused", p)
        assert (s.dram_reads_bits, s.dram_writes_bits, s.normalized) == (
            f.dram_reads_bits, f.dram_writes_bits, f.normalized)

    @pytest.mark.parametrize("buffer", [1_000, 262_144, 10**7])
    def test_degeneracy_any_buffer(self, buffer):
        p = CostModelParams(buffer_capacity=buffer)
        s = simulate_traffic(40, 24, 16, SliceConfig(40, 24, 0), p).to_dict()
        f = simulate_traffic(40, 24, 16, "fused", p).to_dict()
        for key in ("dram_reads_bits", "dram_writes_bits", "total_bits", "normalized", "params"):
            assert s[key] == f[key]

    @given(st.integers(4, 30), st.integers(4, 30), st.sampled_from([0, 1, 2]))
    def test_every_pixel_read(self, hs, ws, k):
        rep = simulate_traffic(56, 56, 16, SliceConfig(hs, ws, k), FIXTURE)
        assert rep.dram_reads_bits >= 56 * 56 * FIXTURE.pixel_bits

    @given(st.integers(4, 30), st.integers(4, 30))
    def test_overlap_monotone(self, hs, ws):
        totals = [simulate_traffic(56, 56, 16, SliceConfig(hs, ws, k), FIXTURE).total_bits for k in (0, 1, 2)]
        assert totals == sorted(totals)

    def test_buffer_threshold(self):
        cfg = SliceConfig(20, 20, 2)
        biggest = max(ph * pw for ph, pw in (p.padded_shape for p in layout(56, 56, cfg)))
        cap = biggest * FIXTURE.pixel_bits
        at = simulate_traffic(56, 56, 16, cfg, CostModelParams(buffer_capacity=cap))
        over = simulate_traffic(56, 56, 16, cfg, CostModelParams(buffer_capacity=cap - 1))
        assert not any(p["spilled"] for p in at.per_patch)
        assert any(p["spilled"] for p in over.per_patch)
        assert over.total_bits > at.total_bits

    def test_channels_override(self):
        rep = simulate_traffic(8, 8, 4, "baseline", FIXTURE)
        assert rep.params.channels == 4

    def test_report_dict(self):
        d = simulate_traffic(56, 56, None, SliceConfig(28, 14, 1), FIXTURE).to_dict()
        assert d["mode"] == "sliced" and d["cfg"] == {"h_s": 28, "w_s": 14, "overlap": 1}
        assert len(d["per_patch"]) == 8 and d["params"]["bit_width"] == 16

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            simulate_traffic(8, 8, 16, "streaming", FIXTURE)
