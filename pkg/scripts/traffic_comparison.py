"""Normalized DRAM traffic of baseline, fused and sliced execution.

Prints one row per slice configuration for the 56x56x16 layer and a
sweep over buffer sizes for the 28x14+1 slice.
"""

import argparse

from deformslice import CostModelParams, SliceConfig, simulate_traffic


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=56)
    ap.add_argument("--channels", type=int, default=16)
    ap.add_argument("--bit-width", type=int, default=16)
    ap.add_argument("--samples-per-pixel", type=int, default=1)
    args = ap.parse_args()

    p = CostModelParams(bit_width=args.bit_width, channels=args.channels,
                        samples_per_pixel=args.samples_per_pixel)
    n = args.size
    print(f"{'mode':>16} {'normalized':>10}")
    for mode in ("baseline", "fused"):
        print(f"{mode:>16} {simulate_traffic(n, n, None, mode, p).normalized:10.3f}")
    for cfg in (SliceConfig(28, 14, 0), SliceConfig(28, 14, 1), SliceConfig(28, 14, 2),
                SliceConfig(14, 14, 1), SliceConfig(8, 8, 1), SliceConfig(28, 28, 2)):
        rep = simulate_traffic(n, n, None, cfg, p)
        spilled = sum(x["spilled"] for x in rep.per_patch)
        print(f"{'sliced ' + str(cfg):>16} {rep.normalized:10.3f}  ({spilled}/{len(rep.per_patch)} patches spill)")

    print("\nbuffer sweep, sliced 28x14+1 vs fused")
    for kib in (8, 16, 32, 64, 128):
        q = CostModelParams(bit_width=args.bit_width, channels=args.channels, buffer_capacity=kib * 8192,
                            samples_per_pixel=args.samples_per_pixel)
        s = simulate_traffic(n, n, None, SliceConfig(28, 14, 1), q).normalized
        f = simulate_traffic(n, n, None, "fused", q).normalized
        print(f"{kib:>5} KiB  sliced {s:.3f}  fused {f:.3f}")


if __name__ == "__main__":
    main()
