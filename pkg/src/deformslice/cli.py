"""Command-line entry point: ``deformslice {forward,cost,search}``.

Settings come from built-in defaults, then an optional INI-style config
file (``[section]`` / ``key = value``), then ``--set section.key=value``
overrides, then the dedicated flags. The resolved settings are validated
before any computation and echoed into every report.

Exit codes: 0 success, 1 validation error, 2 I/O or format error,
3 empty feasible region.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fileio
from .cost import CostModelParams, resource, simulate_traffic
from .dat_core import forward_full, make_params
from .errors import FormatError
from .plot import front_svg
from .search import (SearchParams, SearchSpace, SliceEvaluator, SyntheticEvaluator,
                     brute_force_front, dominance_audit, run_search)
from .slicer import SliceConfig, forward_sliced

log = logging.getLogger("deformslice")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_EMPTY = 0, 1, 2, 3


class ValidationError(ValueError):
    pass


class EmptyFeasibleRegion(RuntimeError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_str(s: str):
    return None if s.strip().lower() in ("", "none") else s.strip()


def _num(s: str):
    s = s.strip()
    if s.lower() in ("inf", "infinity"):
        return math.inf
    try:
        return int(s)
    except ValueError:
        return float(s)


def _opt_num(s: str):
    return None if s.strip().lower() in ("", "none") else _num(s)


def _int_tuple(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.replace(" ", "").split(",") if v)


# key -> (default, parser)
SETTINGS = {
    "model.d_model": (16, int),
    "model.n_heads": (2, int),
    "model.n_points": (4, int),
    "model.offset_scale": (14.0, float),
    "model.stride": (1, int),
    "model.shared_offsets": (False, _bool),
    "model.seed": (0, int),
    "model.weights": (None, _opt_str),
    "input.height": (56, int),
    "input.width": (56, int),
    "input.seed": (1, int),
    "input.path": (None, _opt_str),
    "slice.mode": ("sliced", str),
    "slice.h_s": (28, int),
    "slice.w_s": (14, int),
    "slice.overlap": (1, int),
    "cost.mode": ("all", str),
    "cost.bit_width": (16, int),
    "cost.beta": (0, _num),
    "cost.buffer_capacity": (262_144, _num),
    "cost.burst_bytes": (64, int),
    "cost.samples_per_pixel": (1, int),
    "search.h_min": (8, int),
    "search.h_max": (28, int),
    "search.w_min": (8, int),
    "search.w_max": (28, int),
    "search.overlaps": ((0, 1, 2), _int_tuple),
    "search.divisible": (False, _bool),
    "search.iterations": (50, int),
    "search.sample_size": (16, int),
    "search.crossover_prob": (0.5, float),
    "search.max_step": (3, int),
    "search.overlap_mutation_prob": (1 / 3, float),
    "search.r_min": (0, _num),
    "search.r_max": (None, _opt_num),
    "search.seed": (0, int),
    "search.workers": (1, int),
    "search.evaluator": ("fidelity", str),
    "search.metric": ("l2", str),
    "output.dir": ("out", str),
}


def _set(values: dict, key: str, raw: str) -> None:
    if key not in SETTINGS:
        raise ValidationError(f"unknown setting {key!r}")
    try:
        values[key] = SETTINGS[key][1](raw)
    except ValueError as exc:
        raise ValidationError(f"bad value for {key}: {exc}") from None


@dataclass
class RunConfig:
    values: dict

    @classmethod
    def resolve(cls, config_file=None, overrides=()) -> "RunConfig":
        values = {k: v for k, (v, _) in SETTINGS.items()}
        if config_file is not None:
            parser = configparser.ConfigParser()
            try:
                with open(config_file) as fh:
                    parser.read_file(fh)
            except configparser.Error as exc:
                raise ValidationError(f"{config_file}: {exc}") from None
            for section in parser.sections():
                for key, raw in parser.items(section):
                    _set(values, f"{section}.{key}", raw)
        for item in overrides:
            key, sep, raw = item.partition("=")
            if not sep:
                raise ValidationError(f"override {item!r} is not of the form section.key=value")
            _set(values, key.strip(), raw)
        cfg = cls(values)
        cfg.validate()
        return cfg

    def __getitem__(self, key):
        return self.values[key]

    def validate(self) -> None:
        try:
            if self["slice.mode"] not in ("full", "sliced"):
                raise ValueError(f"slice.mode must be full or sliced, got {self['slice.mode']!r}")
            if self["cost.mode"] not in ("all", "baseline", "fused", "sliced"):
                raise ValueError(f"cost.mode must be all, baseline, fused or sliced")
            if self["search.evaluator"] not in ("fidelity", "synthetic"):
                raise ValueError("search.evaluator must be fidelity or synthetic")
            if self["search.metric"] not in ("l2", "patch_max"):
                raise ValueError("search.metric must be l2 or patch_max")
            if self["input.height"] < 1 or self["input.width"] < 1:
                raise ValueError("input extents must be >= 1")
            if self["model.weights"] is None:
                self.model_params()
            self.slice_config()
            self.cost_params()
            self.search_space()
            self.search_params()
        except (ValueError, TypeError) as exc:
            raise ValidationError(str(exc)) from None

    def model_params(self):
        source = self["model.weights"] or self["model.seed"]
        return make_params(self["model.d_model"], self["model.n_heads"], self["model.n_points"],
                           self["model.offset_scale"], source, stride=self["model.stride"],
                           shared_offsets=self["model.shared_offsets"])

    def feature_map(self) -> np.ndarray:
        if self["input.path"]:
            return fileio.load_tensor(self["input.path"])
        rng = np.random.default_rng(self["input.seed"])
        return rng.standard_normal((self["model.d_model"], self["input.height"], self["input.width"]))

    def slice_config(self) -> SliceConfig:
        return SliceConfig(self["slice.h_s"], self["slice.w_s"], self["slice.overlap"])

    def cost_params(self) -> CostModelParams:
        return CostModelParams(self["cost.bit_width"], self["cost.beta"], self["cost.buffer_capacity"],
                               self["cost.burst_bytes"], self["model.d_model"],
                               self["cost.samples_per_pixel"])

    def search_space(self) -> SearchSpace:
        div = (self["input.height"], self["input.width"]) if self["search.divisible"] else None
        return SearchSpace((self["search.h_min"], self["search.h_max"]),
                           (self["search.w_min"], self["search.w_max"]),
                           self["search.overlaps"], div)

    def search_params(self) -> SearchParams:
        return SearchParams(self["search.iterations"], self["search.sample_size"],
                            self["search.crossover_prob"], self["search.max_step"],
                            self["search.overlap_mutation_prob"], self["search.r_min"],
                            self["search.r_max"], self["search.seed"], self["search.workers"])

    @property
    def out_dir(self) -> Path:
        return Path(self["output.dir"])

    def to_dict(self) -> dict:
        def enc(v):
            if isinstance(v, float) and math.isinf(v):
                return "inf"
            return list(v) if isinstance(v, tuple) else v
        return {k: enc(self.values[k]) for k in sorted(self.values)}


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_forward(cfg: RunConfig) -> dict:
    params = cfg.model_params()
    x = cfg.feature_map()
    out_dir = cfg.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    report = {"command": "forward", "config": cfg.to_dict(), "mode": cfg["slice.mode"]}
    if cfg["slice.mode"] == "full":
        out, trace = forward_full(x, params)
        report["trace"] = {"patches": [trace.stats()], "all_confined": trace.confined()}
    else:
        sc = cfg.slice_config()
        full_out, _ = forward_full(x, params)
        out, traces = forward_sliced(x, params, sc)
        err = np.linalg.norm(out - full_out)
        ref = np.linalg.norm(full_out)
        report["fidelity"] = (1.0 - min(1.0, err / ref)) if ref else float(err == 0)
        report["trace"] = {"patches": [t.stats() for t in traces],
                           "all_confined": all(t.confined() for t in traces)}
    fileio.save_tensor(out_dir / "output.fmap", out)
    report["output"] = str(out_dir / "output.fmap")
    _write_json(out_dir / "forward.json", report)
    return report


def cmd_cost(cfg: RunConfig) -> dict:
    cp = cfg.cost_params()
    sc = cfg.slice_config()
    h, w = cfg["input.height"], cfg["input.width"]
    mode = cfg["cost.mode"]
    modes = ["baseline", "fused", "sliced"] if mode == "all" else [mode]
    reports = {m: simulate_traffic(h, w, None, sc if m == "sliced" else m, cp).to_dict() for m in modes}
    result = {"command": "cost", "config": cfg.to_dict(), "resource": resource(sc, cp), "traffic": reports}
    if mode == "all":
        n = {m: reports[m]["normalized"] for m in modes}
        result["ordering"] = sorted(modes, key=lambda m: n[m])
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(cfg.out_dir / "cost.json", result)
    return result


def cmd_search(cfg: RunConfig, oracle: bool = False) -> dict:
    space = cfg.search_space()
    sp = cfg.search_params()
    cp = cfg.cost_params()
    if cfg["search.evaluator"] == "synthetic":
        f2_max = max(resource(c, cp) for c in space.configs())
        evaluator = SyntheticEvaluator(cp, f2_max=f2_max)
    else:
        evaluator = SliceEvaluator(cfg.feature_map(), cfg.model_params(), cp, cfg["search.metric"])
    front = run_search(space, sp, evaluator)
    result = {"command": "search", "config": cfg.to_dict(), "front": front.to_dict()}
    if oracle:
        truth = brute_force_front(space, evaluator, front.r_min, front.r_max)
        result["oracle"] = {"front": truth.to_dict(), "audit": dominance_audit(front, truth)}

    out_dir = cfg.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "front.csv").write_text(front.to_csv())
    _write_json(out_dir / "front.json", result)
    (out_dir / "front.svg").write_text(
        front_svg(evaluator.candidates(), front.members, title=f"seed {sp.seed}"))
    if not len(front):
        raise EmptyFeasibleRegion(front.diagnostic)
    return result


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="INI-style settings file")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one setting (repeatable)")
    common.add_argument("-o", "--out", help="output directory")
    common.add_argument("--input", help="FMAP feature map to use instead of a synthetic one")
    common.add_argument("--weights", help="DATP params file to use instead of seeded synthesis")
    common.add_argument("--slice", metavar="H_S,W_S,OVERLAP", help="slice configuration")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="deformslice", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("forward", parents=[common], help="run full or sliced deformable attention")
    p.add_argument("--mode", choices=["full", "sliced"])
    p = sub.add_parser("cost", parents=[common], help="slice resource and DRAM traffic report")
    p.add_argument("--mode", choices=["all", "baseline", "fused", "sliced"])
    p = sub.add_parser("search", parents=[common], help="evolutionary search for Pareto slice configs")
    p.add_argument("--seed", type=int, help="search RNG seed")
    p.add_argument("--oracle", action="store_true", help="also run the brute-force front and audit")
    return parser


def _flag_overrides(args) -> list[str]:
    out = list(args.set)
    if args.out:
        out.append(f"output.dir={args.out}")
    if args.input:
        out.append(f"input.path={args.input}")
    if args.weights:
        out.append(f"model.weights={args.weights}")
    if args.slice:
        parts = args.slice.split(",")
        if len(parts) != 3:
            raise ValidationError(f"--slice expects H_S,W_S,OVERLAP, got {args.slice!r}")
        out += [f"slice.{k}={v}" for k, v in zip(("h_s", "w_s", "overlap"), parts)]
    mode = getattr(args, "mode", None)
    if mode:
        out.append(f"{'slice' if args.command == 'forward' else 'cost'}.mode={mode}")
    if getattr(args, "seed", None) is not None:
        out.append(f"search.seed={args.seed}")
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.resolve(args.config, _flag_overrides(args))
        if args.command == "forward":
            cmd_forward(cfg)
        elif args.command == "cost":
            cmd_cost(cfg)
        else:
            cmd_search(cfg, oracle=args.oracle)
    except EmptyFeasibleRegion as exc:
        print(f"error: empty feasible region: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (FormatError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, ValueError, TypeError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
