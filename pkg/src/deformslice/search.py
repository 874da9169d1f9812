"""Bi-objective evolutionary search over slice configurations.

Objectives: fidelity ``f1`` (maximize) and resource ``f2`` (minimize).
Each iteration samples ``k`` configs, evaluates them, offers the
resource-feasible ones to a non-dominated archive, then breeds mutants
and crossover children from archive members. Offspring that have not
been evaluated yet get up to half of the next iteration's sample.

:func:`brute_force_front` enumerates the whole space and is the ground
truth the evolutionary front is audited against.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .cost import CostModelParams, resource
from .dat_core import DeformAttnParams, forward_full
from .errors import SearchSpaceTooLarge
from .slicer import SliceConfig, fidelity

log = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 100_000
CSV_COLUMNS = ("h_s", "w_s", "overlap", "fidelity", "resource")


@dataclass(frozen=True)
class SearchSpace:
    h_range: tuple[int, int] = (8, 28)
    w_range: tuple[int, int] = (8, 28)
    overlaps: tuple[int, ...] = (0, 1, 2)
    divisible: tuple[int, int] | None = None  # (H, W): keep only exact tilings

    def __post_init__(self):
        object.__setattr__(self, "overlaps", tuple(sorted(set(self.overlaps))))
        if not self.h_values or not self.w_values or not self.overlaps:
            raise ValueError(f"empty search space: {self}")

    def _values(self, lo: int, hi: int, extent: int | None) -> list[int]:
        return [v for v in range(max(lo, 1), hi + 1) if extent is None or extent % v == 0]

    @property
    def h_values(self) -> list[int]:
        return self._values(*self.h_range, self.divisible and self.divisible[0])

    @property
    def w_values(self) -> list[int]:
        return self._values(*self.w_range, self.divisible and self.divisible[1])

    def configs(self) -> list[SliceConfig]:
        return [SliceConfig(h, w, k) for h in self.h_values for w in self.w_values for k in self.overlaps]

    def __len__(self) -> int:
        return len(self.h_values) * len(self.w_values) * len(self.overlaps)

    def __contains__(self, cfg: SliceConfig) -> bool:
        return cfg.h_s in self.h_values and cfg.w_s in self.w_values and cfg.overlap in self.overlaps


@dataclass(frozen=True)
class Candidate:
    cfg: SliceConfig
    f1: float
    f2: float
    evaluated: bool = True

    def dominates(self, other: "Candidate") -> bool:
        return (self.f1 >= other.f1 and self.f2 <= other.f2
                and (self.f1 > other.f1 or self.f2 < other.f2))

    @property
    def objectives(self) -> tuple[float, float]:
        return (self.f1, self.f2)


class Evaluator:
    """Memoized ``cfg -> Candidate``. Subclasses implement :meth:`objectives`."""

    def __init__(self):
        self._memo: dict[SliceConfig, Candidate] = {}
        self._lock = threading.Lock()
        self.n_computed = 0

    def objectives(self, cfg: SliceConfig) -> tuple[float, float]:
        raise NotImplementedError

    def resource_of(self, cfg: SliceConfig) -> float:
        # override when resource is cheaper than the full objective pair
        return self(cfg).f2

    def is_cached(self, cfg: SliceConfig) -> bool:
        return cfg in self._memo

    def candidates(self) -> list[Candidate]:
        with self._lock:
            return [self._memo[c] for c in sorted(self._memo)]

    def __call__(self, cfg: SliceConfig) -> Candidate:
        with self._lock:
            hit = self._memo.get(cfg)
        if hit is not None:
            return hit
        f1, f2 = self.objectives(cfg)
        with self._lock:
            if cfg not in self._memo:
                self._memo[cfg] = Candidate(cfg, float(f1), f2)
                self.n_computed += 1
            return self._memo[cfg]


class SliceEvaluator(Evaluator):
    """Fidelity of the sliced layer on a fixed input, and the slice resource."""

    def __init__(self, x, params: DeformAttnParams, cost_params: CostModelParams = CostModelParams(),
                 metric: str = "l2"):
        super().__init__()
        self.x = x
        self.params = params
        self.cost_params = cost_params
        self.metric = metric
        self._full_out, _ = forward_full(x, params)

    def resource_of(self, cfg):
        return resource(cfg, self.cost_params)

    def objectives(self, cfg):
        f1 = fidelity(self.x, self.params, cfg, metric=self.metric, full_out=self._full_out)
        return f1, resource(cfg, self.cost_params)


class SyntheticEvaluator(Evaluator):
    """Cheap stand-in: resource from the cost model, fidelity from ``f1_fn(resource)``.

    The default ``f1_fn`` is the straight trade-off line ``f2 / f2_max``:
    more resource buys proportionally more fidelity, so every distinct
    resource level is Pareto-optimal.
    """

    def __init__(self, cost_params: CostModelParams = CostModelParams(), f2_max: float | None = None,
                 f1_fn: Callable[[float], float] | None = None):
        super().__init__()
        self.cost_params = cost_params
        if f1_fn is None:
            if f2_max is None:
                raise ValueError("need f2_max for the default trade-off line")
            f1_fn = lambda f2: f2 / f2_max  # noqa: E731
        self.f1_fn = f1_fn

    def resource_of(self, cfg):
        return resource(cfg, self.cost_params)

    def objectives(self, cfg):
        f2 = resource(cfg, self.cost_params)
        return self.f1_fn(f2), f2


def evaluate(cfg: SliceConfig, evaluator: Evaluator) -> Candidate:
    return evaluator(cfg)


def hypervolume(points: Iterable[tuple[float, float]], ref_f2: float, ref_f1: float = 0.0) -> float:
    """Area dominated by ``(f1, f2)`` points (max f1, min f2) up to the reference corner."""
    pts = sorted((f2, f1) for f1, f2 in points if f2 <= ref_f2 and f1 >= ref_f1)
    area = 0.0
    best = ref_f1
    for i, (f2, f1) in enumerate(pts):
        best = max(best, f1)
        nxt = pts[i + 1][0] if i + 1 < len(pts) else ref_f2
        area += (nxt - f2) * (best - ref_f1)
    return area


class ParetoFront:
    """Archive of mutually non-dominated, resource-feasible candidates.

    Of several candidates with identical objectives only the one with the
    lexicographically smallest config is kept, so the archive content does
    not depend on discovery order.
    """

    def __init__(self, r_min: float = 0.0, r_max: float = math.inf):
        if r_min > r_max:
            raise ValueError(f"r_min={r_min} > r_max={r_max}")
        self.r_min = r_min
        self.r_max = r_max
        self._members: dict[SliceConfig, Candidate] = {}
        self.hypervolume_history: list[float] = []
        self.n_evaluations = 0
        self.diagnostic: str | None = None

    def feasible(self, cand: Candidate) -> bool:
        return self.r_min <= cand.f2 <= self.r_max

    def offer(self, cand: Candidate) -> bool:
        """Insert ``cand`` if feasible and non-dominated; evict what it dominates."""
        if not self.feasible(cand) or cand.cfg in self._members:
            return False
        for m in self._members.values():
            if m.dominates(cand):
                return False
            if m.objectives == cand.objectives and m.cfg < cand.cfg:
                return False
        self._members = {c: m for c, m in self._members.items()
                         if not cand.dominates(m) and m.objectives != cand.objectives}
        self._members[cand.cfg] = cand
        return True

    @property
    def members(self) -> list[Candidate]:
        return [self._members[c] for c in sorted(self._members)]

    def configs(self) -> set[SliceConfig]:
        return set(self._members)

    def __len__(self) -> int:
        return len(self._members)

    def __iter__(self):
        return iter(self.members)

    def is_mutually_nondominated(self) -> bool:
        ms = self.members
        return not any(a.dominates(b) for a in ms for b in ms)

    def hypervolume(self, ref_f2: float | None = None) -> float:
        ref = self.r_max if ref_f2 is None else ref_f2
        return hypervolume((m.objectives for m in self._members.values()), ref)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for m in self.members:
            writer.writerow([*m.cfg.as_tuple(), repr(m.f1), repr(m.f2)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "r_min": self.r_min,
            "r_max": self.r_max if math.isfinite(self.r_max) else "inf",
            "size": len(self),
            "members": [dict(zip(CSV_COLUMNS, (*m.cfg.as_tuple(), m.f1, m.f2))) for m in self.members],
            "hypervolume": self.hypervolume() if math.isfinite(self.r_max) else None,
            "hypervolume_history": self.hypervolume_history,
            "n_evaluations": self.n_evaluations,
            "diagnostic": self.diagnostic,
        }


@dataclass(frozen=True)
class SearchParams:
    iterations: int = 50
    sample_size: int = 16
    crossover_prob: float = 0.5
    max_step: int = 3
    overlap_mutation_prob: float = 1 / 3
    r_min: float = 0.0
    r_max: float | None = None  # None: largest resource in the space
    seed: int = 0
    workers: int = 1
    offspring_share: float = 0.5  # max fraction of each sample taken from offspring

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.sample_size < 2:
            raise ValueError("sample_size must be >= 2")
        if not 0.0 <= self.crossover_prob <= 1.0:
            raise ValueError("crossover_prob must lie in [0, 1]")
        if not 0.0 <= self.overlap_mutation_prob <= 1.0:
            raise ValueError("overlap_mutation_prob must lie in [0, 1]")
        if not 0.0 <= self.offspring_share <= 1.0:
            raise ValueError("offspring_share must lie in [0, 1]")
        if self.max_step < 0:
            raise ValueError("max_step must be >= 0")
        if self.r_max is not None and self.r_min > self.r_max:
            raise ValueError(f"r_min={self.r_min} > r_max={self.r_max}")


def _snap(value: int, allowed: Sequence[int]) -> int:
    value = min(max(value, allowed[0]), allowed[-1])
    return min(allowed, key=lambda a: (abs(a - value), a))


def mutate(cfg: SliceConfig, space: SearchSpace, params: SearchParams, rng: np.random.Generator
           ) -> SliceConfig:
    """Add a uniform integer step in ``[-max_step, max_step]`` to each extent, then clip."""
    s = params.max_step
    dh, dw = rng.integers(-s, s + 1, size=2)
    overlap = cfg.overlap
    if rng.random() < params.overlap_mutation_prob:
        overlap = space.overlaps[rng.integers(len(space.overlaps))]
    return SliceConfig(_snap(cfg.h_s + int(dh), space.h_values),
                       _snap(cfg.w_s + int(dw), space.w_values), int(overlap))


def crossover(a: SliceConfig, b: SliceConfig, p: float, rng: np.random.Generator) -> SliceConfig:
    """Take each extent from ``b`` with probability ``p``; overlap from a random parent."""
    take_h, take_w, from_b = rng.random(3)
    return SliceConfig(b.h_s if take_h < p else a.h_s,
                       b.w_s if take_w < p else a.w_s,
                       b.overlap if from_b < 0.5 else a.overlap)


def _evaluate_batch(batch: list[SliceConfig], evaluator: Evaluator, workers: int) -> list[Candidate]:
    if workers > 1 and len(batch) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(evaluator, batch))
    return [evaluator(c) for c in batch]


def _resolve_r_max(space: SearchSpace, r_max, evaluator: Evaluator) -> float:
    if r_max is not None:
        return r_max
    return max(evaluator.resource_of(c) for c in space.configs())


def run_search(space: SearchSpace, params: SearchParams, evaluator: Evaluator,
               callback: Callable[[int, ParetoFront], None] | None = None) -> ParetoFront:
    rng = np.random.default_rng(params.seed)
    r_max = _resolve_r_max(space, params.r_max, evaluator)
    front = ParetoFront(params.r_min, r_max)
    all_cfgs = space.configs()
    seen: set[SliceConfig] = set()
    offspring: list[SliceConfig] = []
    k = params.sample_size

    for t in range(params.iterations):
        # selection: fresh offspring first (capped by offspring_share), then uniform unseen configs
        batch: list[SliceConfig] = []
        cap = int(k * params.offspring_share)
        for c in offspring:
            if len(batch) >= cap:
                break
            if c not in seen and c not in batch:
                batch.append(c)
        pool = [c for c in all_cfgs if c not in seen and c not in batch]
        if pool:
            picks = rng.choice(len(pool), size=min(k - len(batch), len(pool)), replace=False)
            batch.extend(pool[i] for i in picks)
        batch.sort()
        seen.update(batch)

        for cand in _evaluate_batch(batch, evaluator, params.workers):
            front.offer(cand)
        front.n_evaluations += len(batch)
        front.hypervolume_history.append(front.hypervolume())

        members = front.members
        offspring = []
        if members:
            for _ in range(k // 2):
                parent = members[rng.integers(len(members))]
                offspring.append(mutate(parent.cfg, space, params, rng))
            for _ in range(k // 2):
                i, j = rng.integers(len(members), size=2)
                offspring.append(crossover(members[i].cfg, members[j].cfg, params.crossover_prob, rng))
        if callback is not None:
            callback(t, front)
        log.debug("iteration %d: %d evaluated, front size %d", t, len(seen), len(front))

    if not len(front):
        front.diagnostic = (f"no evaluated config has resource in [{params.r_min}, {r_max}] "
                            f"({len(seen)} configs evaluated)")
    return front


def brute_force_front(space: SearchSpace, evaluator: Evaluator, r_min: float = 0.0,
                      r_max: float = math.inf) -> ParetoFront:
    n = len(space)
    if n > BRUTE_FORCE_LIMIT:
        raise SearchSpaceTooLarge(f"space has {n} configs, brute force is capped at {BRUTE_FORCE_LIMIT}")
    front = ParetoFront(r_min, r_max)
    for cfg in space.configs():
        front.offer(evaluator(cfg))
        front.n_evaluations += 1
    if not len(front):
        front.diagnostic = f"no config has resource in [{r_min}, {r_max}]"
    return front


def dominance_audit(front: ParetoFront, oracle: ParetoFront) -> dict:
    """Which members of ``front`` are dominated by an oracle member, and set agreement."""
    dominated = [m for m in front.members if any(o.dominates(m) for o in oracle.members)]
    return {
        "front_size": len(front),
        "oracle_size": len(oracle),
        "n_dominated": len(dominated),
        "dominated": [str(m.cfg) for m in dominated],
        "set_equal": front.configs() == oracle.configs(),
        "missing_from_front": [str(c) for c in sorted(oracle.configs() - front.configs())],
    }
