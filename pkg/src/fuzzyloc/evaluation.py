"""Error statistics, empirical CDFs, algorithm comparison and the anchor-count sweep."""
from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .channel import fmt
from .errors import ConfigurationError, EmptyInputError, InvalidProbabilityError
from .fuzzy import FlcSpec
from .localization import GridMap, with_reliability
from .pso import PsoConfig
from .simulator import (
    ALGORITHMS,
    Scenario,
    calibrate_scenario,
    evaluate_observations,
    generate_scenario,
    observe,
    observe_training,
)

CONFIDENCE_LEVELS = (0.1, 0.5, 0.9)
PSO_ALGORITHM = "fuzzy-pso"
DEFAULT_TRAINING_POSITIONS = 200


@dataclass(frozen=True)
class ErrorStats:
    ae: float  # mean
    me: float  # lower median
    sd: float  # sample standard deviation

    def to_dict(self, algorithm: str) -> dict:
        return {"algorithm": algorithm, "ae": self.ae, "me": self.me, "sd": self.sd}


def _checked(errors) -> list[float]:
    values = [float(e) for e in errors]
    if not values:
        raise EmptyInputError("no errors to summarize")
    return values


def compute_stats(errors: Iterable[float]) -> ErrorStats:
    """Mean, lower median and n-1 standard deviation (0 for one value)."""
    values = sorted(_checked(errors))
    n = len(values)
    mean = math.fsum(values) / n
    sd = math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1)) if n > 1 else 0.0
    return ErrorStats(mean, values[(n - 1) // 2], sd)


@dataclass(frozen=True)
class EmpiricalCdf:
    sorted_errors: tuple[float, ...]

    def __post_init__(self):
        if not self.sorted_errors:
            raise EmptyInputError("empty CDF")
        if any(b < a for a, b in zip(self.sorted_errors, self.sorted_errors[1:])):
            raise ValueError("sorted_errors must be non-decreasing")

    @property
    def n(self) -> int:
        return len(self.sorted_errors)

    def __call__(self, e: float) -> float:
        """Fraction of errors not exceeding ``e``."""
        return bisect.bisect_right(self.sorted_errors, e) / self.n

    def quantile(self, p: float) -> float:
        return quantile(self, p)

    def steps(self) -> list[tuple[float, float]]:
        """One (error, F(error)) point per distinct error value."""
        out = []
        for i, e in enumerate(self.sorted_errors):
            if i + 1 < self.n and self.sorted_errors[i + 1] == e:
                continue
            out.append((e, (i + 1) / self.n))
        return out


def empirical_cdf(errors: Iterable[float]) -> EmpiricalCdf:
    return EmpiricalCdf(tuple(sorted(_checked(errors))))


def quantile(cdf: EmpiricalCdf, p: float) -> float:
    """Nearest-rank quantile: the ceil(p * n)-th order statistic."""
    if not (0 < p <= 1):
        raise InvalidProbabilityError(f"p must be in (0, 1], got {p}")
    rank = max(1, math.ceil(p * cdf.n - 1e-12))
    return cdf.sorted_errors[rank - 1]


def confidence_errors(cdf: EmpiricalCdf, levels: Sequence[float] = CONFIDENCE_LEVELS) -> dict[float, float]:
    return {p: quantile(cdf, p) for p in levels}


# --------------------------------------------------------------------------
# exports

def stats_json(rows: Sequence[tuple[str, ErrorStats]]) -> str:
    return json.dumps([s.to_dict(alg) for alg, s in rows], indent=2) + "\n"


def cdf_csv(cdf: EmpiricalCdf) -> str:
    return "error,probability\n" + "".join(f"{fmt(e)},{fmt(p)}\n" for e, p in cdf.steps())


def sweep_csv(rows: Sequence[tuple[int, str, float]]) -> str:
    return "n_anchors,algorithm,mean_error\n" + "".join(f"{n},{alg},{fmt(e)}\n" for n, alg, e in rows)


# --------------------------------------------------------------------------
# experiments

def tuned_controllers(scenario: Scenario, anchors, grid: GridMap, pso: PsoConfig,
                      n_training: int = DEFAULT_TRAINING_POSITIONS, flc1=None, flc2=None):
    """Tune both controllers on labelled training positions of ``scenario``.

    Training positions and their samples come from streams separate from the
    test positions, so the test set is never seen during tuning.
    """
    from .fitness import LocalizationProblem, tune_controllers

    problem = LocalizationProblem.from_observations(grid, observe_training(scenario, anchors, n_training))
    return tune_controllers(problem, pso, flc1, flc2)


def compare_algorithms(
    scenario: Scenario,
    algorithms: Sequence[str] = ALGORITHMS + (PSO_ALGORITHM,),
    s: float = 0.25,
    flc1: FlcSpec | None = None,
    flc2: FlcSpec | None = None,
    pso: PsoConfig | None = None,
    n_training: int = DEFAULT_TRAINING_POSITIONS,
) -> dict[str, list[float]]:
    """Per-position errors of each algorithm on one scenario.

    All algorithms share one calibration and one set of test observations.
    ``fuzzy-pso`` tunes the controllers first (seeded from the scenario seed
    unless ``pso`` is given).
    """
    for alg in algorithms:
        if alg not in ALGORITHMS and alg != PSO_ALGORITHM:
            raise ConfigurationError(f"unknown algorithm {alg!r}")
    anchors = calibrate_scenario(scenario, flc1)
    grid = GridMap.for_room(*scenario.room, s)
    obs = observe(scenario, anchors)
    out = {}
    for alg in algorithms:
        if alg == PSO_ALGORITHM:
            cfg = pso or PsoConfig(seed=scenario.seed)
            tuned = tuned_controllers(scenario, anchors, grid, cfg, n_training, flc1, flc2)
            tuned_obs = observe(scenario, with_reliability(anchors, tuned.flc1))
            results = evaluate_observations(tuned_obs, "fuzzy", grid, tuned.flc2)
        else:
            results = evaluate_observations(obs, alg, grid, flc2)
        out[alg] = [r.error for r in results]
    return out


def beacon_sweep(
    template: Scenario,
    counts: Sequence[int] = range(4, 11),
    algorithms: Sequence[str] = ("fuzzy",),
    seeds: Sequence[int] = range(30),
    s: float = 0.25,
    placement: str = "grid",
    flc1: FlcSpec | None = None,
    flc2: FlcSpec | None = None,
    pso: PsoConfig | None = None,
    n_training: int = DEFAULT_TRAINING_POSITIONS,
) -> list[tuple[int, str, float]]:
    """Mean error per (anchor count, algorithm) over all seeds.

    Each seed regenerates the template's room, noise and sampling settings
    with that seed; each count regenerates the anchor layout.
    """
    counts = list(counts)
    if not counts:
        raise EmptyInputError("no anchor counts to sweep")
    seeds = list(seeds)
    if not seeds:
        raise EmptyInputError("no seeds to sweep")
    model = template.anchors[0].model
    rows = []
    for n in counts:
        per_alg = {alg: [] for alg in algorithms}
        for seed in seeds:
            sc = generate_scenario(template.room, n, len(template.test_positions), template.noise, seed,
                                   template.samples_per_position, placement, model)
            cfg = replace(pso, seed=pso.seed + seed) if pso is not None else None
            errs = compare_algorithms(sc, algorithms, s, flc1, flc2, cfg, n_training)
            for alg in algorithms:
                per_alg[alg].append(float(np.mean(errs[alg])))
        rows.extend((n, alg, float(np.mean(per_alg[alg]))) for alg in algorithms)
    return rows
