"""Localization-accuracy fitness for tuning either controller.

The expensive parts of the pipeline (sampling, filtering, distance inversion,
proximity ratios) do not depend on the controllers, so they are computed once
and candidate controllers are scored with array arithmetic only.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import estimate_distance
from .errors import FuzzyLocError
from .fuzzy import FlcSpec, default_flc1, default_flc2, flc_infer, infer_with_params
from .localization import GridMap, proximity_index
from .pso import INFEASIBLE, Chromosome, PsoConfig, PsoResult, decode_chromosome, feasible_mask, genes_to_params, run_pso
from .pso import _ordered
from .simulator import Observation


@dataclass
class LocalizationProblem:
    grid: GridMap
    truth: np.ndarray  # (P, 2)
    w_hat: np.ndarray  # (P, N)
    proximity: np.ndarray  # (P, N)
    z_scores: np.ndarray  # (N,)
    k_scores: np.ndarray  # (N,)
    cell_dist: np.ndarray  # (N, C) anchor to cell-center distances
    centers: np.ndarray  # (C, 2) in row-major (i, j) order

    def __post_init__(self):
        self._rhs = np.concatenate([self.cell_dist ** 2, -2.0 * self.cell_dist], axis=0)

    @classmethod
    def from_observations(cls, grid: GridMap, observations: Sequence[Observation]) -> "LocalizationProblem":
        anchors = observations[0].anchors
        ids = [a.id for a in anchors]
        for obs in observations:
            if [a.id for a in obs.anchors] != ids:
                raise ValueError("every observation must hear the same anchors")
        rssi = np.array([obs.rssi for obs in observations])
        w_hat = np.stack([estimate_distance(a.model, rssi[:, n]) for n, a in enumerate(anchors)], axis=1)
        prox = np.array([[proximity_index(r, row) for r in row] for row in rssi])
        xs, ys = grid.axes()
        centers = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
        cell_dist = np.stack([grid.distances(a.position).ravel() for a in anchors])
        return cls(
            grid, np.array([obs.truth for obs in observations]), w_hat, prox,
            np.array([a.z_score for a in anchors]), np.array([a.k_score for a in anchors]),
            cell_dist, centers,
        )

    def errors_for_weights(self, weights: np.ndarray) -> np.ndarray:
        """Localization errors for weights ``(..., P, N)``; shape ``(..., P)``.

        Uses the expansion sum I*(w - d)**2 = sum I*w**2 - 2*sum I*w*d + sum I*d**2
        and drops the first term, which is constant over cells.  Near-exact
        ties may resolve differently from :func:`localization.locate`.
        """
        lhs = np.concatenate([weights, weights * self.w_hat], axis=-1)
        best = np.argmin(lhs @ self._rhs, axis=-1)
        est = self.centers[best]
        return np.hypot(est[..., 0] - self.truth[:, 0], est[..., 1] - self.truth[:, 1])

    def mean_error(self, flc1: FlcSpec, flc2: FlcSpec) -> float:
        rel = flc_infer(flc1, self.z_scores, self.k_scores)
        weights = flc_infer(flc2, rel[None, :], self.proximity)
        return float(self.errors_for_weights(weights).mean())


class NegMeanError:
    """Negative mean localization error with one controller under tuning.

    ``role`` is ``"flc1"`` or ``"flc2"``; the other controller is held fixed.
    """

    def __init__(self, problem: LocalizationProblem, role: str, flc1: FlcSpec | None = None,
                 flc2: FlcSpec | None = None):
        if role not in ("flc1", "flc2"):
            raise ValueError(f"role must be 'flc1' or 'flc2', got {role!r}")
        self.problem = problem
        self.role = role
        self.flc1 = flc1 or default_flc1()
        self.flc2 = flc2 or default_flc2()

    @property
    def template(self) -> FlcSpec:
        return self.flc1 if self.role == "flc1" else self.flc2

    def _weights(self, params: np.ndarray) -> np.ndarray:
        p = self.problem
        if self.role == "flc1":
            rel, total = infer_with_params(self.flc1, params, p.z_scores, p.k_scores)
            ok = np.all(total > 0, axis=1)
            rel = np.where(ok[:, None], rel, 0.0)
            weights, total2 = infer_with_params(self.flc2, self.flc2.params()[None], rel[:, None, :], p.proximity)
            weights = weights[0]
            ok &= np.all(total2[0] > 0, axis=(1, 2))
        else:
            rel = flc_infer(self.flc1, p.z_scores, p.k_scores)
            weights, total = infer_with_params(self.flc2, params, rel[None, :], p.proximity)
            ok = np.all(total > 0, axis=(1, 2))
        return np.where(ok[:, None, None], weights, np.nan), ok

    def _score(self, params: np.ndarray) -> np.ndarray:
        weights, ok = self._weights(params)
        out = np.full(params.shape[0], INFEASIBLE)
        if ok.any():
            out[ok] = -self.problem.errors_for_weights(weights[ok]).mean(axis=-1)
        return out

    def __call__(self, chromosome: Chromosome) -> float:
        try:
            spec = decode_chromosome(chromosome, self.template)
        except FuzzyLocError:
            return INFEASIBLE
        return float(self._score(spec.params()[None])[0])

    def batch(self, chromosomes: Sequence[Chromosome]) -> np.ndarray:
        return self.batch_genes(np.stack([c.values for c in chromosomes]), chromosomes[0].fixed)

    def batch_genes(self, values: np.ndarray, fixed: np.ndarray) -> np.ndarray:
        ok = feasible_mask(values, fixed, np.zeros(3)) & _ordered(values, fixed)
        out = np.full(len(values), INFEASIBLE)
        if ok.any():
            out[ok] = self._score(genes_to_params(values[ok], fixed))
        return out


def neg_mean_error(problem: LocalizationProblem, role: str, flc1=None, flc2=None) -> NegMeanError:
    return NegMeanError(problem, role, flc1, flc2)


@dataclass
class TunedControllers:
    flc1: FlcSpec
    flc2: FlcSpec
    flc1_result: PsoResult
    flc2_result: PsoResult


def tune_controllers(problem: LocalizationProblem, config: PsoConfig, flc1: FlcSpec | None = None,
                     flc2: FlcSpec | None = None) -> TunedControllers:
    """Tune the first controller, then the second one given the tuned first.

    The two runs use seeds ``config.seed`` and ``config.seed + 1``.
    """
    flc1 = flc1 or default_flc1()
    flc2 = flc2 or default_flc2()
    r1 = run_pso(config, flc1, NegMeanError(problem, "flc1", flc1, flc2))
    tuned1 = decode_chromosome(r1.best, flc1)
    cfg2 = PsoConfig(config.k, config.iterations, config.w, config.c1, config.c2, config.seed + 1, config.epsilon)
    r2 = run_pso(cfg2, flc2, NegMeanError(problem, "flc2", tuned1, flc2))
    return TunedControllers(tuned1, decode_chromosome(r2.best, flc2), r1, r2)
