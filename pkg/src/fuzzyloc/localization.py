"""Grid localizer weighted by fuzzy anchor reliability.

Offline, each anchor's path-loss model is fitted and scored against the
median model of all anchors; the first controller turns the scores into a
model reliability.  Online, each anchor's dwell is filtered and inverted to a
distance, the second controller combines reliability with a proximity ratio
into a weight, and the cell minimizing the weighted squared range residual
is returned.

Cells are 1-based: cell (i, j) has center (i*S - S/2, j*S - S/2).
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from statistics import median
from typing import Mapping, Sequence

import numpy as np

from .channel import (
    CalibrationPoint,
    PathLossModel,
    RssiSample,
    aggregate_rssi,
    estimate_distance,
    filter_samples,
    fit_path_loss,
    group_by_anchor,
    proximity_index,
    FILTER_PERCENTILE,
)
from .errors import (
    AllWeightsZeroError,
    ConfigurationError,
    DataError,
    MedianUndefinedError,
    MismatchedLengthsError,
    NegativeDistanceError,
    NoUsableSamplesError,
    OutOfRangeError,
)
from .fuzzy import FlcSpec, default_flc1, default_flc2, flc_infer

K_SCORE_GUARD = 1e-9


@dataclass(frozen=True)
class Anchor:
    id: str
    position: tuple[float, float] | None
    model: PathLossModel
    z_score: float = 100.0
    k_score: float = 1.0
    reliability: float = 1.0

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "position": None if self.position is None else list(self.position),
            "z": self.model.z,
            "k": self.model.k,
            "z_score": self.z_score,
            "k_score": self.k_score,
            "reliability": self.reliability,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Anchor":
        pos = d.get("position")
        return cls(
            id=str(d["id"]),
            position=None if pos is None else (float(pos[0]), float(pos[1])),
            model=PathLossModel(float(d["z"]), float(d["k"])),
            z_score=float(d.get("z_score", 100.0)),
            k_score=float(d.get("k_score", 1.0)),
            reliability=float(d.get("reliability", 1.0)),
        )


@dataclass(frozen=True)
class GridMap:
    s: float
    nx: int
    ny: int

    def __post_init__(self):
        if not self.s > 0:
            raise ConfigurationError(f"cell side must be > 0, got {self.s}")
        if self.nx < 1 or self.ny < 1:
            raise ConfigurationError(f"grid must have at least one cell, got {self.nx}x{self.ny}")

    @classmethod
    def for_room(cls, width: float, height: float, s: float) -> "GridMap":
        if not s > 0:
            raise ConfigurationError(f"cell side must be > 0, got {s}")
        # tolerance keeps 10 / 0.1 from rounding up to 101 cells
        nx = max(1, math.ceil(width / s - 1e-9))
        ny = max(1, math.ceil(height / s - 1e-9))
        return cls(float(s), nx, ny)

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-center x coordinates (length nx) and y coordinates (length ny)."""
        s = self.s
        return np.arange(1, self.nx + 1) * s - s / 2, np.arange(1, self.ny + 1) * s - s / 2

    def distances(self, position) -> np.ndarray:
        """Euclidean distance from every cell center to ``position``, shape (nx, ny)."""
        xs, ys = self.axes()
        dx = xs[:, None] - position[0]
        dy = ys[None, :] - position[1]
        return np.sqrt(dx * dx + dy * dy)


def cell_center(grid: GridMap, i: int, j: int) -> tuple[float, float]:
    if not (1 <= i <= grid.nx and 1 <= j <= grid.ny):
        raise OutOfRangeError(f"cell ({i}, {j}) outside 1..{grid.nx} x 1..{grid.ny}")
    s = grid.s
    return (i * s - s / 2, j * s - s / 2)


@dataclass(frozen=True)
class ErrorMap:
    grid: GridMap
    values: np.ndarray


@dataclass(frozen=True)
class AnchorContribution:
    id: str
    w_hat: float
    i_n: float
    rssi: float = float("nan")
    proximity: float = float("nan")


@dataclass(frozen=True)
class Fix:
    cell: tuple[int, int]
    position: tuple[float, float]
    w_min: float
    per_anchor: tuple[AnchorContribution, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "cell": list(self.cell),
            "position": list(self.position),
            "w_min": self.w_min,
            "per_anchor": [{"id": a.id, "w_hat": a.w_hat, "i_n": a.i_n} for a in self.per_anchor],
        }


# --------------------------------------------------------------------------
# offline stage


def closeness_scores(models: Sequence[PathLossModel]) -> list[tuple[float, float]]:
    """(z_score in [0, 100], k_score in [0, 1]) per model, relative to the medians."""
    if not models:
        raise MedianUndefinedError("no anchors to take a median over")
    z_med = median(m.z for m in models)
    k_med = median(m.k for m in models)
    z_den = max(abs(z_med), K_SCORE_GUARD)
    k_den = max(abs(k_med), K_SCORE_GUARD)
    return [
        (100.0 * max(0.0, 1.0 - abs(m.z - z_med) / z_den), max(0.0, 1.0 - abs(m.k - k_med) / k_den))
        for m in models
    ]


def offline_calibrate(
    calibration: Mapping[str, Sequence[CalibrationPoint]],
    positions: Mapping[str, tuple[float, float]] | None = None,
    flc1: FlcSpec | None = None,
) -> list[Anchor]:
    """Fit every anchor's path-loss model and score its reliability."""
    if not calibration:
        raise MedianUndefinedError("no anchors to calibrate")
    flc1 = flc1 or default_flc1()
    models = []
    for aid, points in calibration.items():
        try:
            models.append(fit_path_loss(points))
        except DataError as exc:
            raise type(exc)(f"anchor {aid}: {exc}") from exc
    anchors = []
    for (aid, _), model, (zs, ks) in zip(calibration.items(), models, closeness_scores(models)):
        pos = None if positions is None else tuple(map(float, positions[aid]))
        anchors.append(Anchor(aid, pos, model, zs, ks, flc_infer(flc1, zs, ks)))
    return anchors


def with_reliability(anchors: Sequence[Anchor], flc1: FlcSpec) -> list[Anchor]:
    """Recompute reliabilities with another first-stage controller."""
    return [
        Anchor(a.id, a.position, a.model, a.z_score, a.k_score, flc_infer(flc1, a.z_score, a.k_score))
        for a in anchors
    ]


# --------------------------------------------------------------------------
# online stage


def _position(anchor) -> tuple[float, float]:
    pos = anchor.position if isinstance(anchor, Anchor) else anchor
    if pos is None:
        raise DataError(f"anchor {getattr(anchor, 'id', '?')} has no known position")
    return (float(pos[0]), float(pos[1]))


def build_error_map(grid: GridMap, anchor, w_hat: float) -> ErrorMap:
    """|w_hat - distance(cell center, anchor)| for every cell."""
    if w_hat < 0:
        raise NegativeDistanceError(f"estimated distance must be >= 0, got {w_hat}")
    return ErrorMap(grid, np.abs(w_hat - grid.distances(_position(anchor))))


def total_reliability(anchor: Anchor, proximity: float, flc2: FlcSpec | None = None) -> float:
    return flc_infer(flc2 or default_flc2(), anchor.reliability, proximity)


def aggregate_map(grid: GridMap, anchors: Sequence, w_hat: Sequence[float], weights: Sequence[float]) -> np.ndarray:
    """W(i, j) = sum_n I_n * (w_hat_n - w_n(i, j))**2 as an (nx, ny) array."""
    if not (len(anchors) == len(w_hat) == len(weights)):
        raise MismatchedLengthsError(
            f"got {len(anchors)} anchors, {len(w_hat)} distances, {len(weights)} weights"
        )
    total = np.zeros((grid.nx, grid.ny))
    # accumulate anchor by anchor so summation order matches a plain loop
    for anchor, w, weight in zip(anchors, w_hat, weights):
        r = w - grid.distances(_position(anchor))
        total = total + weight * (r * r)
    return total


def argmin_cell(values: np.ndarray) -> tuple[int, int]:
    """1-based argmin; ties go to the smallest i, then the smallest j."""
    flat = int(np.argmin(values))
    i, j = divmod(flat, values.shape[1])
    return (i + 1, j + 1)


def locate_from_estimates(
    grid: GridMap,
    anchors: Sequence[Anchor],
    rssi: Sequence[float],
    flc2: FlcSpec | None = None,
) -> Fix:
    """Online stage given one aggregated RSSI per anchor."""
    if not anchors:
        raise NoUsableSamplesError("no anchor has usable samples")
    if len(anchors) != len(rssi):
        raise MismatchedLengthsError(f"got {len(anchors)} anchors and {len(rssi)} RSSI values")
    flc2 = flc2 or default_flc2()
    w_hat = [estimate_distance(a.model, r) for a, r in zip(anchors, rssi)]
    prox = [proximity_index(r, rssi) for r in rssi]
    weights = [total_reliability(a, p, flc2) for a, p in zip(anchors, prox)]
    if all(wt == 0 for wt in weights):
        raise AllWeightsZeroError("every anchor has zero total reliability")
    values = aggregate_map(grid, anchors, w_hat, weights)
    cell = argmin_cell(values)
    contrib = tuple(
        AnchorContribution(a.id, w, wt, r, p) for a, w, wt, r, p in zip(anchors, w_hat, weights, rssi, prox)
    )
    return Fix(cell, cell_center(grid, *cell), float(values[cell[0] - 1, cell[1] - 1]), contrib)


def dwell_estimates(
    anchors: Sequence[Anchor], samples: Sequence[RssiSample], percentile: float = FILTER_PERCENTILE
) -> tuple[list[Anchor], list[float]]:
    """Anchors that produced samples, with their filtered mean RSSI."""
    groups = group_by_anchor(samples)
    known = {a.id for a in anchors}
    unknown = [aid for aid in groups if aid not in known]
    if unknown:
        raise DataError(f"samples from unknown anchor(s): {', '.join(unknown)}")
    used, rssi = [], []
    for a in anchors:
        if a.id in groups:
            used.append(a)
            rssi.append(aggregate_rssi(filter_samples(groups[a.id], percentile))[a.id])
    return used, rssi


def locate(
    grid: GridMap,
    anchors: Sequence[Anchor],
    samples: Sequence[RssiSample],
    flc2: FlcSpec | None = None,
    percentile: float = FILTER_PERCENTILE,
) -> Fix:
    """Filter, invert, weight and grid-search one dwell of samples.

    ``anchors`` must already carry their first-stage reliability.
    """
    used, rssi = dwell_estimates(anchors, samples, percentile)
    if not used:
        raise NoUsableSamplesError("no samples after filtering")
    return locate_from_estimates(grid, used, rssi, flc2)


def matrix_to_csv(values: np.ndarray) -> str:
    """Row-major CSV, one row per i."""
    buf = io.StringIO()
    for row in np.asarray(values):
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()
