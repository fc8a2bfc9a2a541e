"""Simulated room stand-in for a physical LED testbed.

Samples follow the log-distance model with Gaussian dB noise plus occasional
multipath attenuation, which only ever weakens a sample.  Every random draw
comes from a generator keyed by ``(seed, purpose, index, anchor)`` so
results do not depend on evaluation order.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .channel import (
    CalibrationPoint,
    PathLossModel,
    RssiSample,
    aggregate_rssi,
    filter_samples,
    FILTER_PERCENTILE,
)
from .errors import ConfigurationError, InvalidRoomError, ZeroDistanceError

DEFAULT_MODEL = PathLossModel(-20.0, -40.0)
CALIBRATION_DISTANCES = (0.5, 1.0, 2.0, 3.0, 5.0, 8.0)

# random-stream purposes; keys are always (seed, purpose, i, j) because
# SeedSequence zero-pads short keys
_PLACEMENT, _POSITIONS, _SAMPLES, _CALIBRATION, _TRAINING_POSITIONS, _TRAINING_SAMPLES = range(6)


@dataclass(frozen=True)
class NoiseModel:
    sigma_db: float = 1.0
    p_multipath: float = 0.2
    attenuation_db: tuple[float, float] = (2.0, 10.0)

    def __post_init__(self):
        lo, hi = self.attenuation_db
        if self.sigma_db < 0:
            raise ConfigurationError("sigma_db must be >= 0")
        if not 0 <= self.p_multipath <= 1:
            raise ConfigurationError("p_multipath must be in [0, 1]")
        if not 0 <= lo <= hi:
            raise ConfigurationError("attenuation must satisfy 0 <= lo <= hi")
        object.__setattr__(self, "attenuation_db", (float(lo), float(hi)))

    @classmethod
    def noiseless(cls) -> "NoiseModel":
        return cls(0.0, 0.0, (0.0, 0.0))


@dataclass(frozen=True)
class SimAnchor:
    id: str
    position: tuple[float, float]
    model: PathLossModel = DEFAULT_MODEL


@dataclass(frozen=True)
class Scenario:
    room: tuple[float, float]
    anchors: tuple[SimAnchor, ...]
    noise: NoiseModel = field(default_factory=NoiseModel)
    test_positions: tuple[tuple[float, float], ...] = ()
    samples_per_position: int = 30
    seed: int = 0

    def __post_init__(self):
        w, h = self.room
        if not (w > 0 and h > 0):
            raise InvalidRoomError(f"room dimensions must be positive, got {self.room}")
        if not self.anchors:
            raise ConfigurationError("a scenario needs at least one anchor")
        for x, y in self.test_positions:
            if not (0 <= x <= w and 0 <= y <= h):
                raise ConfigurationError(f"test position ({x}, {y}) outside the room")

    @property
    def anchor_positions(self) -> dict[str, tuple[float, float]]:
        return {a.id: a.position for a in self.anchors}

    def to_dict(self) -> dict:
        return {
            "room": list(self.room),
            "anchors": [
                {"id": a.id, "pos": list(a.position), "z": a.model.z, "k": a.model.k} for a in self.anchors
            ],
            "noise": {
                "sigma_db": self.noise.sigma_db,
                "p_multipath": self.noise.p_multipath,
                "attenuation": list(self.noise.attenuation_db),
            },
            "test_positions": [list(p) for p in self.test_positions],
            "samples_per_position": self.samples_per_position,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        try:
            noise = d.get("noise", {})
            return cls(
                room=(float(d["room"][0]), float(d["room"][1])),
                anchors=tuple(
                    SimAnchor(str(a["id"]), (float(a["pos"][0]), float(a["pos"][1])),
                              PathLossModel(float(a.get("z", DEFAULT_MODEL.z)), float(a.get("k", DEFAULT_MODEL.k))))
                    for a in d["anchors"]
                ),
                noise=NoiseModel(
                    float(noise.get("sigma_db", 1.0)),
                    float(noise.get("p_multipath", 0.2)),
                    tuple(noise.get("attenuation", (2.0, 10.0))),
                ),
                test_positions=tuple((float(p[0]), float(p[1])) for p in d.get("test_positions", ())),
                samples_per_position=int(d.get("samples_per_position", 30)),
                seed=int(d.get("seed", 0)),
            )
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ConfigurationError(f"bad scenario document: {exc}") from exc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _rng(seed: int, purpose: int, i: int = 0, j: int = 0) -> np.random.Generator:
    return np.random.default_rng([int(seed), purpose, int(i), int(j)])


def grid_layout(room: tuple[float, float], n: int) -> list[tuple[float, float]]:
    """Near-square lattice of ``n`` points, each centered in its lattice cell.

    ``cols = ceil(sqrt(n))`` and ``rows = ceil(n / cols)``; a short last row
    is spread evenly across the room width.
    """
    w, h = room
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    out = []
    for r in range(rows):
        in_row = min(cols, n - r * cols)
        y = (r + 0.5) * h / rows
        out.extend(((c + 0.5) * w / in_row, y) for c in range(in_row))
    return out


def generate_scenario(
    room: tuple[float, float] = (10.0, 10.0),
    n_anchors: int = 8,
    n_positions: int = 20,
    noise: NoiseModel | None = None,
    seed: int = 0,
    samples_per_position: int = 30,
    placement: str = "grid",
    model: PathLossModel = DEFAULT_MODEL,
) -> Scenario:
    w, h = (float(v) for v in room)
    if not (w > 0 and h > 0):
        raise InvalidRoomError(f"room dimensions must be positive, got {room}")
    if n_anchors < 1:
        raise ConfigurationError("n_anchors must be >= 1")
    if placement == "grid":
        spots = grid_layout((w, h), n_anchors)
    elif placement == "random":
        spots = [tuple(p) for p in _rng(seed, _PLACEMENT).uniform((0, 0), (w, h), size=(n_anchors, 2))]
    else:
        raise ConfigurationError(f"unknown placement {placement!r}")
    anchors = tuple(SimAnchor(f"A{i + 1}", (float(x), float(y)), model) for i, (x, y) in enumerate(spots))
    positions = random_positions((w, h), n_positions, seed, _POSITIONS)
    return Scenario((w, h), anchors, noise or NoiseModel(), positions, samples_per_position, seed)


def random_positions(room, n: int, seed: int, purpose: int = _POSITIONS) -> tuple[tuple[float, float], ...]:
    pts = _rng(seed, purpose).uniform((0, 0), room, size=(n, 2))
    return tuple((float(x), float(y)) for x, y in pts)


def training_positions(scenario: Scenario, n: int) -> tuple[tuple[float, float], ...]:
    """Labelled positions disjoint in stream from the test positions."""
    return random_positions(scenario.room, n, scenario.seed, _TRAINING_POSITIONS)


def with_anchor_count(scenario: Scenario, n_anchors: int, placement: str = "grid") -> Scenario:
    """Same room, noise, positions and seed with a regenerated anchor layout."""
    regen = generate_scenario(scenario.room, n_anchors, 0, scenario.noise, scenario.seed,
                              scenario.samples_per_position, placement, scenario.anchors[0].model)
    return replace(scenario, anchors=regen.anchors)


def _draw(model: PathLossModel, w: float, noise: NoiseModel, n: int, rng: np.random.Generator) -> np.ndarray:
    base = model.z * math.log10(w) + model.k
    gauss = rng.normal(0.0, noise.sigma_db, n) if noise.sigma_db > 0 else np.zeros(n)
    hit = rng.random(n) < noise.p_multipath
    lo, hi = noise.attenuation_db
    atten = rng.uniform(lo, hi, n) if hi > lo else np.full(n, lo)
    return base + gauss - np.where(hit, atten, 0.0)


def sample_rssi(
    scenario: Scenario,
    position: tuple[float, float],
    n_samples: int | None = None,
    stream: int = 0,
    purpose: int = _SAMPLES,
) -> list[RssiSample]:
    """One dwell at ``position``: ``n_samples`` readings from every anchor."""
    n = scenario.samples_per_position if n_samples is None else n_samples
    out = []
    for idx, a in enumerate(scenario.anchors):
        w = math.hypot(position[0] - a.position[0], position[1] - a.position[1])
        if w == 0:
            raise ZeroDistanceError(f"position {position} coincides with anchor {a.id}")
        values = _draw(a.model, w, scenario.noise, n, _rng(scenario.seed, purpose, stream, idx))
        out.extend(RssiSample(a.id, float(v), s) for s, v in enumerate(values))
    return out


def simulate_calibration(
    scenario: Scenario,
    distances: Sequence[float] = CALIBRATION_DISTANCES,
    n_samples: int | None = None,
    percentile: float = FILTER_PERCENTILE,
) -> dict[str, list[CalibrationPoint]]:
    """Offline survey: a filtered, averaged dwell at each reference distance."""
    n = scenario.samples_per_position if n_samples is None else n_samples
    out = {}
    for idx, a in enumerate(scenario.anchors):
        points = []
        for di, w in enumerate(distances):
            values = _draw(a.model, w, scenario.noise, n, _rng(scenario.seed, _CALIBRATION, di, idx))
            dwell = [RssiSample(a.id, float(v), s) for s, v in enumerate(values)]
            points.append(CalibrationPoint(float(w), aggregate_rssi(filter_samples(dwell, percentile))[a.id]))
        out[a.id] = points
    return out


# --------------------------------------------------------------------------
# experiments

ALGORITHMS = ("fuzzy", "minmax", "ml", "trilateration")


@dataclass(frozen=True)
class Observation:
    """Filtered mean RSSI of every anchor heard at one labelled position."""

    truth: tuple[float, float]
    anchors: tuple  # calibrated localization.Anchor objects
    rssi: tuple[float, ...]


@dataclass(frozen=True)
class PositionResult:
    truth: tuple[float, float]
    estimate: tuple[float, float]
    error: float


def calibrate_scenario(scenario: Scenario, flc1=None):
    """Offline stage on a simulated survey of every anchor."""
    from .localization import offline_calibrate

    return offline_calibrate(simulate_calibration(scenario), scenario.anchor_positions, flc1)


def observe(scenario: Scenario, anchors, positions=None, purpose: int = _SAMPLES) -> list[Observation]:
    from .localization import dwell_estimates

    positions = scenario.test_positions if positions is None else positions
    out = []
    for idx, pos in enumerate(positions):
        used, rssi = dwell_estimates(anchors, sample_rssi(scenario, pos, stream=idx, purpose=purpose))
        out.append(Observation(tuple(pos), tuple(used), tuple(rssi)))
    return out


def observe_training(scenario: Scenario, anchors, n_positions: int) -> list[Observation]:
    return observe(scenario, anchors, training_positions(scenario, n_positions), purpose=_TRAINING_SAMPLES)


def localize_observation(obs: Observation, algorithm: str, grid, flc2=None) -> tuple[float, float]:
    from . import baselines
    from .channel import estimate_distance
    from .localization import locate_from_estimates

    if algorithm == "fuzzy":
        return locate_from_estimates(grid, obs.anchors, obs.rssi, flc2).position
    distances = [estimate_distance(a.model, r) for a, r in zip(obs.anchors, obs.rssi)]
    if algorithm == "minmax":
        return baselines.minmax_locate(obs.anchors, distances)
    if algorithm == "ml":
        return baselines.ml_locate(grid, obs.anchors, distances).position
    if algorithm == "trilateration":
        return baselines.trilaterate(obs.anchors, distances)
    raise ConfigurationError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")


def evaluate_observations(observations: Sequence[Observation], algorithm: str, grid, flc2=None) -> list[PositionResult]:
    out = []
    for obs in observations:
        est = localize_observation(obs, algorithm, grid, flc2)
        err = math.hypot(est[0] - obs.truth[0], est[1] - obs.truth[1])
        out.append(PositionResult(obs.truth, (float(est[0]), float(est[1])), err))
    return out


def run_experiment(scenario: Scenario, algorithm: str = "fuzzy", flc1=None, flc2=None, s: float = 1.0,
                   anchors=None) -> list[PositionResult]:
    """Calibrate (unless ``anchors`` are given), sample every test position, localize."""
    from .localization import GridMap, with_reliability

    if anchors is None:
        anchors = calibrate_scenario(scenario, flc1)
    elif flc1 is not None:
        anchors = with_reliability(anchors, flc1)
    grid = GridMap.for_room(*scenario.room, s)
    return evaluate_observations(observe(scenario, anchors), algorithm, grid, flc2)
