"""Log-distance RSSI model: calibration, prediction, inversion and filtering."""
from __future__ import annotations

import csv
import io
import math
import warnings
from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DataError,
    DegenerateFitError,
    EmptyInputError,
    InsufficientDataError,
    NonPositiveDistanceError,
    ZeroRssiError,
    ZeroSlopeError,
)

FILTER_PERCENTILE = 0.25


@dataclass(frozen=True)
class PathLossModel:
    """RSSI = z * log10(w) + k, with w in meters and RSSI in dB."""

    z: float
    k: float


@dataclass(frozen=True)
class CalibrationPoint:
    distance: float
    rssi: float

    def __post_init__(self):
        if not self.distance > 0:
            raise NonPositiveDistanceError(f"calibration distance must be > 0, got {self.distance}")


@dataclass(frozen=True)
class RssiSample:
    anchor_id: str
    rssi: float
    sequence: int = 0


def fit_path_loss(points: Sequence[CalibrationPoint]) -> PathLossModel:
    """Ordinary least squares of RSSI against log10(distance)."""
    if len({p.distance for p in points}) < 2:
        raise InsufficientDataError(
            f"need at least 2 distinct calibration distances, got {len(points)} point(s)"
        )
    x = np.log10([p.distance for p in points])
    y = np.array([p.rssi for p in points], dtype=float)
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0.0:
        raise DegenerateFitError("all log-distances are equal")
    z = float(xc @ (y - y.mean())) / sxx
    k = float(y.mean() - z * x.mean())
    if z >= 0:
        warnings.warn(f"fitted path-loss slope z={z:g} is not negative", RuntimeWarning, stacklevel=2)
    return PathLossModel(z, k)


def predict_rssi(model: PathLossModel, w):
    w_arr = np.asarray(w, dtype=float)
    if np.any(w_arr <= 0):
        raise NonPositiveDistanceError(f"distance must be > 0, got {w}")
    out = model.z * np.log10(w_arr) + model.k
    return float(out) if out.ndim == 0 else out


def estimate_distance(model: PathLossModel, rssi):
    """Invert the path-loss model: w = 10 ** ((rssi - k) / z)."""
    if model.z == 0:
        raise ZeroSlopeError("path-loss slope is zero; distance is not identifiable")
    out = np.power(10.0, (np.asarray(rssi, dtype=float) - model.k) / model.z)
    return float(out) if out.ndim == 0 else out


def nearest_rank(values, p: float) -> float:
    """The ceil(p * n)-th smallest value (1-based), p in (0, 1]."""
    if not 0 < p <= 1:
        raise ValueError(f"p must be in (0, 1], got {p}")
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise EmptyInputError("no values")
    # the tolerance keeps e.g. 0.1 * 30 from rounding up to rank 4
    rank = max(1, math.ceil(p * v.size - 1e-12))
    return float(v[rank - 1])


def filter_samples(samples: Sequence[RssiSample], percentile: float = FILTER_PERCENTILE) -> list[RssiSample]:
    """Keep samples whose |rssi| does not exceed the nearest-rank percentile.

    Larger magnitudes are weaker signals, typically longer reflected paths,
    so only the strongest quarter of a dwell survives by default.  Input
    order is preserved.
    """
    if not samples:
        raise EmptyInputError("no samples to filter")
    threshold = nearest_rank([abs(s.rssi) for s in samples], percentile)
    return [s for s in samples if abs(s.rssi) <= threshold]


def group_by_anchor(samples: Iterable[RssiSample]) -> "OrderedDict[str, list[RssiSample]]":
    groups: OrderedDict[str, list[RssiSample]] = OrderedDict()
    for s in samples:
        groups.setdefault(s.anchor_id, []).append(s)
    return groups


def aggregate_rssi(filtered: Sequence[RssiSample]) -> dict[str, float]:
    """Mean RSSI (dB) per anchor, in order of first appearance."""
    if not filtered:
        raise EmptyInputError("no samples to aggregate")
    return {aid: float(np.mean([s.rssi for s in group])) for aid, group in group_by_anchor(filtered).items()}


def dwell_rssi(samples: Sequence[RssiSample], percentile: float = FILTER_PERCENTILE) -> dict[str, float]:
    """Filter each anchor's samples separately, then average them."""
    out = {}
    for aid, group in group_by_anchor(samples).items():
        out.update(aggregate_rssi(filter_samples(group, percentile)))
    return out


def proximity_index(rssi_n: float, all_rssi: Sequence[float]) -> float:
    """Smallest |RSSI| among all anchors divided by this anchor's |RSSI|."""
    values = np.abs(np.asarray(all_rssi, dtype=float))
    if rssi_n == 0 or np.any(values == 0):
        raise ZeroRssiError("RSSI of exactly 0 dB has no proximity ratio")
    return float(values.min() / abs(rssi_n))


# --------------------------------------------------------------------------
# CSV formats

SAMPLE_HEADER = ["anchor_id", "position_index", "sequence", "rssi_db"]
CALIBRATION_HEADER = ["anchor_id", "distance_m", "rssi_db"]


def fmt(x: float) -> str:
    # shortest round-trip representation, never truncated
    return repr(float(x))


def write_samples_csv(rows: Iterable[tuple[int, RssiSample]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SAMPLE_HEADER)
    for pos_idx, s in rows:
        w.writerow([s.anchor_id, pos_idx, s.sequence, fmt(s.rssi)])
    return buf.getvalue()


def _rows(text: str, header: list[str]):
    reader = csv.reader(io.StringIO(text))
    try:
        first = next(reader)
    except StopIteration:
        raise DataError("empty CSV") from None
    if [h.strip() for h in first] != header:
        raise DataError(f"line 1: expected header {','.join(header)}, got {','.join(first)}")
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        yield lineno, row


def read_samples_csv(text: str) -> "OrderedDict[int, list[RssiSample]]":
    """Samples grouped by position index."""
    out: OrderedDict[int, list[RssiSample]] = OrderedDict()
    for lineno, row in _rows(text, SAMPLE_HEADER):
        try:
            sample = RssiSample(row[0], float(row[3]), int(row[2]))
            out.setdefault(int(row[1]), []).append(sample)
        except ValueError as exc:
            raise DataError(f"line {lineno}: {exc}") from exc
    return out


def write_calibration_csv(calibration: dict[str, Sequence[CalibrationPoint]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CALIBRATION_HEADER)
    for aid, points in calibration.items():
        for p in points:
            w.writerow([aid, fmt(p.distance), fmt(p.rssi)])
    return buf.getvalue()


def read_calibration_csv(text: str) -> "OrderedDict[str, list[CalibrationPoint]]":
    out: OrderedDict[str, list[CalibrationPoint]] = OrderedDict()
    for lineno, row in _rows(text, CALIBRATION_HEADER):
        try:
            out.setdefault(row[0], []).append(CalibrationPoint(float(row[1]), float(row[2])))
        except (ValueError, DataError) as exc:
            raise DataError(f"line {lineno}: {exc}") from exc
    return out
