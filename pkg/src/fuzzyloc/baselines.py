"""Comparison localizers working on per-anchor distance estimates."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import CollinearAnchorsError, MismatchedLengthsError, TooFewAnchorsError
from .localization import Fix, GridMap, _position, aggregate_map, argmin_cell, cell_center

SINGULAR_TOL = 1e-9


def _prepare(anchors, distances, minimum):
    if len(anchors) != len(distances):
        raise MismatchedLengthsError(f"got {len(anchors)} anchors and {len(distances)} distances")
    if len(anchors) < minimum:
        raise TooFewAnchorsError(f"need at least {minimum} anchors, got {len(anchors)}")
    pts = np.array([_position(a) for a in anchors], dtype=float)
    return pts, np.asarray(distances, dtype=float)


def minmax_locate(anchors: Sequence, distances: Sequence[float]) -> tuple[float, float]:
    """Center of the intersection of the boxes [x - d, x + d] x [y - d, y + d].

    An empty intersection still yields the midpoint of the crossed bounds.
    """
    pts, d = _prepare(anchors, distances, 2)
    lo = np.max(pts - d[:, None], axis=0)
    hi = np.min(pts + d[:, None], axis=0)
    c = (lo + hi) / 2
    return (float(c[0]), float(c[1]))


def trilaterate(anchors: Sequence, distances: Sequence[float]) -> tuple[float, float]:
    """Linearized least squares: subtract the first circle from the others."""
    pts, d = _prepare(anchors, distances, 3)
    x0, y0 = pts[0]
    a = 2.0 * (pts[1:] - pts[0])
    b = d[0] ** 2 - d[1:] ** 2 + (pts[1:] ** 2).sum(axis=1) - (x0 * x0 + y0 * y0)
    normal = a.T @ a
    eig = np.linalg.eigvalsh(normal)
    if eig[0] <= SINGULAR_TOL * max(1.0, eig[-1]):
        raise CollinearAnchorsError("anchor geometry is rank deficient (collinear anchors)")
    sol = np.linalg.solve(normal, a.T @ b)
    return (float(sol[0]), float(sol[1]))


def ml_locate(grid: GridMap, anchors: Sequence, distances: Sequence[float]) -> Fix:
    """Equal-variance maximum likelihood over the grid cells."""
    _prepare(anchors, distances, 2)
    values = aggregate_map(grid, anchors, list(distances), [1.0] * len(anchors))
    cell = argmin_cell(values)
    return Fix(cell, cell_center(grid, *cell), float(values[cell[0] - 1, cell[1] - 1]))
