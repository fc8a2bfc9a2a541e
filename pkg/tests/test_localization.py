import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fuzzyloc.channel import CalibrationPoint, PathLossModel, RssiSample, predict_rssi
from fuzzyloc.errors import (
    AllWeightsZeroError,
    ConfigurationError,
    DataError,
    InsufficientDataError,
    MedianUndefinedError,
    MismatchedLengthsError,
    NegativeDistanceError,
    NoUsableSamplesError,
    OutOfRangeError,
)
from fuzzyloc.fuzzy import default_flc1, default_flc2, flc_infer
from fuzzyloc.localization import (
    Anchor,
    GridMap,
    aggregate_map,
    argmin_cell,
    build_error_map,
    cell_center,
    closeness_scores,
    locate,
    locate_from_estimates,
    matrix_to_csv,
    offline_calibrate,
    total_reliability,
)

import oracles

M = PathLossModel(-20.0, -40.0)


def _anchor(aid, pos, reliability=1.0):
    return Anchor(aid, pos, M, reliability=reliability)


def _noiseless_samples(anchors, target):
    return [RssiSample(a.id, predict_rssi(a.model, math.dist(a.position, target)), 0) for a in anchors]


# --------------------------------------------------------------------------
# grid

def test_cell_center_examples():
    g = GridMap.for_room(10, 10, 1)
    assert cell_center(g, 1, 1) == (0.5, 0.5)
    assert cell_center(g, 10, 1) == (9.5, 0.5)
    with pytest.raises(OutOfRangeError):
        cell_center(g, 0, 1)
    with pytest.raises(OutOfRangeError):
        cell_center(g, 1, 11)


def test_grid_dimensions():
    assert (GridMap.for_room(10, 10, 0.1).nx, GridMap.for_room(10, 10, 0.1).ny) == (100, 100)
    g = GridMap.for_room(10, 7.5, 2)
    assert (g.nx, g.ny) == (5, 4)
    with pytest.raises(ConfigurationError):
        GridMap.for_room(10, 10, 0)


def test_grid_distances_match_centers():
    g = GridMap.for_room(3, 2, 0.5)
    d = g.distances((1.2, 0.7))
    for i in range(1, g.nx + 1):
        for j in range(1, g.ny + 1):
            assert d[i - 1, j - 1] == pytest.approx(math.dist(cell_center(g, i, j), (1.2, 0.7)), abs=1e-15)


# --------------------------------------------------------------------------
# offline stage

def _cal(z, k):
    m = PathLossModel(z, k)
    return [CalibrationPoint(w, predict_rssi(m, w)) for w in (0.5, 1, 2, 4)]


def test_offline_z_scores():
    anchors = offline_calibrate({"a": _cal(-19, -40), "b": _cal(-20, -40), "c": _cal(-21, -40)})
    z = {a.id: a.z_score for a in anchors}
    assert z["b"] == pytest.approx(100, abs=1e-9)
    assert z["a"] == pytest.approx(95, abs=1e-9)
    assert z["c"] == pytest.approx(95, abs=1e-9)
    for a in anchors:
        assert a.reliability == pytest.approx(flc_infer(default_flc1(), a.z_score, a.k_score), abs=1e-15)


def test_offline_single_anchor_is_its_own_median():
    (a,) = offline_calibrate({"only": _cal(-25, -45)})
    assert a.z_score == 100 and a.k_score == 1
    assert a.reliability == pytest.approx(1.0, abs=1e-12)


def test_offline_errors():
    with pytest.raises(MedianUndefinedError):
        offline_calibrate({})
    with pytest.raises(InsufficientDataError, match="anchor bad"):
        offline_calibrate({"ok": _cal(-20, -40), "bad": [CalibrationPoint(1, -40)]})


def test_closeness_scores_guard_zero_median_k():
    scores = closeness_scores([PathLossModel(-20, 0.0), PathLossModel(-20, 0.0), PathLossModel(-20, 1.0)])
    assert scores[0] == (100.0, 1.0)
    assert scores[2][1] == 0.0


def test_offline_positions_attached():
    anchors = offline_calibrate({"a": _cal(-20, -40)}, {"a": (1, 2)})
    assert anchors[0].position == (1.0, 2.0)


def test_anchor_json_round_trip():
    a = Anchor("x", (1.5, 2.0), PathLossModel(-19.5, -41.0), 97.5, 0.98, 0.93)
    assert Anchor.from_dict(json.loads(json.dumps(a.to_dict()))) == a


# --------------------------------------------------------------------------
# maps

def test_error_map_examples():
    g = GridMap.for_room(10, 10, 1)
    em = build_error_map(g, (0.5, 0.5), 0.0)
    assert em.values[0, 0] == 0.0
    assert em.values[0, 1] == 1.0
    with pytest.raises(NegativeDistanceError):
        build_error_map(g, (0.5, 0.5), -1.0)


def test_error_map_zero_at_true_distance_cell():
    g = GridMap.for_room(10, 10, 1)
    em = build_error_map(g, (2.0, 3.0), math.dist((2.0, 3.0), cell_center(g, 7, 4)))
    assert em.values[6, 3] == 0.0


@pytest.mark.parametrize("rel,prox,expected", [(1, 1, 1.0), (0, 0, 0.001), (0.5, 0.5, 0.4)])
def test_total_reliability_table_cells(rel, prox, expected):
    assert total_reliability(_anchor("a", (0, 0), rel), prox) == pytest.approx(expected, abs=1e-12)


def test_aggregate_map_single_anchor_is_squared_error_map():
    g = GridMap.for_room(5, 5, 1)
    w = math.dist((1, 1), (3.5, 2.5))
    W = aggregate_map(g, [(1, 1)], [w], [1.0])
    assert np.array_equal(W, build_error_map(g, (1, 1), w).values ** 2)


def test_aggregate_map_zero_weights_and_lengths():
    g = GridMap.for_room(5, 5, 1)
    assert not aggregate_map(g, [(1, 1), (4, 4)], [2.0, 3.0], [0.0, 0.0]).any()
    with pytest.raises(MismatchedLengthsError):
        aggregate_map(g, [(1, 1)], [1.0, 2.0], [1.0])


def test_three_anchor_exact_minimum():
    g = GridMap.for_room(10, 10, 1)
    anchors = [(1, 1), (9, 2), (4, 9)]
    target = cell_center(g, 6, 3)
    W = aggregate_map(g, anchors, [math.dist(a, target) for a in anchors], [1, 1, 1])
    assert argmin_cell(W) == (6, 3)
    assert (W > W[5, 2]).sum() == W.size - 1


def test_argmin_ties_are_lexicographic():
    v = np.array([[3.0, 1.0], [1.0, 1.0]])
    assert argmin_cell(v) == (1, 2)


def test_matrix_to_csv_rows():
    assert matrix_to_csv(np.array([[1.0, 0.5], [2.0, 3.0]])) == "1.0,0.5\n2.0,3.0\n"


# --------------------------------------------------------------------------
# online stage

def test_locate_corner_anchors_center_target():
    g = GridMap.for_room(10, 10, 1)
    anchors = [_anchor(f"a{i}", p) for i, p in enumerate([(0, 0), (10, 0), (0, 10), (10, 10)])]
    fix = locate(g, anchors, _noiseless_samples(anchors, (5.5, 5.5)))
    assert fix.cell == (6, 6) and fix.position == (5.5, 5.5)
    d = fix.to_dict()
    assert set(d) == {"cell", "position", "w_min", "per_anchor"}
    assert set(d["per_anchor"][0]) == {"id", "w_hat", "i_n"}


def test_locate_one_cell_grid():
    g = GridMap(3.0, 1, 1)
    anchors = [_anchor("a", (0, 0)), _anchor("b", (3, 3))]
    fix = locate(g, anchors, _noiseless_samples(anchors, (0.2, 2.9)))
    assert fix.cell == (1, 1) and fix.position == (1.5, 1.5)


def test_locate_symmetric_tie_prefers_smaller_cell():
    # two anchors mirrored about x = 2; the estimated distances agree, so
    # the cells (2, j) and (3, j) mirror each other and tie exactly
    g = GridMap.for_room(4, 4, 1)
    anchors = [_anchor("a", (0.0, 2.0)), _anchor("b", (4.0, 2.0))]
    samples = [RssiSample("a", -50.0), RssiSample("b", -50.0)]
    fix = locate(g, anchors, samples)
    W = aggregate_map(g, anchors, [10 ** 0.5] * 2, [1.0, 1.0])
    cell, _ = oracles.naive_grid_argmin(4, 4, 1.0, [(0.0, 2.0), (4.0, 2.0)], [10 ** 0.5] * 2, [1.0, 1.0])
    assert fix.cell == cell
    i, j = fix.cell
    assert W[i - 1, j - 1] == W[4 - i, j - 1]
    assert i <= 4 - i + 1


def test_locate_errors():
    g = GridMap.for_room(4, 4, 1)
    with pytest.raises(NoUsableSamplesError):
        locate(g, [_anchor("a", (0, 0))], [])
    with pytest.raises(DataError):
        locate(g, [_anchor("a", (0, 0))], [RssiSample("zz", -50.0)])
    with pytest.raises(DataError):
        locate(g, [Anchor("a", None, M)], [RssiSample("a", -50.0)])


def test_all_weights_zero():
    spec = default_flc2()
    zero = spec.replace(rules=type(spec.rules)(((0, 0, 0), (0, 0, 0), (0, 0, 0))))
    g = GridMap.for_room(4, 4, 1)
    with pytest.raises(AllWeightsZeroError):
        locate_from_estimates(g, [_anchor("a", (0, 0)), _anchor("b", (4, 4))], [-45.0, -50.0], zero)


@st.composite
def instances(draw):
    nx = draw(st.integers(1, 20))
    ny = draw(st.integers(1, 20))
    s = draw(st.sampled_from([0.25, 0.5, 1.0]))
    n = draw(st.integers(1, 10))
    pts = st.tuples(st.floats(0, nx * s), st.floats(0, ny * s))
    anchors = draw(st.lists(pts, min_size=n, max_size=n))
    w_hat = draw(st.lists(st.floats(0, 15), min_size=n, max_size=n))
    weights = draw(st.lists(st.floats(0, 1), min_size=n, max_size=n))
    return GridMap(s, nx, ny), anchors, w_hat, weights


@settings(max_examples=200, deadline=None)
@given(instances())
def test_aggregate_argmin_matches_naive_loop(inst):
    g, anchors, w_hat, weights = inst
    W = aggregate_map(g, anchors, w_hat, weights)
    cell, best = oracles.naive_grid_argmin(g.nx, g.ny, g.s, anchors, w_hat, weights)
    assert argmin_cell(W) == cell
    assert W[cell[0] - 1, cell[1] - 1] == best
    assert (W >= 0).all()


@settings(max_examples=50, deadline=None)
@given(instances(), st.sampled_from([0.5, 2.0, 4.0]))
def test_common_weight_scaling_keeps_argmin(inst, c):
    g, anchors, w_hat, weights = inst
    W = aggregate_map(g, anchors, w_hat, weights)
    W2 = aggregate_map(g, anchors, w_hat, [c * w for w in weights])
    # power-of-two scalings are exact; the argmin must match
    assert argmin_cell(W) == argmin_cell(W2)


@pytest.mark.parametrize("positions", [[(1, 1), (9, 2), (5, 9)], [(0, 0), (10, 0), (0, 10), (10, 10)]])
def test_noiseless_every_cell_recovered(positions):
    g = GridMap.for_room(10, 10, 1)
    anchors = [_anchor(f"a{i}", p) for i, p in enumerate(positions)]
    for i in range(1, 11):
        for j in range(1, 11):
            target = cell_center(g, i, j)
            if any(math.dist(target, p) == 0 for p in positions):
                continue
            assert locate(g, anchors, _noiseless_samples(anchors, target)).cell == (i, j)
