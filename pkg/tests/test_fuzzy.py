import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fuzzyloc.errors import ConfigurationError, InvalidMembershipError, ZeroFiringError
from fuzzyloc.fuzzy import (
    FuzzyVariable,
    InferenceMode,
    RuleTable,
    TNorm,
    TriangularMf,
    clipped_centroid,
    default_flc1,
    default_flc2,
    dumps_flc,
    flc_from_dict,
    flc_infer,
    flc_to_dict,
    fuzzify,
    infer_with_params,
    loads_flc,
    mf_eval,
    validate_flc,
)

import oracles

PEAKS1 = (0.0, 50.0, 100.0)
PEAKS01 = (0.0, 0.5, 1.0)


def _with_input1(spec, terms):
    var = FuzzyVariable(spec.input1.name, spec.input1.universe, tuple(TriangularMf(*t) for t in terms))
    return spec.replace(input1=var)


# --------------------------------------------------------------------------
# membership functions

@pytest.mark.parametrize("mf,x,expected", [
    ((0, 50, 100), 50, 1.0),
    ((0, 50, 100), 25, 0.5),
    ((50, 100, 100), 40, 0.0),
    ((0, 0, 50), 0, 1.0),
    ((50, 100, 100), 100, 1.0),
    ((0, 0, 50), 25, 0.5),
])
def test_mf_eval_examples(mf, x, expected):
    assert mf_eval(TriangularMf(*mf), x) == expected


def test_mf_rejects_unordered():
    with pytest.raises(InvalidMembershipError):
        TriangularMf(1, 0, 2)
    with pytest.raises(InvalidMembershipError):
        TriangularMf(0, float("nan"), 1)


def test_mf_vectorized_matches_scalar():
    mf = TriangularMf(0.2, 0.5, 0.9)
    xs = np.linspace(-1, 2, 31)
    assert np.array_equal(mf_eval(mf, xs), np.array([mf_eval(mf, x) for x in xs]))


@st.composite
def triangles(draw):
    a, m, b = sorted(draw(st.lists(st.floats(-100, 100), min_size=3, max_size=3)))
    return TriangularMf(a, m, b)


@given(triangles(), st.floats(-200, 200))
def test_mf_range_peak_and_support(mf, x):
    y = mf_eval(mf, x)
    assert 0.0 <= y <= 1.0
    assert mf_eval(mf, mf.m) == 1.0
    if x < mf.a or x > mf.b:
        assert y == 0.0


@given(triangles(), st.floats(-200, 200))
def test_mf_matches_case_oracle(mf, x):
    assert mf_eval(mf, x) == pytest.approx(oracles.tri(x, mf.a, mf.m, mf.b), abs=1e-12)


# --------------------------------------------------------------------------
# fuzzification

def test_fuzzify_examples():
    z = default_flc1().input1
    assert tuple(fuzzify(z, 50)) == (0.0, 1.0, 0.0)
    assert tuple(fuzzify(z, 75)) == (0.0, 0.5, 0.5)
    assert tuple(fuzzify(z, 0)) == (1.0, 0.0, 0.0)


def test_fuzzify_clamps_out_of_range():
    z = default_flc1().input1
    assert tuple(fuzzify(z, -10)) == (1.0, 0.0, 0.0)
    assert tuple(fuzzify(z, 250)) == (0.0, 0.0, 1.0)


def test_fuzzify_array_shape():
    k = default_flc1().input2
    assert fuzzify(k, np.zeros((4, 5))).shape == (3, 4, 5)


@pytest.mark.parametrize("var", [
    default_flc1().input1, default_flc1().input2, default_flc2().input1, default_flc2().input2,
    default_flc1().output,
])
def test_default_variables_partition_unity(var):
    lo, hi = var.universe
    xs = np.random.default_rng(0).uniform(lo, hi, 1000)
    assert np.allclose(fuzzify(var, xs).sum(axis=0), 1.0, atol=1e-12, rtol=0)


def test_edge_terms_saturate_outside_peak():
    var = FuzzyVariable("v", (0, 1), ((0.1, 0.2, 0.4), (0.15, 0.5, 0.85), (0.6, 0.8, 0.95)))
    assert fuzzify(var, 0.0)[0] == 1.0
    assert fuzzify(var, 1.0)[2] == 1.0


# --------------------------------------------------------------------------
# defaults and rule tables

def test_default_values():
    f1, f2 = default_flc1(), default_flc2()
    assert f1.input1.Medium.as_tuple() == (0, 50, 100)
    assert f1.input1.universe == (0.0, 100.0)
    assert f1.input2.universe == (0.0, 1.0)
    assert f2.rules["Medium"]["High"] == 0.9
    assert f1.mode is InferenceMode.SINGLETON and f1.tnorm is TNorm.MIN
    assert validate_flc(f1) == [] and validate_flc(f2) == []


def test_rule_table_validation():
    with pytest.raises(ConfigurationError):
        RuleTable(((0, 0, 0), (0, 0, 0)))
    with pytest.raises(ConfigurationError):
        RuleTable(((0, 0, 1.5), (0, 0, 0), (0, 0, 0)))


def test_output_labels_thresholds():
    labels = default_flc1().rules.output_labels()
    assert labels.tolist() == [[0, 0, 0], [0, 1, 2], [1, 2, 2]]


# --------------------------------------------------------------------------
# inference

@pytest.mark.parametrize("x1,x2,expected", [
    (50, 1, 0.75),
    (100, 0, 0.65),
    (75, 0.75, 0.7625),
])
def test_flc1_examples(x1, x2, expected):
    assert flc_infer(default_flc1(), x1, x2) == pytest.approx(expected, abs=1e-12)


def test_flc2_example():
    assert flc_infer(default_flc2(), 1, 0) == pytest.approx(0.3, abs=1e-12)


@pytest.mark.parametrize("spec,peaks1", [(default_flc1(), PEAKS1), (default_flc2(), PEAKS01)])
def test_peaks_reproduce_table(spec, peaks1):
    table = spec.rules.as_array()
    for i, x1 in enumerate(peaks1):
        for j, x2 in enumerate(PEAKS01):
            assert abs(flc_infer(spec, x1, x2) - table[i, j]) < 1e-9


def test_vectorized_inference_matches_scalar():
    spec = default_flc1()
    rng = np.random.default_rng(1)
    x1 = rng.uniform(0, 100, 50)
    x2 = rng.uniform(0, 1, 50)
    vec = flc_infer(spec, x1, x2)
    # rule sums may be reduced in a different order, so allow an ulp or two
    assert np.allclose(vec, [flc_infer(spec, a, b) for a, b in zip(x1, x2)], rtol=0, atol=1e-15)


def test_product_tnorm_matches_oracle():
    spec = default_flc2().replace(tnorm=TNorm.PRODUCT)
    t = [v.params().tolist() for v in spec.variables]
    for x1, x2 in [(0.3, 0.6), (0.9, 0.1), (0.5, 0.5)]:
        ref = oracles.brute_singleton(t[0], (0, 1), t[1], (0, 1), spec.rules.consequents, x1, x2,
                                      tnorm=lambda a, b: a * b)
        assert flc_infer(spec, x1, x2) == pytest.approx(ref, abs=1e-12)


@given(st.floats(0, 100), st.floats(0, 1))
def test_singleton_output_within_fired_consequents(x1, x2):
    spec = default_flc1()
    d1, d2 = fuzzify(spec.input1, x1), fuzzify(spec.input2, x2)
    fired = [spec.rules.cell(i, j) for i in range(3) for j in range(3) if min(d1[i], d2[j]) > 0]
    y = flc_infer(spec, x1, x2)
    assert min(fired) - 1e-12 <= y <= max(fired) + 1e-12


@given(st.permutations(range(9)), st.floats(0, 1), st.floats(0, 1))
def test_inference_invariant_to_rule_order(order, x1, x2):
    spec = default_flc2()
    d1, d2 = fuzzify(spec.input1, x1), fuzzify(spec.input2, x2)
    num = den = 0.0
    for r in order:
        i, j = divmod(r, 3)
        s = min(d1[i], d2[j])
        num += s * spec.rules.cell(i, j)
        den += s
    assert flc_infer(spec, x1, x2) == pytest.approx(num / den, abs=1e-12)


def test_zero_firing_raises():
    var = FuzzyVariable("v", (0, 1), ((0, 0, 0.1), (0.2, 0.3, 0.4), (0.9, 1, 1)))
    # saturating edges still leave (0.1, 0.2) and (0.4, 0.9) uncovered
    spec = default_flc2().replace(input1=var)
    with pytest.raises(ZeroFiringError):
        flc_infer(spec, 0.6, 0.5)
    out, total = infer_with_params(spec, spec.params()[None], 0.6, 0.5)
    assert math.isnan(out[0]) and total[0] == 0


def test_infer_with_params_batch_matches_individual():
    base = default_flc2()
    p = np.stack([base.params(), base.params()])
    p[1, 1, 1] = (0.1, 0.4, 0.8)
    out, _ = infer_with_params(base, p, np.array([0.2, 0.7]), np.array([0.3, 0.9]))
    assert np.array_equal(out[0], flc_infer(base, [0.2, 0.7], [0.3, 0.9]))
    assert np.array_equal(out[1], flc_infer(base.with_params(p[1]), [0.2, 0.7], [0.3, 0.9]))


# --------------------------------------------------------------------------
# clipped-centroid mode

def _numeric_centroid(a, m, b, universe, h, left, right, n=400001):
    xs = np.linspace(*universe, n)
    mu = np.minimum(oracles_vec(xs, a, m, b, left, right), h)
    return float((xs * mu).sum() / mu.sum())


def oracles_vec(xs, a, m, b, left, right):
    return np.array([oracles.tri(x, a, m, b, left, right) for x in xs])


@pytest.mark.parametrize("a,m,b,h,left,right", [
    (0.0, 0.5, 1.0, 1.0, False, False),
    (0.0, 0.5, 1.0, 0.4, False, False),
    (0.0, 0.0, 0.5, 0.7, True, False),
    (0.5, 1.0, 1.0, 0.3, False, True),
    (0.2, 0.3, 0.9, 0.6, False, False),
])
def test_clipped_centroid_matches_numeric(a, m, b, h, left, right):
    got = float(clipped_centroid(a, m, b, (0.0, 1.0), h, left, right))
    assert got == pytest.approx(_numeric_centroid(a, m, b, (0.0, 1.0), h, left, right), abs=1e-4)


def test_clipped_centroid_zero_height_falls_back_to_peak():
    assert float(clipped_centroid(0.2, 0.3, 0.9, (0, 1), 0.0)) == 0.3


def test_mamdani_mode_single_rule_is_clipped_centroid():
    spec = default_flc1().replace(mode=InferenceMode.MAMDANI_CLIPPED)
    # (50, 1) fires only Medium x High -> 0.75 -> High output term, full height
    expected = float(clipped_centroid(0.5, 1.0, 1.0, (0, 1), 1.0, False, True))
    assert flc_infer(spec, 50, 1) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(5 / 6, abs=1e-12)


def test_mamdani_output_depends_on_output_terms():
    spec = default_flc2().replace(mode=InferenceMode.MAMDANI_CLIPPED)
    p = spec.params()
    p[2, 1] = (0.1, 0.5, 0.6)
    assert flc_infer(spec, 0.5, 0.5) != flc_infer(spec.with_params(p), 0.5, 0.5)


# --------------------------------------------------------------------------
# validation

def test_validate_detects_constraint_1():
    spec = _with_input1(default_flc1(), ((0, 0, 60), (0, 50, 100), (50, 100, 100)))
    assert "1" in {v.constraint for v in validate_flc(spec)}


def test_validate_detects_constraint_3():
    spec = _with_input1(default_flc1(), ((0, 0, 50), (50, 50, 100), (50, 100, 100)))
    assert "3" in {v.constraint for v in validate_flc(spec)}


def test_validate_reports_all_violations():
    spec = _with_input1(default_flc1(), ((0, 0, 70), (60, 60, 100), (100, 100, 100)))
    found = {v.constraint for v in validate_flc(spec)}
    assert {"1", "5"} <= found


def test_validate_detects_universe_and_coverage():
    var = FuzzyVariable("v", (0, 1), ((-0.5, 0, 0.1), (0.2, 0.3, 0.4), (0.9, 1, 1)))
    found = {v.constraint for v in validate_flc(default_flc2().replace(input1=var))}
    assert "universe" in found and "coverage" in found


# --------------------------------------------------------------------------
# JSON

def test_json_round_trip():
    for spec in (default_flc1(), default_flc2().replace(mode="MamdaniClipped", tnorm="Product")):
        back = loads_flc(dumps_flc(spec))
        assert back == spec
        assert dumps_flc(back) == dumps_flc(spec)


def test_json_schema_keys():
    d = flc_to_dict(default_flc1())
    assert set(d) >= {"input1", "input2", "output", "rules", "mode", "tnorm"}
    assert d["input1"]["universe"] == [0.0, 100.0]
    assert d["input1"]["terms"]["Medium"] == [0.0, 50.0, 100.0]
    assert d["mode"] == "Singleton" and d["tnorm"] == "Min"
    json.dumps(d)


def test_json_bad_document():
    d = flc_to_dict(default_flc1())
    del d["input2"]
    with pytest.raises(ConfigurationError):
        flc_from_dict(d)
