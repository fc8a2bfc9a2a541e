"""Two-input fuzzy logic controllers built from triangular membership functions.

Every controller has two inputs and one output, each described by three
terms (Low, Medium, High), and a 3x3 table of crisp rule outputs.  Two
inference modes are available:

* ``Singleton``: zero-order inference, the crisp output is the firing-strength
  weighted average of the table entries.
* ``MamdaniClipped``: each table entry is mapped to an output term (Low below
  1/3, Medium below 2/3, High otherwise), the term triangle is clipped at the
  rule's firing strength and the rule contributes the centroid of the clipped
  shape.  Rule centroids are combined by firing-strength weighted average.

The edge terms of a variable (Low and High) saturate towards the universe
boundaries: Low is 1 left of its peak and High is 1 right of its peak.  For
the default tables this changes nothing (their edge terms already peak at the
boundary) and it keeps tuned variables covering the whole universe.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, InvalidMembershipError, ZeroFiringError

TERMS = ("Low", "Medium", "High")

# output-term thresholds used in MamdaniClipped mode
LABEL_THRESHOLDS = (1.0 / 3.0, 2.0 / 3.0)


class InferenceMode(str, Enum):
    SINGLETON = "Singleton"
    MAMDANI_CLIPPED = "MamdaniClipped"


class TNorm(str, Enum):
    MIN = "Min"
    PRODUCT = "Product"


def _term_index(term) -> int:
    if isinstance(term, (int, np.integer)):
        if not 0 <= term < 3:
            raise IndexError(term)
        return int(term)
    try:
        return TERMS.index(term)
    except ValueError:
        raise KeyError(term) from None


@dataclass(frozen=True)
class TriangularMf:
    """Triangle with left foot ``a``, peak ``m`` and right foot ``b``."""

    a: float
    m: float
    b: float

    def __post_init__(self):
        vals = (float(self.a), float(self.m), float(self.b))
        for name, v in zip("amb", vals):
            object.__setattr__(self, name, v)
        if not all(np.isfinite(vals)):
            raise InvalidMembershipError(f"non-finite membership parameters {vals}")
        if not self.a <= self.m <= self.b:
            raise InvalidMembershipError(f"expected a <= m <= b, got {vals}")

    def __call__(self, x):
        return mf_eval(self, x)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.a, self.m, self.b)


def _tri(x, a, m, b, open_left=False, open_right=False):
    # Broadcasting triangle.  a == m is a left shoulder (1 at the peak),
    # m == b a right shoulder.
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if open_left:
            up = np.ones(np.broadcast(x, a).shape)
        else:
            up = np.where(m > a, (x - a) / (m - a), np.where(x >= a, 1.0, 0.0))
        if open_right:
            down = np.ones(np.broadcast(x, b).shape)
        else:
            down = np.where(b > m, (b - x) / (b - m), np.where(x <= b, 1.0, 0.0))
    return np.clip(np.minimum(up, down), 0.0, 1.0)


def mf_eval(mf: TriangularMf, x):
    """Membership degree of ``x`` (scalar or array) in ``mf``."""
    y = _tri(x, mf.a, mf.m, mf.b)
    return float(y) if y.ndim == 0 else y


@dataclass(frozen=True)
class FuzzyVariable:
    name: str
    universe: tuple[float, float]
    terms: tuple[TriangularMf, TriangularMf, TriangularMf]

    def __post_init__(self):
        lo, hi = (float(v) for v in self.universe)
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise ConfigurationError(f"{self.name}: bad universe {self.universe}")
        object.__setattr__(self, "universe", (lo, hi))
        terms = tuple(t if isinstance(t, TriangularMf) else TriangularMf(*t) for t in self.terms)
        if len(terms) != 3:
            raise ConfigurationError(f"{self.name}: expected 3 terms, got {len(terms)}")
        object.__setattr__(self, "terms", terms)

    @property
    def Low(self) -> TriangularMf:
        return self.terms[0]

    @property
    def Medium(self) -> TriangularMf:
        return self.terms[1]

    @property
    def High(self) -> TriangularMf:
        return self.terms[2]

    def term(self, label) -> TriangularMf:
        return self.terms[_term_index(label)]

    def params(self) -> np.ndarray:
        return np.array([t.as_tuple() for t in self.terms], dtype=float)

    def clamp(self, x):
        return np.clip(np.asarray(x, dtype=float), *self.universe)

    def fuzzify(self, x) -> np.ndarray:
        return fuzzify(self, x)


def _fuzzify_params(p, x):
    # p[..., term, (a, m, b)] -> degrees shaped (3, *p.shape[:-2], *x.shape)
    x = np.asarray(x, dtype=float)
    pad = p.shape[:-2] + (1,) * x.ndim
    out = []
    for t in range(3):
        a, m, b = (p[..., t, k].reshape(pad) for k in range(3))
        out.append(_tri(x, a, m, b, open_left=t == 0, open_right=t == 2))
    return np.stack(out, axis=0)


def fuzzify(var: FuzzyVariable, x) -> np.ndarray:
    """Degrees (Low, Medium, High) of ``x`` after clamping into the universe.

    Returns shape ``(3,)`` for a scalar and ``(3, *x.shape)`` for arrays.
    """
    return _fuzzify_params(var.params(), var.clamp(x))


class RuleRow(tuple):
    """One table row; indexable by term label or position."""

    def __getitem__(self, term):
        if isinstance(term, slice):
            return tuple(self)[term]
        return tuple.__getitem__(self, _term_index(term))


@dataclass(frozen=True)
class RuleTable:
    """Crisp rule outputs indexed by (input1 term, input2 term)."""

    consequents: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        arr = np.asarray(self.consequents, dtype=float)
        if arr.shape != (3, 3):
            raise ConfigurationError(f"rule table must be 3x3, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise ConfigurationError("rule consequents must lie in [0, 1]")
        object.__setattr__(self, "consequents", tuple(tuple(float(v) for v in row) for row in arr))

    def __getitem__(self, term) -> RuleRow:
        return RuleRow(self.consequents[_term_index(term)])

    def cell(self, row, col) -> float:
        return self.consequents[_term_index(row)][_term_index(col)]

    def as_array(self) -> np.ndarray:
        return np.array(self.consequents, dtype=float)

    def output_labels(self) -> np.ndarray:
        """Output-term index per rule, by thresholding the consequents."""
        return np.digitize(self.as_array(), LABEL_THRESHOLDS, right=False)


@dataclass(frozen=True)
class FlcSpec:
    input1: FuzzyVariable
    input2: FuzzyVariable
    output: FuzzyVariable
    rules: RuleTable
    mode: InferenceMode = InferenceMode.SINGLETON
    tnorm: TNorm = TNorm.MIN
    name: str = field(default="flc", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "mode", InferenceMode(self.mode))
        object.__setattr__(self, "tnorm", TNorm(self.tnorm))

    @property
    def variables(self) -> tuple[FuzzyVariable, FuzzyVariable, FuzzyVariable]:
        return (self.input1, self.input2, self.output)

    def params(self) -> np.ndarray:
        """Membership geometry as an array ``[variable, term, (a, m, b)]``."""
        return np.stack([v.params() for v in self.variables])

    def with_params(self, params) -> "FlcSpec":
        params = np.asarray(params, dtype=float).reshape(3, 3, 3)
        variables = [
            FuzzyVariable(v.name, v.universe, tuple(TriangularMf(*map(float, t)) for t in p))
            for v, p in zip(self.variables, params)
        ]
        return FlcSpec(*variables, rules=self.rules, mode=self.mode, tnorm=self.tnorm, name=self.name)

    def replace(self, **kw) -> "FlcSpec":
        fields = dict(
            input1=self.input1, input2=self.input2, output=self.output, rules=self.rules,
            mode=self.mode, tnorm=self.tnorm, name=self.name,
        )
        fields.update(kw)
        return FlcSpec(**fields)


# --------------------------------------------------------------------------
# inference


def _trapezoid_moments(xa, xb, ya, yb):
    dx = xb - xa
    area = dx * (ya + yb) / 2.0
    moment = dx * (ya * (2.0 * xa + xb) + yb * (xa + 2.0 * xb)) / 6.0
    return area, moment


def _clipped_segment_moments(x0, x1, y0, y1, h):
    # area and first moment of min(h, f) where f is linear on [x0, x1]
    dy = y1 - y0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(dy != 0, (h - y0) / dy, 0.0)
    t = np.clip(t, 0.0, 1.0)
    xc = x0 + t * (x1 - x0)
    yc = np.minimum(h, y0 + t * dy)
    a1, m1 = _trapezoid_moments(x0, xc, np.minimum(h, y0), yc)
    a2, m2 = _trapezoid_moments(xc, x1, yc, np.minimum(h, y1))
    return a1 + a2, m1 + m2


def clipped_centroid(a, m, b, universe, h, open_left=False, open_right=False):
    """Centroid of a term's membership clipped at height ``h``.

    All of ``a, m, b, h, open_left, open_right`` broadcast.  A zero-area
    shape (``h == 0`` or a zero-width triangle) falls back to the peak ``m``.
    """
    lo, hi = universe
    a, m, b, h = (np.asarray(v, dtype=float) for v in (a, m, b, h))
    one, zero = np.ones_like(a), np.zeros_like(a)
    left = np.where(open_left, one, zero)
    right = np.where(open_right, one, zero)
    xs = (lo + zero, a, m, b, hi + zero)
    ys = (left, left, one, right, right)
    area = moment = 0.0
    for k in range(4):
        da, dm = _clipped_segment_moments(xs[k], xs[k + 1], ys[k], ys[k + 1], h)
        area = area + da
        moment = moment + dm
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(area > 0, moment / area, m + 0.0 * h)


def infer_with_params(spec: FlcSpec, params, x1, x2):
    """Vectorized inference with membership geometry taken from ``params``.

    ``params`` has shape ``(B, 3, 3, 3)`` (batch, variable, term, a/m/b);
    universes, rules, mode and t-norm come from ``spec``.  Returns
    ``(output, total_strength)``, both shaped ``(B, *broadcast(x1, x2).shape)``;
    output is NaN where no rule fired.
    """
    params = np.asarray(params, dtype=float)
    batch = params.shape[0]
    x1 = spec.input1.clamp(x1)
    x2 = spec.input2.clamp(x2)
    # fuzzify each input on its own shape; broadcasting happens in the t-norm
    nd = len(np.broadcast_shapes(x1.shape, x2.shape))
    x1 = x1.reshape((1,) * (nd - x1.ndim) + x1.shape)
    x2 = x2.reshape((1,) * (nd - x2.ndim) + x2.shape)
    pad = (1,) * nd

    def member(var):
        return np.moveaxis(_fuzzify_params(params[:, var], x1 if var == 0 else x2), 0, 1)

    mu1, mu2 = member(0), member(1)
    if spec.tnorm is TNorm.MIN:
        strength = np.minimum(mu1[:, :, None], mu2[:, None, :])
    else:
        strength = mu1[:, :, None] * mu2[:, None, :]
    if spec.mode is InferenceMode.SINGLETON:
        # numerator and total strength in one product over the nine rules
        weights = np.stack([spec.rules.as_array().ravel(), np.ones(9)])
        flat = strength.reshape((batch, 9, -1))
        num, total = np.moveaxis(weights @ flat, 1, 0).reshape((2, batch) + strength.shape[3:])
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(total > 0, num / total, np.nan), total
    total = strength.sum(axis=(1, 2))
    labels = spec.rules.output_labels()
    out = params[:, 2][:, labels.ravel()].reshape((batch, 3, 3, 3) + pad)
    values = clipped_centroid(
        out[:, :, :, 0], out[:, :, :, 1], out[:, :, :, 2], spec.output.universe, strength,
        open_left=(labels == 0).reshape((1, 3, 3) + pad),
        open_right=(labels == 2).reshape((1, 3, 3) + pad),
    )
    num = (strength * values).sum(axis=(1, 2))
    with np.errstate(divide="ignore", invalid="ignore"):
        result = np.where(total > 0, num / total, np.nan)
    return result, total


def flc_infer(spec: FlcSpec, x1, x2):
    """Crisp controller output for inputs ``x1``, ``x2`` (scalars or arrays).

    Raises ZeroFiringError if no rule fires at some input.
    """
    out, total = infer_with_params(spec, spec.params()[None], x1, x2)
    if np.any(total <= 0):
        raise ZeroFiringError(f"{spec.name}: no rule fired")
    out = out[0]
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    variable: str
    constraint: str
    message: str

    def __str__(self):
        return f"{self.variable}: constraint {self.constraint}: {self.message}"


# (constraint id, lower, value, upper, strict upper)  in (left, peak, right)
# naming: Low = (aL, bL, cL), Medium = (aM, bM, cM), High = (aH, bH, cH).
# Orderings are checked non-strictly so the tabulated shoulders pass; the two
# overlap constraints (3 and 5) stay strict because equality leaves a gap.
_ORDERINGS = (
    ("1", "aL", "cL", "bM", False),
    ("2", "aL", "bL", "cL", False),
    ("3", "aL", "aM", "cL", True),
    ("4", "bM", "cM", "cH", False),
    ("5", "bM", "aH", "cM", True),
    ("6", "aH", "bH", "cH", False),
)


def named_params(var: FuzzyVariable) -> dict[str, float]:
    names = {}
    for t, suffix in zip(var.terms, "LMH"):
        names["a" + suffix], names["b" + suffix], names["c" + suffix] = t.as_tuple()
    return names


def _coverage_gap(var: FuzzyVariable):
    lo, hi = var.universe
    pts = np.unique(np.clip(np.concatenate([[lo, hi], var.params().ravel()]), lo, hi))
    probe = np.concatenate([pts, (pts[:-1] + pts[1:]) / 2.0])
    total = fuzzify(var, probe).sum(axis=0)
    bad = probe[total <= 0]
    return None if bad.size == 0 else float(bad.min())


def validate_variable(var: FuzzyVariable) -> list[Violation]:
    out = []
    p = named_params(var)
    for cid, lo_name, name, hi_name, strict in _ORDERINGS:
        lo, val, hi = p[lo_name], p[name], p[hi_name]
        upper_ok = val < hi if strict else val <= hi
        if not (lo <= val and upper_ok):
            rel = "<" if strict else "<="
            out.append(Violation(var.name, cid,
                                 f"{lo_name} <= {name} {rel} {hi_name} fails ({lo:g}, {val:g}, {hi:g})"))
    lo, hi = var.universe
    for label, t in zip(TERMS, var.terms):
        if t.a < lo or t.b > hi:
            out.append(Violation(var.name, "universe", f"{label} {t.as_tuple()} outside [{lo:g}, {hi:g}]"))
    gap = _coverage_gap(var)
    if gap is not None:
        out.append(Violation(var.name, "coverage", f"no term covers x={gap:g}"))
    return out


def validate_flc(spec: FlcSpec) -> list[Violation]:
    """All constraint violations of ``spec``; an empty list means valid."""
    out = []
    for var in spec.variables:
        out.extend(validate_variable(var))
    return out


# --------------------------------------------------------------------------
# defaults


def _three(name, lo, hi, low, med, high):
    return FuzzyVariable(name, (lo, hi), (TriangularMf(*low), TriangularMf(*med), TriangularMf(*high)))


def _unit_output(name):
    return _three(name, 0.0, 1.0, (0, 0, 0.5), (0, 0.5, 1), (0.5, 1, 1))


def default_flc1() -> FlcSpec:
    """Model-reliability controller: inputs Z% in [0, 100] and K in [0, 1]."""
    return FlcSpec(
        input1=_three("z_percent", 0.0, 100.0, (0, 0, 50), (0, 50, 100), (50, 100, 100)),
        input2=_three("k", 0.0, 1.0, (0, 0, 0.5), (0, 0.5, 1), (0.5, 1, 1)),
        output=_unit_output("model_reliability"),
        rules=RuleTable(((0.03, 0.06, 0.15), (0.25, 0.45, 0.75), (0.65, 0.85, 1.0))),
        name="flc1",
    )


def default_flc2() -> FlcSpec:
    """Total-reliability controller: anchor reliability and normalized RSSI."""
    return FlcSpec(
        input1=_three("anchor_reliability", 0.0, 1.0, (0, 0, 0.5), (0, 0.5, 1), (0.5, 1, 1)),
        input2=_three("normalized_rssi", 0.0, 1.0, (0, 0, 0.5), (0, 0.5, 1), (0.5, 1, 1)),
        output=_unit_output("total_reliability"),
        rules=RuleTable(((0.001, 0.3, 0.7), (0.01, 0.4, 0.9), (0.3, 0.6, 1.0))),
        name="flc2",
    )


# --------------------------------------------------------------------------
# JSON


def _var_to_dict(var: FuzzyVariable) -> dict:
    return {
        "name": var.name,
        "universe": list(var.universe),
        "terms": {label: list(t.as_tuple()) for label, t in zip(TERMS, var.terms)},
    }


def _var_from_dict(d: dict, default_name: str) -> FuzzyVariable:
    try:
        terms = tuple(TriangularMf(*map(float, d["terms"][label])) for label in TERMS)
        return FuzzyVariable(d.get("name", default_name), tuple(d["universe"]), terms)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad fuzzy variable {default_name!r}: {exc}") from exc


def flc_to_dict(spec: FlcSpec) -> dict:
    return {
        "name": spec.name,
        "input1": _var_to_dict(spec.input1),
        "input2": _var_to_dict(spec.input2),
        "output": _var_to_dict(spec.output),
        "rules": [list(row) for row in spec.rules.consequents],
        "mode": spec.mode.value,
        "tnorm": spec.tnorm.value,
    }


def flc_from_dict(d: dict) -> FlcSpec:
    try:
        return FlcSpec(
            input1=_var_from_dict(d["input1"], "input1"),
            input2=_var_from_dict(d["input2"], "input2"),
            output=_var_from_dict(d["output"], "output"),
            rules=RuleTable(tuple(tuple(r) for r in d["rules"])),
            mode=InferenceMode(d.get("mode", "Singleton")),
            tnorm=TNorm(d.get("tnorm", "Min")),
            name=d.get("name", "flc"),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigurationError(f"bad FLC document: {exc}") from exc


def dumps_flc(spec: FlcSpec) -> str:
    return json.dumps(flc_to_dict(spec), indent=2) + "\n"


def loads_flc(text: str) -> FlcSpec:
    try:
        return flc_from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"FLC document is not valid JSON: {exc}") from exc


def batch_params(specs: Sequence[FlcSpec]) -> np.ndarray:
    return np.stack([s.params() for s in specs])
