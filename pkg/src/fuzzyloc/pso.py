"""Constrained particle swarm optimizer for triangular membership functions.

A controller has three variables (two inputs, one output).  For each of them
the left foot of Low (``aL``), the peak of Medium (``bM``) and the right foot
of High (``cH``) stay fixed and six parameters are free, always handled in
this order::

    cL  right foot of Low       aL + 2e <= cL <= bM - e
    bL  peak of Low             aL + e  <= bL <= cL - e
    aM  left foot of Medium     aL + e  <= aM <= cL - e
    cM  right foot of Medium    bM + 2e <= cM <= cH - e
    aH  left foot of High       bM + e  <= aH <= cM - e
    bH  peak of High            aH + e  <= bH <= cH - e

so a chromosome has 18 genes.  Bounds of later genes depend on genes already
updated in the same sweep, which is why updates run dimension by dimension.
The doubled margin on cL and cM keeps the nested intervals of bL/aM and aH
non-empty.

Each iteration of each particle and dimension:

1. the previous position is mapped proportionally into the new interval if
   it fell outside it;
2. the velocity follows the usual inertia/cognitive/social rule and is
   clipped to the velocities that keep the move inside the new interval;
3. the position moves; an overshoot gets the proportional correction
   followed by a hard clamp.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateOldIntervalError,
    EmptyIntervalError,
    FuzzyLocError,
    InfeasibleChromosomeError,
    InvalidMembershipError,
)
from .fuzzy import FlcSpec, infer_with_params, validate_flc

GENE_NAMES = ("cL", "bL", "aM", "cM", "aH", "bH")
# (term, parameter) slot of each free gene and of the fixed aL, bM, cH
FREE_SLOTS = ((0, 2), (0, 1), (1, 0), (1, 2), (2, 0), (2, 1))
FIXED_SLOTS = ((0, 0), (1, 1), (2, 2))
N_GENES = 18
INFEASIBLE = -math.inf


@dataclass(frozen=True)
class PsoConfig:
    k: int = 50
    iterations: int = 20
    w: float = 0.74
    c1: float = 1.47
    c2: float = 1.47
    seed: int = 0
    # margin as a fraction of each variable's universe width
    epsilon: float = 1e-6

    def __post_init__(self):
        if self.k < 1 or self.iterations < 1:
            raise ConfigurationError("k and iterations must be >= 1")
        if self.w < 0 or self.c1 < 0 or self.c2 < 0:
            raise ConfigurationError("w, c1, c2 must be >= 0")
        if not 0 <= self.epsilon < 0.25:
            raise ConfigurationError(f"epsilon must be in [0, 0.25), got {self.epsilon}")


@dataclass(eq=False)
class Chromosome:
    """18 free genes plus the fixed (aL, bM, cH) of each variable."""

    values: np.ndarray
    fixed: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(N_GENES)
        self.fixed = np.asarray(self.fixed, dtype=float).reshape(3, 3)

    def params(self) -> np.ndarray:
        return genes_to_params(self.values, self.fixed)

    def __eq__(self, other):
        return (
            isinstance(other, Chromosome)
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.fixed, other.fixed)
        )


def genes_to_params(values, fixed) -> np.ndarray:
    """Membership geometry ``[..., variable, term, (a, m, b)]`` from genes."""
    values = np.asarray(values, dtype=float)
    lead = values.shape[:-1]
    p = np.empty(lead + (3, 3, 3))
    g = values.reshape(lead + (3, 6))
    for v in range(3):
        for d, (t, s) in enumerate(FREE_SLOTS):
            p[..., v, t, s] = g[..., v, d]
        for f, (t, s) in enumerate(FIXED_SLOTS):
            p[..., v, t, s] = fixed[v, f]
    return p


def encode_chromosome(spec: FlcSpec) -> Chromosome:
    p = spec.params()
    values = np.array([p[v, t, s] for v in range(3) for t, s in FREE_SLOTS])
    fixed = np.array([[p[v, t, s] for t, s in FIXED_SLOTS] for v in range(3)])
    return Chromosome(values, fixed)


def decode_chromosome(chromosome: Chromosome, template: FlcSpec) -> FlcSpec:
    """Template with the 18 free parameters substituted; must validate."""
    try:
        spec = template.with_params(chromosome.params())
    except InvalidMembershipError as exc:
        raise InfeasibleChromosomeError(str(exc)) from exc
    violations = validate_flc(spec)
    if violations:
        raise InfeasibleChromosomeError("; ".join(map(str, violations)))
    return spec


def margins(template: FlcSpec, epsilon: float) -> np.ndarray:
    return np.array([epsilon * (v.universe[1] - v.universe[0]) for v in template.variables])


# --------------------------------------------------------------------------
# bounds and the three update steps


def _bound_terms(fixed, eps):
    """Per-gene bound pieces: lo = lo_c + X[lo_dep], hi = hi_c + X[hi_dep].

    A dependency of -1 means the bound is constant.  Also returns the
    per-gene rounding tolerance used to collapse near-empty intervals.
    """
    fixed = np.asarray(fixed, dtype=float).reshape(3, 3)
    eps = np.broadcast_to(np.asarray(eps, dtype=float), (3,))
    return _cached_terms(fixed.tobytes(), eps.tobytes())


@lru_cache(maxsize=64)
def _cached_terms(fixed_bytes, eps_bytes):
    fixed = np.frombuffer(fixed_bytes).reshape(3, 3)
    eps = np.frombuffer(eps_bytes)
    lo_c, hi_c = np.empty(N_GENES), np.empty(N_GENES)
    lo_dep, hi_dep = np.full(N_GENES, -1), np.full(N_GENES, -1)
    tol = np.empty(N_GENES)
    for var in range(3):
        e = float(eps[var])
        aL, bM, cH = (float(f) for f in fixed[var])
        o = 6 * var
        lo_c[o:o + 6] = (aL + 2 * e, aL + e, aL + e, bM + 2 * e, bM + e, e)
        hi_c[o:o + 6] = (bM - e, -e, -e, cH - e, -e, cH - e)
        lo_dep[o + 5] = o + 4
        hi_dep[o + 1] = hi_dep[o + 2] = o
        hi_dep[o + 4] = o + 3
        # a gene sitting exactly on its own bound can leave the next interval
        # empty by a rounding error; collapse those instead of failing
        tol[o:o + 6] = 64 * np.spacing(max(abs(aL), abs(cH), 1.0))
    return lo_c, hi_c, lo_dep, hi_dep, tol


# genes whose bounds depend only on earlier stages: (cL, cM), (bL, aM, aH), (bH)
STAGES = tuple(np.array([6 * v + d for v in range(3) for d in ds]) for ds in ((0, 3), (1, 2, 4), (5,)))


def _block_bounds(values, terms, cols, strict=True):
    lo_c, hi_c, lo_dep, hi_dep, tol = terms
    # adding 0.0 to a constant bound is exact, so one expression covers both kinds
    lo = np.where(lo_dep[cols] >= 0, values[..., np.maximum(lo_dep[cols], 0)], 0.0) + lo_c[cols]
    hi = np.where(hi_dep[cols] >= 0, values[..., np.maximum(hi_dep[cols], 0)], 0.0) + hi_c[cols]
    lo = np.where((lo > hi) & (lo - hi <= tol[cols]), hi, lo)
    if strict and np.any(lo > hi):
        bad = int(cols[np.nonzero(np.any(lo > hi, axis=tuple(range(lo.ndim - 1))))[0][0]])
        var, d = divmod(bad, 6)
        raise EmptyIntervalError(f"gene {GENE_NAMES[d]} of variable {var}: empty interval (margin too large?)")
    return lo, hi


def compute_bounds(values, fixed, dim: int, eps):
    """Feasible interval of gene ``dim`` given the other genes in ``values``.

    ``values`` may be ``(18,)`` or ``(k, 18)``; ``eps`` is a scalar or the
    per-variable margins.  Genes referenced by the bound must already hold
    their values for this sweep.
    """
    values = np.asarray(values, dtype=float)
    lo, hi = _block_bounds(values, _bound_terms(fixed, eps), np.array([dim]))
    lo, hi = lo[..., 0], hi[..., 0]
    if lo.ndim == 0:
        return float(lo), float(hi)
    return lo, hi


def _proportional(x, a_old, b_old, a_new, b_new):
    x, a_old, b_old, a_new, b_new = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, a_old, b_old, a_new, b_new)))
    out = x.copy()
    span = b_old - a_old
    ok = span != 0
    with np.errstate(divide="ignore", invalid="ignore"):
        # below: [A(t), B(t)] -> [A(t+1), B(t)]
        below = ok & (x < a_new)
        out = np.where(below, b_old + (a_new - b_old) / (a_old - b_old) * (x - b_old), out)
        # above: [A(t), B(t)] -> [A(t), B(t+1)]
        above = ok & (x > b_new)
        out = np.where(above, a_old + (b_new - a_old) / span * (x - a_old), out)
    return np.clip(out, a_new, b_new)


def clamp_position_proportional(x, old, new):
    """Map a position left outside a shrunken interval back into it.

    ``old`` is ``(A(t), B(t))``, ``new`` is ``(A(t+1), B(t+1))``.  A final
    hard clamp guarantees the result lies in ``new``.
    """
    a_old, b_old = old
    if np.any(np.asarray(b_old) - np.asarray(a_old) == 0):
        raise DegenerateOldIntervalError(f"old interval {old} has zero width")
    out = _proportional(x, a_old, b_old, *new)
    return float(out) if out.ndim == 0 else out


def update_velocity(v, x, pbest, gbest, r1, r2, config: PsoConfig, bounds):
    """New velocity clipped to [v_min, v_max]; returns (v, v_min, v_max)."""
    a_new, b_new = bounds
    cog, soc = config.c1 * r1, config.c2 * r2
    inertia = config.w * v
    v_new = inertia + cog * (pbest - x) + soc * (gbest - x)
    v_min = inertia + cog * (pbest - b_new) + soc * (gbest - b_new)
    v_max = inertia + cog * (pbest - a_new) + soc * (gbest - a_new)
    return np.clip(v_new, v_min, v_max), v_min, v_max


def update_position(x, v, v_min, v_max, old, new):
    """Move by ``v``; an overshoot is corrected proportionally, then clamped."""
    a_old, b_old = old
    a_new, b_new = new
    x, v, v_min, v_max = (np.asarray(t, dtype=float) for t in (x, v, v_min, v_max))
    moved = x + v
    with np.errstate(divide="ignore", invalid="ignore"):
        low = (moved < a_new) & (v_min != 0)
        moved = np.where(low, moved + v / v_min * (a_old - x), moved)
        high = (moved > b_new) & (v_max != 0)
        moved = np.where(high, moved + v / v_max * (b_old - x), moved)
    out = np.clip(moved, a_new, b_new)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# swarm


@dataclass
class Particle:
    x: np.ndarray
    v: np.ndarray
    pbest: np.ndarray
    pbest_fitness: float


@dataclass(eq=False)
class Swarm:
    x: np.ndarray  # (k, 18)
    v: np.ndarray
    pbest: np.ndarray
    pbest_fitness: np.ndarray
    gbest: np.ndarray
    gbest_fitness: float
    fixed: np.ndarray
    eps: np.ndarray
    bounds_lo: np.ndarray  # interval of every gene at the last update
    bounds_hi: np.ndarray
    rngs: list = field(repr=False, default_factory=list)
    trace: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.x.shape[0]

    @property
    def particles(self) -> list[Particle]:
        return [
            Particle(self.x[i].copy(), self.v[i].copy(), self.pbest[i].copy(), float(self.pbest_fitness[i]))
            for i in range(self.k)
        ]

    def chromosome(self, i: int) -> Chromosome:
        return Chromosome(self.x[i].copy(), self.fixed)

    def best(self) -> Chromosome:
        return Chromosome(self.gbest.copy(), self.fixed)


Fitness = Callable[[Chromosome], float]


def _evaluate(fitness, X, fixed, executor=None) -> np.ndarray:
    batch = getattr(fitness, "batch", None)
    if hasattr(fitness, "batch_genes"):
        # skips building one Chromosome per particle
        out = np.asarray(fitness.batch_genes(X, fixed), dtype=float)
    elif batch is not None:
        out = np.asarray(batch([Chromosome(row, fixed) for row in X]), dtype=float)
    else:
        def safe(c):
            try:
                return float(fitness(c))
            except FuzzyLocError:
                return INFEASIBLE
        mapper = executor.map if executor is not None else map
        out = np.array(list(mapper(safe, [Chromosome(row, fixed) for row in X])), dtype=float)
    return np.where(np.isnan(out), INFEASIBLE, out)


def _sweep_bounds(X, fixed, eps):
    terms = _bound_terms(fixed, eps)
    lo = np.empty_like(X)
    hi = np.empty_like(X)
    for cols in STAGES:
        lo[:, cols], hi[:, cols] = _block_bounds(X, terms, cols)
    return lo, hi


def init_swarm(config: PsoConfig, template: FlcSpec, fitness: Fitness | None = None, executor=None) -> Swarm:
    """Sample every gene uniformly inside its feasible interval, in gene order.

    Each particle draws from its own random stream spawned from the seed.
    Without ``fitness`` all fitness values are left at -inf.
    """
    fixed = encode_chromosome(template).fixed
    eps = margins(template, config.epsilon)
    streams = np.random.SeedSequence(config.seed).spawn(config.k)
    rngs = [np.random.default_rng(s) for s in streams]
    u = np.stack([r.random(N_GENES) for r in rngs])
    terms = _bound_terms(fixed, eps)
    X = np.empty((config.k, N_GENES))
    lo = np.empty_like(X)
    hi = np.empty_like(X)
    for cols in STAGES:
        lo[:, cols], hi[:, cols] = _block_bounds(X, terms, cols)
        X[:, cols] = lo[:, cols] + u[:, cols] * (hi[:, cols] - lo[:, cols])
    if fitness is None:
        fit = np.full(config.k, INFEASIBLE)
    else:
        fit = _evaluate(fitness, X, fixed, executor)
    best = int(np.argmax(fit))
    return Swarm(
        x=X, v=np.zeros_like(X), pbest=X.copy(), pbest_fitness=fit.copy(),
        gbest=X[best].copy(), gbest_fitness=float(fit[best]), fixed=fixed, eps=eps,
        bounds_lo=lo, bounds_hi=hi, rngs=rngs, trace=[float(fit[best])],
    )


def step_swarm(swarm: Swarm, config: PsoConfig, fitness: Fitness, executor=None) -> None:
    """One synchronous iteration: move every particle, then update the bests."""
    r = np.stack([rng.random((N_GENES, 2)) for rng in swarm.rngs])
    g = swarm.gbest
    X_old = swarm.x
    X_new = X_old.copy()
    V_new = np.empty_like(swarm.v)
    terms = _bound_terms(swarm.fixed, swarm.eps)
    # genes are swept in dependency stages; within a stage they are independent
    for d in STAGES:
        a_new, b_new = _block_bounds(X_new, terms, d)
        a_old, b_old = swarm.bounds_lo[:, d], swarm.bounds_hi[:, d]
        x = _proportional(X_old[:, d], a_old, b_old, a_new, b_new)
        v, v_min, v_max = update_velocity(
            swarm.v[:, d], x, swarm.pbest[:, d], g[d], r[:, d, 0], r[:, d, 1], config, (a_new, b_new)
        )
        X_new[:, d] = update_position(x, v, v_min, v_max, (a_old, b_old), (a_new, b_new))
        V_new[:, d] = v
        swarm.bounds_lo[:, d], swarm.bounds_hi[:, d] = a_new, b_new
    swarm.x, swarm.v = X_new, V_new

    fit = _evaluate(fitness, X_new, swarm.fixed, executor)
    better = fit > swarm.pbest_fitness
    swarm.pbest[better] = X_new[better]
    swarm.pbest_fitness[better] = fit[better]
    best = int(np.argmax(swarm.pbest_fitness))
    swarm.gbest = swarm.pbest[best].copy()
    swarm.gbest_fitness = float(swarm.pbest_fitness[best])
    swarm.trace.append(swarm.gbest_fitness)


@dataclass
class PsoResult:
    best: Chromosome
    fitness: float
    trace: list[float]
    swarm: Swarm

    def __iter__(self):
        # allows ``best, trace = run_pso(...)``
        return iter((self.best, self.trace))


def run_pso(
    config: PsoConfig,
    template: FlcSpec,
    fitness: Fitness,
    executor=None,
    callback: Callable[[int, Swarm], None] | None = None,
) -> PsoResult:
    """Maximize ``fitness`` over feasible chromosomes of ``template``.

    ``trace[0]`` is the best initial fitness, ``trace[t]`` the global best
    after iteration ``t``.  ``callback(t, swarm)`` runs after every iteration.
    """
    swarm = init_swarm(config, template, fitness, executor)
    if callback is not None:
        callback(0, swarm)
    for t in range(1, config.iterations + 1):
        step_swarm(swarm, config, fitness, executor)
        if callback is not None:
            callback(t, swarm)
    return PsoResult(swarm.best(), swarm.gbest_fitness, list(swarm.trace), swarm)


def feasible_mask(X, fixed, eps) -> np.ndarray:
    """Per-row flag: every gene inside its margin-shrunk interval."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    terms = _bound_terms(fixed, eps)
    ok = np.ones(X.shape[0], dtype=bool)
    for cols in STAGES:
        lo, hi = _block_bounds(X, terms, cols, strict=False)
        ok &= np.all((X[:, cols] >= lo) & (X[:, cols] <= hi), axis=1)
    return ok


# --------------------------------------------------------------------------
# fitness: mean controller output


class MeanOutput:
    """Mean controller output over a uniform grid of both input universes."""

    def __init__(self, template: FlcSpec, points: int = 21):
        self.template = template
        self.x1 = np.linspace(*template.input1.universe, points)[:, None]
        self.x2 = np.linspace(*template.input2.universe, points)[None, :]

    def _from_params(self, params: np.ndarray) -> np.ndarray:
        out, total = infer_with_params(self.template, params, self.x1, self.x2)
        fired = np.all(total > 0, axis=(1, 2))
        return np.where(fired, out.mean(axis=(1, 2)), INFEASIBLE)

    def __call__(self, chromosome: Chromosome) -> float:
        try:
            spec = decode_chromosome(chromosome, self.template)
        except InfeasibleChromosomeError:
            return INFEASIBLE
        return float(self._from_params(spec.params()[None])[0])

    def batch(self, chromosomes: Sequence[Chromosome]) -> np.ndarray:
        return self.batch_genes(np.stack([c.values for c in chromosomes]), chromosomes[0].fixed)

    def batch_genes(self, values: np.ndarray, fixed: np.ndarray) -> np.ndarray:
        ok = feasible_mask(values, fixed, np.zeros(3)) & _ordered(values, fixed)
        out = np.full(len(values), INFEASIBLE)
        if ok.any():
            out[ok] = self._from_params(genes_to_params(values[ok], fixed))
        return out


def _ordered(values, fixed) -> np.ndarray:
    # the two overlap constraints must hold strictly
    g = values.reshape(-1, 3, 6)
    return np.all((g[:, :, 2] < g[:, :, 0]) & (g[:, :, 4] < g[:, :, 3]), axis=1)


def mean_output(template: FlcSpec, points: int = 21) -> MeanOutput:
    return MeanOutput(template, points)
