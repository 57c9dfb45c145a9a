"""Penalty calculus and dual representations of ``R(X) = rho(Lambda(X))``.

Dual elements of the cone of scalar random variables are written as a
scale times a normalised density ``d = dQ/dP``. Because penalty functions
are positively homogeneous in the dual argument, one scale is eliminated in
closed form and the remaining searches run over probability vectors.

Conventions for extended reals: ``0 * inf = 0`` in perspective terms where
``X* = 0``; a NaN produced while evaluating a candidate discards that
candidate (``-inf`` in a supremum, ``+inf`` in an infimum).
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .aggregation import AggregatorKind, AggregatorSpec, aggregate_points, clearing_lp_prices, expected_perspective
from .convex_kit import Box, Monotonicity, ScalarFunctionSpec, minimize_over_log_scale
from . import lp_solver
from .errors import (
    ConeMembershipError,
    ContractViolation,
    DomainError,
    PreconditionError,
    ShapeError,
    SolverError,
    ValidationError,
)
from .prob_core import POSITIVE_TOL, Density, FiniteProbabilitySpace, RandomVector, normalize_dual
from .risk_measures import (
    RiskMeasureSpec,
    penalty_closed_form,
    penalty_left_inverse_closed_form,
    rho_eval,
    rho_eval_batch,
)

log = logging.getLogger(__name__)

# a start this close to the primal ends the dual search early
STOP_TOL = 1e-10
WEAK_DUALITY_TOL = 1e-6
GAP_ABS_TOL = 1e-3
GAP_REL_TOL = 1e-3
MINIMAX_ABS_TOL = 2e-2
MINIMAX_REL_TOL = 1e-2
PROBE_TOL = 1e-8
FD_STEP = 1e-6
ARMIJO = 1e-4
RATIO_TOL = 1e-9
SCALE_RANGE = (1e-8, 1e8)


@dataclass(frozen=True)
class OptimizerSettings:
    """Multi-start settings; every start derives its own seed from ``seed``."""

    starts: int = 20
    seed: int = 0
    iterations: int = 500

    def __post_init__(self) -> None:
        if self.starts < 1 or self.iterations < 0:
            raise ValidationError("need at least one start and a nonnegative iteration count")
        if self.seed < 0:
            raise ValidationError("seed must be nonnegative")


# ---------------------------------------------------------------- types


@dataclass(frozen=True, eq=False)
class DualVariables:
    """Bank weights ``w``, bank measures ``S_i``, society's measure ``Q`` and scale.

    ``s_densities`` holds ``dS_i/dP`` as an ``(n, k)`` array. The objective
    depends on ``w / lam`` only.
    """

    w: np.ndarray
    s_densities: np.ndarray
    q_density: Density
    lam: float = 1.0

    def __post_init__(self) -> None:
        w = np.array(self.w, dtype=float).reshape(-1)
        S = np.array(self.s_densities, dtype=float)
        space = self.q_density.space
        if S.ndim == 1:
            S = S.reshape(1, -1)
        if S.shape != (w.size, space.size):
            raise ShapeError(f"s_densities must have shape ({w.size}, {space.size})")
        if not np.all(np.isfinite(w)) or np.any(w < 0.0) or not np.any(w > 0.0):
            raise ConeMembershipError("weights must be finite, nonnegative and not all zero")
        for row in S:
            Density(row, space)
        if not self.lam > 0.0 or not math.isfinite(self.lam):
            raise DomainError("scale must be finite and positive")
        charged = np.any(w[:, None] * S > 0.0, axis=0)
        if np.any(charged & (self.q_density.values <= 0.0)):
            raise ConeMembershipError("some w_i S_i charges a scenario that Q does not")
        w.setflags(write=False)
        S.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "s_densities", S)

    @property
    def xstar(self) -> np.ndarray:
        """``X*_i = (w_i / lam) dS_i/dP`` as a ``(k, n)`` array."""
        return (self.w[:, None] * self.s_densities).T / self.lam


@dataclass(frozen=True)
class DualReport:
    primal: float
    dual_bound: float
    gap: float
    best: DualVariables | None
    starts_used: int
    iterations: int
    gap_ok: bool
    minimax_ok: bool | None = None


@dataclass(frozen=True)
class MinimaxProbe:
    xstar: RandomVector
    m: float
    lhs: float
    rhs: float
    difference: float
    ok: bool
    x_witness: np.ndarray | None
    density_witness: np.ndarray | None
    x_points: int
    density_points: int


@dataclass(frozen=True)
class SlaterCheck:
    """Outcome of sampling the strict-sublevel hypothesis at finitely many densities."""

    ok: bool
    densities_checked: int
    failures: tuple[np.ndarray, ...] = ()


@dataclass(frozen=True)
class ProbeViolation:
    kind: str
    excess: float
    points: tuple[np.ndarray, ...]


@dataclass(frozen=True)
class ProbeReport:
    trials: int
    mixture_violations: int
    monotone_violations: int
    scalarization_violations: int
    examples: tuple[ProbeViolation, ...] = field(default=())

    @property
    def ok(self) -> bool:
        return self.mixture_violations == 0 and self.monotone_violations == 0 and self.scalarization_violations == 0


# ---------------------------------------------------------------- primal side


def _check_domain(agg: AggregatorSpec, x: RandomVector) -> None:
    if agg.kind is AggregatorKind.EISENBERG_NOE:
        if x.n != agg.network.n:  # type: ignore[union-attr]
            raise ShapeError(f"shock has {x.n} entities for {agg.network.n} banks")  # type: ignore[union-attr]
        if np.any(x.values < 0.0):
            raise DomainError("Eisenberg-Noe shocks must be nonnegative")


def primal_risk(rho: RiskMeasureSpec, agg: AggregatorSpec, x: RandomVector) -> float:
    """``rho`` applied to the scenario-wise aggregate of ``x``."""
    _check_domain(agg, x)
    return rho_eval(rho, aggregate_points(agg, x.values), x.space)


def risk_function(rho: RiskMeasureSpec, agg: AggregatorSpec, space: FiniteProbabilitySpace, n: int) -> ScalarFunctionSpec:
    """``R = rho o Lambda`` as a batch function, for grid searches.

    Points outside the aggregator's domain evaluate to ``+inf``.
    """
    nonneg = agg.nonnegative_domain

    def batch(X: np.ndarray) -> np.ndarray:
        out = np.full(X.shape[0], np.inf)
        ok = np.all(X >= 0.0, axis=(1, 2)) if nonneg else np.ones(X.shape[0], dtype=bool)
        if np.any(ok):
            out[ok] = rho_eval_batch(rho, aggregate_points(agg, X[ok]), space.probs)
        return out

    return ScalarFunctionSpec(batch, space, n, monotonicity=Monotonicity.DECREASING)


def composition_penalty_bruteforce(
    rho: RiskMeasureSpec,
    agg: AggregatorSpec,
    xstar: RandomVector,
    m: float,
    box: Box,
    resolution: int = 41,
):
    """Grid maximisation of ``<X*, -X>`` over ``{R(X) <= m}`` inside ``box``."""
    from .convex_kit import penalty_bruteforce

    f = risk_function(rho, agg, xstar.space, xstar.n)
    return penalty_bruteforce(f, xstar, m, box, resolution=resolution)


# ---------------------------------------------------------------- scalarisations


def _scalar_array(ystar: RandomVector | Density | np.ndarray, k: int) -> np.ndarray:
    if isinstance(ystar, RandomVector):
        y = ystar.scalar_values()
    elif isinstance(ystar, Density):
        y = ystar.values
    else:
        y = np.asarray(ystar, dtype=float).reshape(-1)
    if y.size != k:
        raise ShapeError("ystar must have one entry per scenario")
    if np.any(y < 0.0) or not np.all(np.isfinite(y)):
        raise ConeMembershipError("ystar must be finite and nonnegative")
    return y


def _common_ratio(c: np.ndarray, y: np.ndarray) -> float | None:
    """The constant ``r`` with ``c = r y`` (``c = 0`` where ``y = 0``), if any."""
    pos = y > POSITIVE_TOL
    if np.any(c[~pos] != 0.0):
        return None
    if not np.any(pos):
        return 0.0
    r = c[pos] / y[pos]
    if np.max(r) - np.min(r) > RATIO_TOL * max(1.0, float(np.max(np.abs(r)))):
        return None
    return float(np.mean(r))


def _equal_columns(X: np.ndarray) -> np.ndarray | None:
    c = X[:, 0]
    if np.max(np.abs(X - c[:, None])) > RATIO_TOL * max(1.0, float(np.max(np.abs(X)))):
        return None
    return c


def _scalarization_numeric(agg: AggregatorSpec, y: np.ndarray, X: np.ndarray, level: float, probs: np.ndarray) -> float:
    phi0 = agg.phi_at_zero
    mass = float(probs @ y)
    if math.isfinite(phi0) and level + phi0 * mass < 0.0:
        return -np.inf

    def G(lam: float) -> float:
        pen = expected_perspective(agg, X, lam * y, probs)
        return lam * level + pen

    val, _ = minimize_over_log_scale(G, *SCALE_RANGE)
    return val


def scalarization_penalty(
    agg: AggregatorSpec,
    ystar: RandomVector | Density | np.ndarray,
    xstar: RandomVector,
    level: float,
    numeric: bool = False,
) -> float:
    """Penalty of ``X -> -E[Y* Lambda(X)]`` at ``(X*, level)``.

    Computes ``inf_{lam >= 0} lam * level + E[lam Y* Phi(X*/(lam Y*))]``,
    where ``lam = 0`` stands for the unconstrained supremum of
    ``<X*, -X>`` (zero for ``X* = 0`` or a nonnegative domain, ``+inf``
    otherwise). The sum, total-loss and exponential aggregators are solved
    in closed form and the network aggregator as one LP. ``numeric=True``
    instead runs golden-section search on ``log lam`` over the perspective
    terms, which gives an independent route for every aggregator but the
    sum.
    """
    y = _scalar_array(ystar, xstar.space.size)
    if math.isnan(level):
        raise ValidationError("level must not be NaN")
    return _scalarization_core(agg, y, xstar.values, level, xstar.space.probs, numeric)


def _scalarization_core(agg: AggregatorSpec, y: np.ndarray, X: np.ndarray, level: float, probs: np.ndarray, numeric: bool = False) -> float:
    if np.any(X < 0.0):
        return np.inf
    at_zero = 0.0 if (agg.nonnegative_domain or not np.any(X > 0.0)) else np.inf
    if level == -np.inf:
        return -np.inf
    if level == np.inf:
        return at_zero
    active = np.any(X > 0.0, axis=1)
    if np.any(active & (y <= POSITIVE_TOL)):
        return at_zero
    kind = agg.kind
    if kind is AggregatorKind.SUM:
        c = _equal_columns(X)
        r = None if c is None else _common_ratio(c, y)
        if r is None:
            return at_zero
        if r == 0.0:
            return 0.0 if level >= 0.0 else -np.inf
        return min(at_zero, r * level)
    if numeric:
        return min(at_zero, _scalarization_numeric(agg, y, X, level, probs))
    if kind is AggregatorKind.EISENBERG_NOE:
        return min(at_zero, _network_scalarization_lp(agg, y, X, level, probs))
    if kind is AggregatorKind.TOTAL_LOSS:
        if level < 0.0:
            return -np.inf
        M = X.max(axis=1)
        pos = y > POSITIVE_TOL
        lam_min = float(np.max(M[pos] / y[pos])) if np.any(pos) else 0.0
        return lam_min * level
    # exponential: G(lam) = lam * level - A log(lam) + C
    A = float(probs @ X.sum(axis=1))
    if A == 0.0:
        return 0.0 if level >= 0.0 else -np.inf
    if level <= 0.0:
        return -np.inf
    C = _entropy_term(X, y, probs)
    return A - A * math.log(A / level) + C


def _entropy_term(X: np.ndarray, y: np.ndarray, probs: np.ndarray) -> float:
    """``E[sum_i X*_i log(X*_i / y)]`` over the entries with ``X*_i > 0``."""
    total = 0.0
    for w, row, yw in zip(probs, X, y):
        pos = row > 0.0
        if np.any(pos):
            total += w * float(np.sum(row[pos] * np.log(row[pos] / yw)))
    return total


def scalarization_left_inverse(
    agg: AggregatorSpec,
    ystar: RandomVector | Density | np.ndarray,
    xstar: RandomVector,
    s: float,
) -> float:
    """Left inverse in the level of :func:`scalarization_penalty`.

    Equals ``sup_{nu >= 0} s nu - E[Y* Phi(nu X*/Y*)]``; ``nu = 0`` contributes
    ``-Phi(0) E[Y*]``.
    """
    y = _scalar_array(ystar, xstar.space.size)
    if math.isnan(s):
        raise ValidationError("level must not be NaN")
    if np.any(xstar.values < 0.0):
        raise ConeMembershipError("xstar must be nonnegative")
    return _left_inverse_core(agg, y, xstar.values, s, xstar.space.probs)


def _left_inverse_core(agg: AggregatorSpec, y: np.ndarray, X: np.ndarray, s: float, probs: np.ndarray) -> float:
    phi0 = agg.phi_at_zero
    base = -phi0 * float(probs @ y) if math.isfinite(phi0) else -np.inf
    if s == -np.inf:
        return base if math.isfinite(base) else -np.inf
    if s == np.inf:
        return np.inf if np.any(X > 0.0) else base
    active = np.any(X > 0.0, axis=1)
    if not np.any(active):
        return base
    if np.any(active & (y <= POSITIVE_TOL)):
        return base
    kind = agg.kind
    if kind is AggregatorKind.SUM:
        c = _equal_columns(X)
        r = None if c is None else _common_ratio(c, y)
        return -np.inf if r is None else s / r
    if kind is AggregatorKind.TOTAL_LOSS:
        M = X.max(axis=1)
        nu_max = float(np.min(y[M > 0.0] / M[M > 0.0]))
        return max(0.0, s * nu_max)
    if kind is AggregatorKind.EXPONENTIAL:
        A = float(probs @ X.sum(axis=1))
        C = _entropy_term(X, y, probs)
        return max(base, A * math.exp((s - A - C) / A))
    # the network conjugate is bounded on the nonnegative orthant
    if s > 0.0:
        return np.inf
    return max(base, _network_left_inverse_lp(agg, y, X, s, probs))


def _network_blocks(agg: AggregatorSpec, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    net = agg.network
    n = net.n  # type: ignore[union-attr]
    M = np.eye(n) - net.interbank  # type: ignore[union-attr]
    return np.kron(np.eye(k), M), net.to_society, net.pbar  # type: ignore[union-attr]


def _network_scalarization_lp(agg: AggregatorSpec, y: np.ndarray, X: np.ndarray, level: float, probs: np.ndarray) -> float:
    """Network scalarisation penalty as one LP.

    LP duality gives ``Phi(z) = min{pbar.v : (I - A) mu + v >= a0, 0 <= mu <= z, v >= 0}``,
    so ``lam y Phi(X*/(lam y))`` is the same program with ``a0`` scaled by
    ``lam y`` and ``mu <= X*``. Minimising jointly over ``lam >= 0``, ``mu``
    and ``v`` gives the penalty; an unbounded program means ``-inf``.
    """
    k, n = X.shape
    big, a0, pbar = _network_blocks(agg, k)
    kn = k * n
    c = np.concatenate([[level], np.zeros(kn), np.repeat(probs, n) * np.tile(pbar, k)])
    A = np.hstack([-(y[:, None] * a0[None, :]).reshape(kn, 1), big, np.eye(kn)])
    lp = lp_solver.LinearProgram(
        c=c,
        A=A,
        senses=(">=",) * kn,
        b=np.zeros(kn),
        lo=np.zeros(1 + 2 * kn),
        hi=np.concatenate([[np.inf], X.reshape(-1), np.full(kn, np.inf)]),
        maximize=False,
    )
    sol = lp_solver.solve(lp)
    if sol.status is lp_solver.LpStatus.INFEASIBLE:
        raise SolverError("network scalarisation LP reported infeasible; it always has lam = 0")
    return sol.objective


def _network_left_inverse_lp(agg: AggregatorSpec, y: np.ndarray, X: np.ndarray, s: float, probs: np.ndarray) -> float:
    """``sup_{nu >= 0} s nu - E[y Phi(nu X*/y)]`` as one LP, with ``Phi`` in its dual form."""
    k, n = X.shape
    big, a0, pbar = _network_blocks(agg, k)
    kn = k * n
    c = np.concatenate([[s], np.zeros(kn), -np.repeat(probs, n) * np.tile(pbar, k)])
    cover = np.hstack([np.zeros((kn, 1)), big, np.eye(kn)])
    cap = np.hstack([-X.reshape(kn, 1), np.eye(kn), np.zeros((kn, kn))])
    lp = lp_solver.LinearProgram(
        c=c,
        A=np.vstack([cover, cap]),
        senses=(">=",) * kn + ("<=",) * kn,
        b=np.concatenate([(y[:, None] * a0[None, :]).reshape(-1), np.zeros(kn)]),
        lo=np.zeros(1 + 2 * kn),
        hi=np.full(1 + 2 * kn, np.inf),
    )
    sol = lp_solver.solve(lp)
    if sol.status is lp_solver.LpStatus.INFEASIBLE:
        raise SolverError("network left-inverse LP reported infeasible; nu = 0 is always feasible")
    return sol.objective


# ---------------------------------------------------------------- search machinery


@dataclass(frozen=True)
class _Block:
    kind: str  # "simplex", "unit" or "nonneg"
    size: int


class _Layout:
    def __init__(self, blocks: list[_Block]):
        self.blocks = [b for b in blocks]
        self.offsets = np.cumsum([0] + [b.size for b in blocks])
        self.dim = int(self.offsets[-1])

    def split(self, theta: np.ndarray) -> list[np.ndarray]:
        return [theta[self.offsets[i] : self.offsets[i + 1]] for i in range(len(self.blocks))]

    def project(self, theta: np.ndarray) -> np.ndarray:
        parts = []
        for b, v in zip(self.blocks, self.split(theta)):
            if b.kind == "simplex":
                parts.append(project_simplex(v))
            elif b.kind == "unit":
                parts.append(np.clip(v, 0.0, 1.0))
            else:
                parts.append(np.maximum(v, 0.0))
        return np.concatenate(parts)

    def random(self, rng: np.random.Generator) -> np.ndarray:
        parts = []
        for b in self.blocks:
            if b.kind == "simplex":
                parts.append(rng.dirichlet(np.ones(b.size)))
            elif b.kind == "unit":
                parts.append(rng.uniform(size=b.size))
            else:
                parts.append(rng.exponential(size=b.size))
        return np.concatenate(parts)

    def directions(self) -> list[np.ndarray]:
        """Pairwise mass transfers inside simplex blocks, coordinate moves elsewhere."""
        dirs = []
        for b, start in zip(self.blocks, self.offsets[:-1]):
            for i, j in itertools.permutations(range(b.size), 2) if b.kind == "simplex" else []:
                d = np.zeros(self.dim)
                d[start + i], d[start + j] = 1.0, -1.0
                dirs.append(d)
            if b.kind != "simplex":
                for i in range(b.size):
                    for sgn in (1.0, -1.0):
                        d = np.zeros(self.dim)
                        d[start + i] = sgn
                        dirs.append(d)
        return dirs


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto ``{q >= 0, sum q = 1}``."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    r = ind[u - css / ind > 0.0][-1]
    tau = css[r - 1] / r
    return np.maximum(v - tau, 0.0)


def _safe(f: Callable[[np.ndarray], float]) -> Callable[[np.ndarray], float]:
    def g(theta: np.ndarray) -> float:
        v = float(f(theta))
        if math.isnan(v):
            log.debug("candidate discarded: objective returned NaN")
            return -np.inf
        return v

    return g


def _fd_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, v: float) -> np.ndarray:
    g = np.zeros_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = FD_STEP
        up, dn = f(x + e), f(x - e)
        if math.isfinite(up) and math.isfinite(dn):
            g[j] = (up - dn) / (2.0 * FD_STEP)
        elif math.isfinite(up):
            g[j] = (up - v) / FD_STEP
        elif math.isfinite(dn):
            g[j] = (v - dn) / FD_STEP
    return g


def _ascend(f, layout: _Layout, x: np.ndarray, iterations: int) -> tuple[float, np.ndarray, int]:
    """Projected gradient ascent with Armijo backtracking."""
    x = layout.project(x)
    v = f(x)
    step = 1.0
    stall = 0
    it = 0
    for it in range(1, iterations + 1):
        if not math.isfinite(v):
            break
        g = _fd_gradient(f, x, v)
        if not np.all(np.isfinite(g)) or np.linalg.norm(g) < 1e-12:
            break
        t = step
        moved = False
        for _ in range(40):
            cand = layout.project(x + t * g)
            dx = cand - x
            if np.linalg.norm(dx) < 1e-15:
                break
            vc = f(cand)
            if vc > v and vc >= v + ARMIJO * float(g @ dx):
                moved = True
                break
            t *= 0.5
        if not moved:
            break
        gain = vc - v
        x, v = cand, vc
        step = min(4.0 * t, 1e3)
        stall = stall + 1 if gain <= 1e-13 * max(1.0, abs(v)) else 0
        if stall >= 3:
            break
    return v, x, it


def _polish(f, layout: _Layout, x: np.ndarray, v: float, step: float = 0.05, min_step: float = 1e-11) -> tuple[float, np.ndarray]:
    """Compass search along :meth:`_Layout.directions`; handles kinks the gradient misses."""
    dirs = layout.directions()
    budget = 20_000
    while step > min_step and budget > 0:
        improved = False
        for d in dirs:
            cand = layout.project(x + step * d)
            vc = f(cand)
            budget -= 1
            if vc > v:
                x, v = cand, vc
                improved = True
                break
        if not improved:
            step *= 0.5
    return v, x


def _multistart(
    f: Callable[[np.ndarray], float],
    layout: _Layout,
    first: np.ndarray | list[np.ndarray],
    settings: OptimizerSettings,
    stop_at: float = np.inf,
) -> tuple[float, np.ndarray, int, int]:
    """Maximise ``f`` from fixed starts followed by seeded random ones.

    ``first`` is one start or a list of them; random starts fill up to
    ``settings.starts`` in total. Fixed starts are polished as soon as they
    finish; random ones only if they end among the best three. Returns
    ``(value, argmax, starts used, total iterations)``. A start that reaches
    ``stop_at`` ends the search.
    """
    f = _safe(f)
    fixed = [first] if isinstance(first, np.ndarray) else list(first)
    children = np.random.SeedSequence(settings.seed).spawn(settings.starts)
    results: list[tuple[float, np.ndarray, bool]] = []
    total_it = 0
    used = 0
    for i, child in enumerate(children):
        x0 = fixed[i] if i < len(fixed) else layout.random(np.random.default_rng(child))
        v, x, it = _ascend(f, layout, x0, settings.iterations)
        polished = i < len(fixed) and v > -np.inf and v < stop_at
        if polished:
            v, x = _polish(f, layout, x, v)
        total_it += it
        used += 1
        results.append((v, x, polished))
        if v >= stop_at:
            break
    results.sort(key=lambda r: r[0], reverse=True)
    best_v, best_x, _ = results[0]
    for v, x, done in results[:3]:
        if v == -np.inf or done:
            continue
        pv, px = _polish(f, layout, x, v)
        if pv > best_v:
            best_v, best_x = pv, px
    return best_v, best_x, used, total_it


def _density(q: np.ndarray, probs: np.ndarray) -> np.ndarray | None:
    q = np.maximum(q, 0.0)
    t = q.sum()
    if not t > 0.0:
        return None
    return (q / t) / probs


# ---------------------------------------------------------------- composition penalty


def _check_xstar(agg: AggregatorSpec, xstar: RandomVector) -> None:
    if np.any(xstar.values < 0.0):
        raise ConeMembershipError("xstar must be nonnegative")
    if not np.any(xstar.values > 0.0):
        raise DomainError("xstar must not be the zero functional")
    if agg.kind is AggregatorKind.EISENBERG_NOE and xstar.n != agg.network.n:  # type: ignore[union-attr]
        raise ShapeError(f"xstar has {xstar.n} entities for {agg.network.n} banks")  # type: ignore[union-attr]


def slater_probe(
    rho: RiskMeasureSpec,
    agg: AggregatorSpec,
    space: FiniteProbabilitySpace,
    m: float,
    samples: int = 16,
    seed: int = 0,
) -> SlaterCheck:
    """Sample the hypothesis ``alpha_rho(d, m) > -Phi(0)`` that makes the penalty formula exact.

    Checks the uniform density, every scenario vertex and ``samples``
    seeded random densities. Passing is evidence, not a proof.
    """
    k = space.size
    probs = space.probs
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    qs = [probs.copy()] + [np.eye(k)[i] for i in range(k)] + [rng.dirichlet(np.ones(k)) for _ in range(samples)]
    bound = -agg.phi_at_zero
    failures = []
    for q in qs:
        d = q / probs
        a = penalty_closed_form(rho, d, m, probs)
        if not a > bound:
            failures.append(d)
    return SlaterCheck(not failures, len(qs), tuple(failures))


def _penalty_unit(rho, agg, unit: RandomVector, m: float, settings: OptimizerSettings) -> float:
    space = unit.space
    probs = space.probs
    X = unit.values
    if agg.kind is AggregatorKind.SUM:
        c = _equal_columns(X)
        if c is None:
            return np.inf
        Ec = float(probs @ c)
        return Ec * penalty_closed_form(rho, c / Ec, m, probs)

    def objective(q: np.ndarray) -> float:
        d = _density(q, probs)
        if d is None:
            return -np.inf
        level = penalty_closed_form(rho, d, m, probs)
        return -_scalarization_core(agg, d, X, level, probs)

    best, _, _, _ = _multistart(objective, _Layout([_Block("simplex", space.size)]), probs.copy(), settings, stop_at=np.inf)
    val = -best
    if agg.kind is AggregatorKind.EISENBERG_NOE:
        val = min(0.0, val)
    return val


def composition_penalty(
    rho: RiskMeasureSpec,
    agg: AggregatorSpec,
    xstar: RandomVector,
    m: float,
    settings: OptimizerSettings | None = None,
    check_hypothesis: bool = True,
) -> float:
    """Penalty function of ``R = rho o Lambda`` at ``(X*, m)``.

    Minimises ``scalarization_penalty(d, X*, alpha_rho(d, m))`` over
    densities ``d``. The sum aggregator is reduced in closed form; other
    aggregators use :class:`OptimizerSettings`-controlled multi-start search
    on the probability simplex. The network aggregator caps the value at 0.

    The formula is an upper bound in general and exact when
    ``alpha_rho(d, m) > -Phi(0)`` for all densities. A ``-inf`` value is
    therefore always exact; a finite or ``+inf`` value is returned only if
    :func:`slater_probe` passes (set ``check_hypothesis=False`` to skip).

    Raises
    ------
    PreconditionError
        If the sampled hypothesis check fails and the value is not ``-inf``.
    """
    settings = settings or OptimizerSettings()
    _check_xstar(agg, xstar)
    if math.isnan(m):
        raise ValidationError("level must not be NaN")
    if m == -np.inf:
        return -np.inf
    if m == np.inf:
        return 0.0 if agg.nonnegative_domain else np.inf
    scale, unit = normalize_dual(xstar)
    val = _penalty_unit(rho, agg, unit, m, settings)
    if val == -np.inf:
        return val
    if check_hypothesis:
        probe = slater_probe(rho, agg, xstar.space, m, seed=settings.seed)
        if not probe.ok:
            raise PreconditionError(
                f"strict sublevel hypothesis fails at level {m!r} "
                f"({len(probe.failures)} of {probe.densities_checked} sampled densities)"
            )
    return scale * val if math.isfinite(val) else val


def composition_left_inverse(
    rho: RiskMeasureSpec,
    agg: AggregatorSpec,
    xstar: RandomVector,
    s: float,
    settings: OptimizerSettings | None = None,
) -> float:
    """``inf{m : composition_penalty(X*, m) >= s}`` through the dual formula.

    Maximises ``alpha_rho^{-l}(d, scalarization_left_inverse(d, X*, s))`` over
    densities ``d``. The ``nu = 0`` branch ``-Phi(0)`` enters through the
    inner left inverse, so bounded aggregators get both branches.
    """
    settings = settings or OptimizerSettings()
    _check_xstar(agg, xstar)
    if math.isnan(s):
        raise ValidationError("level must not be NaN")
    if s == -np.inf:
        return -np.inf
    scale, unit = normalize_dual(xstar)
    su = s / scale if math.isfinite(s) else s
    if agg.kind is AggregatorKind.EISENBERG_NOE and su > 0.0:
        return np.inf
    space = unit.space
    probs = space.probs
    if agg.kind is AggregatorKind.SUM:
        c = _equal_columns(unit.values)
        if c is None:
            return -np.inf
        Ec = float(probs @ c)
        return penalty_left_inverse_closed_form(rho, c / Ec, su / Ec, probs)

    def objective(q: np.ndarray) -> float:
        d = _density(q, probs)
        if d is None:
            return -np.inf
        t = _left_inverse_core(agg, d, unit.values, su, probs)
        return penalty_left_inverse_closed_form(rho, d, t, probs)

    best, _, _, _ = _multistart(objective, _Layout([_Block("simplex", space.size)]), probs.copy(), settings)
    return best


# ---------------------------------------------------------------- dual representation


def dual_objective(rho: RiskMeasureSpec, agg: AggregatorSpec, x: RandomVector, dual: DualVariables) -> float:
    """``alpha_rho^{-l}(dQ/dP, -E_Q[Phi(w dS/dQ)] - w^T E_S[X])`` at one candidate."""
    _check_domain(agg, x)
    space = x.space
    if dual.q_density.space != space:
        raise ShapeError("dual variables live on a different probability space")
    if dual.w.size != x.n:
        raise ShapeError(f"dual weights have {dual.w.size} entries for {x.n} entities")
    return _dual_value(rho, agg, x.values, dual.xstar, dual.q_density.values, space.probs)


def _dual_value(rho, agg, X: np.ndarray, xstar: np.ndarray, d: np.ndarray, probs: np.ndarray) -> float:
    pen = expected_perspective(agg, xstar, d, probs)
    if pen == np.inf:
        s = -np.inf
    else:
        s = -pen - float(probs @ np.sum(xstar * X, axis=1))
    return penalty_left_inverse_closed_form(rho, d, s, probs)


class _DualParametrisation:
    """Maps a flat search vector to ``(Q, Z)`` with ``Z = w dS/dQ``.

    Writing ``X* = Z dQ/dP`` makes every ``w_i S_i`` absolutely continuous
    with respect to ``Q`` by construction. The sum aggregator fixes
    ``Z = 1``; the total-loss conjugate is finite exactly on ``0 <= Z <= 1``,
    so ``Z`` lives in the unit box there; otherwise ``Z >= 0``.
    """

    def __init__(self, agg: AggregatorSpec, k: int, n: int):
        self.kind = agg.kind
        self.k, self.n = k, n
        blocks = [_Block("simplex", k)]
        if self.kind is AggregatorKind.TOTAL_LOSS:
            blocks.append(_Block("unit", k * n))
        elif self.kind is not AggregatorKind.SUM:
            blocks.append(_Block("nonneg", k * n))
        self.layout = _Layout(blocks)

    def first(self, probs: np.ndarray) -> np.ndarray:
        """``Q = P`` and ``Z = 1``, that is ``S_i = P`` and ``w = 1``."""
        if self.kind is AggregatorKind.SUM:
            return probs.copy()
        return np.concatenate([probs, np.ones(self.k * self.n)])

    def starts(self, probs: np.ndarray, X: np.ndarray, agg: AggregatorSpec) -> list[np.ndarray]:
        """``Q = P`` with ``Z = 1``, then ``Q = P`` with ``Z`` a supergradient of ``Lambda`` at ``X``.

        At a supergradient the conjugate term satisfies Fenchel-Young with
        equality, so the dual argument becomes ``E_Q[-Lambda(X)]`` and the
        remaining search over ``Q`` is the scalar dual of ``rho``.
        """
        out = [self.first(probs)]
        if self.kind is not AggregatorKind.SUM:
            Z = aggregator_supergradient(agg, X)
            out.append(self.layout.project(np.concatenate([probs, Z.reshape(-1)])))
        return out

    def decode(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray] | None:
        """Returns ``(q, Z)`` or ``None`` for a degenerate measure."""
        parts = self.layout.split(theta)
        q = np.maximum(parts[0], 0.0)
        t = q.sum()
        if not t > 0.0:
            return None
        q = q / t
        if self.kind is AggregatorKind.SUM:
            return q, np.ones((self.k, self.n))
        Z = np.maximum(parts[1], 0.0).reshape(self.k, self.n)
        if self.kind is AggregatorKind.TOTAL_LOSS:
            Z = np.minimum(Z, 1.0)
        return q, Z


def aggregator_supergradient(agg: AggregatorSpec, X: np.ndarray) -> np.ndarray:
    """A supergradient of the aggregation function at each row of ``X``.

    For the network the row prices of the clearing LP are the sensitivities
    of the payment to society with respect to each bank's shock.
    """
    X = np.asarray(X, dtype=float)
    if agg.kind is AggregatorKind.SUM:
        return np.ones_like(X)
    if agg.kind is AggregatorKind.TOTAL_LOSS:
        return (X <= 0.0).astype(float)
    if agg.kind is AggregatorKind.EXPONENTIAL:
        return np.exp(-X - 1.0)
    return np.array([clearing_lp_prices(agg.network, row) for row in X])  # type: ignore[arg-type]


def _dual_from(q: np.ndarray, Z: np.ndarray, space: FiniteProbabilitySpace) -> DualVariables:
    """Split ``X* = Z dQ/dP`` into weights ``w_i = E[X*_i]`` and densities ``dS_i/dP``."""
    probs = space.probs
    d = q / probs
    xstar = Z * d[:, None]
    w = probs @ xstar
    S = np.empty((Z.shape[1], space.size))
    for i in range(Z.shape[1]):
        S[i] = xstar[:, i] / w[i] if w[i] > 0.0 else d
    if not np.any(w > 0.0):
        w = np.full_like(w, 1e-12)
    return DualVariables(w, S, Density(d, space))


def _weak_duality_guard(primal: float, value: float) -> None:
    if value > primal + WEAK_DUALITY_TOL:
        raise ContractViolation(f"dual value {value!r} exceeds primal {primal!r}: weak duality broken")


def dual_risk(
    rho: RiskMeasureSpec,
    agg: AggregatorSpec,
    x: RandomVector,
    settings: OptimizerSettings | None = None,
) -> DualReport:
    """Maximise :func:`dual_objective` and compare with :func:`primal_risk`.

    The reported ``dual_bound`` is the objective re-evaluated at the returned
    :class:`DualVariables`, so it is a value actually attained from inside.
    ``gap_ok`` holds when ``primal - dual_bound <= max(1e-3, 1e-3 |primal|)``.
    """
    settings = settings or OptimizerSettings()
    primal = primal_risk(rho, agg, x)
    space = x.space
    probs = space.probs
    X = x.values
    par = _DualParametrisation(agg, space.size, x.n)

    def objective(theta: np.ndarray) -> float:
        dec = par.decode(theta)
        if dec is None:
            return -np.inf
        q, Z = dec
        d = q / probs
        return _dual_value(rho, agg, X, Z * d[:, None], d, probs)

    value, theta, used, iters = _multistart(objective, par.layout, par.starts(probs, X, agg), settings, stop_at=primal - STOP_TOL * max(1.0, abs(primal)))
    best = None
    bound = -np.inf
    dec = par.decode(theta)
    if dec is not None and value > -np.inf:
        try:
            best = _dual_from(dec[0], dec[1], space)
            bound = dual_objective(rho, agg, x, best)
        except (ValidationError, ContractViolation) as exc:
            log.debug("best candidate rejected: %s", exc)
            best, bound = None, -np.inf
    _weak_duality_guard(primal, bound)
    if primal == bound:
        gap = 0.0
    else:
        gap = primal - bound
    gap_ok = bool(gap <= max(GAP_ABS_TOL, GAP_REL_TOL * abs(primal))) if math.isfinite(gap) else gap == 0.0
    return DualReport(primal, bound, gap, best, used, iters, gap_ok)


def random_dual_variables(
    space: FiniteProbabilitySpace,
    n: int,
    rng: np.random.Generator,
    w_scale: float = 2.0,
) -> DualVariables:
    """A random candidate with ``Q`` dominating every ``S_i``.

    Half of the draws take ``S_i = Q`` and ``w = 1``, the only finite choice
    for the sum aggregator; the rest are unconstrained.
    """
    k = space.size
    probs = space.probs
    if rng.uniform() < 0.5:
        q = rng.dirichlet(np.ones(k))
        S = np.tile(q, (n, 1))
        w = np.ones(n)
    else:
        S = rng.dirichlet(np.ones(k), size=n)
        tau = rng.uniform(0.05, 1.0)
        q = (1.0 - tau) * rng.dirichlet(np.ones(k)) + tau * S.mean(axis=0)
        w = rng.exponential(w_scale, size=n)
    q = q / q.sum()
    return DualVariables(w, S / probs, Density(q / probs, space))


# ---------------------------------------------------------------- minimax verification


def density_grid(k: int, resolution: int) -> np.ndarray:
    """Probability vectors whose entries are multiples of ``1/(resolution-1)``."""
    steps = max(resolution - 1, 1)
    rows = [c for c in itertools.product(range(steps + 1), repeat=k - 1) if sum(c) <= steps]
    out = np.array([list(c) + [steps - sum(c)] for c in rows], dtype=float) / steps
    return out.reshape(-1, k)


def verify_minimax(
    rho: RiskMeasureSpec,
    agg: AggregatorSpec,
    xstar: RandomVector,
    m: float,
    box: tuple[float, float] = (-3.0, 3.0),
    x_resolution: int = 21,
    density_resolution: int = 21,
    densities: np.ndarray | None = None,
) -> MinimaxProbe:
    """Grid comparison of sup-inf and inf-sup for the penalty of ``rho o Lambda``.

    With ``F(x, d)`` the statement ``E[d (-Lambda(x))] <= alpha_rho(d, m)``,
    the left side is the best ``<X*, -x>`` over grid points that satisfy
    ``F`` for every grid density and the right side is the smallest, over
    grid densities, of the best ``<X*, -x>`` among points satisfying ``F``
    for that density. ``ok`` when they differ by at most
    ``max(2e-2, 1e-2 |rhs|)``. Pass ``densities`` (probability vectors) to
    override the density grid.
    """
    space = xstar.space
    k, n = xstar.shape
    if k > 3 or n > 2:
        raise ValidationError("minimax verification is limited to 3 scenarios and 2 entities")
    probs = space.probs
    lo, hi = float(box[0]), float(box[1])
    if agg.nonnegative_domain:
        lo = max(lo, 0.0)
    axis = np.linspace(lo, hi, x_resolution)
    Q = density_grid(k, density_resolution) if densities is None else np.asarray(densities, dtype=float).reshape(-1, k)
    D = Q / probs
    alpha = np.array([penalty_closed_form(rho, d, m, probs) for d in D])
    total = x_resolution ** (k * n)
    lhs, xw = -np.inf, None
    per_density = np.full(D.shape[0], -np.inf)
    for start in range(0, total, 20_000):
        idx = np.unravel_index(np.arange(start, min(start + 20_000, total)), (x_resolution,) * (k * n))
        pts = axis[np.stack(idx, axis=1)].reshape(-1, k, n)
        lam = aggregate_points(agg, pts)
        obj = -np.einsum("k,nki,ki->n", probs, pts, xstar.values)
        with np.errstate(invalid="ignore"):
            F = -(lam * probs) @ D.T <= alpha[None, :] + 1e-12
        feasible_all = np.all(F, axis=1)
        if np.any(feasible_all):
            i = int(np.argmax(np.where(feasible_all, obj, -np.inf)))
            if obj[i] > lhs:
                lhs, xw = float(obj[i]), pts[i]
        per_density = np.maximum(per_density, np.where(F, obj[:, None], -np.inf).max(axis=0))
    j = int(np.argmin(per_density))
    rhs, dw = float(per_density[j]), D[j]
    if math.isinf(lhs) or math.isinf(rhs):
        diff = 0.0 if lhs == rhs else np.inf
    else:
        diff = abs(lhs - rhs)
    ok = diff <= max(MINIMAX_ABS_TOL, MINIMAX_REL_TOL * abs(rhs)) if math.isfinite(diff) else False
    return MinimaxProbe(xstar, m, lhs, rhs, diff, bool(ok), xw, dw, total, D.shape[0])


# ---------------------------------------------------------------- quasiconvexity probes


RiskLike = RiskMeasureSpec | Callable[[np.ndarray, np.ndarray], float]


def _rho_batch(rho: RiskLike, Y: np.ndarray, probs: np.ndarray) -> np.ndarray:
    if isinstance(rho, RiskMeasureSpec):
        return rho_eval_batch(rho, Y, probs)
    return np.array([float(rho(y, probs)) for y in Y])


def quasiconvexity_probe(
    rho: RiskLike,
    agg: AggregatorSpec,
    space: FiniteProbabilitySpace,
    n: int | None = None,
    trials: int = 200,
    seed: int = 0,
    box: tuple[float, float] = (-2.0, 2.0),
    max_examples: int = 5,
) -> ProbeReport:
    """Random checks that ``R = rho o Lambda`` is quasiconvex and decreasing.

    Each trial draws ``x1, x2`` in ``box`` (clipped at 0 for the network
    aggregator), a weight ``t`` and a density ``d``, and tests

    * ``R(t x1 + (1-t) x2) <= max(R(x1), R(x2))``,
    * ``R(x1 + u) <= R(x1)`` for a nonnegative increment ``u``,
    * ``E[d Lambda(t x1 + (1-t) x2)] >= min(E[d Lambda(x1)], E[d Lambda(x2)])``,

    each with slack ``1e-8``. ``rho`` may be a callable
    ``(values, probs) -> float`` for testing the probe itself.
    """
    if n is None:
        n = agg.network.n if agg.network is not None else 2  # type: ignore[union-attr]
    k = space.size
    probs = space.probs
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    lo, hi = box
    if agg.nonnegative_domain:
        lo = max(lo, 0.0)
    x1 = rng.uniform(lo, hi, size=(trials, k, n))
    x2 = rng.uniform(lo, hi, size=(trials, k, n))
    t = rng.uniform(size=(trials, 1, 1))
    mix = t * x1 + (1.0 - t) * x2
    up = x1 + rng.uniform(0.0, hi - lo, size=(trials, k, n))
    d = rng.dirichlet(np.ones(k), size=trials) / probs

    L1, L2, Lm, Lu = (aggregate_points(agg, a) for a in (x1, x2, mix, up))
    R1, R2, Rm, Ru = (_rho_batch(rho, L, probs) for L in (L1, L2, Lm, Lu))
    with np.errstate(invalid="ignore"):
        mix_excess = Rm - np.maximum(R1, R2)
        mono_excess = Ru - R1
    mix_excess = np.where(np.isnan(mix_excess), 0.0, mix_excess)
    mono_excess = np.where(np.isnan(mono_excess), 0.0, mono_excess)
    h1, h2, hm = ((L * probs * d).sum(axis=1) for L in (L1, L2, Lm))
    scal_excess = np.minimum(h1, h2) - hm

    examples: list[ProbeViolation] = []
    counts = []
    for kind, excess, pts in (
        ("mixture", mix_excess, (x1, x2, mix)),
        ("monotone", mono_excess, (x1, up)),
        ("scalarization", scal_excess, (x1, x2, mix)),
    ):
        bad = np.flatnonzero(excess > PROBE_TOL)
        counts.append(int(bad.size))
        for i in bad[: max(0, max_examples - len(examples))]:
            examples.append(ProbeViolation(kind, float(excess[i]), tuple(p[i] for p in pts)))
    return ProbeReport(trials, counts[0], counts[1], counts[2], tuple(examples))
