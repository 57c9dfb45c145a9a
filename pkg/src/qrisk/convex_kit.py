"""Penalty functions, conjugates and left inverses of a single function.

For ``f`` on random vectors, the penalty function is

    alpha_f(x*, m) = sup { <x*, -x> : f(x) <= m },

the support function of the negated ``m``-sublevel set. Its left inverse in
the level is ``alpha^{-l}(x*, s) = inf { m : alpha(x*, m) >= s }``.

Two routes are provided throughout: a brute-force grid search that only
uses function values, and a convex-analytic route through the conjugate
``f*`` that applies when ``f`` is convex. Tests compare the two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from . import lp_solver
from .errors import (
    ContractViolation,
    PreconditionError,
    ShapeError,
    UndefinedValueError,
    UnsupportedSetError,
    ValidationError,
)
from .prob_core import FiniteProbabilitySpace, RandomVector

MONOTONE_TOL = 1e-7
BISECT_TOL = 1e-9
EXPAND_LIMIT = 2.0**60
LAMBDA_RANGE = (1e-8, 1e8)

_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class Convexity(str, Enum):
    CONVEX = "convex"
    QUASICONVEX = "quasiconvex"
    UNKNOWN = "unknown"


class Monotonicity(str, Enum):
    DECREASING = "decreasing"
    INCREASING = "increasing"
    NONE = "none"


class Method(str, Enum):
    BRUTEFORCE = "bruteforce"
    CONVEX_DUAL = "convex-dual"
    CLOSED_FORM = "closed-form"


@dataclass(frozen=True)
class Box:
    """Axis-aligned box of ``(k, n)`` arrays; bounds broadcast."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self) -> None:
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        lo, hi = np.broadcast_arrays(lo, hi)
        if np.any(lo > hi):
            raise ValidationError("box needs lo <= hi")
        object.__setattr__(self, "lo", lo.copy())
        object.__setattr__(self, "hi", hi.copy())

    @classmethod
    def cube(cls, shape: tuple[int, int], half_width: float) -> "Box":
        return cls(np.full(shape, -half_width), np.full(shape, half_width))

    def shaped(self, shape: tuple[int, int]) -> "Box":
        return Box(np.broadcast_to(self.lo, shape), np.broadcast_to(self.hi, shape))

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi)))


@dataclass(frozen=True)
class ScalarFunctionSpec:
    """An extended-real function on ``(k, n)`` random vectors.

    ``evaluate_batch`` maps an ``(N, k, n)`` stack to ``N`` values. Points
    outside ``domain`` evaluate to ``+inf``. ``conjugate`` optionally gives
    ``f*(x*) = sup_x <x*, x> - f(x)`` on ``(k, n)`` arrays; the convexity and
    monotonicity tags are assertions that the tests probe.
    """

    evaluate_batch: Callable[[np.ndarray], np.ndarray]
    space: FiniteProbabilitySpace
    n: int = 1
    convexity: Convexity = Convexity.UNKNOWN
    monotonicity: Monotonicity = Monotonicity.NONE
    domain: Box | None = None
    conjugate: Callable[[np.ndarray], float] | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return (self.space.size, self.n)

    @classmethod
    def from_pointwise(cls, fun: Callable[[np.ndarray], float], space: FiniteProbabilitySpace, n: int = 1, **kw):
        """Wrap a function of one ``(k, n)`` array."""

        def batch(X: np.ndarray) -> np.ndarray:
            return np.array([fun(x) for x in X], dtype=float)

        return cls(batch, space, n, **kw)

    def batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[1:] != self.shape:
            raise ShapeError(f"expected points of shape {self.shape}, got {X.shape[1:]}")
        vals = np.asarray(self.evaluate_batch(X), dtype=float).reshape(-1)
        if np.any(np.isnan(vals)):
            raise ContractViolation("function returned NaN")
        if self.domain is not None:
            box = self.domain.shaped(self.shape)
            inside = np.all((X >= box.lo) & (X <= box.hi), axis=(1, 2))
            vals = np.where(inside, vals, np.inf)
        return vals

    def __call__(self, x: RandomVector | np.ndarray) -> float:
        arr = x.values if isinstance(x, RandomVector) else np.asarray(x, dtype=float).reshape(self.shape)
        return float(self.batch(arr[None])[0])


@dataclass(frozen=True)
class PenaltyValue:
    value: float
    method: Method
    attained_at: np.ndarray | None = None
    at_box_boundary: bool = False


@dataclass(frozen=True)
class ConjugateValue:
    value: float
    argmax: np.ndarray | None
    exact: bool


# ---------------------------------------------------------------- grids


def _weights(space: FiniteProbabilitySpace, shape: tuple[int, int]) -> np.ndarray:
    return np.broadcast_to(space.probs[:, None], shape)


def _grid_chunks(lo: np.ndarray, hi: np.ndarray, resolution: int, chunk: int = 200_000):
    """Yield ``(M, d)`` blocks of a regular grid over the flattened box."""
    d = lo.size
    total = resolution**d
    if total > 50_000_000:
        raise ValidationError(f"grid of {resolution}^{d} points is too large for brute force")
    axes = [np.linspace(l, h, resolution) if h > l else np.array([l]) for l, h in zip(lo, hi)]
    sizes = [a.size for a in axes]
    total = int(np.prod(sizes))
    for start in range(0, total, chunk):
        idx = np.unravel_index(np.arange(start, min(start + chunk, total)), sizes)
        yield np.stack([axes[i][idx[i]] for i in range(d)], axis=1)


def grid_maximize(
    score: Callable[[np.ndarray], np.ndarray],
    box: Box,
    resolution: int = 41,
    refine_rounds: int = 3,
    candidates: int = 5,
) -> tuple[float, np.ndarray | None, bool]:
    """Maximise ``score`` over a grid, then refine locally.

    ``score`` receives ``(M, k, n)`` points and returns ``-inf`` for
    infeasible ones. The best few coarse points are each refined by a
    window search: the window follows the incumbent while it sits on the
    window edge and shrinks otherwise, ``refine_rounds`` times. Returns the
    best value, its point, and whether that point touches the outer box.
    """
    shape = box.lo.shape
    lo0, hi0 = box.lo.reshape(-1), box.hi.reshape(-1)
    if not box.finite:
        raise ValidationError("grid search needs a finite box")
    d = lo0.size
    pool_v: list[float] = []
    pool_x: list[np.ndarray] = []
    for pts in _grid_chunks(lo0, hi0, resolution):
        vals = score(pts.reshape((-1,) + shape))
        top = np.argsort(vals)[::-1][:candidates]
        for i in top:
            if vals[i] > -np.inf:
                pool_v.append(float(vals[i]))
                pool_x.append(pts[i].copy())
    if not pool_x:
        return -np.inf, None, False
    order = np.argsort(pool_v)[::-1][:candidates]
    best, best_x = pool_v[order[0]], pool_x[order[0]]
    step0 = (hi0 - lo0) / max(resolution - 1, 1)
    # each refinement round aims for a twentyfold finer mesh
    target = step0 * 0.05**refine_rounds
    fine = 41 if d <= 2 else (11 if d == 3 else 7)
    for oi in order:
        x, v = pool_x[oi], pool_v[oi]
        w = step0.copy()
        moves = 0
        while np.any(w > target) and moves < 400:
            lo = np.maximum(lo0, x - w)
            hi = np.minimum(hi0, x + w)
            pts = np.concatenate(list(_grid_chunks(lo, hi, fine)))
            vals = score(pts.reshape((-1,) + shape))
            i = int(np.argmax(vals))
            if vals[i] > v:
                x, v = pts[i].copy(), float(vals[i])
                moves += 1
                continue
            w = 2.0 * w / (fine - 1)
        if v > best:
            best, best_x = v, x
    span = np.maximum(hi0 - lo0, 1e-300)
    edge = bool(np.any((np.abs(best_x - lo0) <= 1e-12 * span) | (np.abs(best_x - hi0) <= 1e-12 * span)))
    return best, best_x.reshape(shape), edge


def minimize_over_log_scale(
    fun: Callable[[float], float],
    lo: float = LAMBDA_RANGE[0],
    hi: float = LAMBDA_RANGE[1],
    scan: int = 161,
    tol: float = 1e-12,
) -> tuple[float, float]:
    """Minimise ``fun`` over ``[lo, hi]`` through ``t = log(lambda)``.

    A coarse scan in ``t`` locates the best cell; golden-section search then
    refines inside the neighbouring cells. Designed for functions that are
    unimodal in ``lambda`` but may be ``+inf`` on part of the range.
    Returns ``(min value, argmin)``.
    """

    def g(t: float) -> float:
        v = float(fun(math.exp(t)))
        return np.inf if math.isnan(v) else v

    ts = np.linspace(math.log(lo), math.log(hi), scan)
    vals = np.array([g(t) for t in ts])
    i = int(np.argmin(vals))
    best_t, best_v = float(ts[i]), float(vals[i])
    if not np.isfinite(best_v) and best_v > 0:
        return np.inf, math.exp(best_t)
    a = float(ts[max(i - 1, 0)])
    b = float(ts[min(i + 1, scan - 1)])
    c = b - _PHI * (b - a)
    d = a + _PHI * (b - a)
    fc, fd = g(c), g(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _PHI * (b - a)
            fc = g(c)
        else:
            a, c, fc = c, d, fd
            d = a + _PHI * (b - a)
            fd = g(d)
    for t, v in ((c, fc), (d, fd)):
        if v < best_v:
            best_t, best_v = t, v
    return best_v, math.exp(best_t)


def maximize_over_log_scale(fun: Callable[[float], float], **kw) -> tuple[float, float]:
    v, arg = minimize_over_log_scale(lambda t: -fun(t), **kw)
    return -v, arg


# ---------------------------------------------------------------- support functions


@dataclass(frozen=True)
class VertexSet:
    """Finite point set; its support function equals that of its hull."""

    points: np.ndarray  # (N, k, n)


@dataclass(frozen=True)
class BoxSet:
    lo: np.ndarray
    hi: np.ndarray


@dataclass(frozen=True)
class PolyhedralSet:
    """``{x : A x (senses) b, lo <= x <= hi}`` on flattened ``(k, n)`` points."""

    A: np.ndarray
    senses: tuple[str, ...]
    b: np.ndarray
    lo: np.ndarray | float = -np.inf
    hi: np.ndarray | float = np.inf


def support_function(set_description, xstar: RandomVector) -> float:
    """``sup_{x in A} <xstar, x>`` with ``-inf`` for an empty set."""
    w = _weights(xstar.space, xstar.shape) * xstar.values
    if isinstance(set_description, VertexSet):
        pts = np.asarray(set_description.points, dtype=float)
        if pts.size == 0:
            return -np.inf
        pts = pts.reshape((-1,) + xstar.shape)
        return float(np.max(np.sum(pts * w, axis=(1, 2))))
    if isinstance(set_description, BoxSet):
        lo = np.broadcast_to(np.asarray(set_description.lo, dtype=float), xstar.shape)
        hi = np.broadcast_to(np.asarray(set_description.hi, dtype=float), xstar.shape)
        if np.any(lo > hi):
            return -np.inf
        pos, neg = w > 0, w < 0
        if np.any(np.isinf(hi[pos])) or np.any(np.isinf(lo[neg])):
            return np.inf
        return float(np.sum(w[pos] * hi[pos]) + np.sum(w[neg] * lo[neg]))
    if isinstance(set_description, PolyhedralSet):
        d = w.size
        A = np.asarray(set_description.A, dtype=float).reshape(-1, d)
        lp = lp_solver.LinearProgram(
            c=w.reshape(-1),
            A=A,
            senses=tuple(set_description.senses),
            b=np.asarray(set_description.b, dtype=float),
            lo=np.broadcast_to(np.asarray(set_description.lo, dtype=float), (d,)).copy(),
            hi=np.broadcast_to(np.asarray(set_description.hi, dtype=float), (d,)).copy(),
        )
        sol = lp_solver.solve(lp)
        return float(sol.objective)
    raise UnsupportedSetError(f"cannot compute a support function for {type(set_description).__name__}")


# ---------------------------------------------------------------- conjugates and penalties


def _is_zero(xstar: RandomVector) -> bool:
    return not np.any(xstar.values != 0.0)


def _infinite_level(xstar: RandomVector, m: float) -> float | None:
    if math.isnan(m):
        raise ValidationError("level must not be NaN")
    if math.isinf(m):
        if _is_zero(xstar):
            raise UndefinedValueError("penalty of the zero functional at an infinite level is undefined")
        return m
    return None


def conjugate_numeric(
    f: ScalarFunctionSpec,
    xstar: RandomVector,
    search_box: Box,
    resolution: int = 41,
    refine_rounds: int = 1,
) -> ConjugateValue:
    """Grid lower bound on ``f*(xstar)``.

    The value is marked exact when ``f`` is declared convex, the maximiser is
    interior, and a finite-difference gradient of ``f`` there matches the
    weighted ``xstar``.
    """
    shape = f.shape
    box = search_box.shaped(shape)
    w = _weights(f.space, shape) * xstar.values

    def score(X: np.ndarray) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.sum(X * w, axis=(1, 2)) - f.batch(X)

    val, arg, edge = grid_maximize(score, box, resolution, refine_rounds)
    exact = False
    if arg is not None and f.convexity is Convexity.CONVEX and not edge:
        h = 1e-6
        grad = np.zeros(shape)
        for idx in np.ndindex(shape):
            e = np.zeros(shape)
            e[idx] = h
            grad[idx] = (f(arg + e) - f(arg - e)) / (2 * h)
        exact = bool(np.all(np.abs(grad - w) <= 1e-3 * (1.0 + np.abs(w))))
    return ConjugateValue(val, arg, exact)


def penalty_bruteforce(
    f: ScalarFunctionSpec,
    xstar: RandomVector,
    m: float,
    search_box: Box,
    resolution: int = 41,
    refine_rounds: int = 3,
) -> PenaltyValue:
    """Grid maximisation of ``<xstar, -x>`` over ``{f <= m}`` inside a box.

    An empty grid sublevel set gives ``-inf``. A maximiser on the box
    boundary is flagged, since the true supremum may then be larger.
    """
    inf_case = _infinite_level(xstar, m)
    if inf_case is not None:
        return PenaltyValue(inf_case, Method.BRUTEFORCE)
    shape = f.shape
    w = _weights(f.space, shape) * xstar.values

    def score(X: np.ndarray) -> np.ndarray:
        vals = f.batch(X)
        obj = -np.sum(X * w, axis=(1, 2))
        return np.where(vals <= m, obj, -np.inf)

    val, arg, edge = grid_maximize(score, search_box.shaped(shape), resolution, refine_rounds)
    return PenaltyValue(val, Method.BRUTEFORCE, attained_at=arg, at_box_boundary=edge and arg is not None)


def _conjugate_fn(f: ScalarFunctionSpec, search_box: Box | None) -> Callable[[np.ndarray], float]:
    if f.conjugate is not None:
        return lambda y: float(f.conjugate(np.asarray(y, dtype=float).reshape(f.shape)))
    if search_box is None:
        raise PreconditionError("need either an analytic conjugate or a search box")

    def numeric(y: np.ndarray) -> float:
        return conjugate_numeric(f, RandomVector(np.asarray(y).reshape(f.shape), f.space), search_box).value

    return numeric


def _dual_vector(f: ScalarFunctionSpec, xstar: RandomVector) -> np.ndarray:
    if xstar.shape != f.shape or xstar.space != f.space:
        raise ShapeError("dual element does not match the function's domain")
    return xstar.values


def _slater_point(f: ScalarFunctionSpec, m: float, search_box: Box | None) -> np.ndarray | None:
    box = search_box or f.domain or Box.cube(f.shape, 10.0)
    box = box.shaped(f.shape)
    if not box.finite:
        box = Box(np.maximum(box.lo, -10.0), np.minimum(box.hi, 10.0))
    d = int(np.prod(f.shape))
    res = 41 if d <= 3 else max(3, int(round(200_000 ** (1.0 / d))))
    for pts in _grid_chunks(box.lo.reshape(-1), box.hi.reshape(-1), res):
        X = pts.reshape((-1,) + f.shape)
        vals = f.batch(X)
        hit = np.flatnonzero(vals < m)
        if hit.size:
            return X[hit[0]]
    return None


def penalty_convex(
    f: ScalarFunctionSpec,
    xstar: RandomVector,
    m: float,
    search_box: Box | None = None,
) -> PenaltyValue:
    """``inf_{lambda > 0} lambda m + lambda f*(-xstar / lambda)`` for convex ``f``.

    Below ``inf f`` the sublevel set is empty and the value is ``-inf``.
    Otherwise a point with ``f < m`` must be found by sampling; if none is
    found the infimum would only bound the penalty from above, and
    :class:`PreconditionError` is raised.
    """
    inf_case = _infinite_level(xstar, m)
    if inf_case is not None:
        return PenaltyValue(inf_case, Method.CONVEX_DUAL)
    xs = _dual_vector(f, xstar)
    conj = _conjugate_fn(f, search_box)
    inf_f = -conj(np.zeros(f.shape))
    if m < inf_f:
        return PenaltyValue(-np.inf, Method.CONVEX_DUAL)
    if _slater_point(f, m, search_box) is None:
        raise PreconditionError(f"no point with f < {m!r} found; the dual formula would only give an upper bound")
    if _is_zero(xstar):
        return PenaltyValue(0.0, Method.CONVEX_DUAL)

    def obj(lam: float) -> float:
        return lam * m + lam * conj(-xs / lam)

    val, _ = minimize_over_log_scale(obj)
    return PenaltyValue(val, Method.CONVEX_DUAL)


def left_inverse_convex(
    f: ScalarFunctionSpec,
    xstar: RandomVector,
    s: float,
    search_box: Box | None = None,
) -> float:
    """``sup_{gamma >= 0} gamma s - f*(-gamma xstar)``; ``gamma = 0`` gives ``inf f``."""
    if math.isnan(s):
        raise ValidationError("level must not be NaN")
    xs = _dual_vector(f, xstar)
    conj = _conjugate_fn(f, search_box)
    if _slater_point(f, np.inf, search_box) is None:
        raise PreconditionError("function is +inf on every sampled point")
    inf_f = -conj(np.zeros(f.shape))
    if s == -np.inf:
        return inf_f
    if s == np.inf:
        if _is_zero(xstar):
            raise UndefinedValueError("left inverse of the zero functional at +inf is undefined")
        return np.inf
    if _is_zero(xstar):
        return inf_f

    val, _ = maximize_over_log_scale(lambda g: g * s - conj(-g * xs))
    return max(val, inf_f)


# ---------------------------------------------------------------- left inverses by bisection


def _check_value(v: float) -> float:
    v = float(v)
    if math.isnan(v):
        raise ContractViolation("monotone map returned NaN")
    return v


def left_inverse_bisect(
    alpha: Callable[[float], float],
    s: float,
    bracket: tuple[float, float] = (-1.0, 1.0),
    limit: float = EXPAND_LIMIT,
    tol: float = BISECT_TOL,
) -> float:
    """``inf { m : alpha(m) >= s }`` for a nondecreasing ``alpha``.

    The bracket doubles outward until ``+-limit``; if ``alpha(-limit) >= s``
    the answer is ``-inf`` and if ``alpha(limit) < s`` it is ``+inf``. Every
    evaluated pair is checked for monotonicity.
    """
    if math.isnan(s):
        raise ValidationError("level must not be NaN")
    seen: list[tuple[float, float]] = []

    def value(m: float) -> float:
        v = _check_value(alpha(m))
        for m2, v2 in seen:
            if (m2 < m and v2 > v + MONOTONE_TOL) or (m < m2 and v > v2 + MONOTONE_TOL):
                raise ContractViolation(
                    f"map is not nondecreasing: alpha({min(m, m2)!r}) > alpha({max(m, m2)!r})"
                )
        seen.append((m, v))
        return v

    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise ValidationError("bracket must satisfy lo < hi")
    if s == -np.inf:
        return -np.inf
    while value(lo) >= s:
        if lo <= -limit:
            return -np.inf
        lo = max(2.0 * lo if lo < 0 else lo - 1.0 - abs(lo), -limit)
        if lo >= hi:
            hi = lo + 1.0
    while value(hi) < s:
        if hi >= limit:
            return np.inf
        hi = min(2.0 * hi if hi > 0 else hi + 1.0 + abs(hi), limit)
    # invariant: alpha(lo) < s <= alpha(hi)
    while hi - lo > max(tol, 4.0 * np.spacing(max(abs(lo), abs(hi)))):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if value(mid) >= s:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class SwapCheck:
    ok: bool
    lhs: float
    rhs: float
    per_index: tuple[float, ...]


def monotone_swap_check(
    alphas: Sequence[Callable[[float], float]],
    r: Sequence[float],
    tol: float = 1e-7,
) -> SwapCheck:
    """Compare ``inf{m : r_a <= alpha_a(m) for all a}`` with ``sup_a alpha_a^{-l}(r_a)``."""
    if len(alphas) != len(r) or not alphas:
        raise ValidationError("need one target per map and at least one map")

    def joint(m: float) -> float:
        gaps = []
        for a, ra in zip(alphas, r):
            v = _check_value(a(m))
            gaps.append(np.inf if v == np.inf else v - ra)
        return min(gaps)

    lhs = left_inverse_bisect(joint, 0.0)
    per = tuple(left_inverse_bisect(a, ra) for a, ra in zip(alphas, r))
    rhs = max(per)
    if math.isinf(lhs) or math.isinf(rhs):
        ok = lhs == rhs
    else:
        ok = abs(lhs - rhs) <= tol
    return SwapCheck(ok, lhs, rhs, per)
