"""Aggregation functions and their conjugates.

An aggregation function maps a vector of entity-level outcomes to one
societal outcome; applied scenario by scenario it turns an ``(k, n)`` random
vector into a scalar one. Each aggregator also exposes

    Phi(x*) = sup_x ( -<x*, x> + Lambda(x) ),

the conjugate that appears in every dual formula. For the Eisenberg-Noe
network the aggregate is the total payment to society at the clearing
vector, and both the aggregate and its conjugate are linear programs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import lp_solver
from .errors import ConvergenceError, DomainError, ShapeError, SolverError, ValidationError
from .prob_core import RandomVector

FIXED_POINT_TOL = 1e-12
FIXED_POINT_MAX_ITER = 1_000_000
SUM_TOL = 1e-9


class AggregatorKind(str, Enum):
    SUM = "sum"
    TOTAL_LOSS = "total_loss"
    EXPONENTIAL = "exponential"
    EISENBERG_NOE = "eisenberg_noe"


@dataclass(frozen=True, eq=False)
class Network:
    """Nominal liabilities ``L[i, j]`` of node ``i`` to node ``j``; node 0 is society."""

    liabilities: np.ndarray

    def __post_init__(self) -> None:
        L = np.array(self.liabilities, dtype=float)
        if L.ndim != 2 or L.shape[0] != L.shape[1] or L.shape[0] < 2:
            raise ValidationError("liability matrix must be square with society plus at least one bank")
        if not np.all(np.isfinite(L)) or np.any(L < 0.0):
            raise ValidationError("liabilities must be finite and nonnegative")
        if np.any(np.diag(L) != 0.0):
            raise ValidationError("no node may owe itself (diagonal must be zero)")
        if np.any(L[0, :] != 0.0):
            raise ValidationError("society has no liabilities to banks (row 0 must be zero)")
        if np.any(L[1:, 0] <= 0.0):
            bad = [int(i) for i in np.flatnonzero(L[1:, 0] <= 0.0) + 1]
            raise ValidationError(f"every bank must have a nonzero liability to society (banks {bad})")
        L.setflags(write=False)
        object.__setattr__(self, "liabilities", L)

    @property
    def n(self) -> int:
        return self.liabilities.shape[0] - 1

    @property
    def pbar(self) -> np.ndarray:
        """Total liabilities of the banks."""
        return self.liabilities[1:, :].sum(axis=1)

    @property
    def relative(self) -> np.ndarray:
        """Relative liabilities ``a[i, j] = L[i, j] / pbar_i`` (row 0 stays zero)."""
        a = np.zeros_like(self.liabilities)
        a[1:, :] = self.liabilities[1:, :] / self.pbar[:, None]
        return a

    @property
    def interbank(self) -> np.ndarray:
        """``a[i, j]`` restricted to banks, shape ``(n, n)``."""
        return self.relative[1:, 1:]

    @property
    def to_society(self) -> np.ndarray:
        """``a[i, 0]`` for the banks."""
        return self.relative[1:, 0]

    @property
    def max_aggregate(self) -> float:
        return float(self.to_society @ self.pbar)


@dataclass(frozen=True)
class AggregatorSpec:
    kind: AggregatorKind
    network: Network | None = None

    def __post_init__(self) -> None:
        kind = AggregatorKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if (kind is AggregatorKind.EISENBERG_NOE) != (self.network is not None):
            raise ValidationError("a network is required for, and only for, the Eisenberg-Noe aggregator")

    @classmethod
    def sum(cls) -> "AggregatorSpec":
        return cls(AggregatorKind.SUM)

    @classmethod
    def total_loss(cls) -> "AggregatorSpec":
        return cls(AggregatorKind.TOTAL_LOSS)

    @classmethod
    def exponential(cls) -> "AggregatorSpec":
        return cls(AggregatorKind.EXPONENTIAL)

    @classmethod
    def eisenberg_noe(cls, liabilities: np.ndarray | Network) -> "AggregatorSpec":
        net = liabilities if isinstance(liabilities, Network) else Network(liabilities)
        return cls(AggregatorKind.EISENBERG_NOE, net)

    @property
    def nonnegative_domain(self) -> bool:
        return self.kind is AggregatorKind.EISENBERG_NOE

    @property
    def bounded_above(self) -> bool:
        return self.kind is not AggregatorKind.SUM

    @property
    def phi_at_zero(self) -> float:
        """``Phi(0) = sup Lambda``."""
        if self.kind is AggregatorKind.SUM:
            return np.inf
        if self.kind is AggregatorKind.EISENBERG_NOE:
            return self.network.max_aggregate  # type: ignore[union-attr]
        return 0.0

    def entity_count(self) -> int | None:
        return self.network.n if self.network is not None else None


@dataclass(frozen=True)
class ClearingResult:
    payments: np.ndarray
    lambda_value: float
    method: str
    iterations: int


def _check_shock(net: Network, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != net.n:
        raise ShapeError(f"shock has {x.size} entries for {net.n} banks")
    if np.any(x < 0.0) or not np.all(np.isfinite(x)):
        raise DomainError("Eisenberg-Noe shocks must be finite and nonnegative")
    return x


def clearing_fixed_point(net: Network, x: np.ndarray) -> ClearingResult:
    """Greatest clearing vector by iterating ``p <- min(pbar, x + A^T p)`` from ``pbar``."""
    x = _check_shock(net, x)
    A = net.interbank
    pbar = net.pbar
    p = pbar.copy()
    for it in range(1, FIXED_POINT_MAX_ITER + 1):
        nxt = np.minimum(pbar, x + A.T @ p)
        if np.max(np.abs(nxt - p)) <= FIXED_POINT_TOL:
            p = nxt
            return ClearingResult(p, float(net.to_society @ p), "fixed-point", it)
        p = nxt
    raise ConvergenceError("clearing iteration did not converge")


def clearing_batch(net: Network, X: np.ndarray) -> np.ndarray:
    """Clearing vectors for the rows of ``X`` (shape ``(N, n)``), iterated jointly."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != net.n:
        raise ShapeError(f"shocks must have shape (N, {net.n})")
    if np.any(X < 0.0) or not np.all(np.isfinite(X)):
        raise DomainError("Eisenberg-Noe shocks must be finite and nonnegative")
    A = net.interbank
    pbar = net.pbar
    P = np.broadcast_to(pbar, X.shape).copy()
    for _ in range(FIXED_POINT_MAX_ITER):
        nxt = np.minimum(pbar, X + P @ A)
        done = np.max(np.abs(nxt - P)) <= FIXED_POINT_TOL if P.size else True
        P = nxt
        if done:
            return P
    raise ConvergenceError("clearing iteration did not converge")


def _clearing_solution(net: Network, x: np.ndarray) -> lp_solver.LpSolution:
    x = _check_shock(net, x)
    n = net.n
    lp = lp_solver.LinearProgram(
        c=net.to_society,
        A=np.eye(n) - net.interbank.T,
        senses=("<=",) * n,
        b=x,
        lo=np.zeros(n),
        hi=net.pbar,
    )
    sol = lp_solver.solve(lp)
    if not sol.optimal:
        raise SolverError(f"clearing LP reported {sol.status.value}; it should always be feasible")
    return sol


def clearing_lp(net: Network, x: np.ndarray) -> ClearingResult:
    """Clearing payments as the LP ``max a0 . p`` s.t. ``p - A^T p <= x``, ``0 <= p <= pbar``."""
    sol = _clearing_solution(net, x)
    return ClearingResult(sol.x, sol.objective, "lp", sol.pivots)


def clearing_lp_prices(net: Network, x: np.ndarray) -> np.ndarray:
    """Row prices of the clearing LP: a supergradient of the aggregate in ``x``."""
    return np.asarray(_clearing_solution(net, x).duals, dtype=float)


def aggregate_points(spec: AggregatorSpec, X: np.ndarray) -> np.ndarray:
    """Aggregate along the last axis of ``X``."""
    X = np.asarray(X, dtype=float)
    if spec.kind is AggregatorKind.SUM:
        return X.sum(axis=-1)
    if spec.kind is AggregatorKind.TOTAL_LOSS:
        return np.minimum(X, 0.0).sum(axis=-1)
    if spec.kind is AggregatorKind.EXPONENTIAL:
        return -np.exp(-X - 1.0).sum(axis=-1)
    flat = X.reshape(-1, X.shape[-1])
    payments = clearing_batch(spec.network, flat)  # type: ignore[arg-type]
    return (payments @ spec.network.to_society).reshape(X.shape[:-1])  # type: ignore[union-attr]


def aggregate(spec: AggregatorSpec, x: RandomVector | np.ndarray) -> RandomVector | float:
    """Scenario-wise aggregation of a random vector, or of a single point."""
    if isinstance(x, RandomVector):
        return RandomVector(aggregate_points(spec, x.values), x.space)
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ShapeError("a point must be a one-dimensional array")
    return float(aggregate_points(spec, arr))


# ---------------------------------------------------------------- conjugates


def _en_conjugate(net: Network, xstar: np.ndarray) -> float:
    """``sup_{0<=p<=pbar} sum a0_i p_i - xstar_i (p_i - sum_j a_ji p_j)^+`` as an LP.

    Epigraph variables ``t_i >= (p_i - sum_j a_ji p_j)^+`` carry the
    penalised shortfall.
    """
    n = net.n
    M = np.eye(n) - net.interbank.T
    lp = lp_solver.LinearProgram(
        c=np.concatenate([net.to_society, -xstar]),
        A=np.hstack([M, -np.eye(n)]),
        senses=("<=",) * n,
        b=np.zeros(n),
        lo=np.zeros(2 * n),
        hi=np.concatenate([net.pbar, np.full(n, np.inf)]),
    )
    sol = lp_solver.solve(lp)
    if not sol.optimal:
        raise SolverError(f"conjugate LP reported {sol.status.value}")
    return sol.objective


def conjugate_phi(spec: AggregatorSpec, xstar: np.ndarray) -> float:
    """``Phi(x*) = (-Lambda)^*(-x*)`` for one point ``x*``."""
    xs = np.asarray(xstar, dtype=float).reshape(-1)
    if np.any(np.isnan(xs)):
        raise ValidationError("conjugate argument must not be NaN")
    if spec.kind is AggregatorKind.SUM:
        return 0.0 if np.all(np.abs(xs - 1.0) <= SUM_TOL) else np.inf
    if spec.kind is AggregatorKind.TOTAL_LOSS:
        return 0.0 if np.all((xs >= 0.0) & (xs <= 1.0)) else np.inf
    if np.any(xs < 0.0):
        return np.inf
    if not np.all(np.isfinite(xs)):
        return np.inf
    if spec.kind is AggregatorKind.EXPONENTIAL:
        pos = xs > 0.0
        return float(np.sum(xs[pos] * np.log(xs[pos])))
    if xs.size != spec.network.n:
        raise ShapeError(f"conjugate argument has {xs.size} entries for {spec.network.n} banks")
    return _en_conjugate(spec.network, xs)


def phi_perspective(spec: AggregatorSpec, xstar_row: np.ndarray, ystar: float) -> float:
    """``y* Phi(x*/y*)`` for ``y* > 0``."""
    if not ystar > 0.0 or math.isinf(ystar):
        raise DomainError("perspective needs a finite positive scale")
    xs = np.asarray(xstar_row, dtype=float)
    val = conjugate_phi(spec, xs / ystar)
    return ystar * val if math.isfinite(val) else val


def expected_perspective(spec: AggregatorSpec, xstar: np.ndarray, ystar: np.ndarray, probs: np.ndarray) -> float:
    """``E[Y* Phi(X*/Y*) 1{Y*>0}]`` with ``+inf`` when ``X* != 0`` where ``Y* = 0``."""
    total = 0.0
    for w, xrow, y in zip(probs, np.asarray(xstar, dtype=float), np.asarray(ystar, dtype=float)):
        if y > 1e-14:
            v = phi_perspective(spec, xrow, float(y))
        elif np.any(xrow != 0.0):
            return np.inf
        else:
            continue
        if v == np.inf:
            return np.inf
        total += w * v
    return float(total)
