"""Dense bounded-variable primal simplex.

Problems have the form::

    maximise (or minimise)  c @ x
    subject to              A[i] @ x  (<=, =, >=)  b[i]
                            lo <= x <= hi            (infinite bounds allowed)

Each row gets a slack variable whose bounds encode the row sense, so the
working problem is ``[A | I] z = b`` with box bounds on every column. A
phase with artificial columns finds a feasible basis when the slack basis is
not feasible. Entering columns are picked by a normalised Dantzig rule until
``10 * (m + n)`` pivots have been spent, then by Bland's rule, which rules
out cycling. Every optimal answer carries a certificate built from the row
prices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import SolverError, ValidationError

FEAS_TOL = 1e-9
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-11

_BASIC, _AT_LO, _AT_HI, _FREE = 0, 1, 2, 3


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    UNBOUNDED = "unbounded"
    INFEASIBLE = "infeasible"


_SENSES = {"<=": "<=", "le": "<=", "=": "=", "==": "=", "eq": "=", ">=": ">=", "ge": ">="}


@dataclass(frozen=True)
class LinearProgram:
    c: np.ndarray
    A: np.ndarray
    senses: tuple[str, ...]
    b: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    maximize: bool = True

    def __post_init__(self) -> None:
        c = np.array(self.c, dtype=float).reshape(-1)
        n = c.size
        A = np.array(self.A, dtype=float)
        if A.size == 0:
            A = A.reshape(0, n)
        if A.ndim != 2 or A.shape[1] != n:
            raise ValidationError("constraint matrix must have one column per variable")
        m = A.shape[0]
        b = np.array(self.b, dtype=float).reshape(-1)
        if b.size != m:
            raise ValidationError("right-hand side must have one entry per row")
        senses = tuple(self.senses)
        if len(senses) != m:
            raise ValidationError("need one sense per row")
        try:
            senses = tuple(_SENSES[s] for s in senses)
        except KeyError as exc:
            raise ValidationError(f"unknown row sense {exc.args[0]!r}") from None
        lo = np.array(self.lo, dtype=float).reshape(-1)
        hi = np.array(self.hi, dtype=float).reshape(-1)
        if lo.size != n or hi.size != n:
            raise ValidationError("bounds must have one entry per variable")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValidationError("objective, matrix and right-hand side must be finite")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo > hi):
            raise ValidationError("variable bounds must satisfy lo <= hi")
        if np.any(lo == np.inf) or np.any(hi == -np.inf):
            raise ValidationError("variable bounds must leave a nonempty interval")
        for name, val in (("c", c), ("A", A), ("b", b), ("lo", lo), ("hi", hi)):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "senses", senses)

    @property
    def n_vars(self) -> int:
        return int(self.c.size)

    @property
    def n_rows(self) -> int:
        return int(self.A.shape[0])

    @classmethod
    def build(
        cls,
        c: Sequence[float],
        rows: Sequence[tuple[Sequence[float], str, float]] = (),
        lo: Sequence[float] | float = 0.0,
        hi: Sequence[float] | float = np.inf,
        maximize: bool = True,
    ) -> "LinearProgram":
        """Convenience constructor from ``(coefficients, sense, rhs)`` triples."""
        c = np.asarray(c, dtype=float)
        n = c.size
        A = np.array([r[0] for r in rows], dtype=float).reshape(len(rows), n)
        return cls(
            c=c,
            A=A,
            senses=tuple(r[1] for r in rows),
            b=np.array([r[2] for r in rows], dtype=float),
            lo=np.broadcast_to(np.asarray(lo, dtype=float), (n,)).copy(),
            hi=np.broadcast_to(np.asarray(hi, dtype=float), (n,)).copy(),
            maximize=maximize,
        )


@dataclass(frozen=True)
class LpCertificate:
    """Relative residuals of an optimal answer and the matching dual value."""

    primal_residual: float
    dual_residual: float
    complementarity: float
    gap: float
    dual_objective: float

    def ok(
        self,
        feas_tol: float = 1e-9,
        dual_tol: float = 1e-9,
        cs_tol: float = 1e-8,
        gap_tol: float = 1e-8,
    ) -> bool:
        return (
            self.primal_residual <= feas_tol
            and self.dual_residual <= dual_tol
            and self.complementarity <= cs_tol
            and self.gap <= gap_tol
        )


@dataclass(frozen=True)
class LpSolution:
    status: LpStatus
    objective: float
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    pivots: int = 0
    certificate: LpCertificate | None = field(default=None)

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


def _solve(B: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    if B.shape[0] == 0:
        return np.zeros(0)
    return np.linalg.solve(B, rhs)


class _Tableau:
    """Working state of the bounded simplex on ``M z = b``."""

    def __init__(self, M: np.ndarray, b: np.ndarray, lo: np.ndarray, hi: np.ndarray, n_orig: int):
        self.M = M
        self.b = b
        self.lo = lo
        self.hi = hi
        self.m, self.N = M.shape
        self.n_orig = n_orig
        self.x = np.zeros(self.N)
        self.state = np.full(self.N, _AT_LO, dtype=int)
        self.basis: list[int] = []
        self.pivots = 0
        self.bland_after = 10 * (self.m + n_orig)
        self.colnorm = np.sqrt(1.0 + np.sum(M * M, axis=0))

    def refresh(self) -> None:
        nb = self.state != _BASIC
        rhs = self.b - self.M[:, nb] @ self.x[nb]
        self.x[self.basis] = _solve(self.M[:, self.basis], rhs)

    def prices(self, cost: np.ndarray) -> np.ndarray:
        return _solve(self.M[:, self.basis].T, cost[self.basis])

    def run(self, cost: np.ndarray, max_pivots: int) -> LpStatus:
        absM = np.abs(self.M)
        while True:
            self.refresh()
            y = self.prices(cost)
            d = cost - self.M.T @ y
            # per-column tolerance: one badly scaled cost must not mask the others
            tol = DUAL_TOL * 1e-2 * (1.0 + np.abs(cost) + absM.T @ np.abs(y))
            movable = self.hi > self.lo
            up = ((self.state == _AT_LO) | (self.state == _FREE)) & (d > tol) & movable
            down = ((self.state == _AT_HI) | (self.state == _FREE)) & (d < -tol) & movable
            candidates = np.flatnonzero(up | down)
            if candidates.size == 0:
                return LpStatus.OPTIMAL
            if self.pivots >= max_pivots:
                raise SolverError("simplex exceeded its pivot budget")
            if self.pivots < self.bland_after:
                score = np.abs(d[candidates]) / self.colnorm[candidates]
                j = int(candidates[int(np.argmax(score))])
            else:
                j = int(candidates[0])
            sigma = 1.0 if d[j] > 0 else -1.0
            u = _solve(self.M[:, self.basis], self.M[:, j])
            step = self.hi[j] - self.lo[j]
            leave_pos = -1
            leave_to = _AT_LO
            best_var = None
            for r, var in enumerate(self.basis):
                delta = -sigma * u[r]
                if delta < -PIVOT_TOL and np.isfinite(self.lo[var]):
                    limit, target = max(self.x[var] - self.lo[var], 0.0) / -delta, _AT_LO
                elif delta > PIVOT_TOL and np.isfinite(self.hi[var]):
                    limit, target = max(self.hi[var] - self.x[var], 0.0) / delta, _AT_HI
                else:
                    continue
                if limit < step or (limit == step and leave_pos >= 0 and var < best_var):
                    step, leave_pos, leave_to, best_var = limit, r, target, var
            if not np.isfinite(step):
                return LpStatus.UNBOUNDED
            self.pivots += 1
            if leave_pos < 0:
                # bound flip: the entering variable crosses its own box
                if sigma > 0:
                    self.x[j], self.state[j] = self.hi[j], _AT_HI
                else:
                    self.x[j], self.state[j] = self.lo[j], _AT_LO
                continue
            out = self.basis[leave_pos]
            self.x[j] += sigma * step
            self.state[out] = leave_to
            self.x[out] = self.lo[out] if leave_to == _AT_LO else self.hi[out]
            self.basis[leave_pos] = j
            self.state[j] = _BASIC

    def evict(self, var: int, candidates: np.ndarray) -> bool:
        """Degenerate pivot replacing basic ``var`` (at value zero)."""
        r = self.basis.index(var)
        B = self.M[:, self.basis]
        for j in candidates:
            if self.state[j] == _BASIC:
                continue
            u = _solve(B, self.M[:, j])
            if abs(u[r]) > 1e-7:
                self.state[var] = _AT_LO
                self.x[var] = 0.0
                self.basis[r] = int(j)
                self.state[j] = _BASIC
                self.pivots += 1
                return True
        return False


def _initial_value(lo: float, hi: float) -> tuple[float, int]:
    if np.isfinite(lo):
        return lo, _AT_LO
    if np.isfinite(hi):
        return hi, _AT_HI
    return 0.0, _FREE


def solve(lp: LinearProgram, max_pivots: int | None = None) -> LpSolution:
    """Solve ``lp``; optimal answers come with an :class:`LpCertificate`."""
    n, m = lp.n_vars, lp.n_rows
    sign = 1.0 if lp.maximize else -1.0
    c = sign * lp.c

    slack_lo = np.array([0.0 if s in ("<=", "=") else -np.inf for s in lp.senses])
    slack_hi = np.array([np.inf if s == "<=" else 0.0 for s in lp.senses])

    x0 = np.zeros(n)
    st0 = np.zeros(n, dtype=int)
    for j in range(n):
        x0[j], st0[j] = _initial_value(lp.lo[j], lp.hi[j])
    resid = lp.b - lp.A @ x0 if m else np.zeros(0)

    slack_ok = (resid >= slack_lo - FEAS_TOL) & (resid <= slack_hi + FEAS_TOL)
    art_sign = np.where(resid >= 0.0, 1.0, -1.0)
    M = np.hstack([lp.A, np.eye(m), np.diag(art_sign)]) if m else np.zeros((0, n))
    N = n + 2 * m
    lo = np.concatenate([lp.lo, slack_lo, np.zeros(m)])
    hi = np.concatenate([lp.hi, slack_hi, np.where(slack_ok, 0.0, np.inf)])

    tab = _Tableau(M, lp.b.copy(), lo, hi, n)
    tab.x[:n] = x0
    tab.state[:n] = st0
    for i in range(m):
        s, a = n + i, n + m + i
        # slack rests at whichever of its bounds is finite (zero for every sense)
        tab.x[s], tab.state[s] = 0.0, (_AT_LO if np.isfinite(slack_lo[i]) else _AT_HI)
        tab.x[a], tab.state[a] = 0.0, _AT_LO
        if slack_ok[i]:
            tab.basis.append(s)
            tab.state[s] = _BASIC
        else:
            tab.basis.append(a)
            tab.state[a] = _BASIC

    cap = max_pivots if max_pivots is not None else 50 * (m + n) + 1000
    art = np.arange(n + m, N)
    if m and not np.all(slack_ok):
        cost1 = np.zeros(N)
        cost1[art[~slack_ok]] = -1.0
        tab.run(cost1, cap)
        tab.refresh()
        infeas = float(np.sum(tab.x[art]))
        if infeas > FEAS_TOL * max(1.0, float(np.max(np.abs(lp.b)))):
            return LpSolution(LpStatus.INFEASIBLE, -np.inf * sign, pivots=tab.pivots)
        tab.hi[art] = 0.0
        non_art = np.arange(n + m)
        for var in [v for v in tab.basis if v >= n + m]:
            tab.evict(var, non_art)
        tab.refresh()

    cost2 = np.zeros(N)
    cost2[:n] = c
    status = tab.run(cost2, cap)
    if status is LpStatus.UNBOUNDED:
        return LpSolution(LpStatus.UNBOUNDED, np.inf * sign, pivots=tab.pivots)

    tab.refresh()
    x = tab.x[:n].copy()
    # snap values that drifted past a bound by rounding noise
    x = np.minimum(np.maximum(x, lp.lo), lp.hi)
    y = tab.prices(cost2)
    d = c - lp.A.T @ y if m else c.copy()
    objective = float(lp.c @ x)
    cert = _certificate(lp, x, sign * y, sign * d, objective)
    return LpSolution(
        LpStatus.OPTIMAL,
        objective,
        x=x,
        duals=sign * y,
        reduced_costs=sign * d,
        pivots=tab.pivots,
        certificate=cert,
    )


def _certificate(lp: LinearProgram, x: np.ndarray, y: np.ndarray, d: np.ndarray, objective: float) -> LpCertificate:
    """Optimality certificate in the user's objective sense.

    ``y`` are row prices and ``d = c - A^T y`` the reduced costs. The positive
    and negative parts of ``d`` act as prices for the upper and lower bounds.
    Every residual is relative: it is divided by ``1 +`` the magnitude of the
    terms it is computed from, so the tolerances in :meth:`LpCertificate.ok`
    do not depend on how the problem is scaled.
    """
    sign = 1.0 if lp.maximize else -1.0
    ys, ds = sign * y, sign * d  # maximisation form
    absA = np.abs(lp.A)
    row_act = lp.A @ x if lp.n_rows else np.zeros(0)
    row_scale = 1.0 + np.abs(lp.b) + (absA @ np.abs(x) if lp.n_rows else np.zeros(0))

    viol = [0.0]
    for i, s in enumerate(lp.senses):
        if s == "<=":
            r = row_act[i] - lp.b[i]
        elif s == ">=":
            r = lp.b[i] - row_act[i]
        else:
            r = abs(row_act[i] - lp.b[i])
        viol.append(r / row_scale[i])
    fin_hi, fin_lo = np.isfinite(lp.hi), np.isfinite(lp.lo)
    viol.extend((lp.lo[fin_lo] - x[fin_lo]) / (1.0 + np.abs(lp.lo[fin_lo])))
    viol.extend((x[fin_hi] - lp.hi[fin_hi]) / (1.0 + np.abs(lp.hi[fin_hi])))
    primal_residual = max(0.0, float(max(viol)))

    price_scale = 1.0 + float(np.max(np.abs(lp.c))) if lp.c.size else 1.0
    col_scale = 1.0 + np.abs(lp.c) + (absA.T @ np.abs(ys) if lp.n_rows else 0.0)
    dual_viol = [0.0]
    for i, s in enumerate(lp.senses):
        if s == "<=":
            dual_viol.append(-ys[i] / price_scale)
        elif s == ">=":
            dual_viol.append(ys[i] / price_scale)
    v = np.maximum(ds, 0.0)
    u = np.maximum(-ds, 0.0)
    dual_viol.extend((v / col_scale)[~fin_hi])
    dual_viol.extend((u / col_scale)[~fin_lo])
    dual_residual = max(0.0, float(max(dual_viol)))

    dual_obj = float(lp.b @ ys + lp.hi[fin_hi] @ v[fin_hi] - lp.lo[fin_lo] @ u[fin_lo])
    gap = abs(sign * objective - dual_obj) / (1.0 + abs(objective))

    cs = [0.0]
    if lp.n_rows:
        cs.extend(np.abs(ys * (lp.b - row_act)) / ((1.0 + np.abs(ys)) * row_scale))
    cs.extend(np.abs(v[fin_hi] * (lp.hi[fin_hi] - x[fin_hi])) / ((1.0 + v[fin_hi]) * (1.0 + np.abs(lp.hi[fin_hi]) + np.abs(x[fin_hi]))))
    cs.extend(np.abs(u[fin_lo] * (x[fin_lo] - lp.lo[fin_lo])) / ((1.0 + u[fin_lo]) * (1.0 + np.abs(lp.lo[fin_lo]) + np.abs(x[fin_lo]))))
    return LpCertificate(
        primal_residual=primal_residual,
        dual_residual=dual_residual,
        complementarity=float(max(cs)),
        gap=float(gap),
        dual_objective=sign * dual_obj,
    )
