"""Univariate quasiconvex risk measures built from a loss function.

Two constructions are supported:

* certainty equivalent ``rho(Y) = l^{-1}(E[l(-Y)])``;
* economic index ``rho(Y) = 1 / sup{lam > 0 : E[l(-lam Y)] <= c0}``.

For each loss the penalty function ``alpha_rho(dQ/dP, m)`` and its left
inverse in ``m`` are available in closed form. The closed forms below were
re-derived from the definitions and checked against brute-force sublevel
maximisation; see the README for the resulting conventions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ClosedFormUnavailable, NoSolutionError, ShapeError, ValidationError
from .prob_core import Density, FiniteProbabilitySpace, RandomVector, geometric_mean, power_mean

ECON_LOG_RANGE = (-30.0, 30.0)
ECON_REL_TOL = 1e-10
ECON_NEWTON_START = 1e-1
ECON_NEWTON_ITERS = 60


class LossKind(str, Enum):
    QUADRATIC = "quadratic"
    LOGARITHMIC = "logarithmic"
    POWER = "power"
    INDEX_LOGARITHMIC = "index_logarithmic"


class RiskForm(str, Enum):
    CERTAINTY_EQUIVALENT = "certainty_equivalent"
    ECONOMIC_INDEX = "economic_index"


@dataclass(frozen=True)
class LossSpec:
    """A convex increasing loss ``l`` together with ``l^{-1}`` and ``h = (l')^{-1}``.

    ``gamma`` parametrises the power loss and ``c0`` the expected-loss
    threshold of the economic index.
    """

    kind: LossKind
    gamma: float | None = None
    c0: float | None = None

    def __post_init__(self) -> None:
        kind = LossKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is LossKind.POWER:
            if self.gamma is None or not 0.0 < self.gamma < 1.0:
                raise ValidationError("power loss needs gamma in (0, 1)")
        if kind is LossKind.INDEX_LOGARITHMIC:
            if self.c0 is None or not self.c0 > 0.0:
                raise ValidationError("index logarithmic loss needs c0 > 0")

    @property
    def p(self) -> int:
        return 2 if self.kind is LossKind.QUADRATIC else 1

    def loss(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.kind is LossKind.QUADRATIC:
                return np.where(s >= -1.0, 0.5 * s * s + s, -0.5)
            if self.kind is LossKind.LOGARITHMIC:
                return np.where(s < 0.0, -np.log(np.where(s < 0.0, -s, 1.0)), np.inf)
            if self.kind is LossKind.POWER:
                g = self.gamma
                return np.where(s <= 0.0, -np.power(np.where(s <= 0.0, -s, 0.0), 1.0 - g) / (1.0 - g), np.inf)
            return np.where(s < 1.0, -np.log(np.where(s < 1.0, 1.0 - s, 1.0)), np.inf)

    def inverse(self, t: np.ndarray) -> np.ndarray:
        """Generalised inverse ``inf{s : l(s) >= t}``.

        For the quadratic loss this sends the flat level ``-1/2`` to
        ``-inf``; everywhere else the loss is strictly increasing on its
        domain and this is the ordinary inverse.
        """
        t = np.asarray(t, dtype=float)
        with np.errstate(invalid="ignore", over="ignore"):
            if self.kind is LossKind.QUADRATIC:
                return np.where(t <= -0.5, -np.inf, -1.0 + np.sqrt(np.maximum(1.0 + 2.0 * t, 0.0)))
            if self.kind is LossKind.LOGARITHMIC:
                return np.where(t == np.inf, np.inf, -np.exp(-t))
            if self.kind is LossKind.POWER:
                g = self.gamma
                base = np.maximum((1.0 - g) * (-t), 0.0)
                return np.where(t > 0.0, np.inf, -np.power(base, 1.0 / (1.0 - g)))
            return np.where(t == np.inf, 1.0, 1.0 - np.exp(-t))

    def derivative_inverse(self, t: np.ndarray) -> np.ndarray:
        """Right inverse ``h`` of ``l'`` on ``t > 0`` (``t >= 0`` for quadratic)."""
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.kind is LossKind.QUADRATIC:
                return t - 1.0
            if self.kind is LossKind.LOGARITHMIC:
                return -1.0 / t
            if self.kind is LossKind.POWER:
                return -np.power(t, -1.0 / self.gamma)
            return 1.0 - 1.0 / t


@dataclass(frozen=True)
class RiskMeasureSpec:
    form: RiskForm
    loss: LossSpec
    numeric_only: bool = False

    def __post_init__(self) -> None:
        form = RiskForm(self.form)
        object.__setattr__(self, "form", form)
        if form is RiskForm.ECONOMIC_INDEX:
            if self.loss.kind is not LossKind.INDEX_LOGARITHMIC and not self.numeric_only:
                raise ValidationError(
                    "economic index needs the index logarithmic loss (or numeric_only=True)"
                )
            if self.loss.c0 is None:
                raise ValidationError("economic index needs a threshold c0")
        elif self.loss.kind is LossKind.INDEX_LOGARITHMIC:
            raise ValidationError("the index logarithmic loss is only used by the economic index")

    @classmethod
    def certainty_equivalent(cls, kind: LossKind | str, gamma: float | None = None) -> "RiskMeasureSpec":
        return cls(RiskForm.CERTAINTY_EQUIVALENT, LossSpec(LossKind(kind), gamma=gamma))

    @classmethod
    def economic_index(cls, c0: float) -> "RiskMeasureSpec":
        return cls(RiskForm.ECONOMIC_INDEX, LossSpec(LossKind.INDEX_LOGARITHMIC, c0=c0))

    @property
    def c0(self) -> float:
        return float(self.loss.c0)  # type: ignore[arg-type]


# ---------------------------------------------------------------- evaluation


def _scalar(y: RandomVector | np.ndarray, space: FiniteProbabilitySpace | None) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(y, RandomVector):
        return y.scalar_values(), y.space.probs
    if space is None:
        raise ShapeError("a bare array needs an explicit probability space")
    v = np.asarray(y, dtype=float).reshape(-1)
    if v.size != space.size:
        raise ShapeError("one value per scenario expected")
    return v, space.probs


def rho_eval(spec: RiskMeasureSpec, y: RandomVector | np.ndarray, space: FiniteProbabilitySpace | None = None) -> float:
    """Risk of a scalar random variable; ``+inf`` off the loss domain."""
    v, probs = _scalar(y, space)
    return float(rho_eval_batch(spec, v[None, :], probs)[0])


def rho_eval_batch(spec: RiskMeasureSpec, Y: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Vectorised :func:`rho_eval` over the rows of ``Y`` (shape ``(N, k)``)."""
    Y = np.asarray(Y, dtype=float)
    if spec.form is RiskForm.CERTAINTY_EQUIVALENT:
        return _certainty_equivalent(spec.loss, Y, probs)
    return _economic_index(spec, Y, probs)


def _certainty_equivalent(loss: LossSpec, Y: np.ndarray, probs: np.ndarray) -> np.ndarray:
    if loss.kind is LossKind.QUADRATIC:
        # the loss is flat below -1, so Y >= 1 everywhere sits at the bottom level
        t = loss.loss(-Y) @ probs
        out = loss.inverse(t)
        return np.where(np.all(Y >= 1.0, axis=1), -np.inf, out)
    if loss.kind is LossKind.LOGARITHMIC:
        ok = np.all(Y > 0.0, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            gm = np.exp(np.log(np.where(Y > 0.0, Y, 1.0)) @ probs)
        return np.where(ok, -gm, np.inf)
    if loss.kind is LossKind.POWER:
        r = 1.0 - loss.gamma
        ok = np.all(Y >= 0.0, axis=1)
        pm = np.power(np.power(np.maximum(Y, 0.0), r) @ probs, 1.0 / r)
        return np.where(ok, -pm, np.inf)
    raise ValidationError("the index logarithmic loss belongs to the economic index")


def _economic_index(spec: RiskMeasureSpec, Y: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Reciprocal of the largest feasible scale.

    With ``g(lam) = E[l(-lam Y)]`` the feasible scales ``{g <= c0}`` form an
    interval starting at zero (``g`` is convex and vanishes at zero). Its
    right end is bracketed by bisection on ``log lam`` and then polished by
    Newton steps from the infeasible side, which converge monotonically
    because ``g`` is convex and increasing there. Rows whose bracket still
    touches the domain edge keep bisecting. Feasibility all the way to
    ``e^30`` is read as an unbounded set and gives risk 0.
    """
    loss, c0 = spec.loss, spec.c0
    lo_t, hi_t = ECON_LOG_RANGE

    def g(lam: np.ndarray, rows: np.ndarray) -> np.ndarray:
        with np.errstate(invalid="ignore", over="ignore"):
            return loss.loss(-lam[:, None] * rows) @ probs

    N = Y.shape[0]
    feas_hi = g(np.full(N, math.exp(hi_t)), Y) <= c0
    feas_lo = g(np.full(N, math.exp(lo_t)), Y) <= c0
    interior = ~feas_hi & feas_lo
    rows = Y[interior]
    lo = np.full(rows.shape[0], lo_t)
    hi = np.full(rows.shape[0], hi_t)

    def bisect(lo: np.ndarray, hi: np.ndarray, rows: np.ndarray, width: float) -> tuple[np.ndarray, np.ndarray]:
        while rows.shape[0] and hi[0] - lo[0] > width:
            mid = 0.5 * (lo + hi)
            fm = g(np.exp(mid), rows) <= c0
            lo = np.where(fm, mid, lo)
            hi = np.where(fm, hi, mid)
        return lo, hi

    lo, hi = bisect(lo, hi, rows, ECON_NEWTON_START)
    lam = np.exp(hi)
    g_hi = g(lam, rows)
    newton = np.isfinite(g_hi)
    # the index loss has l'(s) = 1 / (1 - s), so g'(lam) = -E[Y / (1 + lam Y)]
    ln, rn, gn = lam[newton], rows[newton], g_hi[newton]
    for _ in range(ECON_NEWTON_ITERS):
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = -((rn / (1.0 + ln[:, None] * rn)) @ probs)
            step = (gn - c0) / slope
        step = np.where(np.isfinite(step) & (step > 0.0), step, 0.0)
        ln = ln - step
        if not np.any(step > ECON_REL_TOL * 1e-2 * ln):
            break
        gn = g(ln, rn)
    lam[newton] = ln
    slow = ~newton
    if np.any(slow):
        blo, bhi = bisect(lo[slow], hi[slow], rows[slow], ECON_REL_TOL)
        lam[slow] = np.exp(0.5 * (blo + bhi))
    lam_star = np.ones(N)
    lam_star[interior] = lam
    out = 1.0 / lam_star
    out = np.where(feas_hi, 0.0, out)
    out = np.where(~feas_lo, np.inf, out)
    return out


# ---------------------------------------------------------------- penalty functions


def _density_values(q: Density | np.ndarray, probs: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(q, Density):
        return q.values, q.space.probs
    if probs is None:
        raise ShapeError("a bare density array needs scenario probabilities")
    return np.asarray(q, dtype=float), np.asarray(probs, dtype=float)


def degenerate_density(q: Density) -> bool:
    """True when ``q`` has a zero atom, so ``E[ln dQ/dP] = -inf``."""
    return bool(np.any(q.values <= 0.0))


def _power_exponent(loss: LossSpec) -> float:
    return (loss.gamma - 1.0) / loss.gamma


def penalty_closed_form(spec: RiskMeasureSpec, q_density: Density | np.ndarray, m: float, probs: np.ndarray | None = None) -> float:
    """``alpha_rho(dQ/dP, m) = sup{ E_Q[-Y] : rho(Y) <= m }`` in closed form.

    ======================  =====================================================
    quadratic CE            ``-1`` for ``m <= -1``; ``(1 + m)||d||_2 - 1`` above
    logarithmic CE          ``m exp(E ln d)`` for ``m < 0``; ``0`` for ``m >= 0``
    power CE                ``m ||d||_a`` with ``a = (gamma-1)/gamma`` for
                            ``m < 0``; ``0`` for ``m >= 0``
    economic index          ``-inf`` for ``m < 0`` (empty sublevel set);
                            ``m (1 - exp(E ln d - c0))`` for ``m >= 0``
    ======================  =====================================================

    ``m = +inf`` gives ``+inf`` and ``m = -inf`` gives ``-inf``.
    """
    d, probs = _density_values(q_density, probs)
    if math.isnan(m):
        raise ValidationError("level must not be NaN")
    if math.isinf(m):
        return m
    loss = spec.loss
    if spec.form is RiskForm.ECONOMIC_INDEX:
        if loss.kind is not LossKind.INDEX_LOGARITHMIC:
            raise ClosedFormUnavailable("no closed form for this economic index loss")
        if m < 0.0:
            return -np.inf
        return m * (1.0 - geometric_mean(d, probs) * math.exp(-spec.c0))
    if loss.kind is LossKind.QUADRATIC:
        if m <= -1.0:
            return -1.0
        return (1.0 + m) * power_mean(d, probs, 2.0) - 1.0
    if m >= 0.0:
        return 0.0
    if loss.kind is LossKind.LOGARITHMIC:
        return m * geometric_mean(d, probs)
    return m * power_mean(d, probs, _power_exponent(loss))


def penalty_left_inverse_closed_form(spec: RiskMeasureSpec, q_density: Density | np.ndarray, s: float, probs: np.ndarray | None = None) -> float:
    """``inf{ m : alpha_rho(dQ/dP, m) >= s }`` in closed form.

    ======================  =====================================================
    quadratic CE            ``-inf`` for ``s <= -1``; ``(s + 1)/||d||_2 - 1``
    logarithmic CE          ``s exp(-E ln d)`` for ``s <= 0``; ``+inf`` for
                            ``s > 0``
    power CE                ``s / ||d||_a`` for ``s <= 0``; ``+inf`` for ``s > 0``
    economic index          ``0`` for ``s <= 0``;
                            ``s / (1 - exp(E ln d - c0))`` for ``s > 0``
    ======================  =====================================================

    A zero atom in the density sends the log and power scale factors to zero,
    which turns every negative ``s`` into ``-inf``.
    """
    d, probs = _density_values(q_density, probs)
    if math.isnan(s):
        raise ValidationError("level must not be NaN")
    if s == -np.inf:
        return -np.inf
    if s == np.inf:
        return np.inf
    loss = spec.loss
    if spec.form is RiskForm.ECONOMIC_INDEX:
        if loss.kind is not LossKind.INDEX_LOGARITHMIC:
            raise ClosedFormUnavailable("no closed form for this economic index loss")
        if s <= 0.0:
            return 0.0
        return s / (1.0 - geometric_mean(d, probs) * math.exp(-spec.c0))
    if loss.kind is LossKind.QUADRATIC:
        if s <= -1.0:
            return -np.inf
        return (s + 1.0) / power_mean(d, probs, 2.0) - 1.0
    if s > 0.0:
        return np.inf
    scale = geometric_mean(d, probs) if loss.kind is LossKind.LOGARITHMIC else power_mean(d, probs, _power_exponent(loss))
    if scale == 0.0:
        return -np.inf
    return s / scale


# ---------------------------------------------------------------- first-order route


@dataclass(frozen=True)
class BetaSolution:
    beta: float
    alpha: float
    residual: float


def solve_beta(spec: RiskMeasureSpec, q_density: Density, m: float, tol: float = 1e-10) -> BetaSolution:
    """Penalty value through the first-order condition of the sublevel problem.

    Certainty equivalent: find ``beta > 0`` with
    ``E[l(h(beta d))] = l(m)`` and return ``alpha = E_Q[h(beta d)]``.
    Economic index: find ``beta > 0`` with ``E[l(h(m beta d))] = c0`` and
    return ``alpha = E_Q[m h(m beta d)]``. ``h`` is the right inverse of
    ``l'``. The residual is increasing in ``beta``, so the root is bisected
    on ``log beta``. When the root sits at ``beta = 0`` (flat part of the
    quadratic loss) the limit value ``E_Q[h(0)] = -1`` is returned with
    ``beta = 0``.
    """
    d = q_density.values
    probs = q_density.space.probs
    loss = spec.loss
    if not math.isfinite(m):
        raise NoSolutionError("the first-order equation needs a finite level")
    if degenerate_density(q_density) and loss.kind is not LossKind.QUADRATIC:
        raise NoSolutionError("density has a zero atom; the first-order equation has no interior root")

    if spec.form is RiskForm.ECONOMIC_INDEX:
        if m <= 0.0:
            raise NoSolutionError("no beta > 0 solves the index equation at a nonpositive level")
        target = spec.c0

        def arg(beta: float) -> np.ndarray:
            return m * beta * d

        def alpha_of(beta: float) -> float:
            return float(probs @ (d * m * loss.derivative_inverse(arg(beta))))

    else:
        target = float(loss.loss(np.array(m)))
        if not math.isfinite(target):
            raise NoSolutionError(f"level {m!r} is outside the loss domain")

        def arg(beta: float) -> np.ndarray:
            return beta * d

        def alpha_of(beta: float) -> float:
            return float(probs @ (d * loss.derivative_inverse(arg(beta))))

        if loss.kind is LossKind.QUADRATIC and target <= -0.5:
            return BetaSolution(0.0, alpha_of(0.0), 0.0)

    def residual(t: float) -> float:
        with np.errstate(all="ignore"):
            v = float(probs @ loss.loss(loss.derivative_inverse(arg(math.exp(t)))))
        return v - target

    lo, hi = -60.0, 60.0
    r_lo, r_hi = residual(lo), residual(hi)
    if not (r_lo < 0.0 < r_hi):
        raise NoSolutionError("first-order residual has no sign change on the search range")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if residual(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    t = 0.5 * (lo + hi)
    beta = math.exp(t)
    return BetaSolution(beta, alpha_of(beta), residual(t))
