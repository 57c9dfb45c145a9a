import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qrisk.convex_kit import (
    Box,
    BoxSet,
    Convexity,
    Method,
    PolyhedralSet,
    ScalarFunctionSpec,
    VertexSet,
    conjugate_numeric,
    left_inverse_bisect,
    left_inverse_convex,
    monotone_swap_check,
    penalty_bruteforce,
    penalty_convex,
    support_function,
)
from qrisk.errors import ContractViolation, PreconditionError, UndefinedValueError, UnsupportedSetError
from qrisk.prob_core import FiniteProbabilitySpace, RandomVector
from qrisk.risk_measures import RiskMeasureSpec, penalty_closed_form

ONE = FiniteProbabilitySpace([1.0])
U2 = FiniteProbabilitySpace.uniform(2)


def rv(values, space=ONE):
    return RandomVector(np.asarray(values, dtype=float).reshape(space.size, -1), space)


def quadratic(space: FiniteProbabilitySpace, a: np.ndarray, shift: float, analytic: bool = True) -> ScalarFunctionSpec:
    """``f(x) = E[a x^2 / 2] - shift`` on scalar random variables, with its conjugate."""
    a = np.asarray(a, dtype=float)
    p = space.probs

    def batch(X):
        return (X[:, :, 0] ** 2 * a / 2.0) @ p - shift

    def conj(y):
        return float(p @ (y[:, 0] ** 2 / (2.0 * a)) + shift)

    return ScalarFunctionSpec(batch, space, 1, convexity=Convexity.CONVEX, conjugate=conj if analytic else None)


HALF_SQUARE_MINUS_ONE = quadratic(ONE, np.array([1.0]), 1.0)


class TestSupportFunction:
    def test_origin(self):
        pts = VertexSet(np.zeros((1, 1, 1)))
        for x in (-3.0, 0.0, 2.5):
            assert support_function(pts, rv([x])) == 0.0

    def test_unit_box(self):
        xs = rv([[0.5, 2.0, 0.0]])
        assert support_function(BoxSet(0.0, 1.0), xs) == pytest.approx(2.5)
        assert support_function(VertexSet(np.eye(3).reshape(3, 1, 3)), xs) == 2.0

    def test_halfspace_is_unbounded_off_its_normal(self):
        half = PolyhedralSet(np.array([[1.0, 1.0]]), ("<=",), np.array([0.0]))
        assert support_function(half, rv([[1.0, 0.0]])) == np.inf
        assert support_function(half, rv([[2.0, 2.0]])) == pytest.approx(0.0, abs=1e-12)

    def test_empty_set(self):
        assert support_function(VertexSet(np.zeros((0, 1, 1))), rv([1.0])) == -np.inf
        assert support_function(BoxSet(1.0, 0.0), rv([1.0])) == -np.inf

    def test_unsupported(self):
        with pytest.raises(UnsupportedSetError):
            support_function(object(), rv([1.0]))

    @given(st.lists(st.floats(-3, 3), min_size=2, max_size=2), st.floats(0.1, 5.0))
    def test_box_and_polyhedron_agree(self, xs, scale):
        x = RandomVector(np.array(xs).reshape(2, 1), U2)
        box = support_function(BoxSet(-1.0, 2.0), x)
        poly = support_function(PolyhedralSet(np.zeros((0, 2)), (), np.zeros(0), -1.0, 2.0), x)
        assert box == pytest.approx(poly, abs=1e-10)
        assert support_function(BoxSet(-1.0, 2.0), x.scaled(scale)) == pytest.approx(scale * box, abs=1e-10)


class TestConjugate:
    def test_zero_function(self):
        f = ScalarFunctionSpec(lambda X: np.zeros(len(X)), ONE)
        assert conjugate_numeric(f, rv([0.0]), Box(-5.0, 5.0)).value == 0.0

    def test_half_square(self):
        f = quadratic(ONE, np.array([1.0]), 0.0, analytic=False)
        res = conjugate_numeric(f, rv([3.0]), Box(-10.0, 10.0))
        assert res.value == pytest.approx(4.5, abs=1e-3)
        assert res.exact

    def test_indicator_of_origin(self):
        f = ScalarFunctionSpec(lambda X: np.zeros(len(X)), ONE, domain=Box(0.0, 0.0))
        for y in (-2.0, 0.0, 3.0):
            assert conjugate_numeric(f, rv([y]), Box(-1.0, 1.0), resolution=21).value == 0.0


class TestPenaltyBruteforce:
    def test_infinite_level(self):
        assert penalty_bruteforce(HALF_SQUARE_MINUS_ONE, rv([1.0]), np.inf, Box(-1.0, 1.0)).value == np.inf
        with pytest.raises(UndefinedValueError):
            penalty_bruteforce(HALF_SQUARE_MINUS_ONE, rv([0.0]), np.inf, Box(-1.0, 1.0))

    def test_unbounded_direction_is_flagged(self):
        f = ScalarFunctionSpec(lambda X: X[:, 0, 0], ONE)
        res = penalty_bruteforce(f, rv([1.0]), 0.0, Box(-10.0, 10.0))
        assert res.value == pytest.approx(10.0)
        assert res.at_box_boundary

    def test_norm_ball(self):
        f = ScalarFunctionSpec(lambda X: np.linalg.norm(X[:, 0, :], axis=1), ONE, n=2)
        res = penalty_bruteforce(f, rv([[1.0, 0.0]]), 1.0, Box(-2.0, 2.0))
        assert res.value == pytest.approx(1.0, abs=1e-3)
        assert not res.at_box_boundary
        assert f(res.attained_at) <= 1.0 + 1e-8

    def test_empty_sublevel(self):
        assert penalty_bruteforce(HALF_SQUARE_MINUS_ONE, rv([1.0]), -2.0, Box(-3.0, 3.0)).value == -np.inf


class TestPenaltyConvex:
    def test_interval(self):
        res = penalty_convex(HALF_SQUARE_MINUS_ONE, rv([1.0]), 0.0)
        assert res.method is Method.CONVEX_DUAL
        assert res.value == pytest.approx(math.sqrt(2.0), abs=1e-7)

    def test_below_infimum(self):
        assert penalty_convex(HALF_SQUARE_MINUS_ONE, rv([1.0]), -1.5).value == -np.inf

    def test_zero_functional(self):
        assert penalty_convex(HALF_SQUARE_MINUS_ONE, rv([0.0]), 0.5).value == 0.0

    def test_needs_strict_sublevel_point(self):
        # m equals min f, attained at a single point: the dual formula is not exact there
        with pytest.raises(PreconditionError):
            penalty_convex(HALF_SQUARE_MINUS_ONE, rv([1.0]), -1.0, Box(-3.0, 3.0))

    def test_numeric_conjugate_route(self):
        f = quadratic(ONE, np.array([1.0]), 1.0, analytic=False)
        res = penalty_convex(f, rv([1.0]), 0.0, Box(-6.0, 6.0))
        assert res.value == pytest.approx(math.sqrt(2.0), abs=1e-3)


class TestLeftInverse:
    def test_identity(self):
        assert left_inverse_bisect(lambda m: m, 3.0) == pytest.approx(3.0, abs=1e-8)

    def test_flat_then_linear(self):
        def alpha(m):
            return m if m < -1.0 else -1.0

        assert left_inverse_bisect(alpha, -2.0) == pytest.approx(-2.0, abs=1e-8)

    def test_quadratic_closed_form_is_flat_below(self):
        # with the flat branch on the left, every level up to -1 is reached at -inf
        rho = RiskMeasureSpec.certainty_equivalent("quadratic")
        alpha = lambda m: penalty_closed_form(rho, np.ones(1), m, np.ones(1))  # noqa: E731
        assert left_inverse_bisect(alpha, -2.0) == -np.inf
        assert left_inverse_bisect(alpha, 0.0) == pytest.approx(0.0, abs=1e-8)

    def test_step(self):
        assert left_inverse_bisect(lambda m: 1.0 if m >= 5.0 else 0.0, 0.5) == pytest.approx(5.0, abs=1e-8)

    def test_infinite_answers(self):
        assert left_inverse_bisect(lambda m: 0.0, 1.0) == np.inf
        assert left_inverse_bisect(lambda m: 0.0, -1.0) == -np.inf

    def test_detects_decreasing_map(self):
        with pytest.raises(ContractViolation):
            left_inverse_bisect(lambda m: -m, 0.3)

    @given(
        st.lists(st.floats(-5, 5), min_size=1, max_size=6, unique=True),
        st.lists(st.floats(0.0, 3.0), min_size=7, max_size=7),
        st.floats(-10, 10),
    )
    def test_galois_characterisation(self, knots, jumps, s):
        """``m >= alpha^{-l}(s)`` exactly when ``alpha(m) >= s``, away from the boundary."""
        knots = sorted(knots)
        levels = np.cumsum(jumps[: len(knots) + 1]) - 4.0

        def alpha(m):
            return float(levels[np.searchsorted(knots, m, side="right")])

        inv = left_inverse_bisect(alpha, s)
        grid = np.linspace(-8, 8, 161)
        for m in grid:
            if math.isfinite(inv) and abs(m - inv) < 1e-6:
                continue
            assert (m >= inv) == (alpha(m) >= s)


class TestLeftInverseConvex:
    def test_very_negative_level(self):
        assert left_inverse_convex(HALF_SQUARE_MINUS_ONE, rv([1.0]), -1e6) == pytest.approx(-1.0, abs=1e-9)

    def test_inverts_penalty(self):
        assert left_inverse_convex(HALF_SQUARE_MINUS_ONE, rv([1.0]), math.sqrt(2.0)) == pytest.approx(0.0, abs=1e-6)

    def test_minus_infinity(self):
        assert left_inverse_convex(HALF_SQUARE_MINUS_ONE, rv([1.0]), -np.inf) == -1.0


class TestSwap:
    def test_single_map(self):
        res = monotone_swap_check([lambda m: m], [2.0])
        assert res.ok
        assert res.lhs == pytest.approx(2.0, abs=1e-8)

    def test_identity_family(self):
        r = [0.3, -1.0, 2.5]
        res = monotone_swap_check([lambda m: m] * 3, r)
        assert res.ok
        assert res.rhs == pytest.approx(max(r), abs=1e-8)

    def test_random_piecewise_linear(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            alphas = []
            for _ in range(5):
                xs = np.sort(rng.uniform(-5, 5, 4))
                ys = np.cumsum(rng.uniform(0, 2, 4))
                alphas.append(lambda m, xs=xs, ys=ys: float(np.interp(m, xs, ys, left=ys[0] - 1e-3 * (xs[0] - m), right=ys[-1] + (m - xs[-1]))))
            r = rng.uniform(0.5, 4.0, 5)
            assert monotone_swap_check(alphas, r).ok


@given(
    st.lists(st.floats(0.3, 3.0), min_size=2, max_size=2),
    st.lists(st.floats(0.1, 2.0), min_size=2, max_size=2),
    st.floats(-0.8, 2.0),
)
def test_convex_route_matches_grid(a, xs, m):
    f = quadratic(U2, np.array(a), 1.0)
    x = RandomVector(np.array(xs).reshape(2, 1), U2)
    dual = penalty_convex(f, x, m).value
    brute = penalty_bruteforce(f, x, m, Box(-8.0, 8.0), resolution=81).value
    assert brute <= dual + 1e-9
    assert dual == pytest.approx(brute, abs=5e-3)


@given(st.floats(0.2, 3.0), st.floats(0.1, 4.0), st.floats(-0.9, 2.0))
def test_penalty_is_homogeneous_and_monotone(c, x, m):
    base = penalty_convex(HALF_SQUARE_MINUS_ONE, rv([x]), m).value
    assert penalty_convex(HALF_SQUARE_MINUS_ONE, rv([c * x]), m).value == pytest.approx(c * base, rel=1e-6, abs=1e-9)
    assert penalty_convex(HALF_SQUARE_MINUS_ONE, rv([x]), m + 0.5).value >= base - 1e-9
    # closed form: x sqrt(2 (m + 1))
    assert base == pytest.approx(x * math.sqrt(2.0 * (m + 1.0)), rel=1e-6)
