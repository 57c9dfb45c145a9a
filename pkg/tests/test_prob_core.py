import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qrisk.errors import ConeMembershipError, DomainError, ShapeError, ValidationError
from qrisk.prob_core import (
    ConeSpec,
    Density,
    FiniteProbabilitySpace,
    RandomVector,
    geometric_mean,
    norm_p,
    normalize_dual,
    pairing,
    power_mean,
    support_compatible,
)

U2 = FiniteProbabilitySpace.uniform(2)


@st.composite
def spaces(draw, max_k=5):
    k = draw(st.integers(1, max_k))
    w = draw(st.lists(st.floats(0.05, 1.0), min_size=k, max_size=k))
    p = np.array(w) / sum(w)
    p[-1] = 1.0 - p[:-1].sum()
    return FiniteProbabilitySpace(p)


@st.composite
def vector_pairs(draw, nonneg=False):
    space = draw(spaces())
    n = draw(st.integers(1, 3))
    lo = 0.0 if nonneg else -5.0
    vals = st.floats(lo, 5.0)
    a = np.array(draw(st.lists(vals, min_size=space.size * n, max_size=space.size * n))).reshape(space.size, n)
    b = np.array(draw(st.lists(vals, min_size=space.size * n, max_size=space.size * n))).reshape(space.size, n)
    return RandomVector(a, space), RandomVector(b, space)


class TestSpace:
    def test_rejects_bad_sum(self):
        with pytest.raises(ValidationError, match="probabilities must sum to 1"):
            FiniteProbabilitySpace([0.5, 0.6])

    def test_rejects_zero_atom(self):
        with pytest.raises(ValidationError, match="strictly positive"):
            FiniteProbabilitySpace([1.0, 0.0])

    def test_sum_tolerance_is_tight(self):
        FiniteProbabilitySpace([0.5, 0.5 + 5e-13])
        with pytest.raises(ValidationError):
            FiniteProbabilitySpace([0.5, 0.5 + 1e-11])

    def test_rejects_empty_and_nan(self):
        with pytest.raises(ValidationError):
            FiniteProbabilitySpace([])
        with pytest.raises(ValidationError):
            FiniteProbabilitySpace([np.nan, 1.0])

    def test_probs_are_frozen(self):
        with pytest.raises(ValueError):
            U2.probs[0] = 1.0


class TestRandomVector:
    def test_row_count_must_match(self):
        with pytest.raises(ShapeError):
            RandomVector(np.zeros((3, 1)), U2)

    def test_entries_must_be_finite(self):
        with pytest.raises(ValidationError):
            RandomVector([1.0, np.inf], U2)

    def test_one_dimensional_input_is_scalar(self):
        x = RandomVector([1.0, 2.0], U2)
        assert x.shape == (2, 1)
        np.testing.assert_array_equal(x.scalar_values(), [1.0, 2.0])

    def test_scalar_values_rejects_vectors(self):
        with pytest.raises(ShapeError):
            RandomVector(np.ones((2, 2)), U2).scalar_values()


class TestDensity:
    def test_mean_must_be_one(self):
        with pytest.raises(ValidationError):
            Density([1.0, 2.0], U2)

    def test_nonnegative(self):
        with pytest.raises(ConeMembershipError):
            Density([-1.0, 3.0], U2)

    def test_from_measure(self):
        space = FiniteProbabilitySpace([0.25, 0.75])
        d = Density.from_measure([0.5, 0.5], space)
        np.testing.assert_allclose(d.values, [2.0, 2.0 / 3.0])
        np.testing.assert_allclose(d.measure, [0.5, 0.5])


class TestCone:
    def test_pi_strictly_positive(self):
        with pytest.raises(ConeMembershipError):
            ConeSpec(U2, 1, pi=[1.0, 0.0])

    def test_membership(self):
        cone = ConeSpec(U2, 2)
        assert cone.contains(RandomVector(np.array([[0.0, 1.0], [2.0, 0.0]]), U2))
        assert not cone.strictly_contains(RandomVector(np.array([[0.0, 1.0], [2.0, 0.0]]), U2))
        assert not cone.contains(RandomVector(np.array([[-1.0, 1.0], [2.0, 0.0]]), U2))


class TestPairing:
    def test_zero_functional(self):
        assert pairing(RandomVector([0.0, 0.0], U2), RandomVector([3.0, -7.0], U2)) == 0.0

    def test_hand_value(self):
        assert pairing(RandomVector([1.0, 1.0], U2), RandomVector([3.0, 5.0], U2)) == 4.0

    def test_evaluation_functional(self):
        space = FiniteProbabilitySpace([0.2, 0.3, 0.5])
        x = RandomVector([4.0, -1.0, 2.5], space)
        e = RandomVector([0.0, 1.0 / 0.3, 0.0], space)
        assert pairing(e, x) == pytest.approx(-1.0, abs=1e-15)

    def test_space_mismatch(self):
        with pytest.raises(ShapeError):
            pairing(RandomVector([1.0, 1.0], U2), RandomVector([1.0], FiniteProbabilitySpace([1.0])))

    @given(vector_pairs())
    def test_symmetric_and_bilinear(self, pair):
        a, b = pair
        assert pairing(a, b) == pytest.approx(pairing(b, a), abs=1e-12)
        assert pairing(a.scaled(3.0), b) == pytest.approx(3.0 * pairing(a, b), rel=1e-12, abs=1e-10)
        assert pairing(a + a, b) == pytest.approx(2.0 * pairing(a, b), rel=1e-12, abs=1e-10)


class TestNorms:
    def test_constant_one(self):
        for p in (1.0, 2.0, 3.5, math.inf):
            assert norm_p(RandomVector([1.0, 1.0], U2), p) == pytest.approx(1.0, abs=1e-15)

    def test_hand_value(self):
        assert norm_p(RandomVector([0.0, 2.0], U2), 2.0) == pytest.approx(math.sqrt(2.0), abs=1e-15)

    def test_sup_norm(self):
        assert norm_p(RandomVector([-3.0, 2.0], U2), math.inf) == 3.0

    def test_zero_exponent_rejected(self):
        with pytest.raises(DomainError):
            norm_p(RandomVector([1.0, 2.0], U2), 0.0)

    @given(vector_pairs())
    def test_triangle_inequality(self, pair):
        a, b = pair
        for p in (1.0, 2.0, math.inf):
            assert norm_p(a + b, p) <= norm_p(a, p) + norm_p(b, p) + 1e-9

    @given(vector_pairs(nonneg=True))
    def test_power_means_are_ordered(self, pair):
        v = pair[0].values[:, 0] + 0.1
        probs = pair[0].space.probs
        means = [power_mean(v, probs, -1.0), geometric_mean(v, probs), power_mean(v, probs, 1.0), power_mean(v, probs, 2.0)]
        assert all(x <= y + 1e-9 for x, y in zip(means, means[1:]))

    def test_zero_atom_kills_negative_means(self):
        assert power_mean(np.array([0.0, 2.0]), U2.probs, -1.0) == 0.0
        assert geometric_mean(np.array([0.0, 2.0]), U2.probs) == 0.0


class TestNormalize:
    def test_already_normalised(self):
        x = RandomVector([0.5, 1.5], U2)
        scale, unit = normalize_dual(x)
        assert scale == 1.0
        np.testing.assert_array_equal(unit.values, x.values)

    def test_homogeneity(self):
        scale, unit = normalize_dual(RandomVector([0.5, 1.5], U2).scaled(2.0))
        assert scale == 2.0
        np.testing.assert_allclose(unit.values[:, 0], [0.5, 1.5])

    def test_hand_value(self):
        scale, unit = normalize_dual(RandomVector([1.0, 3.0], U2))
        assert scale == 2.0
        np.testing.assert_allclose(unit.values[:, 0], [0.5, 1.5])

    def test_zero_and_negative(self):
        with pytest.raises(DomainError):
            normalize_dual(RandomVector([0.0, 0.0], U2))
        with pytest.raises(ConeMembershipError):
            normalize_dual(RandomVector([1.0, -1.0], U2))

    @given(vector_pairs(nonneg=True), st.floats(0.1, 10.0))
    def test_scale_times_unit_recovers_input(self, pair, c):
        x = pair[0]
        if not np.any(x.values > 0):
            return
        s1, u1 = normalize_dual(x)
        s2, u2 = normalize_dual(x.scaled(c))
        np.testing.assert_allclose(s1 * u1.values, x.values, rtol=1e-12, atol=1e-12)
        assert s2 == pytest.approx(c * s1, rel=1e-12)
        np.testing.assert_allclose(u1.values, u2.values, rtol=1e-10, atol=1e-12)
        assert pairing(u1, ConeSpec(x.space, x.n).pi_vector()) == pytest.approx(1.0, abs=1e-12)


class TestSupportCompatible:
    def test_positive_ystar(self):
        assert support_compatible(RandomVector([1.0, 2.0], U2), np.array([0.3, 0.1]))

    def test_zero_xstar(self):
        assert support_compatible(RandomVector([0.0, 0.0], U2), np.array([0.0, 0.0]))

    def test_violation(self):
        assert not support_compatible(RandomVector([1.0, 0.0], U2), np.array([0.0, 1.0]))
        assert support_compatible(RandomVector([0.0, 1.0], U2), np.array([0.0, 1.0]))
