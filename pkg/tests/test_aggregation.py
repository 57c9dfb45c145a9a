import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import clearing_by_hand_two_bank, en_conjugate_grid, two_bank_cycle_liabilities
from qrisk.aggregation import (
    AggregatorSpec,
    Network,
    aggregate,
    aggregate_points,
    clearing_batch,
    clearing_fixed_point,
    clearing_lp,
    conjugate_phi,
    expected_perspective,
    phi_perspective,
)
from qrisk.errors import DomainError, ShapeError, ValidationError
from qrisk.prob_core import FiniteProbabilitySpace, RandomVector

CYCLE = Network(two_bank_cycle_liabilities())
EN = AggregatorSpec.eisenberg_noe(CYCLE)


def decoupled(to_society):
    n = len(to_society)
    L = np.zeros((n + 1, n + 1))
    L[1:, 0] = to_society
    return Network(L)


def random_network(rng, n):
    L = np.zeros((n + 1, n + 1))
    L[1:, 0] = rng.uniform(0.1, 2.0, n)
    mask = rng.random((n, n)) < 0.6
    L[1:, 1:] = np.where(mask, rng.uniform(0.0, 2.0, (n, n)), 0.0)
    np.fill_diagonal(L[1:, 1:], 0.0)
    return Network(L)


networks = st.builds(
    lambda seed, n: random_network(np.random.default_rng(seed), n),
    st.integers(0, 2**32 - 1),
    st.integers(1, 5),
)


class TestNetwork:
    def test_cycle_properties(self):
        np.testing.assert_array_equal(CYCLE.pbar, [2.0, 2.0])
        np.testing.assert_array_equal(CYCLE.interbank, [[0.0, 0.5], [0.5, 0.0]])
        np.testing.assert_array_equal(CYCLE.to_society, [0.5, 0.5])
        assert CYCLE.max_aggregate == 2.0

    def test_society_liability_required(self):
        L = two_bank_cycle_liabilities()
        L[2, 0] = 0.0
        with pytest.raises(ValidationError, match="nonzero liability to society"):
            Network(L)

    def test_society_owes_nothing(self):
        L = two_bank_cycle_liabilities()
        L[0, 1] = 1.0
        with pytest.raises(ValidationError):
            Network(L)

    def test_no_self_liability(self):
        L = two_bank_cycle_liabilities()
        L[1, 1] = 1.0
        with pytest.raises(ValidationError):
            Network(L)

    def test_shape_and_sign(self):
        with pytest.raises(ValidationError):
            Network(np.zeros((2, 3)))
        L = two_bank_cycle_liabilities()
        L[1, 2] = -1.0
        with pytest.raises(ValidationError):
            Network(L)

    @given(networks)
    def test_relative_rows_sum_to_one(self, net):
        np.testing.assert_allclose(net.relative[1:].sum(axis=1), 1.0, atol=1e-12)

    def test_network_only_for_network_aggregator(self):
        with pytest.raises(ValidationError):
            AggregatorSpec("sum", CYCLE)
        with pytest.raises(ValidationError):
            AggregatorSpec("eisenberg_noe")


class TestAggregate:
    def test_sum(self):
        assert aggregate(AggregatorSpec.sum(), np.array([1.0, 2.0, 3.0])) == 6.0

    def test_total_loss(self):
        assert aggregate(AggregatorSpec.total_loss(), np.array([1.0, -2.0, 3.0])) == -2.0

    def test_exponential(self):
        assert aggregate(AggregatorSpec.exponential(), np.array([-1.0, -1.0])) == -2.0

    def test_two_bank_cycle(self):
        assert aggregate(EN, np.array([1.0, 0.0])) == pytest.approx(1.0, abs=1e-10)

    def test_random_vector_lift(self):
        space = FiniteProbabilitySpace.uniform(2)
        y = aggregate(AggregatorSpec.sum(), RandomVector(np.array([[1.0, 2.0], [3.0, -1.0]]), space))
        np.testing.assert_array_equal(y.scalar_values(), [3.0, 2.0])

    def test_network_domain(self):
        with pytest.raises(DomainError):
            aggregate(EN, np.array([-0.1, 1.0]))
        with pytest.raises(ShapeError):
            aggregate(EN, np.array([1.0, 1.0, 1.0]))

    @pytest.mark.parametrize("kind", ["sum", "total_loss", "exponential", "eisenberg_noe"])
    @given(seed=st.integers(0, 2**32 - 1))
    def test_increasing(self, kind, seed):
        rng = np.random.default_rng(seed)
        spec = EN if kind == "eisenberg_noe" else AggregatorSpec(kind)
        lo = 0.0 if kind == "eisenberg_noe" else -3.0
        x = rng.uniform(lo, 3.0, (20, 2))
        y = x + rng.uniform(0.0, 1.0, (20, 2))
        assert np.all(aggregate_points(spec, y) >= aggregate_points(spec, x) - 1e-12)


class TestClearing:
    def test_decoupled(self):
        net = decoupled([1.0, 2.0, 0.5])
        x = np.array([0.3, 5.0, 0.5])
        np.testing.assert_allclose(clearing_fixed_point(net, x).payments, [0.3, 2.0, 0.5])
        assert clearing_lp(net, x).lambda_value == pytest.approx(0.3 + 2.0 + 0.5, abs=1e-12)

    def test_cycle_zero_shock(self):
        np.testing.assert_allclose(clearing_fixed_point(CYCLE, np.zeros(2)).payments, [0.0, 0.0], atol=1e-11)
        assert clearing_lp(CYCLE, np.zeros(2)).lambda_value == pytest.approx(0.0, abs=1e-12)

    def test_full_payment(self):
        res = clearing_fixed_point(CYCLE, np.array([2.0, 3.0]))
        np.testing.assert_array_equal(res.payments, [2.0, 2.0])

    def test_cycle_shock(self):
        fp = clearing_fixed_point(CYCLE, np.array([1.0, 0.0]))
        lp = clearing_lp(CYCLE, np.array([1.0, 0.0]))
        np.testing.assert_allclose(fp.payments, [4.0 / 3.0, 2.0 / 3.0], atol=1e-10)
        np.testing.assert_allclose(lp.payments, [4.0 / 3.0, 2.0 / 3.0], atol=1e-10)
        assert fp.lambda_value == pytest.approx(1.0, abs=1e-10)
        assert lp.lambda_value == pytest.approx(1.0, abs=1e-10)

    @given(st.floats(0.0, 3.0), st.floats(0.0, 3.0))
    def test_cycle_matches_hand_iteration(self, x1, x2):
        np.testing.assert_allclose(clearing_fixed_point(CYCLE, np.array([x1, x2])).payments, clearing_by_hand_two_bank(x1, x2), atol=1e-9)

    @given(networks, st.integers(0, 2**32 - 1))
    def test_fixed_point_and_lp_agree(self, net, seed):
        x = np.random.default_rng(seed).uniform(0.0, 2.0, net.n)
        fp = clearing_fixed_point(net, x)
        lp = clearing_lp(net, x)
        assert fp.lambda_value == pytest.approx(lp.lambda_value, abs=1e-8)
        p = fp.payments
        assert np.all(p >= -1e-12) and np.all(p <= net.pbar + 1e-12)
        residual = np.abs(p - np.minimum(net.pbar, x + net.interbank.T @ p))
        assert residual.max() <= 1e-10

    @given(networks, st.integers(0, 2**32 - 1))
    def test_batch_matches_single(self, net, seed):
        X = np.random.default_rng(seed).uniform(0.0, 2.0, (6, net.n))
        batch = clearing_batch(net, X)
        for row, p in zip(X, batch):
            np.testing.assert_allclose(p, clearing_fixed_point(net, row).payments, atol=1e-10)


class TestConjugate:
    def test_exponential_at_ones(self):
        assert conjugate_phi(AggregatorSpec.exponential(), np.ones(3)) == 0.0

    def test_sum(self):
        assert conjugate_phi(AggregatorSpec.sum(), np.array([1.0, 1.0])) == 0.0
        assert conjugate_phi(AggregatorSpec.sum(), np.array([1.0, 0.9])) == np.inf

    def test_total_loss(self):
        assert conjugate_phi(AggregatorSpec.total_loss(), np.array([0.0, 1.0, 0.4])) == 0.0
        assert conjugate_phi(AggregatorSpec.total_loss(), np.array([1.2, 0.5])) == np.inf

    def test_negative_argument(self):
        for spec in (AggregatorSpec.exponential(), EN):
            assert conjugate_phi(spec, np.array([-0.1, 1.0])) == np.inf

    def test_network_at_zero_is_sup(self):
        assert conjugate_phi(EN, np.zeros(2)) == pytest.approx(EN.phi_at_zero, abs=1e-12)

    @given(st.lists(st.floats(0.0, 3.0), min_size=3, max_size=3))
    def test_decoupled_closed_form(self, xs):
        net = decoupled([1.0, 0.5, 2.0])
        expected = float(np.sum(net.pbar * np.maximum(net.to_society - np.array(xs), 0.0)))
        assert conjugate_phi(AggregatorSpec.eisenberg_noe(net), np.array(xs)) == pytest.approx(expected, abs=1e-8)

    @given(st.lists(st.floats(0.0, 2.0), min_size=2, max_size=2))
    def test_network_grid_oracle(self, xs):
        xs = np.array(xs)
        grid = en_conjugate_grid(CYCLE.pbar, CYCLE.interbank, CYCLE.to_society, xs)
        assert conjugate_phi(EN, xs) == pytest.approx(grid, abs=1e-3)

    @pytest.mark.parametrize("kind", ["sum", "total_loss", "exponential", "eisenberg_noe"])
    @given(seed=st.integers(0, 2**32 - 1))
    def test_fenchel_young(self, kind, seed):
        """``Phi(x*) >= Lambda(x) - <x*, x>`` for every ``x``."""
        rng = np.random.default_rng(seed)
        spec = EN if kind == "eisenberg_noe" else AggregatorSpec(kind)
        xs = np.ones(2) if kind == "sum" else rng.uniform(0.0, 1.0 if kind == "total_loss" else 2.0, 2)
        phi = conjugate_phi(spec, xs)
        lo = 0.0 if kind == "eisenberg_noe" else -3.0
        X = rng.uniform(lo, 3.0, (50, 2))
        assert np.all(aggregate_points(spec, X) - X @ xs <= phi + 1e-9)


class TestPerspective:
    @given(st.floats(0.01, 10.0))
    def test_exponential_at_ones(self, y):
        assert phi_perspective(AggregatorSpec.exponential(), np.full(3, y), y) == pytest.approx(0.0, abs=1e-12)

    @given(st.floats(0.01, 10.0))
    def test_exponential_scalar(self, y):
        assert phi_perspective(AggregatorSpec.exponential(), np.array([2.0 * y]), y) == pytest.approx(2.0 * y * math.log(2.0), rel=1e-12)

    @given(st.lists(st.floats(0.0, 3.0), min_size=2, max_size=2))
    def test_network_scaling(self, xs):
        xs = np.array(xs)
        net = AggregatorSpec.eisenberg_noe(decoupled([1.0, 2.0]))
        assert phi_perspective(net, xs, 2.0) == pytest.approx(2.0 * conjugate_phi(net, xs / 2.0), abs=1e-12)

    def test_scale_must_be_positive(self):
        with pytest.raises(DomainError):
            phi_perspective(EN, np.ones(2), 0.0)

    def test_expected_perspective_support(self):
        probs = np.array([0.5, 0.5])
        X = np.array([[1.0, 1.0], [0.0, 0.0]])
        ex = AggregatorSpec.exponential()
        assert expected_perspective(ex, X, np.array([1.0, 0.0]), probs) == pytest.approx(0.0)
        assert expected_perspective(ex, X, np.array([0.0, 2.0]), probs) == np.inf
