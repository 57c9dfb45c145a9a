"""Finite probability spaces and random vectors.

Every space of random variables used in the package is realised on a finite
scenario set, so a random vector with ``n`` components is a ``(k, n)`` array
whose rows are scenarios. Expectations are probability-weighted sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConeMembershipError, DomainError, ShapeError, ValidationError

PROB_SUM_TOL = 1e-12
DENSITY_MEAN_TOL = 1e-10
POSITIVE_TOL = 1e-14


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FiniteProbabilitySpace:
    """Scenario probabilities ``p_1, ..., p_k``.

    Zero-probability scenarios are rejected, so almost-sure statements are
    pointwise statements.
    """

    probs: np.ndarray

    def __post_init__(self) -> None:
        p = np.array(self.probs, dtype=float).reshape(-1)
        if p.size == 0:
            raise ValidationError("probability space needs at least one scenario")
        if not np.all(np.isfinite(p)):
            raise ValidationError("probabilities must be finite")
        if np.any(p <= 0.0):
            raise ValidationError("probabilities must be strictly positive")
        if abs(p.sum() - 1.0) > PROB_SUM_TOL:
            raise ValidationError(f"probabilities must sum to 1 (got {p.sum():.15g})")
        object.__setattr__(self, "probs", _frozen(p))

    @classmethod
    def uniform(cls, k: int) -> "FiniteProbabilitySpace":
        return cls(np.full(k, 1.0 / k))

    @property
    def size(self) -> int:
        return int(self.probs.size)

    def expect(self, values: np.ndarray) -> np.ndarray:
        """Expectation along the scenario axis (axis 0)."""
        v = np.asarray(values, dtype=float)
        if v.shape[0] != self.size:
            raise ShapeError(f"expected {self.size} scenarios, got {v.shape[0]}")
        return np.tensordot(self.probs, v, axes=(0, 0))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FiniteProbabilitySpace):
            return NotImplemented
        return self.probs.shape == other.probs.shape and bool(np.all(self.probs == other.probs))

    def __hash__(self) -> int:
        return hash(self.probs.tobytes())


@dataclass(frozen=True, eq=False)
class RandomVector:
    """Values of an ``R^n``-valued random variable, one row per scenario.

    A one-dimensional input is read as a scalar random variable (``n = 1``).
    """

    values: np.ndarray
    space: FiniteProbabilitySpace

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v.reshape(-1, 1)
        if v.ndim != 2:
            raise ShapeError("random vector values must be a (scenarios, entities) matrix")
        if v.shape[0] != self.space.size:
            raise ShapeError(
                f"random vector has {v.shape[0]} rows but the space has {self.space.size} scenarios"
            )
        if v.shape[1] == 0:
            raise ShapeError("random vector needs at least one entity")
        if not np.all(np.isfinite(v)):
            raise ValidationError("random vector entries must be finite")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def n(self) -> int:
        return int(self.values.shape[1])

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]

    def scalar_values(self) -> np.ndarray:
        """The single column of a scalar random variable."""
        if self.n != 1:
            raise ShapeError(f"expected a scalar random variable, got {self.n} entities")
        return self.values[:, 0]

    def scaled(self, factor: float) -> "RandomVector":
        return RandomVector(self.values * factor, self.space)

    def __add__(self, other: "RandomVector") -> "RandomVector":
        _check_compatible(self, other)
        return RandomVector(self.values + other.values, self.space)


@dataclass(frozen=True, eq=False)
class Density:
    """A Radon-Nikodym derivative ``dQ/dP``: nonnegative with unit mean."""

    values: np.ndarray
    space: FiniteProbabilitySpace

    def __post_init__(self) -> None:
        d = np.array(self.values, dtype=float).reshape(-1)
        if d.size != self.space.size:
            raise ShapeError(f"density has {d.size} entries, space has {self.space.size}")
        if not np.all(np.isfinite(d)):
            raise ValidationError("density entries must be finite")
        if np.any(d < 0.0):
            raise ConeMembershipError("density entries must be nonnegative")
        mean = float(self.space.probs @ d)
        if abs(mean - 1.0) > DENSITY_MEAN_TOL:
            raise ValidationError(f"density must have mean 1 under P (got {mean:.15g})")
        object.__setattr__(self, "values", _frozen(d))

    @classmethod
    def from_measure(cls, q: np.ndarray, space: FiniteProbabilitySpace) -> "Density":
        """Density of the probability vector ``q`` with respect to ``space``."""
        q = np.asarray(q, dtype=float)
        return cls(q / space.probs, space)

    @classmethod
    def one(cls, space: FiniteProbabilitySpace) -> "Density":
        return cls(np.ones(space.size), space)

    @property
    def measure(self) -> np.ndarray:
        """Scenario probabilities of the measure Q."""
        return self.values * self.space.probs

    def as_random_vector(self) -> RandomVector:
        return RandomVector(self.values, self.space)


@dataclass(frozen=True, eq=False)
class ConeSpec:
    """Nonnegative orthant cone in ``(k, n)`` random vectors.

    ``pi`` is the strictly positive element used to normalise dual elements;
    by default it is the constant one.
    """

    space: FiniteProbabilitySpace
    n: int
    pi: np.ndarray | None = field(default=None)

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValidationError("cone dimension must be positive")
        pi = np.ones((self.space.size, self.n)) if self.pi is None else np.array(self.pi, dtype=float)
        if pi.ndim == 1:
            pi = pi.reshape(-1, 1)
        if pi.shape != (self.space.size, self.n):
            raise ShapeError("pi must have one row per scenario and one column per entity")
        if not np.all(pi > POSITIVE_TOL):
            raise ConeMembershipError("pi must be strictly positive in every scenario and coordinate")
        object.__setattr__(self, "pi", _frozen(pi))

    def pi_vector(self) -> RandomVector:
        return RandomVector(self.pi, self.space)

    def contains(self, x: RandomVector) -> bool:
        _check_cone_shape(self, x)
        return bool(np.all(x.values >= 0.0))

    def strictly_contains(self, x: RandomVector) -> bool:
        _check_cone_shape(self, x)
        return bool(np.all(x.values > POSITIVE_TOL))


def _check_compatible(a: RandomVector, b: RandomVector) -> None:
    if a.space != b.space:
        raise ShapeError("random vectors live on different probability spaces")
    if a.values.shape != b.values.shape:
        raise ShapeError(f"shape mismatch: {a.values.shape} vs {b.values.shape}")


def _check_cone_shape(cone: ConeSpec, x: RandomVector) -> None:
    if x.space != cone.space or x.n != cone.n:
        raise ShapeError("random vector does not match the cone's space and dimension")


def pairing(xstar: RandomVector, x: RandomVector) -> float:
    """Bilinear pairing ``sum_w p_w sum_i xstar_i(w) x_i(w)``."""
    _check_compatible(xstar, x)
    return float(xstar.space.probs @ np.sum(xstar.values * x.values, axis=1))


def norm_p(x: RandomVector, p: float) -> float:
    """``(E |X|^p)^(1/p)`` with the Euclidean norm inside the expectation.

    ``p = inf`` gives the largest entry in absolute value. Exponents in
    ``(0, 1)`` and negative exponents are accepted and give the usual power
    means, which are not norms.
    """
    pointwise = np.sqrt(np.sum(x.values**2, axis=1))
    if np.isinf(p) and p > 0:
        return float(np.max(pointwise))
    if p == 0 or np.isnan(p):
        raise DomainError("norm exponent must be nonzero")
    return power_mean(pointwise, x.space.probs, p)


def power_mean(values: np.ndarray, probs: np.ndarray, a: float) -> float:
    """``(E[v^a])^(1/a)`` for nonnegative ``v``; zero entries are allowed.

    For ``a < 0`` a zero entry makes the mean zero.
    """
    v = np.asarray(values, dtype=float)
    if a < 0 and np.any(v <= 0.0):
        return 0.0
    with np.errstate(divide="ignore", over="ignore"):
        m = float(probs @ np.power(v, a))
        return float(m ** (1.0 / a))


def geometric_mean(values: np.ndarray, probs: np.ndarray) -> float:
    """``exp(E ln v)``; zero if ``v`` has a zero atom."""
    v = np.asarray(values, dtype=float)
    if np.any(v <= 0.0):
        return 0.0
    return float(np.exp(probs @ np.log(v)))


def normalize_dual(xstar: RandomVector, cone: ConeSpec | None = None) -> tuple[float, RandomVector]:
    """Split a nonzero cone element into ``scale * unit`` with ``<unit, pi> = 1``."""
    if cone is None:
        cone = ConeSpec(xstar.space, xstar.n)
    _check_cone_shape(cone, xstar)
    if np.any(xstar.values < 0.0):
        raise ConeMembershipError("dual element has a negative entry")
    if not np.any(xstar.values > 0.0):
        raise DomainError("cannot normalise the zero functional")
    scale = pairing(xstar, cone.pi_vector())
    return scale, RandomVector(xstar.values / scale, xstar.space)


def support_compatible(xstar: RandomVector, ystar: RandomVector | np.ndarray) -> bool:
    """True when ``ystar`` is strictly positive wherever ``xstar`` is nonzero."""
    y = ystar.scalar_values() if isinstance(ystar, RandomVector) else np.asarray(ystar, dtype=float).reshape(-1)
    if y.size != xstar.space.size:
        raise ShapeError("ystar must have one entry per scenario")
    active = np.any(xstar.values != 0.0, axis=1)
    return bool(np.all(y[active] > POSITIVE_TOL))
