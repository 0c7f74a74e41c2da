"""
Exact rational polynomial arithmetic and the Legendre system.

Polynomials are stored as ascending coefficient tuples of Fraction, so every
coefficient integral built on top of them is exact.
"""

from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Tuple, Union
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre as npleg

from sde_taylor.config import MAX_BASIS_INDEX
from sde_taylor.exceptions import ConfigError, ParameterError

Number = Union[int, Fraction]


def _strip(coeffs: Iterable[Number]) -> Tuple[Fraction, ...]:
    items = [Fraction(c) for c in coeffs]
    while items and items[-1] == 0:
        items.pop()
    return tuple(items)


class RationalPolynomial:
    """Immutable polynomial with Fraction coefficients, lowest degree first."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable[Number] = ()):
        object.__setattr__(self, "coeffs", _strip(coeffs))

    def __setattr__(self, name, value):
        raise AttributeError("RationalPolynomial is immutable")

    @property
    def degree(self) -> int:
        # zero polynomial has degree -1
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return not self.coeffs

    def __call__(self, x: Number) -> Fraction:
        x = Fraction(x)
        result = Fraction(0)
        for c in reversed(self.coeffs):
            result = result * x + c
        return result

    def __add__(self, other: "RationalPolynomial") -> "RationalPolynomial":
        other = _coerce(other)
        n = max(len(self.coeffs), len(other.coeffs))
        a = self.coeffs + (Fraction(0),) * (n - len(self.coeffs))
        b = other.coeffs + (Fraction(0),) * (n - len(other.coeffs))
        return RationalPolynomial(x + y for x, y in zip(a, b))

    __radd__ = __add__

    def __neg__(self) -> "RationalPolynomial":
        return RationalPolynomial(-c for c in self.coeffs)

    def __sub__(self, other: "RationalPolynomial") -> "RationalPolynomial":
        return self + (-_coerce(other))

    def __rsub__(self, other) -> "RationalPolynomial":
        return _coerce(other) - self

    def __mul__(self, other) -> "RationalPolynomial":
        return poly_mul(self, _coerce(other))

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction)):
            other = RationalPolynomial([other])
        if not isinstance(other, RationalPolynomial):
            return NotImplemented
        return self.coeffs == other.coeffs

    def __hash__(self) -> int:
        return hash(self.coeffs)

    def __repr__(self) -> str:
        return f"RationalPolynomial({[str(c) for c in self.coeffs]})"


def _coerce(value) -> RationalPolynomial:
    if isinstance(value, RationalPolynomial):
        return value
    if isinstance(value, (int, Fraction)):
        return RationalPolynomial([value])
    raise TypeError(f"cannot combine RationalPolynomial with {type(value).__name__}")


def poly_mul(p: RationalPolynomial, q: RationalPolynomial) -> RationalPolynomial:
    if p.is_zero() or q.is_zero():
        return RationalPolynomial()
    out = [Fraction(0)] * (len(p.coeffs) + len(q.coeffs) - 1)
    for i, a in enumerate(p.coeffs):
        if a == 0:
            continue
        for j, b in enumerate(q.coeffs):
            out[i + j] += a * b
    return RationalPolynomial(out)


def antiderivative_from(p: RationalPolynomial, lower: Number) -> RationalPolynomial:
    """Return Q with Q(x) = integral of p from lower to x."""
    prim = RationalPolynomial([Fraction(0)] + [c / (i + 1) for i, c in enumerate(p.coeffs)])
    return prim - RationalPolynomial([prim(lower)])


def definite_integral(p: RationalPolynomial, a: Number, b: Number) -> Fraction:
    return antiderivative_from(p, a)(b)


@lru_cache(maxsize=None)
def _legendre_cached(n: int) -> RationalPolynomial:
    if n == 0:
        return RationalPolynomial([1])
    if n == 1:
        return RationalPolynomial([0, 1])
    x = RationalPolynomial([0, 1])
    prev, cur = _legendre_cached(n - 2), _legendre_cached(n - 1)
    # Bonnet: n P_n = (2n-1) x P_{n-1} - (n-1) P_{n-2}
    return (Fraction(2 * n - 1, n) * (x * cur)) - (Fraction(n - 1, n) * prev)


def legendre(n: int) -> RationalPolynomial:
    """
    Exact Legendre polynomial P_n on [-1, 1].

    Raises:
        ParameterError: negative n
        ConfigError: n above MAX_BASIS_INDEX
    """
    if n < 0:
        raise ParameterError(f"Legendre index must be non-negative, got {n}")
    if n > MAX_BASIS_INDEX:
        raise ConfigError(f"Legendre index {n} exceeds MAX_BASIS_INDEX={MAX_BASIS_INDEX}")
    return _legendre_cached(n)


@dataclass(frozen=True)
class ScaledBasisSpec:
    """Orthonormal Legendre basis phi_j on the interval [left, left + step]."""

    step: float
    left: float = 0.0

    def __post_init__(self):
        if not self.step > 0:
            raise ParameterError(f"step must be positive, got {self.step}")

    def to_unit(self, x):
        return (np.asarray(x, dtype=float) - self.left - self.step / 2.0) * 2.0 / self.step

    def phi(self, j: int, x):
        if j < 0:
            raise ParameterError(f"basis index must be non-negative, got {j}")
        unit = np.zeros(j + 1)
        unit[j] = 1.0
        return np.sqrt((2 * j + 1) / self.step) * npleg.legval(self.to_unit(x), unit)

    def phi_matrix(self, q: int, x) -> np.ndarray:
        """Rows phi_0..phi_q evaluated at x, shape (q+1, len(x))."""
        u = self.to_unit(x)
        vals = npleg.legvander(u, q).T
        scale = np.sqrt((2 * np.arange(q + 1) + 1) / self.step)
        return vals * scale[:, None]
