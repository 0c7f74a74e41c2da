"""
Exact Fourier-Legendre coefficients of the iterated-integral kernels.

For a weight profile (l_1, ..., l_k) the kernel on one step [t, t+dt] is
    K(t_1, ..., t_k) = prod_i (t - t_i)^{l_i}   for t_1 < ... < t_k
and its coefficient against phi_{j_1}(t_1)...phi_{j_k}(t_k) is
    C = sqrt(prod (2j_i+1)) / 2^{k+sum l} * dt^{k/2+sum l} * Cbar
where Cbar is the rational nested integral over [-1, 1] of
    P_{j_i}(x_i) * (-(x_i+1))^{l_i}
taken innermost (i=1) to outermost (i=k).
"""

import itertools
import logging
import math
import os
import threading
import time
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from sde_taylor.config import MAX_BASIS_INDEX
from sde_taylor.exceptions import CacheError, ConfigError, ParameterError, ProfileError
from sde_taylor.legendre import RationalPolynomial, antiderivative_from, legendre, poly_mul

logger = logging.getLogger(__name__)

Index = Tuple[int, ...]

SUPPORTED_PROFILES = frozenset([
    (0,), (1,), (2,),
    (0, 0), (0, 1), (1, 0),
    (0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1),
    (0, 0, 0, 0),
    (0, 0, 0, 0, 0),
])

# (-(x+1))^l on [-1, 1]
_WEIGHT_POLYS = {
    0: RationalPolynomial([1]),
    1: RationalPolynomial([-1, -1]),
    2: RationalPolynomial([1, 2, 1]),
}


@dataclass(frozen=True)
class WeightProfile:
    """Exponent tuple (l_1, ..., l_k), innermost integration first."""

    exponents: Tuple[int, ...]

    def __post_init__(self):
        exps = tuple(int(e) for e in self.exponents)
        object.__setattr__(self, "exponents", exps)
        if exps not in SUPPORTED_PROFILES:
            raise ProfileError(f"unsupported weight profile {exps}")

    @classmethod
    def from_label(cls, label: str) -> "WeightProfile":
        label = label.strip()
        if not label or not label.isdigit():
            raise ProfileError(f"bad profile label '{label}'")
        return cls(tuple(int(c) for c in label))

    @property
    def label(self) -> str:
        return "".join(str(e) for e in self.exponents)

    @property
    def multiplicity(self) -> int:
        return len(self.exponents)

    @property
    def weight_sum(self) -> int:
        return sum(self.exponents)

    @property
    def scale_exponent(self) -> float:
        return self.multiplicity / 2.0 + self.weight_sum

    @property
    def divisor(self) -> int:
        return 2 ** (self.multiplicity + self.weight_sum)

    def is_unweighted(self) -> bool:
        return self.weight_sum == 0

    def __str__(self):
        return self.label


@lru_cache(maxsize=None)
def _prefix_antiderivative(exponents: Tuple[int, ...], indices: Index) -> RationalPolynomial:
    # F_i(x) = int_{-1}^{x} P_{j_i}(y) w_i(y) F_{i-1}(y) dy, F_0 = 1
    if not indices:
        return RationalPolynomial([1])
    inner = _prefix_antiderivative(exponents[:-1], indices[:-1])
    integrand = poly_mul(poly_mul(legendre(indices[-1]), _WEIGHT_POLYS[exponents[-1]]), inner)
    return antiderivative_from(integrand, -1)


def _check_indices(profile: WeightProfile, indices: Sequence[int]) -> Index:
    indices = tuple(int(j) for j in indices)
    if len(indices) != profile.multiplicity:
        raise ParameterError(
            f"profile {profile.label} needs {profile.multiplicity} indices, got {len(indices)}")
    for j in indices:
        if j < 0:
            raise ParameterError(f"basis index must be non-negative, got {j}")
        if j > MAX_BASIS_INDEX:
            raise ConfigError(f"basis index {j} exceeds MAX_BASIS_INDEX={MAX_BASIS_INDEX}")
    return indices


def raw_coefficient(profile: WeightProfile, indices: Sequence[int]) -> Fraction:
    """
    Exact Cbar for indices (j_1, ..., j_k).

    Prefix antiderivatives are memoized, so building a whole table shares
    every inner integral.
    """
    indices = _check_indices(profile, indices)
    return _prefix_antiderivative(profile.exponents, indices)(1)


def coefficient_weight(profile: WeightProfile, indices: Index) -> Fraction:
    """prod(2j+1) / 4^{k+sum l}: the exact factor turning Cbar^2 into C^2 at dt=1."""
    prod = 1
    for j in indices:
        prod *= 2 * j + 1
    return Fraction(prod, profile.divisor ** 2)


def scaled_coefficient(raw: Fraction, profile: WeightProfile, indices: Sequence[int],
                       delta: float) -> float:
    if delta < 0:
        raise ParameterError(f"step must be non-negative, got {delta}")
    prod = 1
    for j in indices:
        prod *= 2 * j + 1
    return math.sqrt(prod) / profile.divisor * delta ** profile.scale_exponent * float(raw)


def kernel_norm(profile: WeightProfile) -> Fraction:
    """
    Squared L2 norm of the kernel at dt=1, exactly.

    Nested integration over the simplex 0 < s_1 < ... < s_k < 1 of
    prod s_i^{2 l_i}; scales as dt^{k + 2 sum l}.
    """
    inner = RationalPolynomial([1])
    for l in profile.exponents:
        weight = RationalPolynomial([0] * (2 * l) + [1])
        inner = antiderivative_from(poly_mul(weight, inner), 0)
    return inner(1)


def kernel_norm_value(profile: WeightProfile, delta: float) -> float:
    return float(kernel_norm(profile)) * delta ** (profile.multiplicity + 2 * profile.weight_sum)


class CoefficientTensor:
    """
    Exact table Cbar over all (j_1, ..., j_k) with 0 <= j_i <= q.

    Keys are in integration order: entries[(j_1, ..., j_k)] is the Cbar that
    multiplies zeta_{j_1}^{(i_1)} ... zeta_{j_k}^{(i_k)}.
    """

    def __init__(self, profile: WeightProfile, q: int, entries: Dict[Index, Fraction]):
        self.profile = profile
        self.q = q
        self.entries = dict(entries)
        self._arrays = {}

        expected = (q + 1) ** profile.multiplicity
        if len(self.entries) != expected:
            raise ParameterError(
                f"table {profile.label} q={q} has {len(self.entries)} entries, expected {expected}")

    def __repr__(self):
        return f"CoefficientTensor(profile={self.profile.label}, q={self.q}, entries={len(self.entries)})"

    def __len__(self):
        return len(self.entries)

    @property
    def scale_exponent(self) -> float:
        return self.profile.scale_exponent

    @property
    def divisor(self) -> int:
        return self.profile.divisor

    def as_array(self, delta: float) -> np.ndarray:
        """Float array with arr[j_1, ..., j_k] = C_{j_k ... j_1} at step delta."""
        key = float(delta)
        if key not in self._arrays:
            k = self.profile.multiplicity
            arr = np.zeros((self.q + 1,) * k)
            for idx, raw in self.entries.items():
                arr[idx] = scaled_coefficient(raw, self.profile, idx, delta)
            arr.setflags(write=False)
            self._arrays[key] = arr
        return self._arrays[key]

    def exact_square_sum(self) -> Fraction:
        """S(q) = sum of C^2 at dt=1, as a Fraction."""
        total = Fraction(0)
        for idx, raw in self.entries.items():
            total += coefficient_weight(self.profile, idx) * raw * raw
        return total

    def exact_coupled_sum(self, perm: Sequence[int]) -> Fraction:
        """sum_j C_j * C_{j o perm} at dt=1; perm is a permutation of positions."""
        perm = tuple(perm)
        if sorted(perm) != list(range(self.profile.multiplicity)):
            raise ParameterError(f"{perm} is not a permutation of the table positions")
        total = Fraction(0)
        for idx, raw in self.entries.items():
            if raw == 0:
                continue
            other = self.entries[tuple(idx[p] for p in perm)]
            if other == 0:
                continue
            total += coefficient_weight(self.profile, idx) * raw * other
        return total

    def parseval_sum(self, delta: float) -> float:
        k, s = self.profile.multiplicity, self.profile.weight_sum
        return float(self.exact_square_sum()) * delta ** (k + 2 * s)

    def truncate(self, q: int) -> "CoefficientTensor":
        if q > self.q:
            raise ParameterError(f"cannot truncate q={self.q} table to larger q={q}")
        if q == self.q:
            return self
        entries = {idx: v for idx, v in self.entries.items() if max(idx) <= q}
        return CoefficientTensor(self.profile, q, entries)


def compute_table(profile: WeightProfile, q: int) -> CoefficientTensor:
    k = profile.multiplicity
    entries = {}
    for idx in itertools.product(range(q + 1), repeat=k):
        entries[idx] = raw_coefficient(profile, idx)
    return CoefficientTensor(profile, q, entries)


def cache_file_name(profile: WeightProfile, q: int) -> str:
    return f"coeff_k{profile.multiplicity}_l{profile.label}_q{q}.txt"


def save_table(table: CoefficientTensor, cache_dir: str) -> str:
    """
    Write one line per entry, 'j_1 ... j_k num/den', lexicographic order.

    Raises:
        CacheError: directory cannot be created or file cannot be written
    """
    path = os.path.join(cache_dir, cache_file_name(table.profile, table.q))
    try:
        os.makedirs(cache_dir, exist_ok=True)
        with open(path, 'w') as f:
            for idx in sorted(table.entries):
                value = table.entries[idx]
                tokens = [str(j) for j in idx] + [f"{value.numerator}/{value.denominator}"]
                f.write(" ".join(tokens) + "\n")
    except OSError as e:
        raise CacheError(f"cannot write coefficient cache {path}: {e}")
    return path


def load_table(profile: WeightProfile, q: int, cache_dir: str) -> Optional[CoefficientTensor]:
    """
    Read a cached table. Returns None on a miss.

    Raises:
        CacheError: file exists but is malformed or unreadable
    """
    path = os.path.join(cache_dir, cache_file_name(profile, q))
    if not os.path.exists(path):
        return None

    k = profile.multiplicity
    entries = {}
    try:
        with open(path, 'r') as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line or line.startswith('#'):
                    continue
                tokens = line.split()
                if len(tokens) != k + 1:
                    raise CacheError(f"{path}:{lineno}: expected {k + 1} tokens, got {len(tokens)}")
                try:
                    idx = tuple(int(t) for t in tokens[:k])
                    value = Fraction(tokens[k])
                except ValueError:
                    raise CacheError(f"{path}:{lineno}: cannot parse '{line}'")
                if max(idx) > q or min(idx) < 0:
                    raise CacheError(f"{path}:{lineno}: index {idx} outside 0..{q}")
                entries[idx] = value
    except OSError as e:
        raise CacheError(f"cannot read coefficient cache {path}: {e}")

    if len(entries) != (q + 1) ** k:
        raise CacheError(f"{path}: {len(entries)} entries, expected {(q + 1) ** k}")
    return CoefficientTensor(profile, q, entries)


_TABLE_MEMO: Dict[Tuple[Tuple[int, ...], int], CoefficientTensor] = {}
# guards _TABLE_MEMO across lookup and build
_MEMO_LOCK = threading.RLock()


def _memo_lookup(profile: WeightProfile, q: int) -> Optional[CoefficientTensor]:
    hit = _TABLE_MEMO.get((profile.exponents, q))
    if hit is not None:
        return hit
    # any larger table of the same profile contains this one
    for (exps, q_have), table in _TABLE_MEMO.items():
        if exps == profile.exponents and q_have > q:
            return table.truncate(q)
    return None


def build_table(profile: WeightProfile, q: int, cache_dir: Optional[str] = None) -> CoefficientTensor:
    """
    Complete coefficient table for profile up to index q.

    Lookup order: in-process memo, then cache_dir, then exact computation.
    Cache problems are logged and never fatal.
    """
    if q < 0:
        raise ParameterError(f"q must be non-negative, got {q}")
    if q > MAX_BASIS_INDEX:
        raise ConfigError(f"q={q} exceeds MAX_BASIS_INDEX={MAX_BASIS_INDEX}")

    with _MEMO_LOCK:
        return _build_locked(profile, q, cache_dir)


def _build_locked(profile: WeightProfile, q: int, cache_dir: Optional[str]) -> CoefficientTensor:
    table = _memo_lookup(profile, q)
    if table is not None:
        return table

    if cache_dir:
        try:
            table = load_table(profile, q, cache_dir)
        except CacheError as e:
            logger.warning(f"{e}; recomputing")
            table = None
        if table is not None:
            logger.debug(f"[Coeff Stats] cache hit {cache_file_name(profile, q)}")
            _TABLE_MEMO[(profile.exponents, q)] = table
            return table

    start = time.perf_counter()
    table = compute_table(profile, q)
    elapsed = time.perf_counter() - start
    logger.info(f"[Coeff Stats] profile {profile.label} q={q}: {len(table)} entries in {elapsed:.3f}s")
    _TABLE_MEMO[(profile.exponents, q)] = table

    if cache_dir:
        try:
            save_table(table, cache_dir)
        except CacheError as e:
            logger.warning(f"{e}; continuing without cache")
    return table


def clear_memo() -> None:
    with _MEMO_LOCK:
        _TABLE_MEMO.clear()
