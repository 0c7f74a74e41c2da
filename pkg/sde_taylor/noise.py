"""
Gaussian basis generation and assembly of the iterated-integral approximations
used by one scheme step.

Every formula takes a GaussianBasis whose values may carry a trailing batch
axis (one column per path); results broadcast accordingly.

Index convention: indices = (i_1, ..., i_k) with i_1 integrated innermost,
so I_{(00)}^{(i1 i2)} = int dw^{(i2)}_{t2} int^{t2} dw^{(i1)}_{t1}.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import hermite_e

from sde_taylor.coeffs import CoefficientTensor, WeightProfile
from sde_taylor.exceptions import (CoefficientUnavailableError, DependencyError,
                                   ParameterError)

logger = logging.getLogger(__name__)

SQRT3 = math.sqrt(3.0)
SQRT5 = math.sqrt(5.0)

CALCULI = ("ito", "strat")
ROUTES = ("direct", "combined")


@dataclass(frozen=True, eq=False)
class GaussianBasis:
    """zeta_j^{(i)}, j = 0..q_max, i = 1..m for one step of size delta."""

    values: np.ndarray
    delta: float
    seed: Optional[int] = None
    step_index: int = 0
    block: int = 0

    @property
    def q_max(self) -> int:
        return self.values.shape[0] - 1

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def batch_shape(self) -> Tuple[int, ...]:
        return self.values.shape[2:]

    def zeta(self, i: int) -> np.ndarray:
        """Column for noise component i (1-based); shape (q_max+1, *batch)."""
        if not 1 <= i <= self.m:
            raise ParameterError(f"noise component {i} outside 1..{self.m}")
        return self.values[:, i - 1]

    def wiener_increment(self) -> np.ndarray:
        """sqrt(delta) * zeta_0, shape (m, *batch)."""
        return math.sqrt(self.delta) * self.values[0]


def basis_generator(seed: int, step_index: int, block: int = 0) -> np.random.Generator:
    # one counter-based stream per (seed, block, step)
    sequence = np.random.SeedSequence(seed, spawn_key=(block, step_index))
    return np.random.Generator(np.random.Philox(sequence))


def draw_basis(seed: int, step_index: int, m: int, q_max: int, delta: float = 1.0,
               batch: Optional[int] = None, block: int = 0) -> GaussianBasis:
    """
    Draw the standard normals for one step.

    Args:
        seed: master seed
        step_index: step number p
        m: number of noise components
        q_max: largest basis index needed
        delta: step size
        batch: optional number of independent paths (trailing axis)
        block: path block id, so blocks of paths get disjoint streams

    Returns:
        GaussianBasis with values of shape (q_max+1, m) or (q_max+1, m, batch)
    """
    if m < 1:
        raise ParameterError(f"m must be >= 1, got {m}")
    if q_max < 0:
        raise ParameterError(f"q_max must be >= 0, got {q_max}")
    if not delta > 0:
        raise ParameterError(f"delta must be positive, got {delta}")

    shape = (q_max + 1, m) if batch is None else (q_max + 1, m, int(batch))
    values = basis_generator(seed, step_index, block).standard_normal(shape)
    values.setflags(write=False)
    return GaussianBasis(values=values, delta=float(delta), seed=seed,
                         step_index=step_index, block=block)


def _col(coeffs: np.ndarray, like: np.ndarray) -> np.ndarray:
    # reshape a 1-D coefficient vector to broadcast over trailing batch axes
    return coeffs.reshape(coeffs.shape + (1,) * (like.ndim - 1))


def _need(basis: GaussianBasis, top: int) -> None:
    if basis.q_max < top:
        raise ParameterError(f"basis has q_max={basis.q_max}, formula needs index {top}")


def _finish(value):
    value = np.asarray(value)
    return float(value) if value.ndim == 0 else value


# -- multiplicity 1 ---------------------------------------------------------------

def ito_single(basis: GaussianBasis, i1: int, l: int):
    """
    I_{(l)}^{(i1)} = int (t - s)^l dw_s, exact for l in {0, 1, 2}.

    Identical for both calculi.
    """
    z = basis.zeta(i1)
    d = basis.delta
    if l == 0:
        return _finish(math.sqrt(d) * z[0])
    if l == 1:
        _need(basis, 1)
        return _finish(-d ** 1.5 / 2.0 * (z[0] + z[1] / SQRT3))
    if l == 2:
        _need(basis, 2)
        return _finish(d ** 2.5 / 3.0 * (z[0] + SQRT3 / 2.0 * z[1] + z[2] / (2.0 * SQRT5)))
    raise ParameterError(f"single integral weight must be 0, 1 or 2, got {l}")


# -- multiplicity 2 ---------------------------------------------------------------

def _pair_series(a: np.ndarray, b: np.ndarray, q: int, d: float):
    value = a[0] * b[0]
    if q >= 1:
        i = np.arange(1, q + 1)
        c = _col(1.0 / np.sqrt(4.0 * i * i - 1.0), a[1:q + 1])
        value = value + np.sum(c * (a[0:q] * b[1:q + 1] - a[1:q + 1] * b[0:q]), axis=0)
    return d / 2.0 * value


def ito_pair(basis: GaussianBasis, i1: int, i2: int, q: int):
    """Truncated I_{(00)}^{(i1 i2)} including the -1{i1=i2} Ito correction."""
    if q < 0:
        raise ParameterError(f"q must be >= 0, got {q}")
    _need(basis, q)
    value = _pair_series(basis.zeta(i1), basis.zeta(i2), q, basis.delta)
    if i1 == i2:
        value = value - basis.delta / 2.0
    return _finish(value)


def strat_pair(basis: GaussianBasis, i1: int, i2: int, q: int):
    if q < 0:
        raise ParameterError(f"q must be >= 0, got {q}")
    _need(basis, q)
    return _finish(_pair_series(basis.zeta(i1), basis.zeta(i2), q, basis.delta))


def _weighted_series(a: np.ndarray, b: np.ndarray, q: int, which: str, tied: float = 0.0):
    # tied = 1 centres the zeta_i^2 terms of equal-index Ito pairs
    i = np.arange(0, q + 1)
    ai, bi = a[0:q + 1], b[0:q + 1]
    ai2, bi2 = a[2:q + 3], b[2:q + 3]
    norm = _col(np.sqrt((2.0 * i + 1.0) * (2.0 * i + 5.0)) * (2.0 * i + 3.0), ai)
    diag = _col(1.0 / ((2.0 * i - 1.0) * (2.0 * i + 3.0)), ai)
    if which == "01":
        cross = (_col(i + 2.0, ai) * ai * bi2 - _col(i + 1.0, ai) * ai2 * bi) / norm
        return a[0] * b[1] / SQRT3 + np.sum(cross - diag * (ai * bi - tied), axis=0)
    cross = (_col(i + 1.0, ai) * bi2 * ai - _col(i + 2.0, ai) * bi * ai2) / norm
    return b[0] * a[1] / SQRT3 + np.sum(cross + diag * (ai * bi - tied), axis=0)


def _weighted_pair(basis: GaussianBasis, i1: int, i2: int, q: int, which: str, pair_fn, ito: bool):
    if which not in ("01", "10"):
        raise ParameterError(f"weighted pair must be '01' or '10', got '{which}'")
    if q < 0:
        raise ParameterError(f"q must be >= 0, got {q}")
    _need(basis, q + 2)
    d = basis.delta
    # the pair term enters at order max(q, 1) so the series is an orthogonal projection
    pair = pair_fn(basis, i1, i2, max(q, 1))
    tied = 1.0 if ito and i1 == i2 else 0.0
    series = _weighted_series(basis.zeta(i1), basis.zeta(i2), q, which, tied)
    return _finish(-d / 2.0 * pair - d * d / 4.0 * series)


def ito_pair_weighted(basis: GaussianBasis, i1: int, i2: int, q: int, which: str):
    """
    Truncated I_{(01)} or I_{(10)}; uses zeta up to index q+2.

    Equal indices subtract E[zeta_i^2] from the diagonal products, so the
    approximation is centred for every q.
    """
    return _weighted_pair(basis, i1, i2, q, which, ito_pair, ito=True)


def strat_pair_weighted(basis: GaussianBasis, i1: int, i2: int, q: int, which: str):
    return _weighted_pair(basis, i1, i2, q, which, strat_pair, ito=False)


# -- multiplicity 3..5 ------------------------------------------------------------

_LETTERS = "abcdefgh"


def partial_matchings(indices: Sequence[int]) -> Iterator[List[Tuple[int, int]]]:
    """All sets of disjoint position pairs (p, r), p < r, with indices[p] == indices[r]."""

    def rec(free: Tuple[int, ...]):
        if not free:
            yield []
            return
        p, rest = free[0], free[1:]
        for tail in rec(rest):
            yield tail
        for n, r in enumerate(rest):
            if indices[p] == indices[r]:
                for tail in rec(rest[:n] + rest[n + 1:]):
                    yield [(p, r)] + tail

    yield from rec(tuple(range(len(indices))))


def _contract(arr: np.ndarray, zetas: Sequence[np.ndarray], pairs: List[Tuple[int, int]]):
    k = arr.ndim
    letters = list(_LETTERS[:k])
    paired = set()
    for p, r in pairs:
        letters[r] = letters[p]
        paired.update((p, r))
    free = [p for p in range(k) if p not in paired]
    free_sub = "".join(letters[p] for p in free)
    # tied positions are traced out first, then one zeta at a time
    current = np.einsum("".join(letters) + "->" + free_sub, arr)
    for n, p in enumerate(free):
        rest = free_sub[n + 1:]
        current = np.einsum(f"{letters[p]}{rest}...,{letters[p]}...->{rest}...", current, zetas[p])
    return current


def _table_zetas(basis: GaussianBasis, indices: Sequence[int], table: CoefficientTensor):
    _need(basis, table.q)
    return [basis.zeta(i)[:table.q + 1] for i in indices]


def _check_request(indices: Sequence[int], table: Optional[CoefficientTensor]):
    if table is None:
        raise CoefficientUnavailableError("no coefficient table supplied")
    if len(indices) != table.profile.multiplicity:
        raise ParameterError(
            f"{len(indices)} indices for profile {table.profile.label}")


def ito_multi_direct(basis: GaussianBasis, indices: Sequence[int], table: CoefficientTensor):
    """
    sum_j C_j * (prod zeta - indicator corrections), the Ito form for any k.

    The corrections run over every partial matching of positions with equal
    component indices; each matched pair ties its j's and contributes a -1.
    """
    _check_request(indices, table)
    arr = table.as_array(basis.delta)
    zetas = _table_zetas(basis, indices, table)
    value = 0.0
    for pairs in partial_matchings(indices):
        sign = -1.0 if len(pairs) % 2 else 1.0
        value = value + sign * _contract(arr, zetas, pairs)
    return _finish(value)


def strat_multi(basis: GaussianBasis, indices: Sequence[int], table: CoefficientTensor):
    """Pure product form sum_j C_j prod zeta_{j_p}^{(i_p)}."""
    _check_request(indices, table)
    arr = table.as_array(basis.delta)
    zetas = _table_zetas(basis, indices, table)
    return _finish(_contract(arr, zetas, []))


def diagonal_closed_form(basis: GaussianBasis, i: int, k: int, calculus: str = "ito"):
    """
    Unweighted k-fold integral with every component equal to i.

    Ito: dt^{k/2}/k! He_k(zeta_0); Stratonovich: (sqrt(dt) zeta_0)^k / k!.
    """
    if k not in (3, 4, 5):
        raise ParameterError(f"diagonal closed form covers k=3..5, got {k}")
    z0 = basis.zeta(i)[0]
    scale = basis.delta ** (k / 2.0) / math.factorial(k)
    if calculus == "strat":
        return _finish(scale * z0 ** k)
    unit = np.zeros(k + 1)
    unit[k] = 1.0
    return _finish(scale * hermite_e.hermeval(z0, unit))


LowerLookup = Callable[[str, Tuple[int, ...]], object]


def ito_from_strat(basis: GaussianBasis, indices: Sequence[int], table: CoefficientTensor,
                   lower: LowerLookup):
    """
    Ito integral from its Stratonovich expansion plus w.p.1 conversion terms.

    Args:
        basis: shared basis of the step
        indices: (i_1, ..., i_k), k in {3, 4, 5}
        table: coefficient table of the requested profile
        lower: lookup (family label, indices) -> Ito value of a lower-order
            integral built on the same basis

    Raises:
        DependencyError: propagated from lower when a needed family is missing
    """
    _check_request(indices, table)
    star = strat_multi(basis, indices, table)
    label = table.profile.label
    d = basis.delta
    idx = tuple(indices)
    k = len(idx)
    eq = {(p, r): float(idx[p - 1] == idx[r - 1]) for p in range(1, k + 1) for r in range(p + 1, k + 1)}

    if k == 3:
        i1, _, i3 = idx
        z1, z3 = basis.zeta(i1), basis.zeta(i3)
        if label == "000":
            _need(basis, 1)
            return _finish(star
                           - 0.25 * eq[1, 2] * d ** 1.5 * (z3[0] + z3[1] / SQRT3)
                           - 0.25 * eq[2, 3] * d ** 1.5 * (z1[0] - z1[1] / SQRT3))
        _need(basis, 2)
        outer = z3[0] + SQRT3 / 2.0 * z3[1] + z3[2] / (2.0 * SQRT5)
        inner = 2.0 * z1[0] - SQRT3 / 2.0 * z1[1] - z1[2] / (2.0 * SQRT5)
        if label == "001":
            return _finish(star + eq[1, 2] * d ** 2.5 / 6.0 * outer
                           + eq[2, 3] * d ** 2.5 / 12.0 * inner)
        if label == "010":
            return _finish(star + eq[1, 2] * d ** 2.5 / 12.0 * outer
                           + eq[2, 3] * d ** 2.5 / 12.0 * inner)
        if label == "100":
            return _finish(star + eq[1, 2] * d ** 2.5 / 12.0 * outer
                           + eq[2, 3] * d ** 2.5 / 12.0 * (z1[0] - z1[2] / SQRT5))

    if k == 4 and label == "0000":
        i1, i2, i3, i4 = idx
        value = star
        if eq[1, 2]:
            value = value + 0.5 * lower("10", (i3, i4))
        if eq[2, 3]:
            value = value - 0.5 * (lower("10", (i1, i4)) - lower("01", (i1, i4)))
        if eq[3, 4]:
            value = value - 0.5 * (d * lower("00", (i1, i2)) + lower("01", (i1, i2)))
        value = value - d * d / 8.0 * eq[1, 2] * eq[3, 4]
        return _finish(value)

    if k == 5 and label == "00000":
        i1, i2, i3, i4, i5 = idx
        value = star
        if eq[1, 2]:
            value = value + 0.5 * lower("100", (i3, i4, i5))
        if eq[2, 3]:
            value = value - 0.5 * (lower("100", (i1, i4, i5)) - lower("010", (i1, i4, i5)))
        if eq[3, 4]:
            value = value - 0.5 * (lower("010", (i1, i2, i5)) - lower("001", (i1, i2, i5)))
        if eq[4, 5]:
            value = value - 0.5 * (d * lower("000", (i1, i2, i3)) + lower("001", (i1, i2, i3)))
        if eq[1, 2] and eq[3, 4]:
            value = value - 0.125 * lower("2", (i5,))
        if eq[2, 3] and eq[4, 5]:
            value = value - 0.125 * (d * d * lower("0", (i1,)) + 2.0 * d * lower("1", (i1,))
                                     + lower("2", (i1,)))
        if eq[1, 2] and eq[4, 5]:
            # pairs (1,2) and (4,5) collapse to int (s-t)(T-s) dw^{(i3)} = -(dt I_1 + I_2)
            value = value + 0.25 * (d * lower("1", (i3,)) + lower("2", (i3,)))
        return _finish(value)

    raise ParameterError(f"no Stratonovich conversion for profile {label}")


# -- per-step integral set --------------------------------------------------------

@dataclass(frozen=True)
class IntegralRequest:
    family: str
    indices: Tuple[int, ...]
    q: int
    calculus: str


@dataclass
class IntegralSet:
    """
    Lazily evaluated integrals for one step, all built on one shared basis.

    Args:
        basis: the step's GaussianBasis
        tables: family label -> CoefficientTensor (k >= 3 families)
        qs: family label -> truncation q (k >= 2 families)
        calculus: 'ito' or 'strat'
        route: 'direct' or 'combined' (Ito only)
        use_diagonal: use closed forms for all-equal unweighted k >= 3
    """

    basis: GaussianBasis
    tables: Mapping[str, CoefficientTensor]
    qs: Mapping[str, int]
    calculus: str = "ito"
    route: str = "direct"
    use_diagonal: bool = True
    _memo: Dict[IntegralRequest, object] = field(default_factory=dict, init=False, repr=False)
    provenance: Dict[IntegralRequest, str] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if self.calculus not in CALCULI:
            raise ParameterError(f"calculus must be one of {CALCULI}, got '{self.calculus}'")
        if self.route not in ROUTES:
            raise ParameterError(f"route must be one of {ROUTES}, got '{self.route}'")

    def __len__(self):
        return len(self._memo)

    def _q_for(self, family: str) -> int:
        if len(family) == 1:
            return 0
        if family not in self.qs:
            raise DependencyError(f"no truncation order configured for family {family}")
        return int(self.qs[family])

    def _table_for(self, family: str, q: int) -> CoefficientTensor:
        table = self.tables.get(family)
        if table is None:
            raise CoefficientUnavailableError(f"no coefficient table for family {family}")
        if table.q < q:
            raise CoefficientUnavailableError(
                f"table for family {family} has q={table.q}, need {q}")
        return table.truncate(q)

    def value(self, family: str, indices: Sequence[int], calculus: Optional[str] = None):
        """Value of the family's integral for component indices (i_1, ..., i_k)."""
        calculus = calculus or self.calculus
        profile = WeightProfile.from_label(family)
        indices = tuple(int(i) for i in indices)
        if len(indices) != profile.multiplicity:
            raise ParameterError(f"family {family} needs {profile.multiplicity} indices, got {indices}")

        q = self._q_for(family)
        request = IntegralRequest(family, indices, q, calculus)
        if request in self._memo:
            return self._memo[request]

        value, source = self._evaluate(profile, indices, q, calculus)
        self._memo[request] = value
        self.provenance[request] = source
        return value

    def _evaluate(self, profile: WeightProfile, indices: Tuple[int, ...], q: int, calculus: str):
        basis = self.basis
        family = profile.label
        k = profile.multiplicity

        if k == 1:
            return ito_single(basis, indices[0], profile.exponents[0]), "single"

        if family == "00":
            if calculus == "ito":
                return ito_pair(basis, indices[0], indices[1], q), "pair"
            return strat_pair(basis, indices[0], indices[1], q), "pair*"

        if k == 2:
            if calculus == "ito":
                return ito_pair_weighted(basis, indices[0], indices[1], q, family), "weighted-pair"
            return strat_pair_weighted(basis, indices[0], indices[1], q, family), "weighted-pair*"

        if self.use_diagonal and profile.is_unweighted() and len(set(indices)) == 1:
            return diagonal_closed_form(basis, indices[0], k, calculus), f"diagonal-{calculus}"

        table = self._table_for(family, q)
        if calculus == "strat":
            return strat_multi(basis, indices, table), "product*"
        if self.route == "direct":
            return ito_multi_direct(basis, indices, table), "direct"
        lower = lambda fam, idx: self.value(fam, idx, "ito")
        return ito_from_strat(basis, indices, table, lower), "combined"
