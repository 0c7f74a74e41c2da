"""
Mean-square approximation errors of the truncated integral expansions and
automatic selection of the truncation order q.

Exact errors are assembled in Fractions at dt=1 and scaled by dt^{k+2 sum l}
at the end, so the reported constants are reproducible to the last digit.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, List, Optional, Tuple

from sde_taylor.coeffs import (SUPPORTED_PROFILES, WeightProfile, build_table,
                               kernel_norm)
from sde_taylor.config import DEFAULT_ERROR_CONSTANT, MAX_BASIS_INDEX
from sde_taylor.exceptions import (ParameterError, PatternNotClosedFormError,
                                   ToleranceUnreachableError)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IndexPattern:
    """
    Which component indices coincide, as canonical class labels.

    (3, 3, 1) -> labels (0, 0, 1); two index tuples with the same labels share
    every indicator 1{i_a = i_b}.
    """

    labels: Tuple[int, ...]

    def __post_init__(self):
        labels = tuple(int(x) for x in self.labels)
        canon, seen = [], {}
        for x in labels:
            if x not in seen:
                seen[x] = len(seen)
            canon.append(seen[x])
        object.__setattr__(self, "labels", tuple(canon))

    @classmethod
    def from_indices(cls, indices: Iterable[int]) -> "IndexPattern":
        return cls(tuple(indices))

    @classmethod
    def from_string(cls, text: str) -> "IndexPattern":
        """'distinct', 'equal', or explicit indices like '1,1,2' / '112'."""
        text = text.strip().lower()
        if not text:
            raise ParameterError("empty index pattern")
        tokens = text.split(",") if "," in text else list(text)
        try:
            return cls(tuple(int(t) for t in tokens))
        except ValueError:
            raise ParameterError(f"bad index pattern '{text}'")

    @property
    def k(self) -> int:
        return len(self.labels)

    @property
    def classes(self) -> int:
        return len(set(self.labels))

    def is_distinct(self) -> bool:
        return self.classes == self.k

    def is_all_equal(self) -> bool:
        return self.classes == 1

    def coincide(self, a: int, b: int) -> bool:
        """1-based positions."""
        return self.labels[a - 1] == self.labels[b - 1]

    def symmetries(self) -> List[Tuple[int, ...]]:
        """Position permutations that leave the index tuple unchanged."""
        k = self.k
        return [perm for perm in itertools.permutations(range(k))
                if all(self.labels[perm[p]] == self.labels[p] for p in range(k))]

    @property
    def label(self) -> str:
        if self.is_distinct():
            return "distinct"
        if self.is_all_equal():
            return "equal"
        return "".join(str(x + 1) for x in self.labels)

    def __str__(self):
        return self.label


def distinct(k: int) -> IndexPattern:
    return IndexPattern(tuple(range(k)))


def all_equal(k: int) -> IndexPattern:
    return IndexPattern((0,) * k)


def parse_pattern(text: str, k: int) -> IndexPattern:
    text = text.strip().lower()
    if text == "distinct":
        return distinct(k)
    if text in ("equal", "all-equal"):
        return all_equal(k)
    pattern = IndexPattern.from_string(text)
    if pattern.k != k:
        raise ParameterError(f"pattern '{text}' has {pattern.k} positions, profile needs {k}")
    return pattern


def set_partitions(k: int) -> List[IndexPattern]:
    """Every IndexPattern of length k."""
    patterns = set()
    for labels in itertools.product(range(k), repeat=k):
        patterns.add(IndexPattern(labels))
    return sorted(patterns, key=lambda p: (-p.classes, p.labels))


def _scale(profile: WeightProfile, delta: float) -> float:
    return delta ** (profile.multiplicity + 2 * profile.weight_sum)


def _check_delta(delta: float) -> None:
    if not delta > 0:
        raise ParameterError(f"delta must be positive, got {delta}")


def _check_profile_pattern(profile: WeightProfile, pattern: IndexPattern) -> None:
    if pattern.k != profile.multiplicity:
        raise ParameterError(
            f"pattern {pattern.labels} does not match profile {profile.label}")


def is_covered(profile: WeightProfile, pattern: IndexPattern) -> bool:
    """Whether an exact error is available for (profile, pattern)."""
    k = profile.multiplicity
    if k <= 2:
        return True
    if k == 3:
        return not pattern.is_all_equal() or profile.is_unweighted()
    return pattern.is_distinct()


def exact_mse_fraction(profile: WeightProfile, pattern: IndexPattern, q: int) -> Fraction:
    """
    E = I - sum_sigma sum_j C_j C_{sigma j} at dt=1, sigma over the pattern's symmetries.

    Raises:
        PatternNotClosedFormError: (profile, pattern) not covered
    """
    _check_profile_pattern(profile, pattern)
    k = profile.multiplicity
    if k == 1:
        return Fraction(0)
    if k >= 3 and pattern.is_all_equal() and profile.is_unweighted():
        return Fraction(0)
    if not is_covered(profile, pattern):
        raise PatternNotClosedFormError(
            f"no exact error for profile {profile.label} with pattern {pattern.label}")
    return _coupled_residual(profile, pattern, q)


def _coupled_residual(profile: WeightProfile, pattern: IndexPattern, q: int) -> Fraction:
    table = build_table(profile, q)
    total = Fraction(0)
    for perm in pattern.symmetries():
        total += table.exact_coupled_sum(perm)
    return kernel_norm(profile) - total


def direct_route_mse(profile: WeightProfile, pattern: IndexPattern, q: int, delta: float = 1.0) -> float:
    """
    Error of the Hermite-centred direct expansion for any pattern, k >= 3.

    Same coupled sum as exact_mse_fraction without the coverage check.
    """
    _check_profile_pattern(profile, pattern)
    _check_delta(delta)
    if profile.multiplicity < 3:
        raise ParameterError(f"direct expansions start at k=3, got profile {profile.label}")
    return float(_coupled_residual(profile, pattern, q)) * _scale(profile, delta)


def exact_mse(profile: WeightProfile, pattern: IndexPattern, q: int, delta: float = 1.0) -> float:
    _check_delta(delta)
    return float(exact_mse_fraction(profile, pattern, q)) * _scale(profile, delta)


def closed_form_pair_mse(pattern: IndexPattern, q: int, which: str = "00", delta: float = 1.0) -> float:
    """
    Closed-form errors of the pair expansions.

    '00' distinct: dt^2/2 (1/2 - sum_{i=1}^q 1/(4i^2-1)); '00' equal: 0.
    '01' and '10' share one formula per pattern.
    """
    _check_delta(delta)
    if pattern.k != 2:
        raise ParameterError(f"pair errors need a 2-position pattern, got {pattern.labels}")
    if q < 0:
        raise ParameterError(f"q must be >= 0, got {q}")

    if which == "00":
        if not pattern.is_distinct():
            return 0.0
        tail = math.fsum(1.0 / (4.0 * i * i - 1.0) for i in range(1, q + 1))
        return delta ** 2 / 2.0 * (0.5 - tail)

    if which not in ("01", "10"):
        raise ParameterError(f"pair family must be '00', '01' or '10', got '{which}'")

    d4 = delta ** 4 / 16.0
    odd = math.fsum(1.0 / ((2.0 * i - 1.0) ** 2 * (2.0 * i + 3.0) ** 2) for i in range(1, q + 1))
    if pattern.is_distinct():
        mixed = math.fsum(((i + 2.0) ** 2 + (i + 1.0) ** 2)
                          / ((2.0 * i + 1.0) * (2.0 * i + 5.0) * (2.0 * i + 3.0) ** 2)
                          for i in range(0, q + 1))
        pairs = math.fsum(1.0 / (4.0 * i * i - 1.0) for i in range(2, q + 1))
        return d4 * (5.0 / 9.0 - 2.0 * pairs - odd - mixed)

    mixed = math.fsum(1.0 / ((2.0 * i + 1.0) * (2.0 * i + 5.0) * (2.0 * i + 3.0) ** 2)
                      for i in range(0, q + 1))
    return d4 * (1.0 / 9.0 - mixed - 2.0 * odd)


def square_sum_residual(profile: WeightProfile, q: int) -> Fraction:
    """I - S(q) at dt=1."""
    return kernel_norm(profile) - build_table(profile, q).exact_square_sum()


def mse_upper_bound(profile: WeightProfile, q: int, delta: float = 1.0) -> float:
    """k! (I - S(q)); valid for every index pattern."""
    _check_delta(delta)
    k = profile.multiplicity
    if k == 1:
        return 0.0
    return math.factorial(k) * float(square_sum_residual(profile, q)) * _scale(profile, delta)


def strat_mse_distinct(profile: WeightProfile, q: int, delta: float = 1.0) -> float:
    """I - S(q): error of the product expansion for pairwise different indices."""
    _check_delta(delta)
    if profile.multiplicity == 1:
        return 0.0
    return float(square_sum_residual(profile, q)) * _scale(profile, delta)


# -- diagonal gaps for the Stratonovich-route triple bound ----------------------

# Legendre components of (s - t)/2 and (T - s)/2 on one step, per sqrt(2j+1) dt^{3/2}
_F_TARGET = (Fraction(1, 4), Fraction(1, 12))
_G_TARGET = (Fraction(1, 4), Fraction(-1, 12))


def _diagonal_sums(q: int, which: str) -> List[Fraction]:
    # (1/8) sum_{j'} (2j'+1) Cbar over the tied pair, free index j; table layout [j1, j2, j3]
    table = build_table(WeightProfile((0, 0, 0)), q)
    sums = []
    for j in range(q + 1):
        total = Fraction(0)
        for jp in range(q + 1):
            if which == "F":
                key = (jp, jp, j)
            elif which == "G":
                key = (j, jp, jp)
            else:
                key = (jp, j, jp)
            total += (2 * jp + 1) * table.entries[key]
        sums.append(total / 8)
    return sums


def _gap(target: Tuple[Fraction, ...], sums: List[Fraction]) -> Fraction:
    total = Fraction(0)
    for j in range(max(len(target), len(sums))):
        t = target[j] if j < len(target) else Fraction(0)
        s = sums[j] if j < len(sums) else Fraction(0)
        total += (2 * j + 1) * (t - s) ** 2
    return total


def diagonal_gaps(q: int, delta: float = 1.0) -> Tuple[float, float, float]:
    """
    (F_q, G_q, H_q): squared L2 distances between the exact correction
    functions and the tied-index coefficient sums of the triple expansion.
    """
    _check_delta(delta)
    scale = delta ** 3
    f = _gap(_F_TARGET, _diagonal_sums(q, "F"))
    g = _gap(_G_TARGET, _diagonal_sums(q, "G"))
    h = _gap((), _diagonal_sums(q, "H"))
    return float(f) * scale, float(g) * scale, float(h) * scale


def strat_error_bound_triple(q: int, pattern: IndexPattern, delta: float = 1.0) -> float:
    """4 (E + 1{i1=i2} F + 1{i2=i3} G + 1{i1=i3} H) for the unweighted triple."""
    profile = WeightProfile((0, 0, 0))
    _check_profile_pattern(profile, pattern)
    try:
        base = exact_mse(profile, pattern, q, delta)
    except PatternNotClosedFormError:
        base = mse_upper_bound(profile, q, delta)
    f, g, h = diagonal_gaps(q, delta)
    total = base
    if pattern.coincide(1, 2):
        total += f
    if pattern.coincide(2, 3):
        total += g
    if pattern.coincide(1, 3):
        total += h
    return 4.0 * total


def pair_tail_estimates(q: int, delta: float = 1.0) -> Tuple[float, Optional[float]]:
    """
    Exact pair error dt^2/(4(2q+1)) and its logarithmic integral bound.

    The bound -dt^2/8 ln|1 - 2/(2q+1)| needs q >= 1; None for q = 0.
    """
    _check_delta(delta)
    exact = delta ** 2 / (4.0 * (2 * q + 1))
    if q < 1:
        return exact, None
    bound = -delta ** 2 / 8.0 * math.log(abs(1.0 - 2.0 / (2 * q + 1)))
    return exact, bound


# -- error of the expansion the schemes use --------------------------------------

def family_error(profile: WeightProfile, pattern: IndexPattern, q: int, delta: float = 1.0) -> Tuple[float, str]:
    """
    Returns:
        (error, source) with source 'closed-form', 'exact' or 'bound'
    """
    _check_profile_pattern(profile, pattern)
    k = profile.multiplicity
    if k == 1:
        return 0.0, "closed-form"
    if k == 2:
        return closed_form_pair_mse(pattern, q, profile.label, delta), "closed-form"
    if is_covered(profile, pattern):
        return exact_mse(profile, pattern, q, delta), "exact"
    return mse_upper_bound(profile, q, delta), "bound"


def select_q(profile: WeightProfile, pattern: IndexPattern, delta: float, gamma: float,
             constant: float = DEFAULT_ERROR_CONSTANT, q_limit: int = MAX_BASIS_INDEX) -> int:
    """
    Smallest q whose error satisfies error <= C * dt^(2 gamma + 1).

    Errors are nonincreasing in q, so k <= 2 bisects over the closed forms;
    k >= 3 scans upward because each step builds a larger table.

    Raises:
        ToleranceUnreachableError: even q_limit misses the target
    """
    _check_delta(delta)
    if not constant > 0:
        raise ParameterError(f"error constant must be positive, got {constant}")
    if gamma not in (2.0, 2.5):
        raise ParameterError(f"scheme order must be 2.0 or 2.5, got {gamma}")
    target = constant * delta ** (2.0 * gamma + 1.0)

    def error(q):
        return family_error(profile, pattern, q, delta)[0]

    if profile.multiplicity <= 2:
        if error(0) <= target:
            return 0
        last = error(q_limit)
        if last > target:
            raise ToleranceUnreachableError(
                f"profile {profile.label} ({pattern.label}): error {last:.3e} at q={q_limit} "
                f"exceeds target {target:.3e}", q_limit=q_limit, best_error=last, target=target)
        lo, hi = 0, q_limit
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if error(mid) <= target:
                hi = mid
            else:
                lo = mid
        return hi

    q_limit = min(q_limit, MAX_BASIS_INDEX)
    best = None
    for q in range(0, q_limit + 1):
        best = error(q)
        if best <= target:
            return q
    raise ToleranceUnreachableError(
        f"profile {profile.label} ({pattern.label}): error {best:.3e} at q={q_limit} "
        f"exceeds target {target:.3e}", q_limit=q_limit, best_error=best, target=target)


def patterns_for(k: int, m: int) -> List[IndexPattern]:
    """Patterns reachable with component indices in 1..m."""
    return [p for p in set_partitions(k) if p.classes <= m]


def select_q_for_family(label: str, m: int, delta: float, gamma: float,
                        constant: float = DEFAULT_ERROR_CONSTANT,
                        q_limit: int = MAX_BASIS_INDEX) -> int:
    """Worst case of select_q over every pattern possible with m components."""
    profile = WeightProfile.from_label(label)
    if profile.multiplicity == 1:
        return 0
    return max(select_q(profile, p, delta, gamma, constant, q_limit)
               for p in patterns_for(profile.multiplicity, m))


@dataclass
class ErrorReport:
    profile: WeightProfile
    pattern: IndexPattern
    q: int
    delta: float
    exact_mse: Optional[float]
    upper_bound: float
    kernel_norm: float
    source: str


def error_report(profile: WeightProfile, pattern: IndexPattern, q: int, delta: float = 1.0) -> ErrorReport:
    _check_profile_pattern(profile, pattern)
    k = profile.multiplicity
    if k == 2:
        exact, source = closed_form_pair_mse(pattern, q, profile.label, delta), "closed-form"
    else:
        try:
            exact, source = exact_mse(profile, pattern, q, delta), "exact"
        except PatternNotClosedFormError:
            exact, source = None, "bound"
    upper = mse_upper_bound(profile, q, delta)
    norm = float(kernel_norm(profile)) * _scale(profile, delta)
    return ErrorReport(profile, pattern, q, delta, exact, upper, norm, source)


def all_profiles() -> List[WeightProfile]:
    return [WeightProfile(e) for e in sorted(SUPPORTED_PROFILES, key=lambda e: (len(e), e))]
