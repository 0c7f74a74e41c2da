import sys
import os
from fractions import Fraction

# Add parent directory to path to import sde_taylor
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from sde_taylor.coeffs import WeightProfile
from sde_taylor.exceptions import ParameterError, PatternNotClosedFormError, ToleranceUnreachableError
from sde_taylor.mse import (IndexPattern, all_equal, closed_form_pair_mse, diagonal_gaps,
                            direct_route_mse, distinct, error_report, exact_mse,
                            exact_mse_fraction, family_error, is_covered,
                            mse_upper_bound, pair_tail_estimates, parse_pattern, patterns_for,
                            select_q, select_q_for_family, set_partitions,
                            strat_error_bound_triple, strat_mse_distinct)

# errors at dt=1, pairwise distinct indices, with absolute tolerances
REFERENCE = {
    ("000", 6): (0.0195538576, 1e-9),
    ("100", 2): (0.00815429, 1e-8),
    ("010", 2): (0.0168348450, 1e-9),
    ("001", 2): (0.02528010, 1e-7),
    ("0000", 2): (0.0229139923, 1e-9),
    ("00000", 1): (0.0075895219, 1e-9),
}


def test_index_patterns():
    """Test pattern canonicalization and parsing."""
    p = IndexPattern.from_indices((3, 3, 1))
    assert p.labels == (0, 0, 1), f"(3,3,1) should canonicalize to (0,0,1), got {p.labels}"
    assert p.label == "112", f"label should be 112, got {p.label}"
    assert p.coincide(1, 2) and not p.coincide(2, 3), "coincidence of positions wrong"
    assert len(p.symmetries()) == 2, f"(0,0,1) has 2 symmetries, got {p.symmetries()}"
    assert IndexPattern.from_string("1,1,2") == p, "explicit indices should parse"
    assert parse_pattern("distinct", 3).is_distinct(), "'distinct' keyword"
    assert parse_pattern("equal", 4).is_all_equal(), "'equal' keyword"
    print("✓ Patterns canonical")

    for k, bell in ((2, 2), (3, 5), (4, 15), (5, 52)):
        assert len(set_partitions(k)) == bell, f"k={k} should have {bell} patterns"
    assert len(patterns_for(3, 2)) == 4, "two components reach 4 triple patterns"
    print("✓ Set partitions enumerated")

    try:
        parse_pattern("12", 3)
        assert False, "wrong length should raise"
    except ParameterError:
        pass


def test_pair_errors():
    """Test the closed-form pair errors against the exact coefficient sums."""
    pair = WeightProfile.from_label("00")
    for q in range(0, 6):
        closed = closed_form_pair_mse(distinct(2), q, "00", 1.0)
        exact = exact_mse(pair, distinct(2), q, 1.0)
        assert abs(closed - exact) < 1e-14, f"00 q={q}: closed form {closed} vs exact {exact}"
        tail, _ = pair_tail_estimates(q, 1.0)
        assert abs(tail - closed) < 1e-14, f"00 q={q}: 1/(4(2q+1)) should match, got {tail}"
        assert exact_mse_fraction(pair, all_equal(2), q) == 0, "equal-index pair is exact"
    print("✓ Pair errors consistent")

    tail, bound = pair_tail_estimates(0, 1.0)
    assert tail == 0.25 and bound is None, "q=0: exact 1/4, no bound"
    for q in range(1, 10):
        tail, bound = pair_tail_estimates(q, 2.0)
        assert bound >= tail, f"log bound should dominate at q={q}"
    print("✓ Logarithmic bound dominates")

    for which in ("01", "10"):
        for pattern in (distinct(2), all_equal(2)):
            values = [closed_form_pair_mse(pattern, q, which, 1.0) for q in range(0, 9)]
            assert all(v > 0 for v in values), f"{which} {pattern}: errors should be positive"
            assert all(a >= b for a, b in zip(values, values[1:])), f"{which} {pattern}: not monotone"
    assert abs(closed_form_pair_mse(distinct(2), 0, "01", 1.0) - 1.0 / 36.0) < 1e-15, \
        "weighted pair at q=0 should be 1/36"
    assert abs(closed_form_pair_mse(distinct(2), 0, "01", 0.5) - 0.5 ** 4 / 36.0) < 1e-15, \
        "weighted pair errors scale as dt^4"
    print("✓ Weighted pair errors positive and monotone")


def test_reference_errors():
    """Test the tabulated errors for distinct indices."""
    for (label, q), (expected, tol) in REFERENCE.items():
        profile = WeightProfile.from_label(label)
        got = exact_mse(profile, distinct(profile.multiplicity), q, 1.0)
        assert abs(got - expected) < tol, f"{label} q={q}: expected {expected}, got {got}"
        assert abs(strat_mse_distinct(profile, q, 1.0) - got) < 1e-15, \
            f"{label}: distinct-index error is I - S(q)"
    print("✓ Reference errors reproduced")

    # 1/120 - sum over {0,1}^5 of C^2, summed by hand
    assert exact_mse_fraction(WeightProfile.from_label("00000"), distinct(5), 1) == Fraction(32131, 4233600), \
        "00000 q=1 residual should be 32131/4233600"
    # Cbar_000 = -4/3, so C = -1/12 and the residual is 1/20 - 1/144
    assert exact_mse_fraction(WeightProfile.from_label("010"), distinct(3), 0) == Fraction(31, 720), \
        "010 q=0 residual should be 31/720"
    print("✓ Exact residuals match hand sums")


def test_bounds_and_coverage():
    """Test upper bounds and the covered set."""
    triple = WeightProfile.from_label("000")
    bound = mse_upper_bound(triple, 2, 1.0)
    for pattern in set_partitions(3):
        err, source = family_error(triple, pattern, 2, 1.0)
        assert err <= bound + 1e-15, f"{pattern}: error {err} exceeds the k! bound {bound}"
    assert family_error(triple, all_equal(3), 2)[0] == 0.0, "all-equal triple uses the closed form"
    print("✓ Errors within the k! bound")

    quad = WeightProfile.from_label("0000")
    mixed = parse_pattern("1123", 4)
    assert not is_covered(quad, mixed), "0000 with ties has no exact error"
    try:
        exact_mse(quad, mixed, 1)
        assert False, "uncovered pattern should raise"
    except PatternNotClosedFormError:
        pass
    err, source = family_error(quad, mixed, 1)
    assert source == "bound" and err == mse_upper_bound(quad, 1), "uncovered patterns fall back to the bound"
    report = error_report(quad, mixed, 1)
    assert report.exact_mse is None and report.source == "bound", f"report wrong: {report}"
    assert abs(report.kernel_norm - 1.0 / 24.0) < 1e-15, "report carries the kernel norm"
    print("✓ Uncovered patterns reported")

    for q in (1, 2):
        assert abs(direct_route_mse(quad, distinct(4), q) - exact_mse(quad, distinct(4), q)) < 1e-15, \
            "direct expansion error equals the exact error where covered"
        for labels in ((0, 1, 1, 0), (0, 0, 1, 2), (0, 0, 0, 0)):
            err = direct_route_mse(quad, IndexPattern(labels), q)
            assert 0.0 <= err <= mse_upper_bound(quad, q), f"{labels} q={q}: {err} outside [0, bound]"
    quint, tie = WeightProfile.from_label("00000"), parse_pattern("11233", 5)
    scaled = direct_route_mse(quint, tie, 1, 0.5)
    assert abs(scaled - direct_route_mse(quint, tie, 1) * 0.5 ** 5) < 1e-15, \
        "direct expansion errors scale as dt^5"
    try:
        direct_route_mse(WeightProfile.from_label("00"), distinct(2), 1)
        assert False, "pairs have closed forms, not direct expansion errors"
    except ParameterError:
        pass
    print("✓ Direct expansion errors for tied patterns")


def test_diagonal_gaps():
    """Test the tied-index gaps of the triple expansion."""
    f, g, h = diagonal_gaps(0, 1.0)
    assert abs(h - 1.0 / 36.0) < 1e-15, f"H_0 should be 1/36, got {h}"
    _, _, h_half = diagonal_gaps(0, 0.5)
    assert abs(h_half - 0.125 / 36.0) < 1e-15, "gaps scale as dt^3"
    assert f >= 0 and g >= 0, "gaps are squared distances"
    print("✓ Diagonal gaps correct")

    d = distinct(3)
    assert abs(strat_error_bound_triple(2, d) - 4.0 * exact_mse(WeightProfile.from_label("000"), d, 2)) < 1e-15, \
        "distinct indices add no gap terms"
    ties = IndexPattern((0, 0, 1))
    f2, _, _ = diagonal_gaps(2)
    base = exact_mse(WeightProfile.from_label("000"), ties, 2)
    assert abs(strat_error_bound_triple(2, ties) - 4.0 * (base + f2)) < 1e-14, "(1,1,2) adds F"


def test_select_q():
    """Test truncation order selection."""
    pair = WeightProfile.from_label("00")
    assert select_q(pair, distinct(2), 0.5, 2.0) == 1, "dt=0.5, gamma=2 needs q=1"
    assert select_q(pair, distinct(2), 2 ** -4, 2.5, q_limit=10000) == 8192, "dt=1/16, gamma=2.5 needs q=8192"
    assert select_q(pair, all_equal(2), 2 ** -4, 2.5) == 0, "equal-index pair is exact at q=0"
    print("✓ Pair selection correct")

    try:
        select_q(pair, distinct(2), 2 ** -4, 2.5, q_limit=16)
        assert False, "q_limit=16 should not reach the target"
    except ToleranceUnreachableError as e:
        assert e.q_limit == 16, f"error should carry q_limit, got {e.q_limit}"
        assert e.best_error > e.target, "best error should exceed the target"
    print("✓ Unreachable tolerance reported")

    triple = WeightProfile.from_label("000")
    q = select_q(triple, distinct(3), 0.5, 2.0, constant=1.0)
    target = 0.5 ** 5
    assert exact_mse(triple, distinct(3), q, 0.5) <= target, "selected q must meet the target"
    if q > 0:
        assert exact_mse(triple, distinct(3), q - 1, 0.5) > target, "selected q must be minimal"
    print(f"✓ Triple selection q={q}")

    assert select_q_for_family("00", 1, 2 ** -4, 2.5) == 0, "one noise component: only equal indices"
    worst = select_q_for_family("00", 2, 0.5, 2.0)
    assert worst == 1, f"worst case over patterns should be 1, got {worst}"

    for bad in (dict(delta=0.0, gamma=2.0), dict(delta=0.5, gamma=3.0)):
        try:
            select_q(pair, distinct(2), bad["delta"], bad["gamma"])
            assert False, f"{bad} should raise"
        except ParameterError:
            pass


def run_all_tests():
    """Run all tests."""
    print("=" * 60)
    print("Running Mean-Square Error Tests")
    print("=" * 60)

    try:
        print("\n1. Testing index patterns...")
        test_index_patterns()

        print("\n2. Testing pair errors...")
        test_pair_errors()

        print("\n3. Testing reference errors...")
        test_reference_errors()

        print("\n4. Testing bounds and coverage...")
        test_bounds_and_coverage()

        print("\n5. Testing diagonal gaps...")
        test_diagonal_gaps()

        print("\n6. Testing q selection...")
        test_select_q()

        print("\n" + "=" * 60)
        print("All tests passed! ✓")
        print("=" * 60)
        return True

    except AssertionError as e:
        print(f"\n✗ Test failed: {e}")
        return False
    except Exception as e:
        print(f"\n✗ Error during testing: {e}")
        import traceback
        traceback.print_exc()
        return False


if __name__ == "__main__":
    success = run_all_tests()
    sys.exit(0 if success else 1)
