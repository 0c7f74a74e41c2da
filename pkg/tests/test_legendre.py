import sys
import os
from fractions import Fraction

# Add parent directory to path to import sde_taylor
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

import numpy as np
from scipy import integrate

from sde_taylor.config import MAX_BASIS_INDEX
from sde_taylor.exceptions import ConfigError, ParameterError
from sde_taylor.legendre import (RationalPolynomial, ScaledBasisSpec, antiderivative_from,
                                 definite_integral, legendre)


def test_polynomial_arithmetic():
    """Test exact polynomial operations."""
    p = RationalPolynomial([1, 2])          # 1 + 2x
    q = RationalPolynomial([0, 0, Fraction(1, 3)])

    assert (p + q).coeffs == (1, 2, Fraction(1, 3)), f"sum wrong: {p + q}"
    assert (p - p).is_zero(), "p - p should be zero"
    assert (p * p).coeffs == (1, 4, 4), f"square wrong: {p * p}"
    assert p(Fraction(1, 2)) == 2, f"p(1/2) should be 2, got {p(Fraction(1, 2))}"
    assert RationalPolynomial([0, 0]).degree == -1, "zero polynomial has degree -1"
    print("✓ Polynomial arithmetic correct")

    try:
        p.coeffs = (1,)
        assert False, "RationalPolynomial should be immutable"
    except AttributeError:
        pass
    print("✓ Polynomials are immutable")


def test_antiderivative():
    """Test exact integration."""
    x = RationalPolynomial([0, 1])
    prim = antiderivative_from(x, -1)
    assert prim(-1) == 0, "antiderivative vanishes at the lower limit"
    assert prim(1) == 0, f"integral of x over [-1, 1] should be 0, got {prim(1)}"
    assert definite_integral(x * x, -1, 1) == Fraction(2, 3), "integral of x^2 over [-1, 1] is 2/3"
    print("✓ Antiderivatives exact")


def test_legendre_known_values():
    """Test low-order Legendre polynomials and orthogonality."""
    assert legendre(2).coeffs == (Fraction(-1, 2), 0, Fraction(3, 2)), f"P_2 wrong: {legendre(2)}"
    assert legendre(3).coeffs == (0, Fraction(-3, 2), 0, Fraction(5, 2)), f"P_3 wrong: {legendre(3)}"
    for n in range(0, 8):
        assert legendre(n)(1) == 1, f"P_{n}(1) should be 1"
        assert legendre(n)(-1) == (-1) ** n, f"P_{n}(-1) should be (-1)^{n}"
    print("✓ Endpoint values correct")

    for a in range(6):
        for b in range(6):
            value = definite_integral(legendre(a) * legendre(b), -1, 1)
            expected = Fraction(2, 2 * a + 1) if a == b else 0
            assert value == expected, f"<P_{a}, P_{b}> should be {expected}, got {value}"
    print("✓ Orthogonality exact")


def test_legendre_limits():
    """Test the index guards."""
    try:
        legendre(-1)
        assert False, "negative index should raise"
    except ParameterError:
        pass
    try:
        legendre(MAX_BASIS_INDEX + 1)
        assert False, "index above MAX_BASIS_INDEX should raise"
    except ConfigError:
        pass
    assert legendre(MAX_BASIS_INDEX).degree == MAX_BASIS_INDEX, "top index should still work"
    print("✓ Index guards correct")


def test_scaled_basis_orthonormal():
    """Test that phi_j is orthonormal on a shifted interval."""
    spec = ScaledBasisSpec(step=0.5, left=2.0)
    for a in range(4):
        for b in range(4):
            value, _ = integrate.quad(lambda s: spec.phi(a, s) * spec.phi(b, s), 2.0, 2.5)
            expected = 1.0 if a == b else 0.0
            assert abs(value - expected) < 1e-10, f"<phi_{a}, phi_{b}> = {value}, expected {expected}"
    print("✓ Scaled basis orthonormal")

    x = np.linspace(2.0, 2.5, 7)
    mat = spec.phi_matrix(4, x)
    assert mat.shape == (5, 7), f"phi_matrix shape should be (5, 7), got {mat.shape}"
    for j in range(5):
        assert np.allclose(mat[j], spec.phi(j, x)), f"phi_matrix row {j} disagrees with phi"
    print("✓ phi_matrix matches phi")

    try:
        ScaledBasisSpec(step=0.0)
        assert False, "zero step should raise"
    except ParameterError:
        pass


def run_all_tests():
    """Run all tests."""
    print("=" * 60)
    print("Running Legendre Tests")
    print("=" * 60)

    try:
        print("\n1. Testing polynomial arithmetic...")
        test_polynomial_arithmetic()

        print("\n2. Testing antiderivatives...")
        test_antiderivative()

        print("\n3. Testing Legendre values...")
        test_legendre_known_values()

        print("\n4. Testing index limits...")
        test_legendre_limits()

        print("\n5. Testing scaled basis...")
        test_scaled_basis_orthonormal()

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
