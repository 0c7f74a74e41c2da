import sys
import os
import math

# Add parent directory to path to import sde_taylor
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

import numpy as np
import sympy

from sde_taylor.exceptions import ParameterError, UnsupportedRequestError
from sde_taylor.model import (A, ABAR, L, LBAR, B, G, LinearSdeModel, OPERATOR_WORDS, check_word,
                              get_model, linear_model_factory, list_models,
                              symbolic_model_factory, word_name)


def bind_two(word):
    """Map placeholder indices 1..5 onto components 1, 2, 1, 2, 1."""
    return tuple((tok[0], (tok[1] - 1) % 2 + 1) if tok[0] in ("G", "B") else tok for tok in word)


def test_words():
    """Test word naming and validation."""
    assert len(OPERATOR_WORDS["ito"]) == 20, "20 composite functions per calculus"
    assert set(OPERATOR_WORDS["ito"]) == set(OPERATOR_WORDS["strat"]), "both calculi name the same words"
    for name, word in OPERATOR_WORDS["ito"].items():
        assert word_name(word) == name, f"word {word} should be named {name}, got {word_name(word)}"
    assert OPERATOR_WORDS["strat"]["LLa"] == (LBAR, LBAR, ABAR), "Stratonovich words use Lbar and abar"
    print("✓ Operator words named consistently")

    for bad in ((), (G(1),), (B(1), B(2)), (G(3), B(1))):
        try:
            check_word(bad, 2)
            assert False, f"word {bad} should be rejected"
        except ParameterError:
            pass
    check_word((L, G(2), B(1)), 2)
    print("✓ Malformed words rejected")


def test_linear_words():
    """Test matrix products of the linear model."""
    model = get_model("gbm-2noise")
    x = np.array([2.0])
    assert np.allclose(model.apply((G(2), B(1)), x), 0.4 * 0.3 * 2.0), "G2 B1 = s1 s2 x"
    assert np.allclose(model.apply((L, L, A), x), 0.5 ** 3 * 2.0), "L L a = A^3 x"
    abar = 0.5 - 0.5 * (0.4 ** 2 + 0.3 ** 2)
    assert np.allclose(model.apply((LBAR, ABAR), x), abar ** 2 * 2.0), "Lbar abar = Abar^2 x"
    assert np.allclose(model.drift(x), 1.0), "drift a(x) = 0.5 x"
    assert np.allclose(model.diffusion(2, x), 0.6), "diffusion B_2(x) = 0.3 x"
    print("✓ Linear word matrices correct")

    batch = np.array([[1.0, 2.0, 3.0]])
    out = model.apply((G(1), L, B(2)), batch)
    assert out.shape == (1, 3), f"batched output shape should be (1, 3), got {out.shape}"
    assert np.allclose(out, 0.3 * 0.5 * 0.4 * batch), "batched apply wrong"

    try:
        LinearSdeModel([[1.0, 0.0]], [np.eye(2)])
        assert False, "non-square drift should raise"
    except ParameterError:
        pass
    try:
        linear_model_factory(1, 2, 0.1, [0.2])
        assert False, "diffusion count must match m"
    except ParameterError:
        pass


def test_symbolic_matches_linear():
    """Test sympy-derived operators against the matrix products."""
    x1, x2 = sympy.symbols("x1 x2")
    drift = [-0.3 * x1 + 0.1 * x2, -0.2 * x2]
    diffusion = [[0.2 * x1 + 0.1 * x2, 0.1 * x1],
                 [0.1 * x2, 0.2 * x1 + 0.15 * x2]]
    symbolic = symbolic_model_factory(drift, diffusion, [x1, x2], name="noncommutative-sym")
    linear = get_model("noncommutative")
    point = np.array([0.7, -1.3])

    for calculus in ("ito", "strat"):
        for name, word in OPERATOR_WORDS[calculus].items():
            word = bind_two(word)
            got = symbolic.apply(word, point)
            want = linear.apply(word, point)
            assert np.allclose(got, want, atol=1e-12), f"{calculus} {name}: {got} vs {want}"
    print("✓ Symbolic operators match matrix products")

    batch = np.array([[0.7, 1.0], [-1.3, 2.0]])
    out = symbolic.apply((G(1), B(2)), batch)
    assert out.shape == (2, 2), f"batched symbolic output should be (2, 2), got {out.shape}"
    assert np.allclose(out, linear.apply((G(1), B(2)), batch)), "batched symbolic apply wrong"
    assert not symbolic.has_exact_solution, "no exact solution supplied"


def test_symbolic_nonlinear():
    """Test a nonlinear scalar model with time dependence."""
    x, t = sympy.symbols("x t")
    model = symbolic_model_factory([sympy.sin(x) + t], [[x ** 2]], [x], time_symbol=t, x0=[0.5])
    point = np.array([0.5])
    # L f = f_t + a f_x + 1/2 b^2 f_xx with f = b = x^2
    expected = (math.sin(0.5) + 0.2) * 2 * 0.5 + 0.5 * 0.5 ** 4 * 2
    assert np.allclose(model.apply((L, B(1)), point, 0.2), expected), "L B1 wrong"
    # Lbar f = L f - 1/2 G G f; G f = 2x^3, G G f = 6x^4
    gg = 6 * 0.5 ** 4
    assert np.allclose(model.apply((LBAR, B(1)), point, 0.2), expected - 0.5 * gg), "Lbar B1 wrong"
    abar = math.sin(0.5) + 0.2 - 0.5 * 0.5 ** 2 * 2 * 0.5
    assert np.allclose(model.apply((ABAR,), point, 0.2), abar), "abar wrong"
    print("✓ Nonlinear symbolic operators correct")


def test_exact_solutions():
    """Test closed-form solutions of the registered linear models."""
    det = get_model("deterministic")
    assert np.allclose(det.exact_solution(np.array([1.0]), 1.0, np.array([0.7])), math.exp(-1.0)), \
        "zero noise should decay as exp(-t)"

    gbm = get_model("gbm-2noise")
    w = np.array([0.2, -0.1])
    expected = math.exp((0.5 - 0.5 * (0.16 + 0.09)) * 2.0 + 0.4 * 0.2 - 0.3 * 0.1)
    assert np.allclose(gbm.exact_solution(np.array([1.0]), 2.0, w), expected), "GBM closed form wrong"

    wb = np.array([[0.2, 0.0], [-0.1, 0.0]])
    out = gbm.exact_solution(np.array([1.0]), 2.0, wb)
    assert out.shape == (1, 2), f"batched exact solution should be (1, 2), got {out.shape}"
    assert np.allclose(out[0, 0], expected), "batched exact solution wrong"
    print("✓ Exact solutions correct")

    lin = get_model("linear")
    assert lin.has_exact_solution, "scalar diffusion model has a closed form"
    x0 = lin.initial_state()
    assert np.allclose(lin.exact_solution(x0, 0.0, np.zeros(2)), x0), "x_0 at t=0"

    nc = get_model("noncommutative")
    assert not nc.has_exact_solution, "matrix diffusion has no closed form"
    try:
        nc.exact_solution(nc.initial_state(), 1.0, np.zeros(2))
        assert False, "noncommutative exact solution should raise"
    except UnsupportedRequestError:
        pass


def test_registry():
    """Test the model registry."""
    assert list_models() == ["deterministic", "gbm-2noise", "linear", "noncommutative"], \
        f"registry wrong: {list_models()}"
    model = get_model("linear")
    assert (model.n, model.m) == (2, 2), "linear model is 2-dimensional with 2 noises"
    try:
        get_model("heston")
        assert False, "unknown model should raise"
    except UnsupportedRequestError:
        pass
    print("✓ Registry correct")


def run_all_tests():
    """Run all tests."""
    print("=" * 60)
    print("Running Model Tests")
    print("=" * 60)

    try:
        print("\n1. Testing operator words...")
        test_words()

        print("\n2. Testing linear words...")
        test_linear_words()

        print("\n3. Testing symbolic operators...")
        test_symbolic_matches_linear()

        print("\n4. Testing nonlinear symbolic model...")
        test_symbolic_nonlinear()

        print("\n5. Testing exact solutions...")
        test_exact_solutions()

        print("\n6. Testing registry...")
        test_registry()

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
