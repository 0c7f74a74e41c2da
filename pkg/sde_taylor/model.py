"""
SDE models and the composite operator functions the Taylor schemes consume.

A composite function is named by a word: a tuple of operator tokens ending in
a terminal token. (G(2), L, B(1)) is G_2 L B_1, i.e. G_2 applied to L applied
to the column B_1. Operators next to the terminal act first.

    L    = d/dt + sum_i a_i d/dx_i + 1/2 sum_j sum_{l,i} B_lj B_ij d^2/dx_l dx_i
    G_i  = sum_j B_ji d/dx_j
    Lbar = L - 1/2 sum_j G_j G_j
    abar = a - 1/2 sum_j G_j B_j
"""

import logging
from abc import ABC, abstractmethod
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import sympy

from sde_taylor.exceptions import ParameterError, UnsupportedRequestError

logger = logging.getLogger(__name__)

Token = Tuple
Word = Tuple[Token, ...]

L = ("L",)
LBAR = ("Lbar",)
A = ("a",)
ABAR = ("abar",)


def G(i: int) -> Token:
    return ("G", int(i))


def B(i: int) -> Token:
    return ("B", int(i))


TERMINALS = ("a", "abar", "B")
OPERATORS = ("L", "Lbar", "G")


def word_name(word: Word) -> str:
    parts = []
    for token in word:
        if token[0] in ("G", "B"):
            parts.append(f"{token[0]}{token[1]}")
        else:
            parts.append(token[0])
    return "".join(parts)


def check_word(word: Word, m: int) -> None:
    if not word:
        raise ParameterError("empty operator word")
    *ops, terminal = word
    if terminal[0] not in TERMINALS:
        raise ParameterError(f"word {word} must end in a, abar or B(i)")
    for token in ops:
        if token[0] not in OPERATORS:
            raise ParameterError(f"unknown operator token {token} in {word}")
    for token in word:
        if token[0] in ("G", "B") and not 1 <= token[1] <= m:
            raise ParameterError(f"noise index {token[1]} outside 1..{m} in {word}")


def _calculus_words(calculus: str) -> Dict[str, Word]:
    # index placeholders 1..5 stand for i_1..i_5 of the scheme sums
    l, a = (L, A) if calculus == "ito" else (LBAR, ABAR)
    return {
        "B1": (B(1),),
        "a": (a,),
        "G2B1": (G(2), B(1)),
        "G1a": (G(1), a),
        "LB1": (l, B(1)),
        "G3G2B1": (G(3), G(2), B(1)),
        "La": (l, a),
        "G2LB1": (G(2), l, B(1)),
        "LG2B1": (l, G(2), B(1)),
        "G2G1a": (G(2), G(1), a),
        "G4G3G2B1": (G(4), G(3), G(2), B(1)),
        "LLa": (l, l, a),
        "G1La": (G(1), l, a),
        "LLB1": (l, l, B(1)),
        "LG1a": (l, G(1), a),
        "G3LG2B1": (G(3), l, G(2), B(1)),
        "G3G2LB1": (G(3), G(2), l, B(1)),
        "G3G2G1a": (G(3), G(2), G(1), a),
        "LG3G2B1": (l, G(3), G(2), B(1)),
        "G5G4G3G2B1": (G(5), G(4), G(3), G(2), B(1)),
    }


OPERATOR_WORDS = {"ito": _calculus_words("ito"), "strat": _calculus_words("strat")}


class SdeModel(ABC):
    """
    dx = a(x, t) dt + sum_i B_i(x, t) dw^{(i)}, x in R^n, i = 1..m.

    x may carry a trailing batch axis: shape (n,) or (n, P).
    """

    name = "model"

    def __init__(self, n: int, m: int, x0: Optional[Sequence[float]] = None):
        if n < 1 or m < 1:
            raise ParameterError(f"model needs n >= 1 and m >= 1, got n={n}, m={m}")
        self.n = n
        self.m = m
        self.x0 = np.ones(n) if x0 is None else np.asarray(x0, dtype=float).reshape(n)

    def initial_state(self) -> np.ndarray:
        return self.x0.copy()

    @abstractmethod
    def apply(self, word: Word, x: np.ndarray, t: float = 0.0) -> np.ndarray:
        """Composite function named by word at (x, t); same shape as x."""

    def drift(self, x, t=0.0):
        return self.apply((A,), x, t)

    def diffusion(self, i: int, x, t=0.0):
        return self.apply((B(i),), x, t)

    @property
    def has_exact_solution(self) -> bool:
        return False

    def exact_solution(self, x0: np.ndarray, t: float, wiener: np.ndarray) -> np.ndarray:
        raise UnsupportedRequestError(f"model '{self.name}' has no exact solution")

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name}, n={self.n}, m={self.m})"


class LinearSdeModel(SdeModel):
    """
    a(x) = A x, B_i(x) = S_i x.

    For linear f = M x: L f = M A x, G_i f = M S_i x, Lbar f = M Abar x with
    Abar = A - 1/2 sum S_i^2, so every word is a matrix product.
    """

    def __init__(self, drift_matrix, diffusion_matrices: Sequence, name: str = "linear",
                 x0: Optional[Sequence[float]] = None):
        a = np.atleast_2d(np.asarray(drift_matrix, dtype=float))
        n = a.shape[0]
        if a.shape != (n, n):
            raise ParameterError(f"drift matrix must be square, got shape {a.shape}")
        mats = [np.atleast_2d(np.asarray(s, dtype=float)) for s in diffusion_matrices]
        for s in mats:
            if s.shape != (n, n):
                raise ParameterError(f"diffusion matrix shape {s.shape} does not match n={n}")
        super().__init__(n, len(mats), x0)
        self.name = name
        self.A = a
        self.S = mats
        self.Abar = a - 0.5 * sum(s @ s for s in mats)
        self._matrices: Dict[Word, np.ndarray] = {}

    def _operator_matrix(self, token: Token) -> np.ndarray:
        kind = token[0]
        if kind == "L":
            return self.A
        if kind == "Lbar":
            return self.Abar
        return self.S[token[1] - 1]

    def _terminal_matrix(self, token: Token) -> np.ndarray:
        kind = token[0]
        if kind == "a":
            return self.A
        if kind == "abar":
            return self.Abar
        return self.S[token[1] - 1]

    def word_matrix(self, word: Word) -> np.ndarray:
        word = tuple(word)
        if word not in self._matrices:
            check_word(word, self.m)
            *ops, terminal = word
            mat = self._terminal_matrix(terminal)
            for token in reversed(ops):
                mat = mat @ self._operator_matrix(token)
            self._matrices[word] = mat
        return self._matrices[word]

    def apply(self, word: Word, x: np.ndarray, t: float = 0.0) -> np.ndarray:
        return self.word_matrix(word) @ x

    def scalar_diffusion(self) -> Optional[np.ndarray]:
        """sigma_i when every S_i = sigma_i I, else None."""
        eye = np.eye(self.n)
        sigmas = []
        for s in self.S:
            sigma = s[0, 0]
            if not np.allclose(s, sigma * eye):
                return None
            sigmas.append(sigma)
        return np.asarray(sigmas)

    @property
    def has_exact_solution(self) -> bool:
        return self.scalar_diffusion() is not None

    def exact_solution(self, x0: np.ndarray, t: float, wiener: np.ndarray) -> np.ndarray:
        """
        x_t = expm((A - 1/2 sum sigma_i^2) t) x0 * exp(sum sigma_i W_t^{(i)}).

        wiener has shape (m,) or (m, P).
        """
        sigmas = self.scalar_diffusion()
        if sigmas is None:
            raise UnsupportedRequestError(
                f"model '{self.name}' has matrix diffusion; no closed-form solution")
        propagator = scipy.linalg.expm((self.A - 0.5 * np.sum(sigmas ** 2) * np.eye(self.n)) * t)
        base = propagator @ np.asarray(x0, dtype=float)
        factor = np.exp(np.tensordot(sigmas, np.asarray(wiener, dtype=float), axes=1))
        if np.ndim(factor) and base.ndim == 1:
            base = base[:, None]
        return base * factor


def linear_model_factory(n: int, m: int, drift, diffusion: Sequence, name: str = "linear",
                         x0: Optional[Sequence[float]] = None) -> LinearSdeModel:
    """
    Args:
        drift: n x n matrix (a scalar for n = 1)
        diffusion: m entries, each a scalar sigma_i (meaning sigma_i I) or an n x n matrix
    """
    if len(diffusion) != m:
        raise ParameterError(f"expected {m} diffusion entries, got {len(diffusion)}")
    mats = []
    for entry in diffusion:
        arr = np.asarray(entry, dtype=float)
        mats.append(arr * np.eye(n) if arr.ndim == 0 else arr)
    return LinearSdeModel(np.asarray(drift, dtype=float).reshape(n, n), mats, name=name, x0=x0)


class SymbolicSdeModel(SdeModel):
    """
    Operators derived symbolically with sympy and evaluated through lambdify.

    Args:
        drift: n expressions in state_symbols and time_symbol
        diffusion: n x m matrix of expressions
        state_symbols: the n state symbols
        time_symbol: optional time symbol
    """

    def __init__(self, drift, diffusion, state_symbols, time_symbol=None, name: str = "symbolic",
                 x0: Optional[Sequence[float]] = None,
                 exact: Optional[Callable[[np.ndarray, float, np.ndarray], np.ndarray]] = None):
        self.symbols = list(state_symbols)
        self.t = time_symbol if time_symbol is not None else sympy.Symbol("t")
        self.a = sympy.Matrix(list(drift))
        self.B = sympy.Matrix(diffusion)
        n = len(self.symbols)
        if self.a.shape != (n, 1):
            raise ParameterError(f"drift has {self.a.shape[0]} components, expected {n}")
        if self.B.shape[0] != n:
            raise ParameterError(f"diffusion has {self.B.shape[0]} rows, expected {n}")
        super().__init__(n, self.B.shape[1], x0)
        self.name = name
        self._exact = exact
        self._exprs: Dict[Word, sympy.Matrix] = {}
        self._funcs: Dict[Word, Callable] = {}

    def G_op(self, i: int, f: sympy.Matrix) -> sympy.Matrix:
        return sum((self.B[j, i - 1] * f.diff(x) for j, x in enumerate(self.symbols)),
                   sympy.zeros(*f.shape))

    def L_op(self, f: sympy.Matrix) -> sympy.Matrix:
        out = f.diff(self.t)
        for j, x in enumerate(self.symbols):
            out += self.a[j] * f.diff(x)
        for col in range(self.m):
            for l, xl in enumerate(self.symbols):
                for i, xi in enumerate(self.symbols):
                    coeff = self.B[l, col] * self.B[i, col]
                    if coeff != 0:
                        out += sympy.Rational(1, 2) * coeff * f.diff(xl).diff(xi)
        return out

    def Lbar_op(self, f: sympy.Matrix) -> sympy.Matrix:
        out = self.L_op(f)
        for j in range(1, self.m + 1):
            out -= sympy.Rational(1, 2) * self.G_op(j, self.G_op(j, f))
        return out

    def abar(self) -> sympy.Matrix:
        out = self.a
        for j in range(1, self.m + 1):
            out = out - sympy.Rational(1, 2) * self.G_op(j, self.B[:, j - 1])
        return out

    def word_expression(self, word: Word) -> sympy.Matrix:
        word = tuple(word)
        if word in self._exprs:
            return self._exprs[word]
        check_word(word, self.m)
        *ops, terminal = word
        if ops:
            inner = self.word_expression(tuple(ops[1:]) + (terminal,))
            head = ops[0]
            if head[0] == "L":
                expr = self.L_op(inner)
            elif head[0] == "Lbar":
                expr = self.Lbar_op(inner)
            else:
                expr = self.G_op(head[1], inner)
        elif terminal[0] == "a":
            expr = self.a
        elif terminal[0] == "abar":
            expr = self.abar()
        else:
            expr = self.B[:, terminal[1] - 1]
        expr = sympy.simplify(expr)
        self._exprs[word] = expr
        return expr

    def _function(self, word: Word) -> Callable:
        word = tuple(word)
        if word not in self._funcs:
            expr = self.word_expression(word)
            self._funcs[word] = sympy.lambdify(self.symbols + [self.t], list(expr), modules="numpy")
        return self._funcs[word]

    def apply(self, word: Word, x: np.ndarray, t: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        values = self._function(word)(*x, t)
        shape = x.shape[1:]
        return np.stack([np.broadcast_to(np.asarray(v, dtype=float), shape) for v in values])

    @property
    def has_exact_solution(self) -> bool:
        return self._exact is not None

    def exact_solution(self, x0, t, wiener):
        if self._exact is None:
            return super().exact_solution(x0, t, wiener)
        return self._exact(x0, t, wiener)


def symbolic_model_factory(drift, diffusion, state_symbols, time_symbol=None, **kwargs) -> SymbolicSdeModel:
    return SymbolicSdeModel(drift, diffusion, state_symbols, time_symbol, **kwargs)


# -- registry ----------------------------------------------------------------------

def _linear() -> SdeModel:
    return linear_model_factory(2, 2, [[-0.5, 0.2], [0.1, -0.4]], [0.3, 0.2],
                                name="linear", x0=[1.0, 0.5])


def _gbm_2noise() -> SdeModel:
    return linear_model_factory(1, 2, 0.5, [0.4, 0.3], name="gbm-2noise", x0=[1.0])


def _deterministic() -> SdeModel:
    return linear_model_factory(1, 1, -1.0, [0.0], name="deterministic", x0=[1.0])


def _noncommutative() -> SdeModel:
    s1 = [[0.2, 0.1], [0.0, 0.1]]
    s2 = [[0.1, 0.0], [0.2, 0.15]]
    return linear_model_factory(2, 2, [[-0.3, 0.1], [0.0, -0.2]], [s1, s2],
                                name="noncommutative", x0=[1.0, 1.0])


MODEL_REGISTRY: Dict[str, Callable[[], SdeModel]] = {
    "linear": _linear,
    "gbm-2noise": _gbm_2noise,
    "deterministic": _deterministic,
    "noncommutative": _noncommutative,
}


def get_model(name: str) -> SdeModel:
    factory = MODEL_REGISTRY.get(name)
    if factory is None:
        raise UnsupportedRequestError(
            f"unknown model '{name}'; available: {', '.join(sorted(MODEL_REGISTRY))}")
    return factory()


def list_models() -> List[str]:
    return sorted(MODEL_REGISTRY)
