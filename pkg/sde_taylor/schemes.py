"""
Explicit one-step strong Taylor schemes of orders 2.0 and 2.5.

Both calculi share one assembler: the Ito scheme uses L, a and the Ito
integrals, the Stratonovich scheme uses Lbar, abar and the starred integrals.
In every sum the operator indices read G_{i_k} ... G_{i_2} B_{i_1} and the
integral is taken with indices (i_k, ..., i_1), innermost first.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from sde_taylor.coeffs import CoefficientTensor, WeightProfile, build_table
from sde_taylor.config import AUTO_Q_LIMITS, DEFAULT_ERROR_CONSTANT, MAX_BASIS_INDEX
from sde_taylor.exceptions import ConfigError, DivergenceError, ToleranceUnreachableError
from sde_taylor.model import A, L, OPERATOR_WORDS, SdeModel, Word
from sde_taylor.mse import select_q_for_family
from sde_taylor.noise import CALCULI, ROUTES, IntegralSet, draw_basis
from sde_taylor.utils import timed

logger = logging.getLogger(__name__)

FAMILIES = {
    2.0: ("0", "00", "1", "000", "01", "10", "0000"),
    2.5: ("0", "00", "1", "000", "01", "10", "0000",
          "2", "100", "010", "001", "00000"),
}

LLA_FORMS = ("barred", "printed")


@dataclass
class SchemeConfig:
    """
    Args:
        calculus: 'ito' or 'strat'
        order: 2.0 or 2.5
        route: 'direct' or 'combined' Ito integrals
        dt: step size
        steps: number of steps N
        q: per-family truncation overrides, label -> q
        error_constant: C in the approximation condition
        lla_form: Stratonovich dt^3/6 term, 'barred' (Lbar Lbar abar) or 'printed' (L L a)
        use_diagonal: closed forms for all-equal unweighted multiplicities 3..5
    """

    calculus: str = "ito"
    order: float = 2.5
    route: str = "direct"
    dt: float = 0.01
    steps: int = 100
    q: Dict[str, int] = field(default_factory=dict)
    error_constant: float = DEFAULT_ERROR_CONSTANT
    lla_form: str = "barred"
    use_diagonal: bool = True

    def __post_init__(self):
        self.order = float(self.order)
        if self.calculus not in CALCULI:
            raise ConfigError(f"calculus must be one of {CALCULI}, got '{self.calculus}'")
        if self.order not in FAMILIES:
            raise ConfigError(f"order must be 2.0 or 2.5, got {self.order}")
        if self.route not in ROUTES:
            raise ConfigError(f"route must be one of {ROUTES}, got '{self.route}'")
        if self.lla_form not in LLA_FORMS:
            raise ConfigError(f"lla_form must be one of {LLA_FORMS}, got '{self.lla_form}'")
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.steps < 0:
            raise ConfigError(f"steps must be non-negative, got {self.steps}")
        if not self.error_constant > 0:
            raise ConfigError(f"error constant must be positive, got {self.error_constant}")
        for label, q in self.q.items():
            if label not in FAMILIES[2.5]:
                raise ConfigError(f"unknown integral family '{label}' in q overrides")
            if q < 0:
                raise ConfigError(f"q for family {label} must be non-negative, got {q}")
            if len(label) >= 3 and q > MAX_BASIS_INDEX:
                raise ConfigError(f"q={q} for family {label} exceeds MAX_BASIS_INDEX={MAX_BASIS_INDEX}")

    @property
    def horizon(self) -> float:
        return self.dt * self.steps

    @property
    def families(self) -> Sequence[str]:
        return FAMILIES[self.order]


def resolve_q(config: SchemeConfig, m: int) -> Dict[str, int]:
    """
    Truncation order for every family of multiplicity >= 2.

    Overrides win; the rest are auto-selected for C * dt^(2 gamma + 1) and
    capped at AUTO_Q_LIMITS when the target is out of reach.
    """
    qs = {}
    for label in config.families:
        k = len(label)
        if k == 1:
            continue
        if label in config.q:
            qs[label] = int(config.q[label])
            continue
        cap = AUTO_Q_LIMITS[k]
        try:
            qs[label] = select_q_for_family(label, m, config.dt, config.order,
                                            config.error_constant, q_limit=cap)
        except ToleranceUnreachableError as e:
            logger.warning(f"{e}; using q={cap}")
            qs[label] = cap
    logger.debug(f"[Sim Stats] q per family: {qs}")
    return qs


def build_tables(qs: Dict[str, int], cache_dir: Optional[str] = None) -> Dict[str, CoefficientTensor]:
    tables = {}
    for label, q in qs.items():
        if len(label) >= 3:
            tables[label] = build_table(WeightProfile.from_label(label), q, cache_dir)
    return tables


def _bind(word: Word, idx: Sequence[int]) -> Word:
    # placeholder p in G(p)/B(p) stands for the scheme's i_p
    out = []
    for token in word:
        if token[0] in ("G", "B"):
            out.append((token[0], idx[token[1] - 1]))
        else:
            out.append(token)
    return tuple(out)


class _Terms:
    """Evaluates named composite functions and integrals for one step."""

    def __init__(self, model: SdeModel, y, t: float, integrals: IntegralSet, calculus: str):
        self.model = model
        self.y = y
        self.t = t
        self.integrals = integrals
        self.words = OPERATOR_WORDS[calculus]
        self.dt = integrals.basis.delta

    def f(self, name: str, *idx: int):
        return self.model.apply(_bind(self.words[name], idx), self.y, self.t)

    def word(self, word: Word):
        return self.model.apply(word, self.y, self.t)

    def I(self, family: str, *idx: int):
        return self.integrals.value(family, idx)

    def indices(self, k: int):
        return itertools.product(range(1, self.model.m + 1), repeat=k)


def _base_increment(s: _Terms):
    d = s.dt
    inc = d * s.f("a") + d * d / 2.0 * s.f("La")
    for (i1,) in s.indices(1):
        i0, i1w = s.I("0", i1), s.I("1", i1)
        inc = inc + s.f("B1", i1) * i0
        inc = inc + s.f("G1a", i1) * (d * i0 + i1w) - s.f("LB1", i1) * i1w
    for i1, i2 in s.indices(2):
        i00 = s.I("00", i2, i1)
        i10 = s.I("10", i2, i1)
        i01 = s.I("01", i2, i1)
        inc = inc + s.f("G2B1", i1, i2) * i00
        inc = inc + s.f("G2LB1", i1, i2) * (i10 - i01) - s.f("LG2B1", i1, i2) * i10
        inc = inc + s.f("G2G1a", i1, i2) * (i01 + d * i00)
    for i1, i2, i3 in s.indices(3):
        inc = inc + s.f("G3G2B1", i1, i2, i3) * s.I("000", i3, i2, i1)
    for i1, i2, i3, i4 in s.indices(4):
        inc = inc + s.f("G4G3G2B1", i1, i2, i3, i4) * s.I("0000", i4, i3, i2, i1)
    return inc


def _higher_increment(s: _Terms, lla_word: Word):
    d = s.dt
    inc = d ** 3 / 6.0 * s.word(lla_word)
    for (i1,) in s.indices(1):
        i0, i1w, i2w = s.I("0", i1), s.I("1", i1), s.I("2", i1)
        inc = inc + s.f("G1La", i1) * (0.5 * i2w + d * i1w + d * d / 2.0 * i0)
        inc = inc + 0.5 * s.f("LLB1", i1) * i2w - s.f("LG1a", i1) * (i2w + d * i1w)
    for i1, i2, i3 in s.indices(3):
        i100 = s.I("100", i3, i2, i1)
        i010 = s.I("010", i3, i2, i1)
        i001 = s.I("001", i3, i2, i1)
        i000 = s.I("000", i3, i2, i1)
        inc = inc + s.f("G3LG2B1", i1, i2, i3) * (i100 - i010)
        inc = inc + s.f("G3G2LB1", i1, i2, i3) * (i010 - i001)
        inc = inc + s.f("G3G2G1a", i1, i2, i3) * (d * i000 + i001)
        inc = inc - s.f("LG3G2B1", i1, i2, i3) * i100
    for i1, i2, i3, i4, i5 in s.indices(5):
        inc = inc + s.f("G5G4G3G2B1", i1, i2, i3, i4, i5) * s.I("00000", i5, i4, i3, i2, i1)
    return inc


def _lla_word(config: SchemeConfig) -> Word:
    if config.calculus == "strat" and config.lla_form == "printed":
        return (L, L, A)
    return OPERATOR_WORDS[config.calculus]["LLa"]


def higher_order_terms(model: SdeModel, y, t: float, config: SchemeConfig, integrals: IntegralSet):
    """Sum of the terms the order-2.5 scheme adds to the order-2.0 scheme."""
    s = _Terms(model, y, t, integrals, config.calculus)
    return _higher_increment(s, _lla_word(config))


def _step(model: SdeModel, y, t: float, config: SchemeConfig, integrals: IntegralSet,
          calculus: str, step_index: Optional[int]):
    if integrals.calculus != calculus:
        raise ConfigError(f"{calculus} step given a {integrals.calculus} integral set")
    s = _Terms(model, y, t, integrals, calculus)
    inc = _base_increment(s)
    if config.order == 2.5:
        inc = inc + _higher_increment(s, _lla_word(config))
    y_next = y + inc
    if not np.all(np.isfinite(y_next)):
        raise DivergenceError(f"non-finite state at step {step_index} (t={t:.6g})", step_index)
    return y_next


def step_taylor_ito(model: SdeModel, y, t: float, config: SchemeConfig, integrals: IntegralSet,
                    step_index: Optional[int] = None):
    return _step(model, y, t, config, integrals, "ito", step_index)


def step_taylor_strat(model: SdeModel, y, t: float, config: SchemeConfig, integrals: IntegralSet,
                      step_index: Optional[int] = None):
    return _step(model, y, t, config, integrals, "strat", step_index)


STEPPERS = {"ito": step_taylor_ito, "strat": step_taylor_strat}


@dataclass
class Trajectory:
    """
    times: (N+1,); states: (N+1, n[, P]); wiener: (N+1, m[, P]) with W(tau_p).
    """

    times: np.ndarray
    states: np.ndarray
    wiener: np.ndarray
    seed: int

    def __len__(self):
        return len(self.times)

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_wiener(self) -> np.ndarray:
        return self.wiener[-1]


def basis_order(qs: Dict[str, int]) -> int:
    # weighted pairs reach zeta_{q+2}; I_(2) needs zeta_2
    return max([q + 2 for q in qs.values()] + [2])


def simulate(model: SdeModel, config: SchemeConfig, seed: int, x0=None, paths: Optional[int] = None,
             block: int = 0, cache_dir: Optional[str] = None,
             qs: Optional[Dict[str, int]] = None) -> Trajectory:
    """
    Run N steps from x0; one basis per step keyed by (seed, block, step).

    Args:
        paths: number of paths in the batch (trailing axis); None for a single path
        block: path block id
        qs: resolved truncation orders; resolved from config when None
    """
    if qs is None:
        qs = resolve_q(config, model.m)
    tables = build_tables(qs, cache_dir)
    q_max = basis_order(qs)
    step = STEPPERS[config.calculus]

    x0 = model.initial_state() if x0 is None else np.asarray(x0, dtype=float).reshape(model.n)
    batch = () if paths is None else (int(paths),)
    y = np.broadcast_to(x0.reshape((model.n,) + (1,) * len(batch)), (model.n,) + batch).astype(float)

    n_steps = config.steps
    times = np.arange(n_steps + 1) * config.dt
    states = np.empty((n_steps + 1, model.n) + batch)
    wiener = np.zeros((n_steps + 1, model.m) + batch)
    states[0] = y

    with timed(f"simulate {model.name} {config.calculus} {config.order} N={n_steps}"):
        for p in range(n_steps):
            basis = draw_basis(seed, p, model.m, q_max, config.dt, batch=paths, block=block)
            integrals = IntegralSet(basis, tables, qs, config.calculus, config.route, config.use_diagonal)
            try:
                y = step(model, y, times[p], config, integrals, step_index=p)
            except DivergenceError as e:
                logger.warning(f"[Sim Stats] {model.name}: {e}")
                raise
            states[p + 1] = y
            wiener[p + 1] = wiener[p] + basis.wiener_increment()

    logger.debug(f"[Sim Stats] {model.name}: {n_steps} steps, dt={config.dt}, paths={paths or 1}")
    return Trajectory(times=times, states=states, wiener=wiener, seed=seed)
