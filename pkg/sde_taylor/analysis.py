"""
Strong convergence studies and fine-grid validation of the integral expansions.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from sde_taylor.coeffs import WeightProfile, build_table
from sde_taylor.config import DEFAULT_HORIZON, PATH_BLOCK
from sde_taylor.exceptions import ParameterError, UnsupportedRequestError
from sde_taylor.legendre import ScaledBasisSpec
from sde_taylor.model import SdeModel
from sde_taylor.mse import IndexPattern, direct_route_mse, family_error, is_covered
from sde_taylor.noise import GaussianBasis, IntegralSet
from sde_taylor.schemes import FAMILIES, SchemeConfig, build_tables, resolve_q, simulate
from sde_taylor.utils import RunningStats, timed

logger = logging.getLogger(__name__)


def fit_slope(dts: Sequence[float], errors: Sequence[float]) -> Tuple[float, float]:
    """
    Least-squares fit of log(error) = slope * log(dt) + intercept.

    Returns:
        (slope, intercept); (nan, nan) when fewer than two positive errors
    """
    dts = np.asarray(dts, dtype=float)
    errors = np.asarray(errors, dtype=float)
    mask = (errors > 0) & np.isfinite(errors)
    if mask.sum() < 2:
        return float('nan'), float('nan')
    result = stats.linregress(np.log(dts[mask]), np.log(errors[mask]))
    return float(result.slope), float(result.intercept)


@dataclass
class ConvergenceRow:
    dt: float
    steps: int
    paths: int
    mean_abs_error: float
    std_error: float

    @property
    def reliable(self) -> bool:
        return self.paths > 1 and np.isfinite(self.std_error)


@dataclass
class ConvergenceReport:
    model: str
    calculus: str
    gamma: float
    route: str
    rows: List[ConvergenceRow] = field(default_factory=list)
    slope: float = float('nan')
    intercept: float = float('nan')

    def fit(self) -> None:
        self.slope, self.intercept = fit_slope([r.dt for r in self.rows],
                                               [r.mean_abs_error for r in self.rows])

    def __repr__(self):
        return (f"ConvergenceReport(model={self.model}, calculus={self.calculus}, gamma={self.gamma}, "
                f"levels={len(self.rows)}, slope={self.slope:.3f})")


def path_blocks(paths: int, block_size: int = PATH_BLOCK) -> List[Tuple[int, int]]:
    """[(block id, size)] covering paths in fixed-size blocks."""
    if paths < 1:
        raise ParameterError(f"paths must be >= 1, got {paths}")
    blocks = []
    block, left = 0, paths
    while left > 0:
        size = min(block_size, left)
        blocks.append((block, size))
        block += 1
        left -= size
    return blocks


def _run_blocks(job, paths: int, workers: int) -> RunningStats:
    blocks = path_blocks(paths)
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(job, blocks))
    else:
        partials = [job(b) for b in blocks]
    # merge in block order so the result does not depend on worker count
    total = RunningStats()
    for part in partials:
        total.merge(part)
    return total


def strong_error(model: SdeModel, config: SchemeConfig, seed: int, paths: int,
                 workers: int = 1, cache_dir: Optional[str] = None) -> RunningStats:
    """Statistics of |x_T - y_N| over paths, measured against the exact solution."""
    if not model.has_exact_solution:
        raise UnsupportedRequestError(f"model '{model.name}' has no exact solution")
    qs = resolve_q(config, model.m)
    x0 = model.initial_state()
    # tables are shared by every block
    build_tables(qs, cache_dir)

    def job(block_spec):
        block, size = block_spec
        traj = simulate(model, config, seed, x0, paths=size, block=block, cache_dir=cache_dir, qs=qs)
        exact = model.exact_solution(np.broadcast_to(x0[:, None], (model.n, size)),
                                     config.horizon, traj.final_wiener)
        err = np.linalg.norm(traj.final_state - exact, axis=0)
        part = RunningStats()
        part.push_array(err)
        return part

    return _run_blocks(job, paths, workers)


def _check_levels(dts: Sequence[float]) -> None:
    if len(dts) < 3:
        raise ParameterError(f"a convergence study needs at least 3 step sizes, got {len(dts)}")
    for dt in dts:
        if not dt > 0:
            raise ParameterError(f"step sizes must be positive, got {dt}")


def steps_for(dt: float, horizon: float) -> int:
    steps = int(round(horizon / dt))
    if steps < 1 or not math.isclose(steps * dt, horizon, rel_tol=1e-9):
        raise ParameterError(f"dt={dt} does not divide horizon {horizon}")
    return steps


def convergence_study(model: SdeModel, config: SchemeConfig, dts: Sequence[float], paths: int,
                      seed: int, horizon: float = DEFAULT_HORIZON, workers: int = 1,
                      cache_dir: Optional[str] = None) -> ConvergenceReport:
    """
    Mean absolute terminal error for each dt and the fitted strong order.

    config supplies everything except dt and steps.
    """
    _check_levels(dts)
    if not model.has_exact_solution:
        raise UnsupportedRequestError(f"model '{model.name}' has no exact solution")

    report = ConvergenceReport(model.name, config.calculus, config.order, config.route)
    for dt in sorted(dts, reverse=True):
        level = replace(config, dt=dt, steps=steps_for(dt, horizon))
        with timed(f"convergence level dt={dt}"):
            acc = strong_error(model, level, seed, paths, workers, cache_dir)
        row = ConvergenceRow(dt, level.steps, paths, acc.mean, acc.std_error)
        if not row.reliable:
            logger.warning(f"[Sim Stats] dt={dt}: {paths} path(s), standard error unreliable")
        report.rows.append(row)
        logger.info(f"[Sim Stats] dt={dt:g} N={level.steps} mean|err|={acc.mean:.4e} se={acc.std_error:.2e}")
    report.fit()
    return report


def scheme_gap_study(model: SdeModel, config: SchemeConfig, dts: Sequence[float], paths: int,
                     seed: int, horizon: float = DEFAULT_HORIZON, workers: int = 1,
                     cache_dir: Optional[str] = None) -> ConvergenceReport:
    """
    Mean |y_N(Ito) - y_N(Stratonovich)| on shared noise, per dt, with fitted slope.
    """
    _check_levels(dts)
    x0 = model.initial_state()
    report = ConvergenceReport(model.name, "ito-vs-strat", config.order, config.route)
    for dt in sorted(dts, reverse=True):
        steps = steps_for(dt, horizon)
        ito = replace(config, calculus="ito", dt=dt, steps=steps)
        strat = replace(config, calculus="strat", dt=dt, steps=steps)
        qs = resolve_q(ito, model.m)

        def job(block_spec, ito=ito, strat=strat, qs=qs):
            block, size = block_spec
            a = simulate(model, ito, seed, x0, paths=size, block=block, cache_dir=cache_dir, qs=qs)
            b = simulate(model, strat, seed, x0, paths=size, block=block, cache_dir=cache_dir, qs=qs)
            part = RunningStats()
            part.push_array(np.linalg.norm(a.final_state - b.final_state, axis=0))
            return part

        acc = _run_blocks(job, paths, workers)
        report.rows.append(ConvergenceRow(dt, steps, paths, acc.mean, acc.std_error))
    report.fit()
    return report


# -- fine-grid oracle for single integrals ----------------------------------------

@dataclass
class ValidationResult:
    family: str
    pattern: IndexPattern
    q: int
    delta: float
    samples: int
    substeps: int
    empirical_mse: float
    std_error: float
    exact_mse: float
    source: str

    @property
    def z(self) -> float:
        if not self.std_error > 0:
            return float('nan')
        return (self.empirical_mse - self.exact_mse) / self.std_error


def fine_grid_integral(dw: np.ndarray, indices: Sequence[int], exponents: Sequence[int],
                       delta: float) -> np.ndarray:
    """
    Left-point Ito sums of the weighted iterated integral.

    Args:
        dw: increments, shape (m, M, batch)
        indices: component indices (i_1, ..., i_k), 1-based
        exponents: weight exponents (l_1, ..., l_k)
        delta: step length

    Returns:
        (batch,) values of int (t-t_k)^{l_k} ... int (t-t_1)^{l_1} dw^{(i_1)} ... dw^{(i_k)}
    """
    _, n_sub, batch = dw.shape
    h = delta / n_sub
    left = np.arange(n_sub) * h
    prev = np.ones((n_sub, batch))
    for level, (i, l) in enumerate(zip(indices, exponents)):
        weight = (-left) ** l
        incr = weight[:, None] * prev * dw[i - 1]
        if level == len(indices) - 1:
            return incr.sum(axis=0)
        # strictly earlier increments only
        cum = np.cumsum(incr, axis=0)
        prev = np.vstack([np.zeros((1, batch)), cum[:-1]])
    raise ParameterError("empty index tuple")


def validate_integrals(family: str, q: int, samples: int, substeps: int, seed: int,
                       pattern: Optional[IndexPattern] = None, delta: float = 1.0,
                       chunk: int = 500, route: str = "direct") -> ValidationResult:
    """
    Empirical mean-square error of the truncated expansion against a fine grid.

    The basis zeta_j is the midpoint quadrature of phi_j against the same fine
    increments, so expansion and reference share one Brownian path. Patterns
    without a tabulated error on the direct route are compared against
    direct_route_mse.
    """
    profile = WeightProfile.from_label(family)
    k = profile.multiplicity
    if pattern is None:
        pattern = IndexPattern(tuple(range(k)))
    if pattern.k != k:
        raise ParameterError(f"pattern {pattern.labels} does not fit family {family}")
    if samples < 2:
        raise ParameterError(f"samples must be >= 2, got {samples}")
    if substeps < 1:
        raise ParameterError(f"substeps must be >= 1, got {substeps}")

    indices = tuple(label + 1 for label in pattern.labels)
    m = pattern.classes
    q_max = max(q + 2, 2)
    if route == "combined":
        families = [f for f in FAMILIES[2.5] if 2 <= len(f) < k] + [family]
    else:
        families = [family] if k >= 2 else []
    qs = {f: q for f in families}
    tables = {f: build_table(WeightProfile.from_label(f), q) for f in families if len(f) >= 3}

    spec = ScaledBasisSpec(delta, 0.0)
    h = delta / substeps
    mids = (np.arange(substeps) + 0.5) * h
    phi = spec.phi_matrix(q_max, mids)

    acc = RunningStats()
    chunk_id, done = 0, 0
    with timed(f"validate {family} q={q}"):
        while done < samples:
            size = min(chunk, samples - done)
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chunk_id,)))
            dw = rng.standard_normal((m, substeps, size)) * math.sqrt(h)
            reference = fine_grid_integral(dw, indices, profile.exponents, delta)
            zeta = np.einsum("js,isb->jib", phi, dw)
            basis = GaussianBasis(values=zeta, delta=delta, seed=seed, step_index=chunk_id)
            integrals = IntegralSet(basis, tables, qs, "ito", route, use_diagonal=True)
            approx = integrals.value(family, indices)
            acc.push_array((reference - approx) ** 2)
            done += size
            chunk_id += 1

    if route == "direct" and k >= 3 and not is_covered(profile, pattern):
        exact, source = direct_route_mse(profile, pattern, q, delta), "direct-expansion"
    else:
        exact, source = family_error(profile, pattern, q, delta)
    result = ValidationResult(family, pattern, q, delta, samples, substeps,
                              acc.mean, acc.std_error, exact, source)
    logger.info(f"[Sim Stats] {family} {pattern.label} q={q}: mse={acc.mean:.6e} "
                f"exact={exact:.6e} z={result.z:.2f}")
    return result
