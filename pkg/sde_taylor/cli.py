"""
Command-line front end.

    python main.py coeffs --profile 000 --q 6 --cache-dir cache
    python main.py mse-table --dt 1
    python main.py select-q --family 000 --gamma 2.5 --dt 0.0625
    python main.py simulate --model gbm-2noise --dt 0.01 --steps 100
    python main.py convergence --model gbm-2noise --gamma 2.5 --dts 0.25,0.125,0.0625 --paths 2000
    python main.py validate-integrals --family 00 --q 3 --samples 10000

Settings resolve as flags > --config file > built-in defaults.
"""

import argparse
import logging
import sys
from typing import Dict, List, Optional, Tuple

import numpy as np

from sde_taylor import __version__
from sde_taylor.analysis import convergence_study, validate_integrals
from sde_taylor.coeffs import WeightProfile, build_table, kernel_norm_value, save_table
from sde_taylor.config import (DEFAULT_ERROR_CONSTANT, DEFAULT_HORIZON, MAX_BASIS_INDEX,
                               load_config_file, resolve_cache_dir, setup_logging)
from sde_taylor.exceptions import (CacheError, ConfigError, DivergenceError, ParameterError,
                                   PatternNotClosedFormError, SdeTaylorError,
                                   ToleranceUnreachableError, UnsupportedRequestError)
from sde_taylor.model import get_model
from sde_taylor.mse import (IndexPattern, closed_form_pair_mse, distinct, exact_mse,
                            mse_upper_bound, parse_pattern, select_q, select_q_for_family)
from sde_taylor.schemes import FAMILIES, SchemeConfig, simulate
from sde_taylor.utils import format_float, write_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_UNSUPPORTED = 3

# reference rows: (family, q) with pairwise distinct indices
REFERENCE_ROWS = [("000", 6), ("100", 2), ("010", 2), ("001", 2), ("0000", 2), ("00000", 1)]
PAIR_TABLE_QS = range(0, 9)

DEFAULTS = {
    "model": "gbm-2noise",
    "gamma": 2.5,
    "calculus": "ito",
    "route": "direct",
    "dt": None,
    "dts": "0.25,0.125,0.0625,0.03125",
    "steps": 100,
    "paths": 1,
    "seed": 12345,
    "q": None,
    "cache_dir": None,
    "out": None,
    "horizon": DEFAULT_HORIZON,
    "constant": DEFAULT_ERROR_CONSTANT,
    "workers": 1,
    "profile": None,
    "pattern": None,
    "family": None,
    "samples": 10000,
    "substeps": 1000,
    "lla_form": "barred",
    "use_diagonal": True,
    "q_limit": MAX_BASIS_INDEX,
}


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got '{text}'")


CONVERTERS = {
    "gamma": float, "dt": float, "steps": int, "paths": int, "seed": int,
    "horizon": float, "constant": float, "workers": int, "samples": int,
    "substeps": int, "use_diagonal": _bool, "q_limit": int,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sde_taylor", description="Strong Taylor schemes for Ito SDEs")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p):
        p.add_argument("--config", default=None, help="key=value settings file")
        p.add_argument("--cache-dir", dest="cache_dir", default=None)
        p.add_argument("--out", default=None, help="CSV output path (stdout if omitted)")
        p.add_argument("-v", "--verbose", action="store_true")

    def scheme(p):
        p.add_argument("--model", default=None)
        p.add_argument("--gamma", type=float, default=None, choices=[2.0, 2.5])
        p.add_argument("--calculus", default=None, choices=["ito", "strat"])
        p.add_argument("--route", default=None, choices=["direct", "combined"])
        p.add_argument("--q", default=None, help="integer for all families, or label=q,label=q")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--paths", type=int, default=None)
        p.add_argument("--constant", type=float, default=None)
        p.add_argument("--lla-form", dest="lla_form", default=None, choices=["barred", "printed"])

    p = sub.add_parser("coeffs", help="build and cache a coefficient table")
    common(p)
    p.add_argument("--profile", default=None)
    p.add_argument("--q", default=None)
    p.add_argument("--dt", type=float, default=None)

    p = sub.add_parser("mse-table", help="reference mean-square errors")
    common(p)
    p.add_argument("--dt", type=float, default=None)

    p = sub.add_parser("select-q", help="smallest q meeting C*dt^(2*gamma+1)")
    common(p)
    p.add_argument("--family", default=None)
    p.add_argument("--pattern", default=None)
    p.add_argument("--model", default=None)
    p.add_argument("--gamma", type=float, default=None, choices=[2.0, 2.5])
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--constant", type=float, default=None)
    p.add_argument("--q-limit", dest="q_limit", type=int, default=None,
                   help="largest q tried (multiplicity >= 3 never exceeds MAX_BASIS_INDEX)")

    p = sub.add_parser("simulate", help="simulate paths of a registered model")
    common(p)
    scheme(p)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)

    p = sub.add_parser("convergence", help="strong-order study against the exact solution")
    common(p)
    scheme(p)
    p.add_argument("--dts", default=None, help="comma-separated step sizes")
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("validate-integrals", help="fine-grid check of one integral family")
    common(p)
    p.add_argument("--family", default=None)
    p.add_argument("--q", default=None)
    p.add_argument("--pattern", default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--substeps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--route", default=None, choices=["direct", "combined"])
    p.add_argument("--dt", type=float, default=None)
    return parser


def merge_settings(args: argparse.Namespace) -> Dict[str, object]:
    """flags > config file > defaults."""
    settings = dict(DEFAULTS)
    if getattr(args, "config", None):
        for key, raw in load_config_file(args.config).items():
            if key not in DEFAULTS:
                raise ConfigError(f"{args.config}: unknown setting '{key}'")
            convert = CONVERTERS.get(key, str)
            try:
                settings[key] = convert(raw)
            except ValueError:
                raise ConfigError(f"{args.config}: bad value '{raw}' for {key}")
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    if settings["gamma"] not in FAMILIES:
        raise ConfigError(f"gamma must be one of {sorted(FAMILIES)}, got {settings['gamma']}")
    settings["cache_dir"] = resolve_cache_dir(settings["cache_dir"])
    return settings


def parse_q(text, order: float) -> Dict[str, int]:
    """'6' -> every family of multiplicity >= 2; '00=3,000=2' -> those families."""
    if text is None:
        return {}
    text = str(text).strip()
    try:
        if "=" not in text:
            q = int(text)
            return {label: q for label in FAMILIES[order] if len(label) >= 2}
        out = {}
        for item in text.split(","):
            label, value = item.split("=", 1)
            out[label.strip()] = int(value)
        return out
    except ValueError:
        raise ParameterError(f"bad --q value '{text}'")


def parse_dts(text: str) -> List[float]:
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise ParameterError(f"bad --dts value '{text}'")


def scheme_config(settings, dt: float, steps: int) -> SchemeConfig:
    order = float(settings["gamma"])
    return SchemeConfig(calculus=settings["calculus"], order=order, route=settings["route"],
                        dt=dt, steps=steps, q=parse_q(settings["q"], order),
                        error_constant=settings["constant"], lla_form=settings["lla_form"],
                        use_diagonal=settings["use_diagonal"])


def _single_q(settings, default: int) -> int:
    text = settings["q"]
    if text is None:
        return default
    try:
        return int(text)
    except ValueError:
        raise ParameterError(f"--q must be an integer here, got '{text}'")


# -- subcommands -------------------------------------------------------------------

def cmd_coeffs(settings) -> int:
    if not settings["profile"]:
        raise ParameterError("coeffs needs --profile, e.g. --profile 000")
    profile = WeightProfile.from_label(settings["profile"])
    q = _single_q(settings, 2)
    table = build_table(profile, q)
    cache_dir = settings["cache_dir"] or "."
    path = save_table(table, cache_dir)

    dt = settings["dt"] or 1.0
    s = table.parseval_sum(dt)
    norm = kernel_norm_value(profile, dt)
    print(f"[Coeff Stats] profile {profile.label} q={q}: {len(table)} entries -> {path}")
    print(f"[Coeff Stats] S(q) = {format_float(s)}, residual I - S(q) = {format_float(norm - s)} (dt={dt:g})")
    return EXIT_OK


def mse_table_rows(delta: float):
    rows = []
    for label, q in REFERENCE_ROWS:
        profile = WeightProfile.from_label(label)
        pattern = distinct(profile.multiplicity)
        rows.append([label, pattern.label, q, delta, exact_mse(profile, pattern, q, delta),
                     mse_upper_bound(profile, q, delta), "exact"])
    for label in ("00", "01", "10"):
        profile = WeightProfile.from_label(label)
        for pattern in (IndexPattern((0, 1)), IndexPattern((0, 0))):
            if label == "00" and not pattern.is_distinct():
                continue
            for q in PAIR_TABLE_QS:
                rows.append([label, pattern.label, q, delta,
                             closed_form_pair_mse(pattern, q, label, delta),
                             mse_upper_bound(profile, q, delta), "closed-form"])
    return rows


def cmd_mse_table(settings) -> int:
    delta = settings["dt"] or 1.0
    if not delta > 0:
        raise ParameterError(f"--dt must be positive, got {delta}")
    header = ["family", "pattern", "q", "delta", "mse", "upper_bound", "source"]
    write_csv(settings["out"], header, mse_table_rows(delta))
    return EXIT_OK


def cmd_select_q(settings) -> int:
    gamma = float(settings["gamma"])
    dt = settings["dt"]
    if dt is None:
        raise ParameterError("select-q needs --dt")
    families = [settings["family"]] if settings["family"] else \
        [f for f in FAMILIES[gamma] if len(f) >= 2]
    rows = []
    for label in families:
        profile = WeightProfile.from_label(label)
        if settings["pattern"]:
            pattern = parse_pattern(settings["pattern"], profile.multiplicity)
            q = select_q(profile, pattern, dt, gamma, settings["constant"], settings["q_limit"])
            pattern_label = pattern.label
        else:
            m = get_model(settings["model"]).m
            q = select_q_for_family(label, m, dt, gamma, settings["constant"], settings["q_limit"])
            pattern_label = f"worst(m={m})"
        print(f"family {label} ({pattern_label}): q={q}")
        rows.append([label, pattern_label, dt, gamma, settings["constant"], q])
    if settings["out"]:
        write_csv(settings["out"], ["family", "pattern", "delta", "gamma", "constant", "q"], rows)
    return EXIT_OK


def cmd_simulate(settings) -> int:
    model = get_model(settings["model"])
    dt = settings["dt"] or 0.01
    config = scheme_config(settings, dt, settings["steps"])
    paths = settings["paths"]
    traj = simulate(model, config, settings["seed"], paths=None if paths == 1 else paths,
                    cache_dir=settings["cache_dir"])

    header = ["path", "step", "t"] + [f"x{j + 1}" for j in range(model.n)]
    rows = []
    states = traj.states if paths > 1 else traj.states[..., None]
    for path in range(states.shape[-1]):
        for p, t in enumerate(traj.times):
            rows.append([path, p, float(t)] + [float(v) for v in states[p, :, path]])
    write_csv(settings["out"], header, rows)
    return EXIT_OK


def cmd_convergence(settings) -> int:
    model = get_model(settings["model"])
    if not model.has_exact_solution:
        raise UnsupportedRequestError(f"model '{model.name}' has no exact solution to compare against")
    dts = parse_dts(settings["dts"])
    config = scheme_config(settings, dts[0], 1)
    report = convergence_study(model, config, dts, settings["paths"], settings["seed"],
                               settings["horizon"], settings["workers"], settings["cache_dir"])
    header = ["model", "calculus", "gamma", "route", "dt", "steps", "paths", "mean_abs_error",
              "std_error", "reliable", "slope", "intercept"]
    rows = [[report.model, report.calculus, report.gamma, report.route, r.dt, r.steps, r.paths,
             r.mean_abs_error, r.std_error, "yes" if r.reliable else "no",
             report.slope, report.intercept] for r in report.rows]
    write_csv(settings["out"], header, rows)
    print(f"[Sim Stats] fitted strong order {report.slope:.3f}", file=sys.stderr)
    return EXIT_OK


def cmd_validate_integrals(settings) -> int:
    family = settings["family"] or "00"
    profile = WeightProfile.from_label(family)
    q = _single_q(settings, 3)
    pattern = parse_pattern(settings["pattern"], profile.multiplicity) if settings["pattern"] else None
    delta = settings["dt"] or 1.0
    result = validate_integrals(family, q, settings["samples"], settings["substeps"],
                                settings["seed"], pattern, delta, route=settings["route"])
    header = ["family", "pattern", "q", "delta", "samples", "substeps", "empirical_mse",
              "std_error", "exact_mse", "z"]
    row = [family, result.pattern.label, q, delta, result.samples, result.substeps,
           result.empirical_mse, result.std_error, result.exact_mse, result.z]
    write_csv(settings["out"], header, [row])
    return EXIT_OK


COMMANDS = {
    "coeffs": cmd_coeffs,
    "mse-table": cmd_mse_table,
    "select-q": cmd_select_q,
    "simulate": cmd_simulate,
    "convergence": cmd_convergence,
    "validate-integrals": cmd_validate_integrals,
}


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, (UnsupportedRequestError, ToleranceUnreachableError,
                          PatternNotClosedFormError, DivergenceError)):
        return EXIT_UNSUPPORTED
    if isinstance(error, (CacheError, OSError)):
        return EXIT_IO
    return EXIT_USAGE


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if not args.command:
        parser.print_help(sys.stderr)
        return EXIT_USAGE

    setup_logging(getattr(args, "verbose", False))
    try:
        settings = merge_settings(args)
        return COMMANDS[args.command](settings)
    except (SdeTaylorError, OSError) as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return exit_code_for(e)
