"""Command-line entry point: ``xmint fit`` and ``xmint simulate``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import math
import os
import sys
from typing import Optional

import numpy as np

from .core import Dataset, XMIntError, ZeroVarianceColumn, destandardize_coefficients, standardize
from .path import PathConfig, run_path
from .precision import GlassoConfig
from .simulation import (
    FULL_GRID_ESS,
    FULL_GRID_NS,
    FULL_GRID_VS,
    atomic_write_text,
    grid_to_csv,
    run_grid,
)
from .solver import SolverConfig

logger = logging.getLogger("xmint")

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_ALGORITHM = 3
REPORT_SCHEMA_VERSION = 1

# key=value names accepted in --config files, mapped to (section, field, type)
CONFIG_KEYS = {
    "k": ("path", "K", int),
    "zeta": ("path", "zeta", float),
    "enlarge_factor": ("path", "enlarge_factor", float),
    "max_enlarge": ("path", "max_enlarge", int),
    "outer_max_iter": ("path", "outer_max_iter", int),
    "outer_tol": ("path", "outer_tol", float),
    "max_iter": ("solver", "max_iter", int),
    "coord_tol": ("solver", "coord_tol", float),
    "kkt_tol": ("solver", "kkt_tol", float),
    "rho": ("glasso", "rho", float),
    "glasso_max_iter": ("glasso", "max_iter", int),
    "glasso_tol": ("glasso", "tol", float),
    "glasso_kkt_tol": ("glasso", "kkt_tol", float),
    "ridge": ("glasso", "ridge", float),
}


class InputError(Exception):
    """Malformed user input; maps to exit code 2."""


def _setup_logging() -> None:
    level = os.environ.get("XMINT_LOG", "warn").lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("xmint")
    root.handlers[:] = [handler]
    root.setLevel(levels.get(level, logging.WARNING))


def read_config_file(path: str) -> dict:
    overrides = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise InputError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lower()
        if key not in CONFIG_KEYS:
            raise InputError(f"{path}:{lineno}: unknown config key {key!r}")
        overrides[key] = value
    return overrides


def build_config(overrides: dict) -> PathConfig:
    sections = {"path": {}, "solver": {}, "glasso": {}}
    for key, value in overrides.items():
        section, name, typ = CONFIG_KEYS[key]
        try:
            sections[section][name] = typ(value)
        except (TypeError, ValueError) as exc:
            raise InputError(f"invalid value for {key}: {value!r}") from exc
    try:
        return PathConfig(
            solver=SolverConfig(**sections["solver"]),
            glasso=GlassoConfig(**sections["glasso"]),
            **sections["path"],
        )
    except ValueError as exc:
        raise InputError(f"invalid configuration: {exc}") from exc


def config_to_dict(cfg: PathConfig) -> dict:
    return dataclasses.asdict(cfg)


def _parse_float(text: str) -> Optional[float]:
    try:
        value = float(text)
    except ValueError:
        return None
    return value


def load_dataset(path: str, exposure: str, outcome: str, mediators: Optional[list] = None) -> Dataset:
    """Read a headered CSV into a :class:`Dataset`, naming the offending cell on failure."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise InputError(f"{path} is not valid UTF-8") from exc
    if not rows:
        raise InputError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if len(set(header)) != len(header):
        raise InputError("duplicate column names in header")
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise InputError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
    for name, role in ((exposure, "exposure"), (outcome, "outcome")):
        if name not in header:
            raise InputError(f"{role} column {name!r} not found")
    if exposure == outcome:
        raise InputError("exposure and outcome must be different columns")

    if mediators:
        missing = [m for m in mediators if m not in header]
        if missing:
            raise InputError(f"mediator column(s) not found: {', '.join(missing)}")
        if exposure in mediators or outcome in mediators:
            raise InputError("exposure/outcome cannot also be mediators")
        med_names = list(mediators)
    else:
        med_names = []
        for j, name in enumerate(header):
            if name in (exposure, outcome):
                continue
            if body and _parse_float(body[0][j]) is None:
                logger.warning("skipping non-numeric column %r", name)
                continue
            med_names.append(name)
    if not med_names:
        raise InputError("no candidate mediator columns")

    def column(name):
        j = header.index(name)
        values = np.empty(len(body))
        for i, row in enumerate(body):
            v = _parse_float(row[j])
            if v is None or not math.isfinite(v):
                raise InputError(f"column {name!r}, line {i + 2}: invalid numeric value {row[j]!r}")
            values[i] = v
        return values

    X = column(exposure)
    Y = column(outcome)
    M = np.column_stack([column(m) for m in med_names]) if body else np.empty((0, len(med_names)))
    try:
        d = Dataset(X=X, Y=Y, M=M, column_names=med_names)
        standardize(d)
    except ZeroVarianceColumn as exc:
        name = {"X": exposure, "Y": outcome}.get(exc.column, exc.column)
        raise InputError(f"column {name!r} is constant") from exc
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    return d


def _coef_dict(coeffs, names) -> dict:
    return {
        "c0": coeffs.c0,
        "c": coeffs.c,
        "a0": dict(zip(names, coeffs.a0.tolist())),
        "a": dict(zip(names, coeffs.a.tolist())),
        "b1": dict(zip(names, coeffs.b1.tolist())),
        "b2": dict(zip(names, coeffs.b2.tolist())),
    }


def build_report(result, d: Dataset, exposure: str, outcome: str, data_path: str) -> dict:
    names = list(d.column_names)
    step = result.chosen_step
    sel = result.selection
    warnings = []
    for k, s in enumerate(result.steps):
        if not s.converged:
            warnings.append(f"step {k} (lambda={s.lam:.6g}) did not fully converge")
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "data": os.path.basename(data_path),
        "n": d.n,
        "exposure": exposure,
        "outcome": outcome,
        "candidate_mediators": names,
        "selected_mediators": [names[v] for v in sel.mediators],
        "selected_interactions": [names[v] for v in sel.interactions],
        "chosen_step": result.chosen,
        "chosen_lambda": step.lam,
        "n_enlargements": result.n_enlargements,
        "coefficients": {
            "original": _coef_dict(destandardize_coefficients(step.coeffs, result.standardized), names),
            "standardized": _coef_dict(step.coeffs, names),
        },
        "hbic_path": [
            {
                "lambda": s.lam,
                "hbic": s.hbic,
                "loglik": s.loglik,
                "df": s.df,
                "n_mediators": len(s.state.mediators),
                "n_interactions": len(s.state.interactions),
                "converged": s.converged,
            }
            for s in result.steps
        ],
        "config": config_to_dict(result.config_echo),
        "warnings": warnings,
    }


def path_csv(report: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    cols = ["lambda", "hbic", "loglik", "df", "n_mediators", "n_interactions", "converged"]
    writer.writerow(["step", *cols])
    for k, row in enumerate(report["hbic_path"]):
        writer.writerow([k, *(row[c] for c in cols)])
    return buf.getvalue()


def cmd_fit(args) -> int:
    overrides = read_config_file(args.config) if args.config else {}
    for key in ("k", "zeta", "rho"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    cfg = build_config(overrides)
    mediators = _split_list(args.mediators, str) if args.mediators else None
    d = load_dataset(args.data, args.exposure, args.outcome, mediators)
    try:
        result = run_path(d, cfg)
    except XMIntError as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ALGORITHM
    report = build_report(result, d, args.exposure, args.outcome, args.data)
    atomic_write_text(args.out, json.dumps(report, indent=2) + "\n")
    if args.path_csv:
        atomic_write_text(args.path_csv, path_csv(report))
    print(
        f"mediators: {', '.join(report['selected_mediators']) or '-'}; "
        f"interactions: {', '.join(report['selected_interactions']) or '-'}"
    )
    return EXIT_OK


def _split_list(values, typ):
    out = []
    for token in values:
        for part in str(token).split(","):
            part = part.strip()
            if not part:
                continue
            try:
                out.append(typ(part))
            except ValueError as exc:
                raise InputError(f"invalid list value {part!r}") from exc
    return out


def cmd_simulate(args) -> int:
    if args.full_grid:
        Ns, Vs, ESs = list(FULL_GRID_NS), list(FULL_GRID_VS), list(FULL_GRID_ESS)
    else:
        if not (args.N and args.V and args.ES):
            raise InputError("--N, --V and --ES are required unless --full-grid is given")
        Ns, Vs, ESs = _split_list(args.N, int), _split_list(args.V, int), _split_list(args.ES, float)
    if not Ns or not Vs or not ESs:
        raise InputError("grid lists must be nonempty")
    if any(not es > 0 for es in ESs):
        raise InputError("effect sizes must be positive")
    if any(n < 3 for n in Ns):
        raise InputError("sample sizes must be at least 3")
    if any(v < 3 for v in Vs):
        raise InputError("V must be at least 3 for the default truth (M1, M2, M3)")
    if args.runs < 1:
        raise InputError("--runs must be at least 1")
    if args.jobs < 1:
        raise InputError("--jobs must be at least 1")
    overrides = read_config_file(args.config) if args.config else {}
    for key in ("k", "zeta", "rho"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    cfg = build_config(overrides)
    if args.dump_data:
        os.makedirs(args.dump_data, exist_ok=True)

    rows = run_grid(Ns, Vs, ESs, runs=args.runs, base_seed=args.seed, cfg=cfg, jobs=args.jobs, dump_dir=args.dump_data)
    atomic_write_text(args.out, grid_to_csv(rows))
    for r in rows:
        flag = f" failed={r.failed_runs}" if r.failed_runs else ""
        print(
            f"N={r.N} V={r.V} ES={r.ES:g} runs={r.runs} "
            f"TPR_med={r.tpr_med:.3f} FDR_med={r.fdr_med:.3f} "
            f"TPR_int={r.tpr_int:.3f} FDR_int={r.fdr_int:.3f} converged={r.converged_runs}{flag}"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xmint",
        description="Select mediators and exposure-by-mediator interactions with preserved hierarchy.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--k", type=int, help="path length K (default 20)")
        p.add_argument("--zeta", type=float, help="lambda_min / lambda_max (default 0.05)")
        p.add_argument("--rho", type=float, help="precision off-diagonal penalty (default 0.1)")
        p.add_argument("--config", help="key=value config file; flags override it")
        p.add_argument("--out", required=True, help="output file")

    fit = sub.add_parser("fit", help="run the selection procedure on a CSV file")
    fit.add_argument("--data", required=True)
    fit.add_argument("--exposure", required=True)
    fit.add_argument("--outcome", required=True)
    fit.add_argument("--mediators", nargs="+", help="mediator columns (default: all other numeric columns)")
    fit.add_argument("--path-csv", help="also write the HBIC path as CSV")
    common(fit)
    fit.set_defaults(func=cmd_fit)

    sim = sub.add_parser("simulate", help="reproduce the selection-accuracy simulation")
    sim.add_argument("--N", nargs="+", help="sample sizes")
    sim.add_argument("--V", nargs="+", help="numbers of candidate mediators")
    sim.add_argument("--ES", nargs="+", help="effect sizes")
    sim.add_argument("--full-grid", action="store_true", help="full 3 x 4 x 4 grid")
    sim.add_argument("--runs", type=int, default=20)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--jobs", type=int, default=1)
    sim.add_argument("--dump-data", help="directory for the generated datasets")
    common(sim)
    sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
