"""Synthetic-data experiment: generate under a known truth, fit, and score selection accuracy.

Random numbers come from numpy's PCG64 generator seeded with
``base_seed + run_index``; draws are taken in the fixed order X, mediator
noise (row-major N x V), outcome noise.
"""

from __future__ import annotations

import csv
import io
import logging
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import Optional, Sequence

import numpy as np

from .core import Dataset, SelectionState, XMIntError
from .path import PathConfig, run_path

logger = logging.getLogger(__name__)

GRID_HEADER = ("N", "V", "ES", "runs", "tpr_med", "fdr_med", "tpr_int", "fdr_int", "converged_runs")

FULL_GRID_NS = (100, 200, 400)
FULL_GRID_VS = (50, 100, 200, 400)
FULL_GRID_ESS = (0.25, 0.5, 0.75, 1.0)


class InvalidTruth(XMIntError, ValueError):
    pass


@dataclass(frozen=True)
class SimTruth:
    """True signal structure. Indices are 0-based, so the default is M1, M2, M3 and X*M1."""

    true_mediators: tuple = (0, 1, 2)
    true_interactions: tuple = (0,)
    effect_size: float = 1.0
    direct_effect: float = 1.0

    def __post_init__(self):
        if not self.effect_size > 0:
            raise InvalidTruth("effect_size must be positive")
        object.__setattr__(self, "true_mediators", tuple(sorted(set(self.true_mediators))))
        object.__setattr__(self, "true_interactions", tuple(sorted(set(self.true_interactions))))

    def coefficients(self, V: int):
        """Return ``(a, b1, b2)`` arrays of length ``V``."""
        idx = self.true_mediators + self.true_interactions
        if idx and (min(idx) < 0 or max(idx) >= V):
            raise InvalidTruth(f"truth indices {idx} out of range for V={V}")
        a = np.zeros(V)
        b1 = np.zeros(V)
        b2 = np.zeros(V)
        a[list(self.true_mediators)] = self.effect_size
        b1[list(self.true_mediators)] = self.effect_size
        b2[list(self.true_interactions)] = self.effect_size
        return a, b1, b2


@dataclass(frozen=True)
class SimMetrics:
    tpr_med: float
    fdr_med: float
    tpr_int: float
    fdr_int: float


@dataclass(frozen=True)
class GridRow:
    N: int
    V: int
    ES: float
    runs: int
    tpr_med: float
    fdr_med: float
    tpr_int: float
    fdr_int: float
    converged_runs: int
    failed_runs: int = 0
    # per-run selections in run order, kept for determinism checks
    selections: tuple = field(default=(), repr=False)

    def as_csv_row(self) -> list:
        return [
            self.N,
            self.V,
            repr(float(self.ES)),
            self.runs,
            repr(self.tpr_med),
            repr(self.fdr_med),
            repr(self.tpr_int),
            repr(self.fdr_int),
            self.converged_runs,
        ]


def generate_dataset(N: int, V: int, truth: SimTruth = SimTruth(), seed: int = 0) -> Dataset:
    if N < 3:
        raise ValueError("N must be at least 3")
    a, b1, b2 = truth.coefficients(V)
    rng = np.random.Generator(np.random.PCG64(seed))
    X = rng.standard_normal(N)
    M = np.outer(X, a) + rng.standard_normal((N, V))
    Y = truth.direct_effect * X + M @ b1 + (X[:, None] * M) @ b2 + rng.standard_normal(N)
    return Dataset(X=X, Y=Y, M=M)


def _rate(hits: int, total: int) -> float:
    return hits / total if total else 0.0


def score_selection(selected: SelectionState, truth: SimTruth) -> SimMetrics:
    """TPR and FDR for mediators and interactions; FDR is 0 for an empty selection."""
    med, inter = set(selected.mediators), set(selected.interactions)
    tmed, tint = set(truth.true_mediators), set(truth.true_interactions)
    return SimMetrics(
        tpr_med=_rate(len(med & tmed), len(tmed)),
        fdr_med=_rate(len(med - tmed), len(med)),
        tpr_int=_rate(len(inter & tint), len(tint)),
        fdr_int=_rate(len(inter - tint), len(inter)),
    )


def dataset_to_csv(d: Dataset, path: str) -> None:
    """Write ``X, Y, <mediators>`` with full float precision."""
    header = ["X", "Y", *d.column_names]
    table = np.column_stack([d.X, d.Y, d.M])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in table:
        writer.writerow([repr(float(v)) for v in row])
    atomic_write_text(path, buf.getvalue())


def atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_name(N: int, V: int, ES: float, seed: int) -> str:
    return f"sim_N{N}_V{V}_ES{ES:g}_seed{seed}.csv"


def _one_run(task):
    N, V, ES, seed, truth_template, cfg, dump_dir = task
    truth = SimTruth(
        true_mediators=truth_template.true_mediators,
        true_interactions=truth_template.true_interactions,
        effect_size=ES,
        direct_effect=truth_template.direct_effect,
    )
    d = generate_dataset(N, V, truth, seed)
    if dump_dir is not None:
        dataset_to_csv(d, os.path.join(dump_dir, dump_name(N, V, ES, seed)))
    try:
        res = run_path(d, cfg)
    except XMIntError as exc:
        logger.warning("run failed (N=%d V=%d ES=%g seed=%d): %s", N, V, ES, seed, exc)
        return None
    sel = res.selection
    return score_selection(sel, truth), res.converged, sel


def run_grid(
    Ns: Sequence[int],
    Vs: Sequence[int],
    ESs: Sequence[float],
    runs: int = 20,
    base_seed: int = 0,
    cfg: PathConfig = PathConfig(),
    jobs: int = 1,
    truth: SimTruth = SimTruth(),
    dump_dir: Optional[str] = None,
) -> list:
    """Average selection metrics over ``runs`` replicates for every (N, V, ES) cell.

    Replicate ``r`` of every cell uses seed ``base_seed + r``. Failed runs
    are logged, left out of the means and not counted as converged. Rows come
    back in grid order (N outermost, ES innermost) whatever ``jobs`` is.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    cells = list(product(Ns, Vs, ESs))
    for N, V, ES in cells:
        if not ES > 0:
            raise InvalidTruth(f"effect size must be positive, got {ES}")
        if N < 3 or V < 1:
            raise ValueError(f"invalid grid cell N={N}, V={V}")
    tasks = [
        (N, V, ES, base_seed + r, truth, cfg, dump_dir) for (N, V, ES) in cells for r in range(runs)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_one_run, tasks))
    else:
        outcomes = [_one_run(t) for t in tasks]

    rows = []
    for c, (N, V, ES) in enumerate(cells):
        cell = outcomes[c * runs : (c + 1) * runs]
        ok = [o for o in cell if o is not None]
        metrics = np.array(
            [[m.tpr_med, m.fdr_med, m.tpr_int, m.fdr_int] for m, _, _ in ok]
        ).reshape(-1, 4)
        means = metrics.mean(axis=0) if len(ok) else np.full(4, np.nan)
        rows.append(
            GridRow(
                N=N,
                V=V,
                ES=float(ES),
                runs=runs,
                tpr_med=float(means[0]),
                fdr_med=float(means[1]),
                tpr_int=float(means[2]),
                fdr_int=float(means[3]),
                converged_runs=sum(1 for _, conv, _ in ok if conv),
                failed_runs=runs - len(ok),
                selections=tuple(o[2] if o is not None else None for o in cell),
            )
        )
    return rows


def grid_to_csv(rows: Sequence[GridRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(GRID_HEADER)
    for row in rows:
        writer.writerow(row.as_csv_row())
    return buf.getvalue()
