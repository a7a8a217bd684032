"""Sequential regularization path with hierarchy-preserving adaptive penalties.

Penalty levels on the path are per observation, on the scale of
``lambda_max = max|[X M XM]' Y| / n``. The penalized objective sums squared
residuals over subjects, so a level ``lam`` reaches the solvers as

* ``2 n lam`` for the mediator equation, and
* ``2 n lam / sigma`` for the outcome equation.

The extra ``1 / sigma`` keeps the outcome penalty on the same correlation
scale as ``lambda_max``: an outcome coefficient leaves zero once
``|z' r| / (n sigma) > lam``. Without it the ``1 / sigma2`` weight on the
outcome residuals lets noise interactions enter long before real
exposure-to-mediator paths whenever the outcome is well explained.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    DEFAULT_SELECTION_TOL,
    CoefficientSet,
    Dataset,
    NonConvergence,
    NuisanceParams,
    SelectionState,
    StandardizedDataset,
    XMIntError,
    extract_selection,
    standardize,
)
from .precision import GlassoConfig, estimate_precision, estimate_sigma2, residual_covariance
from .score import score_model
from .solver import PenaltySpec, SolverConfig, mediator_step, outcome_step

logger = logging.getLogger(__name__)


class DegenerateInput(XMIntError):
    pass


class EnlargementExhausted(XMIntError):
    pass


@dataclass(frozen=True)
class PathConfig:
    K: int = 20
    zeta: float = 0.05
    enlarge_factor: float = 1.5
    max_enlarge: int = 20
    outer_max_iter: int = 50
    outer_tol: float = 1e-5
    solver: SolverConfig = field(default_factory=SolverConfig)
    glasso: GlassoConfig = field(default_factory=GlassoConfig)

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("K must be at least 2")
        if not 0 < self.zeta < 1:
            raise ValueError("zeta must lie in (0, 1)")
        if not self.enlarge_factor > 1:
            raise ValueError("enlarge_factor must exceed 1")
        if self.max_enlarge < 1 or self.outer_max_iter < 1 or not self.outer_tol > 0:
            raise ValueError("max_enlarge, outer_max_iter and outer_tol must be positive")


@dataclass(frozen=True)
class PathStep:
    lam: float
    coeffs: CoefficientSet
    nuisance: NuisanceParams
    state: SelectionState
    loglik: float
    df: int
    hbic: float
    converged: bool
    # penalty factors actually used at this step, keyed "a", "b1", "b2"
    factors: dict = field(repr=False, compare=False, default_factory=dict)


@dataclass(frozen=True)
class PathResult:
    steps: list
    chosen: int
    config_echo: PathConfig
    standardized: StandardizedDataset = field(repr=False, compare=False, default=None)
    n_enlargements: int = 0

    @property
    def chosen_step(self) -> PathStep:
        return self.steps[self.chosen]

    @property
    def selection(self) -> SelectionState:
        """Chosen model's selection with interaction indices added to the mediators."""
        return self.chosen_step.state.closure()

    @property
    def converged(self) -> bool:
        return all(step.converged for step in self.steps)


def is_null_step(step: PathStep) -> bool:
    """Nothing selected and every interaction coefficient zero.

    A lone nonzero ``a_v`` (an exposure-to-candidate path with no outcome
    effect) does not make a model non-null.
    """
    return step.state.is_empty and not np.any(np.abs(step.coeffs.b2) > DEFAULT_SELECTION_TOL)


def lambda_max(sd: StandardizedDataset) -> float:
    d = sd.data
    Z = np.column_stack([d.X, d.M, sd.XM])
    return float(np.max(np.abs(Z.T @ d.Y)) / d.n)


def lambda_sequence(sd: StandardizedDataset, cfg: PathConfig, scale: float = 1.0) -> np.ndarray:
    """``K`` geometrically spaced levels from ``scale * lambda_max`` down to ``zeta`` times that."""
    top = scale * lambda_max(sd)
    return top * cfg.zeta ** (np.arange(cfg.K) / (cfg.K - 1))


def penalty_factors(prev: SelectionState, V: int) -> dict:
    """0/1 factors for ``a``, ``b1`` and ``b2`` given the previous selection.

    ``a_v`` and ``b1_v`` are free once ``v`` was selected as a mediator or as
    an interaction; ``b2_v`` is free once ``v`` was selected as an interaction.
    """
    main = np.ones(V)
    main[list(set(prev.mediators) | set(prev.interactions))] = 0.0
    inter = np.ones(V)
    inter[list(prev.interactions)] = 0.0
    return {"a": main, "b1": main.copy(), "b2": inter}


def block_lambdas(lam: float, n: int, sigma2: float) -> tuple[float, float]:
    """Solver-scale penalties ``(outcome, mediator)`` for path level ``lam``."""
    med = 2.0 * n * lam
    return med / math.sqrt(sigma2), med


def penalized_objective(sd, coeffs, nuis, lam, factors) -> float:
    """Penalized negative log-likelihood (times two) at path level ``lam``."""
    d = sd.data
    n = d.n
    _, logdet = np.linalg.slogdet(nuis.omega)
    ry = d.Y - coeffs.c0 - coeffs.c * d.X - d.M @ coeffs.b1 - sd.XM @ coeffs.b2
    rm = d.M - coeffs.a0 - np.outer(d.X, coeffs.a)
    out_lam, med_lam = block_lambdas(lam, n, nuis.sigma2)
    pen = med_lam * np.sum(factors["a"] * np.abs(coeffs.a)) + out_lam * (
        np.sum(factors["b1"] * np.abs(coeffs.b1)) + np.sum(factors["b2"] * np.abs(coeffs.b2))
    )
    return float(
        n * math.log(nuis.sigma2)
        - n * logdet
        + np.sum((rm @ nuis.omega) * rm)
        + ry @ ry / nuis.sigma2
        + pen
    )


def _estimate_omega(S, cfg: GlassoConfig):
    try:
        return estimate_precision(S, cfg), True
    except NonConvergence as exc:
        logger.warning("%s; using last iterate", exc)
        return exc.result, False


def initial_nuisance(sd: StandardizedDataset, cfg: PathConfig) -> NuisanceParams:
    """Nuisances of the all-zero model: ``sigma2`` from ``Y`` and ``Omega`` from ``M``."""
    d = sd.data
    sigma2 = estimate_sigma2(d.Y, np.zeros(d.n))
    S = residual_covariance(d.M, d.X, np.zeros(d.V), np.zeros(d.V))
    omega, _ = _estimate_omega(S, cfg.glasso)
    return NuisanceParams(sigma2=sigma2, omega=omega)


def fit_at_lambda(
    sd: StandardizedDataset,
    lam: float,
    prev: SelectionState,
    warm: tuple,
    cfg: PathConfig = PathConfig(),
) -> PathStep:
    """Alternate outcome fit, mediator fit, and nuisance updates at one penalty level."""
    d = sd.data
    n, V = d.n, d.V
    prev.check_bounds(V)
    coeffs, nuis = warm
    factors = penalty_factors(prev, V)
    out_factors = np.concatenate([factors["b1"], factors["b2"]])
    penalized_a = np.flatnonzero(factors["a"]).tolist()

    converged = False
    inner_ok = True
    obj_prev = penalized_objective(sd, coeffs, nuis, lam, factors)
    for _ in range(cfg.outer_max_iter):
        out_lam, med_lam = block_lambdas(lam, n, nuis.sigma2)
        try:
            outcome_pen = PenaltySpec(out_lam, out_factors)
            c0, c, b1, b2 = outcome_step(
                d.Y, d.X, d.M, sd.XM, nuis.sigma2, outcome_pen, coeffs, cfg.solver
            )
        except NonConvergence as exc:
            c0, c, b1, b2 = exc.result
            inner_ok = False
        try:
            a0, a = mediator_step(
                d.M, d.X, nuis.omega, med_lam, penalized_a, (coeffs.a0, coeffs.a), cfg.solver
            )
        except NonConvergence as exc:
            a0, a = exc.result
            inner_ok = False
        coeffs = CoefficientSet(a0=a0, a=a, c0=c0, c=c, b1=b1, b2=b2)

        fitted = c0 + c * d.X + d.M @ b1 + sd.XM @ b2
        sigma2 = estimate_sigma2(d.Y, fitted)
        omega, glasso_ok = _estimate_omega(residual_covariance(d.M, d.X, a0, a), cfg.glasso)
        inner_ok = inner_ok and glasso_ok
        nuis = NuisanceParams(sigma2=sigma2, omega=omega)

        obj = penalized_objective(sd, coeffs, nuis, lam, factors)
        if abs(obj - obj_prev) <= cfg.outer_tol * max(1.0, abs(obj_prev)):
            converged = True
            break
        obj_prev = obj

    if not converged:
        logger.info("outer alternation hit %d cycles at lambda=%.4g", cfg.outer_max_iter, lam)
    scored = score_model(sd, coeffs, nuis)
    return PathStep(
        lam=float(lam),
        coeffs=coeffs,
        nuisance=nuis,
        state=extract_selection(coeffs),
        loglik=scored.loglik,
        df=scored.df,
        hbic=scored.hbic,
        converged=converged and inner_ok,
        factors=factors,
    )


def run_path(d: Dataset, cfg: PathConfig = PathConfig()) -> PathResult:
    """Standardize, find a null starting level, sweep the path, and pick the HBIC minimiser.

    Raises
    ------
    DegenerateInput
        ``lambda_max`` is zero (``Y`` orthogonal to every candidate column).
    EnlargementExhausted
        No null model at the top level after ``cfg.max_enlarge`` enlargements.
    """
    sd = standardize(d)
    if not lambda_max(sd) > 1e-12:
        raise DegenerateInput("lambda_max is zero: Y is orthogonal to every column of [X M XM]")

    empty = SelectionState()
    warm0 = (CoefficientSet.zeros(d.V), initial_nuisance(sd, cfg))

    scale = 1.0
    n_enlarge = 0
    while True:
        lams = lambda_sequence(sd, cfg, scale)
        first = fit_at_lambda(sd, lams[0], empty, warm0, cfg)
        if is_null_step(first):
            break
        if n_enlarge >= cfg.max_enlarge:
            raise EnlargementExhausted(
                f"no null model after {n_enlarge} enlargements of lambda_max"
            )
        n_enlarge += 1
        scale *= cfg.enlarge_factor
    if n_enlarge:
        logger.debug("lambda_max enlarged %d times (x%.3g)", n_enlarge, scale)

    steps = [first]
    for lam in lams[1:]:
        prev = steps[-1]
        steps.append(fit_at_lambda(sd, lam, prev.state, (prev.coeffs, prev.nuisance), cfg))

    hbics = np.array([s.hbic for s in steps])
    chosen = int(np.argmin(hbics))
    return PathResult(
        steps=steps,
        chosen=chosen,
        config_echo=cfg,
        standardized=sd,
        n_enlargements=n_enlarge,
    )
