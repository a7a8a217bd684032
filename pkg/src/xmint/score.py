"""Joint Gaussian log-likelihood of the mediation model and the HBIC score."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    DEFAULT_SELECTION_TOL,
    CoefficientSet,
    NotPositiveDefinite,
    NuisanceParams,
    StandardizedDataset,
)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ScoredModel:
    loglik: float
    df: int
    hbic: float


def log_likelihood(sd: StandardizedDataset, coeffs: CoefficientSet, nuis: NuisanceParams) -> float:
    """Log-likelihood of ``f(Y | M, X) f(M | X)`` summed over subjects.

    The normalising constant is ``-n (V + 1) / 2 * log(2 pi)``, which reduces
    to ``-n log(2 pi)`` for a single mediator.
    """
    d = sd.data
    n = d.n
    try:
        L = np.linalg.cholesky(nuis.omega)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("omega is not positive definite") from exc
    logdet_omega = 2.0 * float(np.sum(np.log(np.diag(L))))

    ry = d.Y - coeffs.c0 - coeffs.c * d.X - d.M @ coeffs.b1 - sd.XM @ coeffs.b2
    rm = d.M - coeffs.a0 - np.outer(d.X, coeffs.a)
    quad_m = float(np.sum((rm @ nuis.omega) * rm))

    return (
        -0.5 * n * (d.V + 1) * LOG_2PI
        - 0.5 * n * math.log(nuis.sigma2)
        + 0.5 * n * logdet_omega
        - float(ry @ ry) / (2.0 * nuis.sigma2)
        - 0.5 * quad_m
    )


def degrees_of_freedom(coeffs: CoefficientSet, tol: float = DEFAULT_SELECTION_TOL) -> int:
    """Nonzero ``a``, ``b1`` and ``b2`` entries plus one for the direct effect ``c``.

    Intercepts, ``sigma2`` and ``Omega`` are shared by every model on a path
    and are not counted.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    return int(
        np.count_nonzero(np.abs(coeffs.a) > tol)
        + np.count_nonzero(np.abs(coeffs.b1) > tol)
        + np.count_nonzero(np.abs(coeffs.b2) > tol)
        + 1
    )


def hbic(loglik: float, df: int, N: int) -> float:
    """Per-model HBIC, ``-2 loglik + df * log(N / (2 pi))``; smaller is better.

    For two models the difference ``hbic_2 - hbic_1`` equals minus the
    pairwise statistic ``2 (l_2 - l_1) - (d_2 - d_1) log(N / (2 pi))``.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    return -2.0 * loglik + df * (math.log(N) - LOG_2PI)


def pairwise_hbic(loglik2: float, df2: int, loglik1: float, df1: int, N: int) -> float:
    """Pairwise statistic comparing model 2 against model 1 (larger favours model 2)."""
    return 2.0 * (loglik2 - loglik1) - (df2 - df1) * (math.log(N) - LOG_2PI)


def score_model(
    sd: StandardizedDataset,
    coeffs: CoefficientSet,
    nuis: NuisanceParams,
    tol: float = DEFAULT_SELECTION_TOL,
) -> ScoredModel:
    ll = log_likelihood(sd, coeffs, nuis)
    df = degrees_of_freedom(coeffs, tol)
    return ScoredModel(loglik=ll, df=df, hbic=hbic(ll, df, sd.n))
