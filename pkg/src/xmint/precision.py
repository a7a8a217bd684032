"""Nuisance-parameter estimation: mediator residual precision and outcome noise variance."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import DimensionMismatch, NonConvergence, NotPositiveDefinite

logger = logging.getLogger(__name__)

SIGMA2_FLOOR = 1e-8


@dataclass(frozen=True)
class GlassoConfig:
    """Settings for the sparse precision estimate.

    ``rho`` penalizes off-diagonal entries only. ``ridge`` is added to the
    diagonal of a covariance that is not positive definite (e.g. n < V).
    Iteration stops once no entry of ``Omega`` moves by ``tol`` in a cycle
    and the optimality residual of ``inv(Omega)`` against ``S`` is below
    ``kkt_tol``.
    """

    rho: float = 0.1
    max_iter: int = 200
    tol: float = 1e-5
    kkt_tol: float = 1e-5
    ridge: float = 1e-4
    inner_max_iter: int = 10000
    inner_tol: float = 1e-10

    def __post_init__(self):
        if not self.rho >= 0:
            raise ValueError("rho must be nonnegative")
        if not self.tol > 0 or not self.kkt_tol > 0 or self.max_iter < 1:
            raise ValueError("tol, kkt_tol and max_iter must be positive")
        if not self.ridge >= 0:
            raise ValueError("ridge must be nonnegative")


def residual_covariance(M, X, a0, a) -> np.ndarray:
    """``(1/n) * sum_i r_i r_i'`` with ``r_i = M_i - a0 - a X_i``."""
    M = np.asarray(M, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    a0 = np.asarray(a0, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    n, V = M.shape
    if X.shape != (n,) or a0.shape != (V,) or a.shape != (V,):
        raise DimensionMismatch("residual_covariance: inconsistent input shapes")
    R = M - a0 - np.outer(X, a)
    S = R.T @ R / n
    return (S + S.T) / 2.0


def estimate_sigma2(Y, fitted) -> float:
    Y = np.asarray(Y, dtype=np.float64)
    fitted = np.asarray(fitted, dtype=np.float64)
    if Y.shape != fitted.shape:
        raise DimensionMismatch("Y and fitted must have the same shape")
    r = Y - fitted
    return max(float(r @ r) / Y.shape[0], SIGMA2_FLOOR)


def _is_pd(A) -> bool:
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        return False
    return True


@njit(cache=True)
def _glasso_kkt(S, omega, rho):
    """Largest violation of ``inv(Omega) - S = rho * sign(Omega)`` off the diagonal (diagonal: 0)."""
    G = np.linalg.inv(omega) - S
    p = S.shape[0]
    worst = 0.0
    for j in range(p):
        for k in range(p):
            g = G[j, k]
            if j == k:
                v = abs(g)
            elif omega[j, k] == 0.0:
                v = abs(g) - rho
            elif omega[j, k] > 0.0:
                v = abs(g - rho)
            else:
                v = abs(g + rho)
            if v > worst:
                worst = v
    return worst


@njit(cache=True)
def _glasso_bcd(S, rho, max_iter, tol, kkt_tol, inner_max_iter, inner_tol):
    """Block coordinate descent on the covariance ``W = inv(Omega)``.

    Column ``j`` solves ``min 1/2 b'W11 b - b's12 + rho |b|_1`` where ``W11``
    is ``W`` without row/column ``j``. The diagonal of ``W`` stays at
    ``diag(S)`` because diagonal precision entries are unpenalized.
    Returns ``(Omega, n_outer, converged)``.
    """
    p = S.shape[0]
    W = S.copy()
    B = np.zeros((p, p))  # column j: regression coefficients of j on the others
    omega = np.zeros((p, p))
    for j in range(p):
        omega[j, j] = 1.0 / S[j, j]
    grad = np.zeros(p)
    for it in range(max_iter):
        for j in range(p):
            # grad = s12 - W11 b, entries k != j
            for k in range(p):
                if k == j:
                    continue
                acc = S[k, j]
                for m in range(p):
                    if m != j:
                        acc -= W[k, m] * B[m, j]
                grad[k] = acc
            for _ in range(inner_max_iter):
                max_delta = 0.0
                for k in range(p):
                    if k == j:
                        continue
                    wkk = W[k, k]
                    old = B[k, j]
                    z = grad[k] + wkk * old
                    if z > rho:
                        new = (z - rho) / wkk
                    elif z < -rho:
                        new = (z + rho) / wkk
                    else:
                        new = 0.0
                    delta = new - old
                    if delta != 0.0:
                        for m in range(p):
                            if m != j:
                                grad[m] -= W[m, k] * delta
                        B[k, j] = new
                        if abs(delta) > max_delta:
                            max_delta = abs(delta)
                if max_delta < inner_tol:
                    break
            for k in range(p):
                if k == j:
                    continue
                acc = 0.0
                for m in range(p):
                    if m != j:
                        acc += W[k, m] * B[m, j]
                W[k, j] = acc
                W[j, k] = acc
        new_omega = np.zeros((p, p))
        for j in range(p):
            acc = W[j, j]
            for k in range(p):
                if k != j:
                    acc -= W[k, j] * B[k, j]
            theta = 1.0 / acc
            new_omega[j, j] = theta
            for k in range(p):
                if k != j:
                    new_omega[k, j] = -B[k, j] * theta
        new_omega = (new_omega + new_omega.T) / 2.0
        change = np.max(np.abs(new_omega - omega))
        omega = new_omega
        if change < tol and _glasso_kkt(S, omega, rho) < kkt_tol:
            return omega, it + 1, True
    return omega, max_iter, False


def glasso_objective(S, omega, rho) -> float:
    """``log det(Omega) - tr(S Omega) - rho * sum_{j != k} |Omega_jk|`` (to be maximised)."""
    sign, logdet = np.linalg.slogdet(omega)
    if sign <= 0:
        return -np.inf
    off = np.abs(omega).sum() - np.abs(np.diag(omega)).sum()
    return float(logdet - np.sum(S * omega) - rho * off)


def estimate_precision(S, cfg: GlassoConfig = GlassoConfig()) -> np.ndarray:
    """Sparse precision matrix from a covariance estimate.

    Maximises ``log det(Omega) - tr(S Omega) - rho * sum_{j != k} |Omega_jk|``.

    Raises
    ------
    NotPositiveDefinite
        ``S`` is not PD even after adding ``cfg.ridge`` to its diagonal, or
        the estimate fails a final Cholesky check.
    NonConvergence
        Outer cycles exhausted; ``exc.result`` holds the last estimate.
    """
    S = np.array(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionMismatch(f"S must be square, got {S.shape}")
    if not np.allclose(S, S.T, rtol=0.0, atol=1e-10):
        raise ValueError("S must be symmetric")
    S = (S + S.T) / 2.0
    if not _is_pd(S):
        S = S + cfg.ridge * np.eye(S.shape[0])
        if not _is_pd(S):
            raise NotPositiveDefinite("covariance is not positive definite even after ridge")
        logger.debug("added ridge %.1e to covariance diagonal", cfg.ridge)

    if cfg.rho == 0.0:
        omega = np.linalg.inv(S)
        return (omega + omega.T) / 2.0

    omega, n_iter, converged = _glasso_bcd(
        S, float(cfg.rho), cfg.max_iter, cfg.tol, cfg.kkt_tol, cfg.inner_max_iter, cfg.inner_tol
    )
    if not _is_pd(omega):
        raise NotPositiveDefinite("precision estimate is not positive definite")
    if not converged:
        raise NonConvergence(f"graphical lasso did not converge in {n_iter} cycles", omega)
    return omega
