"""L1-penalized coordinate-descent solvers for the two model equations.

Both solvers work on the covariance ("Gram") form of the problem, with the
unpenalized intercepts profiled out by centring:

* ``outcome_step`` minimises ``(1/sigma2) * RSS + lam * sum(f_j |beta_j|)``
  over ``(c0, c, b1, b2)``.
* ``mediator_step`` minimises ``sum_i r_i' Omega r_i + lam * sum_{v in P} |a_v|``
  with ``r_i = M_i - a0 - a X_i``.

Each reduces to ``1/2 b'Qb - b't + sum(g_j |b_j|)`` for a suitable ``Q``,
``t`` and thresholds ``g``, which ``_gram_sweep`` solves one sweep at a time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from numba import njit

from .core import (
    CoefficientSet,
    DimensionMismatch,
    NonConvergence,
    NotPositiveDefinite,
    XMIntError,
)


class NonPositiveSigma2(XMIntError, ValueError):
    pass


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty level ``lam`` and a 0/1 factor per penalized coefficient."""

    lam: float
    factors: np.ndarray

    def __post_init__(self):
        factors = np.array(self.factors, dtype=np.float64)
        if not self.lam >= 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")
        if not np.all((factors == 0.0) | (factors == 1.0)):
            raise ValueError("penalty factors must be 0 or 1")
        factors.setflags(write=False)
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "factors", factors)


@dataclass(frozen=True)
class SolverConfig:
    """Stopping rule: a sweep moves no coefficient by ``coord_tol`` or more
    and the subgradient optimality residual of the objective is below
    ``kkt_tol``.
    """

    max_iter: int = 100000
    coord_tol: float = 1e-7
    kkt_tol: float = 1e-6

    def __post_init__(self):
        if self.max_iter < 1 or not self.coord_tol > 0 or not self.kkt_tol > 0:
            raise ValueError("max_iter, coord_tol and kkt_tol must be positive")


def soft_threshold(z: float, gamma: float) -> float:
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    return float(np.sign(z) * max(abs(z) - gamma, 0.0))


@njit(cache=True)
def _gram_sweep(Q, grad, beta, thresh):
    """One cyclic pass over all coordinates.

    ``grad`` holds ``t - Q @ beta`` and is updated in place along with
    ``beta``. Returns the largest absolute coordinate change.
    """
    p = beta.shape[0]
    max_delta = 0.0
    for j in range(p):
        qjj = Q[j, j]
        if qjj <= 0.0:
            continue
        old = beta[j]
        z = grad[j] + qjj * old
        g = thresh[j]
        if z > g:
            new = (z - g) / qjj
        elif z < -g:
            new = (z + g) / qjj
        else:
            new = 0.0
        delta = new - old
        if delta != 0.0:
            for k in range(p):
                grad[k] -= Q[k, j] * delta
            beta[j] = new
            if abs(delta) > max_delta:
                max_delta = abs(delta)
    return max_delta


@njit(cache=True)
def _kkt_violation(grad, beta, thresh):
    worst = 0.0
    for j in range(beta.shape[0]):
        g = grad[j]
        if beta[j] == 0.0:
            v = abs(g) - thresh[j]
        elif beta[j] > 0.0:
            v = abs(g - thresh[j])
        else:
            v = abs(g + thresh[j])
        if v > worst:
            worst = v
    return worst


def _coordinate_descent(Q, t, beta0, thresh, cfg: SolverConfig, grad_scale, objective=None, trace=None):
    """Sweep until coefficients settle and the KKT residual is small.

    ``grad_scale`` converts the internal half-gradient ``t - Q beta`` to the
    gradient of the caller's objective, so ``cfg.kkt_tol`` is in the
    caller's units. Returns ``(beta, converged)``.
    """
    Q = np.ascontiguousarray(Q, dtype=np.float64)
    beta = np.array(beta0, dtype=np.float64)
    thresh = np.ascontiguousarray(thresh, dtype=np.float64)
    grad = t - Q @ beta
    if trace is not None:
        trace.append(objective(beta))
    for _ in range(cfg.max_iter):
        delta = _gram_sweep(Q, grad, beta, thresh)
        if trace is not None:
            trace.append(objective(beta))
        if delta < cfg.coord_tol and grad_scale * _kkt_violation(grad, beta, thresh) < cfg.kkt_tol:
            return beta, True
    return beta, False


def _outcome_design(X, M, XM):
    return np.column_stack([X, M, XM])


def outcome_objective(Y, X, M, XM, sigma2, penalty: PenaltySpec, c0, c, b1, b2) -> float:
    """``(1/sigma2) * RSS + lam * sum(f |b|)`` for the outcome equation."""
    resid = Y - c0 - c * X - M @ b1 - XM @ b2
    pen = penalty.lam * np.sum(penalty.factors * np.abs(np.concatenate([b1, b2])))
    return float(resid @ resid / sigma2 + pen)


def outcome_step(
    Y,
    X,
    M,
    XM,
    sigma2: float,
    penalty: PenaltySpec,
    warm: Optional[CoefficientSet] = None,
    cfg: SolverConfig = SolverConfig(),
    trace: Optional[list] = None,
):
    """Fit the outcome equation by cyclic coordinate descent.

    Parameters
    ----------
    Y, X : (n,) arrays
    M, XM : (n, V) arrays
        Mediators and exposure-by-mediator products.
    sigma2 : float
        Outcome noise variance; scales the squared-error term.
    penalty : PenaltySpec
        ``factors`` has ``2V`` entries, ordered ``(b1, b2)``. ``c0`` and ``c``
        are never penalized.
    warm : CoefficientSet, optional
        Starting point; zeros when omitted.
    trace : list, optional
        If given, the objective after every sweep is appended to it.

    Returns
    -------
    (c0, c, b1, b2)

    Raises
    ------
    NonConvergence
        ``max_iter`` sweeps without meeting the stopping rule. ``exc.result``
        carries the last iterate in the same tuple form.
    """
    Y = np.asarray(Y, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    XM = np.asarray(XM, dtype=np.float64)
    n, V = M.shape
    if Y.shape != (n,) or X.shape != (n,) or XM.shape != (n, V):
        raise DimensionMismatch("outcome_step: inconsistent input shapes")
    if not sigma2 > 0:
        raise NonPositiveSigma2(f"sigma2 must be positive, got {sigma2}")
    if penalty.factors.shape != (2 * V,):
        raise DimensionMismatch(f"expected {2 * V} penalty factors, got {penalty.factors.shape}")

    Z = _outcome_design(X, M, XM)
    z_mean = Z.mean(axis=0)
    y_mean = Y.mean()
    Zc = Z - z_mean
    Yc = Y - y_mean
    Q = Zc.T @ Zc
    t = Zc.T @ Yc
    # stationarity of (1/sigma2)(b'Qb - 2b't) + lam|b| gives threshold lam*sigma2/2
    thresh = np.concatenate([[0.0], penalty.factors]) * (penalty.lam * sigma2 / 2.0)

    if warm is None:
        beta0 = np.zeros(2 * V + 1)
    else:
        beta0 = np.concatenate([[warm.c], warm.b1, warm.b2])

    def unpack(beta):
        c, b1, b2 = beta[0], beta[1 : V + 1], beta[V + 1 :]
        c0 = y_mean - z_mean @ beta
        return float(c0), float(c), b1.copy(), b2.copy()

    objective = None
    if trace is not None:
        def objective(beta):
            return outcome_objective(Y, X, M, XM, sigma2, penalty, *unpack(beta))

    beta, converged = _coordinate_descent(Q, t, beta0, thresh, cfg, 2.0 / sigma2, objective, trace)
    result = unpack(beta)
    if not converged:
        raise NonConvergence(f"outcome_step did not converge in {cfg.max_iter} sweeps", result)
    return result


def mediator_objective(M, X, omega, lam, penalized, a0, a) -> float:
    """``sum_i r_i' Omega r_i + lam * sum_{v in penalized} |a_v|``."""
    R = M - a0 - np.outer(X, a)
    mask = np.zeros(a.shape[0])
    mask[list(penalized)] = 1.0
    return float(np.sum((R @ omega) * R) + lam * np.sum(mask * np.abs(a)))


def mediator_step(
    M,
    X,
    omega,
    lam: float,
    penalized: Iterable[int],
    warm=None,
    cfg: SolverConfig = SolverConfig(),
    trace: Optional[list] = None,
):
    """Fit the Omega-weighted mediator equation; returns ``(a0, a)``.

    The update for ``a_v`` uses quadratic coefficient
    ``Omega_vv * sum((X - mean(X))**2)`` and soft-thresholds the partial
    residual inner product at ``lam / 2``. ``a0`` is unpenalized and is
    solved exactly given ``a``.
    """
    M = np.asarray(M, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    n, V = M.shape
    if X.shape != (n,) or omega.shape != (V, V):
        raise DimensionMismatch("mediator_step: inconsistent input shapes")
    if not lam >= 0:
        raise ValueError("lambda must be nonnegative")
    try:
        np.linalg.cholesky(omega)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("omega is not positive definite") from exc
    penalized = sorted(set(int(v) for v in penalized))
    if penalized and (penalized[0] < 0 or penalized[-1] >= V):
        raise ValueError("penalized index out of range")

    x_mean = X.mean()
    m_mean = M.mean(axis=0)
    Xc = X - x_mean
    sxx = float(Xc @ Xc)
    cov_mx = (M - m_mean).T @ Xc
    Q = sxx * omega
    t = omega @ cov_mx
    thresh = np.zeros(V)
    thresh[penalized] = lam / 2.0

    a_start = np.zeros(V) if warm is None else np.asarray(warm[1], dtype=np.float64)

    def unpack(a):
        return m_mean - a * x_mean, a.copy()

    objective = None
    if trace is not None:
        def objective(a):
            return mediator_objective(M, X, omega, lam, penalized, *unpack(a))

    a, converged = _coordinate_descent(Q, t, a_start, thresh, cfg, 2.0, objective, trace)
    result = unpack(a)
    if not converged:
        raise NonConvergence(f"mediator_step did not converge in {cfg.max_iter} sweeps", result)
    return result
