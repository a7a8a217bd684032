"""Independent checks used by several test modules.

Nothing here calls the solvers it checks.
"""

import numpy as np


def outcome_kkt_residual(Y, X, M, XM, sigma2, lam, factors, c0, c, b1, b2):
    """Largest KKT violation of ``(1/sigma2) RSS + lam * sum(f |b|)``."""
    r = Y - c0 - c * X - M @ b1 - XM @ b2
    grad_c0 = -2.0 * r.sum() / sigma2
    grad_c = -2.0 * (X @ r) / sigma2
    beta = np.concatenate([b1, b2])
    grad_b = -2.0 * (np.column_stack([M, XM]).T @ r) / sigma2
    return _kkt(np.array([grad_c0, grad_c]), grad_b, beta, lam * np.asarray(factors, float))


def mediator_kkt_residual(M, X, omega, lam, penalized, a0, a):
    """Largest KKT violation of ``sum r' Omega r + lam * sum_{v in P} |a_v|``."""
    R = M - a0 - np.outer(X, a)
    grad_a0 = -2.0 * omega @ R.sum(axis=0)
    grad_a = -2.0 * omega @ (R.T @ X)
    weights = np.zeros(len(a))
    weights[list(penalized)] = lam
    return _kkt(grad_a0, grad_a, a, weights)


def _kkt(grad_free, grad_pen, beta, weights):
    worst = float(np.max(np.abs(grad_free), initial=0.0))
    for g, b, w in zip(grad_pen, beta, weights):
        if w == 0.0:
            v = abs(g)
        elif b == 0.0:
            v = max(abs(g) - w, 0.0)
        else:
            v = abs(g + w * np.sign(b))
        worst = max(worst, v)
    return worst


def ols(design, y):
    """Solve the normal equations directly."""
    return np.linalg.solve(design.T @ design, design.T @ y)


def gls_mediator(M, X, omega):
    """Minimise ``sum r' Omega r`` over ``(a0, a)`` through the full Kronecker normal equations."""
    n, V = M.shape
    D = np.column_stack([np.ones(n), X])
    H = np.kron(omega, D.T @ D)  # acts on B stacked column-wise, B is 2 x V
    rhs = (D.T @ M @ omega).reshape(-1, order="F")
    B = np.linalg.solve(H, rhs).reshape(2, V, order="F")
    return B[0], B[1]


def glasso_kkt_residual(S, omega, rho):
    """Violation of the optimality conditions of the diagonal-unpenalized graphical lasso."""
    W = np.linalg.inv(omega)
    G = W - S
    worst = float(np.max(np.abs(np.diag(G))))
    p = S.shape[0]
    for j in range(p):
        for k in range(p):
            if j == k:
                continue
            if omega[j, k] == 0.0:
                v = max(abs(G[j, k]) - rho, 0.0)
            else:
                v = abs(G[j, k] - rho * np.sign(omega[j, k]))
            worst = max(worst, v)
    return worst


def random_pd(rng, p, n_obs=None):
    n_obs = n_obs or 3 * p
    A = rng.normal(size=(n_obs, p)) @ rng.normal(size=(p, p))
    return A.T @ A / n_obs + 0.05 * np.eye(p)
