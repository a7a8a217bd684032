import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal, norm

from xmint.core import CoefficientSet, Dataset, NuisanceParams, StandardizedDataset
from xmint.score import LOG_2PI, degrees_of_freedom, hbic, log_likelihood, pairwise_hbic, score_model


def raw(X, Y, M):
    d = Dataset(X=np.asarray(X, float), Y=np.asarray(Y, float), M=np.asarray(M, float))
    return StandardizedDataset(d, 0.0, 1.0, 0.0, 1.0, np.zeros(d.V), np.ones(d.V))


def random_coeffs(rng, V):
    return CoefficientSet(
        a0=rng.normal(size=V), a=rng.normal(size=V), c0=rng.normal(), c=rng.normal(),
        b1=rng.normal(size=V), b2=rng.normal(size=V),
    )


def random_nuisance(rng, V):
    A = rng.normal(size=(V, V))
    return NuisanceParams(sigma2=float(rng.uniform(0.3, 3.0)), omega=A @ A.T + V * np.eye(V))


def density_oracle(sd, coeffs, nuis):
    d = sd.data
    cov = np.linalg.inv(nuis.omega)
    total = 0.0
    for i in range(d.n):
        x, y, m = d.X[i], d.Y[i], d.M[i]
        mean_y = coeffs.c0 + coeffs.c * x + m @ coeffs.b1 + (x * m) @ coeffs.b2
        total += norm.logpdf(y, loc=mean_y, scale=math.sqrt(nuis.sigma2))
        total += multivariate_normal.logpdf(m, mean=coeffs.a0 + coeffs.a * x, cov=cov)
    return total


def test_zero_model_constant():
    sd = raw([0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [[0.0], [0.0], [0.0]])
    nuis = NuisanceParams(sigma2=1.0, omega=np.eye(1))
    assert log_likelihood(sd, CoefficientSet.zeros(1), nuis) == pytest.approx(-3 * LOG_2PI, abs=1e-12)


def test_matches_density_product(rng):
    for _ in range(10):
        n, V = 5, 2
        sd = raw(rng.normal(size=n), rng.normal(size=n), rng.normal(size=(n, V)))
        coeffs, nuis = random_coeffs(rng, V), random_nuisance(rng, V)
        assert abs(log_likelihood(sd, coeffs, nuis) - density_oracle(sd, coeffs, nuis)) <= 1e-10


def test_sigma2_term_isolation(rng):
    n, V = 6, 2
    X, M = rng.normal(size=n), rng.normal(size=(n, V))
    coeffs = random_coeffs(rng, V)
    Y = coeffs.c0 + coeffs.c * X + M @ coeffs.b1 + (X[:, None] * M) @ coeffs.b2
    sd = raw(X, Y, M)
    nuis = random_nuisance(rng, V)
    scaled = NuisanceParams(sigma2=4 * nuis.sigma2, omega=nuis.omega)
    delta = log_likelihood(sd, coeffs, scaled) - log_likelihood(sd, coeffs, nuis)
    assert delta == pytest.approx(-(n / 2) * math.log(4), abs=1e-10)


def test_row_permutation_invariance(rng):
    n, V = 8, 3
    X, Y, M = rng.normal(size=n), rng.normal(size=n), rng.normal(size=(n, V))
    coeffs, nuis = random_coeffs(rng, V), random_nuisance(rng, V)
    p = rng.permutation(n)
    assert log_likelihood(raw(X, Y, M), coeffs, nuis) == pytest.approx(
        log_likelihood(raw(X[p], Y[p], M[p]), coeffs, nuis), abs=1e-10
    )


def test_zero_column_contributes_nothing(rng):
    n, V = 8, 2
    X, Y, M = rng.normal(size=n), rng.normal(size=n), rng.normal(size=(n, V))
    coeffs = CoefficientSet(a0=np.zeros(V), a=np.array([0.4, 0.0]), c0=0.0, c=0.2,
                            b1=np.array([0.3, 0.0]), b2=np.zeros(V))
    nuis = NuisanceParams(sigma2=1.0, omega=np.eye(V))
    M2 = M.copy()
    M2[:, 1] = rng.normal(size=n)
    # with identity Omega the second mediator only enters through its own density
    ll1 = log_likelihood(raw(X, Y, M), coeffs, nuis) + 0.5 * np.sum(M[:, 1] ** 2)
    ll2 = log_likelihood(raw(X, Y, M2), coeffs, nuis) + 0.5 * np.sum(M2[:, 1] ** 2)
    assert ll1 == pytest.approx(ll2, abs=1e-10)
    assert degrees_of_freedom(coeffs) == 1 + 1 + 1


def test_df_examples():
    assert degrees_of_freedom(CoefficientSet.zeros(4)) == 1
    a = np.array([1.0, 1, 1, 0, 0])
    b2 = np.array([1.0, 0, 0, 0, 0])
    truth = CoefficientSet(a0=np.zeros(5), a=a, c0=0.0, c=1.0, b1=a.copy(), b2=b2)
    assert degrees_of_freedom(truth) == 8
    c = CoefficientSet(a0=np.zeros(2), a=np.array([0.1, 0.0]), c0=0.0, c=0.0,
                       b1=np.array([0.2, 0.3]), b2=np.zeros(2))
    assert degrees_of_freedom(c) == 4
    with pytest.raises(ValueError):
        degrees_of_freedom(c, tol=0.0)


def test_hbic_examples():
    assert hbic(0.0, 0, 10) == 0.0
    assert hbic(-100.0, 8, 200) == pytest.approx(200 + 8 * math.log(200 / (2 * math.pi)), abs=1e-12)
    assert hbic(-100.0, 8, 200) == pytest.approx(227.68, abs=0.01)
    assert hbic(-5.0, 3, 7) < hbic(-5.0, 4, 7)
    with pytest.raises(ValueError):
        hbic(0.0, 1, 0)


@settings(max_examples=200, deadline=None)
@given(
    st.floats(-1e4, 1e4), st.integers(1, 100),
    st.floats(-1e4, 1e4), st.integers(1, 100),
    st.integers(1, 10**6),
)
def test_pairwise_identity(l2, d2, l1, d1, N):
    diff = hbic(l2, d2, N) - hbic(l1, d1, N)
    assert diff == pytest.approx(-pairwise_hbic(l2, d2, l1, d1, N), rel=1e-12, abs=1e-9)


def test_score_model_consistent(rng):
    n, V = 7, 2
    sd = raw(rng.normal(size=n), rng.normal(size=n), rng.normal(size=(n, V)))
    coeffs, nuis = random_coeffs(rng, V), random_nuisance(rng, V)
    s = score_model(sd, coeffs, nuis)
    assert s.loglik == log_likelihood(sd, coeffs, nuis)
    assert s.df == degrees_of_freedom(coeffs)
    assert s.hbic == hbic(s.loglik, s.df, n)
