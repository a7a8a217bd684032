"""Domain types and shared preprocessing for the mediation model.

The model has two equations per subject ``i``::

    M_i = a0 + a * X_i + e1_i,            e1_i ~ MVN(0, Sigma)
    Y_i = c0 + c * X_i + M_i' b1 + (X_i * M_i)' b2 + e2_i,   e2_i ~ N(0, sigma2)

Indices of mediators are 0-based throughout the library.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_SELECTION_TOL = 1e-8


class XMIntError(Exception):
    """Base class for all errors raised by this package."""


class ZeroVarianceColumn(XMIntError, ValueError):
    def __init__(self, column: str):
        super().__init__(f"column {column!r} has zero variance and cannot be standardized")
        self.column = column


class DimensionMismatch(XMIntError, ValueError):
    pass


class NotPositiveDefinite(XMIntError, ValueError):
    pass


# the mediator solver and likelihood raise this when Cholesky of omega fails
OmegaNotPD = NotPositiveDefinite


class NonConvergence(XMIntError):
    """Iterative solver hit its iteration cap.

    The last iterate is kept on ``result`` so callers may still use it.
    """

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


def _frozen_array(values, ndim: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise DimensionMismatch(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    """Exposure ``X``, outcome ``Y`` and candidate mediators ``M`` (n x V)."""

    X: np.ndarray
    Y: np.ndarray
    M: np.ndarray
    column_names: tuple = ()

    def __post_init__(self):
        X = _frozen_array(self.X, 1, "X")
        Y = _frozen_array(self.Y, 1, "Y")
        M = _frozen_array(self.M, 2, "M")
        n = X.shape[0]
        if Y.shape[0] != n or M.shape[0] != n:
            raise DimensionMismatch(
                f"X, Y and M must have the same number of rows "
                f"(got {n}, {Y.shape[0]}, {M.shape[0]})"
            )
        if n < 3:
            raise ValueError(f"need at least 3 subjects, got {n}")
        if M.shape[1] < 1:
            raise ValueError("need at least one candidate mediator")
        for name, arr in (("X", X), ("Y", Y), ("M", M)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
        names = tuple(self.column_names) or tuple(f"M{v + 1}" for v in range(M.shape[1]))
        if len(names) != M.shape[1]:
            raise DimensionMismatch(
                f"{len(names)} column names given for {M.shape[1]} mediator columns"
            )
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def V(self) -> int:
        return self.M.shape[1]


@dataclass(frozen=True)
class StandardizedDataset:
    """A dataset with every column centred and scaled to unit sample sd.

    ``x_center``/``x_scale`` etc. hold the original moments so estimates can
    be mapped back to the input units.
    """

    data: Dataset
    x_center: float
    x_scale: float
    y_center: float
    y_scale: float
    m_center: np.ndarray
    m_scale: np.ndarray
    XM: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.XM is None:
            object.__setattr__(self, "XM", interaction_columns(self.data.X, self.data.M))

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def V(self) -> int:
        return self.data.V

    def destandardize(self) -> Dataset:
        d = self.data
        return Dataset(
            X=d.X * self.x_scale + self.x_center,
            Y=d.Y * self.y_scale + self.y_center,
            M=d.M * self.m_scale + self.m_center,
            column_names=d.column_names,
        )


@dataclass(frozen=True)
class CoefficientSet:
    a0: np.ndarray
    a: np.ndarray
    c0: float
    c: float
    b1: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        for name in ("a0", "a", "b1", "b2"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name), 1, name))
        V = self.a.shape[0]
        if any(getattr(self, name).shape[0] != V for name in ("a0", "b1", "b2")):
            raise DimensionMismatch("a0, a, b1 and b2 must all have length V")
        object.__setattr__(self, "c0", float(self.c0))
        object.__setattr__(self, "c", float(self.c))
        vals = np.concatenate([self.a0, self.a, self.b1, self.b2, [self.c0, self.c]])
        if not np.all(np.isfinite(vals)):
            raise ValueError("coefficients must be finite")

    @classmethod
    def zeros(cls, V: int) -> "CoefficientSet":
        z = np.zeros(V)
        return cls(a0=z, a=z, c0=0.0, c=0.0, b1=z, b2=z)

    @property
    def V(self) -> int:
        return self.a.shape[0]

    def is_null(self, tol: float = DEFAULT_SELECTION_TOL) -> bool:
        """True when every a, b1 and b2 entry is zero (up to ``tol``)."""
        return not (
            np.any(np.abs(self.a) > tol)
            or np.any(np.abs(self.b1) > tol)
            or np.any(np.abs(self.b2) > tol)
        )


@dataclass(frozen=True)
class NuisanceParams:
    """Outcome noise variance and mediator residual precision matrix."""

    sigma2: float
    omega: np.ndarray

    def __post_init__(self):
        sigma2 = float(self.sigma2)
        if not sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {sigma2}")
        omega = _frozen_array(self.omega, 2, "omega")
        if omega.shape[0] != omega.shape[1]:
            raise DimensionMismatch(f"omega must be square, got {omega.shape}")
        if not np.allclose(omega, omega.T, rtol=0.0, atol=1e-8):
            raise ValueError("omega must be symmetric")
        try:
            np.linalg.cholesky(omega)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite("omega is not positive definite") from exc
        object.__setattr__(self, "sigma2", sigma2)
        object.__setattr__(self, "omega", omega)


@dataclass(frozen=True)
class SelectionState:
    """Selected mediator and interaction indices (sorted, 0-based)."""

    mediators: tuple = ()
    interactions: tuple = ()

    def __post_init__(self):
        for name in ("mediators", "interactions"):
            idx = tuple(sorted({int(v) for v in getattr(self, name)}))
            if idx and idx[0] < 0:
                raise ValueError(f"{name} contains a negative index")
            object.__setattr__(self, name, idx)

    @property
    def is_empty(self) -> bool:
        return not self.mediators and not self.interactions

    @property
    def is_hierarchical(self) -> bool:
        return set(self.interactions) <= set(self.mediators)

    def closure(self) -> "SelectionState":
        """Add every interaction index to the mediator set."""
        return SelectionState(
            mediators=set(self.mediators) | set(self.interactions),
            interactions=self.interactions,
        )

    def check_bounds(self, V: int) -> None:
        for v in self.mediators + self.interactions:
            if v >= V:
                raise ValueError(f"index {v} out of range for V={V}")


def _standardize_column(col: np.ndarray, name: str) -> tuple[np.ndarray, float, float]:
    center = col.mean()
    scale = col.std(ddof=1)
    # relative test catches columns that are constant up to rounding
    if scale == 0.0 or scale <= 1e-12 * max(1.0, abs(center)):
        raise ZeroVarianceColumn(name)
    return (col - center) / scale, center, scale


def standardize(d: Dataset) -> StandardizedDataset:
    """Centre every column and scale it to unit sample sd (ddof=1)."""
    X, xc, xs = _standardize_column(d.X, "X")
    Y, yc, ys = _standardize_column(d.Y, "Y")
    M = np.empty_like(d.M)
    mc = np.empty(d.V)
    ms = np.empty(d.V)
    for v, name in enumerate(d.column_names):
        M[:, v], mc[v], ms[v] = _standardize_column(d.M[:, v], name)
    return StandardizedDataset(
        data=Dataset(X=X, Y=Y, M=M, column_names=d.column_names),
        x_center=float(xc),
        x_scale=float(xs),
        y_center=float(yc),
        y_scale=float(ys),
        m_center=mc,
        m_scale=ms,
    )


def interaction_columns(X, M) -> np.ndarray:
    """Columns ``X_i * M_iv``. Products are not re-standardized."""
    X = np.asarray(X, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    if X.ndim != 1 or M.ndim != 2 or M.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"cannot form interactions of X{X.shape} and M{M.shape}")
    return X[:, None] * M


def extract_selection(coeffs: CoefficientSet, tol: float = DEFAULT_SELECTION_TOL) -> SelectionState:
    """Mediators need both ``a_v`` and ``b1_v`` nonzero; interactions need ``b2_v``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    med = np.flatnonzero((np.abs(coeffs.a) > tol) & (np.abs(coeffs.b1) > tol))
    inter = np.flatnonzero(np.abs(coeffs.b2) > tol)
    return SelectionState(mediators=med.tolist(), interactions=inter.tolist())


def destandardize_coefficients(coeffs: CoefficientSet, sd: StandardizedDataset) -> CoefficientSet:
    """Map coefficients fitted on standardized data back to original units.

    The interaction term mixes scales, so centring offsets leak into the
    main-effect coefficients: ``b1`` picks up ``-b2 * mean(X)`` and ``c``
    picks up ``-sum(b2 * mean(M))``.
    """
    xc, xs, yc, ys = sd.x_center, sd.x_scale, sd.y_center, sd.y_scale
    mc, ms = sd.m_center, sd.m_scale

    a = ms * coeffs.a / xs
    a0 = mc + ms * coeffs.a0 - a * xc

    b2 = ys * coeffs.b2 / (xs * ms)
    b1 = ys * coeffs.b1 / ms - b2 * xc
    c = ys * coeffs.c / xs - float(np.sum(b2 * mc))
    c0 = (
        yc
        + ys * coeffs.c0
        - ys * coeffs.c * xc / xs
        - float(np.sum(ys * coeffs.b1 * mc / ms))
        + float(np.sum(b2 * xc * mc))
    )
    return CoefficientSet(a0=a0, a=a, c0=c0, c=c, b1=b1, b2=b2)


def select_columns(names: Sequence[str], indices: Sequence[int]) -> list[str]:
    return [names[v] for v in indices]
