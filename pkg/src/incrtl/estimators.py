"""Least-squares estimators for a source dataset that lacks the newest features.

The data-pooling estimator minimises

    alpha_S * ||y_S - pad(x_S) theta||^2 + alpha_T * ||y_T - x_T theta||^2

where ``pad`` fills the missing target columns of the source rows with zeros.
All linear systems go through a Cholesky factorisation of the (pooled) Gram
matrix; no explicit inverse is ever formed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import DegenerateDoF, DimensionMismatch, RankDeficient, ValidationError

#: Relative pivot threshold below which a Gram matrix is declared singular.
PIVOT_RTOL = 1e-10
#: Floor applied to variance estimates before they are inverted into weights.
MIN_VARIANCE = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Design matrix plus labels.

    Columns ``0 .. d_hist-1`` are the historical features, i.e. the ones a
    source dataset observes. ``d_hist`` defaults to all columns.
    """

    X: np.ndarray
    y: np.ndarray
    d_hist: int | None = None
    columns: tuple[str, ...] | None = None

    def __post_init__(self):
        X = _frozen(self.X)
        y = _frozen(self.y)
        if X.ndim == 1:
            X = _frozen(X[:, None])
        if X.ndim != 2 or y.ndim != 1:
            raise DimensionMismatch(f"X must be 2-D and y 1-D, got {X.shape} and {y.shape}")
        if X.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        d_hist = X.shape[1] if self.d_hist is None else int(self.d_hist)
        if not 1 <= d_hist <= X.shape[1]:
            raise DimensionMismatch(f"d_hist={d_hist} outside [1, {X.shape[1]}]")
        if self.columns is not None and len(self.columns) != X.shape[1]:
            raise DimensionMismatch("column names do not match the number of columns")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "d_hist", d_hist)
        if self.columns is not None:
            object.__setattr__(self, "columns", tuple(self.columns))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def historical(self) -> "Dataset":
        """The same rows restricted to the historical columns."""
        cols = None if self.columns is None else self.columns[: self.d_hist]
        return Dataset(self.X[:, : self.d_hist], self.y, self.d_hist, cols)

    def take(self, rows) -> "Dataset":
        return Dataset(self.X[rows], self.y[rows], self.d_hist, self.columns)


@dataclass(frozen=True)
class PoolingWeights:
    """Loss weights of the data-pooling estimator and the variances behind them."""

    alpha_S: float
    alpha_T: float
    sigma2_S_hat: float = float("nan")
    sigma2_hat: float = float("nan")

    def __post_init__(self):
        if not (self.alpha_S > 0 and self.alpha_T > 0):
            raise ValidationError(f"pooling weights must be positive, got {self.alpha_S}, {self.alpha_T}")

    @classmethod
    def from_variances(cls, sigma2_S: float, sigma2: float) -> "PoolingWeights":
        """Maximum-likelihood weights ``(1/sigma2_S, 1/sigma2)``, floored at MIN_VARIANCE."""
        return cls(
            alpha_S=1.0 / max(float(sigma2_S), MIN_VARIANCE),
            alpha_T=1.0 / max(float(sigma2), MIN_VARIANCE),
            sigma2_S_hat=float(sigma2_S),
            sigma2_hat=float(sigma2),
        )


class ModelKind(str, enum.Enum):
    OLS = "OLS"
    DATA_POOLING = "DataPooling"
    DSFT_LINEAR = "DSFTLinear"
    DSFT_KERNEL = "DSFTKernel"


@dataclass(frozen=True)
class FittedModel:
    """Coefficients plus the input shift applied before prediction."""

    theta: np.ndarray
    shift: np.ndarray
    kind: ModelKind
    d_hist: int
    weights: PoolingWeights | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "theta", _frozen(self.theta))
        object.__setattr__(self, "shift", _frozen(self.shift))
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if self.theta.shape != self.shift.shape or self.theta.ndim != 1:
            raise DimensionMismatch("theta and shift must be vectors of equal length")

    @property
    def d(self) -> int:
        return self.theta.shape[0]

    def predict(self, x: np.ndarray):
        return predict(self, x)


@dataclass(frozen=True)
class PaddingMap:
    """The ``d_T x d_S`` selector with ones on the leading diagonal."""

    d_S: int
    d_T: int

    def __post_init__(self):
        if not 1 <= self.d_S <= self.d_T:
            raise DimensionMismatch(f"need 1 <= d_S <= d_T, got d_S={self.d_S}, d_T={self.d_T}")

    @property
    def matrix(self) -> np.ndarray:
        return np.eye(self.d_T, self.d_S)

    def pad_rows(self, x_S: np.ndarray) -> np.ndarray:
        """Append ``d_T - d_S`` zero columns to source rows."""
        x_S = np.atleast_2d(np.asarray(x_S, dtype=np.float64))
        out = np.zeros((x_S.shape[0], self.d_T))
        out[:, : self.d_S] = x_S
        return out

    def pad_gram(self, gram_S: np.ndarray) -> np.ndarray:
        """``I @ gram_S @ I.T``: the source Gram embedded in the target space."""
        out = np.zeros((self.d_T, self.d_T))
        out[: self.d_S, : self.d_S] = gram_S
        return out

    def pad_vector(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.d_T)
        out[: self.d_S] = v
        return out


def solve_spd(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a symmetric positive definite system by Cholesky.

    ``b`` may be a vector or a matrix of right-hand sides.

    Raises
    ------
    RankDeficient
        If the smallest pivot falls below ``PIVOT_RTOL`` times the largest.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    vec = b.ndim == 1
    B = b[:, None] if vec else b
    X, ok = _backend.spd_solve_batch(A[None], B[None], PIVOT_RTOL)
    if not ok[0]:
        raise RankDeficient("matrix is singular to working precision (Cholesky pivot test failed)")
    return X[0, :, 0] if vec else X[0]


def fit_ols(data: Dataset) -> FittedModel:
    """Ordinary least squares ``argmin ||y - X theta||^2``."""
    X, y = data.X, data.y
    theta = solve_spd(X.T @ X, X.T @ y)
    return FittedModel(theta, np.zeros(data.d), ModelKind.OLS, data.d_hist)


def residuals(data: Dataset, model: FittedModel) -> np.ndarray:
    return data.y - predict(model, data.X)


def estimate_noise_variance(data: Dataset, model: FittedModel) -> float:
    """Unbiased residual variance ``RSS / (n - d)``."""
    dof = data.n - data.d
    if dof <= 0:
        raise DegenerateDoF(
            f"noise variance needs n > d residual degrees of freedom (n={data.n}, d={data.d}); "
            "supply pooling weights explicitly"
        )
    r = residuals(data, model)
    return float(r @ r) / dof


def new_feature_means(target: Dataset, d_S: int) -> np.ndarray:
    """Column means of the new features, zeros on the historical ones."""
    shift = np.zeros(target.d)
    shift[d_S:] = target.X[:, d_S:].mean(axis=0)
    return shift


def _check_pair(source: Dataset, target: Dataset) -> PaddingMap:
    if source.d >= target.d:
        raise DimensionMismatch(
            f"source must have fewer features than target (d_S={source.d}, d_T={target.d})"
        )
    if target.d_hist not in (source.d, target.d):
        raise DimensionMismatch(
            f"target declares {target.d_hist} historical features but the source has {source.d}"
        )
    return PaddingMap(source.d, target.d)


def pooled_gram(source_gram: np.ndarray, target_gram: np.ndarray, weights: PoolingWeights) -> np.ndarray:
    """``M = alpha_S I Sigma_S I^T + alpha_T Sigma_T``."""
    source_gram = np.asarray(source_gram, dtype=np.float64)
    target_gram = np.asarray(target_gram, dtype=np.float64)
    pad = PaddingMap(source_gram.shape[0], target_gram.shape[0])
    return weights.alpha_S * pad.pad_gram(source_gram) + weights.alpha_T * target_gram


def estimate_weights(source: Dataset, target_shifted: Dataset) -> PoolingWeights:
    """MLE-style weights from per-dataset OLS residual variances."""
    s2_S = estimate_noise_variance(source, fit_ols(source))
    s2_T = estimate_noise_variance(target_shifted, fit_ols(target_shifted))
    return PoolingWeights.from_variances(s2_S, s2_T)


def fit_data_pooling(
    source: Dataset,
    target: Dataset,
    weights: PoolingWeights | None = None,
    *,
    new_feature_mean: np.ndarray | None = None,
) -> tuple[FittedModel, PoolingWeights]:
    """Fit the data-pooling estimator.

    The new target columns are centred first (by their sample mean, or by
    ``new_feature_mean`` when the population mean is known). Without explicit
    ``weights`` the weights are ``1/sigma2`` with each variance estimated from
    an OLS fit on its own dataset.

    Returns
    -------
    model : FittedModel
        ``model.shift`` carries the centring; predictions subtract it.
    weights : PoolingWeights
    """
    pad = _check_pair(source, target)
    d_S = pad.d_S
    if new_feature_mean is None:
        shift = new_feature_means(target, d_S)
    else:
        new_feature_mean = np.asarray(new_feature_mean, dtype=np.float64).ravel()
        if new_feature_mean.shape[0] != target.d - d_S:
            raise DimensionMismatch("new_feature_mean must have one entry per new feature")
        shift = np.concatenate([np.zeros(d_S), new_feature_mean])
    xT = target.X - shift
    shifted = Dataset(xT, target.y, d_S)
    if weights is None:
        weights = estimate_weights(source, shifted)

    xS = source.X
    M = pooled_gram(xS.T @ xS, xT.T @ xT, weights)
    rhs = weights.alpha_S * pad.pad_vector(xS.T @ source.y) + weights.alpha_T * (xT.T @ target.y)
    theta = solve_spd(M, rhs)
    return FittedModel(theta, shift, ModelKind.DATA_POOLING, d_S, weights), weights


def pooling_loss(
    theta: np.ndarray,
    source: Dataset,
    target: Dataset,
    weights: PoolingWeights,
    shift: np.ndarray | None = None,
) -> float:
    """Weighted pooled residual sum of squares at ``theta``."""
    pad = PaddingMap(source.d, target.d)
    xT = target.X if shift is None else target.X - shift
    rS = source.y - pad.pad_rows(source.X) @ theta
    rT = target.y - xT @ theta
    return float(weights.alpha_S * (rS @ rS) + weights.alpha_T * (rT @ rT))


def analytic_variance_dp(
    source_gram: np.ndarray,
    target_gram: np.ndarray,
    weights: PoolingWeights,
    sigma2: float,
    sigma2_S: float,
) -> np.ndarray:
    """Covariance of the data-pooling estimator for fixed designs.

    ``M^-1 (alpha_S^2 sigma2_S I Sigma_S I^T + alpha_T^2 sigma2 Sigma_T) M^-1``
    """
    source_gram = np.asarray(source_gram, dtype=np.float64)
    target_gram = np.asarray(target_gram, dtype=np.float64)
    pad = PaddingMap(source_gram.shape[0], target_gram.shape[0])
    M = pooled_gram(source_gram, target_gram, weights)
    middle = (
        weights.alpha_S**2 * sigma2_S * pad.pad_gram(source_gram)
        + weights.alpha_T**2 * sigma2 * target_gram
    )
    left = solve_spd(M, middle)  # M^-1 B
    V = solve_spd(M, left.T).T  # (M^-1 B) M^-1, using symmetry of M
    return 0.5 * (V + V.T)


def ols_variance(target_gram: np.ndarray, sigma2: float) -> np.ndarray:
    """``sigma2 * Sigma_T^-1``."""
    target_gram = np.asarray(target_gram, dtype=np.float64)
    V = sigma2 * solve_spd(target_gram, np.eye(target_gram.shape[0]))
    return 0.5 * (V + V.T)


def predict(model: FittedModel, x: np.ndarray):
    """``(x - shift) @ theta`` for one row (returns a float) or a matrix of rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.d:
        raise DimensionMismatch(f"model expects {model.d} features, got {x.shape[-1]}")
    out = (x - model.shift) @ model.theta
    return float(out) if x.ndim == 1 else out


# -- batched paths for Monte Carlo replicate stacks ------------------------------------


def ols_batch(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """OLS for a stack of datasets ``X (R, n, d)``, ``y (R, n)``.

    Returns ``(theta (R, d), ok (R,))``.
    """
    G = np.einsum("rni,rnj->rij", X, X)
    b = np.einsum("rni,rn->ri", X, y)
    theta, ok = _backend.spd_solve_batch(G, b[:, :, None], PIVOT_RTOL)
    return theta[:, :, 0], ok


def data_pooling_batch(
    XS: np.ndarray,
    yS: np.ndarray,
    XT: np.ndarray,
    yT: np.ndarray,
    alpha_S: np.ndarray | float | None = None,
    alpha_T: np.ndarray | float | None = None,
    new_feature_mean: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Data-pooling fits for a stack of replicate datasets.

    Same semantics as :func:`fit_data_pooling` applied to each replicate;
    weights are estimated per replicate when ``alpha_S``/``alpha_T`` are None.

    Returns ``(theta (R, d_T), shift (R, d_T), ok (R,))``.
    """
    R, nS, d_S = XS.shape
    _, nT, d_T = XT.shape
    if d_S >= d_T:
        raise DimensionMismatch(f"source must have fewer features than target (d_S={d_S}, d_T={d_T})")
    shift = np.zeros((R, d_T))
    if new_feature_mean is None:
        shift[:, d_S:] = XT[:, :, d_S:].mean(axis=1)
    else:
        shift[:, d_S:] = np.asarray(new_feature_mean, dtype=np.float64)
    XTs = XT - shift[:, None, :]
    ok = np.ones(R, dtype=bool)
    if alpha_S is None or alpha_T is None:
        if nS <= d_S or nT <= d_T:
            raise DegenerateDoF("weight estimation needs n > d in both datasets")
        thS, okS = ols_batch(XS, yS)
        thT, okT = ols_batch(XTs, yT)
        ok &= okS & okT
        rS = yS - np.einsum("rnd,rd->rn", XS, np.nan_to_num(thS))
        rT = yT - np.einsum("rnd,rd->rn", XTs, np.nan_to_num(thT))
        s2S = np.maximum(np.einsum("rn,rn->r", rS, rS) / (nS - d_S), MIN_VARIANCE)
        s2T = np.maximum(np.einsum("rn,rn->r", rT, rT) / (nT - d_T), MIN_VARIANCE)
        alpha_S, alpha_T = 1.0 / s2S, 1.0 / s2T
    aS = np.broadcast_to(np.asarray(alpha_S, dtype=np.float64), (R,))
    aT = np.broadcast_to(np.asarray(alpha_T, dtype=np.float64), (R,))
    M = aT[:, None, None] * np.einsum("rni,rnj->rij", XTs, XTs)
    M[:, :d_S, :d_S] += aS[:, None, None] * np.einsum("rni,rnj->rij", XS, XS)
    rhs = aT[:, None] * np.einsum("rni,rn->ri", XTs, yT)
    rhs[:, :d_S] += aS[:, None] * np.einsum("rni,rn->ri", XS, yS)
    theta, okM = _backend.spd_solve_batch(M, rhs[:, :, None], PIVOT_RTOL)
    return theta[:, :, 0], shift, ok & okM
