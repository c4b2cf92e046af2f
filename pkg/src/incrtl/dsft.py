"""Domain-specific feature transfer (DSFT) baselines.

A mapping ``f(x_hist) -> x_new`` is learned on the target rows and used to
fill in the new columns of the source rows; OLS on the stacked data is the
final predictor. The mapping minimises

    ||f(x_T_hist) - x_T_new||^2 + alpha * ||mean f(x_S) - mean x_T_new||^2 + beta * ||W||^2

with ``f`` linear in a feature map of the historical block (affine features,
or RBF features for the kernel variant). The discrepancy term compares mean
embeddings under a linear kernel, which keeps the whole objective quadratic
and solvable in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import DimensionMismatch, ValidationError
from .estimators import Dataset, FittedModel, ModelKind, fit_ols, solve_spd


@dataclass(frozen=True)
class DsftConfig:
    alpha: float = 1e5
    beta: float = 1.0
    kernel: str | None = None  # None or "rbf"
    bandwidth: float | None = None  # None: median heuristic
    standardize: bool = True
    max_centers: int = 200

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValidationError("DSFT alpha and beta must be non-negative")
        if self.kernel not in (None, "rbf"):
            raise ValidationError(f"unknown DSFT kernel {self.kernel!r}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValidationError("RBF bandwidth must be positive")


@dataclass(frozen=True)
class DsftMapping:
    """A fitted historical-to-new feature map."""

    config: DsftConfig
    keep: np.ndarray  # mask of non-constant historical columns
    center: np.ndarray
    scale: np.ndarray
    coef: np.ndarray  # (p_internal, q) weights on the internal features
    centers: np.ndarray | None = None
    bandwidth: float | None = None

    def features(self, x_hist: np.ndarray) -> np.ndarray:
        """Internal design: a bias column plus affine or RBF features."""
        z = (np.asarray(x_hist, dtype=np.float64)[:, self.keep] - self.center) / self.scale
        if self.config.kernel == "rbf":
            d2 = _backend.pairwise_sq_dists(z, self.centers)
            z = np.exp(-d2 / (2.0 * self.bandwidth**2))
        return np.hstack([np.ones((z.shape[0], 1)), z])

    def transform(self, x_hist: np.ndarray) -> np.ndarray:
        return self.features(x_hist) @ self.coef

    def linear_form(self, x_hist_example: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """``(W, offset)`` with ``f(x) = x @ W + offset`` in original coordinates.

        Only defined for the linear variant. When the historical block has a
        constant column, the offset is folded into its row of ``W``.
        """
        if self.config.kernel is not None:
            raise ValidationError("kernel mappings have no linear form")
        p = self.keep.shape[0]
        W = np.zeros((p, self.coef.shape[1]))
        W[self.keep] = self.coef[1:] / self.scale[:, None]
        offset = self.coef[0] - (self.center / self.scale) @ self.coef[1:]
        if x_hist_example is not None:
            consts = np.flatnonzero(~self.keep)
            if consts.size:
                c = consts[0]
                v = float(np.asarray(x_hist_example)[0, c])
                if v != 0.0:
                    W[c] += offset / v
                    offset = np.zeros_like(offset)
        return W, offset


def _split_blocks(source: Dataset, target: Dataset, new_cols: np.ndarray | None = None):
    d_S = source.d
    if target.d <= d_S:
        raise DimensionMismatch("target must have at least one new column")
    if target.d_hist not in (d_S, target.d):
        raise DimensionMismatch("target's historical block does not match the source width")
    cols = np.arange(d_S, target.d) if new_cols is None else np.asarray(new_cols)
    return source.X, target.X[:, :d_S], target.X[:, cols]


def _median_bandwidth(z: np.ndarray) -> float:
    d2 = _backend.pairwise_sq_dists(z, z)
    iu = np.triu_indices(z.shape[0], k=1)
    dist = np.sqrt(d2[iu])
    dist = dist[dist > 0]
    return float(np.median(dist)) if dist.size else 1.0


def fit_dsft_mapping(
    source: Dataset, target: Dataset, cfg: DsftConfig = DsftConfig(), new_cols=None
) -> DsftMapping:
    """Closed-form minimiser of the DSFT objective (see module docstring)."""
    xS, xT_hist, xT_new = _split_blocks(source, target, new_cols)
    pooled = np.vstack([xS, xT_hist])
    spread = pooled.max(axis=0) - pooled.min(axis=0)
    keep = spread > 0
    hist = pooled[:, keep]
    if cfg.standardize and hist.shape[1]:
        center = hist.mean(axis=0)
        scale = hist.std(axis=0)
    else:
        center = np.zeros(hist.shape[1])
        scale = np.ones(hist.shape[1])
    centers = bandwidth = None
    if cfg.kernel == "rbf":
        z = (hist - center) / scale
        if z.shape[0] > cfg.max_centers:
            idx = np.unique(np.linspace(0, z.shape[0] - 1, cfg.max_centers).round().astype(int))
            z = z[idx]
        centers = z
        bandwidth = cfg.bandwidth if cfg.bandwidth is not None else _median_bandwidth(z)
    proto = DsftMapping(cfg, keep, center, scale, np.zeros((1, 1)), centers, bandwidth)
    PT = proto.features(xT_hist)
    mS = proto.features(xS).mean(axis=0)
    zbar = xT_new.mean(axis=0)
    A = PT.T @ PT + cfg.alpha * np.outer(mS, mS) + cfg.beta * np.eye(PT.shape[1])
    B = PT.T @ xT_new + cfg.alpha * np.outer(mS, zbar)
    coef = solve_spd(A, B)
    return DsftMapping(cfg, keep, center, scale, coef, centers, bandwidth)


def dsft_objective(mapping: DsftMapping, source: Dataset, target: Dataset, coef=None, new_cols=None) -> float:
    """Objective value at ``coef`` (defaults to the fitted weights)."""
    xS, xT_hist, xT_new = _split_blocks(source, target, new_cols)
    V = mapping.coef if coef is None else np.asarray(coef)
    cfg = mapping.config
    fit = mapping.features(xT_hist) @ V - xT_new
    disc = mapping.features(xS).mean(axis=0) @ V - xT_new.mean(axis=0)
    return float(np.sum(fit * fit) + cfg.alpha * np.sum(disc * disc) + cfg.beta * np.sum(V * V))


def fit_dsft_pipeline(
    source: Dataset,
    target: Dataset,
    cfg: DsftConfig = DsftConfig(),
    products: tuple[tuple[int, int, int], ...] = (),
) -> FittedModel:
    """Impute the source's new columns, stack with the target, fit OLS.

    ``products`` lists derived columns ``(i, j, k)`` with ``col_k = col_i * col_j``;
    those are recomputed from the imputed columns instead of being mapped.
    """
    d_S = source.d
    derived = {k for _, _, k in products}
    new_cols = np.array([c for c in range(d_S, target.d) if c not in derived])
    mapping = fit_dsft_mapping(source, target, cfg, new_cols)
    xS_full = np.zeros((source.n, target.d))
    xS_full[:, :d_S] = source.X
    xS_full[:, new_cols] = mapping.transform(source.X)
    for i, j, k in products:
        xS_full[:, k] = xS_full[:, i] * xS_full[:, j]
    stacked = Dataset(np.vstack([xS_full, target.X]), np.concatenate([source.y, target.y]), d_S)
    ols = fit_ols(stacked)
    kind = ModelKind.DSFT_KERNEL if cfg.kernel == "rbf" else ModelKind.DSFT_LINEAR
    return FittedModel(ols.theta, ols.shift, kind, d_S)
