"""Transfer gain of the data-pooling estimator over target-only OLS.

The gain at an input row ``x`` is the drop in expected squared prediction
error, ``x (Var(theta_T) - Var(theta_alpha)) x^T`` for the two unbiased
estimators. With maximum-likelihood weights the matrix in the middle is
positive semi-definite; :func:`gain_certificate` checks that numerically.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ._parallel import parallel_map
from .errors import DimensionMismatch, IncrtlError, ReplicateError
from .estimators import (
    Dataset,
    PaddingMap,
    PoolingWeights,
    analytic_variance_dp,
    data_pooling_batch,
    fit_data_pooling,
    fit_ols,
    ols_batch,
    ols_variance,
    predict,
    solve_spd,
)
from .simgen import GeneratorSpec, derive_seed, part_seeds, sample, true_new_feature_mean, true_variances

#: Default threshold on the scaled minimum eigenvalue.
PSD_TOL = 1e-8
#: Fraction of replicates allowed to need a redraw before an experiment aborts.
MAX_RETRY_FRACTION = 0.01


class GainMode(str, enum.Enum):
    """How the pooled estimator is formed inside each replicate.

    ``AnalyticWeights``: population weights, population mean of the new features.
    ``EstimatedWeights``: estimated weights, population mean.
    ``TrueMeanShift``: estimated weights, population mean (the reference curve
    of the centring ablation).
    ``SampleMeanShift``: estimated weights, sample mean (the full algorithm).
    """

    ANALYTIC_WEIGHTS = "AnalyticWeights"
    ESTIMATED_WEIGHTS = "EstimatedWeights"
    TRUE_MEAN_SHIFT = "TrueMeanShift"
    SAMPLE_MEAN_SHIFT = "SampleMeanShift"


@dataclass(frozen=True)
class GainReport:
    mean_gain: float
    std_gain: float
    per_replicate: np.ndarray
    n_T: int
    mode: GainMode
    seed: int = 0
    n_retried: int = 0

    @property
    def n_replicates(self) -> int:
        return int(self.per_replicate.shape[0])

    @property
    def stderr(self) -> float:
        return self.std_gain / np.sqrt(self.n_replicates)


@dataclass(frozen=True)
class GainCertificate:
    H: np.ndarray
    min_eigenvalue: float
    scale: float

    @property
    def scaled_min_eigenvalue(self) -> float:
        return self.min_eigenvalue / self.scale if self.scale > 0 else 0.0

    @property
    def passed(self) -> bool:
        return self.scaled_min_eigenvalue >= -PSD_TOL


def gain_matrix(source_gram, target_gram, weights: PoolingWeights, sigma2: float, sigma2_S: float) -> np.ndarray:
    """``Var(theta_T) - Var(theta_alpha)`` for fixed designs and arbitrary weights."""
    return ols_variance(target_gram, sigma2) - analytic_variance_dp(
        source_gram, target_gram, weights, sigma2, sigma2_S
    )


def analytic_gain(x, source_gram, target_gram, weights: PoolingWeights, sigma2: float, sigma2_S: float) -> float:
    """Expected squared-error reduction at row ``x``."""
    x = np.asarray(x, dtype=np.float64).ravel()
    target_gram = np.asarray(target_gram, dtype=np.float64)
    if x.shape[0] != target_gram.shape[0]:
        raise DimensionMismatch(f"x has {x.shape[0]} entries, expected {target_gram.shape[0]}")
    H = gain_matrix(source_gram, target_gram, weights, sigma2, sigma2_S)
    return float(x @ H @ x)


def gain_certificate(source_gram, target_gram, sigma2: float, sigma2_S: float) -> GainCertificate:
    """PSD check of ``sigma2 Sigma_T^-1 - M^-1`` under maximum-likelihood weights."""
    source_gram = np.asarray(source_gram, dtype=np.float64)
    target_gram = np.asarray(target_gram, dtype=np.float64)
    weights = PoolingWeights.from_variances(sigma2_S, sigma2)
    pad = PaddingMap(source_gram.shape[0], target_gram.shape[0])
    M = weights.alpha_S * pad.pad_gram(source_gram) + weights.alpha_T * target_gram
    eye = np.eye(pad.d_T)
    H = sigma2 * solve_spd(target_gram, eye) - solve_spd(M, eye)
    H = 0.5 * (H + H.T)
    scale = float(np.abs(H).max())
    return GainCertificate(H=H, min_eigenvalue=float(np.linalg.eigvalsh(H)[0]), scale=scale)


def woodbury_gain_matrix(source_gram, target_gram, sigma2: float, sigma2_S: float) -> np.ndarray:
    """The same matrix written as a low-rank Woodbury correction,
    ``A^-1 I (C^-1 + I^T A^-1 I)^-1 I^T A^-1`` with ``A = Sigma_T/sigma2``, ``C = Sigma_S/sigma2_S``.

    Uses LU solves throughout, independent of the Cholesky path.
    """
    source_gram = np.asarray(source_gram, dtype=np.float64)
    target_gram = np.asarray(target_gram, dtype=np.float64)
    d_S, d_T = source_gram.shape[0], target_gram.shape[0]
    A = target_gram / sigma2
    C = source_gram / sigma2_S
    U = np.eye(d_T, d_S)
    AinvU = np.linalg.solve(A, U)  # A^-1 I
    inner = np.linalg.inv(C) + U.T @ AinvU
    H = AinvU @ np.linalg.solve(inner, AinvU.T)
    return 0.5 * (H + H.T)


# -- empirical gain -------------------------------------------------------------------


def replicate_datasets(spec: GeneratorSpec, index: int, attempt: int = 0) -> tuple[Dataset, Dataset]:
    """Training source/target pair of replicate ``index`` (a redraw uses ``attempt=1``)."""
    seed = derive_seed(spec.seed, index) if attempt == 0 else derive_seed(spec.seed, index, attempt)
    s_src, s_tgt, _ = part_seeds(seed)
    return sample(spec, "source", s_src), sample(spec, "target", s_tgt)


def fit_pair(source: Dataset, target: Dataset, spec: GeneratorSpec, mode: GainMode):
    """Basic and pooled models for one replicate under ``mode``."""
    mode = GainMode(mode)
    basic = fit_ols(target)
    weights = None
    if mode is GainMode.ANALYTIC_WEIGHTS:
        sigma2, sigma2_S = true_variances(spec)
        weights = PoolingWeights.from_variances(sigma2_S, sigma2)
    mean = None if mode is GainMode.SAMPLE_MEAN_SHIFT else true_new_feature_mean(spec)
    pooled, _ = fit_data_pooling(source, target, weights, new_feature_mean=mean)
    return basic, pooled


def replicate_gain(test: Dataset, basic, pooled) -> float:
    """Mean over test rows of the squared-residual difference, basic minus pooled."""
    rT = test.y - predict(basic, test.X)
    rA = test.y - predict(pooled, test.X)
    return float(np.mean(rT * rT - rA * rA))


def empirical_gain(
    spec: GeneratorSpec,
    test: Dataset,
    n_replicates: int = 200,
    mode: GainMode | str = GainMode.ESTIMATED_WEIGHTS,
) -> GainReport:
    """Average test-set gain over ``n_replicates`` fresh training draws.

    Replicate ``i`` uses seed ``derive_seed(spec.seed, i)``, so the same spec
    under different modes sees the same training data. A replicate whose fit
    fails is redrawn once; more than 1% redraws aborts.
    """
    mode = GainMode(mode)
    if n_replicates < 1:
        raise ValueError("n_replicates must be >= 1")
    if test.n == 0:
        raise ValueError("test set is empty")

    def run(i: int) -> tuple[float, int]:
        for attempt in (0, 1):
            source, target = replicate_datasets(spec, i, attempt)
            try:
                return replicate_gain(test, *fit_pair(source, target, spec, mode)), attempt
            except IncrtlError as exc:
                if attempt == 1:
                    raise ReplicateError(i, exc) from exc
        raise AssertionError("unreachable")

    results = parallel_map(run, range(n_replicates))
    gains = np.array([g for g, _ in results])
    retried = sum(a for _, a in results)
    if retried > MAX_RETRY_FRACTION * n_replicates:
        first = next(i for i, (_, a) in enumerate(results) if a)
        raise ReplicateError(first, RuntimeError(f"{retried} of {n_replicates} replicates needed a redraw"))
    std = float(gains.std(ddof=1)) if n_replicates > 1 else 0.0
    return GainReport(
        mean_gain=float(gains.mean()),
        std_gain=std,
        per_replicate=gains,
        n_T=spec.n_T,
        mode=mode,
        seed=spec.seed,
        n_retried=retried,
    )


GAIN_CSV_COLUMNS = ("n_T", "mode", "mean_gain", "std_gain", "n_replicates", "seed")


def gain_rows(reports) -> list[dict]:
    return [
        {
            "n_T": r.n_T,
            "mode": r.mode.value,
            "mean_gain": repr(r.mean_gain),
            "std_gain": repr(r.std_gain),
            "n_replicates": r.n_replicates,
            "seed": r.seed,
        }
        for r in reports
    ]


def write_gain_csv(path, reports) -> None:
    from .modelio import atomic_write_csv

    atomic_write_csv(path, GAIN_CSV_COLUMNS, gain_rows(reports))


# -- fixed-design Monte Carlo ---------------------------------------------------------


def fixed_design_labels(spec: GeneratorSpec, x_S: np.ndarray, x_T: np.ndarray, n_replicates: int, seed: int):
    """Label stacks ``(y_S (R, n_S), y_T (R, n_T))`` for fixed designs.

    Source labels re-draw the unobserved new input with every replicate, so
    their variance is the inflated source variance.
    """
    if spec.kind.value != "baseline":
        raise ValueError("fixed-design replicates are defined for the baseline generator only")
    from .simgen import make_rng

    rng = make_rng(seed)
    theta = np.asarray(spec.theta)
    R = n_replicates
    latent = rng.standard_normal((R, x_S.shape[0]))
    yS = x_S @ theta[:2] + theta[2] * latent + spec.sigma * rng.standard_normal((R, x_S.shape[0]))
    yT = x_T @ theta + spec.sigma * rng.standard_normal((R, x_T.shape[0]))
    return yS, yT


def monte_carlo_pooling(
    spec: GeneratorSpec,
    x_S: np.ndarray,
    x_T: np.ndarray,
    n_replicates: int,
    seed: int,
    weights: PoolingWeights | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Data-pooling and OLS estimates over label replicates on fixed designs.

    Returns ``(theta_alpha (R, d_T), theta_T (R, d_T))``. The new feature is
    taken as zero-mean (no centring), matching the population law.
    """
    yS, yT = fixed_design_labels(spec, x_S, x_T, n_replicates, seed)
    R = n_replicates
    XS = np.broadcast_to(x_S, (R,) + x_S.shape)
    XT = np.broadcast_to(x_T, (R,) + x_T.shape)
    aS = None if weights is None else weights.alpha_S
    aT = None if weights is None else weights.alpha_T
    mean = np.zeros(x_T.shape[1] - x_S.shape[1])
    th_a, _, ok_a = data_pooling_batch(XS, yS, XT, yT, aS, aT, new_feature_mean=mean)
    th_T, ok_T = ols_batch(XT, yT)
    if not (ok_a.all() and ok_T.all()):
        raise ReplicateError(int(np.flatnonzero(~(ok_a & ok_T))[0]), RuntimeError("singular system"))
    return th_a, th_T
