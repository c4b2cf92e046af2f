import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from incrtl.errors import DegenerateDoF, DimensionMismatch, RankDeficient, ValidationError
from incrtl.estimators import (
    MIN_VARIANCE,
    Dataset,
    FittedModel,
    ModelKind,
    PaddingMap,
    PoolingWeights,
    analytic_variance_dp,
    data_pooling_batch,
    estimate_noise_variance,
    fit_data_pooling,
    fit_ols,
    ols_batch,
    ols_variance,
    pooling_loss,
    predict,
    solve_spd,
)
from incrtl.gain import gain_certificate, monte_carlo_pooling
from incrtl.simgen import GeneratorKind, GeneratorSpec, generate, make_rng, sample

from .helpers import random_design


def orthonormal(rng, n, d):
    q, _ = np.linalg.qr(rng.standard_normal((n, d)))
    return q


class TestDataset:
    def test_shapes_validated(self):
        with pytest.raises(DimensionMismatch):
            Dataset(np.ones((3, 2)), np.ones(4))
        with pytest.raises(DimensionMismatch):
            Dataset(np.ones((3, 2)), np.ones(3), d_hist=3)

    def test_arrays_read_only(self):
        d = Dataset(np.ones((3, 2)), np.ones(3))
        with pytest.raises(ValueError):
            d.X[0, 0] = 5.0

    def test_historical_view(self):
        d = Dataset(np.arange(6.0).reshape(3, 2), np.ones(3), 1, ("a", "b"))
        h = d.historical()
        assert h.d == 1 and h.columns == ("a",)


class TestPaddingMap:
    def test_matrix_and_rows(self):
        pad = PaddingMap(2, 4)
        np.testing.assert_array_equal(pad.matrix, np.eye(4, 2))
        np.testing.assert_array_equal(pad.pad_rows([[1.0, 2.0]]), [[1.0, 2.0, 0.0, 0.0]])

    def test_gram_matches_matrix_product(self, rng):
        pad = PaddingMap(2, 3)
        G = rng.standard_normal((2, 2))
        np.testing.assert_array_equal(pad.pad_gram(G), pad.matrix @ G @ pad.matrix.T)


class TestFitOLS:
    def test_noiseless_scalar(self):
        m = fit_ols(Dataset(np.array([[1.0], [2.0]]), np.array([2.0, 4.0])))
        np.testing.assert_allclose(m.theta, [2.0])

    def test_identity_design(self):
        m = fit_ols(Dataset(np.eye(2), np.array([3.0, 5.0])))
        np.testing.assert_allclose(m.theta, [3.0, 5.0])

    def test_recovers_theta(self, rng):
        X = rng.standard_normal((50, 3))
        theta = np.array([1.0, -2.0, 0.5])
        m = fit_ols(Dataset(X, X @ theta))
        np.testing.assert_allclose(m.theta, theta, atol=1e-10)
        assert not m.shift.any()

    def test_gradient_zero(self, rng):
        X = rng.standard_normal((40, 4))
        y = rng.standard_normal(40)
        m = fit_ols(Dataset(X, y))
        np.testing.assert_allclose(-2 * X.T @ (y - X @ m.theta), 0.0, atol=1e-10)

    def test_rank_deficient(self):
        X = np.c_[np.ones(5), np.ones(5)]
        with pytest.raises(RankDeficient):
            fit_ols(Dataset(X, np.arange(5.0)))


class TestNoiseVariance:
    def test_zero_for_noiseless(self, rng):
        X = rng.standard_normal((50, 3))
        data = Dataset(X, X @ np.array([1.0, -2.0, 0.5]))
        assert estimate_noise_variance(data, fit_ols(data)) == pytest.approx(0.0, abs=1e-20)

    def test_law_of_large_numbers(self):
        spec = GeneratorSpec(n_T=10000)
        target = sample(spec, "target", 7)
        s2 = estimate_noise_variance(target, fit_ols(target))
        assert 0.95 <= s2 <= 1.05

    def test_single_dof(self):
        X = np.array([[1.0], [1.0]])
        data = Dataset(X, np.array([0.0, 2.0]))
        # residuals -1, 1 around the fitted mean: RSS 2 over one degree of freedom
        assert estimate_noise_variance(data, fit_ols(data)) == pytest.approx(2.0)

    def test_degenerate(self):
        data = Dataset(np.eye(2), np.ones(2))
        with pytest.raises(DegenerateDoF, match="degrees of freedom"):
            estimate_noise_variance(data, fit_ols(data))


class TestPoolingWeights:
    def test_positive_required(self):
        with pytest.raises(ValidationError):
            PoolingWeights(0.0, 1.0)

    def test_from_variances_floor(self):
        w = PoolingWeights.from_variances(0.0, 4.0)
        assert w.alpha_S == 1.0 / MIN_VARIANCE
        assert w.alpha_T == 0.25


class TestFitDataPooling:
    def test_noiseless_consistent(self, consistent_pair):
        source, target, theta = consistent_pair
        for w in (None, PoolingWeights(0.3, 2.0)):
            model, _ = fit_data_pooling(source, target, w)
            np.testing.assert_allclose(model.theta, theta, atol=1e-8)

    def test_estimated_weights_are_inverse_variances(self, rng):
        source, target, _ = generate(GeneratorSpec(seed=3))
        _, w = fit_data_pooling(source, target)
        assert w.alpha_S == pytest.approx(1.0 / w.sigma2_S_hat)
        assert w.alpha_T == pytest.approx(1.0 / w.sigma2_hat)

    def test_shift_bookkeeping(self):
        spec = GeneratorSpec(kind=GeneratorKind.SHIFTED_NEW_FEATURE, seed=11)
        source, target, _ = generate(spec)
        model, _ = fit_data_pooling(source, target)
        assert (model.shift[:2] == 0.0).all()
        assert model.shift[2] == target.X[:, 2].mean()

    def test_gradient_zero(self):
        source, target, _ = generate(GeneratorSpec(seed=5))
        model, w = fit_data_pooling(source, target)
        pad = PaddingMap(source.d, target.d)
        xS, xT = pad.pad_rows(source.X), target.X - model.shift
        grad = -2 * w.alpha_S * xS.T @ (source.y - xS @ model.theta) - 2 * w.alpha_T * xT.T @ (
            target.y - xT @ model.theta
        )
        assert np.abs(grad).max() < 1e-9 * max(w.alpha_S, w.alpha_T) * 100

    def test_dimension_mismatch(self):
        s, t, _ = generate(GeneratorSpec())
        with pytest.raises(DimensionMismatch):
            fit_data_pooling(t, s)

    def test_degenerate_without_weights(self):
        s, t, _ = generate(GeneratorSpec(n_T=3))
        with pytest.raises(DegenerateDoF):
            fit_data_pooling(s, t)
        model, _ = fit_data_pooling(s, t, PoolingWeights(0.2, 1.0))
        assert np.isfinite(model.theta).all()

    def test_ols_reduction(self, rng):
        # d_S = d_T is outside fit_data_pooling's domain; the batch path covers it
        XS, XT = rng.standard_normal((30, 3)), rng.standard_normal((12, 3))
        yS, yT = rng.standard_normal(30), rng.standard_normal(12)
        M = XS.T @ XS + XT.T @ XT
        theta = solve_spd(M, XS.T @ yS + XT.T @ yT)
        stacked = fit_ols(Dataset(np.vstack([XS, XT]), np.concatenate([yS, yT])))
        np.testing.assert_allclose(theta, stacked.theta, atol=1e-10)

    def test_predict_round_trip(self):
        spec = GeneratorSpec(kind=GeneratorKind.SHIFTED_NEW_FEATURE, seed=2)
        source, target, _ = generate(spec)
        model, w = fit_data_pooling(source, target)
        inside = (target.X - model.shift) @ model.theta
        assert np.abs(predict(model, target.X) - inside).max() <= 1e-10

    def test_batch_matches_single(self, rng):
        R = 5
        XS = np.stack([random_design(rng, 30, 2) for _ in range(R)])
        XT = np.stack([random_design(rng, 9, 3) for _ in range(R)])
        yS, yT = rng.standard_normal((R, 30)), rng.standard_normal((R, 9))
        theta, shift, ok = data_pooling_batch(XS, yS, XT, yT)
        assert ok.all()
        for r in range(R):
            model, _ = fit_data_pooling(Dataset(XS[r], yS[r]), Dataset(XT[r], yT[r], 2))
            np.testing.assert_allclose(theta[r], model.theta, rtol=1e-9, atol=1e-12)
            np.testing.assert_allclose(shift[r], model.shift, atol=1e-15)
        th_ols, ok = ols_batch(XT, yT)
        np.testing.assert_allclose(th_ols[0], fit_ols(Dataset(XT[0], yT[0])).theta, rtol=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_optimality_under_perturbation(self, seed):
        rng = np.random.default_rng(seed)
        source, target, _ = generate(GeneratorSpec(seed=seed))
        model, w = fit_data_pooling(source, target)
        base = pooling_loss(model.theta, source, target, w, model.shift)
        for _ in range(5):
            delta = rng.standard_normal(3)
            delta *= 1e-3 / np.linalg.norm(delta)
            assert pooling_loss(model.theta + delta, source, target, w, model.shift) >= base - 1e-12


class TestPredict:
    def test_no_shift(self):
        m = FittedModel(np.array([1.0, 1.0]), np.zeros(2), ModelKind.OLS, 2)
        assert predict(m, np.array([2.0, 3.0])) == 5.0

    def test_shift_on_new_coordinate(self):
        m = FittedModel(np.array([1.0, 1.0]), np.array([0.0, 1.0]), ModelKind.DATA_POOLING, 1)
        assert predict(m, np.array([2.0, 3.0])) == 4.0

    def test_width_checked(self):
        m = FittedModel(np.ones(2), np.zeros(2), ModelKind.OLS, 2)
        with pytest.raises(DimensionMismatch):
            predict(m, np.ones(3))


class TestAnalyticVariance:
    def test_negligible_source_weight_gives_ols(self, rng):
        XS, XT = random_design(rng, 40, 2), random_design(rng, 12, 3)
        w = PoolingWeights(1e-12, 1.0)
        V = analytic_variance_dp(XS.T @ XS, XT.T @ XT, w, 1.0, 5.0)
        np.testing.assert_allclose(V, ols_variance(XT.T @ XT, 1.0), rtol=1e-8, atol=1e-12)

    def test_orthogonal_closed_form(self):
        s2, s2S = 1.3, 4.1
        w = PoolingWeights.from_variances(s2S, s2)
        V = analytic_variance_dp(np.eye(2), np.eye(4), w, s2, s2S)
        expected = np.diag([s2 * s2S / (s2 + s2S)] * 2 + [s2] * 2)
        np.testing.assert_allclose(V, expected, atol=1e-12)

    def test_equals_ols_minus_gain(self, rng):
        XS, XT = random_design(rng, 60, 3), random_design(rng, 15, 5)
        s2, s2S = 0.7, 2.9
        w = PoolingWeights.from_variances(s2S, s2)
        V = analytic_variance_dp(XS.T @ XS, XT.T @ XT, w, s2, s2S)
        H = gain_certificate(XS.T @ XS, XT.T @ XT, s2, s2S).H
        np.testing.assert_allclose(V, ols_variance(XT.T @ XT, s2) - H, atol=1e-10)

    def test_symmetric_psd(self, rng):
        XS, XT = random_design(rng, 30, 2), random_design(rng, 10, 4)
        V = analytic_variance_dp(XS.T @ XS, XT.T @ XT, PoolingWeights(0.5, 2.0), 1.0, 3.0)
        np.testing.assert_array_equal(V, V.T)
        assert np.linalg.eigvalsh(V).min() > 0


class TestMonteCarloMoments:
    def test_orthogonal_designs(self):
        rng = make_rng(99)
        spec = GeneratorSpec()
        x_S, x_T = orthonormal(rng, 100, 2), orthonormal(rng, 10, 3)
        s2, s2S = 1.0, 5.0
        w = PoolingWeights.from_variances(s2S, s2)
        th, _ = monte_carlo_pooling(spec, x_S, x_T, 20000, 4, w)
        var = th.var(axis=0, ddof=1)
        expected = np.array([s2 * s2S / (s2 + s2S)] * 2 + [s2])
        np.testing.assert_allclose(var, expected, rtol=0.03)
