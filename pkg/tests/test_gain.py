import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from incrtl.errors import DegenerateDoF, DimensionMismatch, ReplicateError
from incrtl.estimators import PoolingWeights
from incrtl.gain import (
    GAIN_CSV_COLUMNS,
    GainMode,
    analytic_gain,
    empirical_gain,
    gain_certificate,
    gain_matrix,
    monte_carlo_pooling,
    replicate_datasets,
    woodbury_gain_matrix,
    write_gain_csv,
)
from incrtl.simgen import GeneratorSpec, make_rng, part_seeds, sample

from .helpers import random_design


def random_instance(rng, d_S, d_T, n_S, n_T):
    XS, XT = random_design(rng, n_S, d_S), random_design(rng, n_T, d_T)
    s2 = float(rng.uniform(0.1, 5.0))
    return XS.T @ XS, XT.T @ XT, s2, s2 + float(rng.uniform(0.0, 10.0))


@pytest.fixture
def instance(rng):
    return random_instance(rng, 3, 5, 50, 10)


class TestAnalyticGain:
    def test_zero_row(self, instance):
        gS, gT, s2, s2S = instance
        w = PoolingWeights.from_variances(s2S, s2)
        assert analytic_gain(np.zeros(5), gS, gT, w, s2, s2S) == 0.0

    @pytest.mark.parametrize("i", range(5))
    def test_orthogonal_unit_rows(self, i):
        s2, s2S = 1.0, 5.0
        w = PoolingWeights.from_variances(s2S, s2)
        g = analytic_gain(np.eye(5)[i], np.eye(3), np.eye(5), w, s2, s2S)
        expected = s2**2 / (s2 + s2S) if i < 3 else 0.0
        assert g == pytest.approx(expected, abs=1e-12)

    def test_width_checked(self, instance):
        gS, gT, s2, s2S = instance
        with pytest.raises(DimensionMismatch):
            analytic_gain(np.ones(4), gS, gT, PoolingWeights(1.0, 1.0), s2, s2S)


class TestCertificate:
    def test_random_instance_non_negative(self, instance):
        cert = gain_certificate(*instance)
        assert cert.passed
        assert cert.min_eigenvalue >= -1e-8 * cert.scale

    def test_symmetric_and_min_eigenvalue(self, instance):
        cert = gain_certificate(*instance)
        assert np.abs(cert.H - cert.H.T).max() <= 1e-10
        assert cert.min_eigenvalue == pytest.approx(np.linalg.eigvalsh(cert.H).min(), abs=1e-14)

    def test_orthogonal_diagonal(self):
        s2, s2S = 2.0, 3.0
        cert = gain_certificate(np.eye(2), np.eye(4), s2, s2S)
        np.testing.assert_allclose(cert.H, np.diag([s2**2 / (s2 + s2S)] * 2 + [0.0] * 2), atol=1e-12)

    def test_matches_woodbury(self, instance):
        H = gain_certificate(*instance).H
        np.testing.assert_allclose(H, woodbury_gain_matrix(*instance), atol=1e-9)

    def test_matches_general_gain_matrix(self, instance):
        gS, gT, s2, s2S = instance
        w = PoolingWeights.from_variances(s2S, s2)
        np.testing.assert_allclose(gain_certificate(*instance).H, gain_matrix(gS, gT, w, s2, s2S), atol=1e-10)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_property_non_negative(self, seed):
        rng = np.random.default_rng(seed)
        d_S = int(rng.integers(1, 9))
        d_T = int(rng.integers(d_S + 1, 13))
        n_S = int(rng.integers(d_S + 2, 201))
        n_T = int(rng.integers(d_T + 2, 61))
        cert = gain_certificate(*random_instance(rng, d_S, d_T, n_S, n_T))
        assert cert.scaled_min_eigenvalue >= -1e-8


class TestPropositionThree:
    def test_monte_carlo_matches_analytic(self):
        rng = make_rng(17)
        spec = GeneratorSpec()
        x_S, x_T = random_design(rng, 100, 2), random_design(rng, 10, 3)
        s2, s2S = 1.0, 5.0
        w = PoolingWeights.from_variances(s2S, s2)
        th_a, th_T = monte_carlo_pooling(spec, x_S, x_T, 20000, 8, w)
        theta = np.asarray(spec.theta)
        H = gain_matrix(x_S.T @ x_S, x_T.T @ x_T, w, s2, s2S)
        for x in random_design(rng, 10, 3):
            # the fresh label noise cancels in the difference of squared errors
            diff = ((th_T - theta) @ x) ** 2 - ((th_a - theta) @ x) ** 2
            se = diff.std(ddof=1) / np.sqrt(diff.size)
            assert abs(diff.mean() - x @ H @ x) < 4 * se


@pytest.fixture(scope="module")
def test_set():
    return sample(GeneratorSpec(), "test", part_seeds(0)[2])


class TestEmpiricalGain:
    def test_report_invariants(self, test_set):
        rep = empirical_gain(GeneratorSpec(n_T=5, seed=1), test_set, 50)
        assert rep.per_replicate.shape == (50,)
        assert rep.mean_gain == pytest.approx(float(np.mean(rep.per_replicate)), abs=1e-12)
        assert rep.n_replicates == 50 and rep.mode is GainMode.ESTIMATED_WEIGHTS

    def test_small_target_positive(self, test_set):
        assert empirical_gain(GeneratorSpec(n_T=5), test_set, 200).mean_gain > 0

    @pytest.mark.parametrize("n_T", [5, 10, 15, 20, 25, 30])
    def test_true_alpha_not_below_zero(self, test_set, n_T):
        rep = empirical_gain(GeneratorSpec(n_T=n_T, seed=n_T), test_set, 200, GainMode.ANALYTIC_WEIGHTS)
        assert rep.mean_gain >= -2 * rep.stderr

    def test_deterministic(self, test_set):
        a = empirical_gain(GeneratorSpec(seed=4), test_set, 20, GainMode.SAMPLE_MEAN_SHIFT)
        b = empirical_gain(GeneratorSpec(seed=4), test_set, 20, GainMode.SAMPLE_MEAN_SHIFT)
        assert a.per_replicate.tobytes() == b.per_replicate.tobytes()

    def test_homogeneous_sources_match_analytic(self, test_set):
        spec = GeneratorSpec(theta=(2.0, 2.0, 0.0), n_T=6, seed=21)
        R = 300
        rep = empirical_gain(spec, test_set, R, GainMode.ANALYTIC_WEIGHTS)
        analytic = np.empty(R)
        for i in range(R):
            source, target = replicate_datasets(spec, i)
            H = gain_matrix(source.X.T @ source.X, target.X.T @ target.X, PoolingWeights(1.0, 1.0), 1.0, 1.0)
            analytic[i] = np.einsum("ij,jk,ik->i", test_set.X, H, test_set.X).mean()
        diff = rep.per_replicate - analytic
        assert abs(diff.mean()) < 3 * diff.std(ddof=1) / np.sqrt(R)

    def test_failed_replicates_tagged(self, test_set):
        with pytest.raises(ReplicateError) as info:
            empirical_gain(GeneratorSpec(n_T=3), test_set, 5)
        assert info.value.index == 0
        assert isinstance(info.value.cause, DegenerateDoF)

    def test_csv(self, tmp_path, test_set):
        reps = [empirical_gain(GeneratorSpec(n_T=n, seed=n), test_set, 10) for n in (5, 10)]
        path = tmp_path / "gain.csv"
        write_gain_csv(path, reps)
        with path.open() as fh:
            rows = list(csv.DictReader(fh))
        assert tuple(rows[0]) == GAIN_CSV_COLUMNS
        assert [int(r["n_T"]) for r in rows] == [5, 10]
        assert float(rows[1]["mean_gain"]) == reps[1].mean_gain
