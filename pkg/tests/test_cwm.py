import numpy as np
import pytest

from tsnecwm import (
    ConfigError,
    CwmParams,
    DegeneracyError,
    LabeledDataset,
    RandomSource,
    e_step,
    fit,
    initialize,
    input_density,
    m_step,
    output_density,
    predict_cluster,
    score_partitions,
)
from tsnecwm.cwm import component_log_densities
from conftest import make_cwm2


def direct_mvn(x, mu, Sigma):
    """Textbook density formula, independent of the Cholesky path."""
    d = len(mu)
    dev = np.asarray(x) - np.asarray(mu)
    inv = np.linalg.inv(Sigma)
    det = np.linalg.det(Sigma)
    return float(np.exp(-0.5 * dev @ inv @ dev) / np.sqrt((2 * np.pi) ** d * det))


def single_component_params(d=2, beta=None, sigma2=1.0, cov_model="VVV"):
    return CwmParams(
        weights=np.array([1.0]),
        means=np.zeros((1, d)),
        covariances=np.eye(d)[None],
        reg_coeffs=np.zeros((1, d + 1)) if beta is None else np.asarray(beta)[None],
        output_vars=np.array([sigma2]),
        cov_model=cov_model,
    )


class TestDensities:
    def test_peak_of_standard_bivariate(self):
        assert input_density([0.0, 0.0], np.zeros(2), np.eye(2)) == pytest.approx(
            1.0 / (2 * np.pi), abs=1e-12
        )

    def test_mahalanobis_decay(self):
        peak = input_density([0.0, 0.0], np.zeros(2), np.eye(2))
        for r in (0.5, 1.0, 2.0):
            val = input_density([r, 0.0], np.zeros(2), np.eye(2))
            assert val == pytest.approx(peak * np.exp(-(r**2) / 2), rel=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_direct_formula(self, seed):
        gen = np.random.default_rng(seed)
        A = gen.standard_normal((4, 6))
        Sigma = A @ A.T + 0.5 * np.eye(4)
        mu = gen.standard_normal(4)
        x = gen.standard_normal(4)
        assert input_density(x, mu, Sigma) == pytest.approx(
            direct_mvn(x, mu, Sigma), rel=1e-12
        )

    def test_non_spd_covariance(self):
        with pytest.raises(DegeneracyError):
            input_density([0.0, 0.0], np.zeros(2), np.diag([1.0, -1.0]))

    def test_output_peak(self):
        beta = np.array([2.0, 3.0])
        assert output_density(2.0 + 3.0 * 1.5, [1.5], beta, 1.0) == pytest.approx(
            1.0 / np.sqrt(2 * np.pi), abs=1e-14
        )

    def test_output_one_sigma(self):
        beta = np.array([0.0, 1.0])
        sigma2 = 4.0
        peak = output_density(2.0, [2.0], beta, sigma2)
        val = output_density(2.0 + 2.0, [2.0], beta, sigma2)
        assert val == pytest.approx(peak * np.exp(-0.5), rel=1e-14)

    @pytest.mark.parametrize("seed", range(3))
    def test_output_matches_formula(self, seed):
        gen = np.random.default_rng(seed + 20)
        beta = gen.standard_normal(4)
        x = gen.standard_normal(3)
        y = gen.standard_normal()
        s2 = float(gen.uniform(0.5, 2.0))
        resid = y - (beta[0] + beta[1:] @ x)
        expect = np.exp(-0.5 * resid**2 / s2) / np.sqrt(2 * np.pi * s2)
        assert output_density(y, x, beta, s2) == pytest.approx(expect, rel=1e-14)


class TestEStep:
    def test_single_component(self):
        gen = np.random.default_rng(0)
        X = gen.standard_normal((10, 2))
        y = gen.standard_normal(10)
        data = LabeledDataset(features=X, response=y)
        params = single_component_params()
        resp, ll = e_step(data, params)
        assert np.array_equal(resp, np.ones((10, 1)))
        expect = sum(
            np.log(input_density(X[i], params.means[0], params.covariances[0]))
            + np.log(output_density(y[i], X[i], params.reg_coeffs[0], 1.0))
            for i in range(10)
        )
        assert ll == pytest.approx(expect, rel=1e-12)

    def test_mirror_symmetry_gives_half(self):
        params = CwmParams(
            weights=np.array([0.5, 0.5]),
            means=np.array([[-1.0, 0.0], [1.0, 0.0]]),
            covariances=np.array([np.eye(2), np.eye(2)]),
            reg_coeffs=np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]]),
            output_vars=np.array([1.0, 1.0]),
            cov_model="VVV",
        )
        data = LabeledDataset(features=np.array([[0.0, 0.7]]), response=np.array([0.7]))
        resp, _ = e_step(data, params)
        assert np.allclose(resp, [[0.5, 0.5]], atol=1e-14)

    def test_matches_direct_ratio_oracle(self):
        gen = np.random.default_rng(2)
        X = gen.standard_normal((6, 2))
        y = gen.standard_normal(6)
        data = LabeledDataset(features=X, response=y)
        params = CwmParams(
            weights=np.array([0.3, 0.7]),
            means=gen.standard_normal((2, 2)),
            covariances=np.array([np.eye(2) * 0.8, np.eye(2) * 1.3]),
            reg_coeffs=gen.standard_normal((2, 3)),
            output_vars=np.array([0.5, 1.5]),
            cov_model="VVV",
        )
        resp, ll = e_step(data, params)
        for i in range(6):
            dens = []
            for g in range(2):
                pg = params.weights[g]
                pg *= direct_mvn(X[i], params.means[g], params.covariances[g])
                b = params.reg_coeffs[g]
                resid = y[i] - (b[0] + b[1:] @ X[i])
                pg *= np.exp(-0.5 * resid**2 / params.output_vars[g]) / np.sqrt(
                    2 * np.pi * params.output_vars[g]
                )
                dens.append(pg)
            dens = np.array(dens)
            assert np.allclose(resp[i], dens / dens.sum(), atol=1e-12)

    def test_row_sums(self):
        ds = make_cwm2(1, n=60)
        params = initialize(ds, 3, "random_rows", RandomSource(0))
        resp, _ = e_step(ds, params)
        assert np.allclose(resp.sum(axis=1), 1.0, atol=1e-12)


class TestMStep:
    def test_uniform_responsibilities_single_model(self):
        gen = np.random.default_rng(4)
        X = gen.standard_normal((40, 2))
        y = 1.0 + X @ np.array([2.0, -1.0]) + gen.normal(0, 0.3, 40)
        data = LabeledDataset(features=X, response=y)
        params, reg = m_step(data, np.ones((40, 1)), "VVV")
        assert not reg
        assert params.weights[0] == 1.0
        assert np.allclose(params.means[0], X.mean(axis=0), atol=1e-12)
        dev = X - X.mean(axis=0)
        assert np.allclose(params.covariances[0], dev.T @ dev / 40, atol=1e-12)
        Xt = np.column_stack([np.ones(40), X])
        beta_ols = np.linalg.solve(Xt.T @ Xt, Xt.T @ y)
        assert np.allclose(params.reg_coeffs[0], beta_ols, atol=1e-10)

    def test_hard_responsibilities_equal_per_subset_fits(self):
        ds = make_cwm2(5, n=80)
        labels = ds.reference_labels
        resp = np.zeros((80, 2))
        resp[np.arange(80), labels - 1] = 1.0
        params, _ = m_step(ds, resp, "VVV")
        for g in range(2):
            mask = labels == g + 1
            Xg, yg = ds.features[mask], ds.response[mask]
            assert np.allclose(params.means[g], Xg.mean(axis=0), atol=1e-10)
            Xt = np.column_stack([np.ones(mask.sum()), Xg])
            beta = np.linalg.solve(Xt.T @ Xt, Xt.T @ yg)
            assert np.allclose(params.reg_coeffs[g], beta, atol=1e-10)
            dev = Xg - Xg.mean(axis=0)
            assert np.allclose(params.covariances[g], dev.T @ dev / mask.sum(), atol=1e-10)

    def test_noiseless_linear_hits_floor(self):
        gen = np.random.default_rng(6)
        x = gen.standard_normal((30, 1))
        y = 2.0 + 3.0 * x[:, 0]
        data = LabeledDataset(features=x, response=y)
        params, _ = m_step(data, np.ones((30, 1)), "VVV")
        assert np.allclose(params.reg_coeffs[0], [2.0, 3.0], atol=1e-10)
        assert params.output_vars[0] == pytest.approx(1e-10 * np.var(y), rel=1e-9)

    def test_zero_mass_component_rejected(self):
        ds = make_cwm2(7, n=20)
        resp = np.zeros((20, 2))
        resp[:, 0] = 1.0
        with pytest.raises(DegeneracyError):
            m_step(ds, resp, "VVV")


class TestInitialize:
    def test_means_are_data_rows(self):
        ds = make_cwm2(8, n=100)
        params = initialize(ds, 3, "random_rows", RandomSource(1))
        assert np.allclose(params.weights, 1 / 3)
        for mu in params.means:
            assert np.any(np.all(np.isclose(ds.features, mu, atol=0), axis=1))
        assert len({tuple(m) for m in params.means}) == 3

    def test_same_seed_identical(self):
        ds = make_cwm2(9, n=50)
        a = initialize(ds, 2, "kmeans_like", RandomSource(5))
        b = initialize(ds, 2, "kmeans_like", RandomSource(5))
        assert np.array_equal(a.means, b.means)
        assert np.array_equal(a.reg_coeffs, b.reg_coeffs)

    def test_g1_fit_converges_to_global_ols(self):
        gen = np.random.default_rng(10)
        X = gen.standard_normal((120, 2))
        y = 0.5 + X @ np.array([1.0, -2.0]) + gen.normal(0, 0.4, 120)
        ds = LabeledDataset(features=X, response=y)
        params = initialize(ds, 1, "random_rows", RandomSource(2))
        assert np.any(np.all(np.isclose(X, params.means[0]), axis=1))
        res = fit(ds, 1, "VVV", n_starts=1, rng=RandomSource(3))
        Xt = np.column_stack([np.ones(120), X])
        beta_ols = np.linalg.solve(Xt.T @ Xt, Xt.T @ y)
        assert np.allclose(res.params.reg_coeffs[0], beta_ols, atol=1e-8)

    def test_g_exceeds_n(self):
        ds = make_cwm2(11, n=10)
        with pytest.raises(ConfigError):
            initialize(ds, 11, "random_rows", RandomSource(0))


class TestFit:
    def test_g1_monte_carlo_beta_recovery(self):
        """At N=2000 the fitted slope must sit within 3 standard errors."""
        gen = np.random.default_rng(12)
        X = gen.standard_normal((2000, 2))
        beta_true = np.array([0.7, 2.0, -1.0])
        sigma = 0.8
        y = beta_true[0] + X @ beta_true[1:] + gen.normal(0, sigma, 2000)
        ds = LabeledDataset(features=X, response=y)
        res = fit(ds, 1, "VVV", n_starts=1, rng=RandomSource(0))
        Xt = np.column_stack([np.ones(2000), X])
        se = sigma * np.sqrt(np.diag(np.linalg.inv(Xt.T @ Xt)))
        assert np.all(np.abs(res.params.reg_coeffs[0] - beta_true) < 3 * se)

    def test_two_component_recovery(self):
        ds = make_cwm2(13, n=500)
        res = fit(ds, 2, "VVV", n_starts=5, rng=RandomSource(1))
        ari = score_partitions(res.hard_labels, ds.reference_labels)["ha"]
        assert ari >= 0.95

    def test_monotone_trace_on_duplicated_single_cluster(self):
        gen = np.random.default_rng(14)
        X = gen.standard_normal((30, 2))
        y = X @ np.array([1.0, 1.0]) + gen.normal(0, 0.2, 30)
        X2 = np.vstack([X, X + gen.normal(0, 1e-3, X.shape)])
        y2 = np.concatenate([y, y + gen.normal(0, 1e-3, 30)])
        ds = LabeledDataset(features=X2, response=y2)
        res = fit(ds, 2, "VVV", n_starts=3, tol=1e-8, rng=RandomSource(2))
        assert np.all(np.diff(res.loglik_trace) > -1e-8)

    def test_deterministic(self):
        ds = make_cwm2(15, n=120)
        a = fit(ds, 2, "VVI", n_starts=3, rng=RandomSource(9))
        b = fit(ds, 2, "VVI", n_starts=3, rng=RandomSource(9))
        assert np.array_equal(a.loglik_trace, b.loglik_trace)
        assert np.array_equal(a.hard_labels, b.hard_labels)

    def test_nested_model_loglik_ordering(self):
        ds = make_cwm2(16, n=200)
        kwargs = dict(n_starts=3, rng=RandomSource(4))
        ll_eii = fit(ds, 2, "EII", **kwargs).loglik
        ll_vvv = fit(ds, 2, "VVV", **kwargs).loglik
        assert ll_vvv >= ll_eii - 1e-6

    def test_e_then_m_reproduces_single_model_mle(self):
        gen = np.random.default_rng(17)
        X = gen.standard_normal((60, 2))
        y = 1.0 + X @ np.array([0.5, 0.5]) + gen.normal(0, 0.3, 60)
        ds = LabeledDataset(features=X, response=y)
        params = initialize(ds, 1, "random_rows", RandomSource(5))
        resp, _ = e_step(ds, params)
        new_params, _ = m_step(ds, resp, "VVV")
        dev = X - X.mean(axis=0)
        assert np.allclose(new_params.means[0], X.mean(axis=0), atol=1e-10)
        assert np.allclose(new_params.covariances[0], dev.T @ dev / 60, atol=1e-10)

    def test_all_starts_degenerate_aggregated(self):
        # constant response: initialization cannot set a positive output variance
        X = np.arange(20.0).reshape(10, 2)
        ds = LabeledDataset(features=X, response=np.ones(10))
        with pytest.raises(DegeneracyError, match="all 2 starts"):
            fit(ds, 2, "VVV", n_starts=2, rng=RandomSource(0))

    def test_hard_labels_match_argmax(self):
        ds = make_cwm2(18, n=150)
        res = fit(ds, 2, "VVV", n_starts=2, rng=RandomSource(3))
        assert np.array_equal(res.hard_labels, np.argmax(res.responsibilities, axis=1) + 1)
        assert set(res.hard_labels) <= {1, 2}


class TestPredictCluster:
    def test_single_component(self):
        data = LabeledDataset(features=np.zeros((5, 2)) + np.arange(10).reshape(5, 2), response=np.ones(5))
        params = single_component_params(sigma2=2.0)
        assert np.array_equal(predict_cluster(params, data), np.ones(5, dtype=int))

    def test_argmax_picks_heavier_component(self):
        params = CwmParams(
            weights=np.array([0.2, 0.8]),
            means=np.zeros((2, 1)),
            covariances=np.array([np.eye(1), np.eye(1)]),
            reg_coeffs=np.zeros((2, 2)),
            output_vars=np.array([1.0, 1.0]),
            cov_model="VVV",
        )
        data = LabeledDataset(features=np.zeros((3, 1)), response=np.zeros(3))
        # identical densities, weight 0.8 wins: label 2
        assert np.array_equal(predict_cluster(params, data), [2, 2, 2])

    def test_tie_breaks_toward_lowest(self):
        params = CwmParams(
            weights=np.array([0.5, 0.5]),
            means=np.zeros((2, 1)),
            covariances=np.array([np.eye(1), np.eye(1)]),
            reg_coeffs=np.zeros((2, 2)),
            output_vars=np.array([1.0, 1.0]),
            cov_model="VVV",
        )
        data = LabeledDataset(features=np.zeros((2, 1)), response=np.zeros(2))
        assert np.array_equal(predict_cluster(params, data), [1, 1])

    def test_row_shift_invariance(self):
        ds = make_cwm2(19, n=40)
        params = initialize(ds, 2, "random_rows", RandomSource(7))
        ll = component_log_densities(ds, params)
        labels = np.argmax(ll, axis=1)
        shifted = ll + np.linspace(-3, 3, 40)[:, None]  # common per-row shift
        assert np.array_equal(np.argmax(shifted, axis=1), labels)


class TestParamsValidation:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(DegeneracyError):
            CwmParams(
                weights=np.array([0.5, 0.4]),
                means=np.zeros((2, 1)),
                covariances=np.array([np.eye(1), np.eye(1)]),
                reg_coeffs=np.zeros((2, 2)),
                output_vars=np.array([1.0, 1.0]),
                cov_model="VVV",
            )

    def test_output_vars_positive(self):
        with pytest.raises(DegeneracyError):
            single_component_params(sigma2=0.0)
