import numpy as np
import pytest

from tsnecwm import (
    CRITERIA,
    MODEL_CODES,
    ConfigError,
    DegeneracyError,
    FitConfig,
    RandomSource,
    count_parameters,
    fit,
    information_criteria,
    param_count,
    sweep,
)
from tsnecwm.cwm import FitResult
from tsnecwm.selection import NOT_ESTIMATED
import tsnecwm.selection as selection_mod
from conftest import make_cwm2


def fitted(seed=0, G=2, model="VVV", n=120):
    ds = make_cwm2(seed, n=n)
    return fit(ds, G, model, n_starts=2, rng=RandomSource(seed))


class TestCountParameters:
    def test_seizure_scale_total(self):
        # G=5, d=178, VVV: (G-1) + Gd + cov + G(d+1) + G
        total = (5 - 1) + 5 * 178 + param_count("VVV", 178, 5) + 5 * 179 + 5
        assert total == 4 + 890 + 79655 + 895 + 5 == 81449

    def test_minimal_eii(self):
        # G=1, d=1, EII: 0 weights + 1 mean + 1 covariance + 2 coefficients + 1 variance
        assert 0 + 1 + param_count("EII", 1, 1) + 2 + 1 == 5

    def test_on_fit_result(self):
        res = fitted()
        # G=2, d=2: 1 + 4 + param_count(VVV,2,2)=6 + 6 + 2 = 19
        assert count_parameters(res) == 19

    def test_vvv_dominates_all_models(self):
        for d, G in ((2, 3), (5, 4), (10, 2)):
            vvv = param_count("VVV", d, G)
            for m in MODEL_CODES:
                assert param_count(m, d, G) <= vvv

    def test_strictly_increasing_in_g(self):
        for m in MODEL_CODES:
            counts = [
                (G - 1) + G * 3 + param_count(m, 3, G) + G * 4 + G for G in range(1, 8)
            ]
            assert np.all(np.diff(counts) > 0)


class TestInformationCriteria:
    def test_formula_oracle(self):
        res = fitted(seed=1)
        cs = information_criteria(res)
        k, ll, n = cs.n_params, cs.loglik, cs.N
        r_hard = res.responsibilities[np.arange(res.N), res.hard_labels - 1]
        ent = np.sum(np.log(r_hard))
        assert cs.values["BIC"] == pytest.approx(2 * ll - k * np.log(n), rel=1e-12)
        assert cs.values["AIC"] == pytest.approx(2 * ll - 2 * k, rel=1e-12)
        assert cs.values["AIC3"] == pytest.approx(2 * ll - 3 * k, rel=1e-12)
        assert cs.values["AICc"] == pytest.approx(
            2 * ll - 2 * k - 2 * k * (k + 1) / (n - k - 1), rel=1e-12
        )
        assert cs.values["AICu"] == pytest.approx(
            cs.values["AICc"] - n * np.log(n / (n - k - 1)), rel=1e-12
        )
        assert cs.values["CAIC"] == pytest.approx(2 * ll - k * (1 + np.log(n)), rel=1e-12)
        assert cs.values["AWE"] == pytest.approx(
            2 * (ll + ent) - 2 * k * (1.5 + np.log(n)), rel=1e-12
        )
        assert cs.values["ICL"] == pytest.approx(cs.values["BIC"] + 2 * ent, rel=1e-12)

    def test_hard_responsibilities_make_icl_equal_bic(self):
        res = fitted(seed=2)
        hard = np.zeros_like(res.responsibilities)
        hard[np.arange(res.N), res.hard_labels - 1] = 1.0
        forced = FitResult(
            params=res.params,
            loglik_trace=res.loglik_trace,
            responsibilities=hard,
            converged=res.converged,
            n_iterations=res.n_iterations,
            hard_labels=res.hard_labels,
            regularized=res.regularized,
        )
        cs = information_criteria(forced)
        assert cs.values["ICL"] == cs.values["BIC"]

    @pytest.mark.parametrize("seed", range(4))
    def test_icl_at_most_bic(self, seed):
        cs = information_criteria(fitted(seed=seed))
        assert cs.values["ICL"] <= cs.values["BIC"]

    def test_small_sample_criteria_absent(self):
        res = fitted(seed=3, n=24)  # k=19 with G=2, d=2; N=24 > k+1 -> defined
        assert information_criteria(res).values["AICc"] is not None
        small = fitted(seed=3, n=20)  # N=20 <= k+1=20 -> absent
        cs = information_criteria(small)
        assert cs.values["AICc"] is None and cs.values["AICu"] is None
        assert cs.values["BIC"] is not None

    def test_unknown_criterion(self):
        with pytest.raises(ConfigError):
            information_criteria(fitted(), criteria=["BIC", "XYZ"])


class TestSweep:
    def test_single_cell_trivially_best(self):
        ds = make_cwm2(4, n=80)
        res = sweep(ds, [1], models=["VVV"], fit_config=FitConfig(n_starts=1), rng=RandomSource(0))
        assert len(res.cells) == 1
        assert res.best["BIC"].G == 1 and res.best["BIC"].model == "VVV"

    def test_full_grid_has_112_cells(self):
        ds = make_cwm2(5, n=60)
        res = sweep(
            ds,
            range(1, 9),
            models="all",
            fit_config=FitConfig(n_starts=1, max_iter=30),
            rng=RandomSource(1),
        )
        assert len(res.cells) == 112
        assert {c.model for c in res.cells} == set(MODEL_CODES)
        assert {c.G for c in res.cells} == set(range(1, 9))

    def test_cells_independent_of_grid_composition(self):
        ds = make_cwm2(6, n=100)
        cfg = FitConfig(n_starts=2, max_iter=100)
        full = sweep(ds, [1, 2, 3], models=["EII", "VVI", "VVV"], fit_config=cfg, rng=RandomSource(2))
        sub = sweep(ds, [2], models=["VVV", "EII"], fit_config=cfg, rng=RandomSource(2))
        for model in ("EII", "VVV"):
            a = full.cell(2, model)
            b = sub.cell(2, model)
            assert a.criteria.loglik == b.criteria.loglik
            assert a.criteria.values["BIC"] == b.criteria.values["BIC"]

    def test_adding_criteria_never_changes_fits(self):
        ds = make_cwm2(7, n=80)
        cfg = FitConfig(n_starts=1)
        only_bic = sweep(ds, [1, 2], models=["VVI"], fit_config=cfg, rng=RandomSource(3), criteria=["BIC"])
        all_crit = sweep(ds, [1, 2], models=["VVI"], fit_config=cfg, rng=RandomSource(3), criteria=CRITERIA)
        for G in (1, 2):
            assert only_bic.cell(G, "VVI").criteria.loglik == all_crit.cell(G, "VVI").criteria.loglik

    def test_failed_cell_marked_not_estimated(self, monkeypatch):
        ds = make_cwm2(8, n=80)
        real_fit = selection_mod.fit

        def flaky(data, G, **kwargs):
            if G == 2:
                raise DegeneracyError("synthetic failure for testing")
            return real_fit(data, G, **kwargs)

        monkeypatch.setattr(selection_mod, "fit", flaky)
        res = sweep(ds, [1, 2], models=["VVV"], fit_config=FitConfig(n_starts=1), rng=RandomSource(4))
        bad = res.cell(2, "VVV")
        assert bad.status == NOT_ESTIMATED
        assert "synthetic failure" in bad.reason
        assert res.cell(1, "VVV").status == "OK"

    def test_all_cells_failing_raises(self, monkeypatch):
        ds = make_cwm2(9, n=40)

        def always_fail(*args, **kwargs):
            raise DegeneracyError("nope")

        monkeypatch.setattr(selection_mod, "fit", always_fail)
        with pytest.raises(DegeneracyError, match="every sweep cell"):
            sweep(ds, [1], models=["VVV"], rng=RandomSource(5))

    def test_empty_g_range_rejected(self):
        ds = make_cwm2(10, n=40)
        with pytest.raises(ConfigError):
            sweep(ds, [], models=["VVV"], rng=RandomSource(6))

    def test_best_ignores_absent_values(self):
        ds = make_cwm2(11, n=20)  # tiny N: AICc undefined for G=2 (k=19)
        res = sweep(ds, [1, 2], models=["VVV"], fit_config=FitConfig(n_starts=1), rng=RandomSource(7))
        assert res.best["AICc"].G == 1
