import numpy as np
import pytest

from wqte.errors import ArgumentError, UsageError
from wqte.rngs import substream
from wqte.simlab import (
    SIGMA4,
    ErrorSpec,
    available_presets,
    gen_confounders,
    gen_dataset,
    gen_error,
    gen_exposure,
    gen_outcome,
    parse_scenario,
    true_binary_ps,
    true_categorical_ps,
    true_effects,
    true_qte_oracle,
    true_wqte_oracle,
)


class TestScenarioParsing:
    def test_round_trip_all_presets(self):
        for key in available_presets():
            scenario = parse_scenario(key)
            assert scenario.key == key

    def test_bad_keys_rejected(self):
        for key in ("bogus", "binary-weak-d2-nointer-pareto5",
                    "cat-weak-d1-inter-pareto5", "binary-weak-d1-nointer-pareto2"):
            with pytest.raises(UsageError):
                parse_scenario(key)

    def test_student_t_grammar(self):
        scenario = parse_scenario("binary-weak-d1-nointer-t4")
        assert scenario.error.dist == "student_t"
        assert scenario.error.df == 4.0


class TestGenerators:
    def test_confounder_covariance_d4(self):
        scenario = parse_scenario("binary-weak-d4-nointer-pareto5")
        X = gen_confounders(scenario, 1_000_000, substream(1))
        cov = np.cov(X.T)
        assert cov[0, 1] == pytest.approx(0.5, abs=0.01)
        assert np.all(np.abs(cov - SIGMA4) < 0.01)

    def test_confounder_mean_d1(self):
        scenario = parse_scenario("binary-weak-d1-nointer-pareto5")
        n = 40_000
        X = gen_confounders(scenario, n, substream(2))
        assert abs(X.mean()) < 3.0 / np.sqrt(n)

    def test_determinism(self):
        scenario = parse_scenario("cat-strong-d4-nointer-pareto7")
        d1 = gen_dataset(scenario)
        d2 = gen_dataset(scenario)
        assert np.array_equal(d1.y, d2.y)
        assert np.array_equal(d1.exposure, d2.exposure)
        assert np.array_equal(d1.covariates, d2.covariates)

    def test_binary_exposure_prevalences(self):
        # about 62% exposed under weak confounding, 58% under strong
        for conf, target in (("weak", 0.62), ("strong", 0.58)):
            scenario = parse_scenario(f"binary-{conf}-d1-nointer-pareto5")
            rng = substream(3)
            X = gen_confounders(scenario, 1_000_000, rng)
            z = gen_exposure(scenario, X, rng)
            assert z.mean() == pytest.approx(target, abs=0.01)

    def test_categorical_exposure_prevalences(self):
        scenario = parse_scenario("cat-weak-d1-nointer-pareto5")
        rng = substream(4)
        X = gen_confounders(scenario, 1_000_000, rng)
        z = gen_exposure(scenario, X, rng)
        props = [(z == j).mean() for j in (1.0, 2.0, 3.0)]
        assert props == pytest.approx([0.23, 0.39, 0.38], abs=0.01)

    def test_pareto_support_mean_and_quantile(self):
        spec = ErrorSpec("pareto", location=1.0, shape=5.0)
        eps = gen_error(spec, 1_000_000, substream(5))
        assert eps.min() >= 1.0
        assert eps.mean() == pytest.approx(5.0 / 4.0, abs=0.01)
        assert np.quantile(eps, 0.95) == pytest.approx(20.0 ** 0.2, abs=0.01)

    def test_error_argument_validation(self):
        with pytest.raises(ArgumentError):
            gen_error(ErrorSpec("pareto", shape=-1.0), 10, substream(6))
        with pytest.raises(ArgumentError):
            gen_error(ErrorSpec("student_t", df=0.0), 10, substream(6))

    def test_outcome_formulas(self):
        binary = parse_scenario("binary-weak-d1-nointer-pareto5")
        y = gen_outcome(binary, np.zeros((1, 1)), np.ones(1), np.ones(1))
        assert y[0] == pytest.approx(3.0)

        inter = parse_scenario("binary-weak-d1-inter-pareto5")
        y = gen_outcome(inter, np.full((1, 1), 2.0), np.ones(1), np.ones(1))
        assert y[0] == pytest.approx(7.0)  # 1 + 1 + 2 + 2 + 1

        multi = parse_scenario("binary-weak-d4-nointer-pareto5")
        y = gen_outcome(multi, np.zeros((1, 4)), np.ones(1), np.ones(1))
        assert y[0] == pytest.approx(3.0)

        cat = parse_scenario("cat-weak-d1-nointer-pareto5")
        y = gen_outcome(cat, np.zeros((1, 1)), np.full(1, 3.0), np.ones(1))
        assert y[0] == pytest.approx(1.0)  # 1 - 1 + 0 + 1

    def test_dose_model_moments(self):
        scenario = parse_scenario("cont-weak-d1-nointer-pareto5")
        rng = substream(7)
        X = gen_confounders(scenario, 500_000, rng)
        z = gen_exposure(scenario, X, rng)
        # z = 1 + 0.3 x + sqrt(5) * noise
        assert z.mean() == pytest.approx(1.0, abs=0.01)
        assert z.var() == pytest.approx(5.0 + 0.09, abs=0.05)


class TestOracles:
    def test_homogeneous_presets_give_unit_effect(self):
        scenario = parse_scenario("binary-weak-d1-nointer-pareto5")
        assert true_qte_oracle(scenario, 0.95, n_mc=1_000_000, seed=8) == \
            pytest.approx(1.0, abs=0.01)

    def test_categorical_contrasts(self):
        scenario = parse_scenario("cat-weak-d1-nointer-pareto5")
        q2v1, q3v1 = true_qte_oracle(scenario, 0.95, n_mc=1_000_000, seed=9)
        assert q2v1 == pytest.approx(1.0, abs=0.01)
        assert q3v1 == pytest.approx(-1.0, abs=0.01)

    def test_uniform_wqte_equals_qte(self):
        scenario = parse_scenario("binary-strong-d1-inter-pareto5")
        a = true_qte_oracle(scenario, 0.95, n_mc=200_000, seed=10)
        b = true_wqte_oracle(scenario, "uniform", 0.95, n_mc=200_000, seed=10)
        assert a == b

    def test_homogeneous_overlap_wqte_equals_qte(self):
        scenario = parse_scenario("binary-weak-d1-nointer-pareto5")
        qte = true_qte_oracle(scenario, 0.95, n_mc=1_000_000, seed=11)
        wqte = true_wqte_oracle(scenario, "overlap", 0.95, n_mc=1_000_000, seed=11)
        assert wqte == pytest.approx(qte, abs=0.02)

    def test_interaction_overlap_gap_matches_frozen_constant(self):
        scenario = parse_scenario("binary-weak-d1-inter-pareto5")
        truth = true_effects(scenario, 0.95)
        gap = abs(truth["qte"] - truth["wqte_overlap"])
        assert gap == pytest.approx(0.19, abs=0.02)

    def test_oracle_stability_across_seeds(self):
        scenario = parse_scenario("binary-weak-d1-inter-pareto5")
        a = true_qte_oracle(scenario, 0.95, n_mc=1_000_000, seed=12)
        b = true_qte_oracle(scenario, 0.95, n_mc=1_000_000, seed=13)
        assert a == pytest.approx(b, abs=0.02)

    def test_frozen_effects_for_homogeneous_presets_are_exact(self):
        assert true_effects(parse_scenario("binary-weak-d1-nointer-pareto5"), 0.95) == {
            "qte": 1.0, "wqte_overlap": 1.0, "method": "analytic",
        }
        truth = true_effects(parse_scenario("cat-strong-d4-nointer-pareto10"), 0.95)
        assert truth["qte"] == (1.0, -1.0)

    def test_continuous_truth_is_unit_slope(self):
        scenario = parse_scenario("cont-strong-d4-nointer-pareto5")
        assert true_qte_oracle(scenario, 0.95) == 1.0


def test_generated_ps_is_calibrated():
    # decile-mean exposure matches decile-mean PS: the DGP draws from its own model
    scenario = parse_scenario("binary-strong-d1-nointer-pareto5")
    rng = substream(14)
    X = gen_confounders(scenario, 100_000, rng)
    z = gen_exposure(scenario, X, rng)
    e = true_binary_ps(scenario, X)
    edges = np.quantile(e, np.linspace(0, 1, 11))
    for lo, hi in zip(edges[:-1], edges[1:]):
        mask = (e >= lo) & (e <= hi)
        if mask.sum() > 100:
            assert abs(z[mask].mean() - e[mask].mean()) < 0.02


def test_categorical_true_ps_rows_sum_to_one():
    scenario = parse_scenario("cat-weak-d4-nointer-pareto5")
    X = gen_confounders(scenario, 1_000, substream(15))
    scores = true_categorical_ps(scenario, X)
    assert np.allclose(scores.sum(axis=1), 1.0, atol=1e-12)
