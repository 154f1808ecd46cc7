"""Effect-estimator pipeline contracts: plugins, cross-fitting, DR and R stages."""

import numpy as np
import pytest

from hetfx.dgp import DGPConfig, generate
from hetfx.effects import (
    DEFAULT_POLICY,
    TargetParameter,
    feasible_range,
)
from hetfx.harness import sample_dataset, true_nuisance_oracle
from hetfx.metalearners import (
    CrossFitPlan,
    DegenerateSampleError,
    EstimatorFamily,
    EstimatorSpec,
    Sample,
    crossfit_nuisances,
    fit_dr_direct,
    fit_estimator,
    fit_plugin_model,
    fit_r_direct,
    standard_estimators,
)

PARAMS = tuple(TargetParameter)


@pytest.fixture(scope="module")
def dist():
    return generate(DGPConfig(inter_order=1, tx_inter=True, seed=77))


@pytest.fixture(scope="module")
def sample(dist):
    rng = np.random.default_rng(123)
    return sample_dataset(dist, 600, rng)


# ---------------------------------------------------------------------------
# Specs and labels
# ---------------------------------------------------------------------------


def test_standard_estimator_labels():
    labels = list(standard_estimators())
    assert labels == [
        "LR",
        "LR-T",
        "SL",
        "SL-T",
        "DR-P",
        "DR-CATE",
        "DR-LOR",
        "DR-LRR",
        "R-CATE",
        "R-LOR",
        "R-LRR",
    ]
    extended = standard_estimators(include_ratio_scale=True)
    for label in ("DR-OR", "DR-RR", "R-OR", "R-RR"):
        assert label in extended
    assert extended["DR-LOR"].param is TargetParameter.LOG_OR
    assert extended["R-CATE"].param is TargetParameter.ATE
    assert extended["LR"].param is None


def test_direct_specs_require_parameter():
    with pytest.raises(ValueError):
        EstimatorSpec(EstimatorFamily.DR_DIRECT)
    with pytest.raises(ValueError):
        EstimatorSpec(EstimatorFamily.R_DIRECT)
    EstimatorSpec(EstimatorFamily.PLUGIN_LR)  # plugins need no parameter


def test_sample_validation():
    with pytest.raises(ValueError):
        Sample(X=np.zeros((3, 2)), t=np.array([0.0, 1.0, 2.0]), y=np.zeros(3))
    with pytest.raises(ValueError):
        Sample(X=np.zeros((3, 2)), t=np.zeros(3), y=np.array([0.5, 0.0, 1.0]))
    ok = Sample(
        X=np.zeros((3, 2)), t=np.array([0.0, 1.0, 1.0]), y=np.array([1.0, 0.0, 1.0])
    )
    assert ok.n == 3 and ok.arms_present()


def test_crossfit_plan_partition():
    plan = CrossFitPlan.from_seed(11, seed=9)
    merged = np.sort(np.concatenate([plan.half_a, plan.half_b]))
    assert merged.tolist() == list(range(11))
    assert abs(len(plan.half_a) - len(plan.half_b)) <= 1
    with pytest.raises(ValueError):
        CrossFitPlan(half_a=np.array([0, 1]), half_b=np.array([1, 2]))


# ---------------------------------------------------------------------------
# Plugins
# ---------------------------------------------------------------------------


def test_pooled_full_interactions_equal_stratified_fits(sample):
    pooled = fit_plugin_model(
        EstimatorFamily.PLUGIN_LR, sample, full_interactions=True
    )
    stratified = fit_plugin_model(EstimatorFamily.PLUGIN_LR_T, sample)
    grid = sample.X[:100]
    for a, b in zip(pooled.predict_probs(grid), stratified.predict_probs(grid)):
        assert a == pytest.approx(b, abs=1e-9)


def test_plugin_probabilities_respect_outcome_clamp(sample):
    for family in (EstimatorFamily.PLUGIN_LR, EstimatorFamily.PLUGIN_LR_T):
        model = fit_plugin_model(family, sample)
        p1, p0 = model.predict_probs(sample.X)
        lo, hi = DEFAULT_POLICY.outcome_clamp
        assert np.all((p1 >= lo) & (p1 <= hi))
        assert np.all((p0 >= lo) & (p0 <= hi))


def test_plugin_effect_models_stay_in_feasible_range(sample):
    model = fit_plugin_model(EstimatorFamily.PLUGIN_LR, sample)
    for param in PARAMS:
        effect = model.effect_model(param)
        values = effect.predict(sample.X)
        lo, hi = feasible_range(param, DEFAULT_POLICY)
        assert np.all((values >= lo) & (values <= hi))


def test_plugin_comparison_scale_is_log_for_ratios(sample):
    model = fit_plugin_model(EstimatorFamily.PLUGIN_LR, sample)
    grid = sample.X[:50]
    or_model = model.effect_model(TargetParameter.OR)
    log_or_model = model.effect_model(TargetParameter.LOG_OR)
    assert or_model.predict_comparison(grid) == pytest.approx(
        np.log(or_model.predict(grid)), rel=1e-12
    )
    # OR reported on the log scale coincides with the LogOR surface
    assert or_model.predict_comparison(grid) == pytest.approx(
        log_or_model.predict(grid), rel=1e-10, abs=1e-10
    )
    ate_model = model.effect_model(TargetParameter.ATE)
    assert ate_model.predict_comparison(grid) == pytest.approx(
        ate_model.predict(grid), rel=1e-15
    )


def test_plugin_row_order_invariance(sample):
    """The fold-free pooled logistic plugin is invariant to row shuffling."""
    rng = np.random.default_rng(55)
    perm = rng.permutation(sample.n)
    shuffled = Sample(X=sample.X[perm], t=sample.t[perm], y=sample.y[perm])
    base = fit_plugin_model(EstimatorFamily.PLUGIN_LR, sample)
    moved = fit_plugin_model(EstimatorFamily.PLUGIN_LR, shuffled)
    grid = sample.X[:100]
    for a, b in zip(base.predict_probs(grid), moved.predict_probs(grid)):
        assert a == pytest.approx(b, abs=1e-9)


def test_effect_model_rejects_wrong_parameter(sample):
    spec = standard_estimators()["DR-LOR"]
    plan = CrossFitPlan.from_seed(sample.n, seed=1)
    fitted = fit_estimator(spec, sample, plan=plan, seed=1)
    assert fitted.effect_model(TargetParameter.LOG_OR) is fitted
    with pytest.raises(ValueError):
        fitted.effect_model(TargetParameter.ATE)


# ---------------------------------------------------------------------------
# Cross-fitted nuisances
# ---------------------------------------------------------------------------


def test_oracle_injection_returns_truncated_truth(dist, sample):
    plan = CrossFitPlan.from_seed(sample.n, seed=3)
    oracle = true_nuisance_oracle(dist)
    field = crossfit_nuisances(sample, plan, oracle=oracle)
    p1, p0, e = oracle(sample.X)
    assert field.q1 == pytest.approx(DEFAULT_POLICY.clamp_outcome(p1), abs=0)
    assert field.q0 == pytest.approx(DEFAULT_POLICY.clamp_outcome(p0), abs=0)
    assert field.pi == pytest.approx(DEFAULT_POLICY.clamp_propensity(e), abs=0)


def test_crossfit_nuisances_are_truncated(sample):
    plan = CrossFitPlan.from_seed(sample.n, seed=4)
    field = crossfit_nuisances(sample, plan, seed=4)
    lo, hi = DEFAULT_POLICY.outcome_clamp
    assert np.all((field.q1 >= lo) & (field.q1 <= hi))
    assert np.all((field.q0 >= lo) & (field.q0 <= hi))
    plo, phi = DEFAULT_POLICY.propensity_clamp
    assert np.all((field.pi >= plo) & (field.pi <= phi))


def test_single_arm_half_raises_degenerate():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(40, 2))
    t = np.concatenate([np.zeros(20), np.ones(20)])
    y = (rng.random(40) < 0.5).astype(float)
    y[0], y[1] = 0.0, 1.0  # both labels present overall
    sample = Sample(X=X, t=t, y=y)
    plan = CrossFitPlan(half_a=np.arange(20), half_b=np.arange(20, 40))
    with pytest.raises(DegenerateSampleError):
        crossfit_nuisances(sample, plan, seed=0)


# ---------------------------------------------------------------------------
# DR and R second stages
# ---------------------------------------------------------------------------


def test_dr_equals_r_under_constant_propensity(dist, sample):
    """Constant pi-hat makes the overlap weights constant, so the weighted
    second stage normalizes back to the unweighted one bit-for-bit."""
    plan = CrossFitPlan.from_seed(sample.n, seed=6)

    def constant_oracle(X):
        p1, p0, _ = true_nuisance_oracle(dist)(X)
        return p1, p0, np.full(len(X), 0.5)

    grid = dist.features()
    for param in (TargetParameter.ATE, TargetParameter.LOG_OR):
        dr = fit_dr_direct(
            sample, plan, param, seed=42, oracle_nuisances=constant_oracle
        )
        rl = fit_r_direct(
            sample, plan, param, seed=42, oracle_nuisances=constant_oracle
        )
        assert dr.predict(grid).tolist() == rl.predict(grid).tolist()


def test_direct_predictions_stay_in_feasible_range(sample):
    plan = CrossFitPlan.from_seed(sample.n, seed=7)
    for label in ("DR-CATE", "DR-LOR", "R-LRR"):
        spec = standard_estimators()[label]
        fitted = fit_estimator(spec, sample, plan=plan, seed=7)
        values = fitted.predict(sample.X)
        lo, hi = feasible_range(spec.param, DEFAULT_POLICY)
        assert np.all((values >= lo) & (values <= hi))


def test_direct_families_require_plan(sample):
    spec = standard_estimators()["DR-LOR"]
    with pytest.raises(ValueError):
        fit_estimator(spec, sample, plan=None, seed=0)


def test_fit_estimator_deterministic(dist, sample):
    plan = CrossFitPlan.from_seed(sample.n, seed=9)
    spec = standard_estimators()["DR-P"]
    grid = dist.features()[:200]
    a = fit_estimator(spec, sample, plan=plan, seed=13)
    b = fit_estimator(spec, sample, plan=plan, seed=13)
    pa = a.effect_model(TargetParameter.LOG_OR).predict(grid)
    pb = b.effect_model(TargetParameter.LOG_OR).predict(grid)
    assert pa.tolist() == pb.tolist()


def test_oracle_nuisances_improve_direct_fit(dist):
    """With exact nuisances the pseudo-outcome is centered on the truth, so
    the fitted surface should track theta decently even at moderate n."""
    rng = np.random.default_rng(31)
    sample = sample_dataset(dist, 2000, rng)
    plan = CrossFitPlan.from_seed(sample.n, seed=2)
    oracle = true_nuisance_oracle(dist)
    fitted = fit_dr_direct(
        sample, plan, TargetParameter.ATE, seed=3, oracle_nuisances=oracle
    )
    grid = dist.features()
    theta = dist.theta(TargetParameter.ATE)
    mse = float(np.dot(dist.p_x, (fitted.predict(grid) - theta) ** 2))
    spread = float(np.dot(dist.p_x, (theta - np.dot(dist.p_x, theta)) ** 2))
    assert mse < max(0.5 * spread, 0.01)
