"""Contrast, pseudo-outcome, and truncation-policy contracts."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetfx.effects import (
    DEFAULT_POLICY,
    NuisanceTriple,
    Observation,
    TargetParameter,
    TruncationPolicy,
    arm_pseudo_outcome,
    comparison_parameter,
    contrast,
    feasible_range,
    pseudo_outcome,
    pseudo_outcome_bound,
    rlearner_weight,
    truncate,
)

PARAMS = tuple(TargetParameter)

probs = st.floats(0.05, 0.95)
props = st.floats(0.01, 0.99)
bits = st.sampled_from([0, 1])
param_st = st.sampled_from(PARAMS)


# ---------------------------------------------------------------------------
# contrast
# ---------------------------------------------------------------------------


def test_contrast_hand_values():
    assert contrast(TargetParameter.OR, 0.5, 0.5) == 1.0
    assert contrast(TargetParameter.ATE, 0.8, 0.5) == pytest.approx(0.3, abs=1e-15)
    assert contrast(TargetParameter.OR, 0.8, 0.2) == pytest.approx(16.0, rel=1e-12)
    assert contrast(TargetParameter.RR, 0.8, 0.2) == pytest.approx(4.0, rel=1e-12)
    assert contrast(TargetParameter.LOG_OR, 0.8, 0.2) == pytest.approx(
        math.log(16.0), rel=1e-12
    )
    assert contrast(TargetParameter.LOG_RR, 0.8, 0.2) == pytest.approx(
        math.log(4.0), rel=1e-12
    )


@given(p1=st.floats(0.001, 0.999), p0=st.floats(0.001, 0.999))
@settings(max_examples=300, deadline=None)
def test_contrast_sign_agreement(p1, p0):
    """OR < 1 iff RR < 1 iff ATE < 0 iff p1 < p0: treatment directions agree."""
    below = p1 < p0
    assert (contrast(TargetParameter.OR, p1, p0) < 1.0) == below
    assert (contrast(TargetParameter.RR, p1, p0) < 1.0) == below
    assert (contrast(TargetParameter.ATE, p1, p0) < 0.0) == below
    assert (contrast(TargetParameter.LOG_OR, p1, p0) < 0.0) == below
    assert (contrast(TargetParameter.LOG_RR, p1, p0) < 0.0) == below


@given(p1=st.floats(0.001, 0.999), p0=st.floats(0.001, 0.999))
@settings(max_examples=200, deadline=None)
def test_contrast_log_consistency(p1, p0):
    assert contrast(TargetParameter.LOG_OR, p1, p0) == pytest.approx(
        math.log(contrast(TargetParameter.OR, p1, p0)), rel=1e-12, abs=1e-12
    )
    assert contrast(TargetParameter.LOG_RR, p1, p0) == pytest.approx(
        math.log(contrast(TargetParameter.RR, p1, p0)), rel=1e-12, abs=1e-12
    )


# ---------------------------------------------------------------------------
# pseudo-outcomes
# ---------------------------------------------------------------------------


def test_pseudo_outcome_hand_values():
    eta = NuisanceTriple(0.5, 0.5, 0.5)
    assert pseudo_outcome(
        TargetParameter.LOG_OR, Observation(t=1, y=1), eta
    ) == pytest.approx(4.0, abs=1e-15)
    assert pseudo_outcome(
        TargetParameter.ATE, Observation(t=1, y=1), eta
    ) == pytest.approx(1.0, abs=1e-15)
    assert pseudo_outcome(
        TargetParameter.OR, Observation(t=0, y=0), eta
    ) == pytest.approx(5.0, abs=1e-15)


def test_arm_pseudo_outcome_hand_values():
    assert arm_pseudo_outcome(
        1, Observation(t=0, y=1), NuisanceTriple(0.7, 0.5, 0.5)
    ) == pytest.approx(0.7, abs=1e-15)
    assert arm_pseudo_outcome(
        1, Observation(t=1, y=1), NuisanceTriple(0.5, 0.5, 0.5)
    ) == pytest.approx(1.5, abs=1e-15)
    assert arm_pseudo_outcome(
        0, Observation(t=0, y=0), NuisanceTriple(0.5, 0.2, 0.5)
    ) == pytest.approx(-0.2, abs=1e-15)


@given(t=bits, y=bits, q1=probs, q0=probs, pi=props)
@settings(max_examples=300, deadline=None)
def test_ate_pseudo_outcome_is_arm_difference(t, y, q1, q0, pi):
    obs = Observation(t=t, y=y)
    eta = NuisanceTriple(q1, q0, pi)
    assert pseudo_outcome(TargetParameter.ATE, obs, eta) == pytest.approx(
        arm_pseudo_outcome(1, obs, eta) - arm_pseudo_outcome(0, obs, eta),
        rel=1e-12,
        abs=1e-12,
    )


@pytest.mark.parametrize("param", PARAMS)
def test_pseudo_outcome_rejects_boundary_nuisances(param):
    obs = Observation(t=1, y=1)
    with pytest.raises(ValueError):
        pseudo_outcome(param, obs, NuisanceTriple(0.0, 0.5, 0.5))
    with pytest.raises(ValueError):
        pseudo_outcome(param, obs, NuisanceTriple(0.5, 1.0, 0.5))
    with pytest.raises(ValueError):
        pseudo_outcome(param, obs, NuisanceTriple(0.5, 0.5, 0.0))
    with pytest.raises(ValueError):
        pseudo_outcome(param, obs, NuisanceTriple(0.5, 0.5, 1.0))


@given(param=param_st, t=bits, y=bits, q1=probs, q0=probs, pi=props)
@settings(max_examples=500, deadline=None)
def test_pseudo_outcome_bounded_on_truncated_domain(param, t, y, q1, q0, pi):
    value = pseudo_outcome(param, Observation(t=t, y=y), NuisanceTriple(q1, q0, pi))
    assert math.isfinite(value)
    assert abs(value) <= pseudo_outcome_bound(param, DEFAULT_POLICY)


def test_log_or_bound_matches_closed_form():
    """B for LogOR: 2 log((1-c_y)/c_y) + 2/(c_y (1-c_y) c_e) at the defaults."""
    expected = 2.0 * math.log(0.95 / 0.05) + 2.0 / (0.05 * 0.95 * 0.01)
    assert pseudo_outcome_bound(
        TargetParameter.LOG_OR, DEFAULT_POLICY
    ) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(4216.415, abs=5e-4)


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------


def test_rlearner_weight_hand_values():
    assert rlearner_weight(0.5) == 0.25
    assert rlearner_weight(0.1) == pytest.approx(0.09, abs=1e-15)
    assert rlearner_weight(0.0) == 0.0
    assert rlearner_weight(1.0) == 0.0
    with pytest.raises(ValueError):
        rlearner_weight(-0.1)
    with pytest.raises(ValueError):
        rlearner_weight(1.1)


@given(pi=st.floats(0.0, 1.0))
@settings(max_examples=200, deadline=None)
def test_rlearner_weight_nonnegative_and_peaked(pi):
    value = rlearner_weight(pi)
    assert 0.0 <= value <= 0.25


# ---------------------------------------------------------------------------
# feasible ranges and truncation
# ---------------------------------------------------------------------------


def test_feasible_range_hand_values():
    lo, hi = feasible_range(TargetParameter.ATE, DEFAULT_POLICY)
    assert (lo, hi) == pytest.approx((-0.9, 0.9), abs=1e-12)
    lo, hi = feasible_range(TargetParameter.LOG_OR, DEFAULT_POLICY)
    assert hi == pytest.approx(math.log(361.0), rel=1e-12)
    assert lo == pytest.approx(-math.log(361.0), rel=1e-12)
    assert hi == pytest.approx(5.8889, abs=5e-4)
    lo, hi = feasible_range(TargetParameter.LOG_RR, DEFAULT_POLICY)
    assert hi == pytest.approx(math.log(19.0), rel=1e-12)
    assert hi == pytest.approx(2.9444, abs=5e-4)
    lo, hi = feasible_range(TargetParameter.OR, DEFAULT_POLICY)
    assert hi == pytest.approx(361.0, rel=1e-12)
    assert lo == pytest.approx(1.0 / 361.0, rel=1e-12)
    lo, hi = feasible_range(TargetParameter.RR, DEFAULT_POLICY)
    assert (lo, hi) == pytest.approx((1.0 / 19.0, 19.0), rel=1e-12)


def test_feasible_range_symmetry():
    for param in (TargetParameter.ATE, TargetParameter.LOG_OR, TargetParameter.LOG_RR):
        lo, hi = feasible_range(param, DEFAULT_POLICY)
        assert lo == pytest.approx(-hi, rel=1e-15)
    for param in (TargetParameter.OR, TargetParameter.RR):
        lo, hi = feasible_range(param, DEFAULT_POLICY)
        assert lo * hi == pytest.approx(1.0, rel=1e-12)


def test_truncate_hand_values():
    assert truncate(0.99, (0.05, 0.95)) == 0.95
    assert truncate(0.5, (0.05, 0.95)) == 0.5
    assert truncate(-7.0, (-5.8889, 5.8889)) == -5.8889


@given(value=st.floats(-100.0, 100.0), lo=st.floats(-10.0, 0.0), width=st.floats(0.0, 10.0))
@settings(max_examples=200, deadline=None)
def test_truncate_idempotent_and_contained(value, lo, width):
    interval = (lo, lo + width)
    once = truncate(value, interval)
    assert interval[0] <= once <= interval[1]
    assert truncate(once, interval) == once


def test_truncate_rejects_inverted_interval():
    with pytest.raises(ValueError):
        truncate(0.5, (1.0, 0.0))


# ---------------------------------------------------------------------------
# comparison scale and policy
# ---------------------------------------------------------------------------


def test_comparison_parameter_mapping():
    assert comparison_parameter(TargetParameter.ATE) is TargetParameter.ATE
    assert comparison_parameter(TargetParameter.OR) is TargetParameter.LOG_OR
    assert comparison_parameter(TargetParameter.LOG_OR) is TargetParameter.LOG_OR
    assert comparison_parameter(TargetParameter.RR) is TargetParameter.LOG_RR
    assert comparison_parameter(TargetParameter.LOG_RR) is TargetParameter.LOG_RR


def test_policy_clamps():
    policy = TruncationPolicy()
    assert policy.outcome_clamp == (0.05, 0.95)
    assert policy.propensity_clamp == (0.01, 0.99)
    assert policy.clamp_outcome(np.array([0.0, 0.5, 1.0])).tolist() == [
        0.05,
        0.5,
        0.95,
    ]
    assert policy.clamp_propensity(np.array([0.0, 0.5, 1.0])).tolist() == [
        0.01,
        0.5,
        0.99,
    ]
    with pytest.raises(ValueError):
        TruncationPolicy(outcome_clamp=(0.5, 0.4))


def test_parameter_labels():
    assert [p.value for p in TargetParameter] == ["ATE", "OR", "LogOR", "RR", "LogRR"]
