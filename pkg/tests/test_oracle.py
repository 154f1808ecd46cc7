"""Exact-enumeration verification of the pseudo-outcome identities.

The conditional-mean oracle is cross-checked here against a literal
four-atom enumeration built directly from the pseudo-outcome formulas, so
the two routes are independent implementations of the same expectation.
"""

import math

import numpy as np
import pytest

from hetfx.effects import (
    NuisanceTriple,
    TargetParameter,
    contrast,
    pseudo_outcome_values,
)
from hetfx.oracle import (
    DEFAULT_SCALE_GRID,
    DEFAULT_VERIFY_SEED,
    DegenerateDirectionError,
    NuisancePath,
    PointTruth,
    exact_conditional_mean,
    exact_conditional_mean_values,
    orthogonality_ladder,
    orthogonality_probe,
    population_risk,
    random_cell_distribution,
    remainder,
    risk_minimizer,
    run_verification,
    sample_generic_path,
    second_order_exponent,
    target_gradient,
)

PARAMS = tuple(TargetParameter)

#: Frozen remainder-bound constants, calibrated once on a 200k-point sweep
#: over p, q in [0.2, 0.8] and e, pi in [0.1, 0.9] (max observed ratio times
#: a 1.25 margin).  The bound shape is
#: |R| <= C * (|e-pi| (|p1-q1| + |p0-q0|) + (p1-q1)^2 + (p0-q0)^2).
REMAINDER_BOUND_C = {
    TargetParameter.ATE: 12.0,
    TargetParameter.OR: 680.0,
    TargetParameter.LOG_OR: 63.0,
    TargetParameter.RR: 161.0,
    TargetParameter.LOG_RR: 46.0,
}


def literal_conditional_mean(param, truth, eta):
    """Independent route: enumerate the four (t, y) atoms explicitly."""
    terms = []
    for t, p_t in ((1, truth.e), (0, 1.0 - truth.e)):
        p_y1 = truth.p1 if t == 1 else truth.p0
        for y, p_y in ((1, p_y1), (0, 1.0 - p_y1)):
            phi = float(
                pseudo_outcome_values(param, t, y, eta.q1, eta.q0, eta.pi)
            )
            terms.append(p_t * p_y * phi)
    return math.fsum(terms)


# ---------------------------------------------------------------------------
# Conditional-mean identity
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("param", PARAMS)
def test_identity_at_truth(param):
    rng = np.random.default_rng(101)
    for _ in range(200):
        p1, p0 = rng.uniform(0.05, 0.95, 2)
        e = rng.uniform(0.01, 0.99)
        truth = PointTruth(p1, p0, e)
        eta = NuisanceTriple(p1, p0, e)
        assert abs(
            exact_conditional_mean(param, truth, eta) - contrast(param, p1, p0)
        ) <= 1e-12


def test_identity_symmetric_zero():
    truth = PointTruth(0.5, 0.5, 0.5)
    eta = NuisanceTriple(0.5, 0.5, 0.5)
    assert exact_conditional_mean(TargetParameter.LOG_OR, truth, eta) == 0.0
    assert exact_conditional_mean(TargetParameter.ATE, truth, eta) == 0.0
    assert exact_conditional_mean(TargetParameter.OR, truth, eta) == 1.0


@pytest.mark.parametrize("param", PARAMS)
def test_identity_holds_with_wrong_propensity(param):
    rng = np.random.default_rng(202)
    for _ in range(200):
        p1, p0 = rng.uniform(0.05, 0.95, 2)
        e = rng.uniform(0.01, 0.99)
        pi = rng.uniform(0.01, 0.99)
        value = exact_conditional_mean(
            param, PointTruth(p1, p0, e), NuisanceTriple(p1, p0, pi)
        )
        assert abs(value - contrast(param, p1, p0)) <= 1e-12


@pytest.mark.parametrize("param", PARAMS)
def test_grouped_mean_matches_literal_enumeration(param):
    """Dual route: stable grouped form vs. explicit four-atom expectation."""
    rng = np.random.default_rng(303)
    for _ in range(300):
        truth = PointTruth(*rng.uniform(0.05, 0.95, 2), rng.uniform(0.01, 0.99))
        eta = NuisanceTriple(
            rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.01, 0.99)
        )
        grouped = exact_conditional_mean(param, truth, eta)
        literal = literal_conditional_mean(param, truth, eta)
        assert abs(grouped - literal) <= 1e-9 * max(1.0, abs(grouped))


def test_conditional_mean_rejects_boundary():
    truth = PointTruth(0.5, 0.5, 0.5)
    with pytest.raises(ValueError):
        exact_conditional_mean(
            TargetParameter.ATE, truth, NuisanceTriple(0.5, 0.5, 0.0)
        )
    with pytest.raises(ValueError):
        PointTruth(0.0, 0.5, 0.5)


# ---------------------------------------------------------------------------
# Remainders
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("param", PARAMS)
def test_remainder_zero_at_truth_and_at_matched_outcomes(param):
    rng = np.random.default_rng(404)
    for _ in range(100):
        p1, p0 = rng.uniform(0.05, 0.95, 2)
        e = rng.uniform(0.01, 0.99)
        truth = PointTruth(p1, p0, e)
        assert remainder(param, truth, NuisanceTriple(p1, p0, e)) == pytest.approx(
            0.0, abs=1e-12
        )
        pi = rng.uniform(0.01, 0.99)
        assert remainder(param, truth, NuisanceTriple(p1, p0, pi)) == pytest.approx(
            0.0, abs=1e-12
        )


def test_log_or_remainder_matches_taylor_hand_value():
    """With q0 = p0 and pi = e, the remainder is minus the pure Taylor gap.

    At truth (0.6, 0.4, 0.5) and outcome guess q1 = 0.5 the exact value is
    0.4 - log(1.5): the linear correction (p1-q1)/(q1(1-q1)) = 0.4 replaces
    the exact logit step log(0.6/0.4).
    """
    value = remainder(
        TargetParameter.LOG_OR,
        PointTruth(0.6, 0.4, 0.5),
        NuisanceTriple(0.5, 0.4, 0.5),
    )
    expected = 0.4 - math.log(1.5)
    assert value == pytest.approx(expected, abs=1e-15)
    assert value == pytest.approx(-0.005465108108164363, abs=1e-15)
    taylor_gap = math.log(0.6 / 0.4) - (math.log(0.5 / 0.5) + 0.4)
    assert value == pytest.approx(-taylor_gap, abs=1e-15)
    assert value < 0.0


@pytest.mark.parametrize("param", PARAMS)
def test_remainder_bound_shape(param):
    """|R| <= C (|e-pi| |Delta q| + ||Delta q||^2) with frozen constants."""
    rng = np.random.default_rng(505)
    n = 20000
    p1, p0, q1, q0 = rng.uniform(0.2, 0.8, (4, n))
    e, pi = rng.uniform(0.1, 0.9, (2, n))
    ecm = exact_conditional_mean_values(param, p1, p0, e, q1, q0, pi)
    theta = np.array([contrast(param, a, b) for a, b in zip(p1, p0)])
    shape = (
        np.abs(e - pi) * (np.abs(p1 - q1) + np.abs(p0 - q0))
        + (p1 - q1) ** 2
        + (p0 - q0) ** 2
    )
    assert np.all(np.abs(ecm - theta) <= REMAINDER_BOUND_C[param] * shape + 1e-12)


# ---------------------------------------------------------------------------
# Second-order exponent
# ---------------------------------------------------------------------------


def test_exponent_pure_propensity_direction_is_degenerate():
    path = NuisancePath(PointTruth(0.6, 0.4, 0.5), (0.0, 0.0, 0.3))
    for param in PARAMS:
        with pytest.raises(DegenerateDirectionError):
            second_order_exponent(param, path)


def test_exponent_outcome_direction_with_matched_propensity():
    """Perturbing q1 only: quadratic for curved plug-ins, exact for linear ones.

    The risk-difference and risk-ratio pseudo-outcomes are affine in q1 when
    q0 and pi are held at the truth, so their remainders vanish identically
    along this direction; the other parameters decay at rate ~2.
    """
    path = NuisancePath(PointTruth(0.6, 0.4, 0.5), (0.3, 0.0, 0.0))
    for param in (
        TargetParameter.OR,
        TargetParameter.LOG_OR,
        TargetParameter.LOG_RR,
    ):
        slope = second_order_exponent(param, path)
        assert 1.9 <= slope <= 2.2
    for param in (TargetParameter.ATE, TargetParameter.RR):
        with pytest.raises(DegenerateDirectionError):
            second_order_exponent(param, path)


@pytest.mark.parametrize("param", PARAMS)
def test_exponent_joint_direction(param):
    path = NuisancePath(PointTruth(0.6, 0.4, 0.5), (0.25, 0.0, 0.2))
    slope = second_order_exponent(param, path)
    assert 1.9 <= slope <= 2.2


@pytest.mark.parametrize("param", PARAMS)
def test_sampled_generic_paths_are_second_order(param):
    rng = np.random.default_rng(606)
    for _ in range(10):
        path = sample_generic_path(rng, param)
        assert isinstance(path, NuisancePath)
        assert path.grid == DEFAULT_SCALE_GRID
        slope = second_order_exponent(param, path)
        assert slope >= 1.9


def test_nuisance_path_validation():
    with pytest.raises(ValueError):
        NuisancePath(PointTruth(0.9, 0.5, 0.5), (1.0, 0.0, 0.0))  # exits (0,1)
    with pytest.raises(ValueError):
        NuisancePath(PointTruth(0.5, 0.5, 0.5), (0.1, 0.0, 0.0), grid=(0.1, 0.2))
    with pytest.raises(ValueError):
        NuisancePath(PointTruth(0.5, 0.5, 0.5), (0.1, 0.0), grid=(0.2, 0.1))


# ---------------------------------------------------------------------------
# Population risk
# ---------------------------------------------------------------------------


def test_risk_minimizer_is_strictly_minimal():
    rng = np.random.default_rng(707)
    dist = random_cell_distribution(rng, 4)
    for param in PARAMS:
        q1 = rng.uniform(0.2, 0.8, 4)
        q0 = rng.uniform(0.2, 0.8, 4)
        pi = rng.uniform(0.1, 0.9, 4)
        eta = (q1, q0, pi)
        best = risk_minimizer(param, eta, dist)
        base_risk = population_risk(param, best, eta, dist)
        for _ in range(100):
            candidate = best + rng.uniform(-0.5, 0.5, 4)
            if np.allclose(candidate, best):
                continue
            assert population_risk(param, candidate, eta, dist) > base_risk


@pytest.mark.parametrize("param", PARAMS)
def test_risk_excess_zero_at_truth(param):
    rng = np.random.default_rng(808)
    dist = random_cell_distribution(rng, 6)
    theta = contrast(param, dist.p_y1_t1, dist.p_y1_t0)
    eta = (dist.p_y1_t1, dist.p_y1_t0, dist.p_t1)
    excess = population_risk(param, theta, eta, dist) - population_risk(
        param, risk_minimizer(param, eta, dist), eta, dist
    )
    assert abs(excess) <= 1e-12


@pytest.mark.parametrize("param", PARAMS)
def test_risk_decomposition_exact(param):
    """L(f, eta0) - L(theta, eta0) = sum_x P(x) (f - theta)^2 by enumeration."""
    rng = np.random.default_rng(909)
    for _ in range(5):
        dist = random_cell_distribution(rng, 4, prob_range=(0.35, 0.65))
        theta = contrast(param, dist.p_y1_t1, dist.p_y1_t0)
        eta = (dist.p_y1_t1, dist.p_y1_t0, dist.p_t1)
        f = theta + rng.uniform(-0.25, 0.25, 4)
        lhs = population_risk(param, f, eta, dist) - population_risk(
            param, theta, eta, dist
        )
        rhs = float(np.dot(dist.p_x, (f - theta) ** 2))
        assert abs(lhs - rhs) <= 1e-12


def test_weighted_risk_matches_manual_enumeration():
    rng = np.random.default_rng(1010)
    dist = random_cell_distribution(rng, 3)
    param = TargetParameter.LOG_OR
    q1, q0, pi = (
        rng.uniform(0.2, 0.8, 3),
        rng.uniform(0.2, 0.8, 3),
        rng.uniform(0.1, 0.9, 3),
    )
    f = rng.uniform(-1.0, 1.0, 3)
    manual = []
    for i in range(3):
        w = pi[i] * (1.0 - pi[i])
        for t, p_t in ((1, dist.p_t1[i]), (0, 1.0 - dist.p_t1[i])):
            p_y1 = dist.p_y1_t1[i] if t == 1 else dist.p_y1_t0[i]
            for y, p_y in ((1, p_y1), (0, 1.0 - p_y1)):
                phi = float(pseudo_outcome_values(param, t, y, q1[i], q0[i], pi[i]))
                manual.append(dist.p_x[i] * p_t * p_y * w * (phi - f[i]) ** 2)
    assert population_risk(param, f, (q1, q0, pi), dist, weighted=True) == (
        pytest.approx(math.fsum(manual), rel=1e-12)
    )


# ---------------------------------------------------------------------------
# Orthogonality
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("param", PARAMS)
def test_inner_gradient_zero_at_truth(param):
    """D_f L(theta, eta0)[h] = 0 for every direction h."""
    rng = np.random.default_rng(1111)
    dist = random_cell_distribution(rng, 8)
    theta = contrast(param, dist.p_y1_t1, dist.p_y1_t0)
    eta = (dist.p_y1_t1, dist.p_y1_t0, dist.p_t1)
    for _ in range(5):
        h = rng.uniform(-1.0, 1.0, 8)
        assert abs(target_gradient(param, dist, theta, eta, h)) <= 1e-12


def test_probe_zero_direction_is_exactly_zero():
    rng = np.random.default_rng(1212)
    dist = random_cell_distribution(rng, 8)
    h = rng.uniform(-1.0, 1.0, 8)
    k = np.zeros((8, 3))
    assert orthogonality_probe(TargetParameter.LOG_OR, dist, h, k, 1e-2) == 0.0


@pytest.mark.parametrize("param", PARAMS)
def test_orthogonality_ladder_extrapolates_below_tolerance(param):
    rng = np.random.default_rng(1313)
    dist = random_cell_distribution(rng, 8)
    for _ in range(3):
        h = rng.uniform(-1.0, 1.0, 8)
        k = rng.uniform(-1.0, 1.0, (8, 3))
        ladder = orthogonality_ladder(param, dist, h, k)
        assert ladder.steps == (1e-2, 5e-3, 2.5e-3)
        assert abs(ladder.extrapolated) < 1e-6


def test_probe_rejects_overlarge_step():
    rng = np.random.default_rng(1414)
    dist = random_cell_distribution(rng, 4, prob_range=(0.05, 0.1))
    k = np.full((4, 3), -1.0)
    with pytest.raises(ValueError):
        orthogonality_probe(TargetParameter.ATE, dist, np.ones(4), k, 0.5)


def test_ladder_requires_halving_steps():
    rng = np.random.default_rng(1515)
    dist = random_cell_distribution(rng, 4)
    with pytest.raises(ValueError):
        orthogonality_ladder(
            TargetParameter.ATE,
            dist,
            np.ones(4),
            np.zeros((4, 3)),
            steps=(1e-2, 4e-3, 2e-3),
        )


# ---------------------------------------------------------------------------
# Random tabulated distributions and the full probe battery
# ---------------------------------------------------------------------------


def test_random_cell_distribution_is_valid():
    rng = np.random.default_rng(1616)
    dist = random_cell_distribution(rng, 8, prob_range=(0.2, 0.8))
    assert dist.n_cells == 8
    assert math.fsum(dist.p_x.tolist()) == pytest.approx(1.0, abs=1e-12)
    for arr in (dist.p_t1, dist.p_y1_t1, dist.p_y1_t0):
        assert np.all((arr >= 0.2) & (arr <= 0.8))


def test_run_verification_all_pass():
    results = run_verification(DEFAULT_VERIFY_SEED)
    failed = [r for r in results if not r.passed]
    assert not failed, f"failed probes: {[(r.parameter, r.probe) for r in failed]}"
    assert len(results) == 35
