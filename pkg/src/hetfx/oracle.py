"""Exact-enumeration verification of the pseudo-outcome theory.

Everything here treats a tabulated distribution as ground truth and
computes population quantities exactly (finite sums over cells and the
four (t, y) outcomes), so the estimation theory can be checked without
Monte Carlo error:

- conditional-mean identities: ``E[phi(Z; eta) | X]`` equals the target
  contrast exactly at the true nuisances, for every parameter;
- second-order remainders: away from the truth the gap is a remainder
  that vanishes quadratically along nuisance paths;
- risk decomposition: excess population risk of any second-stage predictor
  over the conditional mean is its weighted squared distance from it;
- Neyman orthogonality: the mixed pathwise derivative of the risk in
  nuisance directions vanishes at the truth, probed by central finite
  differences with a Richardson ladder.

The conditional mean is evaluated through the affine-in-y decomposition of
the pseudo-outcomes (see :func:`hetfx.effects.pseudo_outcome_components`):
``E[phi | X] = plugin + e/pi * c1*pi * (p1-q1) - ...`` collapses the inner
sum over y analytically.  This is algebraically identical to the literal
four-term enumeration but avoids catastrophic cancellation between the
large inverse-propensity corrections, which is what makes 1e-12 identity
tolerances attainable in 64-bit arithmetic.  Population risks, by contrast,
are genuine four-term enumerations accumulated with exact summation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from hetfx.effects import (
    DEFAULT_POLICY,
    NuisanceField,
    NuisanceTriple,
    TargetParameter,
    contrast,
    pseudo_outcome_bound,
    pseudo_outcome_components,
    pseudo_outcome_values,
    rlearner_weight,
)

__all__ = [
    "PointTruth",
    "NuisancePath",
    "DEFAULT_SCALE_GRID",
    "DegenerateDirectionError",
    "exact_conditional_mean",
    "exact_conditional_mean_values",
    "remainder",
    "remainder_values",
    "second_order_exponent",
    "population_risk",
    "risk_minimizer",
    "target_gradient",
    "orthogonality_probe",
    "orthogonality_ladder",
    "ProbeResult",
    "verify_identity",
    "verify_truth_remainder",
    "verify_second_order",
    "verify_orthogonality",
    "verify_boundedness",
    "verify_risk_decomposition",
    "run_verification",
]

PARAMETERS = tuple(TargetParameter)

#: Geometric scale grid for remainder-decay probes; below 2^-9 cancellation
#: noise dominates at 64-bit precision.
DEFAULT_SCALE_GRID: tuple[float, ...] = tuple(2.0 ** (-k) for k in range(3, 10))


class DegenerateDirectionError(ValueError):
    """Raised when a nuisance path produces underflowing remainders."""


def _check_open_unit_scalar(value: float, name: str) -> float:
    value = float(value)
    if not math.isfinite(value) or not (0.0 < value < 1.0):
        raise ValueError(f"{name} must lie strictly inside (0, 1), got {value}")
    return value


@dataclass(frozen=True)
class PointTruth:
    """True (p1, p0, e) at a single covariate point."""

    p1: float
    p0: float
    e: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "p1", _check_open_unit_scalar(self.p1, "p1"))
        object.__setattr__(self, "p0", _check_open_unit_scalar(self.p0, "p0"))
        object.__setattr__(self, "e", _check_open_unit_scalar(self.e, "e"))


@dataclass(frozen=True)
class NuisancePath:
    """A straight nuisance path ``eta(t) = truth + t * direction``.

    ``direction`` perturbs (q1, q0, pi) jointly; every grid point must keep
    the perturbed triple strictly inside (0, 1)^3.
    """

    base: PointTruth
    direction: tuple[float, float, float]
    grid: tuple[float, ...] = DEFAULT_SCALE_GRID

    def __post_init__(self) -> None:
        direction = tuple(float(d) for d in self.direction)
        if len(direction) != 3 or not all(math.isfinite(d) for d in direction):
            raise ValueError("direction must be a finite triple (dq1, dq0, dpi)")
        grid = tuple(float(t) for t in self.grid)
        if not grid or any(t <= 0.0 for t in grid):
            raise ValueError("scale grid must be positive")
        if any(later >= earlier for earlier, later in zip(grid, grid[1:])):
            raise ValueError("scale grid must be strictly decreasing")
        object.__setattr__(self, "direction", direction)
        object.__setattr__(self, "grid", grid)
        for t in grid:
            for name, base_val, delta in (
                ("q1", self.base.p1, direction[0]),
                ("q0", self.base.p0, direction[1]),
                ("pi", self.base.e, direction[2]),
            ):
                value = base_val + t * delta
                if not (0.0 < value < 1.0):
                    raise ValueError(
                        f"path leaves (0,1) at scale {t}: {name} = {value}"
                    )

    def eta_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Perturbed (q1, q0, pi) arrays over the scale grid."""
        t = np.asarray(self.grid, dtype=float)
        d1, d0, dpi = self.direction
        return (self.base.p1 + t * d1, self.base.p0 + t * d0, self.base.e + t * dpi)


def exact_conditional_mean_values(param: TargetParameter, p1, p0, e, q1, q0, pi):
    """Vectorized exact ``E[phi_param((T, Y); eta) | X]``.

    Equals ``sum_t sum_y P(T=t|x) P(Y=y|T=t,x) phi((t,y); eta)`` with the
    inner sum over y collapsed through the affine structure of the
    pseudo-outcome, which is exact and numerically stable:

        E[phi | X] = plugin + e * c1 * (p1 - q1) - (1 - e) * c0 * (p0 - q0).
    """
    p1 = np.asarray(p1, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    e = np.asarray(e, dtype=float)
    plugin, c1, c0 = pseudo_outcome_components(param, q1, q0, pi)
    q1 = np.asarray(q1, dtype=float)
    q0 = np.asarray(q0, dtype=float)
    return plugin + e * c1 * (p1 - q1) - (1.0 - e) * c0 * (p0 - q0)


def exact_conditional_mean(
    param: TargetParameter, truth: PointTruth, eta: NuisanceTriple
) -> float:
    """Exact conditional mean of the pseudo-outcome at one covariate point."""
    return float(
        exact_conditional_mean_values(
            param, truth.p1, truth.p0, truth.e, eta.q1, eta.q0, eta.pi
        )
    )


def remainder_values(param: TargetParameter, p1, p0, e, q1, q0, pi):
    """Vectorized remainder ``E[phi | X] - contrast(param, p1, p0)``."""
    return exact_conditional_mean_values(param, p1, p0, e, q1, q0, pi) - contrast(
        param, p1, p0
    )


def remainder(param: TargetParameter, truth: PointTruth, eta: NuisanceTriple) -> float:
    """Remainder R_param(x; eta) at a single point; zero when q_t = p_t."""
    return exact_conditional_mean(param, truth, eta) - contrast(
        param, truth.p1, truth.p0
    )


def second_order_exponent(
    param: TargetParameter, path: NuisancePath, degenerate_tol: float = 1e-13
) -> float:
    """Least-squares slope of log|remainder| against log scale along a path.

    Second-order remainders give slope close to 2 for generic directions.
    Directions along which the remainder underflows (for instance a pure
    propensity perturbation, which leaves the remainder identically zero)
    are rejected with :class:`DegenerateDirectionError`.
    """
    q1, q0, pi = path.eta_arrays()
    rem = remainder_values(param, path.base.p1, path.base.p0, path.base.e, q1, q0, pi)
    rem = np.abs(np.asarray(rem, dtype=float))
    if np.any(rem <= degenerate_tol):
        raise DegenerateDirectionError(
            f"remainder underflows along this direction (min |R| = {rem.min():.3e})"
        )
    slope = np.polyfit(np.log(np.asarray(path.grid)), np.log(rem), 1)[0]
    return float(slope)


def _as_nuisance_arrays(eta_field) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(eta_field, NuisanceField):
        return eta_field.q1, eta_field.q0, eta_field.pi
    q1, q0, pi = eta_field
    return (
        np.asarray(q1, dtype=float),
        np.asarray(q0, dtype=float),
        np.asarray(pi, dtype=float),
    )


def _as_cell_values(f, dist) -> np.ndarray:
    if callable(f):
        values = f(dist.features())
    else:
        values = f
    values = np.asarray(values, dtype=float)
    if values.shape != dist.p_x.shape:
        raise ValueError("predictor values must align with the distribution cells")
    return values


def population_risk(
    param: TargetParameter, f, eta_field, dist, weighted: bool = False
) -> float:
    """Exact population risk ``E[w * (phi(Z; eta) - f(X))^2]``.

    The expectation enumerates every (cell, t, y) atom of the tabulated
    distribution and accumulates with exact summation.  ``w`` is 1 for the
    doubly robust loss and ``pi(x)(1 - pi(x))`` for the propensity-overlap
    weighted variant.

    Parameters
    ----------
    f : ndarray or callable
        Candidate second-stage predictor, tabulated per cell (or evaluated
        on ``dist.features()``).
    eta_field : NuisanceField or (q1, q0, pi) arrays
        Nuisances per cell.
    """
    q1, q0, pi = _as_nuisance_arrays(eta_field)
    values = _as_cell_values(f, dist)
    p_x = np.asarray(dist.p_x, dtype=float)
    e = np.asarray(dist.p_t1, dtype=float)
    p1 = np.asarray(dist.p_y1_t1, dtype=float)
    p0 = np.asarray(dist.p_y1_t0, dtype=float)

    ones = np.ones_like(p_x)
    zeros = np.zeros_like(p_x)
    atoms = (
        (e * p1, ones, ones),
        (e * (1.0 - p1), ones, zeros),
        ((1.0 - e) * p0, zeros, ones),
        ((1.0 - e) * (1.0 - p0), zeros, zeros),
    )
    w = rlearner_weight(pi) if weighted else ones
    terms: list[float] = []
    for prob_ty, t, y in atoms:
        phi = pseudo_outcome_values(param, t, y, q1, q0, pi)
        terms.extend((p_x * prob_ty * w * (phi - values) ** 2).tolist())
    return math.fsum(terms)


def risk_minimizer(param: TargetParameter, eta_field, dist) -> np.ndarray:
    """Per-cell exact conditional mean of the pseudo-outcome (risk minimizer)."""
    q1, q0, pi = _as_nuisance_arrays(eta_field)
    return exact_conditional_mean_values(
        param, dist.p_y1_t1, dist.p_y1_t0, dist.p_t1, q1, q0, pi
    )


def target_gradient(
    param: TargetParameter, dist, f, eta_field, h, weighted: bool = False
) -> float:
    """Pathwise derivative ``D_f L(f, eta)[h]`` of the population risk.

    Equals ``-2 E[w(X) (phi - f(X)) h(X)]``; by the tower property the
    inner expectation reduces exactly to the conditional mean per cell.
    """
    q1, q0, pi = _as_nuisance_arrays(eta_field)
    values = _as_cell_values(f, dist)
    h = _as_cell_values(h, dist)
    cond_mean = exact_conditional_mean_values(
        param, dist.p_y1_t1, dist.p_y1_t0, dist.p_t1, q1, q0, pi
    )
    w = rlearner_weight(pi) if weighted else np.ones_like(np.asarray(dist.p_x))
    terms = (np.asarray(dist.p_x, dtype=float) * w * h * (cond_mean - values)).tolist()
    return -2.0 * math.fsum(terms)


def _perturbed_field(dist, k: np.ndarray, step: float) -> tuple[np.ndarray, ...]:
    k = np.asarray(k, dtype=float)
    n = len(np.asarray(dist.p_x))
    if k.shape != (n, 3):
        raise ValueError(f"nuisance direction field must have shape ({n}, 3)")
    q1 = np.asarray(dist.p_y1_t1, dtype=float) + step * k[:, 0]
    q0 = np.asarray(dist.p_y1_t0, dtype=float) + step * k[:, 1]
    pi = np.asarray(dist.p_t1, dtype=float) + step * k[:, 2]
    for name, arr in (("q1", q1), ("q0", q0), ("pi", pi)):
        if np.any(arr <= 0.0) or np.any(arr >= 1.0):
            raise ValueError(
                f"step too large: perturbed {name} leaves (0, 1) at step {step}"
            )
    return q1, q0, pi


def orthogonality_probe(
    param: TargetParameter, dist, h, k, step: float
) -> float:
    """Central finite-difference estimate of ``D_eta D_f L(theta, eta0)[h, k]``.

    ``h`` is a per-cell target direction, ``k`` an (n_cells, 3) nuisance
    direction field scaled by ``step``.  Orthogonality makes the estimate
    O(step^2); it extrapolates to zero as the step shrinks.
    """
    if step <= 0.0:
        raise ValueError("step must be positive")
    theta = contrast(param, dist.p_y1_t1, dist.p_y1_t0)
    gradients = []
    for signed in (step, -step):
        eta_field = _perturbed_field(dist, k, signed)
        gradients.append(target_gradient(param, dist, theta, eta_field, h))
    return (gradients[0] - gradients[1]) / (2.0 * step)


@dataclass(frozen=True)
class OrthogonalityLadder:
    """Probe values over a halving step ladder plus their extrapolation."""

    steps: tuple[float, ...]
    probes: tuple[float, ...]
    extrapolated: float


def orthogonality_ladder(
    param: TargetParameter,
    dist,
    h,
    k,
    steps: tuple[float, float, float] = (1e-2, 5e-3, 2.5e-3),
) -> OrthogonalityLadder:
    """Three-step Richardson ladder for the orthogonality probe.

    The steps must halve; central differences have even error expansions,
    so two Richardson passes cancel the step^2 and step^4 terms.
    """
    s1, s2, s3 = (float(s) for s in steps)
    if not (abs(s2 - s1 / 2.0) <= 1e-12 * s1 and abs(s3 - s2 / 2.0) <= 1e-12 * s2):
        raise ValueError("ladder steps must halve")
    v1 = orthogonality_probe(param, dist, h, k, s1)
    v2 = orthogonality_probe(param, dist, h, k, s2)
    v3 = orthogonality_probe(param, dist, h, k, s3)
    r12 = (4.0 * v2 - v1) / 3.0
    r23 = (4.0 * v3 - v2) / 3.0
    extrapolated = (16.0 * r23 - r12) / 15.0
    return OrthogonalityLadder((s1, s2, s3), (v1, v2, v3), extrapolated)


# ---------------------------------------------------------------------------
# Verification suites (shared by the CLI `verify` command and the test suite)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProbeResult:
    """One verification probe outcome, CSV-serializable."""

    parameter: str
    probe: str
    value: float
    threshold: float
    passed: bool


def _random_truth_arrays(
    rng: np.random.Generator, count: int, policy=DEFAULT_POLICY
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    a_y, b_y = policy.outcome_clamp
    a_e, b_e = policy.propensity_clamp
    p1 = rng.uniform(a_y, b_y, size=count)
    p0 = rng.uniform(a_y, b_y, size=count)
    e = rng.uniform(a_e, b_e, size=count)
    return p1, p0, e


def verify_identity(
    rng: np.random.Generator, cases: int = 10_000, tol: float = 1e-12
) -> list[ProbeResult]:
    """At true nuisances, |exact_conditional_mean - contrast| <= tol."""
    results = []
    for param in PARAMETERS:
        p1, p0, e = _random_truth_arrays(rng, cases)
        dev = np.abs(
            exact_conditional_mean_values(param, p1, p0, e, p1, p0, e)
            - contrast(param, p1, p0)
        )
        worst = float(dev.max())
        results.append(
            ProbeResult(param.value, "identity_max_abs_dev", worst, tol, worst <= tol)
        )
    return results


def verify_truth_remainder(
    rng: np.random.Generator, cases: int = 10_000, tol: float = 1e-12
) -> list[ProbeResult]:
    """With q_t = p_t and arbitrary pi, the remainder vanishes."""
    results = []
    for param in PARAMETERS:
        p1, p0, e = _random_truth_arrays(rng, cases)
        pi = rng.uniform(0.01, 0.99, size=cases)
        worst = float(np.abs(remainder_values(param, p1, p0, e, p1, p0, pi)).max())
        results.append(
            ProbeResult(
                param.value, "remainder_at_truth_max_abs", worst, tol, worst <= tol
            )
        )
    return results


def sample_generic_path(
    rng: np.random.Generator, param: TargetParameter | None = None
) -> NuisancePath:
    """A random generic nuisance path for remainder-decay probes.

    Bases stay in the middle of the cube and outcome components of the
    direction are bounded away from zero, so the quadratic remainder term
    is excited along the whole grid.

    When ``param`` is given the direction norm is calibrated with a probe
    at scales finer than the test grid: the remainder is fit locally as
    A s^2 + B s^3 and the direction is shrunk until the cubic correction
    is small across the whole grid.  Directions whose quadratic
    coefficient nearly vanishes sit on the degenerate cone and are
    redrawn; they are not generic.
    """
    while True:
        base = PointTruth(
            rng.uniform(0.35, 0.65), rng.uniform(0.35, 0.65), rng.uniform(0.35, 0.65)
        )
        d1 = rng.choice((-1.0, 1.0)) * rng.uniform(0.2, 0.5)
        d0 = rng.choice((-1.0, 1.0)) * rng.uniform(0.2, 0.5)
        dpi = rng.uniform(-0.25, 0.25)
        direction = (d1, d0, dpi)
        if param is None:
            return NuisancePath(base, direction)
        scale = _quadratic_regime_scale(param, base, direction)
        if scale is not None:
            return NuisancePath(base, tuple(scale * d for d in direction))


def _quadratic_regime_scale(
    param: TargetParameter,
    base: PointTruth,
    direction: tuple[float, float, float],
    cubic_budget: float = 0.1,
) -> float | None:
    """Shrink factor keeping the cubic remainder term within budget.

    Fits R(s) = A s^2 + B s^3 at two scales below the probe grid and
    bounds |B s / A| at the coarsest grid scale.  Returns None when the
    quadratic coefficient is negligible (degenerate-cone direction).
    """
    d1, d0, dpi = direction
    probes = np.array([2.0 ** -9, 2.0 ** -10])
    rem = remainder_values(
        param,
        base.p1,
        base.p0,
        base.e,
        base.p1 + probes * d1,
        base.p0 + probes * d0,
        base.e + probes * dpi,
    )
    a_hats = np.asarray(rem) / probes**2
    b_hat = (a_hats[0] - a_hats[1]) / (probes[0] - probes[1])
    a_hat = a_hats[1] - b_hat * probes[1]
    norm_sq = d1 * d1 + d0 * d0 + dpi * dpi
    if abs(a_hat) < 1e-4 * norm_sq:
        return None
    coarse = DEFAULT_SCALE_GRID[0]
    cubic_ratio = abs(b_hat) * coarse / abs(a_hat)
    if cubic_ratio <= cubic_budget:
        return 1.0
    scale = cubic_budget / cubic_ratio
    return scale if scale >= 0.02 else None


def verify_second_order(
    rng: np.random.Generator, paths: int = 100, min_slope: float = 1.9
) -> list[ProbeResult]:
    """Remainder decay exponent >= min_slope on random generic paths."""
    results = []
    for param in PARAMETERS:
        slopes = []
        for _ in range(paths):
            slopes.append(second_order_exponent(param, sample_generic_path(rng, param)))
        worst = float(min(slopes))
        results.append(
            ProbeResult(
                param.value, "second_order_min_slope", worst, min_slope, worst >= min_slope
            )
        )
    return results


def random_cell_distribution(
    rng: np.random.Generator,
    n_cells: int,
    prob_range: tuple[float, float] = (0.2, 0.8),
):
    """A small random tabulated distribution for oracle probes."""
    from hetfx.dgp import SyntheticDistribution, covariate_grid

    x_bin_full, x_num_full = covariate_grid(npoints=max(n_cells // 32 + 1, 2))
    idx = np.arange(n_cells) % len(x_num_full)
    lo, hi = prob_range
    return SyntheticDistribution(
        x_bin=x_bin_full[idx],
        x_num=x_num_full[idx],
        p_x=rng.dirichlet(np.ones(n_cells)),
        p_t1=rng.uniform(lo, hi, size=n_cells),
        p_y1_t1=rng.uniform(lo, hi, size=n_cells),
        p_y1_t0=rng.uniform(lo, hi, size=n_cells),
    )


def verify_orthogonality(
    rng: np.random.Generator,
    n_dists: int = 20,
    directions: int = 10,
    tol: float = 1e-6,
    slope_band: tuple[float, float] = (1.5, 2.5),
) -> list[ProbeResult]:
    """Richardson-extrapolated mixed derivative < tol; probes decay ~ step^2."""
    worst_extrap = {param: 0.0 for param in PARAMETERS}
    slopes: dict[TargetParameter, list[float]] = {param: [] for param in PARAMETERS}
    for _ in range(n_dists):
        dist = random_cell_distribution(rng, 8)
        n = len(dist.p_x)
        for param in PARAMETERS:
            for _ in range(directions):
                h = rng.uniform(-1.0, 1.0, size=n)
                k = rng.uniform(-1.0, 1.0, size=(n, 3))
                ladder = orthogonality_ladder(param, dist, h, k)
                worst_extrap[param] = max(
                    worst_extrap[param], abs(ladder.extrapolated)
                )
                probes = np.abs(np.asarray(ladder.probes))
                if probes.min() > 1e-12:
                    fit = np.polyfit(
                        np.log(np.asarray(ladder.steps)), np.log(probes), 1
                    )
                    slopes[param].append(float(fit[0]))
    results = []
    for param in PARAMETERS:
        extrap = worst_extrap[param]
        results.append(
            ProbeResult(
                param.value, "orthogonality_extrapolated_max_abs", extrap, tol,
                extrap <= tol,
            )
        )
        median_slope = float(np.median(slopes[param])) if slopes[param] else 2.0
        results.append(
            ProbeResult(
                param.value,
                "orthogonality_decay_median_slope",
                median_slope,
                slope_band[0],
                slope_band[0] <= median_slope <= slope_band[1],
            )
        )
    return results


def verify_boundedness(
    rng: np.random.Generator, cases: int = 100_000, policy=DEFAULT_POLICY
) -> list[ProbeResult]:
    """|pseudo_outcome| never exceeds B_phi over the truncated domain."""
    results = []
    for param in PARAMETERS:
        q1, q0, pi = _random_truth_arrays(rng, cases, policy)
        t = rng.integers(0, 2, size=cases)
        y = rng.integers(0, 2, size=cases)
        phi = pseudo_outcome_values(param, t, y, q1, q0, pi)
        bound = pseudo_outcome_bound(param, policy)
        ratio = float(np.abs(phi).max() / bound)
        results.append(
            ProbeResult(
                param.value, "boundedness_max_ratio_to_B", ratio, 1.0, ratio <= 1.0
            )
        )
    return results


def verify_risk_decomposition(
    rng: np.random.Generator, n_dists: int = 20, tol: float = 1e-12
) -> list[ProbeResult]:
    """L(f, eta0) - L(theta, eta0) equals the weighted squared gap to theta."""
    worst = {param: 0.0 for param in PARAMETERS}
    for _ in range(n_dists):
        dist = random_cell_distribution(rng, 4, prob_range=(0.35, 0.65))
        truth_field = (dist.p_y1_t1, dist.p_y1_t0, dist.p_t1)
        for param in PARAMETERS:
            theta = contrast(param, dist.p_y1_t1, dist.p_y1_t0)
            f = theta + rng.uniform(-0.25, 0.25, size=len(theta))
            excess = population_risk(param, f, truth_field, dist) - population_risk(
                param, theta, truth_field, dist
            )
            closed_form = float(np.sum(dist.p_x * (f - theta) ** 2))
            worst[param] = max(worst[param], abs(excess - closed_form))
    return [
        ProbeResult(
            param.value, "risk_decomposition_max_abs_gap", worst[param], tol,
            worst[param] <= tol,
        )
        for param in PARAMETERS
    ]


DEFAULT_VERIFY_SEED = 20260825


def run_verification(seed: int = DEFAULT_VERIFY_SEED) -> list[ProbeResult]:
    """Run every probe suite at its default budget; used by ``hetfx verify``."""
    results: list[ProbeResult] = []
    suites = (
        verify_identity,
        verify_truth_remainder,
        verify_second_order,
        verify_orthogonality,
        verify_boundedness,
        verify_risk_decomposition,
    )
    for index, suite in enumerate(suites):
        rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
        results.extend(suite(rng))
    return results
