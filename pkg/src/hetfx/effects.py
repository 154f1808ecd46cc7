"""Target effect scales, orthogonal pseudo-outcomes, and truncation policy.

Binary-outcome treatment effects are expressed on five scales: the risk
difference (ATE), the odds ratio (OR) and its logarithm, and the risk ratio
(RR) and its logarithm.  For each scale there is a doubly robust
pseudo-outcome built from a nuisance triple ``eta = (q1, q0, pi)`` holding
the two arm-specific outcome regressions and the propensity score.  Every
pseudo-outcome here is affine in the observed outcome within each treatment
arm,

    phi(t, y; eta) = plugin(eta) + 1{t=1} * c1(eta) * (y - q1)
                                 - 1{t=0} * c0(eta) * (y - q0),

where ``plugin`` is the scale's contrast evaluated at (q1, q0) and the
correction slopes ``c1, c0`` carry the inverse-propensity factors.  The
conditional mean of ``phi`` given covariates recovers the true effect when
the nuisances are correct and degrades only at second order otherwise; the
exact statements are exercised by the :mod:`hetfx.oracle` module.

All nuisances must be truncated away from {0, 1} before a pseudo-outcome is
evaluated; the boundary is rejected rather than mapped to infinities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = [
    "TargetParameter",
    "TruncationPolicy",
    "DEFAULT_POLICY",
    "NuisanceTriple",
    "NuisanceField",
    "Observation",
    "comparison_parameter",
    "contrast",
    "pseudo_outcome",
    "pseudo_outcome_values",
    "arm_pseudo_outcome",
    "arm_pseudo_outcome_values",
    "rlearner_weight",
    "feasible_range",
    "truncate",
    "pseudo_outcome_bound",
]


class TargetParameter(str, Enum):
    """Tag selecting one of the five effect scales."""

    ATE = "ATE"
    OR = "OR"
    LOG_OR = "LogOR"
    RR = "RR"
    LOG_RR = "LogRR"

    @property
    def is_ratio_scale(self) -> bool:
        """True for the non-log ratio scales (OR, RR)."""
        return self in (TargetParameter.OR, TargetParameter.RR)


def comparison_parameter(param: TargetParameter) -> TargetParameter:
    """Scale on which estimates of ``param`` are compared.

    The difference scale is compared raw; both ratio families are compared
    on the log scale, which symmetrizes protective and harmful effects.
    """
    if param is TargetParameter.ATE:
        return TargetParameter.ATE
    if param in (TargetParameter.OR, TargetParameter.LOG_OR):
        return TargetParameter.LOG_OR
    return TargetParameter.LOG_RR


def _check_interval(interval: tuple[float, float], name: str) -> tuple[float, float]:
    lo, hi = float(interval[0]), float(interval[1])
    if not (0.0 < lo < hi < 1.0):
        raise ValueError(f"{name} must satisfy 0 < lo < hi < 1, got ({lo}, {hi})")
    return (lo, hi)


@dataclass(frozen=True)
class TruncationPolicy:
    """Clamping intervals applied to estimated nuisances.

    ``outcome_clamp`` bounds the arm-specific outcome probabilities and
    ``propensity_clamp`` bounds the propensity score.  Feasible ranges for
    the effect scales are always derived from these clamps, never stored.
    """

    outcome_clamp: tuple[float, float] = (0.05, 0.95)
    propensity_clamp: tuple[float, float] = (0.01, 0.99)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "outcome_clamp", _check_interval(self.outcome_clamp, "outcome_clamp")
        )
        object.__setattr__(
            self,
            "propensity_clamp",
            _check_interval(self.propensity_clamp, "propensity_clamp"),
        )

    def clamp_outcome(self, p):
        """Clamp outcome probabilities into the outcome interval."""
        return np.clip(p, self.outcome_clamp[0], self.outcome_clamp[1])

    def clamp_propensity(self, p):
        """Clamp propensity scores into the propensity interval."""
        return np.clip(p, self.propensity_clamp[0], self.propensity_clamp[1])


DEFAULT_POLICY = TruncationPolicy()


def _check_open_unit(value: float, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or not (0.0 < value < 1.0):
        raise ValueError(f"{name} must lie strictly inside (0, 1), got {value}")
    return value


@dataclass(frozen=True)
class NuisanceTriple:
    """Nuisance values (q1, q0, pi) at a single covariate point.

    All three components must lie strictly inside (0, 1); exact-boundary
    values (untruncated estimates) are rejected.
    """

    q1: float
    q0: float
    pi: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "q1", _check_open_unit(self.q1, "q1"))
        object.__setattr__(self, "q0", _check_open_unit(self.q0, "q0"))
        object.__setattr__(self, "pi", _check_open_unit(self.pi, "pi"))


@dataclass(frozen=True)
class NuisanceField:
    """Per-point nuisance arrays (q1, q0, pi), all strictly inside (0, 1)."""

    q1: np.ndarray
    q0: np.ndarray
    pi: np.ndarray

    def __post_init__(self) -> None:
        q1 = np.asarray(self.q1, dtype=float)
        q0 = np.asarray(self.q0, dtype=float)
        pi = np.asarray(self.pi, dtype=float)
        if not (q1.shape == q0.shape == pi.shape):
            raise ValueError("nuisance arrays must share a shape")
        for name, arr in (("q1", q1), ("q0", q0), ("pi", pi)):
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0) or np.any(arr >= 1.0):
                raise ValueError(f"{name} values must lie strictly inside (0, 1)")
        object.__setattr__(self, "q1", q1)
        object.__setattr__(self, "q0", q0)
        object.__setattr__(self, "pi", pi)

    def truncated(self, policy: TruncationPolicy) -> "NuisanceField":
        """Return a copy with outcome and propensity clamps applied."""
        return NuisanceField(
            policy.clamp_outcome(self.q1),
            policy.clamp_outcome(self.q0),
            policy.clamp_propensity(self.pi),
        )


def _check_binary(value: int, name: str) -> int:
    if value not in (0, 1):
        raise ValueError(f"{name} must be 0 or 1, got {value!r}")
    return int(value)


@dataclass(frozen=True)
class Observation:
    """A single observed unit (t, y) with an optional covariate vector."""

    t: int
    y: int
    x: np.ndarray | None = field(default=None)

    def __post_init__(self) -> None:
        object.__setattr__(self, "t", _check_binary(self.t, "t"))
        object.__setattr__(self, "y", _check_binary(self.y, "y"))


def _validate_probability_arrays(**named) -> dict[str, np.ndarray]:
    out = {}
    for name, value in named.items():
        arr = np.asarray(value, dtype=float)
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0) or np.any(arr >= 1.0):
            raise ValueError(f"{name} must lie strictly inside (0, 1)")
        out[name] = arr
    return out


def contrast(param: TargetParameter, p1, p0):
    """True effect on the requested scale for arm probabilities (p1, p0).

    Parameters
    ----------
    param : TargetParameter
        Effect scale.
    p1, p0 : float or ndarray
        Outcome probabilities under treatment and control, strictly in (0, 1).

    Returns
    -------
    float or ndarray
        p1 - p0 (ATE), p1(1-p0)/(p0(1-p1)) (OR), p1/p0 (RR), or the log of
        the corresponding ratio for the log variants.
    """
    checked = _validate_probability_arrays(p1=p1, p0=p0)
    p1, p0 = checked["p1"], checked["p0"]
    if param is TargetParameter.ATE:
        value = p1 - p0
    elif param is TargetParameter.OR:
        value = (p1 * (1.0 - p0)) / (p0 * (1.0 - p1))
    elif param is TargetParameter.LOG_OR:
        value = np.log(p1 / (1.0 - p1)) - np.log(p0 / (1.0 - p0))
    elif param is TargetParameter.RR:
        value = p1 / p0
    elif param is TargetParameter.LOG_RR:
        value = np.log(p1) - np.log(p0)
    else:  # pragma: no cover - enum is closed
        raise ValueError(f"unknown parameter {param!r}")
    if np.ndim(value) == 0:
        return float(value)
    return value


def pseudo_outcome_components(param: TargetParameter, q1, q0, pi):
    """Plug-in value and correction slopes (plugin, c1, c0) of a pseudo-outcome.

    The pseudo-outcome is ``plugin + 1{t=1} c1 (y - q1) - 1{t=0} c0 (y - q0)``.
    Exposed because the exact-enumeration oracle relies on this affine-in-y
    structure to evaluate conditional means without catastrophic cancellation.
    """
    checked = _validate_probability_arrays(q1=q1, q0=q0, pi=pi)
    q1, q0, pi = checked["q1"], checked["q0"], checked["pi"]
    one_m_pi = 1.0 - pi
    if param is TargetParameter.ATE:
        plugin = q1 - q0
        c1 = 1.0 / pi
        c0 = 1.0 / one_m_pi
    elif param is TargetParameter.OR:
        ratio = (q1 * (1.0 - q0)) / (q0 * (1.0 - q1))
        plugin = ratio
        c1 = ratio / (q1 * (1.0 - q1) * pi)
        c0 = ratio / (q0 * (1.0 - q0) * one_m_pi)
    elif param is TargetParameter.LOG_OR:
        plugin = np.log(q1 / (1.0 - q1)) - np.log(q0 / (1.0 - q0))
        c1 = 1.0 / (q1 * (1.0 - q1) * pi)
        c0 = 1.0 / (q0 * (1.0 - q0) * one_m_pi)
    elif param is TargetParameter.RR:
        plugin = q1 / q0
        c1 = 1.0 / (q0 * pi)
        c0 = q1 / (q0 * q0 * one_m_pi)
    elif param is TargetParameter.LOG_RR:
        plugin = np.log(q1) - np.log(q0)
        c1 = 1.0 / (q1 * pi)
        c0 = 1.0 / (q0 * one_m_pi)
    else:  # pragma: no cover - enum is closed
        raise ValueError(f"unknown parameter {param!r}")
    return plugin, c1, c0


def _check_binary_array(value, name: str) -> np.ndarray:
    arr = np.asarray(value)
    if not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} entries must be 0 or 1")
    return arr.astype(float)


def pseudo_outcome_values(param: TargetParameter, t, y, q1, q0, pi):
    """Vectorized pseudo-outcome phi_param((t, y); (q1, q0, pi))."""
    t = _check_binary_array(t, "t")
    y = _check_binary_array(y, "y")
    plugin, c1, c0 = pseudo_outcome_components(param, q1, q0, pi)
    q1 = np.asarray(q1, dtype=float)
    q0 = np.asarray(q0, dtype=float)
    return plugin + t * c1 * (y - q1) - (1.0 - t) * c0 * (y - q0)


def pseudo_outcome(param: TargetParameter, obs: Observation, eta: NuisanceTriple) -> float:
    """Doubly robust pseudo-outcome for a single observation.

    Examples
    --------
    >>> eta = NuisanceTriple(0.5, 0.5, 0.5)
    >>> pseudo_outcome(TargetParameter.LOG_OR, Observation(t=1, y=1), eta)
    4.0
    """
    return float(
        pseudo_outcome_values(param, obs.t, obs.y, eta.q1, eta.q0, eta.pi)
    )


def arm_pseudo_outcome_values(arm: int, t, y, q_arm, pi):
    """Vectorized arm-specific pseudo-outcome for P(Y=1 | T=arm, X).

    ``phi_arm = 1{t=arm} / P(T=arm) * (y - q_arm) + q_arm`` with
    ``P(T=arm)`` equal to ``pi`` for arm 1 and ``1 - pi`` for arm 0.
    """
    arm = _check_binary(arm, "arm")
    t = _check_binary_array(t, "t")
    y = _check_binary_array(y, "y")
    checked = _validate_probability_arrays(q_arm=q_arm, pi=pi)
    q_arm, pi = checked["q_arm"], checked["pi"]
    arm_prob = pi if arm == 1 else 1.0 - pi
    indicator = t if arm == 1 else 1.0 - t
    return indicator / arm_prob * (y - q_arm) + q_arm


def arm_pseudo_outcome(arm: int, obs: Observation, eta: NuisanceTriple) -> float:
    """Arm-specific pseudo-outcome for a single observation."""
    q_arm = eta.q1 if arm == 1 else eta.q0
    return float(arm_pseudo_outcome_values(arm, obs.t, obs.y, q_arm, eta.pi))


def rlearner_weight(pi):
    """Propensity-overlap weight pi * (1 - pi); defined on the closed [0, 1]."""
    arr = np.asarray(pi, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("pi must lie in [0, 1]")
    value = arr * (1.0 - arr)
    if np.ndim(pi) == 0:
        return float(value)
    return value


def feasible_range(
    param: TargetParameter, policy: TruncationPolicy = DEFAULT_POLICY
) -> tuple[float, float]:
    """Attainable effect interval implied by the outcome clamp.

    With outcome clamp [a, b]: ATE -> [a-b, b-a], RR -> [a/b, b/a],
    OR -> [a(1-b)/(b(1-a)), b(1-a)/(a(1-b))], and the log variants are the
    logs of the ratio intervals.
    """
    a, b = policy.outcome_clamp
    if param is TargetParameter.ATE:
        return (a - b, b - a)
    if param is TargetParameter.OR:
        hi = (b * (1.0 - a)) / (a * (1.0 - b))
        return (1.0 / hi, hi)
    if param is TargetParameter.LOG_OR:
        hi = np.log(b * (1.0 - a)) - np.log(a * (1.0 - b))
        return (-hi, hi)
    if param is TargetParameter.RR:
        return (a / b, b / a)
    if param is TargetParameter.LOG_RR:
        hi = np.log(b) - np.log(a)
        return (-hi, hi)
    raise ValueError(f"unknown parameter {param!r}")  # pragma: no cover


def truncate(value, interval: tuple[float, float]):
    """Clamp ``value`` (scalar or array) into a closed interval."""
    lo, hi = float(interval[0]), float(interval[1])
    if not lo <= hi:
        raise ValueError(f"invalid interval ({lo}, {hi})")
    clipped = np.clip(value, lo, hi)
    if np.ndim(value) == 0:
        return float(clipped)
    return clipped


def pseudo_outcome_bound(
    param: TargetParameter, policy: TruncationPolicy = DEFAULT_POLICY
) -> float:
    """Upper bound B_phi on |pseudo_outcome| over the truncated domain.

    Instantiated from the clamp ends: with outcome clamp [a_y, b_y] and
    propensity clamp [a_e, b_e], at most one correction term is active per
    observation, but each term is bounded by its worst case and the two
    worst cases are summed, so the bound is conservative.  At the defaults
    (a_y = 0.05, a_e = 0.01) the LogOR bound evaluates to about 4216.4.
    """
    a_y, b_y = policy.outcome_clamp
    a_e, b_e = policy.propensity_clamp
    inv_props = 1.0 / a_e + 1.0 / (1.0 - b_e)
    min_var = min(a_y * (1.0 - a_y), b_y * (1.0 - b_y))
    if param is TargetParameter.ATE:
        return max(b_y, 1.0 - a_y) * inv_props + 2.0 * b_y
    if param is TargetParameter.OR:
        or_max = (b_y * (1.0 - a_y)) / (a_y * (1.0 - b_y))
        return or_max * (1.0 + inv_props / min_var)
    if param is TargetParameter.LOG_OR:
        logit_span = float(
            np.log(b_y / (1.0 - b_y)) - np.log(a_y / (1.0 - a_y))
        )
        return logit_span + inv_props / min_var
    if param is TargetParameter.RR:
        return b_y / a_y + 1.0 / (a_y * a_e) + b_y / (a_y * a_y * (1.0 - b_e))
    if param is TargetParameter.LOG_RR:
        return float(np.log(b_y / a_y)) + 1.0 / (a_y * a_e) + 1.0 / (a_y * (1.0 - b_e))
    raise ValueError(f"unknown parameter {param!r}")  # pragma: no cover
