"""Plugin, doubly robust, and propensity-weighted effect estimators.

Estimator families:

- ``plugin_lr`` / ``plugin_sl``: one pooled outcome model with treatment
  as a feature (logistic regression or the stacked ensemble); effects are
  contrasts of the two per-arm prediction surfaces.
- ``plugin_lr_t`` / ``plugin_sl_t``: the same with separate per-arm fits.
- ``dr_plugin``: cross-fitted arm pseudo-outcomes regressed on the
  covariates to produce refined per-arm probabilities, then contrasts.
- ``dr_direct``: cross-fitted orthogonal pseudo-outcomes for the target
  parameter regressed directly on the covariates (squared loss).
- ``r_direct``: identical to ``dr_direct`` except the second stage
  weights observations by pi_hat(x)(1 - pi_hat(x)).

Cross-fitting uses two swapped halves: nuisances for each half are
trained on the opposite half, second stages are fit per half on its
out-of-fold pseudo-outcomes, and the two second-stage surfaces are
averaged before final truncation.  All probability predictions pass
through the truncation policy, and effect predictions are truncated to
the feasible range their clamps imply.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from hetfx.effects import (
    DEFAULT_POLICY,
    NuisanceField,
    TargetParameter,
    TruncationPolicy,
    arm_pseudo_outcome_values,
    contrast,
    feasible_range,
    pseudo_outcome_values,
    rlearner_weight,
    truncate,
)
from hetfx.learners import (
    Dataset,
    LearnerSpec,
    Loss,
    default_library,
    fit_logistic,
    fit_stack,
)

__all__ = [
    "EstimatorFamily",
    "EstimatorSpec",
    "CrossFitPlan",
    "Sample",
    "DegenerateSampleError",
    "FittedEffectModel",
    "PluginEffectModel",
    "crossfit_nuisances",
    "fit_plugin",
    "fit_plugin_model",
    "fit_dr_plugin",
    "fit_dr_plugin_model",
    "fit_dr_direct",
    "fit_r_direct",
    "fit_estimator",
    "standard_estimators",
    "STANDARD_LABELS",
    "RATIO_SCALE_LABELS",
]


class DegenerateSampleError(ValueError):
    """A sample or half lacks the variation a fit requires."""


class EstimatorFamily(str, Enum):
    PLUGIN_LR = "plugin_lr"
    PLUGIN_LR_T = "plugin_lr_t"
    PLUGIN_SL = "plugin_sl"
    PLUGIN_SL_T = "plugin_sl_t"
    DR_PLUGIN = "dr_plugin"
    DR_DIRECT = "dr_direct"
    R_DIRECT = "r_direct"


_PLUGIN_FAMILIES = (
    EstimatorFamily.PLUGIN_LR,
    EstimatorFamily.PLUGIN_LR_T,
    EstimatorFamily.PLUGIN_SL,
    EstimatorFamily.PLUGIN_SL_T,
)
_DIRECT_FAMILIES = (EstimatorFamily.DR_DIRECT, EstimatorFamily.R_DIRECT)


@dataclass(frozen=True)
class EstimatorSpec:
    """An estimator family plus, for direct families, its target parameter.

    Plugin families and ``dr_plugin`` produce per-arm probabilities and
    can therefore serve any parameter; direct families regress one
    parameter's pseudo-outcome and are bound to it.
    """

    family: EstimatorFamily
    param: TargetParameter | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", EstimatorFamily(self.family))
        if self.param is not None:
            object.__setattr__(self, "param", TargetParameter(self.param))
        if self.family in _DIRECT_FAMILIES and self.param is None:
            raise ValueError(f"{self.family.value} requires a target parameter")


STANDARD_LABELS = (
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
)
RATIO_SCALE_LABELS = ("DR-OR", "DR-RR", "R-OR", "R-RR")


def standard_estimators(include_ratio_scale: bool = False) -> dict[str, EstimatorSpec]:
    """Label -> spec map matching the reported estimator lineup."""
    catalog = {
        "LR": EstimatorSpec(EstimatorFamily.PLUGIN_LR),
        "LR-T": EstimatorSpec(EstimatorFamily.PLUGIN_LR_T),
        "SL": EstimatorSpec(EstimatorFamily.PLUGIN_SL),
        "SL-T": EstimatorSpec(EstimatorFamily.PLUGIN_SL_T),
        "DR-P": EstimatorSpec(EstimatorFamily.DR_PLUGIN),
        "DR-CATE": EstimatorSpec(EstimatorFamily.DR_DIRECT, TargetParameter.ATE),
        "DR-LOR": EstimatorSpec(EstimatorFamily.DR_DIRECT, TargetParameter.LOG_OR),
        "DR-LRR": EstimatorSpec(EstimatorFamily.DR_DIRECT, TargetParameter.LOG_RR),
        "R-CATE": EstimatorSpec(EstimatorFamily.R_DIRECT, TargetParameter.ATE),
        "R-LOR": EstimatorSpec(EstimatorFamily.R_DIRECT, TargetParameter.LOG_OR),
        "R-LRR": EstimatorSpec(EstimatorFamily.R_DIRECT, TargetParameter.LOG_RR),
    }
    if include_ratio_scale:
        catalog.update(
            {
                "DR-OR": EstimatorSpec(EstimatorFamily.DR_DIRECT, TargetParameter.OR),
                "DR-RR": EstimatorSpec(EstimatorFamily.DR_DIRECT, TargetParameter.RR),
                "R-OR": EstimatorSpec(EstimatorFamily.R_DIRECT, TargetParameter.OR),
                "R-RR": EstimatorSpec(EstimatorFamily.R_DIRECT, TargetParameter.RR),
            }
        )
    return catalog


@dataclass(frozen=True)
class Sample:
    """Observed rows (x, t, y) with binary treatment and outcome."""

    X: np.ndarray
    t: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        X = np.asarray(self.X, dtype=float)
        t = np.asarray(self.t, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2 or t.shape != (X.shape[0],) or y.shape != (X.shape[0],):
            raise ValueError("X must be (n, d) with aligned t and y vectors")
        for name, arr in (("t", t), ("y", y)):
            if np.any((arr != 0.0) & (arr != 1.0)):
                raise ValueError(f"{name} must be 0/1")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return len(self.t)

    def arms_present(self) -> bool:
        return bool(self.t.min() == 0.0 and self.t.max() == 1.0)


@dataclass(frozen=True)
class CrossFitPlan:
    """Two complementary index halves for swapped cross-fitting."""

    half_a: np.ndarray
    half_b: np.ndarray
    seed: int = 0

    def __post_init__(self) -> None:
        half_a = np.asarray(self.half_a, dtype=np.int64)
        half_b = np.asarray(self.half_b, dtype=np.int64)
        if len(half_a) == 0 or len(half_b) == 0:
            raise ValueError("both halves must be nonempty")
        merged = np.sort(np.concatenate([half_a, half_b]))
        if not np.array_equal(merged, np.arange(len(merged))):
            raise ValueError("halves must partition 0..n-1")
        object.__setattr__(self, "half_a", half_a)
        object.__setattr__(self, "half_b", half_b)

    @property
    def n(self) -> int:
        return len(self.half_a) + len(self.half_b)

    @classmethod
    def from_seed(cls, n: int, seed: int = 0) -> "CrossFitPlan":
        if n < 2:
            raise ValueError("cross-fitting needs at least 2 rows")
        order = np.random.default_rng(seed).permutation(n)
        return cls(np.sort(order[: n // 2]), np.sort(order[n // 2 :]), seed=seed)


@dataclass(frozen=True)
class FittedEffectModel:
    """A fitted per-point effect predictor on one parameter's scale.

    ``predict`` returns truncated parameter-scale values; ratio-scale
    parameters are additionally exposed on their log comparison scale via
    ``predict_comparison`` (truncation happens on the raw scale first, so
    the log is always defined).
    """

    param: TargetParameter
    policy: TruncationPolicy
    _predict_raw: object

    def predict(self, X: np.ndarray) -> np.ndarray:
        values = np.asarray(self._predict_raw(np.asarray(X, dtype=float)), dtype=float)
        return truncate(values, feasible_range(self.param, self.policy))

    def predict_comparison(self, X: np.ndarray) -> np.ndarray:
        values = self.predict(X)
        if self.param in (TargetParameter.OR, TargetParameter.RR):
            return np.log(values)
        return values

    def effect_model(self, param: TargetParameter) -> "FittedEffectModel":
        if TargetParameter(param) is not self.param:
            raise ValueError(
                f"this model estimates {self.param.value}, not {TargetParameter(param).value}"
            )
        return self


@dataclass(frozen=True)
class PluginEffectModel:
    """Per-arm probability surfaces; any parameter's contrast follows."""

    policy: TruncationPolicy
    _predict_probs: object

    def predict_probs(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        p1, p0 = self._predict_probs(np.asarray(X, dtype=float))
        return (
            self.policy.clamp_outcome(np.asarray(p1, dtype=float)),
            self.policy.clamp_outcome(np.asarray(p0, dtype=float)),
        )

    def effect_model(self, param: TargetParameter) -> FittedEffectModel:
        param = TargetParameter(param)

        def predict_raw(X: np.ndarray) -> np.ndarray:
            p1, p0 = self.predict_probs(X)
            return np.asarray(contrast(param, p1, p0))

        return FittedEffectModel(param=param, policy=self.policy, _predict_raw=predict_raw)


def _spawn_seeds(seed: int, count: int) -> np.ndarray:
    return np.random.default_rng(seed).integers(2**63, size=count)


# ---------------------------------------------------------------------------
# Plugin families
# ---------------------------------------------------------------------------


def _require_both_arms(t: np.ndarray) -> None:
    if t.min() == t.max():
        raise DegenerateSampleError("both treatment arms must be present")


def _pooled_design(X: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.column_stack([X, t])


def _interaction_design(X: np.ndarray, t: np.ndarray) -> np.ndarray:
    treated = t[:, None]
    block1 = np.column_stack([t, X * treated])
    block0 = np.column_stack([1.0 - t, X * (1.0 - treated)])
    return np.column_stack([block1, block0])


def fit_plugin_model(
    family: EstimatorFamily,
    sample: Sample,
    policy: TruncationPolicy = DEFAULT_POLICY,
    seed: int = 0,
    library: list[LearnerSpec] | None = None,
    folds: int = 5,
    full_interactions: bool = False,
) -> PluginEffectModel:
    """Fit a plugin family's per-arm probability surfaces.

    ``full_interactions`` (logistic pooled family only) replaces the
    main-effects design with per-arm intercept and slope blocks, which
    reproduces the two stratified fits exactly.
    """
    family = EstimatorFamily(family)
    if family not in _PLUGIN_FAMILIES:
        raise ValueError(f"{family.value} is not a plugin family")
    if full_interactions and family is not EstimatorFamily.PLUGIN_LR:
        raise ValueError("full_interactions applies to the pooled logistic family")
    _require_both_arms(sample.t)
    X, t, y = sample.X, sample.t, sample.y
    n, d = X.shape

    if family is EstimatorFamily.PLUGIN_LR:
        if full_interactions:
            model = fit_logistic(
                Dataset(_interaction_design(X, t), y),
                add_intercept=False,
                penalty_free=(0, d + 1),
            )

            def predict_probs(Xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
                ones = np.ones(len(Xq))
                zeros = np.zeros(len(Xq))
                p1 = model.predict(_interaction_design(Xq, ones))
                p0 = model.predict(_interaction_design(Xq, zeros))
                return p1, p0

        else:
            model = fit_logistic(Dataset(_pooled_design(X, t), y))

            def predict_probs(Xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
                ones = np.ones(len(Xq))
                p1 = model.predict(_pooled_design(Xq, ones))
                p0 = model.predict(_pooled_design(Xq, 0.0 * ones))
                return p1, p0

    elif family is EstimatorFamily.PLUGIN_LR_T:
        arm_models = {}
        for arm in (1.0, 0.0):
            rows = sample.t == arm
            try:
                arm_models[arm] = fit_logistic(Dataset(X[rows], y[rows]))
            except ValueError as exc:
                raise DegenerateSampleError(f"arm {int(arm)}: {exc}") from exc

        def predict_probs(Xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            return arm_models[1.0].predict(Xq), arm_models[0.0].predict(Xq)

    elif family is EstimatorFamily.PLUGIN_SL:
        stack_seed = int(_spawn_seeds(seed, 1)[0])
        model = _fit_stack_guarded(
            Dataset(_pooled_design(X, t), y), library, folds, Loss.LOG, stack_seed
        )

        def predict_probs(Xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            ones = np.ones(len(Xq))
            p1 = model.predict(_pooled_design(Xq, ones))
            p0 = model.predict(_pooled_design(Xq, 0.0 * ones))
            return p1, p0

    else:  # PLUGIN_SL_T
        seeds = _spawn_seeds(seed, 2)
        arm_stacks = {}
        for arm, arm_seed in ((1.0, seeds[0]), (0.0, seeds[1])):
            rows = sample.t == arm
            arm_stacks[arm] = _fit_stack_guarded(
                Dataset(X[rows], y[rows]), library, folds, Loss.LOG, int(arm_seed)
            )

        def predict_probs(Xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            return arm_stacks[1.0].predict(Xq), arm_stacks[0.0].predict(Xq)

    return PluginEffectModel(policy=policy, _predict_probs=predict_probs)


def fit_plugin(
    spec: EstimatorSpec,
    sample: Sample,
    policy: TruncationPolicy = DEFAULT_POLICY,
    seed: int = 0,
    library: list[LearnerSpec] | None = None,
    full_interactions: bool = False,
) -> FittedEffectModel:
    """Fit a plugin family and bind it to ``spec.param``."""
    if spec.param is None:
        raise ValueError("fit_plugin needs spec.param to choose the contrast")
    model = fit_plugin_model(
        spec.family,
        sample,
        policy=policy,
        seed=seed,
        library=library,
        full_interactions=full_interactions,
    )
    return model.effect_model(spec.param)


def _fit_stack_guarded(data: Dataset, library, folds: int, loss: Loss, seed: int):
    try:
        return fit_stack(data, library=library, folds=folds, loss=loss, seed=seed)
    except (ValueError, RuntimeError) as exc:
        raise DegenerateSampleError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Cross-fitted nuisances
# ---------------------------------------------------------------------------


def crossfit_nuisances(
    sample: Sample,
    plan: CrossFitPlan,
    library: list[LearnerSpec] | None = None,
    policy: TruncationPolicy = DEFAULT_POLICY,
    seed: int = 0,
    folds: int = 5,
    oracle=None,
) -> NuisanceField:
    """Out-of-fold nuisance triple (q1_hat, q0_hat, pi_hat) per observation.

    Observations in one half are scored by models trained on the other
    half; all predictions are truncated by the policy.  ``oracle`` is a
    test hook: a callable mapping covariates to true (p1, p0, e), used in
    place of fitting (its output is truncated identically).
    """
    if plan.n != sample.n:
        raise ValueError("plan does not match the sample size")
    if oracle is not None:
        q1, q0, pi = oracle(sample.X)
        field = NuisanceField(
            q1=np.asarray(q1, dtype=float),
            q0=np.asarray(q0, dtype=float),
            pi=np.asarray(pi, dtype=float),
        )
        return field.truncated(policy)

    seeds = _spawn_seeds(seed, 6)
    q1 = np.empty(sample.n)
    q0 = np.empty(sample.n)
    pi = np.empty(sample.n)
    halves = (
        (plan.half_a, plan.half_b, seeds[:3]),
        (plan.half_b, plan.half_a, seeds[3:]),
    )
    for train, held, half_seeds in halves:
        t_train = sample.t[train]
        if t_train.min() == t_train.max():
            raise DegenerateSampleError("a cross-fitting half has a single arm")
        X_train, y_train = sample.X[train], sample.y[train]
        X_held = sample.X[held]
        pi_model = _fit_stack_guarded(
            Dataset(X_train, t_train), library, folds, Loss.LOG, int(half_seeds[0])
        )
        pi[held] = pi_model.predict(X_held)
        for arm, out, arm_seed in ((1.0, q1, half_seeds[1]), (0.0, q0, half_seeds[2])):
            rows = t_train == arm
            arm_model = _fit_stack_guarded(
                Dataset(X_train[rows], y_train[rows]),
                library,
                folds,
                Loss.LOG,
                int(arm_seed),
            )
            out[held] = arm_model.predict(X_held)
    return NuisanceField(q1=q1, q0=q0, pi=pi).truncated(policy)


# ---------------------------------------------------------------------------
# Second stages
# ---------------------------------------------------------------------------


def _second_stage_average(
    sample: Sample,
    plan: CrossFitPlan,
    responses: np.ndarray,
    weights: np.ndarray | None,
    library: list[LearnerSpec] | None,
    folds: int,
    seed_pair: tuple[int, int],
):
    """Fit one squared-loss stack per half; predictions average the two.

    Second-stage weights are normalized to mean one within each half, so
    constant weights reproduce the unweighted fit exactly.
    """
    models = []
    for half, half_seed in ((plan.half_a, seed_pair[0]), (plan.half_b, seed_pair[1])):
        w = None
        if weights is not None:
            w_half = weights[half]
            w = w_half / np.mean(w_half)
        data = Dataset(sample.X[half], responses[half], w)
        models.append(
            _fit_stack_guarded(data, library, folds, Loss.SQUARED, int(half_seed))
        )

    def predict(Xq: np.ndarray) -> np.ndarray:
        return 0.5 * (models[0].predict(Xq) + models[1].predict(Xq))

    return predict


def fit_dr_plugin_model(
    sample: Sample,
    plan: CrossFitPlan,
    policy: TruncationPolicy = DEFAULT_POLICY,
    seed: int = 0,
    nuisance_library: list[LearnerSpec] | None = None,
    second_library: list[LearnerSpec] | None = None,
    folds: int = 5,
    oracle_nuisances=None,
) -> PluginEffectModel:
    """Refined per-arm probabilities from arm pseudo-outcome regressions."""
    seeds = _spawn_seeds(seed, 5)
    eta = crossfit_nuisances(
        sample, plan, nuisance_library, policy, int(seeds[0]), folds, oracle_nuisances
    )
    phi1 = arm_pseudo_outcome_values(1, sample.t, sample.y, eta.q1, eta.pi)
    phi0 = arm_pseudo_outcome_values(0, sample.t, sample.y, eta.q0, eta.pi)
    predict1 = _second_stage_average(
        sample, plan, phi1, None, second_library, folds, (int(seeds[1]), int(seeds[2]))
    )
    predict0 = _second_stage_average(
        sample, plan, phi0, None, second_library, folds, (int(seeds[3]), int(seeds[4]))
    )

    def predict_probs(Xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return predict1(Xq), predict0(Xq)

    return PluginEffectModel(policy=policy, _predict_probs=predict_probs)


def fit_dr_plugin(
    sample: Sample,
    plan: CrossFitPlan,
    param: TargetParameter,
    policy: TruncationPolicy = DEFAULT_POLICY,
    seed: int = 0,
    nuisance_library: list[LearnerSpec] | None = None,
    second_library: list[LearnerSpec] | None = None,
    folds: int = 5,
    oracle_nuisances=None,
) -> FittedEffectModel:
    """Doubly robust plugin: refined probabilities, then the contrast."""
    model = fit_dr_plugin_model(
        sample,
        plan,
        policy=policy,
        seed=seed,
        nuisance_library=nuisance_library,
        second_library=second_library,
        folds=folds,
        oracle_nuisances=oracle_nuisances,
    )
    return model.effect_model(param)


def _fit_direct(
    sample: Sample,
    plan: CrossFitPlan,
    param: TargetParameter,
    weighted: bool,
    policy: TruncationPolicy,
    seed: int,
    nuisance_library,
    second_library,
    folds: int,
    oracle_nuisances,
) -> FittedEffectModel:
    param = TargetParameter(param)
    seeds = _spawn_seeds(seed, 3)
    eta = crossfit_nuisances(
        sample, plan, nuisance_library, policy, int(seeds[0]), folds, oracle_nuisances
    )
    phi = pseudo_outcome_values(param, sample.t, sample.y, eta.q1, eta.q0, eta.pi)
    weights = rlearner_weight(eta.pi) if weighted else None
    predict_avg = _second_stage_average(
        sample, plan, phi, weights, second_library, folds, (int(seeds[1]), int(seeds[2]))
    )
    return FittedEffectModel(param=param, policy=policy, _predict_raw=predict_avg)


def fit_dr_direct(
    sample: Sample,
    plan: CrossFitPlan,
    param: TargetParameter,
    policy: TruncationPolicy = DEFAULT_POLICY,
    seed: int = 0,
    nuisance_library: list[LearnerSpec] | None = None,
    second_library: list[LearnerSpec] | None = None,
    folds: int = 5,
    oracle_nuisances=None,
) -> FittedEffectModel:
    """Direct pseudo-outcome regression for one target parameter."""
    return _fit_direct(
        sample, plan, param, False, policy, seed,
        nuisance_library, second_library, folds, oracle_nuisances,
    )


def fit_r_direct(
    sample: Sample,
    plan: CrossFitPlan,
    param: TargetParameter,
    policy: TruncationPolicy = DEFAULT_POLICY,
    seed: int = 0,
    nuisance_library: list[LearnerSpec] | None = None,
    second_library: list[LearnerSpec] | None = None,
    folds: int = 5,
    oracle_nuisances=None,
) -> FittedEffectModel:
    """Like :func:`fit_dr_direct` with pi_hat(1 - pi_hat) second-stage weights."""
    return _fit_direct(
        sample, plan, param, True, policy, seed,
        nuisance_library, second_library, folds, oracle_nuisances,
    )


def fit_estimator(
    spec: EstimatorSpec,
    sample: Sample,
    plan: CrossFitPlan | None = None,
    policy: TruncationPolicy = DEFAULT_POLICY,
    seed: int = 0,
    nuisance_library: list[LearnerSpec] | None = None,
    second_library: list[LearnerSpec] | None = None,
    folds: int = 5,
    oracle_nuisances=None,
):
    """Fit any estimator family; returns an object with ``effect_model``.

    Plugin and ``dr_plugin`` families return a :class:`PluginEffectModel`
    serving every parameter; direct families return the single-parameter
    :class:`FittedEffectModel`.
    """
    family = spec.family
    if family in _PLUGIN_FAMILIES:
        return fit_plugin_model(
            family, sample, policy=policy, seed=seed, library=nuisance_library,
            folds=folds,
        )
    if plan is None:
        raise ValueError(f"{family.value} requires a cross-fit plan")
    if family is EstimatorFamily.DR_PLUGIN:
        return fit_dr_plugin_model(
            sample, plan, policy=policy, seed=seed,
            nuisance_library=nuisance_library, second_library=second_library,
            folds=folds, oracle_nuisances=oracle_nuisances,
        )
    fitter = fit_dr_direct if family is EstimatorFamily.DR_DIRECT else fit_r_direct
    return fitter(
        sample, plan, spec.param, policy=policy, seed=seed,
        nuisance_library=nuisance_library, second_library=second_library,
        folds=folds, oracle_nuisances=oracle_nuisances,
    )
