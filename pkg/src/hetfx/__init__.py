"""Conditional treatment effect estimation on difference and ratio scales.

The package provides:

- :mod:`hetfx.effects`: effect contrasts, doubly robust pseudo-outcomes,
  propensity-overlap weights, and the truncation policy.
- :mod:`hetfx.oracle`: exact-enumeration verification of the conditional-mean
  identities, second-order remainders, risk decomposition, and Neyman
  orthogonality of the pseudo-outcome losses.
- :mod:`hetfx.learners`: self-contained supervised learners (logistic IRLS,
  boosted depth-2 stumps, kernel smoother) and a cross-validated stacking
  ensemble with simplex weights.
- :mod:`hetfx.metalearners`: plug-in, doubly robust, and R-learner effect
  estimators with two-fold swapped cross-fitting.
- :mod:`hetfx.dgp`: a random nonparametric generator of fully tabulated
  synthetic distributions over a 3200-cell covariate grid.
- :mod:`hetfx.harness`: Monte Carlo benchmarking (integrated bias/variance/
  MSE), aggregation, reliability curves, and exact decision-rule evaluation.
- :mod:`hetfx.cli`: the ``hetfx`` command line (gen-dgp, simulate, summarize,
  verify).
"""

from hetfx.dgp import (
    DGPConfig,
    HTELabel,
    InfeasibleDrawError,
    SyntheticDistribution,
    confounding_bias,
    generate,
    hte_label,
    hte_stats,
    load_csv,
    save_csv,
)
from hetfx.effects import (
    DEFAULT_POLICY,
    NuisanceField,
    NuisanceTriple,
    Observation,
    TargetParameter,
    TruncationPolicy,
    arm_pseudo_outcome,
    comparison_parameter,
    contrast,
    feasible_range,
    pseudo_outcome,
    rlearner_weight,
    truncate,
)
from hetfx.harness import (
    MetricsRecord,
    ReliabilityCurve,
    SimPlan,
    aggregate,
    evaluate,
    induce_rule,
    oracle_rule,
    reliability_curve,
    rule_value_exact,
    run_plan,
    sample_dataset,
    true_nuisance_oracle,
)
from hetfx.learners import (
    Dataset,
    LearnerSpec,
    Loss,
    default_library,
    fit_stack,
)
from hetfx.metalearners import (
    CrossFitPlan,
    DegenerateSampleError,
    EstimatorFamily,
    EstimatorSpec,
    Sample,
    fit_estimator,
    standard_estimators,
)
from hetfx.oracle import (
    NuisancePath,
    PointTruth,
    exact_conditional_mean,
    orthogonality_probe,
    remainder,
    run_verification,
    second_order_exponent,
)

__version__ = "0.1.0"

__all__ = [
    "CrossFitPlan",
    "DEFAULT_POLICY",
    "DGPConfig",
    "Dataset",
    "DegenerateSampleError",
    "EstimatorFamily",
    "EstimatorSpec",
    "HTELabel",
    "InfeasibleDrawError",
    "LearnerSpec",
    "Loss",
    "MetricsRecord",
    "NuisanceField",
    "NuisancePath",
    "NuisanceTriple",
    "Observation",
    "PointTruth",
    "ReliabilityCurve",
    "Sample",
    "SimPlan",
    "SyntheticDistribution",
    "TargetParameter",
    "TruncationPolicy",
    "aggregate",
    "arm_pseudo_outcome",
    "comparison_parameter",
    "confounding_bias",
    "contrast",
    "default_library",
    "evaluate",
    "exact_conditional_mean",
    "feasible_range",
    "fit_estimator",
    "fit_stack",
    "generate",
    "hte_label",
    "hte_stats",
    "induce_rule",
    "load_csv",
    "oracle_rule",
    "orthogonality_probe",
    "pseudo_outcome",
    "reliability_curve",
    "remainder",
    "rlearner_weight",
    "rule_value_exact",
    "run_plan",
    "run_verification",
    "sample_dataset",
    "save_csv",
    "second_order_exponent",
    "standard_estimators",
    "true_nuisance_oracle",
    "truncate",
    "__version__",
]
