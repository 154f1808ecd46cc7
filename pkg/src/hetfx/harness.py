"""Monte Carlo evaluation harness for effect estimators on synthetic truths.

This module turns a synthetic cell distribution into finite samples, fits an
estimator repeatedly, and scores the fitted effect surfaces against the exact
truth with covariate-integrated metrics:

* ``iBias2``  -- integrated squared bias of the replication-mean surface,
* ``iVariance`` -- integrated across-replication variance,
* ``iMSE``    -- integrated mean squared error (their sum, computed
  independently and checked against the decomposition on every record).

All metrics are computed on each parameter's *comparison scale* (risk
differences raw; odds and risk ratios on the log scale) so that estimators
targeting a ratio and its logarithm are directly comparable.

Replication streams are deterministic: every (distribution, sample size,
replication) triple maps to a dataset seed that does not depend on which
estimator consumes it, so all estimators see identical datasets, while each
estimator draws its own fitting randomness from a separate stream.  Adding
estimators, sizes, or distributions to a plan never perturbs existing
streams.

The module also provides summary aggregation (median / interquartile tables
scaled by 1000), reliability curves (empirical survival functions of a metric
across distributions), and exact decision-rule valuation on the synthetic
truth, including rule induction from a fitted log-odds-ratio surface.
"""

from __future__ import annotations

import csv
import hashlib
import math
import os
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .dgp import SyntheticDistribution, hte_stats
from .effects import (
    DEFAULT_POLICY,
    TargetParameter,
    TruncationPolicy,
    comparison_parameter,
)
from .metalearners import (
    CrossFitPlan,
    DegenerateSampleError,
    EstimatorSpec,
    Sample,
    fit_estimator,
)

__all__ = [
    "MAX_DEGENERATE_REDRAWS",
    "PLUGIN_REPORT_PARAMETERS",
    "METRICS_COLUMNS",
    "PathologicalDistributionError",
    "MetricsRecord",
    "SimPlan",
    "ReliabilityCurve",
    "derive_seed_sequence",
    "sample_dataset",
    "sample_dataset_cells",
    "true_nuisance_oracle",
    "report_parameters",
    "evaluate",
    "run_plan",
    "aggregate",
    "summary_columns",
    "reliability_curve",
    "induce_rule",
    "oracle_rule",
    "rule_value_exact",
    "write_metrics_csv",
    "read_metrics_csv",
    "write_summary_csv",
]

#: Consecutive degenerate datasets tolerated before a distribution is
#: declared pathological for a given sample size.
MAX_DEGENERATE_REDRAWS = 100

#: Comparison-scale parameters reported for estimators that produce full
#: probability surfaces (plugins and the plug-in doubly-robust refinement).
PLUGIN_REPORT_PARAMETERS = (
    TargetParameter.ATE,
    TargetParameter.LOG_OR,
    TargetParameter.LOG_RR,
)

#: Long-format metrics CSV header.
METRICS_COLUMNS = (
    "distribution_id",
    "inter_order",
    "tx_inter",
    "hte_param",
    "hte_label",
    "estimator",
    "n",
    "param",
    "iBias2",
    "iVariance",
    "iMSE",
    "reps_used",
)

#: Sample sizes a simulation plan may request.
ALLOWED_PLAN_SIZES = (200, 500, 1000, 2000)

_METRIC_NAMES = ("iBias2", "iVariance", "iMSE")
_DECOMPOSITION_RTOL = 1e-9


class PathologicalDistributionError(RuntimeError):
    """Raised when a distribution keeps producing single-arm or single-label samples."""


# ---------------------------------------------------------------------------
# Deterministic stream derivation
# ---------------------------------------------------------------------------


def derive_seed_sequence(master: int, *keys: object) -> np.random.SeedSequence:
    """Derive an independent seed stream from a master seed and string/int keys.

    The key tuple is hashed with SHA-256 so any (master, keys) combination
    yields a stable, collision-resistant stream regardless of platform or
    process.  Dataset streams are keyed without the estimator name; fitting
    streams include it.
    """
    for key in keys:
        if not isinstance(key, (int, str)):
            raise TypeError(f"seed keys must be int or str, got {type(key).__name__}")
    payload = repr((int(master),) + tuple(keys)).encode("utf-8")
    digest = hashlib.sha256(payload).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.SeedSequence(words)


def _stream_rng(master: int, *keys: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed_sequence(master, *keys))


# ---------------------------------------------------------------------------
# Dataset sampling
# ---------------------------------------------------------------------------


def sample_dataset_cells(
    dist: SyntheticDistribution, n: int, rng: np.random.Generator
) -> tuple[Sample, np.ndarray]:
    """Draw an i.i.d. dataset of size ``n`` plus the sampled cell indices.

    Cells are drawn from P(X), treatment from P(T=1|X), and the outcome from
    P(Y=1|T,X).  A draw whose treatment or outcome column is constant cannot
    support estimation, so the whole dataset is regenerated; after
    ``MAX_DEGENERATE_REDRAWS`` consecutive degenerate draws the distribution
    is reported as pathological for this sample size.
    """
    if n < 2:
        raise ValueError("need at least two observations")
    features = dist.features()
    for _ in range(MAX_DEGENERATE_REDRAWS):
        cells = rng.choice(dist.n_cells, size=n, p=dist.p_x)
        t = (rng.random(n) < dist.p_t1[cells]).astype(float)
        p_y = np.where(t == 1.0, dist.p_y1_t1[cells], dist.p_y1_t0[cells])
        y = (rng.random(n) < p_y).astype(float)
        if t.min() == t.max() or y.min() == y.max():
            continue
        return Sample(X=features[cells], t=t, y=y), cells
    raise PathologicalDistributionError(
        f"{MAX_DEGENERATE_REDRAWS} consecutive degenerate samples at n={n}"
    )


def sample_dataset(
    dist: SyntheticDistribution, n: int, rng: np.random.Generator
) -> Sample:
    """Draw an i.i.d. dataset of size ``n`` from a synthetic distribution."""
    sample, _ = sample_dataset_cells(dist, n, rng)
    return sample


def true_nuisance_oracle(
    dist: SyntheticDistribution,
) -> Callable[[np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Exact nuisance lookup ``X -> (p1, p0, e)`` for rows on the cell grid.

    Sampled covariate rows are copies of grid rows, so a byte-exact lookup
    recovers each observation's cell.  Rows off the grid raise ``KeyError``.
    """
    features = np.ascontiguousarray(dist.features(), dtype=float)
    index = {row.tobytes(): i for i, row in enumerate(features)}

    def oracle(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        rows = np.ascontiguousarray(np.asarray(X, dtype=float))
        if rows.ndim != 2 or rows.shape[1] != features.shape[1]:
            raise ValueError("query rows must match the grid feature layout")
        idx = np.empty(rows.shape[0], dtype=np.intp)
        for k in range(rows.shape[0]):
            cell = index.get(rows[k].tobytes())
            if cell is None:
                raise KeyError("covariate row is not on the distribution grid")
            idx[k] = cell
        return dist.p_y1_t1[idx], dist.p_y1_t0[idx], dist.p_t1[idx]

    return oracle


# ---------------------------------------------------------------------------
# Metrics records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricsRecord:
    """Integrated metrics for one (distribution, estimator, n, parameter) cell.

    ``param`` names the reported comparison-scale parameter; ``hte_label`` is
    the distribution's High/Low heterogeneity label computed on
    ``hte_param``.  ``reps_used`` counts the replications that produced a fit
    (failed replications are excluded from all three metrics).
    """

    distribution_id: str
    inter_order: int
    tx_inter: bool
    hte_param: str
    hte_label: str
    estimator: str
    n: int
    param: str
    i_bias2: float
    i_variance: float
    i_mse: float
    reps_used: int

    def __post_init__(self) -> None:
        if self.n < 1 or self.reps_used < 1:
            raise ValueError("n and reps_used must be positive")
        for value in (self.i_bias2, self.i_variance, self.i_mse):
            if not math.isfinite(value) or value < 0.0:
                raise ValueError("metrics must be finite and nonnegative")
        if self.decomposition_gap() > _DECOMPOSITION_RTOL * max(1.0, self.i_mse):
            raise ValueError(
                "iMSE does not decompose into iBias2 + iVariance: "
                f"gap={self.decomposition_gap():.3e}"
            )

    def decomposition_gap(self) -> float:
        """|iMSE - (iBias2 + iVariance)|, checked on construction."""
        return abs(self.i_mse - (self.i_bias2 + self.i_variance))


def distribution_metadata(dist: SyntheticDistribution) -> tuple[int, bool]:
    """(inter_order, tx_inter) from generation provenance; (0, False) if absent."""
    provenance = dist.provenance or {}
    config = provenance.get("config") or {}
    return int(config.get("inter_order", 0)), bool(config.get("tx_inter", False))


def report_parameters(spec: EstimatorSpec) -> tuple[TargetParameter, ...]:
    """Comparison-scale parameters a fitted estimator is scored on.

    Single-parameter (direct pseudo-outcome) estimators report their own
    target; probability-surface estimators report every comparison-scale
    parameter.
    """
    if spec.param is not None:
        return (spec.param,)
    return PLUGIN_REPORT_PARAMETERS


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def evaluate(
    dist: SyntheticDistribution,
    estimator_label: str,
    spec: EstimatorSpec,
    *,
    distribution_id: str,
    n: int,
    b_reps: int,
    master_seed: int,
    policy: TruncationPolicy = DEFAULT_POLICY,
    hte_param: TargetParameter = TargetParameter.LOG_OR,
    params: Sequence[TargetParameter] | None = None,
    fitter: Callable[[Sample, CrossFitPlan, int], object] | None = None,
    oracle_nuisances: bool = False,
    nuisance_library=None,
    second_library=None,
    folds: int = 5,
) -> list[MetricsRecord]:
    """Monte Carlo evaluation of one estimator on one distribution and size.

    Runs ``b_reps`` replications.  Each replication draws a dataset from the
    estimator-independent data stream, fits the estimator with its own
    fitting stream, and records the fitted surface on each reported
    parameter's comparison scale over the full cell grid.  Returns one
    :class:`MetricsRecord` per reported parameter with

    * ``iBias2``    = sum_x P(x) (mean_b thetahat_b(x) - theta(x))^2,
    * ``iVariance`` = sum_x P(x) B^-1 sum_b (thetahat_b(x) - mean_b)^2,
    * ``iMSE``      = sum_x P(x) B^-1 sum_b (thetahat_b(x) - theta(x))^2,

    where theta is the exact truth on the comparison scale.  Replications
    whose fit degenerates are excluded; ``reps_used`` counts the survivors.

    ``fitter`` replaces the standard fitting path (for injecting hand-built
    surfaces); ``oracle_nuisances`` injects the exact nuisance triple into
    cross-fitted estimators.  Raises ``RuntimeError`` if every replication
    fails.
    """
    if b_reps < 1:
        raise ValueError("b_reps must be positive")
    report = tuple(params) if params is not None else report_parameters(spec)
    if not report:
        raise ValueError("no parameters to report")
    if spec.param is not None:
        for param in report:
            if param is not spec.param:
                raise ValueError(
                    f"{estimator_label} targets {spec.param.value} only"
                )

    features = dist.features()
    oracle = true_nuisance_oracle(dist) if oracle_nuisances else None
    predictions: dict[TargetParameter, list[np.ndarray]] = {p: [] for p in report}
    reps_used = 0
    for rep in range(b_reps):
        data_rng = _stream_rng(master_seed, "data", distribution_id, n, rep)
        fit_rng = _stream_rng(
            master_seed, "fit", distribution_id, estimator_label, n, rep
        )
        sample = sample_dataset(dist, n, data_rng)
        plan_seed = int(fit_rng.integers(2**63))
        fit_seed = int(fit_rng.integers(2**63))
        plan = CrossFitPlan.from_seed(sample.n, plan_seed)
        try:
            if fitter is not None:
                fitted = fitter(sample, plan, fit_seed)
            else:
                fitted = fit_estimator(
                    spec,
                    sample,
                    plan=plan,
                    policy=policy,
                    seed=fit_seed,
                    nuisance_library=nuisance_library,
                    second_library=second_library,
                    folds=folds,
                    oracle_nuisances=oracle,
                )
        except DegenerateSampleError:
            continue
        for param in report:
            model = fitted.effect_model(param)
            predictions[param].append(np.asarray(model.predict_comparison(features)))
        reps_used += 1
    if reps_used == 0:
        raise RuntimeError(
            f"every replication failed for {estimator_label} at n={n} "
            f"on {distribution_id}"
        )

    inter_order, tx_inter = distribution_metadata(dist)
    label = hte_stats(dist, hte_param).label.value
    records = []
    for param in report:
        surface = np.vstack(predictions[param])
        truth = dist.theta(comparison_parameter(param))
        mean_surface = surface.mean(axis=0)
        i_bias2 = float(np.dot(dist.p_x, (mean_surface - truth) ** 2))
        i_variance = float(
            np.dot(dist.p_x, ((surface - mean_surface) ** 2).mean(axis=0))
        )
        i_mse = float(np.dot(dist.p_x, ((surface - truth) ** 2).mean(axis=0)))
        records.append(
            MetricsRecord(
                distribution_id=distribution_id,
                inter_order=inter_order,
                tx_inter=tx_inter,
                hte_param=hte_param.value,
                hte_label=label,
                estimator=estimator_label,
                n=n,
                param=param.value,
                i_bias2=i_bias2,
                i_variance=i_variance,
                i_mse=i_mse,
                reps_used=reps_used,
            )
        )
    return records


# ---------------------------------------------------------------------------
# Simulation plans
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimPlan:
    """A full simulation grid: distributions x estimators x sample sizes.

    ``distributions`` and ``estimators`` are (id, object) pairs whose order
    fixes the execution order; streams themselves are keyed by id/label so
    reordering or extending the plan never changes existing results.
    """

    distributions: tuple[tuple[str, SyntheticDistribution], ...]
    estimators: tuple[tuple[str, EstimatorSpec], ...]
    sizes: tuple[int, ...]
    b_reps: int = 100
    master_seed: int = 0
    hte_param: TargetParameter = TargetParameter.LOG_OR
    policy: TruncationPolicy = DEFAULT_POLICY

    def __post_init__(self) -> None:
        if self.b_reps < 1:
            raise ValueError("b_reps must be positive")
        if not self.sizes:
            raise ValueError("plan needs at least one sample size")
        for size in self.sizes:
            if size not in ALLOWED_PLAN_SIZES:
                raise ValueError(
                    f"sample size {size} not in {ALLOWED_PLAN_SIZES}"
                )
        if len(set(self.sizes)) != len(self.sizes):
            raise ValueError("duplicate sample sizes")
        dist_ids = [key for key, _ in self.distributions]
        est_ids = [key for key, _ in self.estimators]
        if len(set(dist_ids)) != len(dist_ids):
            raise ValueError("duplicate distribution ids")
        if len(set(est_ids)) != len(est_ids):
            raise ValueError("duplicate estimator labels")

    def tasks(self) -> list[tuple[str, str, int]]:
        """Deterministic (distribution_id, estimator, n) execution order."""
        return [
            (dist_id, label, size)
            for dist_id, _ in self.distributions
            for label, _ in self.estimators
            for size in self.sizes
        ]


def run_plan(
    plan: SimPlan,
    *,
    completed: Iterable[tuple[str, str, int]] = (),
    record_sink: Callable[[list[MetricsRecord], tuple[str, str, int]], None]
    | None = None,
    nuisance_library=None,
    second_library=None,
    folds: int = 5,
) -> list[MetricsRecord]:
    """Run every (distribution, estimator, size) cell of a plan.

    Cells listed in ``completed`` are skipped, which makes interrupted runs
    resumable.  ``record_sink`` is called with each finished cell's records
    (for incremental persistence) before the next cell starts.
    """
    done = set(completed)
    dists = dict(plan.distributions)
    specs = dict(plan.estimators)
    records: list[MetricsRecord] = []
    for dist_id, label, size in plan.tasks():
        if (dist_id, label, size) in done:
            continue
        cell_records = evaluate(
            dists[dist_id],
            label,
            specs[label],
            distribution_id=dist_id,
            n=size,
            b_reps=plan.b_reps,
            master_seed=plan.master_seed,
            policy=plan.policy,
            hte_param=plan.hte_param,
            nuisance_library=nuisance_library,
            second_library=second_library,
            folds=folds,
        )
        records.extend(cell_records)
        if record_sink is not None:
            record_sink(cell_records, (dist_id, label, size))
    return records


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


def summary_columns(include_tx_inter: bool = False) -> tuple[str, ...]:
    """Header of the aggregated summary table."""
    keys = ["inter_order"]
    if include_tx_inter:
        keys.append("tx_inter")
    keys += ["n", "hte_label", "estimator", "param", "n_distributions"]
    for metric in _METRIC_NAMES:
        keys += [f"{metric}_median", f"{metric}_q25", f"{metric}_q75"]
    return tuple(keys)


def aggregate(
    records: Sequence[MetricsRecord],
    *,
    include_tx_inter: bool = False,
    scale: float = 1000.0,
) -> list[dict]:
    """Median and interquartile summaries of each metric across distributions.

    Records are grouped by (inter_order, n, hte_label, estimator, param) --
    plus tx_inter when requested -- and each metric's median, 25th, and 75th
    percentiles across the stratum's distributions are reported, multiplied
    by ``scale`` (1000 by convention).  Percentiles use the midpoint
    convention: with an even count the median is the mean of the two central
    order statistics.
    """
    groups: dict[tuple, list[MetricsRecord]] = {}
    for record in records:
        key = [record.inter_order]
        if include_tx_inter:
            key.append(record.tx_inter)
        key += [record.n, record.hte_label, record.estimator, record.param]
        groups.setdefault(tuple(key), []).append(record)
    rows = []
    for key in sorted(groups):
        members = groups[key]
        seen = set()
        for member in members:
            if member.distribution_id in seen:
                raise ValueError(
                    "duplicate record for distribution "
                    f"{member.distribution_id} in stratum {key}"
                )
            seen.add(member.distribution_id)
        row = dict(zip(summary_columns(include_tx_inter), key))
        row["n_distributions"] = len(members)
        for metric, attr in zip(_METRIC_NAMES, ("i_bias2", "i_variance", "i_mse")):
            values = np.array([getattr(m, attr) for m in members], dtype=float)
            q25, q50, q75 = np.percentile(values, [25.0, 50.0, 75.0], method="midpoint")
            row[f"{metric}_median"] = float(q50) * scale
            row[f"{metric}_q25"] = float(q25) * scale
            row[f"{metric}_q75"] = float(q75) * scale
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# Reliability curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReliabilityCurve:
    """Empirical survival function of a metric across distributions.

    ``values`` holds the sorted input multiset; ``survival[k]`` is the
    fraction of values strictly greater than ``values[k]``.  The curve is
    right-continuous and nonincreasing, and ends at zero.
    """

    values: np.ndarray
    survival: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        survival = np.asarray(self.survival, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "survival", survival)
        if values.ndim != 1 or values.shape != survival.shape or values.size == 0:
            raise ValueError("values and survival must be matching 1-d arrays")
        if np.any(np.diff(values) < 0.0):
            raise ValueError("values must be sorted ascending")
        if np.any(np.diff(survival) > 0.0):
            raise ValueError("survival must be nonincreasing")
        if np.any((survival < 0.0) | (survival > 1.0)) or survival[-1] != 0.0:
            raise ValueError("survival must lie in [0, 1] and end at zero")

    @property
    def n(self) -> int:
        return int(self.values.size)

    def probability_above(self, t) -> np.ndarray | float:
        """P(metric > t), right-continuous in ``t``."""
        t = np.asarray(t, dtype=float)
        above = self.n - np.searchsorted(self.values, t, side="right")
        result = above / self.n
        return float(result) if result.ndim == 0 else result

    def steps(self) -> list[tuple[float, float]]:
        """Deduplicated (threshold, survival) pairs for serialization."""
        thresholds, first = np.unique(self.values, return_index=True)
        last = np.concatenate([first[1:] - 1, [self.n - 1]])
        return [
            (float(t), float(self.survival[k]))
            for t, k in zip(thresholds, last)
        ]


def reliability_curve(values: Sequence[float]) -> ReliabilityCurve:
    """Build the empirical survival curve of a metric sample."""
    vals = np.sort(np.asarray(list(values), dtype=float))
    if vals.size == 0:
        raise ValueError("need at least one value")
    if not np.all(np.isfinite(vals)):
        raise ValueError("values must be finite")
    survival = (vals.size - np.searchsorted(vals, vals, side="right")) / vals.size
    return ReliabilityCurve(values=vals, survival=survival)


# ---------------------------------------------------------------------------
# Decision rules
# ---------------------------------------------------------------------------


def induce_rule(model) -> Callable[[np.ndarray], np.ndarray]:
    """Treatment rule d(x) = 1{log-odds-ratio surface < 0} from a fitted model.

    Treating lowers the odds of the (adverse) outcome exactly where the
    log odds ratio is negative, so the induced rule treats on strict
    negativity.  Models fitted to any other parameter are rejected.
    """
    param = getattr(model, "param", None)
    if param is not TargetParameter.LOG_OR:
        raise ValueError(
            "rule induction requires a LogOR effect model, got "
            f"{getattr(param, 'value', param)!r}"
        )

    def rule(X: np.ndarray) -> np.ndarray:
        return (np.asarray(model.predict(X)) < 0.0).astype(int)

    return rule


def oracle_rule(dist: SyntheticDistribution) -> np.ndarray:
    """Per-cell oracle rule 1{P(Y=1|T=1,x) < P(Y=1|T=0,x)}."""
    return (dist.p_y1_t1 < dist.p_y1_t0).astype(int)


def rule_value_exact(dist: SyntheticDistribution, rule) -> float:
    """Exact mean outcome probability under a treatment rule (smaller is better).

    ``rule`` is either a per-cell 0/1 array or a callable mapping the feature
    grid to one.  The value is sum_x P(x) P(Y=1 | T=d(x), x), computed by
    exact enumeration over cells.
    """
    if callable(rule):
        decisions = np.asarray(rule(dist.features()))
    else:
        decisions = np.asarray(rule)
    if decisions.shape != (dist.n_cells,):
        raise ValueError("rule must produce one decision per cell")
    decisions = decisions.astype(float)
    if not np.all((decisions == 0.0) | (decisions == 1.0)):
        raise ValueError("rule decisions must be 0 or 1")
    chosen = np.where(decisions == 1.0, dist.p_y1_t1, dist.p_y1_t0)
    return math.fsum(dist.p_x * chosen)


# ---------------------------------------------------------------------------
# CSV persistence
# ---------------------------------------------------------------------------


def _format_float(value: float) -> str:
    return format(value, ".17g")


def _record_row(record: MetricsRecord) -> list[str]:
    return [
        record.distribution_id,
        str(record.inter_order),
        "TRUE" if record.tx_inter else "FALSE",
        record.hte_param,
        record.hte_label,
        record.estimator,
        str(record.n),
        record.param,
        _format_float(record.i_bias2),
        _format_float(record.i_variance),
        _format_float(record.i_mse),
        str(record.reps_used),
    ]


def write_metrics_csv(
    records: Sequence[MetricsRecord], path: str, *, append: bool = False
) -> None:
    """Write (or append) metrics records in the long-format CSV schema."""
    fresh = not append or not os.path.exists(path) or os.path.getsize(path) == 0
    mode = "a" if append else "w"
    with open(path, mode, encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        if fresh:
            writer.writerow(METRICS_COLUMNS)
        for record in records:
            writer.writerow(_record_row(record))


def _parse_bool(text: str, line: int) -> bool:
    if text == "TRUE":
        return True
    if text == "FALSE":
        return False
    raise ValueError(f"line {line}: expected TRUE or FALSE, got {text!r}")


def read_metrics_csv(path: str) -> list[MetricsRecord]:
    """Read a long-format metrics CSV, validating header and every row."""
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty metrics file") from None
        if tuple(header) != METRICS_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header!r}")
        records = []
        for line, row in enumerate(reader, start=2):
            if len(row) != len(METRICS_COLUMNS):
                raise ValueError(f"{path}: line {line}: expected "
                                 f"{len(METRICS_COLUMNS)} fields, got {len(row)}")
            try:
                records.append(
                    MetricsRecord(
                        distribution_id=row[0],
                        inter_order=int(row[1]),
                        tx_inter=_parse_bool(row[2], line),
                        hte_param=row[3],
                        hte_label=row[4],
                        estimator=row[5],
                        n=int(row[6]),
                        param=row[7],
                        i_bias2=float(row[8]),
                        i_variance=float(row[9]),
                        i_mse=float(row[10]),
                        reps_used=int(row[11]),
                    )
                )
            except ValueError as exc:
                raise ValueError(f"{path}: line {line}: {exc}") from exc
    return records


def write_summary_csv(
    rows: Sequence[Mapping[str, object]], path: str, *, include_tx_inter: bool = False
) -> None:
    """Write aggregated summary rows produced by :func:`aggregate`."""
    columns = summary_columns(include_tx_inter)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            out = []
            for column in columns:
                value = row[column]
                if isinstance(value, bool):
                    out.append("TRUE" if value else "FALSE")
                elif isinstance(value, float):
                    out.append(_format_float(value))
                else:
                    out.append(str(value))
            writer.writerow(out)
