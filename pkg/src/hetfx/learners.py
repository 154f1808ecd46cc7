"""Self-contained supervised learners and a cross-validated stacking ensemble.

Three learner families cover the parametric / tree / smooth trichotomy:

- main-effects GLM: logistic regression via ridge-stabilized IRLS for
  binary responses, ridge least squares for real-valued responses;
- gradient-boosted depth-<=2 trees with squared or log loss;
- a Nadaraya-Watson product-kernel smoother (Gaussian kernel on numeric
  columns, exponential-Hamming kernel on binary columns).

Every fit honors nonnegative observation weights without normalizing
them, so integer weights are exactly equivalent to row duplication.
:func:`fit_stack` combines the families by minimizing fold-held-out loss
over the probability simplex; the ensemble's cross-validated risk never
exceeds the best single member's because optimization starts at that
member's vertex and only keeps improvements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

__all__ = [
    "Loss",
    "LearnerKind",
    "LearnerSpec",
    "Dataset",
    "LogisticModel",
    "LinearModel",
    "BoostedStumpsModel",
    "KernelSmootherModel",
    "StackedEnsemble",
    "fit_logistic",
    "fit_linear",
    "fit_boosted_stumps",
    "fit_kernel_smoother",
    "fit_learner",
    "fit_stack",
    "predict",
    "default_library",
]

_PROB_CLIP = 1e-12


class Loss(str, Enum):
    SQUARED = "squared"
    LOG = "log"


class LearnerKind(str, Enum):
    LOGISTIC_MAIN_EFFECTS = "logistic_main_effects"
    BOOSTED_STUMPS = "boosted_stumps"
    KERNEL_SMOOTHER = "kernel_smoother"


@dataclass(frozen=True)
class LearnerSpec:
    """One learner family plus its hyperparameters.

    Fields irrelevant to ``kind`` are ignored.  ``bandwidth`` applies to
    numeric columns of the kernel smoother, ``hamming_weight`` to its
    binary columns; boosting uses ``n_trees`` depth-<=2 trees with the
    given ``learning_rate`` and optional row ``subsample`` fraction.
    """

    kind: LearnerKind
    n_trees: int = 100
    learning_rate: float = 0.1
    subsample: float = 1.0
    min_leaf_weight: float = 5.0
    bandwidth: float = 0.15
    hamming_weight: float = 2.0
    ridge: float = 1e-6

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", LearnerKind(self.kind))
        if self.n_trees < 1:
            raise ValueError("n_trees must be positive")
        if not (0.0 < self.learning_rate <= 1.0):
            raise ValueError("learning_rate must lie in (0, 1]")
        if not (0.0 < self.subsample <= 1.0):
            raise ValueError("subsample must lie in (0, 1]")
        if self.min_leaf_weight <= 0.0:
            raise ValueError("min_leaf_weight must be positive")
        if self.bandwidth <= 0.0:
            raise ValueError("bandwidth must be positive")
        if self.hamming_weight < 0.0:
            raise ValueError("hamming_weight must be nonnegative")
        if self.ridge < 0.0:
            raise ValueError("ridge must be nonnegative")


def default_library(loss: Loss) -> list[LearnerSpec]:
    """The standard three-member library used by the estimation stages."""
    del loss  # same member kinds for both losses; fitting adapts per loss
    return [
        LearnerSpec(kind=LearnerKind.LOGISTIC_MAIN_EFFECTS),
        LearnerSpec(kind=LearnerKind.BOOSTED_STUMPS),
        LearnerSpec(kind=LearnerKind.KERNEL_SMOOTHER),
    ]


@dataclass(frozen=True)
class Dataset:
    """Feature matrix, response vector, and nonnegative observation weights."""

    X: np.ndarray
    y: np.ndarray
    w: np.ndarray | None = None

    def __post_init__(self) -> None:
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2:
            raise ValueError("X must be a 2-d matrix")
        if y.shape != (X.shape[0],):
            raise ValueError("y must have one entry per row of X")
        w = self.w
        w = np.ones(len(y)) if w is None else np.asarray(w, dtype=float)
        if w.shape != y.shape:
            raise ValueError("w must have one entry per row of X")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y)) and np.all(np.isfinite(w))):
            raise ValueError("features, responses, and weights must be finite")
        if np.any(w < 0.0):
            raise ValueError("weights must be nonnegative")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w", w)

    @property
    def n(self) -> int:
        return len(self.y)

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(self.X[indices], self.y[indices], self.w[indices])


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _clip_probability(p: np.ndarray) -> np.ndarray:
    return np.clip(p, _PROB_CLIP, 1.0 - _PROB_CLIP)


# ---------------------------------------------------------------------------
# Main-effects GLM
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LogisticModel:
    """Logistic regression fit; ``coef[0]`` is the intercept when added."""

    coef: np.ndarray
    add_intercept: bool
    converged: bool

    def decision_values(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        design = _with_intercept(X) if self.add_intercept else X
        return design @ self.coef

    def predict(self, X: np.ndarray) -> np.ndarray:
        return _clip_probability(_sigmoid(self.decision_values(X)))


@dataclass(frozen=True)
class LinearModel:
    """Ridge least-squares fit; ``coef[0]`` is the intercept when added."""

    coef: np.ndarray
    add_intercept: bool

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        design = _with_intercept(X) if self.add_intercept else X
        return design @ self.coef


def _with_intercept(X: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(len(X)), X])


def _penalty_diagonal(
    n_cols: int, ridge: float, add_intercept: bool, penalty_free: tuple[int, ...]
) -> np.ndarray:
    diag = np.full(n_cols, ridge)
    free = set(penalty_free)
    if add_intercept:
        diag[0] = 0.0
        free = {index + 1 for index in penalty_free}
    for index in free:
        diag[index] = 0.0
    return diag


def fit_logistic(
    data: Dataset,
    ridge: float = 1e-6,
    add_intercept: bool = True,
    penalty_free: tuple[int, ...] = (),
    max_iter: int = 100,
    tol: float = 1e-10,
) -> LogisticModel:
    """Weighted logistic regression by ridge-stabilized IRLS.

    The ridge acts on slope coefficients only (the intercept and any
    ``penalty_free`` columns are exempt), which keeps separable data at
    finite coefficients without biasing the baseline rate.  If Newton
    steps stop improving the penalized loss before the step-size
    tolerance is met the last iterate is returned with ``converged``
    False.
    """
    y = data.y
    if np.any((y != 0.0) & (y != 1.0)):
        raise ValueError("logistic fits require 0/1 responses")
    if np.unique(y[data.w > 0.0]).size < 2:
        raise ValueError("logistic fits require both response classes present")
    design = _with_intercept(data.X) if add_intercept else np.asarray(data.X, float)
    n, d = design.shape
    penalty = _penalty_diagonal(d, ridge, add_intercept, penalty_free)
    w = data.w

    def penalized_loss(beta: np.ndarray) -> float:
        z = design @ beta
        # log(1 + exp(-|z|)) + max(0, -z*sign) form, stable for large |z|
        loglik = w @ (np.logaddexp(0.0, z) - y * z)
        return float(loglik + 0.5 * np.dot(penalty, beta * beta))

    beta = np.zeros(d)
    loss = penalized_loss(beta)
    converged = False
    for _ in range(max_iter):
        p = _sigmoid(design @ beta)
        grad = design.T @ (w * (y - p)) - penalty * beta
        curvature = w * p * (1.0 - p)
        hessian = design.T @ (design * curvature[:, None]) + np.diag(penalty)
        try:
            step = np.linalg.solve(hessian, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hessian, grad, rcond=None)[0]
        scale = 1.0
        improved = False
        for _ in range(30):
            candidate = beta + scale * step
            candidate_loss = penalized_loss(candidate)
            if candidate_loss <= loss:
                improved = True
                break
            scale *= 0.5
        if not improved:
            break
        moved = float(np.max(np.abs(scale * step)))
        beta, loss = candidate, candidate_loss
        if moved < tol:
            converged = True
            break
    return LogisticModel(coef=beta, add_intercept=add_intercept, converged=converged)


def fit_linear(
    data: Dataset,
    ridge: float = 1e-6,
    add_intercept: bool = True,
    penalty_free: tuple[int, ...] = (),
) -> LinearModel:
    """Weighted ridge least squares (the squared-loss GLM family member)."""
    design = _with_intercept(data.X) if add_intercept else np.asarray(data.X, float)
    d = design.shape[1]
    penalty = _penalty_diagonal(d, ridge, add_intercept, penalty_free)
    weighted = design * data.w[:, None]
    gram = design.T @ weighted + np.diag(penalty)
    rhs = weighted.T @ data.y
    try:
        coef = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        coef = np.linalg.lstsq(gram, rhs, rcond=None)[0]
    return LinearModel(coef=coef, add_intercept=add_intercept)


# ---------------------------------------------------------------------------
# Gradient-boosted depth-<=2 trees
# ---------------------------------------------------------------------------

_MAX_THRESHOLDS = 32
_MAX_LOG_LEAF = 4.0


@dataclass(frozen=True)
class _TreeNode:
    feature: int
    threshold: float
    left: "object"
    right: "object"


@dataclass(frozen=True)
class BoostedStumpsModel:
    """Additive ensemble of depth-<=2 regression trees."""

    init_score: float
    trees: tuple
    learning_rate: float
    loss: Loss

    def raw_scores(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        scores = np.full(len(X), self.init_score)
        for tree in self.trees:
            scores += self.learning_rate * _tree_predict(tree, X)
        return scores

    def predict(self, X: np.ndarray) -> np.ndarray:
        scores = self.raw_scores(X)
        if self.loss is Loss.LOG:
            return _clip_probability(_sigmoid(scores))
        return scores


def _tree_predict(node, X: np.ndarray) -> np.ndarray:
    if not isinstance(node, _TreeNode):
        return np.full(len(X), float(node))
    out = np.empty(len(X))
    go_left = X[:, node.feature] <= node.threshold
    out[go_left] = _tree_predict_rows(node.left, X, go_left)
    out[~go_left] = _tree_predict_rows(node.right, X, ~go_left)
    return out


def _tree_predict_rows(node, X: np.ndarray, mask: np.ndarray) -> np.ndarray:
    if not isinstance(node, _TreeNode):
        return float(node)
    return _tree_predict(node, X[mask])


def _feature_thresholds(column: np.ndarray) -> np.ndarray:
    values = np.unique(column)
    if len(values) < 2:
        return np.empty(0)
    mids = 0.5 * (values[:-1] + values[1:])
    if len(mids) > _MAX_THRESHOLDS:
        pick = np.linspace(0, len(mids) - 1, _MAX_THRESHOLDS).round().astype(int)
        mids = mids[np.unique(pick)]
    return mids


def _best_split(
    bins: list[np.ndarray],
    thresholds: list[np.ndarray],
    idx: np.ndarray,
    grad: np.ndarray,
    hess: np.ndarray,
    weight: np.ndarray,
    min_leaf_weight: float,
):
    """Best (feature, threshold) by weighted gain; first maximum wins ties."""
    g, h, w = grad[idx], hess[idx], weight[idx]
    total_g, total_h, total_w = g.sum(), h.sum(), w.sum()
    if total_h <= 1e-12 or total_w < 2.0 * min_leaf_weight:
        return None
    parent_score = total_g * total_g / total_h
    best = None
    best_gain = 1e-12
    for feature, mids in enumerate(thresholds):
        if len(mids) == 0:
            continue
        b = bins[feature][idx]
        k = len(mids) + 1
        left_g = np.cumsum(np.bincount(b, weights=g, minlength=k))[:-1]
        left_h = np.cumsum(np.bincount(b, weights=h, minlength=k))[:-1]
        left_w = np.cumsum(np.bincount(b, weights=w, minlength=k))[:-1]
        right_g, right_h, right_w = total_g - left_g, total_h - left_h, total_w - left_w
        valid = (
            (left_w >= min_leaf_weight)
            & (right_w >= min_leaf_weight)
            & (left_h > 1e-12)
            & (right_h > 1e-12)
        )
        if not valid.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            gains = left_g**2 / left_h + right_g**2 / right_h - parent_score
        gains[~valid] = -np.inf
        pick = int(np.argmax(gains))
        if gains[pick] > best_gain:
            best_gain = float(gains[pick])
            best = (feature, pick, float(mids[pick]))
    return best


def _leaf_value(idx, grad, hess, loss: Loss) -> float:
    h = hess[idx].sum()
    if h <= 1e-12:
        return 0.0
    value = float(grad[idx].sum() / h)
    if loss is Loss.LOG:
        value = float(np.clip(value, -_MAX_LOG_LEAF, _MAX_LOG_LEAF))
    return value


def _grow_tree(bins, thresholds, idx, grad, hess, weight, min_leaf_weight, loss, depth):
    split = (
        _best_split(bins, thresholds, idx, grad, hess, weight, min_leaf_weight)
        if depth > 0
        else None
    )
    if split is None:
        return _leaf_value(idx, grad, hess, loss)
    feature, rank, threshold = split
    # bin rank <= rank is exactly the raw-value predicate x <= threshold,
    # because thresholds are the sorted midpoints the bins were cut on
    go_left = bins[feature][idx] <= rank
    return _TreeNode(
        feature,
        threshold,
        _grow_tree(bins, thresholds, idx[go_left], grad, hess, weight,
                   min_leaf_weight, loss, depth - 1),
        _grow_tree(bins, thresholds, idx[~go_left], grad, hess, weight,
                   min_leaf_weight, loss, depth - 1),
    )


def fit_boosted_stumps(
    data: Dataset,
    loss: Loss = Loss.SQUARED,
    spec: LearnerSpec | None = None,
    seed: int = 0,
) -> BoostedStumpsModel:
    """Gradient boosting with depth-<=2 trees.

    Squared loss boosts residuals with weighted-mean leaves; log loss
    boosts on the logit scale with Newton leaf steps (clipped to +-4 per
    leaf).  Zero-weight rows are dropped up front so they can never
    influence split search or leaf values.  Split thresholds per feature
    are midpoints of observed values, capped at 32 evenly chosen ones.
    """
    if spec is None:
        spec = LearnerSpec(kind=LearnerKind.BOOSTED_STUMPS)
    loss = Loss(loss)
    active = np.flatnonzero(data.w > 0.0)
    if len(active) < 10:
        raise ValueError("boosted trees need at least 10 positively weighted rows")
    X, y, w = data.X[active], data.y[active], data.w[active]
    if loss is Loss.LOG and np.any((y != 0.0) & (y != 1.0)):
        raise ValueError("log-loss boosting requires 0/1 responses")
    n, d = X.shape

    mean = float(np.dot(w, y) / w.sum())
    if loss is Loss.LOG:
        mean = min(max(mean, 1e-6), 1.0 - 1e-6)
        init = math.log(mean / (1.0 - mean))
    else:
        init = mean

    thresholds = [_feature_thresholds(X[:, j]) for j in range(d)]
    bins = [
        np.searchsorted(thresholds[j], X[:, j], side="left").astype(np.int64)
        if len(thresholds[j])
        else np.zeros(n, dtype=np.int64)
        for j in range(d)
    ]
    rng = np.random.default_rng(seed) if spec.subsample < 1.0 else None

    scores = np.full(n, init)
    trees = []
    all_rows = np.arange(n)
    for _ in range(spec.n_trees):
        if loss is Loss.LOG:
            p = _sigmoid(scores)
            grad = w * (y - p)
            hess = w * p * (1.0 - p)
        else:
            grad = w * (y - scores)
            hess = w
        if rng is not None:
            take = max(int(round(spec.subsample * n)), 1)
            idx = np.sort(rng.choice(n, size=take, replace=False))
        else:
            idx = all_rows
        tree = _grow_tree(
            bins, thresholds, idx, grad, hess, w, spec.min_leaf_weight, loss, depth=2
        )
        trees.append(tree)
        scores += spec.learning_rate * _tree_predict(tree, X)
    return BoostedStumpsModel(
        init_score=init, trees=tuple(trees), learning_rate=spec.learning_rate, loss=loss
    )


# ---------------------------------------------------------------------------
# Nadaraya-Watson product-kernel smoother
# ---------------------------------------------------------------------------

_PREDICT_CHUNK = 256


@dataclass(frozen=True)
class KernelSmootherModel:
    """Weighted Nadaraya-Watson smoother over stored training rows."""

    X: np.ndarray
    y: np.ndarray
    w: np.ndarray
    binary_columns: np.ndarray
    bandwidth: float
    hamming_weight: float
    loss: Loss
    fallback: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.X.shape[1]:
            raise ValueError("feature schema mismatch")
        is_bin = self.binary_columns
        train_bin, train_num = self.X[:, is_bin], self.X[:, ~is_bin]
        out = np.empty(len(X))
        for start in range(0, len(X), _PREDICT_CHUNK):
            stop = min(start + _PREDICT_CHUNK, len(X))
            qb, qn = X[start:stop, is_bin], X[start:stop, ~is_bin]
            log_k = np.zeros((stop - start, len(self.X)))
            if qn.shape[1]:
                diff = qn[:, None, :] - train_num[None, :, :]
                log_k -= 0.5 * np.sum((diff / self.bandwidth) ** 2, axis=2)
            if qb.shape[1]:
                mismatches = np.sum(qb[:, None, :] != train_bin[None, :, :], axis=2)
                log_k -= self.hamming_weight * mismatches
            kernel = np.exp(log_k) * self.w[None, :]
            denom = kernel.sum(axis=1)
            numer = kernel @ self.y
            chunk = np.where(denom > 1e-300, numer / np.maximum(denom, 1e-300), self.fallback)
            out[start:stop] = chunk
        if self.loss is Loss.LOG:
            return _clip_probability(out)
        return out


def fit_kernel_smoother(
    data: Dataset, loss: Loss = Loss.SQUARED, spec: LearnerSpec | None = None
) -> KernelSmootherModel:
    """Store the sample and smoothing constants; prediction does the work.

    Binary columns are detected from the data (every value 0 or 1) and
    smoothed with ``exp(-hamming_weight * mismatches)``; remaining columns
    get a Gaussian kernel with the configured bandwidth.  Queries too far
    from every training row fall back to the global weighted mean.
    """
    if spec is None:
        spec = LearnerSpec(kind=LearnerKind.KERNEL_SMOOTHER)
    loss = Loss(loss)
    active = np.flatnonzero(data.w > 0.0)
    if len(active) < 5:
        raise ValueError("the kernel smoother needs at least 5 positively weighted rows")
    X, y, w = data.X[active], data.y[active], data.w[active]
    binary_columns = np.array(
        [bool(np.all((X[:, j] == 0.0) | (X[:, j] == 1.0))) for j in range(X.shape[1])]
    )
    fallback = float(np.dot(w, y) / w.sum())
    return KernelSmootherModel(
        X=X,
        y=y,
        w=w,
        binary_columns=binary_columns,
        bandwidth=spec.bandwidth,
        hamming_weight=spec.hamming_weight,
        loss=loss,
        fallback=fallback,
    )


# ---------------------------------------------------------------------------
# Stacking
# ---------------------------------------------------------------------------


def fit_learner(
    spec: LearnerSpec, data: Dataset, loss: Loss, seed: int = 0
):
    """Fit one library member, adapting the GLM family to the loss."""
    loss = Loss(loss)
    if spec.kind is LearnerKind.LOGISTIC_MAIN_EFFECTS:
        if loss is Loss.LOG:
            return fit_logistic(data, ridge=spec.ridge)
        return fit_linear(data, ridge=spec.ridge)
    if spec.kind is LearnerKind.BOOSTED_STUMPS:
        return fit_boosted_stumps(data, loss=loss, spec=spec, seed=seed)
    return fit_kernel_smoother(data, loss=loss, spec=spec)


def predict(model, X: np.ndarray) -> np.ndarray:
    """Deterministic predictions from any fitted model in this module."""
    return model.predict(np.asarray(X, dtype=float))


@dataclass(frozen=True)
class StackedEnsemble:
    """Members refit on the full data plus simplex weights from CV."""

    members: tuple
    specs: tuple
    weights: np.ndarray
    cv_risks: np.ndarray
    ensemble_cv_risk: float
    loss: Loss

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.zeros(len(X))
        for weight, member in zip(self.weights, self.members):
            if weight > 0.0 and member is not None:
                out += weight * member.predict(X)
        if self.loss is Loss.LOG:
            return _clip_probability(out)
        return out


def _fold_assignments(
    rng: np.random.Generator, y: np.ndarray, folds: int, stratify: bool
) -> np.ndarray:
    n = len(y)
    assign = np.empty(n, dtype=np.int64)
    if stratify:
        for value in np.unique(y):
            idx = np.flatnonzero(y == value)
            rng.shuffle(idx)
            assign[idx] = np.arange(len(idx)) % folds
    else:
        order = rng.permutation(n)
        assign[order] = np.arange(n) % folds
    return assign


def _held_out_risk(
    predictions: np.ndarray, y: np.ndarray, w: np.ndarray, loss: Loss
) -> float:
    if loss is Loss.LOG:
        p = _clip_probability(predictions)
        losses = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    else:
        losses = (y - predictions) ** 2
    return float(np.dot(w, losses) / w.sum())


def _project_to_simplex(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    cumulative = np.cumsum(u)
    ranks = np.arange(1, len(v) + 1)
    feasible = np.flatnonzero(u + (1.0 - cumulative) / ranks > 0.0)
    rho = feasible[-1]
    tau = (cumulative[rho] - 1.0) / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


def _optimize_simplex_weights(
    oof: np.ndarray, y: np.ndarray, w: np.ndarray, loss: Loss, init: int,
    max_iter: int = 500, rel_tol: float = 1e-8,
) -> tuple[np.ndarray, float]:
    """Projected gradient descent over the simplex, keeping the best iterate.

    Starts at the best single member's vertex, so the returned risk can
    only improve on the best member.
    """
    n_members = oof.shape[1]
    w_norm = w / w.sum()

    def risk(alpha: np.ndarray) -> float:
        return _held_out_risk(oof @ alpha, y, w, loss)

    def gradient(alpha: np.ndarray) -> np.ndarray:
        blend = oof @ alpha
        if loss is Loss.LOG:
            p = _clip_probability(blend)
            residual = (p - y) / (p * (1.0 - p))
        else:
            residual = 2.0 * (blend - y)
        return oof.T @ (w_norm * residual)

    alpha = np.zeros(n_members)
    alpha[init] = 1.0
    best_alpha, best_risk = alpha.copy(), risk(alpha)
    current_risk = best_risk
    step = 1.0
    for _ in range(max_iter):
        grad = gradient(alpha)
        improved = False
        for _ in range(30):
            candidate = _project_to_simplex(alpha - step * grad)
            candidate_risk = risk(candidate)
            if candidate_risk < current_risk:
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        relative_gain = (current_risk - candidate_risk) / max(abs(current_risk), 1e-300)
        alpha, current_risk = candidate, candidate_risk
        if current_risk < best_risk:
            best_alpha, best_risk = alpha.copy(), current_risk
        step *= 2.0
        if relative_gain < rel_tol:
            break
    return best_alpha, best_risk


def fit_stack(
    data: Dataset,
    library: list[LearnerSpec] | None = None,
    folds: int = 5,
    loss: Loss = Loss.SQUARED,
    seed: int = 0,
) -> StackedEnsemble:
    """Cross-validated stacking over a learner library.

    Each member's held-out predictions are assembled over seeded
    (response-stratified, for log loss) folds; simplex weights minimize
    the held-out loss; members are then refit on the full data.  Members
    that fail to fit keep their slot with weight zero and infinite CV
    risk.  Per-member seeds are drawn up front so one member's failure
    cannot shift another's randomness.
    """
    loss = Loss(loss)
    if library is None:
        library = default_library(loss)
    if not library:
        raise ValueError("the learner library must not be empty")
    if data.n < 2 * folds:
        raise ValueError(f"stacking needs at least {2 * folds} rows")
    rng = np.random.default_rng(seed)
    fold_seed = int(rng.integers(2**63))
    member_seeds = rng.integers(2**63, size=(len(library), folds + 1))
    assign = _fold_assignments(
        np.random.default_rng(fold_seed), data.y, folds, stratify=loss is Loss.LOG
    )

    n_members = len(library)
    oof = np.full((data.n, n_members), np.nan)
    usable = np.zeros(n_members, dtype=bool)
    for j, spec in enumerate(library):
        try:
            for fold in range(folds):
                held = assign == fold
                model = fit_learner(
                    spec, data.subset(~held), loss, seed=int(member_seeds[j, fold])
                )
                oof[held, j] = model.predict(data.X[held])
            usable[j] = True
        except (ValueError, np.linalg.LinAlgError):
            usable[j] = False

    if not usable.any():
        raise RuntimeError("every stack member failed to fit")

    cv_risks = np.full(n_members, np.inf)
    for j in range(n_members):
        if usable[j]:
            cv_risks[j] = _held_out_risk(oof[:, j], data.y, data.w, loss)

    usable_idx = np.flatnonzero(usable)
    sub_oof = oof[:, usable_idx]
    init = int(np.argmin(cv_risks[usable_idx]))
    sub_weights, ensemble_risk = _optimize_simplex_weights(
        sub_oof, data.y, data.w, loss, init
    )
    weights = np.zeros(n_members)
    weights[usable_idx] = sub_weights

    members = []
    for j, spec in enumerate(library):
        if not usable[j]:
            members.append(None)
            continue
        members.append(fit_learner(spec, data, loss, seed=int(member_seeds[j, folds])))
    return StackedEnsemble(
        members=tuple(members),
        specs=tuple(library),
        weights=weights,
        cv_risks=cv_risks,
        ensemble_cv_risk=float(ensemble_risk),
        loss=loss,
    )
