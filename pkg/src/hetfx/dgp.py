"""Random nonparametric distribution generator on a finite covariate grid.

Distributions live on a grid of 32 binary patterns x 100 numeric points
(3200 cells).  A draw consists of

1. a covariate law P(X) from a flat Dirichlet over the cells;
2. a treatment mechanism P(T=1|X) assembled from Gaussian-process-valued
   interaction terms, accepted only if it stays inside (0, 1) and satisfies
   an overlap (positivity) ratio bound;
3. outcome mechanisms P(Y=1|T=t, X) of the same form, clamped to the
   outcome range, with the treatment either entering additively (a single
   shared shift) or through its own interaction expansion;
4. a confounding-bias target: draws are rejected until the realized bias
   functional matches a sampled target within tolerance.

Mechanism terms have the shape ``(a0_l + a1_l f_l(x_num)) * prod_{i in l}
x_bin_i`` over all binary index subsets ``l`` with ``|l| <= inter_order``,
where each ``f_l`` is a Gaussian process draw on the numeric grid.
Coefficients come from centered uniform boxes whose half-widths shrink by
0.9 for every 100 failed rejection iterations; exceeding the iteration cap
signals an infeasible draw and the whole pipeline restarts with fresh
upstream randomness.

Accepted distributions are exactly tabulated, so true conditional effects,
labels, and population functionals are available in closed form downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations

import numpy as np

from hetfx.effects import TargetParameter, contrast

__all__ = [
    "DGPConfig",
    "SyntheticDistribution",
    "GPDraw",
    "HTELabel",
    "HTEStats",
    "InfeasibleDrawError",
    "covariate_grid",
    "numeric_grid",
    "interaction_sets",
    "pattern_matrix",
    "sample_covariate_distribution",
    "gp_covariance",
    "gp_cholesky",
    "sample_gp",
    "confounding_bias",
    "sample_treatment_mechanism",
    "sample_outcome_mechanism",
    "generate",
    "hte_label",
    "hte_stats",
    "save_csv",
    "load_csv",
    "CSV_COLUMNS",
]

N_BINARY = 5
N_PATTERNS = 1 << N_BINARY

CSV_COLUMNS = (
    "x_bin1",
    "x_bin2",
    "x_bin3",
    "x_bin4",
    "x_bin5",
    "x_num",
    "p_x",
    "p_t1",
    "p_y1_t1",
    "p_y1_t0",
    "ate",
    "or_",
    "rr",
)

#: Candidates evaluated per vectorized rejection batch.
_BATCH = 64
#: Box shrink factor applied once per 100 failed rejection iterations.
_SHRINK = 0.9
#: Half-width of the centered box for the leading intercept coefficient.
_INTERCEPT_HALFWIDTH = 0.4
#: Half-width of the centered box for the treatment main-effect shift.
_SHIFT_HALFWIDTH = 0.5
#: Scale constant for non-intercept coefficient boxes, divided by the
#: relevant term-count factor so typical mechanisms span (0, 1).
_COEF_SCALE = 0.35


class InfeasibleDrawError(RuntimeError):
    """A rejection loop hit its iteration cap without an accepted draw."""


@dataclass(frozen=True)
class DGPConfig:
    """Hyperparameters of the random-distribution sampler."""

    inter_order: int = 3
    tx_inter: bool = True
    seed: int = 0
    n_bin: int = N_BINARY
    n_num: int = 1
    npoints: int = 100
    conf_bias_range: tuple[float, float] = (-0.5, 0.5)
    eta_range: tuple[float, float] = (0.1, 30.0)
    rho_range: tuple[float, float] = (0.1, 30.0)
    pos_bound: float = 1000.0
    tol: float = 0.01
    outcome_clamp: tuple[float, float] = (0.05, 0.95)
    max_rejection_iters: int = 1000

    def __post_init__(self) -> None:
        if self.inter_order not in (1, 2, 3):
            raise ValueError("inter_order must be 1, 2, or 3")
        if self.n_bin != N_BINARY or self.n_num != 1:
            raise ValueError("only 5 binary covariates and 1 numeric are supported")
        if self.npoints < 2:
            raise ValueError("npoints must be at least 2")
        lo, hi = self.outcome_clamp
        if not (0.0 < lo < hi < 1.0):
            raise ValueError("outcome_clamp must satisfy 0 < lo < hi < 1")
        if not (0.0 < self.tol <= 2.0):
            raise ValueError("tol must lie in (0, 2]")
        if self.pos_bound < 1.0:
            raise ValueError("pos_bound must be at least 1")
        for name in ("conf_bias_range", "eta_range", "rho_range"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"{name} must be a finite increasing pair")
        if self.max_rejection_iters < 1:
            raise ValueError("max_rejection_iters must be positive")

    @property
    def n_cells(self) -> int:
        return N_PATTERNS * self.npoints

    def to_dict(self) -> dict:
        return {
            "inter_order": self.inter_order,
            "tx_inter": self.tx_inter,
            "seed": self.seed,
            "n_bin": self.n_bin,
            "n_num": self.n_num,
            "npoints": self.npoints,
            "conf_bias_range": list(self.conf_bias_range),
            "eta_range": list(self.eta_range),
            "rho_range": list(self.rho_range),
            "pos_bound": self.pos_bound,
            "tol": self.tol,
            "outcome_clamp": list(self.outcome_clamp),
            "max_rejection_iters": self.max_rejection_iters,
        }


def numeric_grid(npoints: int = 100) -> np.ndarray:
    """Equally spaced numeric covariate grid {0, 1/(m-1), ..., 1}."""
    return np.linspace(0.0, 1.0, npoints)


def covariate_grid(npoints: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Full cell grid in pattern-major order.

    Cell index = pattern * npoints + numeric index; column ``x_bin{i+1}``
    holds bit i of the pattern.
    """
    patterns = np.arange(N_PATTERNS)
    bits = (patterns[:, None] >> np.arange(N_BINARY)[None, :]) & 1
    x_bin = np.repeat(bits, npoints, axis=0)
    x_num = np.tile(numeric_grid(npoints), N_PATTERNS)
    return x_bin.astype(np.int64), x_num


def interaction_sets(inter_order: int) -> list[tuple[int, ...]]:
    """All binary index subsets of size <= inter_order, smallest first."""
    if inter_order not in (1, 2, 3):
        raise ValueError("inter_order must be 1, 2, or 3")
    return [
        subset
        for size in range(inter_order + 1)
        for subset in combinations(range(N_BINARY), size)
    ]


def pattern_matrix(terms: list[tuple[int, ...]]) -> np.ndarray:
    """(n_patterns, n_terms) 0/1 matrix of ``prod_{i in l} x_bin_i``."""
    patterns = np.arange(N_PATTERNS)
    bits = ((patterns[:, None] >> np.arange(N_BINARY)[None, :]) & 1).astype(float)
    cols = [bits[:, list(term)].prod(axis=1) if term else np.ones(N_PATTERNS) for term in terms]
    return np.column_stack(cols)


def sample_covariate_distribution(
    rng: np.random.Generator, n_cells: int = N_PATTERNS * 100
) -> np.ndarray:
    """Flat (concentration-1) Dirichlet draw over the cells."""
    p_x = rng.dirichlet(np.ones(n_cells))
    return p_x / p_x.sum()


# ---------------------------------------------------------------------------
# Gaussian process machinery
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GPDraw:
    """One Gaussian-process function evaluated on the numeric grid."""

    eta: float
    rho: float
    values: np.ndarray


def gp_covariance(grid: np.ndarray, eta: float, rho: float) -> np.ndarray:
    """Squared-exponential kernel matrix ``eta * exp(-rho (xi - xj)^2)``."""
    diff = grid[:, None] - grid[None, :]
    return eta * np.exp(-rho * diff * diff)


def gp_cholesky(grid: np.ndarray, eta: float, rho: float) -> np.ndarray:
    """Lower Cholesky factor of the kernel plus escalating jitter.

    Starts at jitter 1e-8 and doubles up to three times before failing;
    the smooth kernels here are numerically rank-deficient, so a small
    ridge is always required.
    """
    if eta <= 0.0 or rho <= 0.0:
        raise ValueError("eta and rho must be positive")
    kernel = gp_covariance(grid, eta, rho)
    jitter = 1e-8
    for _ in range(4):
        try:
            return np.linalg.cholesky(kernel + jitter * np.eye(len(grid)))
        except np.linalg.LinAlgError:
            jitter *= 2.0
    raise InfeasibleDrawError(
        f"kernel factorization failed after jitter escalation (eta={eta}, rho={rho})"
    )


def sample_gp(
    rng: np.random.Generator,
    eta: float,
    rho: float,
    grid: np.ndarray | None = None,
) -> GPDraw:
    """Draw one mean-zero GP function on the numeric grid."""
    if grid is None:
        grid = numeric_grid()
    chol = gp_cholesky(grid, eta, rho)
    values = chol @ rng.standard_normal(len(grid))
    return GPDraw(eta=float(eta), rho=float(rho), values=values)


def _gp_function_bank(
    rng: np.random.Generator, chol: np.ndarray, count: int
) -> np.ndarray:
    """(npoints, count) matrix of independent GP draws sharing one factor."""
    return chol @ rng.standard_normal((chol.shape[0], count))


# ---------------------------------------------------------------------------
# Confounding bias
# ---------------------------------------------------------------------------


def confounding_bias(p_x, p_t1, p_y1_t1, p_y1_t0) -> float:
    """Confounding-bias functional of a tabulated distribution.

    C = sum_t (2t-1) sum_x [P(x)/P(T=t)] {P(T=t|x) - P(T=t)} P(Y=1|t,x),
    the covariance between treatment assignment and outcome levels that a
    naive arm-mean contrast would absorb.  Zero under randomization and
    under outcome laws that do not vary with x or t.
    """
    p_x = np.asarray(p_x, dtype=float)
    p_t1 = np.asarray(p_t1, dtype=float)
    p_y1_t1 = np.asarray(p_y1_t1, dtype=float)
    p_y1_t0 = np.asarray(p_y1_t0, dtype=float)
    m_t1 = float(np.dot(p_x, p_t1))
    m_t0 = 1.0 - m_t1
    if m_t1 <= 0.0 or m_t0 <= 0.0:
        raise ValueError("marginal treatment probabilities must be positive")
    term_t1 = (p_x / m_t1) * (p_t1 - m_t1) * p_y1_t1
    term_t0 = (p_x / m_t0) * ((1.0 - p_t1) - m_t0) * p_y1_t0
    return math.fsum(term_t1.tolist()) - math.fsum(term_t0.tolist())


def _batch_confounding_bias(
    p_x: np.ndarray, p_t1: np.ndarray, y1_batch: np.ndarray, y0_batch: np.ndarray
) -> np.ndarray:
    """Bias per candidate column; grouped form of :func:`confounding_bias`."""
    m_t1 = float(np.dot(p_x, p_t1))
    w = p_x * (p_t1 - m_t1)
    return (w @ y1_batch) / m_t1 + (w @ y0_batch) / (1.0 - m_t1)


# ---------------------------------------------------------------------------
# Mechanism assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _GPPrior:
    """Shared per-distribution GP prior: amplitude, length-scale, factor."""

    eta: float
    rho: float
    chol: np.ndarray


def _draw_gp_prior(rng: np.random.Generator, config: DGPConfig) -> _GPPrior:
    eta = float(rng.uniform(*config.eta_range))
    rho = float(rng.uniform(*config.rho_range))
    chol = gp_cholesky(numeric_grid(config.npoints), eta, rho)
    return _GPPrior(eta=eta, rho=rho, chol=chol)


def _coefficient_boxes(n_terms: int, eta: float) -> tuple[float, float]:
    """Half-widths (a, b) for non-intercept constant and GP coefficients.

    Scaled so that the summed fluctuation of a typical mechanism has
    standard deviation well under the unit interval half-width: constants
    by the number of non-intercept terms, GP multipliers additionally by
    the kernel amplitude.
    """
    a = _COEF_SCALE / math.sqrt(max(n_terms - 1, 1))
    b = _COEF_SCALE / math.sqrt(n_terms * max(eta, 1e-12))
    return a, b


def _draw_term_batch(
    rng: np.random.Generator,
    prior: _GPPrior,
    m_pattern: np.ndarray,
    shrink: np.ndarray,
    batch: int,
    center: float,
    intercept_halfwidth: float,
) -> np.ndarray:
    """Assemble a batch of mechanism surfaces, shape (n_cells, batch).

    Each candidate b evaluates ``sum_l (a0[l,b] + a1[l,b] f[l,b](x_num)) *
    prod_{i in l} x_bin_i`` on the pattern-major grid; ``shrink[b]`` scales
    every box half-width.
    """
    n_patterns, n_terms = m_pattern.shape
    npoints = prior.chol.shape[0]
    a, b = _coefficient_boxes(n_terms, prior.eta)

    a0 = rng.uniform(-1.0, 1.0, size=(n_terms, batch))
    a0[0] = center + intercept_halfwidth * shrink * a0[0]
    a0[1:] = a * shrink * a0[1:]
    a1 = b * shrink * rng.uniform(-1.0, 1.0, size=(n_terms, batch))

    bank = _gp_function_bank(rng, prior.chol, n_terms * batch)
    bank = bank.reshape(npoints, n_terms, batch)
    constant = m_pattern @ a0
    varying = np.einsum("pl,lb,jlb->pjb", m_pattern, a1, bank)
    surface = constant[:, None, :] + varying
    return surface.reshape(n_patterns * npoints, batch)


def _shrink_schedule(start_iter: int, batch: int) -> np.ndarray:
    iters = start_iter + np.arange(batch)
    return _SHRINK ** (iters // 100)


def sample_treatment_mechanism(
    rng: np.random.Generator,
    config: DGPConfig,
    p_x: np.ndarray,
    gp_prior: _GPPrior | None = None,
    stats: dict | None = None,
) -> np.ndarray:
    """Rejection-sample P(T=1|x) per cell.

    Accepts the first candidate that stays strictly inside (0, 1) at every
    cell and keeps the overlap ratio max_{t,x} P(T=t)/P(T=t|x) within
    ``config.pos_bound``.  Signals :class:`InfeasibleDrawError` after
    ``config.max_rejection_iters`` candidates.
    """
    if gp_prior is None:
        gp_prior = _draw_gp_prior(rng, config)
    m_pattern = pattern_matrix(interaction_sets(config.inter_order))
    done = 0
    while done < config.max_rejection_iters:
        batch = min(_BATCH, config.max_rejection_iters - done)
        shrink = _shrink_schedule(done, batch)
        candidates = _draw_term_batch(
            rng, gp_prior, m_pattern, shrink, batch,
            center=0.5, intercept_halfwidth=_INTERCEPT_HALFWIDTH,
        )
        lo = candidates.min(axis=0)
        hi = candidates.max(axis=0)
        inside = (lo > 0.0) & (hi < 1.0)
        m_t1 = p_x @ candidates
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.maximum(m_t1 / lo, (1.0 - m_t1) / (1.0 - hi))
        accepted = inside & (ratio <= config.pos_bound)
        done += batch
        if accepted.any():
            pick = int(np.argmax(accepted))
            if stats is not None:
                stats["treatment_iters"] = done - batch + pick + 1
            return candidates[:, pick].copy()
    raise InfeasibleDrawError(
        f"no feasible treatment mechanism in {config.max_rejection_iters} iterations"
    )


def sample_outcome_mechanism(
    rng: np.random.Generator,
    config: DGPConfig,
    p_x: np.ndarray,
    p_t1: np.ndarray,
    target_bias: float,
    gp_prior: _GPPrior | None = None,
    null_treatment: bool = False,
    stats: dict | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Rejection-sample (P(Y=1|T=1,x), P(Y=1|T=0,x)) per cell.

    The control arm is a mechanism surface clamped to the outcome range;
    the treated arm adds either a full interaction expansion of its own
    (``config.tx_inter``) or a single scalar shift.  ``null_treatment``
    zeroes the treatment part entirely, making the arms identical.
    Candidates are accepted when the realized confounding bias is within
    ``config.tol`` of ``target_bias``.
    """
    if gp_prior is None:
        gp_prior = _draw_gp_prior(rng, config)
    m_pattern = pattern_matrix(interaction_sets(config.inter_order))
    lo_clamp, hi_clamp = config.outcome_clamp
    done = 0
    while done < config.max_rejection_iters:
        batch = min(_BATCH, config.max_rejection_iters - done)
        shrink = _shrink_schedule(done, batch)
        base = _draw_term_batch(
            rng, gp_prior, m_pattern, shrink, batch,
            center=0.5, intercept_halfwidth=_INTERCEPT_HALFWIDTH,
        )
        if null_treatment:
            treated = base
        elif config.tx_inter:
            effect = _draw_term_batch(
                rng, gp_prior, m_pattern, shrink, batch,
                center=0.0, intercept_halfwidth=_SHIFT_HALFWIDTH,
            )
            treated = base + effect
        else:
            shift = _SHIFT_HALFWIDTH * shrink * rng.uniform(-1.0, 1.0, size=batch)
            treated = base + shift[None, :]
        y1 = np.clip(treated, lo_clamp, hi_clamp)
        y0 = np.clip(base, lo_clamp, hi_clamp)
        bias = _batch_confounding_bias(p_x, p_t1, y1, y0)
        accepted = np.abs(bias - target_bias) <= config.tol
        done += batch
        if accepted.any():
            pick = int(np.argmax(accepted))
            if stats is not None:
                stats["outcome_iters"] = done - batch + pick + 1
                stats["bias"] = float(bias[pick])
            return y1[:, pick].copy(), y0[:, pick].copy()
    raise InfeasibleDrawError(
        f"no outcome mechanism hit bias target {target_bias:+.3f} "
        f"within {config.max_rejection_iters} iterations"
    )


# ---------------------------------------------------------------------------
# Tabulated distributions
# ---------------------------------------------------------------------------


@dataclass
class SyntheticDistribution:
    """An exactly tabulated joint law of (X, T, Y) on the covariate grid."""

    x_bin: np.ndarray
    x_num: np.ndarray
    p_x: np.ndarray
    p_t1: np.ndarray
    p_y1_t1: np.ndarray
    p_y1_t0: np.ndarray
    provenance: dict | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        self.x_bin = np.asarray(self.x_bin, dtype=np.int64)
        self.x_num = np.asarray(self.x_num, dtype=float)
        for name in ("p_x", "p_t1", "p_y1_t1", "p_y1_t0"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        n = len(self.x_num)
        if self.x_bin.shape != (n, N_BINARY):
            raise ValueError(f"x_bin must have shape ({n}, {N_BINARY})")
        for name in ("p_x", "p_t1", "p_y1_t1", "p_y1_t0"):
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},)")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
        if np.any((self.x_bin != 0) & (self.x_bin != 1)):
            raise ValueError("x_bin entries must be 0 or 1")
        if np.any(self.x_num < 0.0) or np.any(self.x_num > 1.0):
            raise ValueError("x_num must lie in [0, 1]")
        if np.any(self.p_x < 0.0):
            raise ValueError("p_x must be nonnegative")
        if abs(float(self.p_x.sum()) - 1.0) > 1e-12:
            raise ValueError(f"p_x must sum to 1, got {float(self.p_x.sum())!r}")
        for name in ("p_t1", "p_y1_t1", "p_y1_t0"):
            arr = getattr(self, name)
            if np.any(arr <= 0.0) or np.any(arr >= 1.0):
                raise ValueError(f"{name} must lie strictly inside (0, 1)")

    @property
    def n_cells(self) -> int:
        return len(self.x_num)

    def features(self) -> np.ndarray:
        """(n_cells, 6) design matrix: five binary columns then x_num."""
        return np.column_stack([self.x_bin.astype(float), self.x_num])

    @property
    def marginal_treated(self) -> float:
        return float(np.dot(self.p_x, self.p_t1))

    def theta(self, param: TargetParameter) -> np.ndarray:
        """True conditional effect surface on the requested scale."""
        return np.asarray(contrast(param, self.p_y1_t1, self.p_y1_t0))

    @property
    def bias(self) -> float:
        return confounding_bias(self.p_x, self.p_t1, self.p_y1_t1, self.p_y1_t0)

    def positivity_ratio(self) -> float:
        """max over (t, x) of P(T=t) / P(T=t|x)."""
        m_t1 = self.marginal_treated
        return float(
            max(m_t1 / self.p_t1.min(), (1.0 - m_t1) / (1.0 - self.p_t1).min())
        )

    def validate(
        self,
        outcome_clamp: tuple[float, float] = (0.05, 0.95),
        pos_bound: float = 1000.0,
        target_bias: float | None = None,
        tol: float = 0.01,
    ) -> None:
        """Re-check acceptance invariants; raises ValueError on violation."""
        lo, hi = outcome_clamp
        for name in ("p_y1_t1", "p_y1_t0"):
            arr = getattr(self, name)
            if np.any(arr < lo - 1e-15) or np.any(arr > hi + 1e-15):
                raise ValueError(f"{name} violates the outcome clamp [{lo}, {hi}]")
        ratio = self.positivity_ratio()
        if ratio > pos_bound:
            raise ValueError(f"positivity ratio {ratio:.1f} exceeds bound {pos_bound}")
        if target_bias is not None:
            gap = abs(self.bias - target_bias)
            if gap > tol:
                raise ValueError(
                    f"confounding bias misses target by {gap:.4f} (tol {tol})"
                )


def generate(
    config: DGPConfig,
    rng: np.random.Generator | None = None,
    max_restarts: int = 200,
) -> SyntheticDistribution:
    """Run the full sampling pipeline until a distribution is accepted.

    Each restart redraws everything: covariate law, GP prior, treatment
    mechanism, bias target, outcome mechanisms.  Attempt counts and the
    accepted draw's parameters are recorded in ``provenance``.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    x_bin, x_num = covariate_grid(config.npoints)
    for outer in range(1, max_restarts + 1):
        p_x = sample_covariate_distribution(rng, config.n_cells)
        prior = _draw_gp_prior(rng, config)
        stats: dict = {}
        try:
            p_t1 = sample_treatment_mechanism(
                rng, config, p_x, gp_prior=prior, stats=stats
            )
        except InfeasibleDrawError:
            continue
        target = float(rng.uniform(*config.conf_bias_range))
        try:
            p_y1_t1, p_y1_t0 = sample_outcome_mechanism(
                rng, config, p_x, p_t1, target, gp_prior=prior, stats=stats
            )
        except InfeasibleDrawError:
            continue
        dist = SyntheticDistribution(
            x_bin=x_bin,
            x_num=x_num,
            p_x=p_x,
            p_t1=p_t1,
            p_y1_t1=p_y1_t1,
            p_y1_t0=p_y1_t0,
            provenance={
                "config": config.to_dict(),
                "target_bias": target,
                "bias": stats.get("bias"),
                "eta": prior.eta,
                "rho": prior.rho,
                "attempts": {
                    "restarts": outer,
                    "treatment_iters": stats.get("treatment_iters"),
                    "outcome_iters": stats.get("outcome_iters"),
                },
            },
        )
        dist.validate(
            outcome_clamp=config.outcome_clamp,
            pos_bound=config.pos_bound,
            target_bias=target,
            tol=config.tol,
        )
        return dist
    raise InfeasibleDrawError(f"no acceptable distribution in {max_restarts} restarts")


# ---------------------------------------------------------------------------
# Heterogeneity labels
# ---------------------------------------------------------------------------


class HTELabel(str, Enum):
    HIGH = "High"
    LOW = "Low"


@dataclass(frozen=True)
class HTEStats:
    """Weighted moments of the true effect surface and the derived label."""

    mean: float
    sd: float
    cv: float
    degenerate_mean: bool
    label: HTELabel


def hte_stats(
    dist: SyntheticDistribution,
    param: TargetParameter,
    threshold: float = 0.2,
    mean_floor: float = 1e-10,
) -> HTEStats:
    """Coefficient of variation of theta(x) under P(X), with its label.

    CV = weighted sd / |weighted mean|; surfaces with CV >= threshold are
    labeled High.  A weighted mean inside ``mean_floor`` of zero makes the
    CV unstable; such surfaces are labeled High and flagged.
    """
    theta = dist.theta(param)
    mean = float(np.dot(dist.p_x, theta))
    sd = float(math.sqrt(max(np.dot(dist.p_x, (theta - mean) ** 2), 0.0)))
    if abs(mean) < mean_floor:
        return HTEStats(mean, sd, math.inf, True, HTELabel.HIGH)
    cv = sd / abs(mean)
    label = HTELabel.HIGH if cv >= threshold else HTELabel.LOW
    return HTEStats(mean, sd, cv, False, label)


def hte_label(
    dist: SyntheticDistribution, param: TargetParameter, threshold: float = 0.2
) -> HTELabel:
    """High/Low heterogeneity label for the true effect surface."""
    return hte_stats(dist, param, threshold=threshold).label


# ---------------------------------------------------------------------------
# CSV persistence
# ---------------------------------------------------------------------------


def _format_float(value: float) -> str:
    return format(value, ".17g")


def save_csv(dist: SyntheticDistribution, path) -> None:
    """Write the tabulated distribution with 17-significant-digit floats.

    Derived effect columns are recomputed from the outcome columns on
    every save, so files can never carry stale contrasts.
    """
    ate = dist.theta(TargetParameter.ATE)
    or_ = dist.theta(TargetParameter.OR)
    rr = dist.theta(TargetParameter.RR)
    lines = [",".join(CSV_COLUMNS)]
    for i in range(dist.n_cells):
        cells = [str(int(b)) for b in dist.x_bin[i]]
        cells.extend(
            _format_float(v)
            for v in (
                dist.x_num[i],
                dist.p_x[i],
                dist.p_t1[i],
                dist.p_y1_t1[i],
                dist.p_y1_t0[i],
                ate[i],
                or_[i],
                rr[i],
            )
        )
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")


def load_csv(path) -> SyntheticDistribution:
    """Read a distribution CSV, re-checking invariants and derived columns."""
    with open(path, "r", encoding="utf-8") as handle:
        lines = [line.rstrip("\n") for line in handle if line.strip()]
    if not lines:
        raise ValueError(f"{path}: empty distribution file")
    header = tuple(lines[0].split(","))
    if header != CSV_COLUMNS:
        raise ValueError(f"{path}: unexpected header {header!r}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(CSV_COLUMNS):
            raise ValueError(f"{path}:{lineno}: expected {len(CSV_COLUMNS)} fields")
        try:
            rows.append([float(part) for part in parts])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    data = np.asarray(rows, dtype=float)
    x_bin = data[:, :N_BINARY]
    if np.any((x_bin != 0.0) & (x_bin != 1.0)):
        raise ValueError(f"{path}: binary covariate columns must be 0/1")
    dist = SyntheticDistribution(
        x_bin=x_bin.astype(np.int64),
        x_num=data[:, 5],
        p_x=data[:, 6],
        p_t1=data[:, 7],
        p_y1_t1=data[:, 8],
        p_y1_t0=data[:, 9],
    )
    dist.validate()
    for column, param, index in (
        ("ate", TargetParameter.ATE, 10),
        ("or_", TargetParameter.OR, 11),
        ("rr", TargetParameter.RR, 12),
    ):
        expected = dist.theta(param)
        stored = data[:, index]
        tol = 1e-12 * np.maximum(1.0, np.abs(expected))
        if np.any(np.abs(stored - expected) > tol):
            raise ValueError(
                f"{path}: {column} column is inconsistent with the outcome columns"
            )
    return dist
