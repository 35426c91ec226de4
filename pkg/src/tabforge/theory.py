"""Probability bounds behind the two-route consistency check, with
Monte Carlo verification.

The model: two independent answer routes each produce the correct
answer with probability p, otherwise one of k error types drawn from a
route-specific distribution. E is the event that the two answers agree,
Y that both are correct. The claims checked here:

  * posterior_bound: P(Y | E) >= p**2 / (p**2 + (1-p)**2) whenever
    p > 1/2, with equality against p only at 0.5 and 1.0.
  * With both routes sharing one error distribution, the agreement-
    given-wrong mass sum(P(e_i)**2) is at least (1-p)**2 / k and at
    most (1-p)**2.
  * With independent routes, the expected agree-and-wrong mass equals
    (1-p)**2 / k and never beats the shared-distribution value.

Simulations are vectorized and fully determined by (model, trials,
seed), which makes the 3-sigma acceptance bands reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_TRIALS = 200_000
DEFAULT_PAIR_TRIALS = 20_000
DEFAULT_N_PAIRS = 200
DEFAULT_GRID = tuple(
    (p, k) for p in (0.55, 0.6, 0.7, 0.8, 0.9, 0.95) for k in (1, 2, 5, 10)
)

_WEIGHT_TOL = 1e-12


class DomainError(ValueError):
    pass


class GridError(ValueError):
    pass


def posterior_bound(p: float) -> float:
    """Lower bound on P(Y | E): p^2 / (p^2 + (1-p)^2)."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p must be in [0, 1], got {p}")
    return p * p / (p * p + (1.0 - p) * (1.0 - p))


def posterior_bound_gap(p: float) -> float:
    """posterior_bound(p) - p in factored form: p(1-p)(2p-1) / ((1-p)^2 + p^2)."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p must be in [0, 1], got {p}")
    return p * (1.0 - p) * (2.0 * p - 1.0) / ((1.0 - p) ** 2 + p * p)


def independent_expected_pe(p: float, k: int) -> float:
    """Expected agree-and-wrong mass (1-p)^2 / k for independent error draws."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p must be in [0, 1], got {p}")
    if k < 1:
        raise DomainError(f"k must be at least 1, got {k}")
    return (1.0 - p) ** 2 / k


def _check_weights(p: float, dist: tuple[float, ...]) -> None:
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p must be in [0, 1], got {p}")
    if not dist:
        raise DomainError("error distribution needs at least one entry")
    if any(w < 0 for w in dist):
        raise DomainError("error weights must be nonnegative")
    if abs(sum(dist) - (1.0 - p)) > _WEIGHT_TOL:
        raise DomainError(
            f"error weights sum to {sum(dist)}, expected {1.0 - p}"
        )


def same_dist_joint_pe(p: float, error_dist: tuple[float, ...]) -> float:
    """Agree-and-wrong mass sum(w_i^2) when both routes share error_dist."""
    dist = tuple(float(w) for w in error_dist)
    _check_weights(p, dist)
    return sum(w * w for w in dist)


def same_dist_pe(p: float, error_dist: tuple[float, ...]) -> float:
    """P(E | not Y) for a shared error distribution: sum(w_i^2) / (1 - p^2).

    Zero when p == 1 since the condition is then vacuous.
    """
    joint = same_dist_joint_pe(p, error_dist)
    if p == 1.0:
        return 0.0
    return joint / (1.0 - p * p)


@dataclass(frozen=True)
class AnswerModel:
    """Correctness probability plus one error distribution per route."""

    p: float
    error_dist_a: tuple[float, ...]
    error_dist_b: tuple[float, ...]
    shared: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "error_dist_a", tuple(float(w) for w in self.error_dist_a))
        object.__setattr__(self, "error_dist_b", tuple(float(w) for w in self.error_dist_b))
        _check_weights(self.p, self.error_dist_a)
        _check_weights(self.p, self.error_dist_b)
        if len(self.error_dist_a) != len(self.error_dist_b):
            raise DomainError("both routes need the same number of error types")
        if self.shared and self.error_dist_a != self.error_dist_b:
            raise DomainError("shared model requires identical error distributions")

    @property
    def k(self) -> int:
        return len(self.error_dist_a)

    @classmethod
    def shared_uniform(cls, p: float, k: int) -> "AnswerModel":
        if k < 1:
            raise DomainError(f"k must be at least 1, got {k}")
        dist = tuple([(1.0 - p) / k] * k)
        return cls(p=p, error_dist_a=dist, error_dist_b=dist, shared=True)

    @classmethod
    def shared_dist(cls, p: float, dist: tuple[float, ...]) -> "AnswerModel":
        d = tuple(float(w) for w in dist)
        return cls(p=p, error_dist_a=d, error_dist_b=d, shared=True)

    @classmethod
    def independent(
        cls, p: float, dist_a: tuple[float, ...], dist_b: tuple[float, ...]
    ) -> "AnswerModel":
        return cls(
            p=p,
            error_dist_a=tuple(float(w) for w in dist_a),
            error_dist_b=tuple(float(w) for w in dist_b),
            shared=False,
        )


@dataclass(frozen=True)
class ConsistencyEstimate:
    """Monte Carlo estimates for one model.

    p_y_given_e conditions on agreement, p_e_given_not_y on at least one
    route being wrong. Either is NaN when its conditioning event never
    occurred; stderr is the binomial standard error on the respective
    conditioned count.
    """

    p_y_given_e: float
    p_e_given_not_y: float
    trials: int
    conditioned_trials: int
    not_y_trials: int
    stderr: float
    stderr_e_given_not_y: float

    @property
    def defined(self) -> bool:
        return not math.isnan(self.p_y_given_e)


def _draw_labels(
    rng: np.random.Generator, p: float, dist: tuple[float, ...], trials: int
) -> np.ndarray:
    # Label 0 is the correct answer, labels 1..k are error types.
    thresholds = np.cumsum(np.concatenate(([p], dist)))
    u = rng.random(trials)
    return np.minimum(np.searchsorted(thresholds, u, side="right"), len(dist))


def _binomial_se(phat: float, n: int) -> float:
    return math.sqrt(phat * (1.0 - phat) / n) if n > 0 else math.nan


def simulate_consistency(model: AnswerModel, trials: int, seed: int = 0) -> ConsistencyEstimate:
    """Draw both routes trials times and estimate the conditionals."""
    if trials < 1:
        raise DomainError(f"trials must be positive, got {trials}")
    rng = np.random.default_rng(seed)
    la = _draw_labels(rng, model.p, model.error_dist_a, trials)
    lb = _draw_labels(rng, model.p, model.error_dist_b, trials)
    agree = la == lb
    n_e = int(agree.sum())
    n_y = int((agree & (la == 0)).sum())
    n_not_y = trials - n_y
    n_e_not_y = n_e - n_y
    p_y_given_e = n_y / n_e if n_e else math.nan
    p_e_given_not_y = n_e_not_y / n_not_y if n_not_y else math.nan
    return ConsistencyEstimate(
        p_y_given_e=p_y_given_e,
        p_e_given_not_y=p_e_given_not_y,
        trials=trials,
        conditioned_trials=n_e,
        not_y_trials=n_not_y,
        stderr=_binomial_se(p_y_given_e, n_e) if n_e else math.nan,
        stderr_e_given_not_y=_binomial_se(p_e_given_not_y, n_not_y) if n_not_y else math.nan,
    )


def random_error_dist(p: float, k: int, rng: np.random.Generator) -> tuple[float, ...]:
    """A random error distribution summing to 1 - p (flat Dirichlet weights)."""
    if k < 1:
        raise DomainError(f"k must be at least 1, got {k}")
    return tuple((rng.dirichlet(np.ones(k)) * (1.0 - p)).tolist())


def sum_of_squares_gap(weights: np.ndarray) -> float:
    """sum(x^2) - S^2/k; nonnegative for every real weight vector."""
    x = np.asarray(weights, dtype=float)
    s = float(x.sum())
    return float((x * x).sum() - s * s / x.size)


def covariance_identity_residual(x: np.ndarray, y: np.ndarray) -> float:
    """|sum(x_i y_i) - (sum((x_i - xbar)(y_i - ybar)) + n xbar ybar)|."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DomainError("vectors must have matching shapes")
    n = x.size
    xbar, ybar = x.mean(), y.mean()
    lhs = float((x * y).sum())
    rhs = float(((x - xbar) * (y - ybar)).sum() + n * xbar * ybar)
    return abs(lhs - rhs)


@dataclass(frozen=True)
class LemmaChecks:
    n_vectors: int
    sum_sq_ok: bool
    uniform_equality_ok: bool
    covariance_ok: bool
    min_sum_sq_gap: float
    max_uniform_gap: float
    max_cov_residual: float

    @property
    def passed(self) -> bool:
        return self.sum_sq_ok and self.uniform_equality_ok and self.covariance_ok


def check_lemmas(n_vectors: int = 10_000, seed: int = 0, k_max: int = 12) -> LemmaChecks:
    """Random-vector checks of the two inequalities the bounds lean on."""
    rng = np.random.default_rng(seed)
    min_gap = math.inf
    max_uni = 0.0
    max_res = 0.0
    for _ in range(n_vectors):
        k = int(rng.integers(1, k_max + 1))
        scale = float(rng.uniform(0.1, 10.0))
        x = rng.random(k) * scale
        min_gap = min(min_gap, sum_of_squares_gap(x))
        uniform = np.full(k, float(x.sum()) / k)
        max_uni = max(max_uni, abs(sum_of_squares_gap(uniform)))
        n = int(rng.integers(1, 50))
        max_res = max(
            max_res, covariance_identity_residual(rng.normal(size=n), rng.normal(size=n))
        )
    return LemmaChecks(
        n_vectors=n_vectors,
        sum_sq_ok=min_gap >= -1e-12,
        uniform_equality_ok=max_uni <= 1e-12,
        covariance_ok=max_res <= 1e-9,
        min_sum_sq_gap=min_gap,
        max_uniform_gap=max_uni,
        max_cov_residual=max_res,
    )


@dataclass(frozen=True)
class DominanceCheck:
    """Dense sweep of posterior_bound(p) >= p over [0.5, 1.0]."""

    n_points: int
    ok: bool
    strict_interior: bool
    equality_endpoints: bool


def check_posterior_dominance(step: float = 1e-4) -> DominanceCheck:
    n = int(round(0.5 / step)) + 1
    ps = np.linspace(0.5, 1.0, n)
    bounds = ps * ps / (ps * ps + (1.0 - ps) ** 2)
    interior = bounds[1:-1] > ps[1:-1]
    endpoints = bounds[0] == ps[0] and bounds[-1] == ps[-1]
    return DominanceCheck(
        n_points=n,
        ok=bool(interior.all()) and endpoints,
        strict_interior=bool(interior.all()),
        equality_endpoints=bool(endpoints),
    )


@dataclass(frozen=True)
class GridPointResult:
    p: float
    k: int
    analytic_bound: float
    analytic_p_y_given_e: float
    sim: ConsistencyEstimate
    thm1_ok: bool
    bound_dominates: bool
    joint_est: float
    joint_lower: float
    joint_upper: float
    joint_bounds_ok: bool
    mean_indep_p_y_given_e: float
    se_indep_p_y_given_e: float
    thm2_posterior_ok: bool
    mean_indep_joint: float
    se_indep_joint: float
    closed_form_joint: float
    thm2_joint_ok: bool
    mean_shared_joint: float
    se_shared_joint: float
    thm2_ordering_ok: bool

    @property
    def all_ok(self) -> bool:
        return (
            self.thm1_ok
            and self.bound_dominates
            and self.joint_bounds_ok
            and self.thm2_posterior_ok
            and self.thm2_joint_ok
            and self.thm2_ordering_ok
        )


@dataclass(frozen=True)
class TheoremReport:
    grid_results: tuple[GridPointResult, ...]
    lemmas: LemmaChecks
    dominance: DominanceCheck
    trials: int
    n_pairs: int
    pair_trials: int
    seed: int

    @property
    def passed(self) -> bool:
        return (
            all(r.all_ok for r in self.grid_results)
            and self.lemmas.passed
            and self.dominance.ok
        )

    def rows(self) -> list[dict]:
        out = []
        for r in self.grid_results:
            out.append(
                {
                    "p": r.p,
                    "k": r.k,
                    "analytic_bound": r.analytic_bound,
                    "analytic_p_y_given_e": r.analytic_p_y_given_e,
                    "sim_p_y_given_e": r.sim.p_y_given_e,
                    "sim_stderr": r.sim.stderr,
                    "thm1_ok": r.thm1_ok,
                    "bound_dominates": r.bound_dominates,
                    "joint_est": r.joint_est,
                    "joint_lower": r.joint_lower,
                    "joint_upper": r.joint_upper,
                    "joint_bounds_ok": r.joint_bounds_ok,
                    "mean_indep_p_y_given_e": r.mean_indep_p_y_given_e,
                    "thm2_posterior_ok": r.thm2_posterior_ok,
                    "mean_indep_joint": r.mean_indep_joint,
                    "closed_form_joint": r.closed_form_joint,
                    "thm2_joint_ok": r.thm2_joint_ok,
                    "mean_shared_joint": r.mean_shared_joint,
                    "thm2_ordering_ok": r.thm2_ordering_ok,
                }
            )
        return out


def _mean_se(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    arr = arr[~np.isnan(arr)]
    if arr.size == 0:
        return math.nan, math.nan
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


def verify_theorems(
    grid: tuple[tuple[float, int], ...] = DEFAULT_GRID,
    trials: int = DEFAULT_TRIALS,
    seed: int = 0,
    n_pairs: int = DEFAULT_N_PAIRS,
    pair_trials: int = DEFAULT_PAIR_TRIALS,
    n_weight_checks: int = 10_000,
    dominance_step: float = 1e-4,
) -> TheoremReport:
    """Run every bound check over a (p, k) grid.

    Per point: shared-uniform simulation against p - 3*stderr and the
    analytic joint bounds, then n_pairs random independent-route models
    compared against the closed form (1-p)^2/k and against matched
    shared-distribution simulations. Grid entries need p > 0.5.
    """
    grid = tuple((float(p), int(k)) for p, k in grid)
    bad = [(p, k) for p, k in grid if not p > 0.5]
    if bad:
        raise GridError(f"grid entries need p > 0.5, got {bad}")
    if n_pairs < 2:
        raise GridError(f"need at least 2 independent pairs, got {n_pairs}")
    master = np.random.default_rng(seed)
    results = []
    for p, k in grid:
        shared_uniform = AnswerModel.shared_uniform(p, k)
        est = simulate_consistency(shared_uniform, trials, seed=int(master.integers(2**63)))
        bound = posterior_bound(p)
        joint_lower = independent_expected_pe(p, k)
        analytic_pye = p * p / (p * p + joint_lower)
        not_y_share = 1.0 - p * p
        joint_est = est.p_e_given_not_y * not_y_share if est.not_y_trials else 0.0
        se_joint = (
            est.stderr_e_given_not_y * not_y_share if est.not_y_trials else 0.0
        )
        joint_upper = (1.0 - p) ** 2

        pye_vals: list[float] = []
        joint_vals: list[float] = []
        shared_vals: list[float] = []
        for _ in range(n_pairs):
            da = random_error_dist(p, k, master)
            db = random_error_dist(p, k, master)
            est_i = simulate_consistency(
                AnswerModel.independent(p, da, db),
                pair_trials,
                seed=int(master.integers(2**63)),
            )
            est_s = simulate_consistency(
                AnswerModel.shared_dist(p, da),
                pair_trials,
                seed=int(master.integers(2**63)),
            )
            pye_vals.append(est_i.p_y_given_e)
            joint_vals.append(est_i.p_e_given_not_y * not_y_share)
            shared_vals.append(est_s.p_e_given_not_y * not_y_share)
        mean_pye, se_pye = _mean_se(pye_vals)
        mean_joint, se_mean_joint = _mean_se(joint_vals)
        mean_shared, se_shared = _mean_se(shared_vals)

        results.append(
            GridPointResult(
                p=p,
                k=k,
                analytic_bound=bound,
                analytic_p_y_given_e=analytic_pye,
                sim=est,
                thm1_ok=est.p_y_given_e >= p - 3.0 * est.stderr,
                bound_dominates=bound >= p,
                joint_est=joint_est,
                joint_lower=joint_lower,
                joint_upper=joint_upper,
                joint_bounds_ok=(
                    joint_est >= joint_lower - 3.0 * se_joint
                    and joint_est <= joint_upper + 3.0 * se_joint
                ),
                mean_indep_p_y_given_e=mean_pye,
                se_indep_p_y_given_e=se_pye,
                thm2_posterior_ok=(
                    mean_pye
                    >= est.p_y_given_e - 3.0 * math.sqrt(se_pye**2 + est.stderr**2)
                ),
                mean_indep_joint=mean_joint,
                se_indep_joint=se_mean_joint,
                closed_form_joint=joint_lower,
                thm2_joint_ok=abs(mean_joint - joint_lower) <= 3.0 * se_mean_joint,
                mean_shared_joint=mean_shared,
                se_shared_joint=se_shared,
                thm2_ordering_ok=(
                    mean_joint
                    <= mean_shared + 3.0 * math.sqrt(se_mean_joint**2 + se_shared**2)
                ),
            )
        )
    return TheoremReport(
        grid_results=tuple(results),
        lemmas=check_lemmas(n_vectors=n_weight_checks, seed=seed),
        dominance=check_posterior_dominance(step=dominance_step),
        trials=trials,
        n_pairs=n_pairs,
        pair_trials=pair_trials,
        seed=seed,
    )
