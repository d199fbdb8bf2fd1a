"""Reliability-maximizing customer selection.

Selecting at most N of K candidate customers to maximize the probability that
their aggregate curtailment meets a target T is a stochastic knapsack. Under
the normal aggregate with independent responses, maximizing that probability
is equivalent to minimizing the standardized shortfall

    rho = (T - sum mu_k) / sqrt(sum var_k)

over the chosen set, and the optimum lies on the upper-left hull of achievable
(mean, variance) pairs. The heuristic sweeps slopes lambda' = tan(i*pi/2M) and,
because the covariance is diagonal and costs are uniform, each slope's
subproblem reduces to sorting the per-candidate scores lambda'*mu_k -/+ var_k
and keeping the top (at most) N strictly positive entries. The best hull point
over both sweeps is returned together with a computable ratio bounding how far
its rho can be from optimal.
"""

from __future__ import annotations

import csv
import math
from dataclasses import InitVar, dataclass
from itertools import combinations, islice

import numpy as np

from .errors import (
    DataError,
    InfeasibleError,
    UnsupportedFeatureError,
    ValidationError,
)

_SQRT2 = math.sqrt(2.0)

# Exhaustive enumeration blows up past this point (2^24 subsets already takes
# a few seconds vectorized).
EXACT_K_LIMIT = 24


def normal_cdf(x: float) -> float:
    """Standard normal CDF, accurate to well under 1e-10 absolute error."""
    return 0.5 * math.erfc(-x / _SQRT2)


def reliability(rho_value: float) -> float:
    """Probability of meeting the target given a standardized shortfall rho."""
    if not math.isfinite(rho_value):
        raise ValidationError(f"rho must be finite, got {rho_value}")
    return 0.5 * math.erfc(rho_value / _SQRT2)


@dataclass(frozen=True)
class SelectionProblem:
    """An (mu, var, N, T) instance with diagonal covariance and uniform costs.

    mu and var are per-candidate response means (kWh) and variances (kWh^2);
    n_max is the participant budget; target the aggregate curtailment (kWh).
    Heterogeneous costs or a non-diagonal covariance raise
    UnsupportedFeatureError at construction.
    """

    mu: np.ndarray
    var: np.ndarray
    n_max: int
    target: float
    ids: tuple[str, ...] | None = None
    costs: InitVar[object] = None
    cov: InitVar[object] = None

    def __post_init__(self, costs, cov):
        mu = np.asarray(self.mu, dtype=np.float64)
        var = np.asarray(self.var, dtype=np.float64)
        if mu.ndim != 1 or var.ndim != 1:
            raise ValidationError("mu and var must be one-dimensional vectors")
        if mu.shape != var.shape:
            raise ValidationError(
                f"mu and var lengths differ: {mu.shape[0]} vs {var.shape[0]}"
            )
        if mu.size == 0:
            raise ValidationError("empty candidate pool")
        if not np.all(np.isfinite(mu)):
            raise ValidationError("mu contains non-finite values")
        if not np.all(np.isfinite(var)) or np.any(var < 0):
            raise ValidationError("var must be finite and non-negative")
        if not isinstance(self.n_max, (int, np.integer)) or isinstance(self.n_max, bool):
            raise ValidationError("n_max must be an integer")
        if not 1 <= self.n_max <= mu.size:
            raise ValidationError(
                f"n_max must be in [1, K={mu.size}], got {self.n_max}"
            )
        if not math.isfinite(self.target):
            raise ValidationError("target must be finite")
        if self.ids is not None and len(self.ids) != mu.size:
            raise ValidationError("ids length must match the candidate count")
        if cov is not None:
            cov = np.asarray(cov, dtype=np.float64)
            if cov.ndim != 2 or np.any(cov != np.diag(np.diag(cov))):
                raise UnsupportedFeatureError(
                    "non-diagonal covariance is not supported; this solver "
                    "assumes independent responses (pass var only)"
                )
            if not np.allclose(np.diag(cov), var):
                raise ValidationError("cov diagonal disagrees with var")
        if costs is not None:
            costs = np.asarray(costs, dtype=np.float64)
            if costs.size != mu.size or np.any(costs != costs.flat[0]):
                raise UnsupportedFeatureError(
                    "heterogeneous recruitment costs are not supported; the "
                    "budget must be a uniform per-customer cost (use n_max)"
                )
        mu.setflags(write=False)
        var.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "var", var)
        object.__setattr__(self, "n_max", int(self.n_max))
        object.__setattr__(self, "target", float(self.target))

    @property
    def size(self) -> int:
        return self.mu.size


@dataclass(frozen=True)
class Selection:
    """A chosen customer subset and its aggregate statistics.

    rho is None when total_var is zero (degenerate portfolio); reliability is
    then 0 or 1 by the sign of target - total_mu.
    """

    chosen: tuple[int, ...]
    total_mu: float
    total_var: float
    rho: float | None
    reliability: float

    @property
    def size(self) -> int:
        return len(self.chosen)


@dataclass(frozen=True)
class ExtremePoint:
    """One lambda-subproblem solution saved during the sweep."""

    lambda_index: int
    lambda_prime: float
    sweep: str  # "minus" (mean-up/variance-down) or "plus" (both up)
    selection: Selection


@dataclass(frozen=True)
class HeuristicResult:
    selection: Selection
    extreme_points: tuple[ExtremePoint, ...]


def rho(problem: SelectionProblem, chosen) -> float:
    """Standardized shortfall (T - mu'x) / sqrt(x'Sigma x) of a chosen set."""
    sel = evaluate_selection(problem, chosen)
    if not sel.chosen:
        raise ValidationError("rho requires a non-empty chosen set")
    if sel.rho is None:
        raise ValidationError(
            "degenerate selection: total variance is zero, reliability is "
            f"{sel.reliability:.0f} by the sign of target - total_mu"
        )
    return sel.rho


def evaluate_selection(problem: SelectionProblem, chosen) -> Selection:
    """Score an index subset: exact sums, rho, and reliability."""
    idx = np.asarray(sorted(chosen), dtype=np.intp)
    if idx.size:
        if idx[0] < 0 or idx[-1] >= problem.size:
            raise ValidationError("chosen indices out of range")
        if np.any(idx[1:] == idx[:-1]):
            raise ValidationError("chosen indices contain duplicates")
    if idx.size > problem.n_max:
        raise ValidationError(
            f"selection of {idx.size} exceeds the budget n_max={problem.n_max}"
        )
    total_mu = float(problem.mu[idx].sum())
    total_var = float(problem.var[idx].sum())
    if total_var > 0.0:
        r = (problem.target - total_mu) / math.sqrt(total_var)
        return Selection(tuple(int(i) for i in idx), total_mu, total_var, r, reliability(r))
    p = 1.0 if problem.target - total_mu <= 0.0 else 0.0
    return Selection(tuple(int(i) for i in idx), total_mu, total_var, None, p)


def _rho_key(sel: Selection) -> float:
    """Ordering key: smaller is better; degenerate portfolios sort by their 0/1 reliability."""
    if sel.rho is not None:
        return sel.rho
    return -math.inf if sel.reliability >= 1.0 else math.inf


def lambda_grid(m: int) -> list[float]:
    """Slopes tan(i*pi/2m) for i = 0..m, with the endpoint taken as +inf."""
    if m < 1:
        raise ValidationError(f"iteration count m must be >= 1, got {m}")
    return [math.tan(i * math.pi / (2 * m)) for i in range(m)] + [math.inf]


def solve_lambda_diagonal(
    problem: SelectionProblem, lambda_prime: float, sign: str
) -> Selection:
    """Maximize the linearized score lambda'*mu - var (sign "-") or + var (sign "+").

    With diagonal covariance and uniform costs this is exactly: keep the up to
    n_max candidates with the largest strictly positive scores (a non-positive
    score can only lower the objective under the <= N budget). lambda' = +inf
    ranks by mu alone. Ties break by ascending candidate index. All scores
    <= 0 yields an empty Selection, which sweeps skip.
    """
    if sign not in ("-", "+"):
        raise ValidationError(f"sign must be '-' or '+', got {sign!r}")
    if not (lambda_prime >= 0.0):
        raise ValidationError(f"lambda_prime must be >= 0, got {lambda_prime}")
    if math.isinf(lambda_prime):
        scores = problem.mu
    elif sign == "-":
        scores = lambda_prime * problem.mu - problem.var
    else:
        scores = lambda_prime * problem.mu + problem.var
    order = np.argsort(-scores, kind="stable")  # stable => ties by index
    n_positive = int(np.count_nonzero(scores > 0.0))
    take = min(problem.n_max, n_positive)
    return evaluate_selection(problem, order[:take])


def solve_heuristic(
    problem: SelectionProblem, m: int = 10, include_baselines: bool = True
) -> HeuristicResult:
    """Run both lambda sweeps and return the best candidate portfolio by rho.

    The sign of the optimal rho is unknown up front, so the mean-up/variance-
    down sweep and the mean-up/variance-up sweep both always run (2(M+1)
    sorts). Identical selections are deduplicated keeping their first
    occurrence (minus sweep first, so shared points stay usable for the
    bound). Deterministic given the candidate order.

    The final argmin also considers the two greedy baseline portfolios
    (gradual greedy and top-N-by-mean): the tan grid is coarse near zero, so
    on pools with a few very low-variance candidates the sweeps can skip the
    low-variance end of the frontier that the gradual greedy reaches. Folding
    the baselines in costs O(N K) and makes the solver never return a worse
    portfolio than the greedy module. They are not extreme points and do not
    enter the bound computation.
    """
    grid = lambda_grid(m)
    points: list[ExtremePoint] = []
    seen: set[tuple[int, ...]] = set()
    for sweep, sign in (("minus", "-"), ("plus", "+")):
        for i, lam in enumerate(grid):
            sel = solve_lambda_diagonal(problem, lam, sign)
            if not sel.chosen or sel.chosen in seen:
                continue
            seen.add(sel.chosen)
            points.append(ExtremePoint(i, lam, sweep, sel))
    if not points:
        raise InfeasibleError(
            "no feasible portfolio: every lambda subproblem selected nothing "
            "(all linearized scores non-positive)"
        )
    candidates = [p.selection for p in points]
    if include_baselines:
        from .greedy import solve_gradual_greedy, solve_greedy_mu

        for sel in (solve_gradual_greedy(problem), solve_greedy_mu(problem)):
            if sel.chosen and sel.chosen not in seen:
                seen.add(sel.chosen)
                candidates.append(sel)
    best = min(candidates, key=_rho_key)
    return HeuristicResult(best, tuple(points))


def min_variance_to_target(problem: SelectionProblem) -> float:
    """LP lower bound on the variance of any feasible portfolio reaching the target.

    Relaxes integrality only: min var'x s.t. mu'x >= T, sum x <= n_max,
    0 <= x <= 1. Every integral portfolio with mean at least T is feasible
    here, so its variance is at least this value. Returns 0 when T <= 0 and
    +inf when even the fractional relaxation cannot reach T.
    """
    t = problem.target
    if t <= 0.0:
        return 0.0
    from scipy.optimize import linprog

    k = problem.size
    res = linprog(
        c=problem.var,
        A_ub=np.vstack([-problem.mu, np.ones(k)]),
        b_ub=np.array([-t, float(problem.n_max)]),
        bounds=(0.0, 1.0),
        method="highs",
    )
    if not res.success:
        return math.inf  # infeasible relaxation: nothing integral reaches T either
    return max(0.0, float(res.fun))


@dataclass(frozen=True)
class BoundDiagnostics:
    value: float | None
    reason: str | None
    sigma_ladder: tuple[float, ...]
    min_reachable_std: float


def bound_diagnostics(problem: SelectionProblem, extreme_points) -> BoundDiagnostics:
    """Compute the approximation bound with its soundness certificate.

    The raw bound is min_i sigma'_{i-1}/sigma'_i over the distinct positive-
    variance minus-sweep extreme points sorted by sigma'. Its derivation
    assumes the optimal portfolio's sigma is bracketed by swept points, so two
    repairs keep the reported number a theorem:

    - certificate: no target-reaching portfolio can sit below the swept range
      (the LP variance floor must reach the smallest swept variance), else
      the bound is undefined;
    - only ladder gaps that can actually bracket the optimum count: pairs
      whose upper sigma' lies below the floor are skipped.
    """
    distinct: dict[tuple[int, ...], float] = {}
    for point in extreme_points:
        if point.sweep != "minus":
            continue
        sel = point.selection
        if not sel.chosen or sel.total_var <= 0.0:
            continue
        distinct.setdefault(sel.chosen, sel.total_var)
    floor_var = min_variance_to_target(problem)
    floor_std = math.sqrt(floor_var) if math.isfinite(floor_var) else math.inf
    sigmas = tuple(sorted(math.sqrt(v) for v in distinct.values()))
    if len(sigmas) < 2:
        return BoundDiagnostics(
            None,
            "fewer than two distinct positive-variance extreme points",
            sigmas,
            floor_std,
        )
    if floor_var < min(distinct.values()):
        return BoundDiagnostics(
            None,
            "a portfolio reaching the target could lie below the swept "
            "variance range, so the ratio bound is not certified",
            sigmas,
            floor_std,
        )
    ratios = [
        prev / cur for prev, cur in zip(sigmas, sigmas[1:]) if cur >= floor_std
    ]
    if not ratios:
        return BoundDiagnostics(
            None,
            "the variance floor exceeds the swept range",
            sigmas,
            floor_std,
        )
    return BoundDiagnostics(min(ratios), None, sigmas, floor_std)


def approximation_bound(problem: SelectionProblem, extreme_points) -> float | None:
    """Certified ratio bounding the heuristic's rho against the optimum.

    When the optimal rho is negative and a value is returned, the heuristic's
    rho is at most rho_opt * bound, so values near 1 certify near-optimality.
    None means undefined: fewer than two usable extreme points, or the
    soundness certificate failed (see bound_diagnostics).
    """
    return bound_diagnostics(problem, extreme_points).value


def _combination_chunks(k: int, size: int, chunk: int = 200_000):
    it = combinations(range(k), size)
    while True:
        block = list(islice(it, chunk))
        if not block:
            return
        yield np.array(block, dtype=np.intp)


def solve_exact(problem: SelectionProblem) -> Selection:
    """Brute-force optimum over all subsets of size 1..n_max (oracle).

    Guarded at K <= EXACT_K_LIMIT. Ties in rho resolve to the
    lexicographically smallest chosen tuple.
    """
    k = problem.size
    if k > EXACT_K_LIMIT:
        raise ValidationError(
            f"exact enumeration is limited to K <= {EXACT_K_LIMIT} candidates, got K={k}"
        )
    best_rho: float | None = None
    best_set: tuple[int, ...] | None = None
    for size in range(1, problem.n_max + 1):
        for idx_mat in _combination_chunks(k, size):
            mus = problem.mu[idx_mat].sum(axis=1)
            vars_ = problem.var[idx_mat].sum(axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                rhos = (problem.target - mus) / np.sqrt(vars_)
            degenerate = vars_ == 0.0
            if degenerate.any():
                rhos[degenerate] = np.where(
                    mus[degenerate] >= problem.target, -np.inf, np.inf
                )
            j = int(np.argmin(rhos))  # first minimum = lex-smallest in chunk
            r = float(rhos[j])
            cand = tuple(int(i) for i in idx_mat[j])
            if (
                best_rho is None
                or r < best_rho
                or (r == best_rho and cand < best_set)
            ):
                best_rho = r
                best_set = cand
    return evaluate_selection(problem, best_set)


@dataclass(frozen=True)
class CandidatePool:
    """Per-customer (mu, sigma) candidates ready to instantiate selection problems."""

    ids: tuple[str, ...]
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        sigma = np.asarray(self.sigma, dtype=np.float64)
        if mu.ndim != 1 or sigma.ndim != 1 or mu.shape != sigma.shape:
            raise ValidationError("pool mu and sigma must be equal-length vectors")
        if len(self.ids) != mu.size:
            raise ValidationError("pool ids length must match mu/sigma")
        if not np.all(np.isfinite(mu)) or not np.all(np.isfinite(sigma)):
            raise ValidationError("pool mu/sigma must be finite")
        if np.any(sigma < 0):
            raise ValidationError("pool sigma must be non-negative")
        mu.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def size(self) -> int:
        return self.mu.size

    @classmethod
    def from_estimates(cls, estimates, allow_negative_mu: bool = False) -> "CandidatePool":
        """Keep eligible estimates; drop negative means unless explicitly allowed."""
        kept = [
            e
            for e in estimates
            if e.eligible and (allow_negative_mu or e.mu >= 0.0)
        ]
        if not kept:
            raise InfeasibleError("no eligible candidates in the estimate set")
        return cls(
            ids=tuple(e.customer_id for e in kept),
            mu=np.array([e.mu for e in kept], dtype=np.float64),
            sigma=np.array([e.sigma for e in kept], dtype=np.float64),
        )

    def problem(self, target: float, n_max: int) -> SelectionProblem:
        return SelectionProblem(
            mu=self.mu, var=self.sigma**2, n_max=n_max, target=target, ids=self.ids
        )


def read_problem_csv(path) -> CandidatePool:
    """Read a `customer_id,mu,sigma` candidate file (comment lines skipped)."""
    ids: list[str] = []
    mu: list[float] = []
    sigma: list[float] = []
    with open(path, newline="") as fh:
        numbered = [
            (no, line)
            for no, line in enumerate(fh, start=1)
            if not line.startswith("#") and line.strip()
        ]
    if not numbered:
        raise DataError(f"{path}: empty file, no header")
    rows = csv.reader(line for _, line in numbered)
    header = next(rows)
    if [h.strip() for h in header] != ["customer_id", "mu", "sigma"]:
        raise DataError(
            f"{path}: expected header 'customer_id,mu,sigma', got {header}"
        )
    for (lineno, _), row in zip(numbered[1:], rows):
        if len(row) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
        try:
            ids.append(row[0])
            mu.append(float(row[1]))
            sigma.append(float(row[2]))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    if not ids:
        raise DataError(f"{path}: no candidate rows")
    return CandidatePool(ids=tuple(ids), mu=np.array(mu), sigma=np.array(sigma))
