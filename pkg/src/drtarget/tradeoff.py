"""Program-design curves: target vs reliability, budget vs reliability, minimum budget.

Each curve point is one independent solver run; there is no hidden state, so
any emitted point can be reproduced by a single solve with the same
parameters. The heuristic is not provably monotone across grid points, so
observed monotonicity violations are measured and reported in the curve
params rather than smoothed away.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

from .errors import ValidationError
from .greedy import solve_greedy
from .skp_solver import CandidatePool, solve_heuristic

KIND_RELIABILITY_VS_T = "reliability_vs_T"
KIND_RELIABILITY_VS_N = "reliability_vs_N"
KIND_MIN_N_VS_T = "minN_vs_T"

CURVE_COLUMNS = ("control", "value", "algorithm", "params_json")

ALGORITHMS = ("heuristic", "greedy")


@dataclass(frozen=True)
class TradeoffPoint:
    control: float
    value: float | None  # None marks an unreachable target (minN curve)


@dataclass
class TradeoffCurve:
    kind: str
    algorithm: str
    points: list[TradeoffPoint]
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        controls = [p.control for p in self.points]
        if any(b <= a for a, b in zip(controls, controls[1:])):
            raise ValidationError("curve control values must be strictly increasing")
        for p in self.points:
            if p.value is None:
                continue
            if self.kind == KIND_MIN_N_VS_T:
                if p.value < 1:
                    raise ValidationError("minimum N must be >= 1")
            elif not 0.0 <= p.value <= 1.0:
                raise ValidationError("reliability values must lie in [0, 1]")


def _solve_reliability(pool: CandidatePool, target: float, n_max: int, m: int, algorithm: str) -> float:
    problem = pool.problem(target=target, n_max=n_max)
    if algorithm == "heuristic":
        return solve_heuristic(problem, m).selection.reliability
    if algorithm == "greedy":
        return solve_greedy(problem).reliability
    raise ValidationError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")


def _check_grid(grid, name, positive=False):
    grid = list(grid)
    if not grid:
        raise ValidationError(f"{name} must be non-empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValidationError(f"{name} must be strictly increasing")
    if positive and grid[0] <= 0:
        raise ValidationError(f"{name} values must be positive")
    return grid


def reliability_vs_target(
    pool: CandidatePool, n_fixed: int, t_grid, m: int = 10, algorithm: str = "heuristic"
) -> TradeoffCurve:
    """Achieved reliability per curtailment target at a fixed budget."""
    t_grid = _check_grid(t_grid, "t_grid", positive=True)
    values = [_solve_reliability(pool, t, n_fixed, m, algorithm) for t in t_grid]
    # expected non-increasing in T
    worst = max(
        [b - a for a, b in zip(values, values[1:])] or [0.0]
    )
    return TradeoffCurve(
        kind=KIND_RELIABILITY_VS_T,
        algorithm=algorithm,
        points=[TradeoffPoint(float(t), v) for t, v in zip(t_grid, values)],
        params={
            "n_fixed": int(n_fixed),
            "m": int(m),
            "max_monotonicity_violation": max(0.0, worst),
        },
    )


def reliability_vs_n(
    pool: CandidatePool, t_fixed: float, n_grid, m: int = 10, algorithm: str = "heuristic"
) -> TradeoffCurve:
    """Achieved reliability per budget at a fixed curtailment target."""
    n_grid = _check_grid(n_grid, "n_grid")
    if n_grid[0] < 1 or n_grid[-1] > pool.size:
        raise ValidationError(
            f"n_grid must lie within [1, {pool.size}] for this candidate pool"
        )
    values = [_solve_reliability(pool, t_fixed, int(n), m, algorithm) for n in n_grid]
    # expected non-decreasing in N
    worst = max(
        [a - b for a, b in zip(values, values[1:])] or [0.0]
    )
    return TradeoffCurve(
        kind=KIND_RELIABILITY_VS_N,
        algorithm=algorithm,
        points=[TradeoffPoint(float(n), v) for n, v in zip(n_grid, values)],
        params={
            "t_fixed": float(t_fixed),
            "m": int(m),
            "max_monotonicity_violation": max(0.0, worst),
        },
    )


def min_n_for_target(
    pool: CandidatePool, t_grid, p_min: float = 0.95, m: int = 10
) -> TradeoffCurve:
    """Smallest budget reaching p_min reliability for each target.

    Exponential-then-binary search treats reliability as non-decreasing in N;
    the returned N and N-1 are then re-verified by direct solves (certificate
    pair). If the certificate fails (the heuristic is only approximately
    monotone) the point falls back to a linear scan. Targets unreachable even
    at N = K are reported explicitly with value None.
    """
    if not 0.5 < p_min < 1.0:
        raise ValidationError(f"p_min must be in (0.5, 1), got {p_min}")
    t_grid = _check_grid(t_grid, "t_grid", positive=True)
    k = pool.size
    points: list[TradeoffPoint] = []
    certificates: list[dict] = []
    for t in t_grid:
        cache: dict[int, float] = {}

        def rel(n: int) -> float:
            if n not in cache:
                cache[n] = _solve_reliability(pool, t, n, m, "heuristic")
            return cache[n]

        if rel(k) < p_min:
            points.append(TradeoffPoint(float(t), None))
            certificates.append(
                {"target": float(t), "unreachable": True, "p_at_full_pool": rel(k)}
            )
            continue
        hi = 1
        while rel(hi) < p_min:
            hi = min(2 * hi, k)
        lo = hi // 2 if hi > 1 else 0
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if rel(mid) >= p_min:
                hi = mid
            else:
                lo = mid
        n_star = hi
        # certificate pair via direct solves
        p_at = _solve_reliability(pool, t, n_star, m, "heuristic")
        p_below = (
            _solve_reliability(pool, t, n_star - 1, m, "heuristic")
            if n_star > 1
            else None
        )
        ok = p_at >= p_min and (p_below is None or p_below < p_min)
        if not ok:
            n_star = next(n for n in range(1, k + 1) if rel(n) >= p_min)
            p_at = rel(n_star)
            p_below = rel(n_star - 1) if n_star > 1 else None
        points.append(TradeoffPoint(float(t), float(n_star)))
        certificates.append(
            {
                "target": float(t),
                "n": n_star,
                "p_at_n": p_at,
                "p_at_n_minus_1": p_below,
                "binary_search_certified": ok,
            }
        )
    return TradeoffCurve(
        kind=KIND_MIN_N_VS_T,
        algorithm="heuristic",
        points=points,
        params={"p_min": float(p_min), "m": int(m), "certificates": certificates},
    )


def write_curve_csv(path, curves, config_comment=None):
    """Write one or more curves as `control,value,algorithm,params_json` rows."""
    if isinstance(curves, TradeoffCurve):
        curves = [curves]
    with open(path, "w", newline="") as fh:
        if config_comment is not None:
            fh.write(f"# config: {config_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(CURVE_COLUMNS)
        for curve in curves:
            params = dict(curve.params)
            params["kind"] = curve.kind
            params.pop("certificates", None)  # row metadata stays compact
            params_json = json.dumps(params, sort_keys=True)
            for p in curve.points:
                writer.writerow(
                    (
                        repr(p.control),
                        "" if p.value is None else repr(p.value),
                        curve.algorithm,
                        params_json,
                    )
                )


def read_curve_csv(path):
    """Read back curve rows as (control, value-or-None, algorithm, params dict)."""
    rows = []
    with open(path, newline="") as fh:
        lines = (line for line in fh if not line.startswith("#") and line.strip())
        reader = csv.reader(lines)
        header = next(reader, None)
        if header is None or tuple(header) != CURVE_COLUMNS:
            raise ValidationError(f"{path}: expected header {','.join(CURVE_COLUMNS)}")
        for row in reader:
            rows.append(
                (
                    float(row[0]),
                    float(row[1]) if row[1] else None,
                    row[2],
                    json.loads(row[3]),
                )
            )
    return rows
