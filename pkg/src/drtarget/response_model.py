"""Per-customer hourly temperature-response models.

Load at a given hour is regressed on outdoor temperature two ways: a kinked
model a*(To-Tr)+ + b*(Tr-To)+ + c with the kink Tr searched over an integer
grid (68..86 F by default), and a plain line a*To + c. The kink is kept only
when an F-test says it explains significantly more variance; its location is
the proxy for the AC setpoint, and the cooling slope with its standard error
turns a setpoint increase of delta_tr degrees into a probabilistic curtailment
estimate (mu, sigma) = (a, se_a) * delta_tr.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .errors import DataError, ValidationError
from .ingest import JoinedObservations

FIT_REPORT_COLUMNS = (
    "customer_id",
    "hour",
    "model",
    "tr",
    "a",
    "se_a",
    "b",
    "c",
    "rss",
    "r2",
    "n",
    "f_stat",
    "f_pvalue",
    "eligible",
)
ESTIMATE_COLUMNS = ("customer_id", "hour", "delta_tr", "mu", "sigma", "eligible")

MODEL_BREAKPOINT = "breakpoint"
MODEL_LINEAR = "linear"


@dataclass(frozen=True)
class FitConfig:
    tr_min: int = 68
    tr_max: int = 86
    min_side_fraction: float = 0.15
    min_samples: int = 20
    alpha: float = 0.05

    def __post_init__(self):
        # the default grid is 68..86 F; a wider grid is legal (used when the
        # temperature scale is deliberately shifted)
        if self.tr_min > self.tr_max:
            raise ValidationError("tr grid must satisfy tr_min <= tr_max")
        if not 0.0 <= self.min_side_fraction < 0.5:
            raise ValidationError("min_side_fraction must be in [0, 0.5)")
        if self.min_samples < 5:
            raise ValidationError(
                "min_samples must be >= 5 (standard errors and the model "
                "comparison need n > 4)"
            )
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError("alpha must be in (0, 1)")


@dataclass(frozen=True)
class HourlyFit:
    """Selected regression for one customer at one hour-of-day."""

    customer_id: str
    hour: int
    model_kind: str
    a: float
    se_a: float
    c: float
    rss: float
    r2: float
    n_samples: int
    tr: int | None = None
    b: float | None = None
    f_stat: float | None = None
    f_pvalue: float | None = None

    def __post_init__(self):
        if self.model_kind not in (MODEL_BREAKPOINT, MODEL_LINEAR):
            raise ValidationError(f"unknown model kind {self.model_kind!r}")
        if (self.tr is not None) != (self.model_kind == MODEL_BREAKPOINT):
            raise ValidationError("tr must be present exactly for breakpoint fits")
        if self.se_a < 0:
            raise ValidationError("se_a must be >= 0")
        if not 0.0 <= self.r2 <= 1.0:
            raise ValidationError("r2 must be within [0, 1]")


@dataclass(frozen=True)
class ResponseEstimate:
    """Curtailment distribution for one customer-hour at a setpoint increase."""

    customer_id: str
    hour: int
    delta_tr: float
    mu: float
    sigma: float
    eligible: bool


def _r_squared(loads: np.ndarray, rss: float) -> float:
    tss = float(((loads - loads.mean()) ** 2).sum())
    if tss <= 0.0:
        return 0.0
    return min(1.0, max(0.0, 1.0 - rss / tss))


def _ols(design: np.ndarray, y: np.ndarray):
    """Least squares with explicit rank check; returns (coef, rss, cov) or None."""
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < design.shape[1]:
        return None
    resid = y - design @ coef
    rss = float(resid @ resid)
    dof = y.size - design.shape[1]
    try:
        xtx_inv = np.linalg.inv(design.T @ design)
    except np.linalg.LinAlgError:
        return None
    cov = (rss / dof) * xtx_inv
    return coef, rss, cov


def fit_breakpoint_model(obs: JoinedObservations, config: FitConfig = FitConfig()):
    """Grid-search the kink over integer temperatures, keeping the min-RSS fit.

    A grid point is feasible only when at least min_side_fraction of the
    samples lie strictly on each side (guards against one or two dominant
    points fabricating a kink). Returns None when no grid point is feasible
    or every feasible design is singular; ties in RSS go to the smaller tr.
    """
    t, y, n = obs.temps, obs.loads, obs.n_samples
    if n < config.min_samples:
        raise ValidationError(
            f"{obs.customer_id} hour {obs.hour}: {n} samples < "
            f"min_samples={config.min_samples}"
        )
    side_min = config.min_side_fraction * n - 1e-9
    ones = np.ones(n)
    best = None  # (rss, tr, coef, cov)
    for tr in range(config.tr_min, config.tr_max + 1):
        if (t < tr).sum() < side_min or (t > tr).sum() < side_min:
            continue
        cooling = np.maximum(t - tr, 0.0)
        heating = np.maximum(tr - t, 0.0)
        fitted = _ols(np.column_stack([cooling, heating, ones]), y)
        if fitted is None:
            continue
        coef, rss, cov = fitted
        if best is None or rss < best[0]:
            best = (rss, tr, coef, cov)
    if best is None:
        return None
    rss, tr, coef, cov = best
    return HourlyFit(
        customer_id=obs.customer_id,
        hour=obs.hour,
        model_kind=MODEL_BREAKPOINT,
        a=float(coef[0]),
        se_a=float(math.sqrt(max(0.0, cov[0, 0]))),
        c=float(coef[2]),
        rss=rss,
        r2=_r_squared(y, rss),
        n_samples=n,
        tr=tr,
        b=float(coef[1]),
    )


def fit_linear_model(obs: JoinedObservations, config: FitConfig = FitConfig()):
    """Plain load-on-temperature line; None when the temperature is constant."""
    t, y, n = obs.temps, obs.loads, obs.n_samples
    if n < config.min_samples:
        raise ValidationError(
            f"{obs.customer_id} hour {obs.hour}: {n} samples < "
            f"min_samples={config.min_samples}"
        )
    fitted = _ols(np.column_stack([t, np.ones(n)]), y)
    if fitted is None:
        return None
    coef, rss, cov = fitted
    return HourlyFit(
        customer_id=obs.customer_id,
        hour=obs.hour,
        model_kind=MODEL_LINEAR,
        a=float(coef[0]),
        se_a=float(math.sqrt(max(0.0, cov[0, 0]))),
        c=float(coef[1]),
        rss=rss,
        r2=_r_squared(y, rss),
        n_samples=n,
    )


def select_model(fit_kinked, fit_line, alpha: float = 0.05):
    """F-test between the kinked and plain fits on identical samples.

    The kinked model is charged for the grid-searched kink as well: numerator
    df 2 against F(2, n-4). Counting the kink keeps the test conservative
    toward the plain line, which compensates for the min-RSS grid search
    optimizing the same statistic (with df 1 the realized false-positive rate
    runs near triple the nominal level). The kinked model wins iff p < alpha.
    With only one candidate available, that candidate is returned unchanged.
    """
    if fit_kinked is None and fit_line is None:
        return None
    if fit_kinked is None:
        return fit_line
    if fit_line is None:
        return fit_kinked
    if fit_kinked.n_samples != fit_line.n_samples:
        raise ValidationError("F-test requires both fits on identical samples")
    n = fit_kinked.n_samples
    dof = n - 4
    if fit_kinked.rss == 0.0:
        if fit_line.rss > 0.0:
            return replace(fit_kinked, f_stat=math.inf, f_pvalue=0.0)
        return replace(fit_line, f_stat=0.0, f_pvalue=1.0)
    f_stat = max(0.0, fit_line.rss - fit_kinked.rss) / 2.0 / (fit_kinked.rss / dof)
    f_pvalue = float(stats.f.sf(f_stat, 2, dof))
    chosen = fit_kinked if f_pvalue < alpha else fit_line
    return replace(chosen, f_stat=f_stat, f_pvalue=f_pvalue)


def estimate_response(fit: HourlyFit, delta_tr: float) -> ResponseEstimate:
    """Scale the cooling slope into a (mu, sigma) curtailment for a setpoint raise.

    Only kinked fits are eligible: a setpoint response is defined only when a
    setpoint proxy was detected. Ineligible customers carry mu = sigma = 0 and
    are dropped from candidate pools downstream.
    """
    if not delta_tr > 0:
        raise ValidationError(f"delta_tr must be > 0, got {delta_tr}")
    eligible = fit.model_kind == MODEL_BREAKPOINT
    return ResponseEstimate(
        customer_id=fit.customer_id,
        hour=fit.hour,
        delta_tr=float(delta_tr),
        mu=fit.a * delta_tr if eligible else 0.0,
        sigma=fit.se_a * delta_tr if eligible else 0.0,
        eligible=eligible,
    )


@dataclass
class FitReport:
    hourly_model_selection: list[dict] = field(default_factory=list)
    r2_histogram: list[dict] = field(default_factory=list)
    excluded: list[dict] = field(default_factory=list)


@dataclass
class PopulationFitResult:
    fits: list[HourlyFit]
    estimates: list[ResponseEstimate]
    report: FitReport


def _fit_one(obs: JoinedObservations, config: FitConfig):
    if obs.n_samples < config.min_samples:
        return None, (
            f"too few samples (n={obs.n_samples} < min_samples={config.min_samples})"
        )
    if np.all(obs.temps == obs.temps[0]):
        return None, "constant temperature"
    kinked = fit_breakpoint_model(obs, config)
    line = fit_linear_model(obs, config)
    chosen = select_model(kinked, line, config.alpha)
    if chosen is None:
        return None, "no model available (degenerate temperature distribution)"
    return chosen, None


def fit_population(
    joined,
    hours=None,
    delta_tr: float = 3.0,
    config: FitConfig = FitConfig(),
    threads: int | None = None,
) -> PopulationFitResult:
    """Fit every customer-hour, select models, and derive response estimates.

    Customer-hours failing preconditions are listed in the report and excluded
    from the estimates. Output ordering is deterministic (customer_id, hour)
    regardless of thread count.
    """
    if hours is not None:
        hours = set(hours)
        work = [obs for obs in joined if obs.hour in hours]
    else:
        work = list(joined)
    if not work:
        raise ValidationError("no observations to fit (empty population or hours)")
    work.sort(key=lambda obs: (obs.customer_id, obs.hour))

    if threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(lambda o: _fit_one(o, config), work))
    else:
        outcomes = [_fit_one(obs, config) for obs in work]

    fits: list[HourlyFit] = []
    report = FitReport()
    for obs, (fit, reason) in zip(work, outcomes):
        if fit is None:
            report.excluded.append(
                {"customer_id": obs.customer_id, "hour": obs.hour, "reason": reason}
            )
        else:
            fits.append(fit)

    by_hour: dict[int, list[HourlyFit]] = {}
    for fit in fits:
        by_hour.setdefault(fit.hour, []).append(fit)
    for hour in sorted(by_hour):
        group = by_hour[hour]
        n_kinked = sum(1 for f in group if f.model_kind == MODEL_BREAKPOINT)
        report.hourly_model_selection.append(
            {
                "hour": hour,
                "n_fitted": len(group),
                "n_breakpoint": n_kinked,
                "breakpoint_pct": 100.0 * n_kinked / len(group),
                "mean_r2": float(np.mean([f.r2 for f in group])),
            }
        )
    if fits:
        counts, edges = np.histogram([f.r2 for f in fits], bins=10, range=(0.0, 1.0))
        report.r2_histogram = [
            {"r2_low": float(lo), "r2_high": float(hi), "count": int(cnt)}
            for lo, hi, cnt in zip(edges[:-1], edges[1:], counts)
        ]
    estimates = [estimate_response(fit, delta_tr) for fit in fits]
    return PopulationFitResult(fits, estimates, report)


# ---------------------------------------------------------------------------
# CSV surfaces


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path, header, rows, config_comment=None):
    with open(path, "w", newline="") as fh:
        if config_comment is not None:
            fh.write(f"# config: {config_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_fit_report_csv(path, fits, config_comment=None):
    rows = (
        (
            f.customer_id,
            f.hour,
            f.model_kind,
            _fmt(f.tr),
            _fmt(f.a),
            _fmt(f.se_a),
            _fmt(f.b),
            _fmt(f.c),
            _fmt(f.rss),
            _fmt(f.r2),
            f.n_samples,
            _fmt(f.f_stat),
            _fmt(f.f_pvalue),
            _fmt(f.model_kind == MODEL_BREAKPOINT),
        )
        for f in fits
    )
    _write_csv(path, FIT_REPORT_COLUMNS, rows, config_comment)


def write_estimates_csv(path, estimates, config_comment=None):
    rows = (
        (
            e.customer_id,
            e.hour,
            _fmt(e.delta_tr),
            _fmt(e.mu),
            _fmt(e.sigma),
            _fmt(e.eligible),
        )
        for e in estimates
    )
    _write_csv(path, ESTIMATE_COLUMNS, rows, config_comment)


def read_estimates_csv(path) -> list[ResponseEstimate]:
    estimates = []
    with open(path, newline="") as fh:
        numbered = [
            (no, line)
            for no, line in enumerate(fh, start=1)
            if not line.startswith("#") and line.strip()
        ]
    if not numbered:
        raise DataError(f"{path}: empty file, no header")
    reader = csv.reader(line for _, line in numbered)
    names = [h.strip() for h in next(reader)]
    missing = [c for c in ESTIMATE_COLUMNS if c not in names]
    if missing:
        raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
    idx = {c: names.index(c) for c in ESTIMATE_COLUMNS}
    for (lineno, _), row in zip(numbered[1:], reader):
        try:
            estimates.append(
                ResponseEstimate(
                    customer_id=row[idx["customer_id"]],
                    hour=int(row[idx["hour"]]),
                    delta_tr=float(row[idx["delta_tr"]]),
                    mu=float(row[idx["mu"]]),
                    sigma=float(row[idx["sigma"]]),
                    eligible=row[idx["eligible"]].strip().lower() == "true",
                )
            )
        except (ValueError, IndexError) as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    if not estimates:
        raise DataError(f"{path}: no estimate rows")
    return estimates
