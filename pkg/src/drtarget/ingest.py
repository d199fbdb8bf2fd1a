"""Hourly meter/weather ingestion and synthetic population generation.

Timestamps are local clock hours with no DST arithmetic: a reading at clock
hour h belongs to hour-of-day bucket h. Missing hours stay absent; nothing is
imputed, since the downstream regressions tolerate unbalanced designs and
imputation would bias the sensitivity estimates. Temperatures are degrees
Fahrenheit throughout.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta

import numpy as np

from .errors import DataError, ValidationError

TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M"

METER_COLUMNS = ("customer_id", "zip", "timestamp", "kwh")
WEATHER_COLUMNS = ("zip", "timestamp", "temp_f")
GROUND_TRUTH_COLUMNS = ("customer_id", "model", "tr", "a", "b", "c", "noise_sd")

TEMP_MIN_F = -60.0
TEMP_MAX_F = 140.0


def parse_hour_timestamp(text: str) -> datetime:
    ts = datetime.strptime(text, TIMESTAMP_FORMAT)
    if ts.minute != 0:
        raise ValueError(f"timestamp {text!r} is not on the hour")
    return ts


def format_hour_timestamp(ts: datetime) -> str:
    return ts.strftime("%Y-%m-%dT%H:00")


@dataclass(frozen=True)
class MeterSeries:
    """One customer's hourly kWh readings, strictly increasing in time."""

    customer_id: str
    zip_code: str
    readings: tuple[tuple[datetime, float], ...]

    def __post_init__(self):
        _check_increasing(self.readings, f"meter series {self.customer_id}")
        for ts, load in self.readings:
            if not math.isfinite(load) or load < 0:
                raise DataError(
                    f"meter series {self.customer_id}: bad load {load} at "
                    f"{format_hour_timestamp(ts)}"
                )


@dataclass(frozen=True)
class WeatherSeries:
    """Hourly outdoor temperature for one zip, strictly increasing in time."""

    zip_code: str
    readings: tuple[tuple[datetime, float], ...]

    def __post_init__(self):
        _check_increasing(self.readings, f"weather series {self.zip_code}")
        for ts, temp in self.readings:
            if not math.isfinite(temp) or not TEMP_MIN_F <= temp <= TEMP_MAX_F:
                raise DataError(
                    f"weather series {self.zip_code}: temperature {temp} out of "
                    f"range at {format_hour_timestamp(ts)}"
                )


def _check_increasing(readings, label):
    for (t0, _), (t1, _) in zip(readings, readings[1:]):
        if t1 <= t0:
            raise DataError(
                f"{label}: timestamps not strictly increasing at "
                f"{format_hour_timestamp(t1)}"
            )


@dataclass(frozen=True, eq=False)
class JoinedObservations:
    """(day, temperature, load) samples for one customer at one hour-of-day."""

    customer_id: str
    hour: int
    days: np.ndarray
    temps: np.ndarray
    loads: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.temps.size


@dataclass
class JoinReport:
    coverage: dict[str, float] = field(default_factory=dict)
    excluded: list[tuple[str, str]] = field(default_factory=list)


@dataclass
class JoinResult:
    observations: list[JoinedObservations]
    report: JoinReport


def join_weather(meters, weathers, hours_filter=None) -> JoinResult:
    """Inner join of meter readings with same-zip weather, bucketed by hour-of-day.

    Coverage is the fraction of a customer's readings that found a matching
    temperature (before any hour filtering). Customers with an empty join are
    flagged in the report and excluded from the observations.
    """
    weather_by_zip: dict[str, dict[datetime, float]] = {}
    for w in weathers:
        weather_by_zip.setdefault(w.zip_code, {}).update(dict(w.readings))
    missing = sorted({m.zip_code for m in meters} - set(weather_by_zip))
    if missing:
        raise DataError(f"no weather series for zip(s): {', '.join(missing)}")
    if hours_filter is not None:
        hours_filter = set(hours_filter)
        bad = [h for h in hours_filter if not 0 <= h <= 23]
        if bad:
            raise ValidationError(f"hours_filter entries out of range: {bad}")

    observations: list[JoinedObservations] = []
    report = JoinReport()
    for meter in sorted(meters, key=lambda m: m.customer_id):
        temps = weather_by_zip[meter.zip_code]
        matched = [
            (ts, load, temps[ts]) for ts, load in meter.readings if ts in temps
        ]
        total = len(meter.readings)
        report.coverage[meter.customer_id] = len(matched) / total if total else 0.0
        if not matched:
            report.excluded.append(
                (meter.customer_id, "no overlapping weather observations")
            )
            continue
        day0 = min(ts.date().toordinal() for ts, _, _ in matched)
        buckets: dict[int, list[tuple[int, float, float]]] = {}
        for ts, load, temp in matched:
            hour = ts.hour
            if hours_filter is not None and hour not in hours_filter:
                continue
            buckets.setdefault(hour, []).append(
                (ts.date().toordinal() - day0, temp, load)
            )
        for hour in sorted(buckets):
            rows = buckets[hour]
            observations.append(
                JoinedObservations(
                    customer_id=meter.customer_id,
                    hour=hour,
                    days=np.array([r[0] for r in rows], dtype=np.int64),
                    temps=np.array([r[1] for r in rows], dtype=np.float64),
                    loads=np.array([r[2] for r in rows], dtype=np.float64),
                )
            )
    return JoinResult(observations, report)


# ---------------------------------------------------------------------------
# CSV loading


@dataclass
class MeterLoadResult:
    series: list[MeterSeries]
    bad_rows: list[tuple[int, str]]


@dataclass
class WeatherLoadResult:
    series: list[WeatherSeries]
    bad_rows: list[tuple[int, str]]


def _csv_rows(path):
    """Yield (line_number, row) skipping comment lines; raises on empty file."""
    with open(path, newline="") as fh:
        lineno = 0
        header = None
        for line in fh:
            lineno += 1
            if line.startswith("#") or not line.strip():
                continue
            row = next(csv.reader([line]))
            if header is None:
                header = row
                yield lineno, ("__header__", row)
            else:
                yield lineno, ("__row__", row)


def _header_indices(path, header_row, required):
    names = [h.strip() for h in header_row]
    missing = [c for c in required if c not in names]
    if missing:
        raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
    return {c: names.index(c) for c in required}


def load_meter_csv(path, schema_options=None) -> MeterLoadResult:
    """Load the meter CSV (columns customer_id, zip, timestamp, kwh).

    Unparseable rows are collected in bad_rows with line numbers instead of
    being silently dropped; duplicate (customer, timestamp) pairs and
    conflicting zips are fatal.
    """
    rename = (schema_options or {}).get("columns", {})
    required = tuple(rename.get(c, c) for c in METER_COLUMNS)
    idx = None
    rows_by_customer: dict[str, list[tuple[datetime, float]]] = {}
    zip_by_customer: dict[str, str] = {}
    bad_rows: list[tuple[int, str]] = []
    for lineno, (kind, row) in _csv_rows(path):
        if kind == "__header__":
            idx = _header_indices(path, row, required)
            idx = {std: idx[actual] for std, actual in zip(METER_COLUMNS, required)}
            continue
        try:
            customer = row[idx["customer_id"]].strip()
            zip_code = row[idx["zip"]].strip()
            if not customer:
                raise ValueError("empty customer_id")
            ts = parse_hour_timestamp(row[idx["timestamp"]].strip())
            load = float(row[idx["kwh"]])
            if not math.isfinite(load) or load < 0:
                raise ValueError(f"load {load} not a finite non-negative kWh value")
        except (ValueError, IndexError) as exc:
            bad_rows.append((lineno, str(exc)))
            continue
        if customer in zip_by_customer and zip_by_customer[customer] != zip_code:
            raise DataError(
                f"{path}:{lineno}: customer {customer} appears under zips "
                f"{zip_by_customer[customer]} and {zip_code}"
            )
        zip_by_customer[customer] = zip_code
        rows_by_customer.setdefault(customer, []).append((ts, load))
    if idx is None:
        raise DataError(f"{path}: empty file, no header")

    duplicates = []
    series = []
    for customer in sorted(rows_by_customer):
        rows = sorted(rows_by_customer[customer], key=lambda r: r[0])
        for (t0, _), (t1, _) in zip(rows, rows[1:]):
            if t0 == t1:
                duplicates.append((customer, format_hour_timestamp(t0)))
        if duplicates:
            continue
        series.append(
            MeterSeries(customer, zip_by_customer[customer], tuple(rows))
        )
    if duplicates:
        listing = "; ".join(f"{c} at {t}" for c, t in duplicates[:10])
        more = "" if len(duplicates) <= 10 else f" (+{len(duplicates) - 10} more)"
        raise DataError(f"{path}: duplicate hourly readings: {listing}{more}")
    return MeterLoadResult(series, bad_rows)


def load_weather_csv(path, schema_options=None) -> WeatherLoadResult:
    """Load the weather CSV (columns zip, timestamp, temp_f), one series per zip."""
    rename = (schema_options or {}).get("columns", {})
    required = tuple(rename.get(c, c) for c in WEATHER_COLUMNS)
    idx = None
    rows_by_zip: dict[str, list[tuple[datetime, float]]] = {}
    bad_rows: list[tuple[int, str]] = []
    for lineno, (kind, row) in _csv_rows(path):
        if kind == "__header__":
            idx = _header_indices(path, row, required)
            idx = {std: idx[actual] for std, actual in zip(WEATHER_COLUMNS, required)}
            continue
        try:
            zip_code = row[idx["zip"]].strip()
            if not zip_code:
                raise ValueError("empty zip")
            ts = parse_hour_timestamp(row[idx["timestamp"]].strip())
            temp = float(row[idx["temp_f"]])
            if not math.isfinite(temp) or not TEMP_MIN_F <= temp <= TEMP_MAX_F:
                raise ValueError(f"temperature {temp} outside sanity bounds")
        except (ValueError, IndexError) as exc:
            bad_rows.append((lineno, str(exc)))
            continue
        rows_by_zip.setdefault(zip_code, []).append((ts, temp))
    if idx is None:
        raise DataError(f"{path}: empty file, no header")

    duplicates = []
    series = []
    for zip_code in sorted(rows_by_zip):
        rows = sorted(rows_by_zip[zip_code], key=lambda r: r[0])
        for (t0, _), (t1, _) in zip(rows, rows[1:]):
            if t0 == t1:
                duplicates.append((zip_code, format_hour_timestamp(t0)))
        if duplicates:
            continue
        series.append(WeatherSeries(zip_code, tuple(rows)))
    if duplicates:
        listing = "; ".join(f"zip {z} at {t}" for z, t in duplicates[:10])
        raise DataError(f"{path}: duplicate weather readings: {listing}")
    return WeatherLoadResult(series, bad_rows)


# ---------------------------------------------------------------------------
# CSV writing


def _write_csv(path, header, rows, config_comment=None):
    with open(path, "w", newline="") as fh:
        if config_comment is not None:
            fh.write(f"# config: {config_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_meter_csv(path, meters, config_comment=None):
    rows = (
        (m.customer_id, m.zip_code, format_hour_timestamp(ts), _fmt(load))
        for m in meters
        for ts, load in m.readings
    )
    _write_csv(path, METER_COLUMNS, rows, config_comment)


def write_weather_csv(path, weathers, config_comment=None):
    if isinstance(weathers, WeatherSeries):
        weathers = [weathers]
    rows = (
        (w.zip_code, format_hour_timestamp(ts), _fmt(temp))
        for w in weathers
        for ts, temp in w.readings
    )
    _write_csv(path, WEATHER_COLUMNS, rows, config_comment)


# ---------------------------------------------------------------------------
# Synthetic population


@dataclass(frozen=True)
class TempProfile:
    """Sinusoidal daily temperature cycle plus day-to-day AR(1) drift.

    temp(d, h) = base_f + amplitude_f * cos(2*pi*(h - peak_hour)/24) + drift_d
    with drift_d = ar1 * drift_{d-1} + N(0, drift_sd), started at its
    stationary distribution. Defaults span the full breakpoint grid at the
    afternoon hours.
    """

    base_f: float = 71.0
    amplitude_f: float = 9.0
    peak_hour: int = 16
    drift_sd: float = 3.0
    ar1: float = 0.5

    def __post_init__(self):
        if not 0 <= self.peak_hour <= 23:
            raise ValidationError("peak_hour must be in [0, 23]")
        if self.drift_sd < 0:
            raise ValidationError("drift_sd must be >= 0")
        if not -0.999 <= self.ar1 <= 0.999:
            raise ValidationError("ar1 must be in (-1, 1)")


@dataclass(frozen=True)
class GroundTruthRecord:
    customer_id: str
    model: str  # "breakpoint" | "linear"
    tr: int | None
    a: float
    b: float | None
    c: float
    noise_sd: float


@dataclass(frozen=True)
class SynthSpec:
    """Ground-truth generator parameters for a synthetic population."""

    count: int
    fraction_ac: float = 1.0
    a_range: tuple[float, float] = (0.1, 0.6)
    b_range: tuple[float, float] = (0.0, 0.08)
    c_range: tuple[float, float] = (0.2, 1.2)
    tr_range: tuple[int, int] = (72, 82)
    noise_sd: float = 0.2
    temp_profile: TempProfile = TempProfile()
    seed: int = 0
    days: int = 90
    start: date = date(2011, 5, 1)
    zip_code: str = "00000"

    def __post_init__(self):
        if self.count < 1:
            raise ValidationError(f"count must be >= 1, got {self.count}")
        if not 0.0 <= self.fraction_ac <= 1.0:
            raise ValidationError("fraction_ac must be in [0, 1]")
        for name in ("a_range", "b_range", "c_range"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise ValidationError(f"{name} must be a non-empty finite interval")
        lo, hi = self.tr_range
        if not (isinstance(lo, int) and isinstance(hi, int) and 68 <= lo <= hi <= 86):
            raise ValidationError("tr_range must be an integer interval within [68, 86]")
        if not (self.noise_sd >= 0 and math.isfinite(self.noise_sd)):
            raise ValidationError("noise_sd must be a finite value >= 0")
        if self.days < 1:
            raise ValidationError("days must be >= 1")


@dataclass
class SynthResult:
    meters: list[MeterSeries]
    weather: WeatherSeries
    ground_truth: list[GroundTruthRecord]


def synth_population(spec: SynthSpec) -> SynthResult:
    """Generate a seeded population with known response parameters.

    AC customers follow the breakpoint model with sampled (tr, a, b, c);
    non-AC customers follow the plain linear model with slope drawn from
    b_range. Loads are clipped at zero to keep the meter invariant. Output is
    bit-identical for a given spec.
    """
    rng = np.random.default_rng(spec.seed)
    profile = spec.temp_profile
    n_hours = spec.days * 24

    records: list[GroundTruthRecord] = []
    width = max(6, len(str(spec.count)))
    for i in range(spec.count):
        cid = f"C{i + 1:0{width}d}"
        is_ac = bool(rng.random() < spec.fraction_ac)
        if is_ac:
            tr = int(rng.integers(spec.tr_range[0], spec.tr_range[1] + 1))
            a = float(rng.uniform(*spec.a_range))
            b = float(rng.uniform(*spec.b_range))
            c = float(rng.uniform(*spec.c_range))
            records.append(GroundTruthRecord(cid, "breakpoint", tr, a, b, c, spec.noise_sd))
        else:
            slope = float(rng.uniform(*spec.b_range))
            c = float(rng.uniform(*spec.c_range))
            records.append(GroundTruthRecord(cid, "linear", None, slope, None, c, spec.noise_sd))

    # shared weather: daily sinusoid plus stationary AR(1) day drift
    stationary_sd = profile.drift_sd / math.sqrt(1.0 - profile.ar1**2)
    drift = np.empty(spec.days)
    drift[0] = rng.normal(0.0, stationary_sd)
    innovations = rng.normal(0.0, profile.drift_sd, size=spec.days - 1)
    for d in range(1, spec.days):
        drift[d] = profile.ar1 * drift[d - 1] + innovations[d - 1]
    hours = np.arange(24)
    daily_cycle = profile.base_f + profile.amplitude_f * np.cos(
        2.0 * math.pi * (hours - profile.peak_hour) / 24.0
    )
    temps = (daily_cycle[None, :] + drift[:, None]).reshape(n_hours)
    temps = np.clip(temps, TEMP_MIN_F, TEMP_MAX_F)

    base = datetime.combine(spec.start, time(0))
    timestamps = [base + timedelta(hours=int(h)) for h in range(n_hours)]
    weather = WeatherSeries(
        spec.zip_code,
        tuple((ts, float(t)) for ts, t in zip(timestamps, temps)),
    )

    meters: list[MeterSeries] = []
    for rec in records:
        if rec.model == "breakpoint":
            clean = (
                rec.a * np.maximum(temps - rec.tr, 0.0)
                + rec.b * np.maximum(rec.tr - temps, 0.0)
                + rec.c
            )
        else:
            clean = rec.a * temps + rec.c
        if spec.noise_sd > 0:
            loads = clean + rng.normal(0.0, spec.noise_sd, size=n_hours)
        else:
            loads = clean
        loads = np.maximum(loads, 0.0)
        meters.append(
            MeterSeries(
                rec.customer_id,
                spec.zip_code,
                tuple((ts, float(v)) for ts, v in zip(timestamps, loads)),
            )
        )
    return SynthResult(meters, weather, records)


def write_ground_truth_csv(path, records, config_comment=None):
    rows = (
        (r.customer_id, r.model, _fmt(r.tr), _fmt(r.a), _fmt(r.b), _fmt(r.c), _fmt(r.noise_sd))
        for r in records
    )
    _write_csv(path, GROUND_TRUTH_COLUMNS, rows, config_comment)


def read_ground_truth_csv(path) -> list[GroundTruthRecord]:
    records = []
    idx = None
    for lineno, (kind, row) in _csv_rows(path):
        if kind == "__header__":
            idx = _header_indices(path, row, GROUND_TRUTH_COLUMNS)
            continue
        try:
            records.append(
                GroundTruthRecord(
                    customer_id=row[idx["customer_id"]],
                    model=row[idx["model"]],
                    tr=int(row[idx["tr"]]) if row[idx["tr"]] else None,
                    a=float(row[idx["a"]]),
                    b=float(row[idx["b"]]) if row[idx["b"]] else None,
                    c=float(row[idx["c"]]),
                    noise_sd=float(row[idx["noise_sd"]]),
                )
            )
        except (ValueError, IndexError) as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    if idx is None:
        raise DataError(f"{path}: empty file, no header")
    return records
