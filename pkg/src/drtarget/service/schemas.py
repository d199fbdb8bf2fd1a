"""Request/response models for the HTTP service.

These are the wire shapes; domain validation lives in the core modules and
surfaces as 4xx responses. Timestamps travel as `YYYY-MM-DDTHH:00` strings.
An infinite sweep slope is encoded as lambda_prime = null.
"""

from __future__ import annotations

from datetime import date

from pydantic import BaseModel


class HealthResponse(BaseModel):
    status: str
    version: str


class TempProfileModel(BaseModel):
    base_f: float = 71.0
    amplitude_f: float = 9.0
    peak_hour: int = 16
    drift_sd: float = 3.0
    ar1: float = 0.5


class SynthRequest(BaseModel):
    count: int
    fraction_ac: float = 1.0
    a_range: tuple[float, float] = (0.1, 0.6)
    b_range: tuple[float, float] = (0.0, 0.08)
    c_range: tuple[float, float] = (0.2, 1.2)
    tr_range: tuple[int, int] = (72, 82)
    noise_sd: float = 0.2
    temp_profile: TempProfileModel = TempProfileModel()
    seed: int = 0
    days: int = 90
    start: date = date(2011, 5, 1)
    zip_code: str = "00000"


class MeterSeriesModel(BaseModel):
    customer_id: str
    zip: str
    readings: list[tuple[str, float]]  # (timestamp, kwh)


class WeatherSeriesModel(BaseModel):
    zip: str
    readings: list[tuple[str, float]]  # (timestamp, temp_f)


class GroundTruthModel(BaseModel):
    customer_id: str
    model: str
    tr: int | None = None
    a: float
    b: float | None = None
    c: float
    noise_sd: float


class SynthResponse(BaseModel):
    meters: list[MeterSeriesModel]
    weather: WeatherSeriesModel
    ground_truth: list[GroundTruthModel]


class FitRequest(BaseModel):
    meters: list[MeterSeriesModel]
    weather: list[WeatherSeriesModel]
    hours: list[int] | None = None
    delta_tr: float = 3.0
    alpha: float = 0.05
    min_samples: int = 20
    tr_min: int = 68
    tr_max: int = 86
    min_side_fraction: float = 0.15
    threads: int | None = None


class HourlyFitModel(BaseModel):
    customer_id: str
    hour: int
    model: str
    tr: int | None = None
    a: float
    se_a: float
    b: float | None = None
    c: float
    rss: float
    r2: float
    n: int
    f_stat: float | None = None
    f_pvalue: float | None = None
    eligible: bool


class EstimateModel(BaseModel):
    customer_id: str
    hour: int
    delta_tr: float
    mu: float
    sigma: float
    eligible: bool


class FitExclusionModel(BaseModel):
    customer_id: str
    hour: int
    reason: str


class FitResponse(BaseModel):
    fits: list[HourlyFitModel]
    estimates: list[EstimateModel]
    hourly_model_selection: list[dict]
    r2_histogram: list[dict]
    excluded: list[FitExclusionModel]
    coverage: dict[str, float]
    join_excluded: list[tuple[str, str]]


class CandidateModel(BaseModel):
    customer_id: str
    mu: float
    sigma: float


class SelectionModel(BaseModel):
    chosen_ids: list[str]
    size: int
    total_mu: float
    total_var: float
    rho: float | None
    reliability: float


class ExtremePointModel(BaseModel):
    lambda_index: int
    lambda_prime: float | None  # null encodes the infinite-slope endpoint
    sweep: str
    size: int
    total_mu: float
    total_var: float
    rho: float | None
    reliability: float


class ComparisonRowModel(BaseModel):
    algorithm: str
    size: int
    total_mu: float
    rho: float | None
    reliability: float


class SelectRequest(BaseModel):
    candidates: list[CandidateModel]
    target_kwh: float
    n_max: int
    iterations: int = 10
    algorithm: str = "heuristic"  # heuristic | greedy | oracle
    compare: bool = False


class SelectResponse(BaseModel):
    algorithm: str
    target_kwh: float
    n_max: int
    iterations: int
    selection: SelectionModel
    bound: float | None
    bound_reason: str | None
    extreme_points: list[ExtremePointModel]
    comparison: list[ComparisonRowModel] | None = None


class CurvePointModel(BaseModel):
    control: float
    value: float | None


class TradeoffRequest(BaseModel):
    candidates: list[CandidateModel]
    kind: str  # rel-vs-t | rel-vs-n | minn-vs-t
    n_fixed: int | None = None
    t_fixed: float | None = None
    t_grid: list[float] | None = None
    n_grid: list[int] | None = None
    p_min: float = 0.95
    iterations: int = 10
    algorithm: str = "heuristic"


class TradeoffResponse(BaseModel):
    kind: str
    algorithm: str
    points: list[CurvePointModel]
    params: dict
