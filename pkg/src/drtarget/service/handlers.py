"""Transport-free request handlers shared by the HTTP app and the CLI."""

from __future__ import annotations

import math

import numpy as np

from .. import __version__, greedy, ingest, response_model, skp_solver, tradeoff
from ..errors import DataError, ValidationError
from . import schemas


def handle_health() -> schemas.HealthResponse:
    return schemas.HealthResponse(status="ok", version=__version__)


def _meter_to_model(m: ingest.MeterSeries) -> schemas.MeterSeriesModel:
    return schemas.MeterSeriesModel(
        customer_id=m.customer_id,
        zip=m.zip_code,
        readings=[(ingest.format_hour_timestamp(ts), load) for ts, load in m.readings],
    )


def _meter_from_model(m: schemas.MeterSeriesModel) -> ingest.MeterSeries:
    try:
        readings = tuple(
            (ingest.parse_hour_timestamp(ts), float(load)) for ts, load in m.readings
        )
    except ValueError as exc:
        raise DataError(f"meter series {m.customer_id}: {exc}") from exc
    return ingest.MeterSeries(m.customer_id, m.zip, readings)


def _weather_to_model(w: ingest.WeatherSeries) -> schemas.WeatherSeriesModel:
    return schemas.WeatherSeriesModel(
        zip=w.zip_code,
        readings=[(ingest.format_hour_timestamp(ts), temp) for ts, temp in w.readings],
    )


def _weather_from_model(w: schemas.WeatherSeriesModel) -> ingest.WeatherSeries:
    try:
        readings = tuple(
            (ingest.parse_hour_timestamp(ts), float(temp)) for ts, temp in w.readings
        )
    except ValueError as exc:
        raise DataError(f"weather series {w.zip}: {exc}") from exc
    return ingest.WeatherSeries(w.zip, readings)


def handle_synth(req: schemas.SynthRequest) -> schemas.SynthResponse:
    spec = ingest.SynthSpec(
        count=req.count,
        fraction_ac=req.fraction_ac,
        a_range=tuple(req.a_range),
        b_range=tuple(req.b_range),
        c_range=tuple(req.c_range),
        tr_range=tuple(req.tr_range),
        noise_sd=req.noise_sd,
        temp_profile=ingest.TempProfile(**req.temp_profile.model_dump()),
        seed=req.seed,
        days=req.days,
        start=req.start,
        zip_code=req.zip_code,
    )
    result = ingest.synth_population(spec)
    return schemas.SynthResponse(
        meters=[_meter_to_model(m) for m in result.meters],
        weather=_weather_to_model(result.weather),
        ground_truth=[
            schemas.GroundTruthModel(
                customer_id=r.customer_id,
                model=r.model,
                tr=r.tr,
                a=r.a,
                b=r.b,
                c=r.c,
                noise_sd=r.noise_sd,
            )
            for r in result.ground_truth
        ],
    )


def _fit_to_model(f: response_model.HourlyFit) -> schemas.HourlyFitModel:
    return schemas.HourlyFitModel(
        customer_id=f.customer_id,
        hour=f.hour,
        model=f.model_kind,
        tr=f.tr,
        a=f.a,
        se_a=f.se_a,
        b=f.b,
        c=f.c,
        rss=f.rss,
        r2=f.r2,
        n=f.n_samples,
        f_stat=None if f.f_stat is None or math.isinf(f.f_stat) else f.f_stat,
        f_pvalue=f.f_pvalue,
        eligible=f.model_kind == response_model.MODEL_BREAKPOINT,
    )


def handle_fit(req: schemas.FitRequest) -> schemas.FitResponse:
    meters = [_meter_from_model(m) for m in req.meters]
    weathers = [_weather_from_model(w) for w in req.weather]
    join = ingest.join_weather(meters, weathers, hours_filter=req.hours)
    config = response_model.FitConfig(
        tr_min=req.tr_min,
        tr_max=req.tr_max,
        min_side_fraction=req.min_side_fraction,
        min_samples=req.min_samples,
        alpha=req.alpha,
    )
    result = response_model.fit_population(
        join.observations,
        hours=req.hours,
        delta_tr=req.delta_tr,
        config=config,
        threads=req.threads,
    )
    return schemas.FitResponse(
        fits=[_fit_to_model(f) for f in result.fits],
        estimates=[
            schemas.EstimateModel(
                customer_id=e.customer_id,
                hour=e.hour,
                delta_tr=e.delta_tr,
                mu=e.mu,
                sigma=e.sigma,
                eligible=e.eligible,
            )
            for e in result.estimates
        ],
        hourly_model_selection=result.report.hourly_model_selection,
        r2_histogram=result.report.r2_histogram,
        excluded=[schemas.FitExclusionModel(**row) for row in result.report.excluded],
        coverage=join.report.coverage,
        join_excluded=join.report.excluded,
    )


def _selection_to_model(
    sel: skp_solver.Selection, ids: tuple[str, ...]
) -> schemas.SelectionModel:
    return schemas.SelectionModel(
        chosen_ids=[ids[i] for i in sel.chosen],
        size=sel.size,
        total_mu=sel.total_mu,
        total_var=sel.total_var,
        rho=sel.rho,
        reliability=sel.reliability,
    )


def _comparison_row(name: str, sel: skp_solver.Selection) -> schemas.ComparisonRowModel:
    return schemas.ComparisonRowModel(
        algorithm=name,
        size=sel.size,
        total_mu=sel.total_mu,
        rho=sel.rho,
        reliability=sel.reliability,
    )


def handle_select(req: schemas.SelectRequest) -> schemas.SelectResponse:
    pool = skp_solver.CandidatePool(
        ids=tuple(c.customer_id for c in req.candidates),
        mu=np.array([c.mu for c in req.candidates], dtype=np.float64),
        sigma=np.array([c.sigma for c in req.candidates], dtype=np.float64),
    )
    problem = pool.problem(target=req.target_kwh, n_max=req.n_max)

    extreme_models: list[schemas.ExtremePointModel] = []
    bound = None
    bound_reason = None
    if req.algorithm == "heuristic":
        result = skp_solver.solve_heuristic(problem, req.iterations)
        selection = result.selection
        diag = skp_solver.bound_diagnostics(problem, result.extreme_points)
        if selection.rho is None or selection.rho < 0:
            bound, bound_reason = diag.value, diag.reason
        else:
            bound_reason = (
                "bound applies only when the achieved rho is negative "
                "(portfolio reaches the target in expectation)"
            )
        for pt in result.extreme_points:
            s = pt.selection
            extreme_models.append(
                schemas.ExtremePointModel(
                    lambda_index=pt.lambda_index,
                    lambda_prime=None if math.isinf(pt.lambda_prime) else pt.lambda_prime,
                    sweep=pt.sweep,
                    size=s.size,
                    total_mu=s.total_mu,
                    total_var=s.total_var,
                    rho=s.rho,
                    reliability=s.reliability,
                )
            )
    elif req.algorithm == "greedy":
        selection = greedy.solve_greedy(problem)
    elif req.algorithm == "oracle":
        selection = skp_solver.solve_exact(problem)
    else:
        raise ValidationError(
            f"unknown algorithm {req.algorithm!r}; expected heuristic, greedy, or oracle"
        )

    comparison = None
    if req.compare:
        comparison = [
            _comparison_row(
                "heuristic", skp_solver.solve_heuristic(problem, req.iterations).selection
            ),
            _comparison_row("greedy", greedy.solve_greedy(problem)),
        ]
        if pool.size <= skp_solver.EXACT_K_LIMIT:
            comparison.append(_comparison_row("oracle", skp_solver.solve_exact(problem)))

    return schemas.SelectResponse(
        algorithm=req.algorithm,
        target_kwh=req.target_kwh,
        n_max=req.n_max,
        iterations=req.iterations,
        selection=_selection_to_model(selection, pool.ids),
        bound=bound,
        bound_reason=bound_reason,
        extreme_points=extreme_models,
        comparison=comparison,
    )


_KIND_BY_FLAG = {
    "rel-vs-t": tradeoff.KIND_RELIABILITY_VS_T,
    "rel-vs-n": tradeoff.KIND_RELIABILITY_VS_N,
    "minn-vs-t": tradeoff.KIND_MIN_N_VS_T,
}


def handle_tradeoff(req: schemas.TradeoffRequest) -> schemas.TradeoffResponse:
    if req.kind not in _KIND_BY_FLAG:
        raise ValidationError(
            f"unknown curve kind {req.kind!r}; expected one of {sorted(_KIND_BY_FLAG)}"
        )
    pool = skp_solver.CandidatePool(
        ids=tuple(c.customer_id for c in req.candidates),
        mu=np.array([c.mu for c in req.candidates], dtype=np.float64),
        sigma=np.array([c.sigma for c in req.candidates], dtype=np.float64),
    )
    if req.kind == "rel-vs-t":
        if req.n_fixed is None or not req.t_grid:
            raise ValidationError("rel-vs-t needs n_fixed and t_grid")
        curve = tradeoff.reliability_vs_target(
            pool, req.n_fixed, req.t_grid, m=req.iterations, algorithm=req.algorithm
        )
    elif req.kind == "rel-vs-n":
        if req.t_fixed is None or not req.n_grid:
            raise ValidationError("rel-vs-n needs t_fixed and n_grid")
        curve = tradeoff.reliability_vs_n(
            pool, req.t_fixed, req.n_grid, m=req.iterations, algorithm=req.algorithm
        )
    else:
        if not req.t_grid:
            raise ValidationError("minn-vs-t needs t_grid")
        curve = tradeoff.min_n_for_target(
            pool, req.t_grid, p_min=req.p_min, m=req.iterations
        )
    return schemas.TradeoffResponse(
        kind=curve.kind,
        algorithm=curve.algorithm,
        points=[
            schemas.CurvePointModel(control=p.control, value=p.value)
            for p in curve.points
        ],
        params=curve.params,
    )
