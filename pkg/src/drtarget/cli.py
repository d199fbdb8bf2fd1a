"""Command-line pipeline driver.

Thin client over the service handlers: every subcommand builds the same
request models the HTTP endpoints accept and calls them in-process, or against
a running server with --server. Each output artifact embeds the fully
resolved config (JSON files under a "config" key, CSV files as a first-line
`# config: {...}` comment), and `drtarget rerun <artifact>` re-executes from
that embedded config, reproducing the artifact byte for byte.

Exit codes: 0 success, 2 validation error, 3 data error, 4 infeasible or
unreachable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__, ingest, response_model, skp_solver, tradeoff
from .errors import DataError, DrTargetError, InfeasibleError, ValidationError
from .service import handlers, schemas

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DATA = 3
EXIT_INFEASIBLE = 4

_ENDPOINTS = {
    "/v1/synth": (handlers.handle_synth, schemas.SynthResponse),
    "/v1/fit": (handlers.handle_fit, schemas.FitResponse),
    "/v1/select": (handlers.handle_select, schemas.SelectResponse),
    "/v1/tradeoff": (handlers.handle_tradeoff, schemas.TradeoffResponse),
}

_HTTP_TO_ERROR = {422: ValidationError, 400: DataError, 409: InfeasibleError}


class ServiceClient:
    """Dispatch a request model to the service, in-process by default."""

    def __init__(self, server: str | None):
        self.server = server.rstrip("/") if server else None

    def call(self, path, request, response_cls):
        if self.server is None:
            handler, _ = _ENDPOINTS[path]
            return handler(request)
        import httpx

        resp = httpx.post(
            f"{self.server}{path}", json=request.model_dump(mode="json"), timeout=600.0
        )
        if resp.status_code >= 400:
            try:
                detail = resp.json().get("detail", resp.text)
            except ValueError:
                detail = resp.text
            raise _HTTP_TO_ERROR.get(resp.status_code, DrTargetError)(detail)
        return response_cls.model_validate(resp.json())


def _config_json(config: dict) -> str:
    return json.dumps(config, sort_keys=True, allow_nan=False)


def _write_json_artifact(path, config: dict, result: dict):
    payload = {"config": config, "result": result}
    text = json.dumps(payload, sort_keys=True, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n")


def read_embedded_config(path) -> dict:
    """Recover the resolved config embedded in a CLI artifact."""
    text = Path(path).read_text()
    if text.startswith("# config: "):
        return json.loads(text.splitlines()[0][len("# config: ") :])
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: no embedded config found") from exc
    if not isinstance(payload, dict) or "config" not in payload:
        raise DataError(f"{path}: no embedded config found")
    return payload["config"]


def _parse_grid(text: str, cast=float) -> list:
    """Grids come as 'start:stop:step' (inclusive) or comma-separated values."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValidationError(f"grid {text!r} must be start:stop:step or a,b,c")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ValidationError("grid step must be positive")
        values = []
        v = start
        while v <= stop + 1e-9:
            values.append(cast(round(v, 10)))
            v += step
        return values
    return [cast(p) for p in text.split(",") if p.strip()]


def _parse_hours(text: str | None):
    if text is None or text == "all":
        return None
    return sorted({int(h) for h in text.split(",")})


def _load_meter_models(path, skip_bad_rows: bool):
    result = ingest.load_meter_csv(path)
    if result.bad_rows and not skip_bad_rows:
        first = result.bad_rows[0]
        raise DataError(
            f"{path}: {len(result.bad_rows)} unparseable row(s); first at line "
            f"{first[0]}: {first[1]} (pass --skip-bad-rows to tolerate)"
        )
    if result.bad_rows:
        print(
            f"warning: skipped {len(result.bad_rows)} unparseable meter row(s)",
            file=sys.stderr,
        )
    return [handlers._meter_to_model(m) for m in result.series]


def _load_weather_models(path, skip_bad_rows: bool):
    result = ingest.load_weather_csv(path)
    if result.bad_rows and not skip_bad_rows:
        first = result.bad_rows[0]
        raise DataError(
            f"{path}: {len(result.bad_rows)} unparseable row(s); first at line "
            f"{first[0]}: {first[1]} (pass --skip-bad-rows to tolerate)"
        )
    if result.bad_rows:
        print(
            f"warning: skipped {len(result.bad_rows)} unparseable weather row(s)",
            file=sys.stderr,
        )
    return [handlers._weather_to_model(w) for w in result.series]


def _load_candidates(path, hour, allow_negative_mu):
    """Accept either the 3-column problem CSV or the fit estimates CSV."""
    with open(path) as fh:
        header = ""
        for line in fh:
            if not line.startswith("#") and line.strip():
                header = line.strip()
                break
    if header.startswith("customer_id,mu,sigma"):
        pool = skp_solver.read_problem_csv(path)
        if not allow_negative_mu:
            keep = pool.mu >= 0
            if not keep.any():
                raise InfeasibleError(
                    f"{path}: every candidate has a negative mean response "
                    "(pass --allow-negative-mu to keep them)"
                )
            if not keep.all():
                pool = skp_solver.CandidatePool(
                    ids=tuple(i for i, k in zip(pool.ids, keep) if k),
                    mu=pool.mu[keep],
                    sigma=pool.sigma[keep],
                )
        return [
            schemas.CandidateModel(customer_id=i, mu=float(m), sigma=float(s))
            for i, m, s in zip(pool.ids, pool.mu, pool.sigma)
        ]
    estimates = response_model.read_estimates_csv(path)
    hours = sorted({e.hour for e in estimates})
    if hour is None:
        if len(hours) > 1:
            raise ValidationError(
                f"{path} holds estimates for hours {hours}; pick one with --hour"
            )
        hour = hours[0]
    estimates = [e for e in estimates if e.hour == hour]
    if not estimates:
        raise ValidationError(f"{path}: no estimates for hour {hour}")
    pool = skp_solver.CandidatePool.from_estimates(
        estimates, allow_negative_mu=allow_negative_mu
    )
    return [
        schemas.CandidateModel(customer_id=i, mu=float(m), sigma=float(s))
        for i, m, s in zip(pool.ids, pool.mu, pool.sigma)
    ]


# ---------------------------------------------------------------------------
# subcommand implementations (config dict -> files/stdout)


def cmd_synth(config: dict) -> int:
    req = schemas.SynthRequest(
        count=config["count"],
        fraction_ac=config["fraction_ac"],
        a_range=tuple(config["a_range"]),
        b_range=tuple(config["b_range"]),
        c_range=tuple(config["c_range"]),
        tr_range=tuple(config["tr_range"]),
        noise_sd=config["noise_sd"],
        temp_profile=schemas.TempProfileModel(**config["temp_profile"]),
        seed=config["seed"],
        days=config["days"],
        start=config["start"],
        zip_code=config["zip_code"],
    )
    resp = ServiceClient(config.get("server")).call("/v1/synth", req, schemas.SynthResponse)
    out_dir = Path(config["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    comment = _config_json(config)
    meters = [handlers._meter_from_model(m) for m in resp.meters]
    ingest.write_meter_csv(out_dir / "meters.csv", meters, config_comment=comment)
    ingest.write_weather_csv(
        out_dir / "weather.csv",
        handlers._weather_from_model(resp.weather),
        config_comment=comment,
    )
    records = [
        ingest.GroundTruthRecord(
            g.customer_id, g.model, g.tr, g.a, g.b, g.c, g.noise_sd
        )
        for g in resp.ground_truth
    ]
    ingest.write_ground_truth_csv(
        out_dir / "ground_truth.csv", records, config_comment=comment
    )
    print(
        f"wrote {len(resp.meters)} meter series, 1 weather series, "
        f"{len(records)} ground-truth rows to {out_dir}"
    )
    return EXIT_OK


def cmd_fit(config: dict) -> int:
    req = schemas.FitRequest(
        meters=_load_meter_models(config["meters"], config["skip_bad_rows"]),
        weather=_load_weather_models(config["weather"], config["skip_bad_rows"]),
        hours=config["hours"],
        delta_tr=config["delta_tr"],
        alpha=config["alpha"],
        min_samples=config["min_samples"],
        tr_min=config["tr_min"],
        tr_max=config["tr_max"],
        min_side_fraction=config["min_side_fraction"],
        threads=config["threads"],
    )
    resp = ServiceClient(config.get("server")).call("/v1/fit", req, schemas.FitResponse)
    comment = _config_json(config)
    fits = [
        response_model.HourlyFit(
            customer_id=f.customer_id,
            hour=f.hour,
            model_kind=f.model,
            a=f.a,
            se_a=f.se_a,
            c=f.c,
            rss=f.rss,
            r2=f.r2,
            n_samples=f.n,
            tr=f.tr,
            b=f.b,
            f_stat=f.f_stat,
            f_pvalue=f.f_pvalue,
        )
        for f in resp.fits
    ]
    estimates = [
        response_model.ResponseEstimate(
            e.customer_id, e.hour, e.delta_tr, e.mu, e.sigma, e.eligible
        )
        for e in resp.estimates
    ]
    response_model.write_fit_report_csv(config["out_report"], fits, config_comment=comment)
    response_model.write_estimates_csv(
        config["out_estimates"], estimates, config_comment=comment
    )

    print("hour  fitted  breakpoint  pct     mean_r2")
    for row in resp.hourly_model_selection:
        print(
            f"{row['hour']:>4}  {row['n_fitted']:>6}  {row['n_breakpoint']:>10}  "
            f"{row['breakpoint_pct']:>5.1f}%  {row['mean_r2']:.3f}"
        )
    if resp.r2_histogram:
        print("r2 distribution:")
        for row in resp.r2_histogram:
            print(f"  [{row['r2_low']:.1f}, {row['r2_high']:.1f})  {row['count']}")
    for row in resp.excluded:
        print(
            f"excluded: {row.customer_id} hour {row.hour}: {row.reason}",
            file=sys.stderr,
        )
    n_eligible = sum(1 for e in resp.estimates if e.eligible)
    print(f"eligible customers: {n_eligible} / {len(resp.estimates)} estimates")
    if n_eligible == 0:
        print("no eligible customers; nothing to select from", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_select(config: dict) -> int:
    req = schemas.SelectRequest(
        candidates=_load_candidates(
            config["estimates"], config["hour"], config["allow_negative_mu"]
        ),
        target_kwh=config["target_kwh"],
        n_max=config["n_max"],
        iterations=config["iterations"],
        algorithm=config["algorithm"],
        compare=config["compare"],
    )
    resp = ServiceClient(config.get("server")).call(
        "/v1/select", req, schemas.SelectResponse
    )
    _write_json_artifact(config["out"], config, resp.model_dump(mode="json"))
    sel = resp.selection
    rho_text = "n/a" if sel.rho is None else f"{sel.rho:.6f}"
    print(
        f"{resp.algorithm}: chose {sel.size} customers, total_mu={sel.total_mu:.3f} kWh, "
        f"rho={rho_text}, reliability={sel.reliability:.6f}"
    )
    if resp.bound is not None:
        print(f"approximation bound: {resp.bound:.6f}")
    elif resp.bound_reason:
        print(f"approximation bound: undefined ({resp.bound_reason})")
    if resp.comparison:
        print("algorithm   size  total_mu       rho  reliability")
        for row in resp.comparison:
            rho_text = "      n/a" if row.rho is None else f"{row.rho:9.4f}"
            print(
                f"{row.algorithm:<10} {row.size:>5}  {row.total_mu:8.3f} {rho_text}  "
                f"{row.reliability:.6f}"
            )
    return EXIT_OK


def cmd_tradeoff(config: dict) -> int:
    req = schemas.TradeoffRequest(
        candidates=_load_candidates(
            config["estimates"], config["hour"], config["allow_negative_mu"]
        ),
        kind=config["kind"],
        n_fixed=config["n_fixed"],
        t_fixed=config["t_fixed"],
        t_grid=config["t_grid"],
        n_grid=config["n_grid"],
        p_min=config["p_min"],
        iterations=config["iterations"],
        algorithm=config["algorithm"],
    )
    resp = ServiceClient(config.get("server")).call(
        "/v1/tradeoff", req, schemas.TradeoffResponse
    )
    curve = tradeoff.TradeoffCurve(
        kind=resp.kind,
        algorithm=resp.algorithm,
        points=[tradeoff.TradeoffPoint(p.control, p.value) for p in resp.points],
        params=resp.params,
    )
    tradeoff.write_curve_csv(config["out"], curve, config_comment=_config_json(config))
    unreachable = [p.control for p in resp.points if p.value is None]
    print(f"wrote {len(resp.points)} curve points to {config['out']}")
    if unreachable:
        print(f"unreachable targets: {unreachable}")
    violation = resp.params.get("max_monotonicity_violation")
    if violation:
        print(f"max monotonicity violation: {violation:.6f}")
    return EXIT_OK


def cmd_rerun(config: dict) -> int:
    embedded = read_embedded_config(config["artifact"])
    command = embedded.get("command")
    if command not in _COMMANDS:
        raise DataError(f"embedded config has unknown command {command!r}")
    return _COMMANDS[command](embedded)


def cmd_serve(config: dict) -> int:
    import uvicorn

    uvicorn.run(
        "drtarget.service.app:app", host=config["host"], port=config["port"]
    )
    return EXIT_OK


# `compare` canonicalizes to select with compare=True in config_from_args
_COMMANDS = {
    "synth": cmd_synth,
    "fit": cmd_fit,
    "select": cmd_select,
    "tradeoff": cmd_tradeoff,
    "rerun": cmd_rerun,
    "serve": cmd_serve,
}


# ---------------------------------------------------------------------------
# argument parsing


def _add_server_flag(p):
    p.add_argument(
        "--server",
        default=None,
        help="base URL of a running drtarget service; default runs in-process",
    )


def _add_candidate_flags(p):
    p.add_argument("--estimates", required=True, help="estimates CSV or customer_id,mu,sigma CSV")
    p.add_argument("--hour", type=int, default=None, help="hour-of-day to select from multi-hour estimates")
    p.add_argument(
        "--allow-negative-mu",
        action="store_true",
        help="keep candidates with negative mean response in the pool",
    )
    p.add_argument("--iterations", type=int, default=10, help="lambda sweep iterations M")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drtarget",
        description="Demand-response targeting: synthesize, fit, select, and explore tradeoffs.",
    )
    parser.add_argument("--version", action="version", version=f"drtarget {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic population with known parameters")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--fraction-ac", type=float, default=1.0)
    p.add_argument("--a-range", type=float, nargs=2, default=[0.1, 0.6], metavar=("LO", "HI"))
    p.add_argument("--b-range", type=float, nargs=2, default=[0.0, 0.08], metavar=("LO", "HI"))
    p.add_argument("--c-range", type=float, nargs=2, default=[0.2, 1.2], metavar=("LO", "HI"))
    p.add_argument("--tr-range", type=int, nargs=2, default=[72, 82], metavar=("LO", "HI"))
    p.add_argument("--noise-sd", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--days", type=int, default=90)
    p.add_argument("--start", default="2011-05-01", help="first day (YYYY-MM-DD)")
    p.add_argument("--zip-code", default="00000")
    p.add_argument("--base-f", type=float, default=71.0)
    p.add_argument("--amplitude-f", type=float, default=9.0)
    p.add_argument("--peak-hour", type=int, default=16)
    p.add_argument("--drift-sd", type=float, default=3.0)
    p.add_argument("--ar1", type=float, default=0.5)
    p.add_argument("--out-dir", default=".")
    _add_server_flag(p)

    p = sub.add_parser("fit", help="fit temperature-response models and estimate responses")
    p.add_argument("--meters", required=True)
    p.add_argument("--weather", required=True)
    p.add_argument("--hours", default="all", help="comma-separated hours, or 'all'")
    p.add_argument("--delta-tr", type=float, default=3.0, help="setpoint increase in F")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--min-samples", type=int, default=20)
    p.add_argument("--tr-min", type=int, default=68)
    p.add_argument("--tr-max", type=int, default=86)
    p.add_argument("--min-side-fraction", type=float, default=0.15)
    p.add_argument(
        "--threads",
        type=int,
        default=None,
        help="fit worker threads (default: DRTARGET_THREADS or all cores)",
    )
    p.add_argument("--skip-bad-rows", action="store_true")
    p.add_argument("--out-report", default="fit_report.csv")
    p.add_argument("--out-estimates", default="estimates.csv")
    _add_server_flag(p)

    p = sub.add_parser("select", help="solve the portfolio selection problem")
    _add_candidate_flags(p)
    p.add_argument("--target-kwh", type=float, required=True)
    p.add_argument("--n-max", type=int, required=True)
    p.add_argument(
        "--algorithm", choices=["heuristic", "greedy", "oracle"], default="heuristic"
    )
    p.add_argument("--compare", action="store_true", help="also run the other algorithms")
    p.add_argument("--out", default="selection.json")
    _add_server_flag(p)

    p = sub.add_parser("tradeoff", help="generate tradeoff curves")
    _add_candidate_flags(p)
    p.add_argument("--kind", choices=["rel-vs-t", "rel-vs-n", "minn-vs-t"], required=True)
    p.add_argument("--t-grid", default="200:4000:200", help="start:stop:step or comma list")
    p.add_argument("--n-grid", default=None, help="start:stop:step or comma list")
    p.add_argument("--n-fixed", type=int, default=None)
    p.add_argument("--t-fixed", type=float, default=None)
    p.add_argument("--p-min", type=float, default=0.95)
    p.add_argument("--algorithm", choices=["heuristic", "greedy"], default="heuristic")
    p.add_argument("--out", default="curve.csv")
    _add_server_flag(p)

    p = sub.add_parser("compare", help="heuristic vs greedy vs oracle (K <= 24) side by side")
    _add_candidate_flags(p)
    p.add_argument("--target-kwh", type=float, required=True)
    p.add_argument("--n-max", type=int, required=True)
    p.add_argument("--out", default="comparison.json")
    _add_server_flag(p)

    p = sub.add_parser("rerun", help="re-execute a CLI artifact from its embedded config")
    p.add_argument("artifact")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def config_from_args(ns: argparse.Namespace) -> dict:
    config = {"command": ns.command, "version": __version__}
    if ns.command == "synth":
        config.update(
            count=ns.count,
            fraction_ac=ns.fraction_ac,
            a_range=list(ns.a_range),
            b_range=list(ns.b_range),
            c_range=list(ns.c_range),
            tr_range=list(ns.tr_range),
            noise_sd=ns.noise_sd,
            seed=ns.seed,
            days=ns.days,
            start=ns.start,
            zip_code=ns.zip_code,
            temp_profile={
                "base_f": ns.base_f,
                "amplitude_f": ns.amplitude_f,
                "peak_hour": ns.peak_hour,
                "drift_sd": ns.drift_sd,
                "ar1": ns.ar1,
            },
            out_dir=ns.out_dir,
            server=ns.server,
        )
    elif ns.command == "fit":
        threads = ns.threads
        if threads is None:
            env = os.environ.get("DRTARGET_THREADS")
            threads = int(env) if env else os.cpu_count()
        config.update(
            meters=ns.meters,
            weather=ns.weather,
            hours=_parse_hours(ns.hours),
            delta_tr=ns.delta_tr,
            alpha=ns.alpha,
            min_samples=ns.min_samples,
            tr_min=ns.tr_min,
            tr_max=ns.tr_max,
            min_side_fraction=ns.min_side_fraction,
            threads=threads,
            skip_bad_rows=ns.skip_bad_rows,
            out_report=ns.out_report,
            out_estimates=ns.out_estimates,
            server=ns.server,
        )
    elif ns.command in ("select", "compare"):
        config.update(
            estimates=ns.estimates,
            hour=ns.hour,
            allow_negative_mu=ns.allow_negative_mu,
            target_kwh=ns.target_kwh,
            n_max=ns.n_max,
            iterations=ns.iterations,
            algorithm=getattr(ns, "algorithm", "heuristic"),
            compare=getattr(ns, "compare", True),
            out=ns.out,
            server=ns.server,
        )
        if ns.command == "compare":
            config["command"] = "select"
            config["algorithm"] = "heuristic"
            config["compare"] = True
    elif ns.command == "tradeoff":
        config.update(
            estimates=ns.estimates,
            hour=ns.hour,
            allow_negative_mu=ns.allow_negative_mu,
            kind=ns.kind,
            t_grid=_parse_grid(ns.t_grid, float) if ns.t_grid else None,
            n_grid=_parse_grid(ns.n_grid, int) if ns.n_grid else None,
            n_fixed=ns.n_fixed,
            t_fixed=ns.t_fixed,
            p_min=ns.p_min,
            iterations=ns.iterations,
            algorithm=ns.algorithm,
            out=ns.out,
            server=ns.server,
        )
    elif ns.command == "rerun":
        config.update(artifact=ns.artifact)
    elif ns.command == "serve":
        config.update(host=ns.host, port=ns.port)
    return config


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        config = config_from_args(ns)
        return _COMMANDS[config["command"]](config)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
