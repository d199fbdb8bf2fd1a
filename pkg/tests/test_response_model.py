"""Temperature-response fitting tests: exact recovery, model selection, invariants."""

from dataclasses import replace

import numpy as np
import pytest

from drtarget.errors import DataError, ValidationError
from drtarget.ingest import JoinedObservations, SynthSpec, join_weather, synth_population
from drtarget.response_model import (
    FitConfig,
    estimate_response,
    fit_breakpoint_model,
    fit_linear_model,
    fit_population,
    read_estimates_csv,
    select_model,
    write_estimates_csv,
    write_fit_report_csv,
)


def obs_from(temps, loads, customer="c", hour=17):
    temps = np.asarray(temps, dtype=float)
    loads = np.asarray(loads, dtype=float)
    return JoinedObservations(
        customer_id=customer,
        hour=hour,
        days=np.arange(temps.size),
        temps=temps,
        loads=loads,
    )


def kinked_loads(temps, tr, a, b, c):
    temps = np.asarray(temps, dtype=float)
    return a * np.maximum(temps - tr, 0.0) + b * np.maximum(tr - temps, 0.0) + c


def spread_temps(rng, n=90, lo=60.0, hi=95.0):
    return rng.uniform(lo, hi, size=n)


class TestBreakpointFit:
    def test_noiseless_exact_recovery(self):
        rng = np.random.default_rng(0)
        temps = spread_temps(rng)
        loads = kinked_loads(temps, tr=78, a=0.42, b=0.06, c=0.9)
        fit = fit_breakpoint_model(obs_from(temps, loads))
        assert fit.tr == 78
        assert fit.a == pytest.approx(0.42, abs=1e-12)
        assert fit.b == pytest.approx(0.06, abs=1e-12)
        assert fit.c == pytest.approx(0.9, abs=1e-12)
        assert fit.rss == pytest.approx(0.0, abs=1e-20)

    def test_all_temps_below_grid_unavailable(self):
        rng = np.random.default_rng(1)
        temps = rng.uniform(40.0, 67.0, size=60)
        loads = 0.1 * temps + 1.0
        assert fit_breakpoint_model(obs_from(temps, loads)) is None

    def test_too_few_samples_rejected(self):
        with pytest.raises(ValidationError, match="min_samples"):
            fit_breakpoint_model(obs_from([70.0, 80.0], [1.0, 2.0]))

    def test_min_rss_over_grid(self):
        # independent oracle: redo the per-candidate OLS with plain numpy
        rng = np.random.default_rng(2)
        temps = spread_temps(rng)
        loads = kinked_loads(temps, 76, 0.5, 0.02, 0.7) + rng.normal(0, 0.3, temps.size)
        obs = obs_from(temps, loads)
        fit = fit_breakpoint_model(obs)
        n = temps.size
        thr = 0.15 * n - 1e-9
        best = None
        for tr in range(68, 87):
            if (temps < tr).sum() < thr or (temps > tr).sum() < thr:
                continue
            design = np.column_stack(
                [np.maximum(temps - tr, 0), np.maximum(tr - temps, 0), np.ones(n)]
            )
            coef, *_ = np.linalg.lstsq(design, loads, rcond=None)
            rss = float(((loads - design @ coef) ** 2).sum())
            if best is None or rss < best[0]:
                best = (rss, tr)
        assert fit.tr == best[1]
        assert fit.rss == pytest.approx(best[0], rel=1e-10)
        assert fit.rss <= best[0] + 1e-12

    def test_side_rule_excludes_sparse_sides(self):
        # 95 points below 80, 5 above: any tr >= 80 fails the 15% rule,
        # and points this unbalanced also fail below, so tr stays central
        temps = np.concatenate([np.linspace(70, 79, 95), np.linspace(88, 95, 5)])
        loads = kinked_loads(temps, 78, 0.4, 0.0, 1.0)
        fit = fit_breakpoint_model(obs_from(temps, loads))
        if fit is not None:
            assert (temps > fit.tr).sum() >= 0.15 * temps.size - 1e-9
            assert (temps < fit.tr).sum() >= 0.15 * temps.size - 1e-9

    def test_monte_carlo_slope_within_four_se(self):
        hits = trials = 0
        for seed in range(40):
            rng = np.random.default_rng(3000 + seed)
            temps = spread_temps(rng)
            loads = kinked_loads(temps, 78, 0.3, 0.02, 0.8) + rng.normal(0, 0.2, temps.size)
            fit = fit_breakpoint_model(obs_from(temps, loads))
            if fit is None:
                continue
            trials += 1
            hits += abs(fit.a - 0.3) <= 4 * fit.se_a
        assert trials >= 38
        assert hits / trials >= 0.95


class TestLinearFit:
    def test_exact_line(self):
        rng = np.random.default_rng(4)
        temps = spread_temps(rng, n=30)
        fit = fit_linear_model(obs_from(temps, 2.0 * temps + 5.0))
        assert fit.a == pytest.approx(2.0, abs=1e-12)
        assert fit.c == pytest.approx(5.0, abs=1e-12)
        assert fit.rss == pytest.approx(0.0, abs=1e-18)
        assert fit.r2 == 1.0

    def test_pure_noise_slope_near_zero(self):
        hits = 0
        n_seeds = 40
        for seed in range(n_seeds):
            rng = np.random.default_rng(4000 + seed)
            temps = spread_temps(rng)
            fit = fit_linear_model(obs_from(temps, rng.normal(1.0, 0.3, temps.size)))
            hits += abs(fit.a) <= 4 * fit.se_a
        assert hits / n_seeds >= 0.95

    def test_constant_temperature_unavailable(self):
        assert fit_linear_model(obs_from([70.0] * 30, list(range(30)))) is None

    def test_two_points_rejected_by_min_samples(self):
        with pytest.raises(ValidationError):
            fit_linear_model(obs_from([70.0, 80.0], [1.0, 2.0]))


class TestModelSelection:
    def test_equal_rss_chooses_line(self):
        rng = np.random.default_rng(5)
        temps = spread_temps(rng, n=40)
        loads = 0.2 * temps + rng.normal(1.0, 0.2, 40)
        kinked = fit_breakpoint_model(obs_from(temps, loads))
        line = fit_linear_model(obs_from(temps, loads))
        # pin both residuals to the same value: zero F means the line wins
        chosen = select_model(replace(kinked, rss=line.rss), line)
        assert chosen.model_kind == "linear"
        assert chosen.f_stat == 0.0

    def test_zero_kinked_rss_with_positive_line_rss(self):
        rng = np.random.default_rng(6)
        temps = spread_temps(rng)
        loads = kinked_loads(temps, 78, 0.5, 0.0, 1.0)
        kinked = fit_breakpoint_model(obs_from(temps, loads))
        line = fit_linear_model(obs_from(temps, loads))
        assert kinked.rss == pytest.approx(0.0, abs=1e-18)
        chosen = select_model(kinked, line)
        assert chosen.model_kind == "breakpoint"
        assert chosen.f_pvalue == 0.0

    def test_strong_kink_selected(self):
        rng = np.random.default_rng(7)
        temps = spread_temps(rng)
        loads = kinked_loads(temps, 78, 0.4, 0.0, 1.0) + rng.normal(0, 0.2, temps.size)
        chosen = select_model(
            fit_breakpoint_model(obs_from(temps, loads)),
            fit_linear_model(obs_from(temps, loads)),
        )
        assert chosen.model_kind == "breakpoint"
        assert chosen.f_pvalue < 0.05

    def test_single_candidate_passthrough(self):
        rng = np.random.default_rng(8)
        temps = spread_temps(rng, n=30)
        line = fit_linear_model(obs_from(temps, 0.1 * temps + 2))
        assert select_model(None, line) is line
        assert select_model(line, None) is line
        assert select_model(None, None) is None

    def test_mismatched_samples_rejected(self):
        rng = np.random.default_rng(9)
        t1, t2 = spread_temps(rng, 30), spread_temps(rng, 40)
        f1 = fit_linear_model(obs_from(t1, 0.1 * t1 + 1))
        f2 = fit_linear_model(obs_from(t2, 0.1 * t2 + 1))
        with pytest.raises(ValidationError):
            select_model(replace(f1, model_kind="breakpoint", tr=75), f2)


class TestResponseEstimate:
    def make_fit(self, kind="breakpoint"):
        rng = np.random.default_rng(10)
        temps = spread_temps(rng)
        loads = kinked_loads(temps, 78, 0.5, 0.0, 1.0) + rng.normal(0, 0.1, temps.size)
        fit = fit_breakpoint_model(obs_from(temps, loads))
        if kind == "linear":
            fit = fit_linear_model(obs_from(temps, loads))
        return fit

    def test_mu_sigma_scaling(self):
        fit = self.make_fit()
        fit = replace(fit, a=0.5, se_a=0.1)
        est = estimate_response(fit, 3.0)
        assert est.mu == pytest.approx(1.5)
        assert est.sigma == pytest.approx(0.3)
        assert est.eligible

    def test_zero_delta_rejected(self):
        with pytest.raises(ValidationError):
            estimate_response(self.make_fit(), 0.0)

    def test_linear_fit_ineligible_zero_response(self):
        est = estimate_response(self.make_fit("linear"), 3.0)
        assert not est.eligible
        assert est.mu == 0.0 and est.sigma == 0.0

    def test_linear_in_delta_tr(self):
        fit = self.make_fit()
        e1, e2 = estimate_response(fit, 2.0), estimate_response(fit, 4.0)
        assert e2.mu == pytest.approx(2 * e1.mu)
        assert e2.sigma == pytest.approx(2 * e1.sigma)


class TestInvariants:
    def test_load_scaling_scales_estimates_only(self):
        rng = np.random.default_rng(12)
        temps = spread_temps(rng)
        loads = kinked_loads(temps, 77, 0.4, 0.03, 1.1) + rng.normal(0, 0.2, temps.size)
        k = 3.5
        f1 = select_model(
            fit_breakpoint_model(obs_from(temps, loads)),
            fit_linear_model(obs_from(temps, loads)),
        )
        f2 = select_model(
            fit_breakpoint_model(obs_from(temps, k * loads)),
            fit_linear_model(obs_from(temps, k * loads)),
        )
        assert f2.model_kind == f1.model_kind
        assert f2.tr == f1.tr
        assert f2.a == pytest.approx(k * f1.a, rel=1e-9)
        assert f2.se_a == pytest.approx(k * f1.se_a, rel=1e-9)
        assert f2.f_stat == pytest.approx(f1.f_stat, rel=1e-9)
        e1, e2 = estimate_response(f1, 3.0), estimate_response(f2, 3.0)
        assert e2.mu == pytest.approx(k * e1.mu, rel=1e-9)
        assert e2.sigma == pytest.approx(k * e1.sigma, rel=1e-9)

    def test_temperature_shift_moves_breakpoint_only(self):
        rng = np.random.default_rng(13)
        temps = spread_temps(rng)
        loads = kinked_loads(temps, 77, 0.4, 0.03, 1.1) + rng.normal(0, 0.2, temps.size)
        delta = 4
        wide = FitConfig(tr_min=60, tr_max=95)
        f1 = fit_breakpoint_model(obs_from(temps, loads), wide)
        f2 = fit_breakpoint_model(obs_from(temps + delta, loads), wide)
        assert f2.tr == f1.tr + delta
        assert f2.a == pytest.approx(f1.a, rel=1e-9)
        assert f2.b == pytest.approx(f1.b, rel=1e-9)
        assert f2.rss == pytest.approx(f1.rss, rel=1e-9)

    def test_kinked_rss_never_exceeds_line_rss(self):
        # the line lives inside the kinked regressors' span at any feasible tr
        for seed in range(10):
            rng = np.random.default_rng(5000 + seed)
            temps = spread_temps(rng)
            loads = 0.15 * temps + rng.normal(1.0, 0.25, temps.size)
            kinked = fit_breakpoint_model(obs_from(temps, loads))
            line = fit_linear_model(obs_from(temps, loads))
            assert kinked.rss <= line.rss + 1e-9


class TestPopulationFit:
    def test_all_ac_customers_eligible(self):
        spec = SynthSpec(count=10, fraction_ac=1.0, tr_range=(76, 80), seed=31, days=90)
        synth = synth_population(spec)
        joined = join_weather(synth.meters, [synth.weather], hours_filter={17})
        result = fit_population(joined.observations, hours=[17], delta_tr=3.0)
        eligible = [e for e in result.estimates if e.eligible]
        assert len(eligible) == 10

    def test_excluded_with_reason_when_bucket_too_small(self):
        spec = SynthSpec(count=2, seed=32, days=3)
        synth = synth_population(spec)
        joined = join_weather(synth.meters, [synth.weather], hours_filter={17})
        result = fit_population(joined.observations, hours=[17])
        assert len(result.fits) == 0
        assert all("too few samples" in row["reason"] for row in result.report.excluded)

    def test_hot_hours_select_breakpoint_more_than_night(self):
        spec = SynthSpec(count=30, fraction_ac=1.0, tr_range=(76, 80), seed=33, days=90)
        synth = synth_population(spec)
        joined = join_weather(synth.meters, [synth.weather])
        result = fit_population(joined.observations)
        by_hour = {row["hour"]: row["breakpoint_pct"] for row in result.report.hourly_model_selection}
        hot = np.mean([by_hour[h] for h in range(15, 22) if h in by_hour])
        night = np.mean([by_hour[h] for h in range(0, 7) if h in by_hour])
        assert hot > night

    def test_thread_count_does_not_change_results(self):
        spec = SynthSpec(count=6, seed=34, days=60)
        synth = synth_population(spec)
        joined = join_weather(synth.meters, [synth.weather], hours_filter={16, 17})
        r1 = fit_population(joined.observations, threads=1)
        r4 = fit_population(joined.observations, threads=4)
        assert r1.fits == r4.fits
        assert r1.estimates == r4.estimates

    def test_empty_population_rejected(self):
        with pytest.raises(ValidationError):
            fit_population([], hours=[17])


class TestCsvSurfaces:
    def test_report_and_estimates_round_trip(self, tmp_path):
        spec = SynthSpec(count=4, seed=35, days=90)
        synth = synth_population(spec)
        joined = join_weather(synth.meters, [synth.weather], hours_filter={17})
        result = fit_population(joined.observations, delta_tr=3.0)
        rpath, epath = tmp_path / "report.csv", tmp_path / "estimates.csv"
        write_fit_report_csv(rpath, result.fits, config_comment='{"seed": 35}')
        write_estimates_csv(epath, result.estimates, config_comment='{"seed": 35}')
        header = rpath.read_text().splitlines()[1]
        assert header == "customer_id,hour,model,tr,a,se_a,b,c,rss,r2,n,f_stat,f_pvalue,eligible"
        back = read_estimates_csv(str(epath))
        assert back == result.estimates

    def test_read_estimates_rejects_missing_column(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("customer_id,mu,sigma\na,1.0,0.1\n")
        with pytest.raises(DataError):
            read_estimates_csv(str(p))
