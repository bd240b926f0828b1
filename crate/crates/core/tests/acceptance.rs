//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each
//! (with indented details) and exits non-zero if any criterion fails.
//!
//! Run with `cargo test --test acceptance`.

use std::time::Instant;

use proptest::strategy::Strategy as Gen;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use proptest::{prop_assert, prop_assert_eq};

use procure::backtest::{
    compare_strategies, compute_hedges, estimate_sameday_variance, hedges_from_choices, ingested_hedges,
    load_dataset, predict_prices, round_yen, run_backtest, DataSource, HedgeSearch, Strategy,
};
use procure::cost_model::{
    intra_day_cost, intra_day_cost_from_errors, penalty_cost, penalty_cost_from_errors, total_cost, PriceTriple,
    ProcurementParams,
};
use procure::distributions::ErrorModel;
use procure::exec::{with_threads, Execution};
use procure::expectation::{expected_c3_with, expected_total, monte_carlo, C3Method};
use procure::optimizer::{optimal_parameters_with, ExpectedPrices, GridSpec, SearchOptions};
use procure::scenario_lab::{
    builtin_scenarios, direction_table, expectation_surface, variance_surface, Direction, ScenarioConfig,
    ScenarioResult,
};

struct Report {
    failed: Vec<String>,
}

impl Report {
    fn criterion(&mut self, id: &str, title: &str, checks: &[(String, bool)]) {
        let ok = checks.iter().all(|(_, pass)| *pass);
        println!("[{}] {id}: {title}", if ok { "PASS" } else { "FAIL" });
        for (detail, pass) in checks {
            println!("       {} {detail}", if *pass { "ok " } else { "BAD" });
        }
        if !ok {
            self.failed.push(id.to_string());
        }
    }
}

fn check(detail: String, pass: bool) -> (String, bool) {
    (detail, pass)
}

const MESH_SLACK: f64 = 0.1 + 1e-9;

fn within_cell(got: (f64, f64), want: (f64, f64)) -> bool {
    (got.0 - want.0).abs() <= MESH_SLACK && (got.1 - want.1).abs() <= MESH_SLACK
}

fn criterion_1(report: &mut Report) -> ScenarioResult {
    let base = ScenarioConfig::base();
    let at = |a, b| expected_total(&base.expectation_inputs(a, b).unwrap()).unwrap().total;
    let (e1, e0) = (at(0.6, -2.0), at(0.0, 0.0));
    let start = Instant::now();
    let surface = expectation_surface(&base, C3Method::Nested, Execution::Parallel).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let m = (surface.argmin.a, surface.argmin.b);
    report.criterion(
        "1",
        "base expectation golden values and grid argmin",
        &[
            check(format!("E[C(0.6,-2)] = {e1:.6} (want 101.835 +- 0.005)"), (e1 - 101.835).abs() <= 0.005),
            check(format!("E[C(0,0)] = {e0:.6} (want 102.329 +- 0.005)"), (e0 - 102.329).abs() <= 0.005),
            check(format!("grid argmin = {m:?} (want exactly (0.6, -2))"), m == (0.6, -2.0)),
            check(format!("50x50 quadrature grid took {secs:.1} s (target < 60 s)"), secs < 60.0),
        ],
    );
    ScenarioResult { config: base, e_surface: surface, v_surface: None }
}

fn criterion_2(report: &mut Report) {
    let base = ScenarioConfig::base();
    let n = 1_000_000;
    let seed = 0;
    let var = |a, b| {
        monte_carlo(&base.mc_inputs(a, b).unwrap(), n, seed, 0, Execution::Parallel).unwrap().unbiased_variance
    };
    let mut checks = Vec::new();
    for (a, b, want) in [(0.0, 0.0, 2.879739), (0.6, -2.0, 1.821432), (1.0, -1.4, 1.693098)] {
        let v = var(a, b);
        let rel = (v - want).abs() / want;
        checks.push(check(format!("V[C({a},{b})] = {v:.6} (want {want} +- 3%, off {:.2}%)", 100.0 * rel), rel <= 0.03));
    }
    let start = Instant::now();
    let surface = variance_surface(&base, n, seed, Execution::Parallel).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let m = (surface.argmin.a, surface.argmin.b);
    checks.push(check(
        format!("V-surface argmin = {m:?}, min {:.6} (want within one cell of (1, -1.4))", surface.min_value),
        within_cell(m, (1.0, -1.4)),
    ));
    checks.push(check(format!("full MC grid took {secs:.1} s (target < 600 s)"), secs < 600.0));
    report.criterion("2", "Monte Carlo variance at n = 1e6", &checks);
}

fn criterion_3(report: &mut Report, base: ScenarioResult) {
    let quoted = [
        ("sigma1=5", (0.8, -1.0), 104.6559, (Direction::Increase, Direction::Increase)),
        ("sigma2=0.1", (0.1, -0.1), 101.441, (Direction::Decrease, Direction::Increase)),
        ("b=1.2", (-0.1, -0.5), 101.5671, (Direction::Decrease, Direction::Increase)),
        ("b=2.8", (0.7, -3.8), 101.8878, (Direction::Increase, Direction::Decrease)),
        ("a=0.5", (1.6, -2.5), 51.2869, (Direction::Increase, Direction::Decrease)),
        ("c=3.5", (0.8, -1.6), 101.9741, (Direction::Increase, Direction::Increase)),
    ];
    let configs = builtin_scenarios();
    let mut results = vec![base];
    let mut checks = Vec::new();
    for (name, argmin, min, _) in &quoted {
        let cfg = configs.iter().find(|c| c.name == *name).expect("builtin scenario").clone();
        let e = expectation_surface(&cfg, C3Method::Nested, Execution::Parallel).unwrap();
        let m = (e.argmin.a, e.argmin.b);
        checks.push(check(
            format!("{name}: argmin {m:?} (want within one cell of {argmin:?}), min {:.4} (want {min} +- 0.02)", e.min_value),
            within_cell(m, *argmin) && (e.min_value - min).abs() <= 0.02,
        ));
        results.push(ScenarioResult { config: cfg, e_surface: e, v_surface: None });
    }
    let rows = direction_table(&results).unwrap();
    for (name, _, _, want) in &quoted {
        let row = rows.iter().find(|r| r.scenario == *name).unwrap();
        let got = (row.a_change, row.b_change);
        checks.push(check(format!("direction {name}: A {}, B {} (want A {}, B {})", got.0, got.1, want.0, want.1), got == *want));
    }
    report.criterion("3", "scenario minima, minimisers and direction table", &checks);
}

fn criterion_4(report: &mut Report) {
    let ds = load_dataset(&DataSource::paper()).unwrap();
    let optimized = run_backtest(&ds, &Strategy::Optimized(ingested_hedges(&ds).unwrap())).unwrap();
    let naive = run_backtest(&ds, &Strategy::Naive).unwrap();
    let perfect = run_backtest(&ds, &Strategy::Perfect).unwrap();
    let close = |x: f64, want: f64| (x - want).abs() <= 0.01 + 1e-9;
    let mut checks = vec![
        check(format!("optimized (stored hedges) = {:.2} (want 51949.95 +- 0.01)", optimized.total_yen), close(optimized.total_yen, 51949.95)),
        check(format!("perfect = {:.2} (want 51140.72 +- 0.01)", perfect.total_yen), close(perfect.total_yen, 51140.72)),
        check(format!("naive = {:.2} (want 52225.97 +- 0.01)", naive.total_yen), close(naive.total_yen, 52225.97)),
    ];
    let vs_naive = compare_strategies(&[naive.clone(), optimized.clone()], "naive").unwrap();
    let vs_perfect = compare_strategies(&[perfect.clone(), optimized.clone()], "perfect").unwrap();
    let saving = -vs_naive.rows[1].delta_yen;
    let excess = vs_perfect.rows[1].delta_yen;
    checks.push(check(format!("saving vs naive = {saving:.2} (want 276.02 +- 0.01)"), close(saving, 276.02)));
    checks.push(check(format!("excess vs perfect = {excess:.2} (want 809.23 +- 0.01)"), close(excess, 809.23)));

    let start = Instant::now();
    let choices = compute_hedges(&ds, &HedgeSearch::default(), Execution::Parallel).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let recomputed = run_backtest(&ds, &Strategy::Optimized(hedges_from_choices(&choices))).unwrap();
    let rel = (recomputed.total - 51949.95).abs() / 51949.95;
    checks.push(check(
        format!("optimized (recomputed hedges, {secs:.1} s) = {:.2} (want 51949.95 +- 1%, off {:.4}%)", recomputed.total_yen, 100.0 * rel),
        rel <= 0.01,
    ));
    let stored_a = ds.a_opt.as_ref().unwrap();
    let stored_b = ds.b_opt.as_ref().unwrap();
    let forecast = predict_prices(&ds);
    let mut forced = 0;
    let mut mismatched = Vec::new();
    for ((t, d), c) in &choices {
        let p = forecast.at(*t, *d);
        if p.eb <= p.ea {
            forced += 1;
            if c.a != 0.0 || stored_a[(*t, *d)] != 0.0 {
                mismatched.push((*t, *d, 'A'));
            }
        }
        if p.ec <= p.eb {
            forced += 1;
            if c.b != 0.0 || stored_b[(*t, *d)] != 0.0 {
                mismatched.push((*t, *d, 'B'));
            }
        }
    }
    checks.push(check(
        format!("{forced} constraint-forced zeros, mismatches with stored tables: {mismatched:?}"),
        mismatched.is_empty() && forced > 0,
    ));
    report.criterion("4", "backtest totals and deltas", &checks);
}

fn criterion_5(report: &mut Report) {
    let ds = load_dataset(&DataSource::paper()).unwrap();
    let forecast = predict_prices(&ds);
    let published = ds.forecasts.as_ref().unwrap();
    let mut checks = Vec::new();
    for (label, ours, printed) in
        [("day-ahead", &forecast.a, &published.a), ("intra-day", &forecast.b, &published.b), ("penalty", &forecast.c, &published.c)]
    {
        let bad: Vec<String> = ds
            .layout
            .cells()
            .filter(|&k| (round_yen(ours[k]) - printed[k]).abs() > 1e-9)
            .map(|(t, d)| format!("({t},{d}) {:.4} vs {}", ours[(t, d)], printed[(t, d)]))
            .collect();
        checks.push(check(format!("{label} forecasts: {} of 133 cells differ after rounding {bad:?}", bad.len()), bad.is_empty()));
    }
    let v2 = estimate_sameday_variance(&ds);
    let printed = ds.v2.as_ref().unwrap();
    let bad: Vec<String> = v2
        .iter()
        .filter(|(t, v)| (round_yen(**v) - printed[t]).abs() > 1e-9)
        .map(|(t, v)| format!("t={t} {v:.4} vs {}", printed[t]))
        .collect();
    checks.push(check(format!("same-day variances: {} of 7 periods differ after rounding {bad:?}", bad.len()), bad.is_empty()));
    checks.push(check(format!("same-day variance t=25 = {} (want 3.0)", v2[&25]), (v2[&25] - 3.0).abs() < 1e-12));
    report.criterion("5", "derived forecast and variance tables", &checks);
}

fn run_property<S: Gen>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> (bool, String)
where
    S::Value: std::fmt::Debug,
{
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    match runner.run(&strategy, test) {
        Ok(()) => (true, format!("{cases} cases")),
        Err(e) => (false, format!("{e}")),
    }
}

fn criterion_6(report: &mut Report) {
    let mut checks = Vec::new();

    let inputs = (0.0f64..300.0, -50.0f64..50.0, -50.0f64..50.0, -20.0f64..20.0, -20.0f64..20.0, 0.0f64..30.0, 0.0f64..30.0, 0.0f64..30.0);
    let (ok, msg) = run_property(100_000, inputs.clone(), |(f, ge, he, a, b, pa, pb, pc)| {
        let p = ProcurementParams::new(f - ge, f - he, a, b).unwrap();
        let prices = PriceTriple::new(pa, pb, pc).unwrap();
        let bd = total_cost(f, &p, &prices).unwrap();
        prop_assert_eq!(bd.total, bd.c1 + bd.c2 + bd.c3);
        prop_assert!(bd.e2 >= 0.0 && bd.supplemental >= 0.0 && bd.surplus >= 0.0);
        let scale = 1e-12 * (f.abs() + ge.abs() + he.abs() + a.abs() + b.abs() + 1.0);
        prop_assert!((bd.e1 + bd.e2 + bd.supplemental - bd.surplus - f).abs() <= scale);
        Ok(())
    });
    checks.push(check(format!("cost decomposition and energy balance: {msg}"), ok));

    let (ok, msg) = run_property(100_000, inputs, |(f, ge, he, a, b, _, pb, pc)| {
        let (g, h) = (f - ge, f - he);
        let p = ProcurementParams::new(g, h, a, b).unwrap();
        let tol = |x: f64| 1e-12 * x * (f.abs() + g.abs() + h.abs() + a.abs() + b.abs() + 1.0);
        let (gerr, herr) = (f - g, f - h);
        let direct2 = intra_day_cost(&p, pb).unwrap();
        let direct3 = penalty_cost(f, &p, pc).unwrap();
        prop_assert!((direct2 - intra_day_cost_from_errors(gerr, herr, a, b, pb)).abs() <= tol(pb));
        prop_assert!((direct3 - penalty_cost_from_errors(gerr, herr, a, b, pc)).abs() <= tol(pc));
        Ok(())
    });
    checks.push(check(format!("direct vs error-form costs at relative 1e-12: {msg}"), ok));

    let swap_inputs = (0.1f64..5.0, 0.1f64..5.0, -6.0f64..6.0, -6.0f64..6.0, 0.5f64..10.0);
    let (ok, msg) = run_property(200, swap_inputs, |(s1, s2, a, b, ec)| {
        let (pg, ph) = (ErrorModel::normal(s1).unwrap(), ErrorModel::normal(s2).unwrap());
        for method in [C3Method::Nested, C3Method::SemiAnalytic] {
            let x = expected_c3_with(ec, a, b, &pg, &ph, method).unwrap();
            let y = expected_c3_with(ec, b, a, &ph, &pg, method).unwrap();
            prop_assert!((x - y).abs() <= 1e-10, "{:?}: {} vs {}", method, x, y);
        }
        Ok(())
    });
    checks.push(check(format!("penalty expectation swap symmetry at 1e-10: {msg}"), ok));

    let base = ScenarioConfig::base();
    let (pg, ph) = (ErrorModel::normal(base.sigma1).unwrap(), ErrorModel::normal(base.sigma2).unwrap());
    let prices = ExpectedPrices { ea: 1.0, eb: 2.0, ec: 3.0 };
    let opts = SearchOptions { refine_to: None, c3_method: C3Method::SemiAnalytic };
    let grid = GridSpec::default();
    let reference = optimal_parameters_with(prices, &pg, &ph, &grid, opts, Execution::Parallel).unwrap();
    let mut moved = Vec::new();
    for k in [0.25, 0.5, 3.0, 7.0, 100.0] {
        let scaled = ExpectedPrices { ea: k * prices.ea, eb: k * prices.eb, ec: k * prices.ec };
        let c = optimal_parameters_with(scaled, &pg, &ph, &grid, opts, Execution::Parallel).unwrap();
        if (c.a, c.b) != (reference.a, reference.b) {
            moved.push((k, c.a, c.b));
        }
    }
    checks.push(check(
        format!("price-scaling argmin invariance, reference ({}, {}), moved: {moved:?}", reference.a, reference.b),
        moved.is_empty(),
    ));

    let n = 100_000;
    let idx = [0usize, 12, 25, 37, 49];
    let mut misses = Vec::new();
    for seed in 0..10u64 {
        for &i in &idx {
            for &j in &idx {
                let (a, b) = (grid.a_at(i), grid.b_at(j));
                let exact = expected_total(&base.expectation_inputs(a, b).unwrap()).unwrap().total;
                let mc = monte_carlo(&base.mc_inputs(a, b).unwrap(), n, seed, grid.linear_index(i, j) as u64, Execution::Parallel).unwrap();
                if (mc.mean - exact).abs() > 4.0 * mc.std_error {
                    misses.push((seed, a, b));
                }
            }
        }
    }
    checks.push(check(format!("MC mean within 4 SE of quadrature on 5x5 cells x 10 seeds (n={n}), misses: {misses:?}"), misses.is_empty()));

    let inputs = base.mc_inputs(0.6, -2.0).unwrap();
    let runs: Vec<_> = [1usize, 4, 16]
        .iter()
        .map(|&w| with_threads(w, || monte_carlo(&inputs, 1_000_000, 7, 3, Execution::Parallel).unwrap()))
        .collect();
    let seq = monte_carlo(&inputs, 1_000_000, 7, 3, Execution::Sequential).unwrap();
    let identical = runs.iter().all(|r| r.mean.to_bits() == seq.mean.to_bits() && r.unbiased_variance.to_bits() == seq.unbiased_variance.to_bits());
    checks.push(check(format!("MC bit-identical across 1/4/16 workers and sequential: mean {}, var {}", seq.mean, seq.unbiased_variance), identical));

    report.criterion("6", "property suites", &checks);
}

fn main() {
    // `cargo test` passes harness flags; a listing request gets an empty list.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut report = Report { failed: Vec::new() };
    let base = criterion_1(&mut report);
    criterion_2(&mut report);
    criterion_3(&mut report, base);
    criterion_4(&mut report);
    criterion_5(&mut report);
    criterion_6(&mut report);
    if report.failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: failing criteria {:?}", report.failed);
        std::process::exit(1);
    }
}
