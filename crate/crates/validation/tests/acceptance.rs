//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run alone with `cargo test -p proxyfair-validation --test acceptance`.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;

use proxyfair::bias::{
    assumption1_check, bias_bound, bias_estimate, delta_form_bias, deltas, empirical_bias, epsilon_bounds,
    epsilon_sample, same_sign_condition, sample_mass_ratio, BiasInputs, Interval,
};
use proxyfair::fixtures::{d4, random_labelled};
use proxyfair::metrics::{oracle_metric, weighted_metric, CellMasses, MetricKind, MetricSpec};
use proxyfair::sensitivity::{contour_grid, run_sensitivity, RangeSpec, SensitivityConfig};
use proxyfair::simulate::{
    generate_population, group_auc, population_truth, run_coverage_study, run_scenario_sweep, simulate_replication,
    SimConfig, SweepAxis, SweepTable,
};
use proxyfair::stats::stream_rng;
use proxyfair::utility::{
    expected_utility, group_utility_report, select_threshold, utility_at, GroupUtilityParams, UtilityInputs,
    UtilityReportConfig,
};

const SEED: u64 = 20240607;

// criterion 1, 6, 8
const FUZZ_CASES: usize = 1000;
const IDENTITY_TOL: f64 = 1e-10;
const IDENTITY_BUDGET: Duration = Duration::from_secs(60);
// criterion 2
const GOLDEN_TOL: f64 = 1e-12;
// criterion 3
const SHARE_TARGET: f64 = 0.47;
const SHARE_TOL: f64 = 0.01;
const AUC_PERFECT_MIN: f64 = 0.99;
const AUC_NULL_TOL: f64 = 0.02;
const DGP_BUDGET: Duration = Duration::from_secs(30);
// criterion 4, 5
const REPLICATIONS: usize = 100;
const BIAS_DRIFT_MAX: f64 = 0.005;
const NULL_BIAS_TOL: f64 = 0.005;
// criterion 7
const COVERAGE_RUNS: usize = 200;
const COVERAGE_N: usize = 2000;
const COVERAGE_RANGE: f64 = 0.03;
const COVERAGE_MIN: f64 = 0.90;
const BOOTSTRAP_REPS: usize = 1000;
// criterion 9
const UTILITY_TOL: f64 = 1e-12;
const GRID_STEP: f64 = 1e-4;
const THRESHOLD_INSTANCES: usize = 100;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

struct FuzzStats {
    evaluated: usize,
    max_gap: f64,
    same_sign_cases: usize,
    counterexamples: usize,
    corner_cases: usize,
    corner_mismatches: usize,
    elapsed: Duration,
}

/// One pass over the fuzzed datasets serving criteria 1, 6 and 8.
fn fuzz_suite() -> FuzzStats {
    let start = Instant::now();
    let mut rng = stream_rng(SEED, 1);
    let mut s = FuzzStats {
        evaluated: 0,
        max_gap: 0.0,
        same_sign_cases: 0,
        counterexamples: 0,
        corner_cases: 0,
        corner_mismatches: 0,
        elapsed: Duration::ZERO,
    };
    for _ in 0..FUZZ_CASES {
        let n = rng.random_range(10..=500);
        let ds = random_labelled(&mut rng, n);
        let level: f64 = rng.random_range(0.01..0.5);
        for kind in MetricKind::ALL {
            let spec = MetricSpec::of(kind);
            let Ok(inputs) = BiasInputs::from_sample(&ds, &spec, "1") else {
                continue;
            };
            let Ok(eps) = epsilon_sample(&ds, &spec, "1") else {
                continue;
            };
            if inputs.base_rate <= 0.0 {
                continue;
            }
            let empirical = empirical_bias(&ds, &spec, "1").unwrap();
            let plugin = bias_estimate(&inputs, &eps).unwrap();
            let d = deltas(&ds, &spec, "1").unwrap();
            let delta_form = delta_form_bias(&inputs, &d).unwrap();
            s.evaluated += 1;
            s.max_gap = s
                .max_gap
                .max((empirical - plugin).abs())
                .max((empirical - delta_form).abs());

            if same_sign_condition(&eps) {
                s.same_sign_cases += 1;
                if !assumption1_check(&d) {
                    s.counterexamples += 1;
                }
            }

            let mut cfg = SensitivityConfig::new(RangeSpec::Relative { level }, inputs.base_rate);
            cfg.resample = false;
            let (Ok(res), Ok(grid)) = (
                run_sensitivity(&ds, &spec, "1", &cfg),
                contour_grid(&ds, &spec, "1", &cfg),
            ) else {
                continue;
            };
            s.corner_cases += 1;
            let gmin = grid.iter().map(|r| r.corrected).fold(f64::INFINITY, f64::min);
            let gmax = grid.iter().map(|r| r.corrected).fold(f64::NEG_INFINITY, f64::max);
            if gmin != res.plausible_mean_interval.lo || gmax != res.plausible_mean_interval.hi {
                s.corner_mismatches += 1;
            }
        }
    }
    s.elapsed = start.elapsed();
    s
}

fn criterion1(f: &FuzzStats) -> Outcome {
    outcome(
        f.evaluated > 0 && f.max_gap <= IDENTITY_TOL && f.elapsed < IDENTITY_BUDGET,
        format!(
            "{} metric/dataset pairs, max |gap| {:.2e} (tol {IDENTITY_TOL:e}), fuzz pass {:.1}s (budget {}s, shared with criteria 6 and 8)",
            f.evaluated,
            f.max_gap,
            f.elapsed.as_secs_f64(),
            IDENTITY_BUDGET.as_secs()
        ),
    )
}

fn criterion2() -> Outcome {
    let ds = d4();
    let spec = MetricSpec::of(MetricKind::Fnr);
    let w = weighted_metric(&ds, &spec, "1").unwrap().value;
    let o = oracle_metric(&ds, &spec, "1").unwrap().value;
    let b = empirical_bias(&ds, &spec, "1").unwrap();
    let e = epsilon_sample(&ds, &spec, "1").unwrap();
    let eb = epsilon_bounds(&ds, &spec, "1").unwrap();
    let d = deltas(&ds, &spec, "1").unwrap();
    let a1 = assumption1_check(&d);
    let cells: Vec<_> = proxyfair::metrics::cell_records(&ds, &spec, "1").unwrap();
    let ratio = sample_mass_ratio(&CellMasses::accumulate(&cells)).unwrap();
    let bound = bias_bound(w, ratio).unwrap();
    let iv = |i: Interval, lo: f64, hi: f64| close(i.lo, lo, GOLDEN_TOL) && close(i.hi, hi, GOLDEN_TOL);
    let checks = [
        ("weighted 0.625", close(w, 0.625, GOLDEN_TOL)),
        ("oracle 0.5", close(o, 0.5, GOLDEN_TOL)),
        ("bias 0.125", close(b, 0.125, GOLDEN_TOL)),
        (
            "eps (0, -0.4)",
            close(e.eps, 0.0, GOLDEN_TOL) && close(e.eps_prime, -0.4, GOLDEN_TOL),
        ),
        ("eps bounds", iv(eb.eps, -0.5, 0.5) && iv(eb.eps_prime, -0.4, 0.6)),
        (
            "delta (0, 0.1)",
            close(d.delta, 0.0, GOLDEN_TOL) && close(d.delta_star, 0.1, GOLDEN_TOL),
        ),
        ("assumption 1", a1),
        ("bound 0.325", close(bound, 0.325, GOLDEN_TOL)),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    outcome(
        failed.is_empty(),
        if failed.is_empty() {
            format!("all 8 values within {GOLDEN_TOL:e}")
        } else {
            format!("mismatched: {}", failed.join(", "))
        },
    )
}

fn proxy_auc(cfg: &SimConfig) -> (f64, f64) {
    let pop = generate_population(cfg, &mut stream_rng(cfg.seed, 0)).unwrap();
    (pop.group_share(), group_auc(&pop.prob, &pop.member).unwrap())
}

fn criterion3() -> Outcome {
    let start = Instant::now();
    let base = SimConfig {
        seed: SEED,
        ..Default::default()
    };
    let (share, auc_default) = proxy_auc(&base);
    let (_, auc_null) = proxy_auc(&SimConfig {
        beta3: 0.0,
        ..base.clone()
    });
    let elapsed = start.elapsed();
    let share_ok = close(share, SHARE_TARGET, SHARE_TOL);
    let perfect_ok = auc_default >= AUC_PERFECT_MIN;
    let null_ok = close(auc_null, 0.5, AUC_NULL_TOL);
    outcome(
        share_ok && perfect_ok && null_ok && elapsed < DGP_BUDGET,
        format!(
            "share {share:.4} [{}], AUC(beta3=20) {auc_default:.4} >= {AUC_PERFECT_MIN} [{}], AUC(beta3=0) {auc_null:.4} in 0.5±{AUC_NULL_TOL} [{}], {:.1}s",
            ok(share_ok),
            ok(perfect_ok),
            ok(null_ok),
            elapsed.as_secs_f64()
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "miss"
    }
}

fn sweep(axis: SweepAxis, values: &[f64]) -> SweepTable {
    let base = SimConfig {
        seed: SEED,
        ..Default::default()
    };
    run_scenario_sweep(&base, axis, values, REPLICATIONS).unwrap()
}

fn criterion4(n_sweep: &SweepTable, beta1_sweep: &SweepTable) -> Outcome {
    let widths: Vec<f64> = n_sweep.summaries.iter().map(|s| s.weighted_width()).collect();
    let means: Vec<f64> = n_sweep.summaries.iter().map(|s| s.mean_bias).collect();
    let shrinking = widths.windows(2).all(|w| w[1] < w[0]);
    let drift =
        means.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - means.iter().cloned().fold(f64::INFINITY, f64::min);
    let at = |v: f64| beta1_sweep.summaries.iter().find(|s| s.value == v).unwrap().mean_bias;
    let abs: Vec<f64> = [0.0, 0.25, 0.5].iter().map(|&v| at(v).abs()).collect();
    let null_ok = abs[0] <= NULL_BIAS_TOL;
    let monotone = abs.windows(2).all(|w| w[1] >= w[0]);
    outcome(
        shrinking && drift < BIAS_DRIFT_MAX && null_ok && monotone,
        format!(
            "widths {:?} [{}], mean-bias spread {drift:.4} < {BIAS_DRIFT_MAX} [{}], bias(beta1=0) {:.4} [{}], |bias| over beta1 0/0.25/0.5 {:?} [{}]",
            widths.iter().map(|w| format!("{w:.4}")).collect::<Vec<_>>(),
            ok(shrinking),
            ok(drift < BIAS_DRIFT_MAX),
            at(0.0),
            ok(null_ok),
            abs.iter().map(|w| format!("{w:.4}")).collect::<Vec<_>>(),
            ok(monotone)
        ),
    )
}

fn criterion5(sweeps: &[(&str, &SweepTable)]) -> Outcome {
    let mut uncovered = Vec::new();
    let mut violations = Vec::new();
    let mut rates = Vec::new();
    for (name, t) in sweeps {
        for s in &t.summaries {
            if s.assumption1 && s.mean_bound < s.mean_abs_bias {
                uncovered.push(format!("{name}={}", s.value));
            }
            if !s.assumption1 {
                violations.push((name.to_string(), s.value));
            }
            rates.push(s.assumption1_rate);
        }
    }
    let only_beta2 = violations.iter().all(|(n, _)| n == "beta2");
    let min_rate = rates.iter().cloned().fold(1.0, f64::min);
    outcome(
        uncovered.is_empty() && only_beta2,
        format!(
            "bound >= |bias| in all assumption-holding cells [{}], assumption violations {:?} [{}], per-replication assumption rate >= {min_rate:.2}",
            if uncovered.is_empty() { "ok".to_string() } else { format!("miss at {}", uncovered.join(", ")) },
            violations,
            ok(only_beta2)
        ),
    )
}

fn criterion6(f: &FuzzStats) -> Outcome {
    outcome(
        f.counterexamples == 0 && f.same_sign_cases > 0,
        format!(
            "{} same-sign cases, {} counterexamples",
            f.same_sign_cases, f.counterexamples
        ),
    )
}

fn criterion7() -> Outcome {
    let sim = SimConfig {
        seed: SEED,
        n_sample: COVERAGE_N,
        ..Default::default()
    };
    let r = Interval::new(-COVERAGE_RANGE, COVERAGE_RANGE);
    let summary = run_coverage_study(
        &sim,
        RangeSpec::Absolute { eps: r, eps_prime: r },
        BOOTSTRAP_REPS,
        0.05,
        COVERAGE_RUNS,
    )
    .unwrap();
    let in_range = summary.runs.iter().filter(|r| r.truth_in_range).count();
    let covered_in_range = summary.runs.iter().filter(|r| r.truth_in_range && r.covered).count();
    outcome(
        summary.rate >= COVERAGE_MIN && in_range == summary.runs.len(),
        format!(
            "coverage {}/{} = {:.3} >= {COVERAGE_MIN}; true (eps, eps') inside ±{COVERAGE_RANGE} in {in_range} runs ({covered_in_range} of them covered)",
            summary.covered,
            summary.runs.len(),
            summary.rate
        ),
    )
}

fn criterion8(f: &FuzzStats) -> Outcome {
    outcome(
        f.corner_cases > 0 && f.corner_mismatches == 0,
        format!(
            "{} cases, {} grid/corner mismatches (exact)",
            f.corner_cases, f.corner_mismatches
        ),
    )
}

fn criterion9() -> Outcome {
    let worked = expected_utility(&UtilityInputs::new(0.2, 0.1, 0.3, 0.5)).unwrap();
    let worked_ok = close(worked, 0.50, UTILITY_TOL);
    let mut rng = stream_rng(SEED, 9);
    let mut mismatches = Vec::new();
    let grid: Vec<f64> = (0..=(1.0 / GRID_STEP).round() as usize)
        .map(|k| k as f64 * GRID_STEP)
        .collect();
    for i in 0..THRESHOLD_INSTANCES {
        let (scores, y) = loop {
            let s: Vec<f64> = (0..50).map(|_| rng.random()).collect();
            let y: Vec<bool> = s.iter().map(|&v| rng.random::<f64>() < v).collect();
            if y.iter().any(|&b| b) && y.iter().any(|&b| !b) {
                break (s, y);
            }
        };
        let r: f64 = rng.random_range(0.2..5.0);
        let chosen = select_threshold(&scores, &y, r).unwrap();
        let evals: Vec<f64> = grid
            .iter()
            .map(|&t| utility_at(&scores, &y, t, r).unwrap().expected_utility)
            .collect();
        let best = evals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let nearest = grid
            .iter()
            .zip(&evals)
            .filter(|(_, &e)| e == best)
            .map(|(&t, _)| (t - chosen.threshold).abs())
            .fold(f64::INFINITY, f64::min);
        if !(close(chosen.expected_utility, best, UTILITY_TOL) && nearest <= GRID_STEP) {
            mismatches.push(i);
        }
    }
    outcome(
        worked_ok && mismatches.is_empty(),
        format!(
            "worked example {worked:.12} [{}], {}/{THRESHOLD_INSTANCES} instances match the {GRID_STEP:e} grid oracle{}",
            ok(worked_ok),
            THRESHOLD_INSTANCES - mismatches.len(),
            if mismatches.is_empty() { String::new() } else { format!(" (failed: {mismatches:?})") }
        ),
    )
}

fn criterion10() -> Outcome {
    let sim = SimConfig {
        seed: SEED,
        n_sample: 5000,
        ..Default::default()
    };
    let (pop, test, pool) = simulate_replication(&sim, 0).unwrap();
    let ds = pop.dataset(&test).unwrap();
    let mut params = BTreeMap::new();
    for g in [0u8, 1] {
        let fnr = population_truth(&pop, &pool, &MetricSpec::of(MetricKind::Fnr), g).unwrap();
        let fpr = population_truth(&pop, &pool, &MetricSpec::of(MetricKind::Fpr), g).unwrap();
        let members: Vec<usize> = pool.iter().copied().filter(|&i| pop.group_view(i, g).1).collect();
        let prevalence = members.iter().filter(|&&i| pop.y[i]).count() as f64 / members.len() as f64;
        params.insert(
            g.to_string(),
            GroupUtilityParams {
                prevalence,
                base_rate_pos: fnr.base_rate,
                base_rate_neg: fpr.base_rate,
            },
        );
    }
    let cfg = UtilityReportConfig {
        levels: vec![0.05, 0.10, 0.20],
        r: 1.0,
        bootstrap_reps: BOOTSTRAP_REPS,
        alpha: 0.05,
        seed: SEED,
        resample: true,
    };
    let report = group_utility_report(&ds, &["0".into(), "1".into()], &params, &cfg).unwrap();
    let mut checked = 0;
    let mut failures = Vec::new();
    for g in &report.groups {
        for lv in &g.levels {
            let (c, u) = (&lv.correlated, &lv.uncorrelated);
            for (name, ci, ui) in [("fpr", c.fpr, u.fpr), ("fnr", c.fnr, u.fnr), ("eu", c.eu, u.eu)] {
                for (kind, a, b) in [
                    ("plausible", ci.plausible, ui.plausible),
                    ("sensitivity", ci.sensitivity, ui.sensitivity),
                ] {
                    checked += 1;
                    if !(a.lo <= b.lo && b.hi <= a.hi) {
                        failures.push(format!("group {} level {} {name} {kind}", g.group, lv.level));
                    }
                }
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{checked} interval pairs, correlated contains uncorrelated in {}",
            checked - failures.len()
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let fuzz = fuzz_suite();
    let beta1 = sweep(SweepAxis::Beta1, &[-0.5, -0.25, 0.0, 0.25, 0.5]);
    let beta2 = sweep(SweepAxis::Beta2, &[-0.5, -0.25, 0.0, 0.25, 0.5]);
    let beta3 = sweep(SweepAxis::Beta3, &[0.0, 5.0, 10.0, 15.0, 20.0]);
    let n_sample = sweep(SweepAxis::NSample, &[1000.0, 2000.0, 5000.0, 10000.0]);

    let results = [
        criterion1(&fuzz),
        criterion2(),
        criterion3(),
        criterion4(&n_sample, &beta1),
        criterion5(&[("beta1", &beta1), ("beta2", &beta2), ("beta3", &beta3)]),
        criterion6(&fuzz),
        criterion7(),
        criterion8(&fuzz),
        criterion9(),
        criterion10(),
    ];
    let mut failed = 0;
    for (i, r) in results.iter().enumerate() {
        println!(
            "criterion {:>2}: {}  {}",
            i + 1,
            if r.pass { "PASS" } else { "FAIL" },
            r.detail
        );
        failed += usize::from(!r.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed ({:.0}s)",
        results.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
