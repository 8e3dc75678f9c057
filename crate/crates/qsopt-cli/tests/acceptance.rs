//! The eleven acceptance criteria, one test each. Every test prints a single
//! `PASS`/`FAIL criterion N` line with its worst error and wall time.

use std::time::{Duration, Instant};

use qsopt::engine::{standard_grover_prob, success_probability_exact};
use qsopt::gradient::std_point;
use qsopt::optimizer::{curvature_S, first_order_directions, build_system, optimize, second_order_delta_lambda};
use qsopt::state::{uniform_state, PriorDistribution};
use qsopt::two_value::{self, TwoValueSpec};
use qsopt::verify::{self, CheckOptions, VerificationReport};
use qsopt_cli::commands::{self, FIG3_K, FIG3_N, FIG4_K};
use qsopt_cli::config::{PRule, PriorSpec, RunConfig};

fn conclude(id: u32, limit_secs: u64, start: Instant, outcome: Result<String, String>) {
    let elapsed = start.elapsed();
    let outcome = outcome.and_then(|summary| {
        if elapsed > Duration::from_secs(limit_secs) {
            Err(format!("{summary}; took {elapsed:.2?}, limit {limit_secs} s"))
        } else {
            Ok(summary)
        }
    });
    match outcome {
        Ok(summary) => println!("PASS criterion {id}: {summary} ({elapsed:.2?})"),
        Err(why) => {
            println!("FAIL criterion {id}: {why} ({elapsed:.2?})");
            panic!("criterion {id} failed: {why}");
        }
    }
}

fn ensure(cond: bool, why: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(why()) }
}

fn check_passed(r: &VerificationReport) -> Result<(), String> {
    let worst: Vec<String> = r.details.iter().filter(|c| !c.passed).take(3).map(|c| c.label.clone()).collect();
    ensure(r.passed, || format!("{} failed (max abs {:e}, max rel {:e}): {worst:?} {:?}", r.check_name, r.max_abs_error, r.max_rel_error, r.notes))
}

#[test]
fn criterion_01_standard_grover() {
    let start = Instant::now();
    let outcome = (|| {
        let s = uniform_state(4).map_err(|e| e.to_string())?;
        let p4 = success_probability_exact(&s, &s, 2, 1).map_err(|e| e.to_string())?;
        ensure((p4 - 1.0).abs() <= 1e-12, || format!("n = 4, j = 1 gives {p4}"))?;
        let mut picked = Vec::new();
        for n in [16usize, 64, 1024] {
            let theta = (1.0 / (n as f64).sqrt()).asin();
            let predicted = (std::f64::consts::PI / (4.0 * theta) - 0.5).ceil() as u64;
            // first period only; later revolutions can peak higher
            let best = (0..=(std::f64::consts::PI / (2.0 * theta)) as u64)
                .max_by(|a, b| standard_grover_prob(n, *a).total_cmp(&standard_grover_prob(n, *b)))
                .unwrap();
            let p = standard_grover_prob(n, best);
            ensure(best == predicted, || format!("n = {n}: argmax j = {best}, expected {predicted}"))?;
            ensure(p > 1.0 - 1.0 / n as f64, || format!("n = {n}: peak {p} not above 1 - 1/n"))?;
            picked.push(format!("n={n} j={best} p={p:.6}"));
        }
        Ok(format!("n=4 p={p4}; {}", picked.join(", ")))
    })();
    conclude(1, 1, start, outcome);
}

#[test]
fn criterion_02_analytic_matches_exact() {
    let start = Instant::now();
    let outcome = (|| {
        let mut worst: f64 = 0.0;
        for seed in [0, 1] {
            let r = verify::check_equivalence(&CheckOptions { seed, ..Default::default() }).map_err(|e| e.to_string())?;
            check_passed(&r)?;
            worst = worst.max(r.max_abs_error);
        }
        Ok(format!("2 x 200 instances, max abs error {worst:e}"))
    })();
    conclude(2, 5, start, outcome);
}

#[test]
fn criterion_03_std_point_identities() {
    let start = Instant::now();
    let outcome = (|| {
        let r = verify::check_std_identities(&CheckOptions::default()).map_err(|e| e.to_string())?;
        check_passed(&r)?;
        Ok(format!("60 priors, max abs error {:e}", r.max_abs_error))
    })();
    conclude(3, 5, start, outcome);
}

#[test]
fn criterion_04_gradient_oracle() {
    let start = Instant::now();
    let outcome = (|| {
        let r = verify::check_gradients(&CheckOptions::default()).map_err(|e| e.to_string())?;
        check_passed(&r)?;
        Ok(format!("100 configs, max rel error {:e}", r.max_rel_error))
    })();
    conclude(4, 30, start, outcome);
}

#[test]
fn criterion_05_uniform_curvature() {
    let start = Instant::now();
    let outcome = (|| {
        let grid = verify::default_curvature_grid();
        let mut parts = Vec::new();
        for n in [16usize, 256, 1024] {
            let prior = PriorDistribution::uniform(n).map_err(|e| e.to_string())?;
            let general = curvature_S(&prior).map_err(|e| e.to_string())?;
            let spec = TwoValueSpec::new(n, 1, 1.0 / n as f64).map_err(|e| e.to_string())?;
            let closed = two_value::s_factor(&spec).map_err(|e| e.to_string())?;
            let fitted = verify::empirical_curvature(&prior, &grid).map_err(|e| e.to_string())?;
            ensure((general + 2.0).abs() <= 1e-6, || format!("N = {n}: curvature_S = {general}"))?;
            ensure((closed + 2.0).abs() <= 1e-6, || format!("N = {n}: s_factor = {closed}"))?;
            ensure(((fitted - general) / general).abs() <= 0.01, || format!("N = {n}: fitted {fitted} vs {general}"))?;
            parts.push(format!("N={n} S={general:.9} fit={fitted:.5}"));
        }
        Ok(parts.join(", "))
    })();
    conclude(5, 60, start, outcome);
}

/// Twenty two-value points with N ≤ 200 spread over K and p on both sides of 1/N.
const CLOSED_FORM_GRID: [(usize, usize, f64); 20] = [
    (12, 3, 0.2),
    (12, 2, 0.01),
    (20, 4, 0.1),
    (20, 4, 0.05),
    (20, 1, 0.5),
    (30, 3, 0.01),
    (30, 10, 0.05),
    (50, 5, 0.1),
    (50, 5, 0.001),
    (60, 2, 0.2),
    (64, 8, 0.1),
    (80, 20, 0.03),
    (100, 10, 0.05),
    (100, 1, 0.3),
    (100, 60, 0.01),
    (128, 16, 0.0005),
    (150, 30, 0.02),
    (200, 50, 0.002),
    (200, 100, 0.003),
    (200, 5, 0.15),
];

#[test]
fn criterion_06_closed_form_matches_dense() {
    let start = Instant::now();
    let outcome = (|| {
        let (mut s_err, mut dir_err, mut minv_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
        for (n, k, p) in CLOSED_FORM_GRID {
            let spec = TwoValueSpec::new(n, k, p).map_err(|e| e.to_string())?;
            let tag = format!("N={n} K={k} p={p}");
            let prior = spec.prior().map_err(|e| e.to_string())?;
            let closed_s = two_value::s_factor(&spec).map_err(|e| e.to_string())?;
            let general_s = curvature_S(&prior).map_err(|e| e.to_string())?;
            let rel = ((general_s - closed_s) / closed_s).abs();
            ensure(rel <= 1e-4, || format!("{tag}: curvature_S {general_s} vs s_factor {closed_s}"))?;
            s_err = s_err.max(rel);

            let system = build_system(&prior).map_err(|e| e.to_string())?;
            let (dpsi, dphi) = first_order_directions(&system).map_err(|e| e.to_string())?;
            let (cpsi, cphi) = two_value::first_order_direction_closed(&spec).map_err(|e| e.to_string())?;
            for (a, b) in dpsi.iter().chain(&dphi).zip(cpsi.iter().chain(&cphi)) {
                dir_err = dir_err.max((a - b).abs());
            }
            ensure(dir_err <= 1e-9, || format!("{tag}: direction error {dir_err:e}"))?;

            let m = verify::minv_numeric_check(&spec).map_err(|e| e.to_string())?;
            check_passed(&m)?;
            minv_err = minv_err.max(m.max_abs_error);
        }
        Ok(format!("20 points, S rel {s_err:e}, directions {dir_err:e}, inverse {minv_err:e}"))
    })();
    conclude(6, 120, start, outcome);
}

fn parse_sweep(csv: &str) -> Vec<(f64, usize, usize, f64)> {
    csv.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap(), f[3].parse().unwrap())
        })
        .collect()
}

#[test]
fn criterion_07_fig3_sweep() {
    let start = Instant::now();
    let outcome = (|| {
        let out = commands::sweep_fig3(&RunConfig::default(), None, false).map_err(|e| e.to_string())?;
        let rows = parse_sweep(&out.text);
        let uniform = 1.0 / FIG3_N as f64;
        for k in FIG3_K {
            let curve: Vec<(f64, f64)> = rows.iter().filter(|r| r.1 == k && r.2 == FIG3_N).map(|r| (r.0, r.3)).collect();
            ensure(curve.len() > 10, || format!("K = {k}: only {} rows", curve.len()))?;
            for &(p, s) in &curve {
                ensure((-2.0..=0.0).contains(&s), || format!("K = {k}, p = {p:e}: s = {s} outside [-2, 0]"))?;
            }
            let &(pmin, smin) = curve.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
            ensure(pmin == uniform && (smin + 2.0).abs() <= 1e-12, || format!("K = {k}: minimum {smin} at p = {pmin:e}"))?;
            ensure(curve[0].1.abs() < 1e-4, || format!("K = {k}: s = {} at the smallest p", curve[0].1))?;
            let last = curve.last().unwrap();
            ensure((last.0 * k as f64 - 1.0).abs() < 1e-12 && last.1.abs() <= 1e-12, || format!("K = {k}: s = {} at Kp = 1", last.1))?;
            for w in curve.windows(2) {
                let falling = w[1].0 <= uniform;
                let ok = if falling { w[1].1 <= w[0].1 } else { w[1].1 >= w[0].1 };
                ensure(ok, || format!("K = {k}: not monotone between p = {:e} and {:e}", w[0].0, w[1].0))?;
            }
        }
        Ok(format!("{} rows over K = {FIG3_K:?}, minimum -2 at p = 1e-4 on every curve", rows.len()))
    })();
    conclude(7, 10, start, outcome);
}

#[test]
fn criterion_08_fig4_ratio() {
    let start = Instant::now();
    let outcome = (|| {
        let mut parts = Vec::new();
        for rule in [PRule::NearMax, PRule::Tiny] {
            let grid = commands::default_dlambda_grid(rule);
            let curves = commands::ratio_curves(FIG3_N, &FIG4_K, rule, &grid).map_err(|e| e.to_string())?;
            for c in curves {
                let rel = ((c.limit - c.s_factor) / c.s_factor).abs();
                ensure(rel <= 0.01, || format!("{rule:?} K = {}: limit {} vs S {}", c.k, c.limit, c.s_factor))?;
                let mut rows = c.rows.clone();
                rows.sort_by(|a, b| a.dpbar.abs().total_cmp(&b.dpbar.abs()));
                let dev: Vec<f64> = rows.iter().map(|r| (2.0 * r.ratio - c.s_factor).abs()).collect();
                ensure(dev.windows(2).all(|w| w[1] >= w[0]), || format!("{rule:?} K = {}: deviation not monotone {dev:?}", c.k))?;
                parts.push(format!("{rule:?} K={} rel {rel:.1e}", c.k));
            }
        }
        Ok(parts.join(", "))
    })();
    conclude(8, 30, start, outcome);
}

#[test]
fn criterion_09_optimization_payoff() {
    let start = Instant::now();
    let outcome = (|| {
        let cfg = RunConfig {
            n: Some(10_000),
            prior: Some(PriorSpec::TwoValue { k: 100, p: 1e-6 }),
            delta_p: Some(1e-3),
            ..Default::default()
        };
        let r = commands::run_optimize(&cfg).map_err(|e| e.to_string())?;
        let o = &r.outcome;
        ensure(r.path == "closed_form", || format!("took the {} path", r.path))?;
        ensure(o.j_min < o.j_standard, || format!("j_min {} not below {}", o.j_min, o.j_standard))?;
        ensure(r.simulated_success >= 1.0 - 1e-3 - 1e-4, || format!("simulated success {}", r.simulated_success))?;
        let aqps = r.average_queries_per_success();
        ensure(aqps < o.j_standard as f64, || format!("{aqps} queries per success"))?;
        Ok(format!("j_min {} vs {}, success {:.6}, {aqps:.3} queries per success", o.j_min, o.j_standard, r.simulated_success))
    })();
    conclude(9, 10, start, outcome);
}

#[test]
fn criterion_10_third_order() {
    let start = Instant::now();
    let outcome = (|| {
        let mut worst: f64 = 0.0;
        let mut reduced = 0;
        for (n, k, p) in verify::THIRD_ORDER_SPECS {
            let spec = TwoValueSpec::new(n, k, p).map_err(|e| e.to_string())?;
            let tag = format!("N={n} K={k} p={p}");
            let range = two_value::valid_range(&spec).map_err(|e| e.to_string())?;
            for frac in [0.01, 0.05, 0.1] {
                let dpbar = (frac * range).min(verify::THIRD_ORDER_MAX_DPBAR);
                let exact = two_value::invert_path_curve(&spec, dpbar).map_err(|e| e.to_string())?;
                let third = two_value::dlambda_third_order(&spec, dpbar).map_err(|e| e.to_string())?;
                let rel = ((third - exact) / exact).abs();
                ensure(rel < 0.05, || format!("{tag} dP = {dpbar:e}: {third} vs exact {exact}"))?;
                worst = worst.max(rel);
            }
            let (_, b) = two_value::higher_order_coeffs(&spec).map_err(|e| e.to_string())?;
            if b == 0.0 {
                let s = two_value::s_factor(&spec).map_err(|e| e.to_string())?;
                for dp in [1e-4, 1e-3, 1e-2] {
                    let second = second_order_delta_lambda(s, dp).map_err(|e| e.to_string())?;
                    let third = two_value::dlambda_third_order(&spec, dp).map_err(|e| e.to_string())?;
                    ensure(third == second, || format!("{tag}: third order {third} vs second order {second}"))?;
                }
                reduced += 1;
            }
        }
        ensure(reduced >= 1, || "no B = 0 spec in the set".into())?;
        Ok(format!("10 specs, worst relative error {worst:.3e}, {reduced} B = 0 specs reduce exactly"))
    })();
    conclude(10, 60, start, outcome);
}

#[test]
fn criterion_11_ascent_stationarity() {
    let start = Instant::now();
    let outcome = (|| {
        let mut parts = Vec::new();
        for (n, k, p, delta_p) in [(50, 5, 0.1, 1e-3), (50, 5, 0.1, 1e-4), (40, 4, 0.01, 1e-3)] {
            let spec = TwoValueSpec::new(n, k, p).map_err(|e| e.to_string())?;
            let tag = format!("N={n} K={k} p={p} dP={delta_p:e}");
            let prior = spec.prior().map_err(|e| e.to_string())?;
            let out = optimize(&prior, delta_p).map_err(|e| e.to_string())?;
            let lambda = std_point(n).map_err(|e| e.to_string())?.2 + out.delta_lambda;
            let (dpsi, _) = two_value::first_order_direction_closed(&spec).map_err(|e| e.to_string())?;
            let bound = 2.0 * dpsi.iter().map(|x| x * x).sum::<f64>().sqrt() * out.delta_lambda.abs();
            let run = verify::constrained_ascent(&prior, lambda, (&out.psi_opt, &out.phi_opt), 200_000, 1e-9)
                .map_err(|e| e.to_string())?;
            let residual = run.residual_psi.max(run.residual_phi);
            ensure(run.converged && residual < 1e-8, || format!("{tag}: residual {residual:e} after {} iterations", run.iterations))?;
            let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let d = dist(run.psi.amps(), out.psi_opt.amps()).max(dist(run.phi.amps(), out.phi_opt.amps()));
            ensure(d <= bound, || format!("{tag}: distance {d:e} exceeds {bound:e}"))?;
            parts.push(format!("{tag} residual {residual:.1e} distance {d:.2e}/{bound:.2e}"));
        }
        Ok(parts.join("; "))
    })();
    conclude(11, 120, start, outcome);
}
