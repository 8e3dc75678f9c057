//! The five subcommands. Each returns the rendered report; the binary decides
//! where it goes.

use qsopt::engine::{
    average_success, average_success_exact, lambda_of_j, standard_iterations, success_probability_analytic,
    success_probability_exact,
};
use qsopt::optimizer::{optimize as optimize_dense, OptimizationOutcome, DENSE_LIMIT};
use qsopt::state::{uniform_state, UnitRealVector};
use qsopt::two_value::{self, TwoValueSpec};
use qsopt::verify::{run_check, Check, CheckOptions, VerificationReport};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{Method, PRule, ResolvedPrior, RunConfig};
use crate::error::CliError;
use crate::output::{envelope, fmt_f64, render_json, Csv, Format};
use crate::vecio::{read_vector, write_vector};

/// Rendered report plus whether verification failed (exit status 1).
#[derive(Debug, Clone)]
pub struct CommandOutput {
    pub text: String,
    pub failed: bool,
}

impl CommandOutput {
    fn ok(text: String) -> Self {
        Self { text, failed: false }
    }
}

fn load_state(path: Option<&std::path::Path>, n: usize) -> Result<UnitRealVector, CliError> {
    match path {
        None => Ok(uniform_state(n)?),
        Some(p) => {
            let v = read_vector(p)?;
            if v.len() != n {
                return Err(CliError::Config(format!("{} holds {} values, expected {n}", p.display(), v.len())));
            }
            Ok(UnitRealVector::new(v)?)
        }
    }
}

#[derive(Debug, Serialize)]
struct TargetRow {
    t: usize,
    p: f64,
    /// Targets sharing this row's value (one representative per block for
    /// large two-value priors).
    multiplicity: usize,
    exact: f64,
    analytic: f64,
}

pub fn simulate(cfg: &RunConfig, format: Option<Format>) -> Result<CommandOutput, CliError> {
    let prior = cfg.resolve_prior()?;
    let n = prior.n();
    let j = cfg.j.unwrap_or_else(|| standard_iterations(n));
    let psi = load_state(cfg.psi_file.as_deref(), n)?;
    let phi = load_state(cfg.phi_file.as_deref(), n)?;
    let lambda = lambda_of_j(n, j);

    let representative = match &prior {
        ResolvedPrior::TwoValue(spec) if n > DENSE_LIMIT && cfg.psi_file.is_none() && cfg.phi_file.is_none() => Some(*spec),
        _ => None,
    };
    let targets: Vec<(usize, f64, usize)> = match (&representative, &prior) {
        (Some(spec), _) => [(0, spec.p, spec.k), (spec.k, spec.q, n - spec.k)].into_iter().filter(|r| r.1 > 0.0).collect(),
        (None, _) => {
            let dist = prior.distribution()?;
            dist.probs().iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(t, p)| (t, *p, 1)).collect()
        }
    };
    let rows = targets
        .par_iter()
        .map(|&(t, p, multiplicity)| {
            Ok(TargetRow {
                t,
                p,
                multiplicity,
                exact: success_probability_exact(&psi, &phi, t, j)?,
                analytic: success_probability_analytic(&psi, &phi, t, j)?,
            })
        })
        .collect::<Result<Vec<_>, qsopt::Error>>()?;
    let avg_exact: f64 = rows.iter().map(|r| r.multiplicity as f64 * r.p * r.exact).sum();
    let avg_analytic = match representative {
        Some(_) => rows.iter().map(|r| r.multiplicity as f64 * r.p * r.analytic).sum(),
        None => average_success(&psi, &phi, &prior.distribution()?, lambda)?,
    };

    let mut resolved = cfg.clone();
    resolved.n = Some(n);
    resolved.j = Some(j);
    match format.unwrap_or(Format::Json) {
        Format::Json => Ok(CommandOutput::ok(render_json(&envelope(
            "simulate",
            &resolved,
            json!({
                "n": n,
                "j": j,
                "lambda": lambda,
                "average_success": avg_exact,
                "average_success_analytic": avg_analytic,
                "targets": rows,
            }),
        )))),
        Format::Csv => {
            let mut csv = Csv::new(&["t", "p", "multiplicity", "exact", "analytic"]);
            for r in &rows {
                csv.push(vec![r.t.to_string(), fmt_f64(r.p), r.multiplicity.to_string(), fmt_f64(r.exact), fmt_f64(r.analytic)]);
            }
            Ok(CommandOutput::ok(csv.render()))
        }
    }
}

/// Optimization result plus the path that produced it.
#[derive(Debug, Clone)]
pub struct OptimizeReport {
    pub path: &'static str,
    pub outcome: OptimizationOutcome,
    pub simulated_success: f64,
    pub closed_form: Option<two_value::TwoValueClosedForm>,
}

impl OptimizeReport {
    pub fn average_queries_per_success(&self) -> f64 {
        self.outcome.j_min as f64 / self.simulated_success
    }
}

/// Chooses between the dense linearized solve and the two-value closed form.
pub fn run_optimize(cfg: &RunConfig) -> Result<OptimizeReport, CliError> {
    let delta_p = cfg.delta_p.ok_or_else(|| CliError::Config("`delta_p` is required".into()))?;
    let prior = cfg.resolve_prior()?;
    let n = prior.n();
    // a uniform prior is the two-value model with K = 1, p = 1/N
    let two_value_view = match &prior {
        ResolvedPrior::TwoValue(s) => Some(*s),
        ResolvedPrior::General(p) if p.is_uniform(0.0) => Some(TwoValueSpec::new(n, 1, 1.0 / n as f64)?),
        ResolvedPrior::General(_) => None,
    };
    let method = cfg.method.unwrap_or_default();
    let closed = match method {
        Method::Dense => false,
        Method::ClosedForm => true,
        Method::Auto => n > DENSE_LIMIT,
    };
    if !closed && n > DENSE_LIMIT {
        return Err(CliError::Config(format!(
            "the dense path is limited to n <= {DENSE_LIMIT} (got {n}); use a two-value prior, which takes the closed form"
        )));
    }
    if closed {
        let spec = two_value_view.ok_or_else(|| {
            CliError::Config(format!("the closed form needs a two-value or uniform prior (n = {n}, dense limit {DENSE_LIMIT})"))
        })?;
        let outcome = two_value::optimize_closed_form(&spec, delta_p)?;
        let simulated_success = two_value::outcome_simulated_success(&spec, &outcome)?;
        Ok(OptimizeReport { path: "closed_form", outcome, simulated_success, closed_form: two_value::closed_form(&spec).ok() })
    } else {
        let dist = prior.distribution()?;
        let outcome = optimize_dense(&dist, delta_p)?;
        let simulated_success = average_success_exact(&outcome.psi_opt, &outcome.phi_opt, &dist, outcome.j_min)?;
        let closed_form = two_value_view.and_then(|s| two_value::closed_form(&s).ok());
        Ok(OptimizeReport { path: "dense", outcome, simulated_success, closed_form })
    }
}

pub fn optimize(cfg: &RunConfig, format: Option<Format>) -> Result<CommandOutput, CliError> {
    let report = run_optimize(cfg)?;
    let o = &report.outcome;
    if let Some(p) = &cfg.psi_out {
        write_vector(p, o.psi_opt.amps())?;
    }
    if let Some(p) = &cfg.phi_out {
        write_vector(p, o.phi_opt.amps())?;
    }
    let mut resolved = cfg.clone();
    resolved.n = Some(o.psi_opt.len());
    resolved.method = Some(if report.path == "dense" { Method::Dense } else { Method::ClosedForm });
    let aqps = report.average_queries_per_success();
    match format.unwrap_or(Format::Json) {
        Format::Json => Ok(CommandOutput::ok(render_json(&envelope(
            "optimize",
            &resolved,
            json!({
                "path": report.path,
                "s_factor": o.s_factor,
                "delta_lambda": o.delta_lambda,
                "expansion_order": o.expansion_order,
                "lambda_opt": o.lambda_opt,
                "j_min": o.j_min,
                "j_standard": o.j_standard,
                "predicted_success": o.predicted_success,
                "simulated_success": report.simulated_success,
                "average_queries_per_success": aqps,
                "lambda_gradient": o.lambda_gradient,
                "condition_estimate": o.condition_estimate,
                "closed_form": report.closed_form,
            }),
        )))),
        Format::Csv => {
            let mut csv = Csv::new(&[
                "s_factor",
                "delta_lambda",
                "j_min",
                "j_standard",
                "predicted_success",
                "simulated_success",
                "average_queries_per_success",
            ]);
            csv.push(vec![
                fmt_f64(o.s_factor),
                fmt_f64(o.delta_lambda),
                o.j_min.to_string(),
                o.j_standard.to_string(),
                fmt_f64(o.predicted_success),
                fmt_f64(report.simulated_success),
                fmt_f64(aqps),
            ]);
            Ok(CommandOutput::ok(csv.render()))
        }
    }
}

pub const FIG3_N: usize = 10_000;
pub const FIG3_K: [usize; 4] = [1, 10, 100, 1000];
pub const FIG3_POINTS: usize = 81;
pub const FIG4_K: [usize; 3] = [10, 100, 1000];

/// Log-spaced p from `1e-6·K/N²` (where |S| ≈ 2e-6) up to `1/K`, with `1/N`
/// inserted so the uniform point is on every curve.
pub fn default_p_grid(n: usize, k: usize, points: usize) -> Vec<f64> {
    let lo = (1e-6 * k as f64 / (n as f64 * n as f64)).log10();
    let hi = (1.0 / k as f64).log10();
    let mut grid: Vec<f64> = (0..points)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (points - 1).max(1) as f64))
        .collect();
    *grid.last_mut().unwrap() = 1.0 / k as f64;
    let uniform = 1.0 / n as f64;
    if uniform <= 1.0 / k as f64 {
        // snap a grid point that powf placed next to 1/N rather than duplicate it
        match grid.iter_mut().find(|x| ((**x - uniform) / uniform).abs() < 1e-9) {
            Some(x) => *x = uniform,
            None => {
                grid.push(uniform);
                grid.sort_by(f64::total_cmp);
            }
        }
    }
    grid
}

/// Negative log-spaced dλ (the direction of reduction), 13 points per panel.
pub fn default_dlambda_grid(rule: PRule) -> Vec<f64> {
    let (lo, hi) = match rule {
        PRule::NearMax => (-5.0, -2.0),
        PRule::Tiny => (-4.0, 0.2f64.log10()),
    };
    (0..13).map(|i| -(10f64.powf(lo + (hi - lo) * i as f64 / 12.0))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub p: f64,
    pub k: usize,
    pub n: usize,
    pub s: f64,
}

pub fn sweep_rows(n: usize, k_list: &[usize], p_grid: Option<&[f64]>, points: usize) -> Vec<SweepRow> {
    let mut jobs = Vec::new();
    for &k in k_list {
        let grid = p_grid.map(<[f64]>::to_vec).unwrap_or_else(|| default_p_grid(n, k, points));
        jobs.extend(grid.into_iter().map(|p| (k, p)));
    }
    jobs.par_iter()
        .map(|&(k, p)| match TwoValueSpec::new(n, k, p).and_then(|s| two_value::s_factor(&s)) {
            Ok(s) => Some(SweepRow { p, k, n, s }),
            Err(e) => {
                log::warn!("skipping k = {k}, p = {p:e}: {e}");
                None
            }
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

fn verification_gate(cfg: &RunConfig, verify_first: bool) -> Result<Option<CommandOutput>, CliError> {
    if !(verify_first || cfg.verify_before_sweep.unwrap_or(false)) {
        return Ok(None);
    }
    let (reports, passed) = run_checks(cfg, &Check::ALL)?;
    if passed {
        log::info!("verification suite passed, running the sweep");
        return Ok(None);
    }
    let text = render_json(&envelope("verify", cfg, json!({ "passed": false, "reports": reports })));
    Ok(Some(CommandOutput { text, failed: true }))
}

pub fn sweep_fig3(cfg: &RunConfig, format: Option<Format>, verify_first: bool) -> Result<CommandOutput, CliError> {
    if let Some(out) = verification_gate(cfg, verify_first)? {
        return Ok(out);
    }
    let n = cfg.n.unwrap_or(FIG3_N);
    let k_list = cfg.k_list.clone().unwrap_or_else(|| FIG3_K.to_vec());
    let points = cfg.p_points.unwrap_or(FIG3_POINTS);
    if points < 2 && cfg.p_grid.is_none() {
        return Err(CliError::Config("`p_points` must be at least 2".into()));
    }
    let rows = sweep_rows(n, &k_list, cfg.p_grid.as_deref(), points);
    let mut resolved = cfg.clone();
    resolved.n = Some(n);
    resolved.k_list = Some(k_list);
    if resolved.p_grid.is_none() {
        resolved.p_points = Some(points);
    }
    match format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut csv = Csv::new(&["p", "k", "n", "s"]);
            for r in &rows {
                csv.push(vec![fmt_f64(r.p), r.k.to_string(), r.n.to_string(), fmt_f64(r.s)]);
            }
            Ok(CommandOutput::ok(csv.render()))
        }
        Format::Json => Ok(CommandOutput::ok(render_json(&envelope("sweep-fig3", &resolved, json!({ "rows": rows }))))),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RatioCurve {
    pub k: usize,
    pub p: f64,
    pub s_factor: f64,
    /// `2·ratio` linearly extrapolated to `dλ = 0` from the two smallest |dλ|.
    pub limit: f64,
    pub rows: Vec<two_value::RatioRow>,
}

pub fn ratio_curves(n: usize, k_list: &[usize], rule: PRule, grid: &[f64]) -> Result<Vec<RatioCurve>, CliError> {
    k_list
        .par_iter()
        .map(|&k| {
            let p = rule.p(k);
            let spec = TwoValueSpec::new(n, k, p)?;
            let rows = two_value::exact_ratio_scan(&spec, grid)?;
            let mut by_size: Vec<&two_value::RatioRow> = rows.iter().collect();
            by_size.sort_by(|a, b| a.dlambda.abs().total_cmp(&b.dlambda.abs()));
            let limit = match by_size.as_slice() {
                [a, b, ..] if a.dlambda.abs() < b.dlambda.abs() => {
                    let (h1, h2) = (a.dlambda.abs(), b.dlambda.abs());
                    2.0 * (h2 * a.ratio - h1 * b.ratio) / (h2 - h1)
                }
                [a, ..] => 2.0 * a.ratio,
                [] => f64::NAN,
            };
            Ok(RatioCurve { k, p, s_factor: two_value::s_factor(&spec)?, limit, rows })
        })
        .collect::<Result<Vec<_>, qsopt::Error>>()
        .map_err(CliError::from)
}

pub fn ratio_fig4(cfg: &RunConfig, format: Option<Format>, verify_first: bool) -> Result<CommandOutput, CliError> {
    if let Some(out) = verification_gate(cfg, verify_first)? {
        return Ok(out);
    }
    let n = cfg.n.unwrap_or(FIG3_N);
    let k_list = cfg.k_list.clone().unwrap_or_else(|| FIG4_K.to_vec());
    let rule = cfg.p_rule.unwrap_or_default();
    let grid = cfg.dlambda_grid.clone().unwrap_or_else(|| default_dlambda_grid(rule));
    if grid.is_empty() {
        return Err(CliError::Config("`dlambda_grid` is empty".into()));
    }
    let curves = ratio_curves(n, &k_list, rule, &grid)?;
    let mut resolved = cfg.clone();
    resolved.n = Some(n);
    resolved.k_list = Some(k_list);
    resolved.p_rule = Some(rule);
    resolved.dlambda_grid = Some(grid);
    match format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut csv = Csv::new(&["k", "dlambda", "dpbar", "ratio"]);
            for c in &curves {
                for r in &c.rows {
                    csv.push(vec![c.k.to_string(), fmt_f64(r.dlambda), fmt_f64(r.dpbar), fmt_f64(r.ratio)]);
                }
            }
            Ok(CommandOutput::ok(csv.render()))
        }
        Format::Json => Ok(CommandOutput::ok(render_json(&envelope("ratio-fig4", &resolved, json!({ "curves": curves }))))),
    }
}

pub fn run_checks(cfg: &RunConfig, checks: &[Check]) -> Result<(Vec<VerificationReport>, bool), CliError> {
    let mut opts = cfg.verify.clone().unwrap_or_default();
    if let Some(seed) = cfg.seed {
        opts.seed = seed;
    }
    let reports = checks.iter().map(|c| run_check(*c, &opts)).collect::<Result<Vec<_>, _>>()?;
    let passed = reports.iter().all(|r| r.passed);
    Ok((reports, passed))
}

pub fn verify(cfg: &RunConfig, format: Option<Format>) -> Result<CommandOutput, CliError> {
    let checks = cfg.checks.clone().unwrap_or_else(|| Check::ALL.to_vec());
    let (reports, passed) = run_checks(cfg, &checks)?;
    let mut resolved = cfg.clone();
    resolved.checks = Some(checks);
    let mut opts: CheckOptions = cfg.verify.clone().unwrap_or_default();
    if let Some(seed) = cfg.seed {
        opts.seed = seed;
    }
    resolved.verify = Some(opts);
    let text = match format.unwrap_or(Format::Json) {
        Format::Json => render_json(&envelope("verify", &resolved, json!({ "passed": passed, "reports": reports }))),
        Format::Csv => {
            let mut csv = Csv::new(&["check", "passed", "max_abs_error", "max_rel_error"]);
            for r in &reports {
                csv.push(vec![r.check_name.clone(), r.passed.to_string(), fmt_f64(r.max_abs_error), fmt_f64(r.max_rel_error)]);
            }
            csv.render()
        }
    };
    Ok(CommandOutput { text, failed: !passed })
}
