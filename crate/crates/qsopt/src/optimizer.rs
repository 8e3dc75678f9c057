//! Linearized optimality conditions at the std point and the resulting
//! oracle-count reduction for a general prior.

use nalgebra::{DMatrix, DVector, Dyn, LU};
use serde::Serialize;

use crate::engine::{average_success, j_of_lambda, lambda_of_j, standard_iterations};
use crate::error::{Error, Result};
use crate::gradient::{gradient_chain_rule, hessian_vector_product, std_blocks, std_dc_lambda, std_point, StdConstants, Tangent};
use crate::num::{dot, project_out};
use crate::state::{PriorDistribution, UnitRealVector};

/// Largest N for which the dense 2N×2N path is attempted.
pub const DENSE_LIMIT: usize = 2000;
/// Condition estimates above this are reported as singular.
pub const MAX_CONDITION: f64 = 1e12;
/// Step of the central differences for dM/dλ and dV/dλ.
pub const PATH_STEP: f64 = 1e-5;

/// `M x = V` with `x = (dψ/dλ; dφ/dλ)`, plus the pieces needed for the curvature.
#[derive(Debug, Clone)]
pub struct DifferentialSystem {
    pub m: DMatrix<f64>,
    pub t: DMatrix<f64>,
    pub v: Vec<f64>,
    pub eta2: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl DifferentialSystem {
    pub fn n(&self) -> usize {
        self.v.len() / 2
    }
}

pub fn build_system(prior: &PriorDistribution) -> Result<DifferentialSystem> {
    let n = prior.len();
    if n > DENSE_LIMIT {
        return Err(Error::InvalidDimension(format!(
            "N = {n} exceeds the dense limit {DENSE_LIMIT}; use the two-value closed form"
        )));
    }
    let k = StdConstants::new(n);
    let eta = prior.probs();
    let inv_n = 1.0 / k.n;
    let g = (std::f64::consts::PI + 2.0 * (k.n - 1.0) * k.theta) / (k.n * (k.n - 1.0) * k.theta);
    let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };

    let m = DMatrix::from_fn(2 * n, 2 * n, |r, c| {
        let (i, j) = (r % n, c % n);
        match (r < n, c < n) {
            (true, true) => 2.0 * delta(i, j),
            (true, false) => 2.0 * inv_n - k.c1 * eta[j] + delta(i, j) * (k.c1 * k.n * eta[i] - 2.0),
            (false, true) => {
                delta(i, j) * (k.c1 * k.n * eta[i] - 2.0) - k.c1 * (eta[i] + eta[j]) + g
            }
            (false, false) => {
                2.0 * delta(i, j) + k.c1 * (inv_n - eta[i]) + k.c2 * (k.n * eta[i] * delta(i, j) - eta[j])
            }
        }
    });

    let blocks = std_blocks(prior);
    let mut t = DMatrix::zeros(2 * n, 2 * n);
    t.view_mut((0, 0), (n, n)).copy_from(&blocks.a_psipsi);
    t.view_mut((0, n), (n, n)).copy_from(&blocks.a_psiphi);
    t.view_mut((n, 0), (n, n)).copy_from(&blocks.b_phipsi);
    t.view_mut((n, n), (n, n)).copy_from(&blocks.b_phiphi);

    let psi0 = 1.0 / k.sqrt_n;
    let r = (k.n - 1.0).sqrt();
    let v_a: Vec<f64> = eta.iter().map(|e| (2.0 * psi0 - 2.0 * k.sqrt_n * e) / r).collect();
    let ratio = k.arcsec / k.theta;
    let mut v = v_a.clone();
    v.extend(v_a.iter().map(|x| ratio * x));

    let eta2 = vec![2.0 * psi0; 2 * n];
    let mut gamma = blocks.a_psilambda;
    gamma.extend(blocks.b_philambda);
    Ok(DifferentialSystem { m, t, v, eta2, gamma })
}

/// LU factorization with partial pivoting and a 1-norm condition estimate.
pub struct DenseSolver {
    lu: LU<f64, Dyn, Dyn>,
    l: DMatrix<f64>,
    u: DMatrix<f64>,
    pub condition: f64,
}

impl DenseSolver {
    pub fn new(a: DMatrix<f64>) -> Self {
        let norm1 = a.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
        let lu = LU::new(a);
        let l = lu.l();
        let u = lu.u();
        let mut solver = Self { lu, l, u, condition: f64::INFINITY };
        if solver.u.diagonal().iter().all(|d| *d != 0.0) {
            solver.condition = norm1 * solver.inverse_norm1_estimate();
        }
        solver
    }

    pub fn is_well_conditioned(&self) -> bool {
        self.condition.is_finite() && self.condition <= MAX_CONDITION
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = DVector::from_column_slice(b);
        self.lu.solve_mut(&mut x);
        x.as_slice().to_vec()
    }

    /// Solves `Aᵀ y = b` with the same factors: `Aᵀ = Uᵀ Lᵀ P`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let z = DVector::from_column_slice(b);
        let w = self.u.tr_solve_upper_triangular(&z).expect("nonsingular U");
        let mut y = self.l.tr_solve_lower_triangular(&w).expect("unit-diagonal L");
        self.lu.p().inv_permute_rows(&mut y);
        y.as_slice().to_vec()
    }

    pub fn inverse(&self) -> Option<DMatrix<f64>> {
        self.lu.try_inverse()
    }

    /// Hager's estimator with Higham's alternating-sign safeguard.
    fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.u.nrows();
        let mut x = vec![1.0 / n as f64; n];
        let mut estimate = 0.0;
        for _ in 0..5 {
            let y = self.solve(&x);
            estimate = y.iter().map(|v| v.abs()).sum::<f64>();
            let xi: Vec<f64> = y.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
            let z = self.solve_transpose(&xi);
            let (jmax, zmax) = z
                .iter()
                .enumerate()
                .map(|(i, v)| (i, v.abs()))
                .fold((0, f64::MIN), |acc, e| if e.1 > acc.1 { e } else { acc });
            if zmax <= dot(&z, &x) {
                break;
            }
            x = vec![0.0; n];
            x[jmax] = 1.0;
        }
        let alt: Vec<f64> = (0..n)
            .map(|i| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                sign * (1.0 + i as f64 / (n.max(2) - 1) as f64)
            })
            .collect();
        let y = self.solve(&alt);
        let alt_estimate = 2.0 * y.iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
        estimate.max(alt_estimate)
    }
}

fn factor(system: &DifferentialSystem) -> Result<DenseSolver> {
    let solver = DenseSolver::new(system.m.clone());
    if !solver.is_well_conditioned() {
        return Err(Error::SingularSystem { condition: solver.condition });
    }
    Ok(solver)
}

fn split(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len() / 2;
    (x[..n].to_vec(), x[n..].to_vec())
}

pub fn first_order_directions(system: &DifferentialSystem) -> Result<(Vec<f64>, Vec<f64>)> {
    let solver = factor(system)?;
    Ok(split(&solver.solve(&system.v)))
}

/// `M x` and `V` of the linearized conditions at an arbitrary unit (ψ, φ) and λ,
/// from the Hessian of the closed form. Matches the dense std-point system there.
pub fn general_position_mx_v(
    psi: &[f64],
    phi: &[f64],
    probs: &[f64],
    lambda: f64,
    x: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = probs.len();
    let grad = gradient_chain_rule(psi, phi, probs, lambda)?;
    let (xp, xf) = split(x);
    let hx = hessian_vector_product(psi, phi, probs, lambda, &Tangent { psi: xp.clone(), phi: xf.clone(), lambda: 0.0 })?;
    let mut unit_lambda = Tangent::zeros(n);
    unit_lambda.lambda = 1.0;
    let hl = hessian_vector_product(psi, phi, probs, lambda, &unit_lambda)?;

    let ga = dot(psi, &grad.psi);
    let gb = dot(phi, &grad.phi);
    let qa = project_out(psi, &hx.psi);
    let qb = project_out(phi, &hx.phi);
    let mut mx: Vec<f64> = (0..n).map(|i| ga * xp[i] - qa[i]).collect();
    mx.extend((0..n).map(|i| gb * xf[i] - qb[i]));
    let mut v = project_out(psi, &hl.psi);
    v.extend(project_out(phi, &hl.phi));
    Ok((mx, v))
}

/// The terms of S and an independent evaluation of the same quantity.
#[derive(Debug, Clone, Serialize)]
pub struct CurvatureBreakdown {
    /// `S` assembled from the second-order state correction, `xᵀTx`, `γᵀx` and `dc_λ/dλ`.
    pub s: f64,
    /// `⟨η|d²(ψ,φ)/dλ²⟩` from `M⁻¹(dV/dλ − (dM/dλ) x)`.
    pub second_order_term: f64,
    pub quadratic_term: f64,
    pub linear_term: f64,
    pub dc_lambda_term: f64,
    /// `xᵀ(T − 2I)x + 2γᵀx − 2`: the second derivative of the average success
    /// along the normalized first-order path, using only first-order data.
    pub s_path: f64,
    pub condition: f64,
    pub dpsi: Vec<f64>,
    pub dphi: Vec<f64>,
}

pub fn curvature_breakdown(prior: &PriorDistribution) -> Result<CurvatureBreakdown> {
    let system = build_system(prior)?;
    let solver = factor(&system)?;
    let x = solver.solve(&system.v);
    let (xp, xf) = split(&x);
    let n = prior.len();
    let (psi0, _, lambda_std) = std_point(n)?;

    let shifted = |sign: f64| -> Result<(Vec<f64>, Vec<f64>)> {
        let h = sign * PATH_STEP;
        let p = UnitRealVector::normalized(psi0.amps().iter().zip(&xp).map(|(a, d)| a + h * d).collect())?;
        let f = UnitRealVector::normalized(psi0.amps().iter().zip(&xf).map(|(a, d)| a + h * d).collect())?;
        general_position_mx_v(p.amps(), f.amps(), prior.probs(), lambda_std + h, &x)
    };
    let (mx_plus, v_plus) = shifted(1.0)?;
    let (mx_minus, v_minus) = shifted(-1.0)?;
    let rhs: Vec<f64> = (0..2 * n)
        .map(|i| ((v_plus[i] - v_minus[i]) - (mx_plus[i] - mx_minus[i])) / (2.0 * PATH_STEP))
        .collect();
    let second = solver.solve(&rhs);

    let tx = &system.t * DVector::from_column_slice(&x);
    let quadratic_term = dot(&x, tx.as_slice());
    let second_order_term = dot(&system.eta2, &second);
    let linear_term = dot(&x, &system.gamma);
    let dc_lambda_term = std_dc_lambda(prior, &xp, &xf, 1.0);
    let s = second_order_term + quadratic_term + linear_term + dc_lambda_term;
    let s_path = quadratic_term - 2.0 * dot(&x, &x) + 2.0 * linear_term - 2.0;
    Ok(CurvatureBreakdown {
        s,
        second_order_term,
        quadratic_term,
        linear_term,
        dc_lambda_term,
        s_path,
        condition: solver.condition,
        dpsi: xp,
        dphi: xf,
    })
}

#[allow(non_snake_case)]
pub fn curvature_S(prior: &PriorDistribution) -> Result<f64> {
    curvature_breakdown(prior).map(|b| b.s)
}

/// Which expansion of `ΔP̄(Δλ)` produced `delta_lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionOrder {
    Second,
    Third,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizationOutcome {
    pub s_factor: f64,
    pub delta_lambda: f64,
    pub expansion_order: ExpansionOrder,
    pub lambda_opt: f64,
    pub j_min: u64,
    pub j_standard: u64,
    pub psi_opt: UnitRealVector,
    pub phi_opt: UnitRealVector,
    /// Closed-form average success at `(psi_opt, phi_opt, λ(j_min))`.
    pub predicted_success: f64,
    /// `∂P̄/∂λ` at the optimized configuration; the λ optimality equation holds
    /// for a suitable multiplier and is only logged.
    pub lambda_gradient: f64,
    pub condition_estimate: Option<f64>,
}

pub(crate) fn check_failure_budget(delta_p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&delta_p) {
        return Err(Error::InvalidInput(format!("failure probability {delta_p} outside [0, 1)")));
    }
    Ok(())
}

/// Second-order reduction `Δλ = −√(2ΔP/|S|)`.
pub fn second_order_delta_lambda(s: f64, delta_p: f64) -> Result<f64> {
    if delta_p == 0.0 {
        return Ok(0.0);
    }
    if !(s < 0.0) {
        return Err(Error::UnboundedReduction);
    }
    Ok(-(2.0 * delta_p / s.abs()).sqrt())
}

/// Assembles the outcome for a given S, path direction and Δλ.
pub(crate) fn finish_outcome(
    prior: &PriorDistribution,
    s_factor: f64,
    dpsi: &[f64],
    dphi: &[f64],
    delta_lambda: f64,
    expansion_order: ExpansionOrder,
    condition_estimate: Option<f64>,
) -> Result<OptimizationOutcome> {
    let n = prior.len();
    let (psi0, _, lambda_std) = std_point(n)?;
    let lambda_opt = (lambda_std + delta_lambda).max(0.0);
    let j_min = j_of_lambda(n, lambda_opt)?.max(1);
    let shift = |d: &[f64]| UnitRealVector::normalized(psi0.amps().iter().zip(d).map(|(a, x)| a + delta_lambda * x).collect());
    let psi_opt = shift(dpsi)?;
    let phi_opt = shift(dphi)?;
    let predicted_success = average_success(&psi_opt, &phi_opt, prior, lambda_of_j(n, j_min))?;
    let lambda_gradient = gradient_chain_rule(psi_opt.amps(), phi_opt.amps(), prior.probs(), lambda_opt)?.lambda;
    log::debug!("dP/dlambda at the optimized configuration: {lambda_gradient:e}");
    Ok(OptimizationOutcome {
        s_factor,
        delta_lambda,
        expansion_order,
        lambda_opt,
        j_min,
        j_standard: standard_iterations(n),
        psi_opt,
        phi_opt,
        predicted_success,
        lambda_gradient,
        condition_estimate,
    })
}

/// Minimal oracle count for failure budget `delta_p` through the dense general path.
pub fn optimize(prior: &PriorDistribution, delta_p: f64) -> Result<OptimizationOutcome> {
    check_failure_budget(delta_p)?;
    let c = curvature_breakdown(prior)?;
    let delta_lambda = second_order_delta_lambda(c.s, delta_p)?;
    finish_outcome(prior, c.s, &c.dpsi, &c.dphi, delta_lambda, ExpansionOrder::Second, Some(c.condition))
}
