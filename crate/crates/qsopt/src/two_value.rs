//! Closed forms for the two-value prior: K elements with probability `p`, the
//! other `N − K` with `q = (1 − Kp)/(N − K)`.
//!
//! Every N×N block that appears (M, M⁻¹, T) has the shape
//! `diag(d_K I_K, d_R I_{N−K}) + [c_KK E, c_KR E; c_RK E, c_RR E]` with `E` the
//! all-ones matrix, which [`TwoBlockMatrix`] stores in O(1).

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::engine::{lambda_of_j, run_iterations};
use crate::error::{Error, Result};
use crate::gradient::StdConstants;
use crate::num::theta;
use crate::optimizer::{check_failure_budget, finish_outcome, second_order_delta_lambda, ExpansionOrder, OptimizationOutcome};
use crate::state::{PriorDistribution, UnitRealVector};

/// Smallest magnitude accepted for a denominator in the closed forms.
const DENOM_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoValueSpec {
    pub n: usize,
    pub k: usize,
    pub p: f64,
    pub q: f64,
}

impl TwoValueSpec {
    pub fn new(n: usize, k: usize, p: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDimension(format!("n = {n} < 2")));
        }
        if k < 1 || k >= n {
            return Err(Error::InvalidInput(format!("need 1 <= k < n, got k = {k}, n = {n}")));
        }
        let kp = k as f64 * p;
        if !(p >= 0.0) || kp > 1.0 + DENOM_FLOOR {
            return Err(Error::InvalidInput(format!("need 0 <= p and k p <= 1, got p = {p}, k = {k}")));
        }
        let q = if (1.0 - kp).abs() <= DENOM_FLOOR { 0.0 } else { (1.0 - kp) / (n - k) as f64 };
        Ok(Self { n, k, p, q })
    }

    pub fn prior(&self) -> Result<PriorDistribution> {
        PriorDistribution::new(self.expand(self.p, self.q))
    }

    /// An N-vector with value `in_k` on the first K entries and `rest` elsewhere.
    pub fn expand(&self, in_k: f64, rest: f64) -> Vec<f64> {
        (0..self.n).map(|i| if i < self.k { in_k } else { rest }).collect()
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }

    fn kf(&self) -> f64 {
        self.k as f64
    }

    /// `−2KNp + K + N²p`, N times the denominator of S.
    fn path_denominator(&self) -> f64 {
        let (n, k, p) = (self.nf(), self.kf(), self.p);
        -2.0 * k * n * p + k + n * n * p
    }
}

fn nonzero(value: f64, factor: &str) -> Result<f64> {
    if value.abs() < DENOM_FLOOR {
        Err(Error::degenerate(factor))
    } else {
        Ok(value)
    }
}

/// `S = 2Np(Kp − 1) / (−2Kp + K/N + Np)`.
pub fn s_factor(spec: &TwoValueSpec) -> Result<f64> {
    let (n, k, p) = (spec.nf(), spec.kf(), spec.p);
    // with Kp − 1 = −(N − K)q = −x/(Np) the denominator is x + KN(p − 1/N)²,
    // so S is exactly −2 at p = 1/N, exactly −0 at Kp = 1 and never below −2
    let x = n * p * (n - k) * spec.q;
    let den = nonzero(x + k * n * (p - 1.0 / n).powi(2), "-2Kp + K/N + Np")?;
    Ok(-2.0 * (x / den))
}

/// Oracle calls saved at failure budget `delta_p` (negative), `Δλ / 2θ`.
pub fn delta_j(spec: &TwoValueSpec, delta_p: f64) -> Result<f64> {
    if !(delta_p >= 0.0) {
        return Err(Error::InvalidInput(format!("delta_p = {delta_p} < 0")));
    }
    if delta_p == 0.0 {
        return Ok(0.0);
    }
    let s = s_factor(spec)?;
    if s == 0.0 {
        return Err(Error::UnboundedReduction);
    }
    Ok(second_order_delta_lambda(s, delta_p)? / (2.0 * theta(spec.n)))
}

/// N×N matrix `diag(d_K, d_R) + block-constant(c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoBlockMatrix {
    pub n: usize,
    pub k: usize,
    pub diag: [f64; 2],
    pub ones: [[f64; 2]; 2],
}

impl TwoBlockMatrix {
    fn block(&self, i: usize) -> usize {
        usize::from(i >= self.k)
    }

    fn sizes(&self) -> [f64; 2] {
        [self.k as f64, (self.n - self.k) as f64]
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let (bi, bj) = (self.block(i), self.block(j));
        self.ones[bi][bj] + if i == j { self.diag[bi] } else { 0.0 }
    }

    pub fn materialize(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.entry(i, j))
    }

    pub fn mul(&self, other: &TwoBlockMatrix) -> TwoBlockMatrix {
        let sz = self.sizes();
        let mut ones = [[0.0; 2]; 2];
        for bi in 0..2 {
            for bj in 0..2 {
                ones[bi][bj] = self.diag[bi] * other.ones[bi][bj]
                    + self.ones[bi][bj] * other.diag[bj]
                    + (0..2).map(|m| self.ones[bi][m] * other.ones[m][bj] * sz[m]).sum::<f64>();
            }
        }
        TwoBlockMatrix {
            n: self.n,
            k: self.k,
            diag: [self.diag[0] * other.diag[0], self.diag[1] * other.diag[1]],
            ones,
        }
    }

    pub fn add(&self, other: &TwoBlockMatrix) -> TwoBlockMatrix {
        let mut out = *self;
        for b in 0..2 {
            out.diag[b] += other.diag[b];
            for c in 0..2 {
                out.ones[b][c] += other.ones[b][c];
            }
        }
        out
    }
}

/// A 2N×2N matrix as a 2×2 grid of [`TwoBlockMatrix`] blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockGrid {
    pub blocks: [[TwoBlockMatrix; 2]; 2],
}

impl BlockGrid {
    pub fn materialize(&self) -> DMatrix<f64> {
        let n = self.blocks[0][0].n;
        let mut out = DMatrix::zeros(2 * n, 2 * n);
        for r in 0..2 {
            for c in 0..2 {
                out.view_mut((r * n, c * n), (n, n)).copy_from(&self.blocks[r][c].materialize());
            }
        }
        out
    }

    pub fn mul(&self, other: &BlockGrid) -> BlockGrid {
        let b = |r: usize, c: usize| self.blocks[r][0].mul(&other.blocks[0][c]).add(&self.blocks[r][1].mul(&other.blocks[1][c]));
        BlockGrid { blocks: [[b(0, 0), b(0, 1)], [b(1, 0), b(1, 1)]] }
    }
}

/// The linearized-condition matrix M for the two-value prior, written directly
/// in block form (independent of the dense general assembly).
pub fn system_matrix_blocks(spec: &TwoValueSpec) -> BlockGrid {
    let kc = StdConstants::new(spec.n);
    let (n, p, q) = (kc.n, spec.p, spec.q);
    let (c1, c2) = (kc.c1, kc.c2);
    let g = (PI + 2.0 * (n - 1.0) * kc.theta) / (n * (n - 1.0) * kc.theta);
    let mk = |diag: [f64; 2], ones: [[f64; 2]; 2]| TwoBlockMatrix { n: spec.n, k: spec.k, diag, ones };

    let a_psi = mk([2.0, 2.0], [[0.0; 2]; 2]);
    let fp = 2.0 / n - c1 * p;
    let fq = 2.0 / n - c1 * q;
    let a_phi = mk([-n * fp, -n * fq], [[fp, fq], [fp, fq]]);
    let b_psi = mk(
        [-2.0 + c1 * n * p, -2.0 + c1 * n * q],
        [[g - 2.0 * c1 * p, g - c1 * (p + q)], [g - c1 * (p + q), g - 2.0 * c1 * q]],
    );
    let b_phi = mk(
        [2.0 + c2 * n * p, 2.0 + c2 * n * q],
        [
            [c1 * (1.0 / n - p) - c2 * p, c1 * (1.0 / n - p) - c2 * q],
            [c1 * (1.0 / n - q) - c2 * p, c1 * (1.0 / n - q) - c2 * q],
        ],
    );
    BlockGrid { blocks: [[a_psi, a_phi], [b_psi, b_phi]] }
}

/// Coefficients of the closed-form M⁻¹. `alpha[i] = [α_{i+1}(p), α_{i+1}(q)]`,
/// `beta[i] = [β_{i+1}(p,q), β_{i+1}(q,p)]`, `gamma[i]` likewise (γ₁ and γ₃ take
/// no arguments and are repeated).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinvCoefficients {
    pub alpha: [[f64; 2]; 4],
    pub beta: [[f64; 2]; 4],
    pub gamma: [[f64; 2]; 4],
}

pub fn minv_coefficients(spec: &TwoValueSpec) -> Result<MinvCoefficients> {
    let n = spec.nf();
    let (p, q) = (spec.p, spec.q);
    let th = theta(spec.n);
    let pi2 = PI * PI;
    let m1 = n - 1.0;
    let sum = nonzero(n * (p + q) - 1.0, "N(p+q) - 1")?;
    let pq1 = nonzero(p + q - 1.0, "p + q - 1")?;
    let big_d = 2.0 * pi2 * n * n * pq1 * sum;
    for (x, name) in [(p, "p"), (q, "q")] {
        nonzero(x, name)?;
        nonzero(n * (x - 1.0) + 1.0, &format!("N({name} - 1) + 1"))?;
    }
    let poly = |x: f64, y: f64| n * x * x - n * p * q - x - n * y * y + n * y;
    let nx1 = |x: f64| n * (x - 1.0) + 1.0;
    let den_b = |x: f64| 2.0 * pi2 * n * n * x * nx1(x) * pq1 * sum;

    let alpha1 = |x: f64| -m1 * (pi2 * n * x - 4.0 * PI * n * x * th + 4.0 * m1 * th * th) / (2.0 * pi2 * n * x * nx1(x));
    let beta1 = |x: f64, y: f64| {
        (-4.0 * m1 * m1 * th * th * poly(x, y) - 4.0 * m1 * th * PI * x * nx1(y) * sum
            + pi2 * x * sum * (n * (n * x * x + n * p * q - 2.0 * n * x + x + 1.0) - 1.0))
            / den_b(x)
    };
    let gamma1 = (PI * sum - 2.0 * m1 * th).powi(2) / big_d;

    let alpha2 = |x: f64| m1 * th * (PI * n * x - 2.0 * m1 * th) / (pi2 * n * x * nx1(x));
    let beta2 = |x: f64, y: f64| {
        (-2.0 * PI * m1 * th * x * (n * (2.0 * n * x * x + n * p * q - 3.0 * n * x + n * y * y - n * y + x + 3.0) - 3.0)
            - 4.0 * m1 * m1 * th * th * poly(x, y)
            + pi2 * x * nx1(x) * (n * x - 1.0) * (n * (p + q + 1.0) - 2.0))
            / den_b(x)
    };
    let gamma2 = |x: f64, y: f64| {
        (pi2 * (n * x - 1.0) * (n * (p + q + 1.0) - 2.0) + 2.0 * m1 * th * (3.0 * PI - PI * n * (3.0 * x + y) + 2.0 * m1 * th))
            / big_d
    };

    let alpha3 = alpha2;
    let beta3 = |x: f64, y: f64| {
        -m1 * th / (pi2 * n * n * x * nx1(x) * sum * pq1) * (PI * x * nx1(y) * sum + 2.0 * m1 * th * poly(x, y))
    };
    let gamma3 = m1 * th * (-PI * n * (p + q) + 2.0 * m1 * th + PI) / (pi2 * n * n * pq1 * sum);

    let alpha4 = |x: f64| -2.0 * m1 * m1 * th * th / (pi2 * n * x * nx1(x));
    let beta4 = |x: f64, y: f64| {
        -4.0 * m1 * th * (m1 * th * poly(x, y) + PI * x * nx1(x) * (n * x - 1.0)) / den_b(x) + y / (2.0 * sum)
    };
    let gamma4 = |x: f64, y: f64| 4.0 * m1 * th * (-PI * n * x + m1 * th + PI) / big_d + y / (2.0 * sum);

    Ok(MinvCoefficients {
        alpha: [[alpha1(p), alpha1(q)], [alpha2(p), alpha2(q)], [alpha3(p), alpha3(q)], [alpha4(p), alpha4(q)]],
        beta: [[beta1(p, q), beta1(q, p)], [beta2(p, q), beta2(q, p)], [beta3(p, q), beta3(q, p)], [beta4(p, q), beta4(q, p)]],
        gamma: [[gamma1, gamma1], [gamma2(p, q), gamma2(q, p)], [gamma3, gamma3], [gamma4(p, q), gamma4(q, p)]],
    })
}

/// M⁻¹ in block form from the closed-form coefficients.
pub fn minv_closed_form(spec: &TwoValueSpec) -> Result<BlockGrid> {
    let c = minv_coefficients(spec)?;
    let mk = |i: usize| TwoBlockMatrix {
        n: spec.n,
        k: spec.k,
        diag: c.alpha[i],
        ones: [[c.beta[i][0], c.gamma[i][0]], [c.gamma[i][1], c.beta[i][1]]],
    };
    Ok(BlockGrid { blocks: [[mk(0), mk(1)], [mk(2), mk(3)]] })
}

/// Scalar `d` with `dψ/dλ = dφ/dλ = d·[(K − N) on the K block; K elsewhere]`.
pub fn direction_scale(spec: &TwoValueSpec) -> Result<f64> {
    let n = spec.nf();
    let den = nonzero(PI * spec.path_denominator(), "-2KNp + K + N^2 p")?;
    Ok(2.0 * ((n - 1.0) / n).sqrt() * (n * spec.p - 1.0) * theta(spec.n) / den)
}

/// The two distinct entries `(K block, rest)` of the first-order direction.
pub fn direction_entries(spec: &TwoValueSpec) -> Result<(f64, f64)> {
    let d = direction_scale(spec)?;
    Ok((d * (spec.kf() - spec.nf()), d * spec.kf()))
}

pub fn first_order_direction_closed(spec: &TwoValueSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    let (dk, dr) = direction_entries(spec)?;
    let v = spec.expand(dk, dr);
    Ok((v.clone(), v))
}

/// Third-order coefficients `(G, b)` of `dP̄ = S dλ²/2 + G dλ³/6` and
/// `dλ = −√(2 dP̄_fail/|S|) + b dP̄_fail`, where `dP̄_fail ≥ 0` is the allowed
/// failure probability. `b = G/(3S²)`.
pub fn higher_order_coeffs(spec: &TwoValueSpec) -> Result<(f64, f64)> {
    let (n, k, p) = (spec.nf(), spec.kf(), spec.p);
    nonzero(p, "p")?;
    let one_minus_kp = nonzero((n - k) * spec.q, "1 - Kp")?;
    let den = nonzero(spec.path_denominator(), "-2KNp + K + N^2 p")?;
    let th = theta(spec.n);
    let common = k * (n - k) * (n - 2.0) * (n * p - 1.0).powi(2) * th / (PI * (n - 1.0).sqrt());
    let g = 12.0 * n * n * p * one_minus_kp * common / den.powi(3);
    let b = common / (n * n * p * one_minus_kp * den);
    Ok((g, b))
}

/// `−√(2 dpbar/|S|) + b dpbar`.
pub fn dlambda_third_order(spec: &TwoValueSpec, dpbar: f64) -> Result<f64> {
    if !(dpbar >= 0.0) {
        return Err(Error::InvalidInput(format!("dpbar = {dpbar} < 0")));
    }
    if dpbar == 0.0 {
        return Ok(0.0);
    }
    let s = s_factor(spec)?;
    let (_, b) = higher_order_coeffs(spec)?;
    Ok(second_order_delta_lambda(s, dpbar)? + b * dpbar)
}

/// `2/(|S| b²)`, the failure-probability scale beyond which the expansion in
/// `dP̄` stops being useful; `+∞` when `b = 0`.
pub fn valid_range(spec: &TwoValueSpec) -> Result<f64> {
    let s = s_factor(spec)?;
    let (_, b) = higher_order_coeffs(spec)?;
    if b == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(2.0 / (s.abs() * b * b))
}

/// Failure probability `1 − P̄` on the first-order path at `λ_std + dλ`.
///
/// Along the path ψ = φ is a unit vector, so each target's in-plane weight
/// `a² + u²` is exactly 1 and its failure is `(a sin x − u cos x)²`. Summing
/// those over one representative per block keeps full relative precision even
/// where `1 − P̄` is far below machine epsilon.
pub fn path_failure(spec: &TwoValueSpec, dlambda: f64) -> Result<f64> {
    let (dk, dr) = direction_entries(spec)?;
    let (n, k) = (spec.nf(), spec.kf());
    let base = 1.0 / n.sqrt();
    let (mut vk, mut vr) = (base + dlambda * dk, base + dlambda * dr);
    let norm = (k * vk * vk + (n - k) * vr * vr).sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::InvalidGrid(format!("path state vanishes at dlambda = {dlambda}")));
    }
    vk /= norm;
    vr /= norm;
    let th = theta(spec.n);
    let lambda = FRAC_PI_2 - th + dlambda;
    let mut total = 0.0;
    for (a, prob, count) in [(vk, spec.p, k), (vr, spec.q, n - k)] {
        if prob > 0.0 {
            let x = lambda * a.asin() / th;
            let u = (1.0 - a * a).sqrt();
            total += count * prob * (a * x.sin() - u * x.cos()).powi(2);
        }
    }
    Ok(total)
}

/// Average success on the first-order path, `1 − path_failure`.
pub fn path_success(spec: &TwoValueSpec, dlambda: f64) -> Result<f64> {
    Ok(1.0 - path_failure(spec, dlambda)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioRow {
    pub dlambda: f64,
    pub dpbar: f64,
    pub ratio: f64,
}

/// `dP̄/dλ²` along the first-order optimal path; tends to `S/2` as `dλ → 0`.
pub fn exact_ratio_scan(spec: &TwoValueSpec, dlambda_grid: &[f64]) -> Result<Vec<RatioRow>> {
    if dlambda_grid.is_empty() {
        return Err(Error::InvalidGrid("empty dlambda grid".into()));
    }
    let lambda_std = FRAC_PI_2 - theta(spec.n);
    dlambda_grid
        .iter()
        .map(|&dl| {
            if dl == 0.0 || !dl.is_finite() || dl.abs() >= lambda_std {
                return Err(Error::InvalidGrid(format!("dlambda = {dl} must be nonzero and below lambda_std")));
            }
            let dpbar = -path_failure(spec, dl)?;
            Ok(RatioRow { dlambda: dl, dpbar, ratio: dpbar / (dl * dl) })
        })
        .collect()
}

/// Solves `1 − P̄(dλ) = dpbar` for `dλ < 0` on the first-order path by bisection.
pub fn invert_path_curve(spec: &TwoValueSpec, dpbar: f64) -> Result<f64> {
    if !(dpbar > 0.0) {
        return Err(Error::InvalidInput(format!("dpbar = {dpbar} must be positive")));
    }
    let lambda_std = FRAC_PI_2 - theta(spec.n);
    let f = |dl: f64| path_failure(spec, dl).map(|p| p - dpbar);
    let s = s_factor(spec)?;
    let mut lo = -(2.0 * dpbar / s.abs()).sqrt().min(lambda_std);
    while f(lo)? < 0.0 {
        if lo <= -lambda_std {
            return Err(Error::InvalidInput(format!("failure {dpbar} not reached before lambda = 0")));
        }
        lo = (2.0 * lo).max(-lambda_std);
    }
    let mut hi = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Exact average success from simulating one target per block (all targets
/// inside a block are equivalent under permutations fixing ψ and φ).
pub fn simulated_success(spec: &TwoValueSpec, psi: &UnitRealVector, phi: &UnitRealVector, j: u64) -> Result<f64> {
    let mut total = 0.0;
    for (t, prob, count) in [(0, spec.p, spec.k), (spec.k, spec.q, spec.n - spec.k)] {
        if prob > 0.0 {
            let out = run_iterations(psi, phi, t, j)?;
            total += count as f64 * prob * out.amps()[t].powi(2);
        }
    }
    Ok(total)
}

/// Everything the closed forms give for one spec.
#[derive(Debug, Clone, Serialize)]
pub struct TwoValueClosedForm {
    pub s: f64,
    pub g: f64,
    pub b: f64,
    pub direction_k: f64,
    pub direction_rest: f64,
    pub valid_range: f64,
    /// Absent when a coefficient denominator vanishes (e.g. p = 0).
    pub minv_coeffs: Option<MinvCoefficients>,
}

pub fn closed_form(spec: &TwoValueSpec) -> Result<TwoValueClosedForm> {
    let s = s_factor(spec)?;
    let (g, b) = higher_order_coeffs(spec)?;
    let (direction_k, direction_rest) = direction_entries(spec)?;
    Ok(TwoValueClosedForm {
        s,
        g,
        b,
        direction_k,
        direction_rest,
        valid_range: valid_range(spec)?,
        minv_coeffs: minv_coefficients(spec).ok(),
    })
}

/// Optimization through the closed forms, valid for any N. Uses the
/// third-order `Δλ` inside the effective range and the second-order one
/// beyond it.
pub fn optimize_closed_form(spec: &TwoValueSpec, delta_p: f64) -> Result<OptimizationOutcome> {
    check_failure_budget(delta_p)?;
    let prior = spec.prior()?;
    let s = s_factor(spec)?;
    let (dpsi, dphi) = first_order_direction_closed(spec)?;
    if delta_p == 0.0 {
        return finish_outcome(&prior, s, &dpsi, &dphi, 0.0, ExpansionOrder::Second, None);
    }
    let second = second_order_delta_lambda(s, delta_p)?;
    let range = valid_range(spec)?;
    let (delta_lambda, order) = if delta_p < range {
        if delta_p > 0.1 * range {
            log::warn!("failure budget {delta_p} exceeds a tenth of the effective range {range:e}");
        }
        (dlambda_third_order(spec, delta_p)?, ExpansionOrder::Third)
    } else {
        log::warn!("failure budget {delta_p} beyond the effective range {range:e}; using the second-order reduction");
        (second, ExpansionOrder::Second)
    };
    finish_outcome(&prior, s, &dpsi, &dphi, delta_lambda, order, None)
}

/// Average success at `j` iterations for the outcome of [`optimize_closed_form`].
pub fn outcome_simulated_success(spec: &TwoValueSpec, out: &OptimizationOutcome) -> Result<f64> {
    simulated_success(spec, &out.psi_opt, &out.phi_opt, out.j_min)
}

/// `λ` of `j_min`, for reports.
pub fn outcome_lambda(spec: &TwoValueSpec, out: &OptimizationOutcome) -> f64 {
    lambda_of_j(spec.n, out.j_min)
}

/// The third-order coefficients and the first-order direction exactly as
/// originally printed, kept so reports can show which variant the exact curve
/// supports.
pub mod printed {
    use super::*;

    /// Printed `(G, B)`; `B` is in the convention `dλ = −√(2dP̄/S) + B dP̄` with
    /// `dP̄ < 0`, so the failure-probability coefficient is `−B`.
    pub fn higher_order_coeffs(spec: &TwoValueSpec) -> Result<(f64, f64)> {
        let (n, k, p) = (spec.nf(), spec.kf(), spec.p);
        let th = theta(spec.n);
        let den = nonzero(-2.0 * k * n * p + k + n * p, "-2KNp + K + Np")?;
        let knp1 = nonzero(k * n * p - 1.0, "KNp - 1")?;
        let np = nonzero(n * p, "Np")?;
        let g = -12.0 * (k - 1.0) * k * (n - 2.0) * n * p * (n * p - 1.0).powi(2) * knp1 * th
            / (PI * (n - 1.0).sqrt() * den.powi(3));
        let b = -(k - 1.0) * k * (n - 2.0) * (n * p - 1.0).powi(2) * th / (PI * (n - 1.0).sqrt() * np * den * knp1);
        Ok((g, b))
    }

    pub fn dlambda_third_order(spec: &TwoValueSpec, dpbar: f64) -> Result<f64> {
        let s = s_factor(spec)?;
        let (_, b) = higher_order_coeffs(spec)?;
        Ok(second_order_delta_lambda(s, dpbar)? - b * dpbar)
    }

    /// Printed first-order direction scale, which carries an extra factor K.
    pub fn direction_scale(spec: &TwoValueSpec) -> Result<f64> {
        Ok(spec.kf() * super::direction_scale(spec)?)
    }
}
