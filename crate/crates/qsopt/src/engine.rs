//! State-vector simulation of the generalized Grover iteration and the
//! closed-form success probabilities.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::num::{dot, theta};
use crate::state::{target_geometry, PriorDistribution, UnitRealVector, DEGENERATE_OVERLAP_TOL};

/// `λ = 2jθ` ties the integer iteration count to a continuous parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroverSchedule {
    pub n: usize,
    pub j: u64,
    pub lambda: f64,
}

impl GroverSchedule {
    pub fn from_j(n: usize, j: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDimension(format!("n = {n} < 2")));
        }
        Ok(Self { n, j, lambda: lambda_of_j(n, j) })
    }
}

pub fn apply_oracle(state: &UnitRealVector, t: usize) -> Result<UnitRealVector> {
    if t >= state.len() {
        return Err(Error::InvalidTarget { target: t, n: state.len() });
    }
    let mut v = state.amps().to_vec();
    v[t] = -v[t];
    Ok(UnitRealVector::from_unitary_image(v))
}

/// Reflection about `axis`: `2⟨axis|state⟩ axis − state`.
pub fn apply_diffusion(state: &UnitRealVector, axis: &UnitRealVector) -> Result<UnitRealVector> {
    if state.len() != axis.len() {
        return Err(Error::InvalidDimension(format!("state {} vs axis {}", state.len(), axis.len())));
    }
    let mut v = state.amps().to_vec();
    reflect_in_place(&mut v, axis.amps());
    Ok(UnitRealVector::from_unitary_image(v))
}

fn reflect_in_place(v: &mut [f64], axis: &[f64]) {
    let c = 2.0 * dot(axis, v);
    for (x, a) in v.iter_mut().zip(axis) {
        *x = c * a - *x;
    }
}

/// `G^j ψ` with `G = D_φ O_t`, two O(N) updates per step.
pub fn run_iterations(psi: &UnitRealVector, phi: &UnitRealVector, t: usize, j: u64) -> Result<UnitRealVector> {
    if psi.len() != phi.len() {
        return Err(Error::InvalidDimension(format!("state {} vs axis {}", psi.len(), phi.len())));
    }
    if t >= psi.len() {
        return Err(Error::InvalidTarget { target: t, n: psi.len() });
    }
    let mut v = psi.amps().to_vec();
    for _ in 0..j {
        v[t] = -v[t];
        reflect_in_place(&mut v, phi.amps());
    }
    Ok(UnitRealVector::from_unitary_image(v))
}

pub fn success_probability_exact(psi: &UnitRealVector, phi: &UnitRealVector, t: usize, j: u64) -> Result<f64> {
    let out = run_iterations(psi, phi, t, j)?;
    let a = out.amps()[t];
    Ok(a * a)
}

/// `⟨ψ|P_t|ψ⟩ sin²(±2jβ_t + φ0^t)`, the sign being the frame orientation.
pub fn success_probability_analytic(psi: &UnitRealVector, phi: &UnitRealVector, t: usize, j: u64) -> Result<f64> {
    let g = target_geometry(psi, phi, t)?;
    let amp = g.amplitude_after(j);
    Ok(amp * amp)
}

/// Amplitude `⟨t|G^j ψ⟩` written smoothly in the raw overlaps; `x` is the
/// rotation angle `λ arcsin(b)/θ`.
#[inline]
pub(crate) fn smooth_amplitude(a: f64, b: f64, c: f64, x: f64) -> f64 {
    let s = (1.0 - b * b).sqrt();
    let u = (c - a * b) / s;
    a * x.cos() + u * x.sin()
}

/// Average success over the prior at continuous `λ`.
pub fn average_success(psi: &UnitRealVector, phi: &UnitRealVector, prior: &PriorDistribution, lambda: f64) -> Result<f64> {
    if lambda < 0.0 {
        return Err(Error::InvalidInput(format!("lambda = {lambda} < 0")));
    }
    average_success_raw(psi.amps(), phi.amps(), prior.probs(), lambda)
}

/// Same closed form evaluated on vectors that need not be normalized; this is
/// the function whose partial derivatives the gradient module returns.
pub fn average_success_raw(psi: &[f64], phi: &[f64], probs: &[f64], lambda: f64) -> Result<f64> {
    let n = probs.len();
    if psi.len() != n || phi.len() != n {
        return Err(Error::InvalidDimension(format!(
            "prior {n}, state {}, axis {}",
            psi.len(),
            phi.len()
        )));
    }
    let th = theta(n);
    let c = dot(psi, phi);
    let mut total = 0.0;
    for t in 0..n {
        let p = probs[t];
        if p == 0.0 {
            continue;
        }
        let b = phi[t];
        if 1.0 - b.abs() <= DEGENERATE_OVERLAP_TOL {
            return Err(Error::DegenerateSubspace { target: t, overlap: b });
        }
        let amp = smooth_amplitude(psi[t], b, c, lambda * b.asin() / th);
        total += p * amp * amp;
    }
    Ok(total)
}

/// Average success from explicit simulation of every target with `p_t > 0`.
pub fn average_success_exact(psi: &UnitRealVector, phi: &UnitRealVector, prior: &PriorDistribution, j: u64) -> Result<f64> {
    if prior.len() != psi.len() {
        return Err(Error::InvalidDimension(format!("prior {} vs state {}", prior.len(), psi.len())));
    }
    let terms = crate::par::map_indexed(prior.len(), |t| {
        let p = prior.probs()[t];
        if p == 0.0 {
            Ok(0.0)
        } else {
            success_probability_exact(psi, phi, t, j).map(|s| p * s)
        }
    });
    let mut total = 0.0;
    for term in terms {
        total += term?;
    }
    Ok(total)
}

pub fn standard_grover_prob(n: usize, j: u64) -> f64 {
    ((2 * j + 1) as f64 * theta(n)).sin().powi(2)
}

pub fn lambda_of_j(n: usize, j: u64) -> f64 {
    2.0 * j as f64 * theta(n)
}

/// `ceil(λ / 2θ)`. Ratios within 1e-9 of an integer snap to it so that
/// `j_of_lambda(lambda_of_j(j)) == j` despite rounding.
pub fn j_of_lambda(n: usize, lambda: f64) -> Result<u64> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("lambda = {lambda} must be finite and >= 0")));
    }
    let r = lambda / (2.0 * theta(n));
    let nearest = r.round();
    let j = if (r - nearest).abs() <= 1e-9 * nearest.max(1.0) { nearest } else { r.ceil() };
    Ok(j as u64)
}

/// Iteration count of standard Grover search, `ceil((π/2 − θ)/2θ)`.
pub fn standard_iterations(n: usize) -> u64 {
    j_of_lambda(n, std::f64::consts::FRAC_PI_2 - theta(n)).expect("nonnegative")
}
