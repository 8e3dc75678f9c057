//! First and second variations of the average success probability.
//!
//! [`gradient_bundle`] evaluates the closed forms for `|a_ψ⟩`, `|b_φ⟩` and
//! `c_λ`. [`hessian_vector_product`] differentiates the smooth amplitude
//! `A_t = a_t cos x + u_t sin x` (with `x = λ arcsin(b_t)/θ`) a second time by
//! the chain rule through the per-target scalars `(a_t, b_t, c, λ)`; it costs
//! O(N) per product and is what the optimizer uses away from the std point.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::num::{dot, theta};
use crate::state::{uniform_state, PriorDistribution, UnitRealVector, DEGENERATE_OVERLAP_TOL};

/// `δP̄ = ⟨δψ|a_ψ⟩ + ⟨δφ|b_φ⟩ + c_λ δλ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientBundle {
    pub a_psi: Vec<f64>,
    pub b_phi: Vec<f64>,
    pub c_lambda: f64,
}

/// A point or direction in (ψ, φ, λ) space, unconstrained.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tangent {
    pub psi: Vec<f64>,
    pub phi: Vec<f64>,
    pub lambda: f64,
}

impl Tangent {
    pub fn zeros(n: usize) -> Self {
        Self { psi: vec![0.0; n], phi: vec![0.0; n], lambda: 0.0 }
    }

    pub fn dot(&self, other: &Tangent) -> f64 {
        dot(&self.psi, &other.psi) + dot(&self.phi, &other.phi) + self.lambda * other.lambda
    }
}

fn check_dims(psi: &[f64], phi: &[f64], probs: &[f64]) -> Result<()> {
    let n = probs.len();
    if psi.len() != n || phi.len() != n {
        return Err(Error::InvalidDimension(format!(
            "prior {n}, state {}, axis {}",
            psi.len(),
            phi.len()
        )));
    }
    Ok(())
}

fn check_overlap(t: usize, b: f64) -> Result<()> {
    if 1.0 - b.abs() <= DEGENERATE_OVERLAP_TOL {
        return Err(Error::DegenerateSubspace { target: t, overlap: b });
    }
    Ok(())
}

pub fn gradient_bundle(
    psi: &UnitRealVector,
    phi: &UnitRealVector,
    prior: &PriorDistribution,
    lambda: f64,
) -> Result<GradientBundle> {
    gradient_bundle_raw(psi.amps(), phi.amps(), prior.probs(), lambda)
}

/// The closed forms on arbitrary (not necessarily unit) vectors.
pub fn gradient_bundle_raw(psi: &[f64], phi: &[f64], probs: &[f64], lambda: f64) -> Result<GradientBundle> {
    check_dims(psi, phi, probs)?;
    let n = probs.len();
    let th = theta(n);
    let c = dot(psi, phi);
    let mut a_psi = vec![0.0; n];
    let mut b_phi = vec![0.0; n];
    let mut on_phi = 0.0;
    let mut on_psi = 0.0;
    let mut c_lambda = 0.0;
    for t in 0..n {
        let p = probs[t];
        if p == 0.0 {
            continue;
        }
        let (a, b) = (psi[t], phi[t]);
        check_overlap(t, b)?;
        let s = (1.0 - b * b).sqrt();
        let den = b * b - 1.0;
        let beta = b.asin();
        let big_x = 2.0 * lambda * beta / th;
        let (sx, cx) = big_x.sin_cos();

        a_psi[t] = p * (s * (2.0 * a * b - c) * sx + (a * (2.0 * b * b - 1.0) - b * c) * cx - a + b * c) / den;
        on_phi += p * (-a * s * sx + (c - a * b) * cx + a * b - c) / den;

        let rot = lambda
            * (s * (a * a * (2.0 * b * b - 1.0) - 2.0 * a * b * c + c * c) * sx
                + 2.0 * a * den * (a * b - c) * cx)
            / th;
        let shift = (a - b * c) * (a * s * sx + (a * b - c) * cx - a * b + c);
        b_phi[t] = p * (rot - shift) / (den * den);
        on_psi += p * (a * s * sx + (a * b - c) * cx - a * b + c) / (1.0 - b * b);

        c_lambda += p * beta
            * ((a * a * (1.0 - 2.0 * b * b) + 2.0 * a * b * c - c * c) * sx + 2.0 * a * s * (a * b - c) * cx)
            / (den * th);
    }
    for i in 0..n {
        a_psi[i] += on_phi * phi[i];
        b_phi[i] += on_psi * psi[i];
    }
    Ok(GradientBundle { a_psi, b_phi, c_lambda })
}

/// Derivatives of the per-target amplitude in the local variables
/// `(a, b, c, λ)`, indexed 0..4 in that order.
struct LocalJet {
    amp: f64,
    d1: [f64; 4],
    d2: [[f64; 4]; 4],
}

fn local_jet(a: f64, b: f64, c: f64, lambda: f64, th: f64) -> LocalJet {
    let s2 = 1.0 - b * b;
    let s = s2.sqrt();
    let s3 = s2 * s;
    let s5 = s3 * s2;
    let beta = b.asin();
    let kappa = lambda / th;
    let x = kappa * beta;
    let (sx, cx) = x.sin_cos();
    let u = (c - a * b) / s;
    let amp = a * cx + u * sx;
    let amp_x = -a * sx + u * cx;

    let xd = [0.0, kappa / s, 0.0, beta / th];
    let mut xdd = [[0.0; 4]; 4];
    xdd[1][1] = kappa * b / s3;
    xdd[1][3] = 1.0 / (th * s);
    xdd[3][1] = xdd[1][3];

    let ud = [-b / s, (b * c - a) / s3, 1.0 / s, 0.0];
    let mut udd = [[0.0; 4]; 4];
    udd[0][1] = -1.0 / s3;
    udd[1][0] = udd[0][1];
    udd[1][2] = b / s3;
    udd[2][1] = udd[1][2];
    udd[1][1] = c / s3 + 3.0 * b * (b * c - a) / s5;

    let is_a = |v: usize| if v == 0 { 1.0 } else { 0.0 };
    let mut d1 = [0.0; 4];
    let mut d2 = [[0.0; 4]; 4];
    for v in 0..4 {
        d1[v] = is_a(v) * cx + ud[v] * sx + amp_x * xd[v];
        for w in 0..4 {
            d2[v][w] = -is_a(v) * sx * xd[w] - is_a(w) * sx * xd[v]
                + cx * (ud[v] * xd[w] + ud[w] * xd[v])
                + udd[v][w] * sx
                - amp * xd[v] * xd[w]
                + amp_x * xdd[v][w];
        }
    }
    LocalJet { amp, d1, d2 }
}

/// Gradient of the same closed form by the chain rule through `(a, b, c, λ)`.
pub fn gradient_chain_rule(psi: &[f64], phi: &[f64], probs: &[f64], lambda: f64) -> Result<Tangent> {
    check_dims(psi, phi, probs)?;
    let n = probs.len();
    let th = theta(n);
    let c = dot(psi, phi);
    let mut g = Tangent::zeros(n);
    let mut along_c = 0.0;
    for t in 0..n {
        let p = probs[t];
        if p == 0.0 {
            continue;
        }
        check_overlap(t, phi[t])?;
        let jet = local_jet(psi[t], phi[t], c, lambda, th);
        let w = 2.0 * p * jet.amp;
        g.psi[t] += w * jet.d1[0];
        g.phi[t] += w * jet.d1[1];
        along_c += w * jet.d1[2];
        g.lambda += w * jet.d1[3];
    }
    for i in 0..n {
        g.psi[i] += along_c * phi[i];
        g.phi[i] += along_c * psi[i];
    }
    Ok(g)
}

/// `H·w` where `H` is the Hessian of the closed-form average success in
/// `(ψ, φ, λ)` at an arbitrary point.
pub fn hessian_vector_product(psi: &[f64], phi: &[f64], probs: &[f64], lambda: f64, w: &Tangent) -> Result<Tangent> {
    check_dims(psi, phi, probs)?;
    let n = probs.len();
    if w.psi.len() != n || w.phi.len() != n {
        return Err(Error::InvalidDimension("direction does not match the prior".into()));
    }
    let th = theta(n);
    let c = dot(psi, phi);
    let wc = dot(phi, &w.psi) + dot(psi, &w.phi);
    let mut out = Tangent::zeros(n);
    let mut along_c = 0.0;
    let mut cross = 0.0;
    for t in 0..n {
        let p = probs[t];
        if p == 0.0 {
            continue;
        }
        check_overlap(t, phi[t])?;
        let jet = local_jet(psi[t], phi[t], c, lambda, th);
        let gw = [w.psi[t], w.phi[t], wc, w.lambda];
        let da: f64 = (0..4).map(|v| jet.d1[v] * gw[v]).sum();
        let mut coef = [0.0; 4];
        for v in 0..4 {
            let hv: f64 = (0..4).map(|u| jet.d2[v][u] * gw[u]).sum();
            coef[v] = 2.0 * p * (da * jet.d1[v] + jet.amp * hv);
        }
        out.psi[t] += coef[0];
        out.phi[t] += coef[1];
        along_c += coef[2];
        out.lambda += coef[3];
        // second derivative of c = ⟨φ|ψ⟩ itself couples ψ and φ directly
        cross += 2.0 * p * jet.amp * jet.d1[2];
    }
    for i in 0..n {
        out.psi[i] += along_c * phi[i] + cross * w.phi[i];
        out.phi[i] += along_c * psi[i] + cross * w.psi[i];
    }
    Ok(out)
}

/// `(ψ0, ψ0, π/2 − θ)`: standard Grover search, where the average success is 1.
pub fn std_point(n: usize) -> Result<(UnitRealVector, UnitRealVector, f64)> {
    let s = uniform_state(n)?;
    Ok((s.clone(), s, FRAC_PI_2 - theta(n)))
}

/// Second-variation blocks at the std point.
#[derive(Debug, Clone, PartialEq)]
pub struct StdBlocks {
    pub a_psipsi: DMatrix<f64>,
    pub a_psiphi: DMatrix<f64>,
    pub b_phipsi: DMatrix<f64>,
    pub b_phiphi: DMatrix<f64>,
    pub a_psilambda: Vec<f64>,
    pub b_philambda: Vec<f64>,
    pub eta: Vec<f64>,
}

/// Scalars that recur in every std-point block.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StdConstants {
    pub n: f64,
    pub sqrt_n: f64,
    pub theta: f64,
    /// `arcsec √N = π/2 − θ`
    pub arcsec: f64,
    /// `π / ((N − 1) θ)`
    pub c1: f64,
    /// `π (π − 4θ) / (2 (N − 1) θ²)`
    pub c2: f64,
}

impl StdConstants {
    pub fn new(n: usize) -> Self {
        let nf = n as f64;
        let th = theta(n);
        Self {
            n: nf,
            sqrt_n: nf.sqrt(),
            theta: th,
            arcsec: FRAC_PI_2 - th,
            c1: PI / ((nf - 1.0) * th),
            c2: PI * (PI - 4.0 * th) / (2.0 * (nf - 1.0) * th * th),
        }
    }
}

pub fn std_blocks(prior: &PriorDistribution) -> StdBlocks {
    let n = prior.len();
    let k = StdConstants::new(n);
    let eta = prior.probs().to_vec();
    let inv_n = 1.0 / k.n;
    let psi0 = 1.0 / k.sqrt_n;
    let c_bb = PI * k.n * (PI - 4.0 * k.arcsec) / (2.0 * (k.n - 1.0) * k.theta * k.theta);
    let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };

    let a_psipsi = DMatrix::from_element(n, n, 2.0 * inv_n);
    let a_psiphi = DMatrix::from_fn(n, n, |i, j| {
        2.0 * (delta(i, j) + inv_n) + k.c1 * (eta[j] - k.n * eta[i] * delta(i, j))
    });
    let b_phipsi = DMatrix::from_fn(n, n, |i, j| {
        2.0 * (delta(i, j) + inv_n) + k.c1 * (eta[i] - k.n * eta[i] * delta(i, j))
    });
    let b_phiphi = DMatrix::from_fn(n, n, |i, j| {
        c_bb * eta[i] * delta(i, j) + k.c1 * (eta[i] + eta[j]) + 2.0 * inv_n
    });
    let r = (k.n - 1.0).sqrt();
    let a_psilambda = eta.iter().map(|e| (2.0 * psi0 - 2.0 * k.sqrt_n * e) / r).collect();
    let b_philambda = eta
        .iter()
        .map(|e| (2.0 * psi0 + 2.0 * k.sqrt_n * e) / r - k.sqrt_n * PI * e / (r * k.theta))
        .collect();
    StdBlocks { a_psipsi, a_psiphi, b_phipsi, b_phiphi, a_psilambda, b_philambda, eta }
}

/// `dc_λ` at the std point for a displacement `(dψ, dφ, dλ)`.
pub fn std_dc_lambda(prior: &PriorDistribution, dpsi: &[f64], dphi: &[f64], dlambda: f64) -> f64 {
    let k = StdConstants::new(prior.len());
    let r = (k.n - 1.0).sqrt();
    let eta = prior.probs();
    -2.0 * (k.sqrt_n * k.arcsec * dot(eta, dphi) / (r * k.theta) + k.sqrt_n * dot(eta, dpsi) / r + dlambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::average_success_raw;
    use crate::num::max_abs_diff;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        UnitRealVector::normalized(v).unwrap().into_inner()
    }

    fn random_prior(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let s: f64 = w.iter().sum();
        w.iter().map(|x| x / s).collect()
    }

    #[test]
    fn closed_forms_agree_with_chain_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(3..20);
            let psi = random_unit(&mut rng, n);
            let phi = random_unit(&mut rng, n);
            let probs = random_prior(&mut rng, n);
            let lambda = rng.random_range(0.0..3.0);
            let g = gradient_bundle_raw(&psi, &phi, &probs, lambda).unwrap();
            let h = gradient_chain_rule(&psi, &phi, &probs, lambda).unwrap();
            assert!(max_abs_diff(&g.a_psi, &h.psi) < 1e-11);
            assert!(max_abs_diff(&g.b_phi, &h.phi) < 1e-11);
            assert!((g.c_lambda - h.lambda).abs() < 1e-11);
        }
    }

    #[test]
    fn gradient_vanishes_at_std_point() {
        let (s, f, l) = std_point(16).unwrap();
        let prior = PriorDistribution::new((1..=16).map(|i| i as f64 / 136.0).collect()).unwrap();
        let g = gradient_bundle(&s, &f, &prior, l).unwrap();
        for (x, y) in g.a_psi.iter().zip(s.amps()) {
            assert!((x - 2.0 * y).abs() < 1e-10);
        }
        for (x, y) in g.b_phi.iter().zip(s.amps()) {
            assert!((x - 2.0 * y).abs() < 1e-10);
        }
        assert!(g.c_lambda.abs() < 1e-10);
    }

    #[test]
    fn std_point_values() {
        assert!((std_point(4).unwrap().2 - PI / 3.0).abs() < 1e-15);
        assert!((std_point(2).unwrap().2 - PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn hessian_product_matches_gradient_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.random_range(3..12);
            let psi = random_unit(&mut rng, n);
            let phi = random_unit(&mut rng, n);
            let probs = random_prior(&mut rng, n);
            let lambda = rng.random_range(0.1..2.5);
            let dir = Tangent {
                psi: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
                phi: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
                lambda: rng.random_range(-1.0..1.0),
            };
            let hv = hessian_vector_product(&psi, &phi, &probs, lambda, &dir).unwrap();
            let h = 1e-6;
            let shifted = |sg: f64| {
                let p: Vec<f64> = psi.iter().zip(&dir.psi).map(|(a, d)| a + sg * h * d).collect();
                let f: Vec<f64> = phi.iter().zip(&dir.phi).map(|(a, d)| a + sg * h * d).collect();
                gradient_chain_rule(&p, &f, &probs, lambda + sg * h * dir.lambda).unwrap()
            };
            let (gp, gm) = (shifted(1.0), shifted(-1.0));
            for i in 0..n {
                assert!(((gp.psi[i] - gm.psi[i]) / (2.0 * h) - hv.psi[i]).abs() < 1e-6);
                assert!(((gp.phi[i] - gm.phi[i]) / (2.0 * h) - hv.phi[i]).abs() < 1e-6);
            }
            assert!(((gp.lambda - gm.lambda) / (2.0 * h) - hv.lambda).abs() < 1e-6);
        }
    }

    #[test]
    fn std_blocks_match_hessian_at_std_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [4, 9, 25] {
            let probs = random_prior(&mut rng, n);
            let prior = PriorDistribution::new(probs.clone()).unwrap();
            let blocks = std_blocks(&prior);
            let (s, _, l) = std_point(n).unwrap();
            let psi0 = s.amps();
            for col in 0..n {
                let mut e = Tangent::zeros(n);
                e.psi[col] = 1.0;
                let h = hessian_vector_product(psi0, psi0, &probs, l, &e).unwrap();
                for row in 0..n {
                    assert!((h.psi[row] - blocks.a_psipsi[(row, col)]).abs() < 1e-10);
                    assert!((h.phi[row] - blocks.b_phipsi[(row, col)]).abs() < 1e-10);
                }
                let mut e = Tangent::zeros(n);
                e.phi[col] = 1.0;
                let h = hessian_vector_product(psi0, psi0, &probs, l, &e).unwrap();
                for row in 0..n {
                    assert!((h.psi[row] - blocks.a_psiphi[(row, col)]).abs() < 1e-10);
                    assert!((h.phi[row] - blocks.b_phiphi[(row, col)]).abs() < 1e-10);
                }
            }
            let mut e = Tangent::zeros(n);
            e.lambda = 1.0;
            let h = hessian_vector_product(psi0, psi0, &probs, l, &e).unwrap();
            assert!(max_abs_diff(&h.psi, &blocks.a_psilambda) < 1e-10);
            assert!(max_abs_diff(&h.phi, &blocks.b_philambda) < 1e-10);
            assert!((h.lambda + 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn dc_lambda_matches_hessian_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 12;
        let probs = random_prior(&mut rng, n);
        let prior = PriorDistribution::new(probs.clone()).unwrap();
        let (s, _, l) = std_point(n).unwrap();
        let d = Tangent {
            psi: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            phi: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            lambda: 0.3,
        };
        let h = hessian_vector_product(s.amps(), s.amps(), &probs, l, &d).unwrap();
        // the λ row of the Hessian is dc_λ only along directions tangent to the spheres
        let tangent_psi = crate::num::project_out(s.amps(), &d.psi);
        let tangent_phi = crate::num::project_out(s.amps(), &d.phi);
        let t = Tangent { psi: tangent_psi.clone(), phi: tangent_phi.clone(), lambda: d.lambda };
        let ht = hessian_vector_product(s.amps(), s.amps(), &probs, l, &t).unwrap();
        let closed = std_dc_lambda(&prior, &tangent_psi, &tangent_phi, d.lambda);
        assert!((ht.lambda - closed).abs() < 1e-10);
        assert!(h.lambda.is_finite());
    }

    #[test]
    fn uniform_prior_has_no_lambda_coupling() {
        let prior = PriorDistribution::uniform(8).unwrap();
        let b = std_blocks(&prior);
        assert!(b.a_psilambda.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn eta_is_the_prior() {
        let probs: Vec<f64> = (0..10).map(|i| if i < 2 { 0.3 } else { 0.05 }).collect();
        let prior = PriorDistribution::new(probs.clone()).unwrap();
        assert_eq!(std_blocks(&prior).eta, probs);
    }

    #[test]
    fn zero_lambda_single_target() {
        let mut probs = vec![0.0; 6];
        probs[2] = 1.0;
        let s = uniform_state(6).unwrap();
        let g = gradient_bundle_raw(s.amps(), s.amps(), &probs, 0.0).unwrap();
        let h = 1e-5;
        let f = |l: f64| average_success_raw(s.amps(), s.amps(), &probs, l).unwrap();
        assert!((g.c_lambda - (f(h) - f(-h)) / (2.0 * h)).abs() < 1e-8);
    }
}
