//! Real amplitude vectors, priors over the database and the per-target
//! two-dimensional geometry of the generalized Grover iteration.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::num::{dot, fsum, norm};

/// Tolerance on the norm of a [`UnitRealVector`] and the sum of a prior.
pub const UNIT_TOL: f64 = 1e-12;
/// `|b_t|` closer than this to 1 makes span{t, φ} one-dimensional.
pub const DEGENERATE_OVERLAP_TOL: f64 = 1e-12;
/// Below this parallel weight the angle φ0 is not defined.
pub const MIN_PARALLEL_WEIGHT: f64 = 1e-24;

/// Probability that each database element is the solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriorDistribution {
    probs: Vec<f64>,
}

impl PriorDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidDimension(format!(
                "a prior needs at least 2 elements, got {}",
                probs.len()
            )));
        }
        if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidInput(format!("probability {p} at index {i}")));
        }
        let total = fsum(probs.iter().copied());
        if (total - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidInput(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDimension(format!("n = {n} < 2")));
        }
        Ok(Self { probs: vec![1.0 / n as f64; n] })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// True when every entry is within `tol` of `1/N`.
    pub fn is_uniform(&self, tol: f64) -> bool {
        let u = 1.0 / self.len() as f64;
        self.probs.iter().all(|p| (p - u).abs() <= tol)
    }
}

/// Normalizes non-negative weights into a prior.
pub fn prior_from_weights(weights: &[f64]) -> Result<PriorDistribution> {
    if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !w.is_finite() || **w < 0.0) {
        return Err(Error::InvalidInput(format!("weight {w} at index {i}")));
    }
    let total = fsum(weights.iter().copied());
    if total <= 0.0 {
        return Err(Error::DegeneratePrior("all weights are zero".into()));
    }
    PriorDistribution::new(weights.iter().map(|w| w / total).collect())
}

/// A real vector of unit 2-norm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitRealVector {
    amps: Vec<f64>,
}

impl UnitRealVector {
    pub fn new(amps: Vec<f64>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::InvalidDimension("empty vector".into()));
        }
        if amps.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidInput("non-finite amplitude".into()));
        }
        let r = norm(&amps);
        if (r - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidInput(format!("vector norm {r} is not 1")));
        }
        Ok(Self { amps })
    }

    /// Scales `v` to unit norm.
    pub fn normalized(mut v: Vec<f64>) -> Result<Self> {
        let r = norm(&v);
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::InvalidInput(format!("cannot normalize a vector of norm {r}")));
        }
        v.iter_mut().for_each(|x| *x /= r);
        Ok(Self { amps: v })
    }

    /// Wraps the output of a norm-preserving map without re-checking.
    pub(crate) fn from_unitary_image(amps: Vec<f64>) -> Self {
        Self { amps }
    }

    pub fn amps(&self) -> &[f64] {
        &self.amps
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn dot(&self, other: &UnitRealVector) -> f64 {
        dot(&self.amps, &other.amps)
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amps)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.amps
    }
}

impl AsRef<[f64]> for UnitRealVector {
    fn as_ref(&self) -> &[f64] {
        &self.amps
    }
}

pub fn uniform_state(n: usize) -> Result<UnitRealVector> {
    if n < 2 {
        return Err(Error::InvalidDimension(format!("n = {n} < 2")));
    }
    Ok(UnitRealVector { amps: vec![1.0 / (n as f64).sqrt(); n] })
}

/// Scalars fixing the motion of ψ in span{t, φ} under G = D·O.
///
/// With `t⊥ = (φ − b_t t)/√(1 − b_t²)`, the in-plane part of ψ is
/// `a_t t + u t⊥`. `orientation` is the sign of `u` (+1 when `u = 0`); flipping
/// `t⊥` so that the in-plane part has a non-negative `t⊥` component reverses the
/// apparent rotation, so the amplitude after j steps is
/// `√w · sin(orientation·2jβ + φ0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationGeometry {
    pub a_t: f64,
    pub b_t: f64,
    pub c: f64,
    pub parallel_weight: f64,
    pub phi0: f64,
    pub beta: f64,
    pub orientation: f64,
}

impl IterationGeometry {
    /// Signed `⟨t⊥|ψ⟩`.
    pub fn perp(&self) -> f64 {
        (self.c - self.a_t * self.b_t) / (1.0 - self.b_t * self.b_t).sqrt()
    }

    /// `⟨t|G^j|ψ⟩`.
    pub fn amplitude_after(&self, j: u64) -> f64 {
        let phase = self.orientation * 2.0 * j as f64 * self.beta + self.phi0;
        self.parallel_weight.sqrt() * phase.sin()
    }
}

fn check_pair(psi: &[f64], phi: &[f64], t: usize) -> Result<()> {
    if psi.len() != phi.len() {
        return Err(Error::InvalidDimension(format!(
            "state has {} entries, axis has {}",
            psi.len(),
            phi.len()
        )));
    }
    if t >= psi.len() {
        return Err(Error::InvalidTarget { target: t, n: psi.len() });
    }
    Ok(())
}

pub fn target_geometry(psi: &UnitRealVector, phi: &UnitRealVector, t: usize) -> Result<IterationGeometry> {
    check_pair(psi.amps(), phi.amps(), t)?;
    let a = psi.amps[t];
    let b = phi.amps[t];
    if 1.0 - b.abs() <= DEGENERATE_OVERLAP_TOL {
        return Err(Error::DegenerateSubspace { target: t, overlap: b });
    }
    let c = psi.dot(phi);
    let u = (c - a * b) / (1.0 - b * b).sqrt();
    let w = a * a + u * u;
    if w < MIN_PARALLEL_WEIGHT {
        return Err(Error::UndefinedAngle { target: t, weight: w });
    }
    Ok(IterationGeometry {
        a_t: a,
        b_t: b,
        c,
        parallel_weight: w,
        phi0: (a / w.sqrt()).clamp(-1.0, 1.0).asin(),
        beta: b.asin(),
        orientation: if u < 0.0 { -1.0 } else { 1.0 },
    })
}

/// Applies `P_t = (|t⟩⟨t| + |φ⟩⟨φ| − b_t(|t⟩⟨φ| + |φ⟩⟨t|)) / (1 − b_t²)` to `v`.
pub fn apply_projector(phi: &UnitRealVector, t: usize, v: &[f64]) -> Result<Vec<f64>> {
    check_pair(v, phi.amps(), t)?;
    let b = phi.amps[t];
    if 1.0 - b.abs() <= DEGENERATE_OVERLAP_TOL {
        return Err(Error::DegenerateSubspace { target: t, overlap: b });
    }
    let phi_v = dot(phi.amps(), v);
    let scale = 1.0 / (1.0 - b * b);
    let mut out: Vec<f64> = phi.amps.iter().map(|f| scale * (phi_v - b * v[t]) * f).collect();
    out[t] += scale * (v[t] - b * phi_v);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_6};

    #[test]
    fn uniform_state_entries() {
        assert_eq!(uniform_state(4).unwrap().amps(), &[0.5; 4]);
        let s = uniform_state(2).unwrap();
        assert!((s.amps()[0] - 1.0 / 2f64.sqrt()).abs() < 1e-16);
        let big = uniform_state(10_000).unwrap();
        assert!(big.amps().iter().all(|&a| a == 0.01));
        assert!((big.norm() - 1.0).abs() < 1e-12);
        assert!(matches!(uniform_state(1), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn prior_normalization() {
        assert_eq!(prior_from_weights(&[1.0; 4]).unwrap().probs(), &[0.25; 4]);
        assert_eq!(prior_from_weights(&[3.0, 1.0]).unwrap().probs(), &[0.75, 0.25]);
        assert!(matches!(prior_from_weights(&[0.0, 0.0]), Err(Error::DegeneratePrior(_))));
        assert!(matches!(prior_from_weights(&[1.0, -0.5]), Err(Error::InvalidInput(_))));
        assert!(PriorDistribution::new(vec![0.5, 0.4]).is_err());
    }

    #[test]
    fn target_is_the_state() {
        let mut e = vec![0.0; 4];
        e[0] = 1.0;
        let psi = UnitRealVector::new(e).unwrap();
        let phi = uniform_state(4).unwrap();
        assert!((phi.amps()[0] - 0.5).abs() < 1e-15);
        let g = target_geometry(&psi, &phi, 0).unwrap();
        assert!((g.parallel_weight - 1.0).abs() < 1e-15);
        assert!((g.phi0 - FRAC_PI_2).abs() < 1e-7);
    }

    #[test]
    fn uniform_pair_at_four() {
        let s = uniform_state(4).unwrap();
        let g = target_geometry(&s, &s, 0).unwrap();
        assert_eq!(g.b_t, 0.5);
        assert!((g.beta - FRAC_PI_6).abs() < 1e-15);
        assert!((g.parallel_weight - 1.0).abs() < 1e-15);
        assert!((g.phi0 - FRAC_PI_6).abs() < 1e-15);
    }

    #[test]
    fn degenerate_axis_is_rejected() {
        let s = uniform_state(4).unwrap();
        let e = UnitRealVector::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(target_geometry(&s, &e, 0), Err(Error::DegenerateSubspace { .. })));
        assert!(matches!(target_geometry(&s, &s, 9), Err(Error::InvalidTarget { .. })));
    }

    #[test]
    fn orthogonal_state_has_no_angle() {
        let phi = UnitRealVector::new(vec![0.6, 0.8, 0.0]).unwrap();
        let psi = UnitRealVector::new(vec![0.0, 0.0, 1.0]).unwrap();
        assert!(matches!(target_geometry(&psi, &phi, 0), Err(Error::UndefinedAngle { .. })));
    }
}
