//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Everything works on the two-value prior (K targets at probability p, the
//! rest sharing what is left), which the closed forms handle at any N.

use qsopt::optimizer::ExpansionOrder;
use qsopt::two_value::{self, TwoValueSpec};
use wasm_bindgen::prelude::*;

fn spec(n: usize, k: usize, p: f64) -> Result<TwoValueSpec, JsError> {
    TwoValueSpec::new(n, k, p).map_err(|e| JsError::new(&e.to_string()))
}

fn js<T>(r: qsopt::Result<T>) -> Result<T, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

/// Result of one optimization, read field by field from JavaScript.
#[wasm_bindgen]
pub struct Summary {
    s_factor: f64,
    delta_lambda: f64,
    third_order: bool,
    j_min: u32,
    j_standard: u32,
    simulated_success: f64,
    valid_range: f64,
}

#[wasm_bindgen]
impl Summary {
    #[wasm_bindgen(getter)]
    pub fn s_factor(&self) -> f64 {
        self.s_factor
    }
    #[wasm_bindgen(getter)]
    pub fn delta_lambda(&self) -> f64 {
        self.delta_lambda
    }
    #[wasm_bindgen(getter)]
    pub fn third_order(&self) -> bool {
        self.third_order
    }
    #[wasm_bindgen(getter)]
    pub fn j_min(&self) -> u32 {
        self.j_min
    }
    #[wasm_bindgen(getter)]
    pub fn j_standard(&self) -> u32 {
        self.j_standard
    }
    #[wasm_bindgen(getter)]
    pub fn simulated_success(&self) -> f64 {
        self.simulated_success
    }
    #[wasm_bindgen(getter)]
    pub fn valid_range(&self) -> f64 {
        self.valid_range
    }
    /// Oracle calls per successful search, `j_min / success`.
    #[wasm_bindgen(getter)]
    pub fn queries_per_success(&self) -> f64 {
        self.j_min as f64 / self.simulated_success
    }
}

/// Fewest Grover iterations that keep the average success above `1 − delta_p`.
/// The success is simulated on the full N-dimensional state.
#[wasm_bindgen]
pub fn optimize(n: usize, k: usize, p: f64, delta_p: f64) -> Result<Summary, JsError> {
    let spec = spec(n, k, p)?;
    let out = js(two_value::optimize_closed_form(&spec, delta_p))?;
    Ok(Summary {
        s_factor: out.s_factor,
        delta_lambda: out.delta_lambda,
        third_order: out.expansion_order == ExpansionOrder::Third,
        j_min: out.j_min as u32,
        j_standard: out.j_standard as u32,
        simulated_success: js(two_value::outcome_simulated_success(&spec, &out))?,
        valid_range: js(two_value::valid_range(&spec))?,
    })
}

/// Curvature factor S against p for one K, log-spaced from `1e-6·K/N²` to
/// `1/K`. Returns `[p0, s0, p1, s1, ...]`; points the model rejects are left out.
#[wasm_bindgen]
pub fn s_curve(n: usize, k: usize, points: usize) -> Vec<f64> {
    let lo = (1e-6 * k as f64 / (n as f64 * n as f64)).log10();
    let hi = (1.0 / k as f64).log10();
    let steps = points.max(2) - 1;
    (0..=steps)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / steps as f64))
        .filter_map(|p| TwoValueSpec::new(n, k, p).and_then(|s| two_value::s_factor(&s)).ok().map(|s| [p, s]))
        .flatten()
        .collect()
}

/// Average success against dλ in `[-max_dlambda, 0]`. Returns
/// `[dλ, optimized, standard, ...]`: the optimized curve follows the
/// first-order path, the standard one keeps ψ = φ = uniform.
#[wasm_bindgen]
pub fn success_curves(n: usize, k: usize, p: f64, max_dlambda: f64, points: usize) -> Result<Vec<f64>, JsError> {
    let spec = spec(n, k, p)?;
    let steps = points.max(2) - 1;
    let mut out = Vec::with_capacity(3 * (steps + 1));
    for i in 0..=steps {
        let dl = -max_dlambda * (steps - i) as f64 / steps as f64;
        // uniform state and axis: every target sees sin²(λ + θ) = cos²(dλ)
        let standard = dl.cos().powi(2);
        let optimized = if dl == 0.0 { 1.0 } else { js(two_value::path_success(&spec, dl))? };
        out.extend([dl, optimized, standard]);
    }
    Ok(out)
}
