//! Small numeric helpers shared across modules.

/// Compensated (Neumaier) summation.
pub fn fsum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    fsum(x.iter().zip(y).map(|(a, b)| a * b))
}

pub fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// `arcsin(1/sqrt(n))`, the single-step rotation angle of standard Grover search.
pub fn theta(n: usize) -> f64 {
    (1.0 / (n as f64).sqrt()).asin()
}

/// `v - <u|v> u` for unit `u`.
pub fn project_out(u: &[f64], v: &[f64]) -> Vec<f64> {
    let c = dot(u, v);
    v.iter().zip(u).map(|(vi, ui)| vi - c * ui).collect()
}

#[cfg(test)]
pub fn max_abs_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}
