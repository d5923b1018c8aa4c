//! Frequency-error statistics.

/// Distance on the unit torus.
pub fn torus_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Absolute errors along `axis` for one run: each estimate is scored against
/// its nearest true frequency and clipped at `cap`. When fewer than
/// `truth.len()` estimates are given, each missing one scores `cap`.
pub fn absolute_errors(estimates: &[Vec<f64>], truth: &[Vec<f64>], axis: usize, cap: f64) -> Vec<f64> {
    let mut errors: Vec<f64> = estimates
        .iter()
        .map(|e| {
            truth.iter().map(|t| torus_distance(e[axis], t[axis])).fold(f64::INFINITY, f64::min).min(cap)
        })
        .collect();
    errors.resize(errors.len().max(truth.len()), cap);
    errors
}

/// `sqrt(mean over runs of the per-run mean squared error)`.
pub fn rmse(runs: &[Vec<f64>]) -> f64 {
    if runs.is_empty() {
        return f64::NAN;
    }
    let total: f64 = runs
        .iter()
        .map(|errs| if errs.is_empty() { 0.0 } else { errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64 })
        .sum();
    (total / runs.len() as f64).sqrt()
}
