//! Central finite differences and the relative-error measure used to judge
//! analytic gradients.

use serde::Serialize;

/// Step used for central differences.
pub const STEP: f64 = 1e-5;

/// Default pass threshold on the maximum relative error.
pub const TOLERANCE: f64 = 1e-4;

/// Denominator floor so that gradients that are zero on both sides compare as equal.
const FLOOR: f64 = 1e-6;

/// `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(FLOOR);
    (analytic - numeric).abs() / scale
}

/// Central-difference gradient of `f` at `x`, perturbing one coordinate at a time.
pub fn central_difference(x: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let up = f(&probe);
            probe[i] = orig - step;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Result of comparing one analytic gradient against its numeric estimate.
#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub layer: String,
    pub target: String,
    pub shape: String,
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub passed: bool,
}

pub fn compare(
    layer: &str,
    target: &str,
    shape: &str,
    analytic: &[f64],
    numeric: &[f64],
    tolerance: f64,
) -> CheckOutcome {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch for {layer}/{target}");
    let mut worst = (0, 0.0);
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let e = relative_error(a, n);
        if e > worst.1 || e.is_nan() {
            worst = (i, e);
        }
    }
    let (idx, err) = worst;
    CheckOutcome {
        layer: layer.to_string(),
        target: target.to_string(),
        shape: shape.to_string(),
        max_relative_error: err,
        worst_index: idx,
        analytic_at_worst: analytic.get(idx).copied().unwrap_or(0.0),
        numeric_at_worst: numeric.get(idx).copied().unwrap_or(0.0),
        passed: err <= tolerance,
    }
}
