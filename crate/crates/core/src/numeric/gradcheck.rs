//! Central finite differences, used to verify analytic gradients.

use crate::error::{Error, Result};

/// `(f(p + εe_k) − f(p − εe_k)) / 2ε` for every coordinate `k`.
pub fn finite_diff_grad<F>(mut f: F, p: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!("finite-difference step {eps} must be positive")));
    }
    let mut probe = p.to_vec();
    let mut grad = Vec::with_capacity(p.len());
    for k in 0..p.len() {
        probe[k] = p[k] + eps;
        let plus = f(&probe);
        probe[k] = p[k] - eps;
        let minus = f(&probe);
        probe[k] = p[k];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NumericNonFinite(format!(
                "objective at coordinate {k} probe: {plus}, {minus}"
            )));
        }
        grad.push((plus - minus) / (2.0 * eps));
    }
    Ok(grad)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or the absolute difference norm when both are
/// below `floor`.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(floor)
}
