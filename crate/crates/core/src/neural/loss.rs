//! Gaussian negative log-likelihood.

use crate::error::{domain, shape, Result};

use super::model::Estimate;

/// Added to `exp(log σ²)` so variances stay positive.
pub const VAR_FLOOR: f64 = 1e-6;

/// `Σ_d ½ (ln σ_d² + (y_d − μ_d)² / σ_d²)`, constant term dropped.
pub fn nll_loss(estimate: &Estimate, target: &[f64]) -> Result<f64> {
    if estimate.mean.len() != target.len() || estimate.var.len() != target.len() {
        return Err(shape(format!(
            "estimate has {} values, target {}",
            estimate.mean.len(),
            target.len()
        )));
    }
    let mut loss = 0.0;
    for ((m, v), y) in estimate.mean.iter().zip(&estimate.var).zip(target) {
        if !(*v > 0.0) {
            return Err(domain(format!("non-positive variance {v}")));
        }
        loss += 0.5 * (v.ln() + (y - m) * (y - m) / v);
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(m: f64, v: f64) -> Estimate {
        Estimate { mean: vec![m], var: vec![v] }
    }

    #[test]
    fn hand_values() {
        assert_eq!(nll_loss(&one(0.3, 1.0), &[0.3]).unwrap(), 0.0);
        assert!((nll_loss(&one(0.0, 1.0), &[1.0]).unwrap() - 0.5).abs() < 1e-12);
        let expected = 0.5 * (4f64.ln() + 1.0);
        assert!((nll_loss(&one(1.0, 4.0), &[3.0]).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 1.1931).abs() < 1e-4);
        assert!(nll_loss(&one(0.0, 0.0), &[1.0]).is_err());
        assert!(nll_loss(&one(0.0, 1.0), &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mean_gradient_vanishes_at_target() {
        let h = 1e-6;
        let f = |m: f64| nll_loss(&one(m, 2.0), &[1.5]).unwrap();
        assert!(((f(1.5 + h) - f(1.5 - h)) / (2.0 * h)).abs() < 1e-9);
    }
}
