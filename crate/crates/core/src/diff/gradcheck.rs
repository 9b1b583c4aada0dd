use crate::error::{Error, Result};

/// `|a − b| / max(|a|, |b|)`, with the denominator floored at `1e-12`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Compares `analytic[i]` against the central difference
/// `(f(x + εeᵢ) − f(x − εeᵢ)) / 2ε` for every `i` in `indices` and returns
/// the largest relative error.
pub fn grad_check<F>(mut f: F, x: &[f64], analytic: &[f64], indices: &[usize], eps: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if analytic.len() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} partials for {} parameters",
            analytic.len(),
            x.len()
        )));
    }
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    for &i in indices {
        probe[i] = x[i] + eps;
        let fp = f(&probe)?;
        probe[i] = x[i] - eps;
        let fm = f(&probe)?;
        probe[i] = x[i];
        if !(fp.is_finite() && fm.is_finite()) {
            return Err(Error::NonFinite(format!("function value at parameter {i}")));
        }
        worst = worst.max(relative_error(analytic[i], (fp - fm) / (2.0 * eps)));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square() {
        let err = grad_check(|t| Ok(t[0] * t[0]), &[3.0], &[6.0], &[0], 1e-5).unwrap();
        assert!(err < 1e-9);
    }

    #[test]
    fn constant() {
        let err = grad_check(|_| Ok(4.0), &[1.0, 2.0], &[0.0, 0.0], &[0, 1], 1e-5).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn wrong_gradient_is_reported() {
        let err = grad_check(|t| Ok(t[0] * t[0]), &[3.0], &[5.0], &[0], 1e-5).unwrap();
        assert!(err > 0.1);
    }

    #[test]
    fn non_finite_values_error() {
        let r = grad_check(|t| Ok(t[0].ln()), &[0.0], &[1.0], &[0], 1e-5);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }
}
