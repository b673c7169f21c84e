//! Central-difference gradient checker.

use crate::error::{Error, Result};

/// Compares `analytic` against central finite differences of `f` around `x0`.
///
/// Returns `max_i |analytic_i - cd_i| / max(1, |cd_i|)` where
/// `cd_i = (f(x0 + h e_i) - f(x0 - h e_i)) / 2h`.
pub fn grad_check<F>(mut f: F, x0: &[f64], analytic: &[f64], h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if x0.len() != analytic.len() {
        return Err(Error::invalid(format!(
            "grad_check: point has {} entries, analytic gradient {}",
            x0.len(),
            analytic.len()
        )));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid(format!("grad_check: bad step h={h}")));
    }
    let mut x = x0.to_vec();
    let mut worst = 0.0_f64;
    for i in 0..x.len() {
        x[i] = x0[i] + h;
        let fp = f(&x)?;
        x[i] = x0[i] - h;
        let fm = f(&x)?;
        x[i] = x0[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::numeric(format!(
                "grad_check: non-finite objective at probe {i}"
            )));
        }
        let cd = (fp - fm) / (2.0 * h);
        let rel = (analytic[i] - cd).abs() / cd.abs().max(1.0);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_matches_analytic_gradient() {
        let f = |x: &[f64]| Ok(x[0] * x[0]);
        let err = grad_check(f, &[1.0], &[2.0], 1e-5).unwrap();
        assert!(err < 1e-8, "err {err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let f = |_: &[f64]| Ok(3.25);
        let err = grad_check(f, &[0.4, -2.0], &[0.0, 0.0], 1e-5).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn non_finite_probe_is_reported() {
        // The +h probe lands exactly on the log singularity.
        let res = grad_check(|x| Ok((x[0] - 1e-5).ln()), &[0.0], &[1.0], 1e-5);
        assert!(matches!(res, Err(crate::error::Error::Numeric(_))));
    }
}
