//! Deterministic numeric kernels: dense matrices, stable softmax, Adam,
//! a symmetric eigensolver, a finite-difference gradient checker, and the
//! counter-based RNG everything draws from.
//!
//! Everything is f64 and single-threaded per call; identical inputs and seeds
//! reproduce identical bits on any platform.

mod adam;
mod eigen;
mod gradcheck;
mod matrix;
mod rng;

pub use adam::AdamState;
pub use eigen::sym_eigen;
pub use gradcheck::grad_check;
pub use matrix::Matrix;
pub use rng::{hash_label, SeededRng};

use crate::error::{Error, Result};

/// Numerically stable softmax with max subtraction.
pub fn softmax(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::invalid("softmax of empty input"));
    }
    if !scores.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("softmax: non-finite input"));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    Ok(out)
}

/// log(sum(exp(scores))) with max subtraction.
pub fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = scores.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn symmetric_pair_splits_evenly() {
        let s = softmax(&[0.0, 0.0]).unwrap();
        assert_eq!(s, vec![0.5, 0.5]);
    }

    #[test]
    fn large_inputs_do_not_overflow() {
        let s = softmax(&[1000.0, 1000.0, 1000.0]).unwrap();
        for v in &s {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
            assert!(v.is_finite());
        }
    }

    #[test]
    fn log_weights_recover_ratios() {
        // softmax(ln 1, ln 2, ln 3) = (1/6, 2/6, 3/6), computed by hand from
        // exp(ln k) = k and the normalizer 1 + 2 + 3.
        let s = softmax(&[1.0_f64.ln(), 2.0_f64.ln(), 3.0_f64.ln()]).unwrap();
        assert!((s[0] - 1.0 / 6.0).abs() < 1e-12);
        assert!((s[1] - 2.0 / 6.0).abs() < 1e-12);
        assert!((s[2] - 3.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn empty_input_is_invalid() {
        assert!(softmax(&[]).is_err());
    }

    proptest! {
        #[test]
        fn softmax_lands_on_the_simplex(v in proptest::collection::vec(-50.0..50.0f64, 1..12)) {
            let s = softmax(&v).unwrap();
            for p in &s {
                prop_assert!(*p >= 0.0);
            }
            let sum: f64 = s.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
        }

        #[test]
        fn softmax_is_shift_invariant(
            v in proptest::collection::vec(-20.0..20.0f64, 1..10),
            c in -100.0..100.0f64,
        ) {
            let s0 = softmax(&v).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let s1 = softmax(&shifted).unwrap();
            for (a, b) in s0.iter().zip(&s1) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
