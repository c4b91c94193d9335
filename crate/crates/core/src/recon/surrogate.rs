//! Closed-form minimizer of the separable per-voxel surrogate.

use crate::error::{Error, Result};

/// Minimizer of `a x^2 / 2 + b x - c ln x + d` over `x >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LemmaSolution {
    Finite(f64),
    /// `a = 0` and `b <= 0`: the objective decreases without bound.
    Unbounded,
}

pub fn lemma_minimizer(a: f64, b: f64, c: f64) -> Result<LemmaSolution> {
    if !(a >= 0.0) || !(c >= 0.0) || !b.is_finite() || !a.is_finite() || !c.is_finite() {
        return Err(Error::Domain(format!(
            "surrogate coefficients need finite a >= 0, c >= 0 (a = {a}, b = {b}, c = {c})"
        )));
    }
    if a > 0.0 {
        let disc = (b * b + 4.0 * a * c).sqrt();
        // Cancellation-free form of (-b + disc) / (2a) when b > 0.
        let x = if b > 0.0 { 2.0 * c / (b + disc) } else { (disc - b) / (2.0 * a) };
        Ok(LemmaSolution::Finite(x))
    } else if b > 0.0 {
        Ok(LemmaSolution::Finite(c / b))
    } else {
        Ok(LemmaSolution::Unbounded)
    }
}

/// Surrogate coefficients of one voxel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelCoefficients {
    /// Sensitivity `b1`.
    pub b1: f64,
    /// Ratio backprojection `b2`.
    pub b2: f64,
    /// `b3 + b4`.
    pub b34: f64,
    /// `b5 + b6`.
    pub b56: f64,
}

/// `(chi1, chi2, chi3)` of the closed-form update.
#[inline]
pub fn chi(f_hat: f64, c: &VoxelCoefficients, beta: f64) -> (f64, f64, f64) {
    (
        beta * c.b34,
        c.b1 + beta * (-f_hat * c.b34 + c.b56),
        f_hat * c.b2,
    )
}

pub fn voxel_update(f_hat: f64, c: &VoxelCoefficients, beta: f64) -> Result<f64> {
    let (c1, c2, c3) = chi(f_hat, c, beta);
    match lemma_minimizer(c1, c2, c3)? {
        LemmaSolution::Finite(x) => Ok(x),
        LemmaSolution::Unbounded => Err(Error::UnboundedUpdate { chi2: c2 }),
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Golden-section minimizer of `a x^2/2 + b x - c ln x` on `[lo, hi]`.
    pub(crate) fn golden(a: f64, b: f64, c: f64, lo: f64, hi: f64) -> f64 {
        let obj = |x: f64| {
            let log = if c == 0.0 { 0.0 } else { c * x.ln() };
            0.5 * a * x * x + b * x - log
        };
        let r = 0.5 * (5f64.sqrt() - 1.0);
        let (mut lo, mut hi) = (lo, hi);
        let mut x1 = hi - r * (hi - lo);
        let mut x2 = lo + r * (hi - lo);
        let (mut f1, mut f2) = (obj(x1), obj(x2));
        for _ in 0..400 {
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - r * (hi - lo);
                f1 = obj(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + r * (hi - lo);
                f2 = obj(x2);
            }
            if hi - lo < 1e-14 * (1.0 + hi.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn hand_cases() {
        assert_eq!(lemma_minimizer(2.0, -3.0, 2.0).unwrap(), LemmaSolution::Finite(2.0));
        assert_eq!(lemma_minimizer(1.0, 0.0, 0.0).unwrap(), LemmaSolution::Finite(0.0));
        assert_eq!(lemma_minimizer(0.0, 2.0, 4.0).unwrap(), LemmaSolution::Finite(2.0));
        assert_eq!(lemma_minimizer(3.0, 1.5, 0.0).unwrap(), LemmaSolution::Finite(0.0));
        assert_eq!(lemma_minimizer(0.0, -1.0, 2.0).unwrap(), LemmaSolution::Unbounded);
        assert_eq!(lemma_minimizer(0.0, 0.0, 2.0).unwrap(), LemmaSolution::Unbounded);
        assert!(matches!(lemma_minimizer(-1.0, 0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(lemma_minimizer(1.0, 0.0, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn hand_cases_match_golden_section() {
        for (a, b, c) in [(2.0, -3.0, 2.0), (0.0, 2.0, 4.0), (1.0, 0.0, 0.0)] {
            let LemmaSolution::Finite(x) = lemma_minimizer(a, b, c).unwrap() else {
                panic!()
            };
            assert!((x - golden(a, b, c, 0.0, 10.0)).abs() < 1e-6);
        }
    }

    #[test]
    fn unregularized_update_is_mlem() {
        let c = VoxelCoefficients {
            b1: 4.0,
            b2: 3.0,
            b34: 0.7,
            b56: -0.2,
        };
        let f = voxel_update(2.5, &c, 0.0).unwrap();
        assert!((f - 2.5 * 3.0 / 4.0).abs() < 1e-15);
        let z = voxel_update(0.0, &c, 1.3).unwrap();
        assert_eq!(z, 0.0);
        let bad = VoxelCoefficients { b1: 0.0, ..c };
        assert!(matches!(voxel_update(1.0, &bad, 0.0), Err(Error::UnboundedUpdate { .. })));
    }

    proptest! {
        #[test]
        fn update_minimizes_separable_surrogate(
            f_hat in 0.01f64..10.0,
            b1 in 0.01f64..10.0,
            b2 in 0.0f64..10.0,
            curv in 0.0f64..4.0,
            b56 in -3.0f64..3.0,
            beta in 0.0f64..2.0,
        ) {
            let c = VoxelCoefficients { b1, b2, b34: curv, b56 };
            let x = voxel_update(f_hat, &c, beta).unwrap();
            prop_assert!(x >= 0.0);
            // Surrogate derivative vanishes at an interior minimum.
            if x > 0.0 {
                let grad = -f_hat / x * b2 + b1 + beta * (x * curv - f_hat * curv + b56);
                let scale = b1 + beta * (curv * x + b56.abs() + curv * f_hat) + f_hat * b2 / x;
                prop_assert!(grad.abs() <= 1e-9 * scale.max(1.0));
            }
        }
    }
}
