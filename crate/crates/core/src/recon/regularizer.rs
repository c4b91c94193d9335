//! Huber edge-preserving penalty over spatial neighbors.

use crate::error::{Error, Result};

/// `x^2 / 2` for `|x| <= delta`, `delta |x| - delta^2 / 2` otherwise.
#[inline]
pub fn huber(x: f64, delta: f64) -> f64 {
    let a = x.abs();
    if a <= delta {
        0.5 * x * x
    } else {
        delta * a - 0.5 * delta * delta
    }
}

#[inline]
pub fn huber_deriv(x: f64, delta: f64) -> f64 {
    if x.abs() <= delta {
        x
    } else {
        delta * x.signum()
    }
}

/// `huber_deriv(x) / x`, equal to 1 at `x = 0`.
#[inline]
pub fn huber_curvature(x: f64, delta: f64) -> f64 {
    let a = x.abs();
    if a <= delta {
        1.0
    } else {
        delta / a
    }
}

/// 4-connected spatial neighborhood within each momentum bin. The weight of a
/// neighbor at distance `d` is `(1/d) / (2/dx + 2/dy)`, so weights are
/// symmetric and an interior voxel's weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    pub nx: usize,
    pub ny: usize,
    pub nq: usize,
    pub weight_x: f64,
    pub weight_y: f64,
}

impl Neighborhood {
    pub fn new(nx: usize, ny: usize, nq: usize, dx: f64, dy: f64) -> Result<Self> {
        if !(dx > 0.0 && dy > 0.0) {
            return Err(Error::Domain(format!("voxel sizes must be positive, got {dx} x {dy}")));
        }
        let norm = 2.0 / dx + 2.0 / dy;
        Ok(Neighborhood {
            nx,
            ny,
            nq,
            weight_x: (1.0 / dx) / norm,
            weight_y: (1.0 / dy) / norm,
        })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nq
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Calls `visit(k, w)` for every neighbor `k` of voxel `idx`.
    #[inline]
    pub fn for_each_neighbor(&self, idx: usize, mut visit: impl FnMut(usize, f64)) {
        let q = idx % self.nq;
        let s = idx / self.nq;
        let (i, j) = (s / self.ny, s % self.ny);
        let at = |i: usize, j: usize| (i * self.ny + j) * self.nq + q;
        if i > 0 {
            visit(at(i - 1, j), self.weight_x);
        }
        if i + 1 < self.nx {
            visit(at(i + 1, j), self.weight_x);
        }
        if j > 0 {
            visit(at(i, j - 1), self.weight_y);
        }
        if j + 1 < self.ny {
            visit(at(i, j + 1), self.weight_y);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Regularizer {
    pub beta: f64,
    pub delta: f64,
    pub neighborhood: Neighborhood,
}

impl Regularizer {
    pub fn new(beta: f64, delta: f64, neighborhood: Neighborhood) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!("beta must be finite and nonnegative, got {beta}")));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Domain(format!("delta must be positive, got {delta}")));
        }
        Ok(Regularizer {
            beta,
            delta,
            neighborhood,
        })
    }

    /// `R(f) = sum_j sum_{k in N_j} w_jk psi(f_j - f_k)` (without `beta`).
    pub fn penalty(&self, f: &[f64]) -> f64 {
        let mut total = 0.0;
        for (j, &fj) in f.iter().enumerate() {
            self.neighborhood
                .for_each_neighbor(j, |k, w| total += w * huber(fj - f[k], self.delta));
        }
        total
    }

    /// Per-voxel `(b3 + b4, b5 + b6)` at the expansion point `f_hat`.
    #[inline]
    pub fn surrogate_terms(&self, f_hat: &[f64], j: usize) -> (f64, f64) {
        let (mut curv, mut grad) = (0.0, 0.0);
        let fj = f_hat[j];
        self.neighborhood.for_each_neighbor(j, |k, w| {
            let d = fj - f_hat[k];
            curv += w * huber_curvature(d, self.delta);
            grad += w * huber_deriv(d, self.delta);
        });
        // Symmetric neighborhood: b4 = b3 = 2 sum w omega, b6 = b5 = sum w psi'.
        (4.0 * curv, 2.0 * grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huber_hand_values() {
        let d = 0.7;
        assert_eq!(huber(0.0, d), 0.0);
        assert_eq!(huber_curvature(0.0, d), 1.0);
        let x = 2.0 * d;
        assert!((huber(x, d) - 1.5 * d * d).abs() < 1e-15);
        assert!((huber_deriv(x, d) - d).abs() < 1e-15);
        assert!((huber_curvature(x, d) - 0.5).abs() < 1e-15);
        for x in [-3.0, -0.2, 0.5, 4.0] {
            assert_eq!(huber(x, d), huber(-x, d));
            assert_eq!(huber_deriv(x, d), -huber_deriv(-x, d));
        }
        // Continuity of the derivative at the knot.
        let eps = 1e-12;
        assert!((huber_deriv(d - eps, d) - huber_deriv(d + eps, d)).abs() < 1e-9);
    }

    #[test]
    fn weights_are_symmetric_and_normalized() {
        let nb = Neighborhood::new(4, 5, 2, 2.5, 3.04).unwrap();
        let mut w = vec![vec![0.0; nb.len()]; nb.len()];
        for j in 0..nb.len() {
            nb.for_each_neighbor(j, |k, wk| w[j][k] = wk);
        }
        for j in 0..nb.len() {
            for k in 0..nb.len() {
                assert_eq!(w[j][k], w[k][j]);
                if w[j][k] > 0.0 {
                    assert_eq!(j % 2, k % 2, "neighbors share the momentum bin");
                }
            }
        }
        // Interior voxel (i=1, j=2, q=1).
        let interior = (5 + 2) * 2 + 1;
        let sum: f64 = w[interior].iter().sum();
        assert!((sum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_image_has_zero_penalty() {
        let nb = Neighborhood::new(3, 4, 2, 1.0, 1.0).unwrap();
        let reg = Regularizer::new(2.0, 0.1, nb).unwrap();
        let f = vec![3.5; 24];
        assert_eq!(reg.penalty(&f), 0.0);
    }

    #[test]
    fn surrogate_gradient_matches_penalty_gradient() {
        let nb = Neighborhood::new(3, 4, 2, 2.5, 3.04).unwrap();
        let reg = Regularizer::new(1.0, 0.3, nb).unwrap();
        let f: Vec<f64> = (0..24).map(|k| ((k * 7919) % 13) as f64 * 0.1).collect();
        for j in 0..24 {
            let h = 1e-6;
            let mut fp = f.clone();
            fp[j] += h;
            let mut fm = f.clone();
            fm[j] -= h;
            let num = (reg.penalty(&fp) - reg.penalty(&fm)) / (2.0 * h);
            let (_, grad) = reg.surrogate_terms(&f, j);
            assert!((num - grad).abs() < 1e-6, "voxel {j}: {num} vs {grad}");
        }
    }
}
