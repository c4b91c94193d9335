//! Penalized Poisson-likelihood reconstruction with EM-type and
//! ordered-subsets iterations.

pub mod partition;
pub mod regularizer;
pub mod surrogate;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::projector::{LinearOperator, Scope};

pub use partition::{build_partition, PartitionReport, SubsetPartition};
pub use regularizer::{huber, huber_curvature, huber_deriv, Neighborhood, Regularizer};
pub use surrogate::{chi, lemma_minimizer, voxel_update, LemmaSolution, VoxelCoefficients};

/// Replacement for a zero predicted mean where counts were observed.
pub const RATIO_EPSILON: f64 = 1e-12;

/// Photon counts `y` and known background `r` per detector pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    counts: Vec<f64>,
    background: Vec<f64>,
}

impl MeasurementSet {
    pub fn new(counts: Vec<f64>, background: Vec<f64>) -> Result<Self> {
        if counts.len() != background.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} counts but {} background values",
                counts.len(),
                background.len()
            )));
        }
        if let Some(bad) = counts.iter().find(|&&y| !(y >= 0.0 && y.fract() == 0.0 && y.is_finite())) {
            return Err(Error::Domain(format!("counts must be nonnegative integers, got {bad}")));
        }
        if let Some(bad) = background.iter().find(|&&r| !(r >= 0.0 && r.is_finite())) {
            return Err(Error::Domain(format!("background must be finite and nonnegative, got {bad}")));
        }
        Ok(MeasurementSet { counts, background })
    }

    pub fn with_constant_background(counts: Vec<f64>, r: f64) -> Result<Self> {
        let n = counts.len();
        Self::new(counts, vec![r; n])
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn background(&self) -> &[f64] {
        &self.background
    }
}

/// `sum_i (l_i + r_i) - y_i ln(l_i + r_i)`, dropping `ln(y_i!)`.
pub fn data_fit(l: &[f64], meas: &MeasurementSet) -> f64 {
    let mut total = 0.0;
    for ((&li, &y), &r) in l.iter().zip(&meas.counts).zip(&meas.background) {
        let z = li + r;
        if z > 0.0 {
            total += z - y * z.ln();
        } else if y > 0.0 {
            return f64::INFINITY;
        }
    }
    total
}

/// Penalized objective given the forward projection `l` of `f`.
pub fn objective_from_projection(l: &[f64], f: &[f64], meas: &MeasurementSet, reg: &Regularizer) -> f64 {
    let fit = data_fit(l, meas);
    if reg.beta == 0.0 {
        fit
    } else {
        fit + reg.beta * reg.penalty(f)
    }
}

pub fn objective(op: &dyn LinearOperator, f: &[f64], meas: &MeasurementSet, reg: &Regularizer) -> Result<f64> {
    check_dims(op, f, meas)?;
    let l = op.forward(f, Scope::Full)?;
    Ok(objective_from_projection(&l, f, meas, reg))
}

fn check_dims(op: &dyn LinearOperator, f: &[f64], meas: &MeasurementSet) -> Result<()> {
    if f.len() != op.object_len() {
        return Err(Error::DimensionMismatch(format!(
            "image has {} voxels, operator expects {}",
            f.len(),
            op.object_len()
        )));
    }
    if meas.len() != op.detector_len() {
        return Err(Error::DimensionMismatch(format!(
            "measurements have {} pixels, operator expects {}",
            meas.len(),
            op.detector_len()
        )));
    }
    Ok(())
}

/// Backprojection of ones restricted to `scope`.
pub fn sensitivity(op: &dyn LinearOperator, scope: Scope<'_>) -> Result<Vec<f64>> {
    let ones = match scope {
        Scope::Full => vec![1.0; op.detector_len()],
        Scope::Subset(m) => m.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
    };
    op.backward(&ones, scope)
}

/// Uniform level `sum(y - r) / sum(b1)` matching the total measured signal.
pub fn initial_level(b1: &[f64], meas: &MeasurementSet) -> Result<f64> {
    let signal: f64 = meas.counts.iter().zip(&meas.background).map(|(y, r)| y - r).sum();
    let sens: f64 = b1.iter().sum();
    if !(sens > 0.0) {
        return Err(Error::Numerical {
            msg: "sensitivity image is zero; no voxel is observed".into(),
        });
    }
    if !(signal > 0.0) {
        return Err(Error::Numerical {
            msg: format!("measured counts do not exceed the background (net signal {signal})"),
        });
    }
    Ok(signal / sens)
}

/// `beta_rel * mean(b1) / level`, making `beta_rel` independent of the data scale.
pub fn absolute_beta(beta_rel: f64, b1: &[f64], level: f64) -> f64 {
    let mean = b1.iter().sum::<f64>() / b1.len().max(1) as f64;
    beta_rel * mean / level
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BetaScaling {
    /// The same `beta` in every subset update.
    #[default]
    Unscaled,
    /// `beta / P` in each of the `P` subset updates.
    PerSubset,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconOptions {
    /// Outer iterations.
    pub iterations: usize,
    pub beta_scaling: BetaScaling,
    /// Record the objective at the initial image and after every outer iteration.
    pub track_objective: bool,
}

impl Default for ReconOptions {
    fn default() -> Self {
        ReconOptions {
            iterations: 20,
            beta_scaling: BetaScaling::Unscaled,
            track_objective: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReconTrace {
    /// Objective at `f^0, f^1, ..., f^T` when tracked.
    pub objective: Vec<f64>,
    /// Voxel updates left unchanged because the surrogate was unbounded.
    pub unbounded_updates: u64,
    /// Voxel updates skipped because the subset does not see the voxel.
    pub skipped_voxels: u64,
    /// Ratios where a zero predicted mean met nonzero counts.
    pub guarded_ratios: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconResult {
    pub image: Vec<f64>,
    pub trace: ReconTrace,
}

/// Full-data EM-type iteration.
pub fn em_iterate(
    op: &dyn LinearOperator,
    f0: &[f64],
    meas: &MeasurementSet,
    reg: &Regularizer,
    opts: &ReconOptions,
) -> Result<ReconResult> {
    let b1 = sensitivity(op, Scope::Full)?;
    iterate(op, f0, meas, reg, &[Scope::Full], &[b1], opts)
}

/// Ordered-subsets EM-type iteration sweeping the subsets of `partition` in order.
pub fn osem_iterate(
    op: &dyn LinearOperator,
    f0: &[f64],
    meas: &MeasurementSet,
    reg: &Regularizer,
    partition: &SubsetPartition,
    opts: &ReconOptions,
) -> Result<ReconResult> {
    let masks = partition.masks();
    if masks.first().map(Vec::len) != Some(op.detector_len()) {
        return Err(Error::DimensionMismatch(format!(
            "partition covers {:?} pixels, operator has {}",
            partition.dims(),
            op.detector_len()
        )));
    }
    let scopes: Vec<Scope<'_>> = masks.iter().map(|m| Scope::Subset(m)).collect();
    let b1: Vec<Vec<f64>> = scopes.iter().map(|&s| sensitivity(op, s)).collect::<Result<_>>()?;
    iterate(op, f0, meas, reg, &scopes, &b1, opts)
}

/// Generic sweep over `scopes` with precomputed per-scope sensitivities.
pub fn iterate(
    op: &dyn LinearOperator,
    f0: &[f64],
    meas: &MeasurementSet,
    reg: &Regularizer,
    scopes: &[Scope<'_>],
    b1: &[Vec<f64>],
    opts: &ReconOptions,
) -> Result<ReconResult> {
    check_dims(op, f0, meas)?;
    if scopes.is_empty() || scopes.len() != b1.len() {
        return Err(Error::Misuse(format!(
            "{} scopes with {} sensitivity images",
            scopes.len(),
            b1.len()
        )));
    }
    if let Some(bad) = f0.iter().find(|&&v| !(v >= 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!("initial image must be finite and nonnegative, got {bad}")));
    }
    let p_count = scopes.len();
    let beta = match opts.beta_scaling {
        BetaScaling::Unscaled => reg.beta,
        BetaScaling::PerSubset => reg.beta / p_count as f64,
    };
    let single_full = p_count == 1 && matches!(scopes[0], Scope::Full);
    let mut trace = ReconTrace::default();
    let mut f = f0.to_vec();
    let n_det = op.detector_len();

    for t in 0..opts.iterations {
        if opts.track_objective && !single_full {
            trace.objective.push(objective(op, &f, meas, reg)?);
        }
        for (scope, b1p) in scopes.iter().zip(b1) {
            let l = op.forward(&f, *scope)?;
            if opts.track_objective && single_full {
                trace.objective.push(objective_from_projection(&l, &f, meas, reg));
            }
            let mut ratio = vec![0.0; n_det];
            for (i, out) in ratio.iter_mut().enumerate() {
                if let Scope::Subset(m) = scope {
                    if !m[i] {
                        continue;
                    }
                }
                let y = meas.counts[i];
                let mut z = l[i] + meas.background[i];
                if y == 0.0 {
                    continue;
                }
                if !(z > 0.0) {
                    trace.guarded_ratios += 1;
                    z = RATIO_EPSILON;
                }
                *out = y / z;
            }
            let b2 = op.backward(&ratio, *scope)?;
            let f_hat = f;
            let results: Vec<(f64, u8)> = (0..f_hat.len())
                .into_par_iter()
                .map(|j| {
                    if b1p[j] == 0.0 {
                        return (f_hat[j], 1);
                    }
                    let (b34, b56) = if beta > 0.0 {
                        reg.surrogate_terms(&f_hat, j)
                    } else {
                        (0.0, 0.0)
                    };
                    let c = VoxelCoefficients {
                        b1: b1p[j],
                        b2: b2[j],
                        b34,
                        b56,
                    };
                    let (c1, c2, c3) = chi(f_hat[j], &c, beta);
                    match lemma_minimizer(c1, c2, c3) {
                        Ok(LemmaSolution::Finite(x)) => (x, 0),
                        Ok(LemmaSolution::Unbounded) => (f_hat[j], 2),
                        Err(_) => (f64::NAN, 3),
                    }
                })
                .collect();
            let mut next = Vec::with_capacity(results.len());
            for (x, flag) in results {
                match flag {
                    1 => trace.skipped_voxels += 1,
                    2 => trace.unbounded_updates += 1,
                    _ => {}
                }
                if !x.is_finite() {
                    return Err(Error::Numerical {
                        msg: format!("non-finite voxel value in outer iteration {t}"),
                    });
                }
                next.push(x);
            }
            f = next;
        }
    }
    if trace.guarded_ratios > 0 {
        log::warn!(
            "{} ratios had zero predicted mean with nonzero counts; used {RATIO_EPSILON}",
            trace.guarded_ratios
        );
    }
    if trace.unbounded_updates > 0 {
        log::warn!("{} voxel updates were unbounded and left unchanged", trace.unbounded_updates);
    }
    if opts.track_objective {
        trace.objective.push(objective(op, &f, meas, reg)?);
    }
    Ok(ReconResult { image: f, trace })
}
