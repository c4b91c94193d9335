//! Timing and accuracy comparison of the optimization variants.

use std::time::Instant;

use super::{Projector, Scope, Variant};
use crate::error::{Error, Result};
use crate::image::{nrmse, DetectorImage, HyperspectralImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataMode {
    /// Full-data implementation: one projection over the whole detector.
    Fdi,
    /// Ordered-subsets implementation: one projection per subset.
    Osi,
}

impl DataMode {
    pub fn name(self) -> &'static str {
        match self {
            DataMode::Fdi => "FDI",
            DataMode::Osi => "OSI",
        }
    }
}

impl std::str::FromStr for DataMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fdi" => Ok(DataMode::Fdi),
            "osi" => Ok(DataMode::Osi),
            _ => Err(Error::Config(format!("unknown mode '{s}' (expected fdi or osi)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub variant: Variant,
    pub mode: DataMode,
    pub direction: Direction,
    /// Median wall-clock seconds.
    pub time_s: f64,
    /// Time of the unoptimized variant divided by this variant's time.
    pub speedup: f64,
    /// Relative error against the unoptimized result, as a fraction.
    pub nrmse: f64,
}

pub struct BenchmarkSpec<'a> {
    pub variants: &'a [Variant],
    pub modes: &'a [DataMode],
    pub directions: &'a [Direction],
    /// Timed repetitions per variant; the median is reported.
    pub runs: usize,
    /// Subset membership masks, required for [`DataMode::Osi`].
    pub subsets: &'a [Vec<bool>],
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn run_once(
    p: &Projector,
    naive: bool,
    dir: Direction,
    mode: DataMode,
    f: &HyperspectralImage,
    g: &DetectorImage,
    subsets: &[Vec<bool>],
) -> Result<Vec<f64>> {
    let scopes: Vec<Scope<'_>> = match mode {
        DataMode::Fdi => vec![Scope::Full],
        DataMode::Osi => subsets.iter().map(|s| Scope::Subset(s)).collect(),
    };
    let mut total: Option<Vec<f64>> = None;
    for scope in scopes {
        let out = match (dir, naive) {
            (Direction::Forward, true) => p.forward_naive(f, scope)?.into_vec(),
            (Direction::Forward, false) => p.forward_optimized(f, scope)?.into_vec(),
            (Direction::Backward, true) => p.backward_naive(g, scope)?.into_vec(),
            (Direction::Backward, false) => p.backward_optimized(g, scope)?.into_vec(),
        };
        match &mut total {
            None => total = Some(out),
            Some(t) => t.iter_mut().zip(out).for_each(|(a, b)| *a += b),
        }
    }
    Ok(total.unwrap_or_default())
}

/// Times every requested variant against the unoptimized projector.
///
/// `f` feeds the forward runs and `g` the backward runs. Precomputation for a
/// variant (tables, mask stacks) happens before timing starts.
pub fn benchmark_variants(
    base: &Projector,
    f: &HyperspectralImage,
    g: &DetectorImage,
    spec: &BenchmarkSpec<'_>,
) -> Result<Vec<BenchmarkRow>> {
    if spec.runs == 0 {
        return Err(Error::Config("benchmark needs at least one run per variant".into()));
    }
    if spec.modes.contains(&DataMode::Osi) && spec.subsets.is_empty() {
        return Err(Error::Config("ordered-subsets benchmark needs a subset partition".into()));
    }
    let cfg = *base.config();
    let mut rows = Vec::new();
    for &dir in spec.directions {
        for &mode in spec.modes {
            let mut reference: Option<(Vec<f64>, f64)> = None;
            let mut order: Vec<Variant> = vec![Variant::NO];
            order.extend(spec.variants.iter().copied().filter(|&v| v != Variant::NO));
            for variant in order {
                let p = base.reconfigured(cfg.with_variant(variant))?;
                let naive = variant == Variant::NO;
                let mut times = Vec::with_capacity(spec.runs);
                let mut out = Vec::new();
                for _ in 0..spec.runs {
                    let t0 = Instant::now();
                    out = run_once(&p, naive, dir, mode, f, g, spec.subsets)?;
                    times.push(t0.elapsed().as_secs_f64());
                }
                let time_s = median(times);
                let (speedup, err) = match &reference {
                    None => {
                        reference = Some((out, time_s));
                        (1.0, 0.0)
                    }
                    Some((r, t_no)) => (t_no / time_s, nrmse(&out, r)?),
                };
                log::info!(
                    "{:?} {} {}: {:.3} s, speedup {:.2}, nrmse {:.4}%",
                    dir,
                    mode.name(),
                    variant,
                    time_s,
                    speedup,
                    100.0 * err
                );
                if variant != Variant::NO || spec.variants.contains(&Variant::NO) {
                    rows.push(BenchmarkRow {
                        variant,
                        mode,
                        direction: dir,
                        time_s,
                        speedup,
                        nrmse: err,
                    });
                }
            }
        }
    }
    Ok(rows)
}
