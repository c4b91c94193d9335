//! Analytic phantoms, noisy measurement simulation and summary images.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::SystemGeometry;
use crate::image::{DetectorImage, HyperspectralImage};
use crate::projector::{Projector, Scope};
use crate::recon::MeasurementSet;
use crate::spectrum::{parse_two_column, MomentumGrid};

/// Identifier of the Poisson sampler; bumped whenever its output can change.
pub const POISSON_GENERATOR_VERSION: &str = "chacha8-stream-per-pixel/inversion<30/ptrs:1";

const NACL: &str = include_str!("../data/mtp_nacl.txt");
const AL: &str = include_str!("../data/mtp_al.txt");
const GRAPHITE: &str = include_str!("../data/mtp_graphite.txt");

/// Momentum-transfer profile of a material.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialMtp {
    pub name: String,
    q: Vec<f64>,
    values: Vec<f64>,
}

impl MaterialMtp {
    pub fn new(name: &str, q: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if q.len() != values.len() || q.len() < 2 {
            return Err(Error::Phantom(format!(
                "profile '{name}' needs matching q and value columns with at least two samples"
            )));
        }
        if q.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Phantom(format!("profile '{name}' q values must be strictly increasing")));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Phantom(format!("profile '{name}' values must be finite and nonnegative")));
        }
        let max = values.iter().copied().fold(0.0, f64::max);
        if max == 0.0 {
            return Err(Error::Phantom(format!("profile '{name}' is identically zero")));
        }
        let values = values.into_iter().map(|v| v / max).collect();
        Ok(MaterialMtp {
            name: name.to_string(),
            q,
            values,
        })
    }

    pub fn from_text(name: &str, text: &str) -> Result<Self> {
        let (q, v) = parse_two_column(text)?;
        Self::new(name, q, v)
    }

    pub fn load(name: &str, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(name, &text)
    }

    /// Bundled stand-in profiles: `nacl`, `al`, `graphite`.
    pub fn bundled(name: &str) -> Result<Self> {
        let text = match name.to_ascii_lowercase().as_str() {
            "nacl" => NACL,
            "al" => AL,
            "graphite" => GRAPHITE,
            other => return Err(Error::Phantom(format!("no bundled profile named '{other}'"))),
        };
        Self::from_text(&name.to_ascii_lowercase(), text)
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Linear interpolation onto `grid`, zero outside the sampled range.
    pub fn resample(&self, grid: &MomentumGrid) -> Vec<f64> {
        grid.values()
            .iter()
            .map(|&q| {
                let n = self.q.len();
                if q < self.q[0] || q > self.q[n - 1] {
                    return 0.0;
                }
                let k = self.q.partition_point(|&x| x <= q).clamp(1, n - 1) - 1;
                let t = (q - self.q[k]) / (self.q[k + 1] - self.q[k]);
                self.values[k] + t * (self.values[k + 1] - self.values[k])
            })
            .collect()
    }
}

/// Axis-aligned rectangular insert of one material.
#[derive(Debug, Clone, PartialEq)]
pub struct Insert {
    pub center_x: f64,
    pub center_y: f64,
    pub width_x: f64,
    pub width_y: f64,
    pub material: MaterialMtp,
    pub amplitude: f64,
}

impl Insert {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (x - self.center_x).abs() < 0.5 * self.width_x && (y - self.center_y).abs() < 0.5 * self.width_y
    }

    /// Object pixels whose centers fall inside the insert.
    pub fn pixels(&self, geom: &SystemGeometry) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..geom.object_nx {
            for j in 0..geom.object_ny {
                if self.contains(geom.object_x(i), geom.object_y(j)) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhantomSpec {
    pub inserts: Vec<Insert>,
}

impl PhantomSpec {
    /// NaCl and Al vials, 10 mm along `x` by 12.16 mm along `y`, centered on
    /// the central ray 20 mm apart along `x`.
    pub fn two_vial(geom: &SystemGeometry) -> Result<Self> {
        let cx = geom.object_center_x;
        let vial = |dx: f64, name: &str| -> Result<Insert> {
            Ok(Insert {
                center_x: cx + dx,
                center_y: 0.0,
                width_x: 10.0,
                width_y: 12.16,
                material: MaterialMtp::bundled(name)?,
                amplitude: 1.0,
            })
        };
        Ok(PhantomSpec {
            inserts: vec![vial(-10.0, "nacl")?, vial(10.0, "al")?],
        })
    }
}

pub fn build_phantom(spec: &PhantomSpec, geom: &SystemGeometry, grid: &MomentumGrid) -> Result<HyperspectralImage> {
    let x_lo = geom.object_x(0) - 0.5 * geom.object_dx;
    let x_hi = geom.object_x(geom.object_nx - 1) + 0.5 * geom.object_dx;
    let y_hi = geom.object_y(geom.object_ny - 1) + 0.5 * geom.object_dy();
    let mut f = HyperspectralImage::zeros(geom.object_nx, geom.object_ny, grid.len());
    for (k, ins) in spec.inserts.iter().enumerate() {
        if !(ins.amplitude > 0.0 && ins.amplitude.is_finite()) {
            return Err(Error::Phantom(format!("insert {k}: amplitude must be positive")));
        }
        if !(ins.width_x > 0.0 && ins.width_y > 0.0) {
            return Err(Error::Phantom(format!("insert {k}: widths must be positive")));
        }
        let inside = ins.center_x - 0.5 * ins.width_x >= x_lo
            && ins.center_x + 0.5 * ins.width_x <= x_hi
            && (ins.center_y.abs() + 0.5 * ins.width_y) <= y_hi;
        if !inside {
            return Err(Error::Phantom(format!(
                "insert {k} ({}) extends outside the object grid",
                ins.material.name
            )));
        }
        let profile = ins.material.resample(grid);
        for (i, j) in ins.pixels(geom) {
            for (v, p) in f.spectrum_mut(i, j).iter_mut().zip(&profile) {
                *v += ins.amplitude * p;
            }
        }
    }
    Ok(f)
}

/// Per-pixel detector background.
#[derive(Debug, Clone, PartialEq)]
pub enum Background {
    Constant(f64),
    PerPixel(Vec<f64>),
}

impl Background {
    pub fn expand(&self, pixels: usize) -> Result<Vec<f64>> {
        let v = match self {
            Background::Constant(r) => vec![*r; pixels],
            Background::PerPixel(v) => {
                if v.len() != pixels {
                    return Err(Error::DimensionMismatch(format!(
                        "background has {} values, detector has {pixels}",
                        v.len()
                    )));
                }
                v.clone()
            }
        };
        if v.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::Domain("background must be finite and nonnegative".into()));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub measurements: MeasurementSet,
    /// Scaled noiseless mean `scale * H f`.
    pub noiseless: DetectorImage,
    pub scale: f64,
}

/// Noiseless data from the unoptimized forward model scaled to `peak_count`,
/// plus Poisson noise.
pub fn simulate(
    projector: &Projector,
    f: &HyperspectralImage,
    peak_count: f64,
    background: &Background,
    seed: u64,
) -> Result<Simulation> {
    if !(peak_count > 0.0 && peak_count.is_finite()) {
        return Err(Error::Domain(format!("peak count must be positive, got {peak_count}")));
    }
    let mut g = projector.forward_naive(f, Scope::Full)?;
    let max = g.max();
    if !(max > 0.0) {
        return Err(Error::Phantom("noiseless data is identically zero; cannot scale to the peak count".into()));
    }
    let scale = peak_count / max;
    for v in g.as_mut_slice() {
        *v *= scale;
    }
    let r = background.expand(g.as_slice().len())?;
    let counts = sample_counts(g.as_slice(), &r, seed);
    Ok(Simulation {
        measurements: MeasurementSet::new(counts, r)?,
        noiseless: g,
        scale,
    })
}

/// Draws `y_i ~ Poisson(mean_i + background_i)` with an independent stream per pixel.
pub fn sample_counts(mean: &[f64], background: &[f64], seed: u64) -> Vec<f64> {
    mean.par_iter()
        .zip(background.par_iter())
        .enumerate()
        .map(|(i, (&m, &r))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            poisson(m + r, &mut rng) as f64
        })
        .collect()
}

/// Poisson variate: sequential-search inversion below 30, otherwise the
/// transformed-rejection-with-squeeze method.
pub fn poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if !(lambda > 0.0) {
        return 0;
    }
    if lambda < 30.0 {
        let mut p = (-lambda).exp();
        let mut cdf = p;
        let u: f64 = rng.gen();
        let mut k = 0u64;
        while u > cdf {
            k += 1;
            p *= lambda / k as f64;
            cdf += p;
            if p == 0.0 && cdf < u {
                break;
            }
        }
        return k;
    }
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u: f64 = rng.gen::<f64>() - 0.5;
        let v: f64 = rng.gen();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = (v * inv_alpha / (a / (us * us) + b)).ln();
        let rhs = -lambda + k * loglam - ln_factorial(k);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

fn ln_factorial(k: f64) -> f64 {
    if k < 10.0 {
        let mut acc = 0.0;
        let mut i = 2.0;
        while i <= k {
            acc += f64::ln(i);
            i += 1.0;
        }
        acc
    } else {
        // Stirling series.
        let k1 = k + 1.0;
        (k1 - 0.5) * k1.ln() - k1 + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * k1)
            - 1.0 / (360.0 * k1 * k1 * k1)
    }
}

/// `sum_q f(x, y, q) dq`, row-major `nx x ny`.
pub fn spatial_distribution(f: &HyperspectralImage, dq: f64) -> Vec<f64> {
    let (nx, ny, _) = f.dims();
    let mut out = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            out.push(f.spectrum(i, j).iter().sum::<f64>() * dq);
        }
    }
    out
}

/// Mean profile over `region`, max-normalized.
pub fn mean_mtp(f: &HyperspectralImage, region: &[(usize, usize)]) -> Result<Vec<f64>> {
    if region.is_empty() {
        return Err(Error::Domain("region is empty".into()));
    }
    let (nx, ny, nq) = f.dims();
    let mut acc = vec![0.0; nq];
    for &(i, j) in region {
        if i >= nx || j >= ny {
            return Err(Error::DimensionMismatch(format!("region pixel ({i}, {j}) outside {nx}x{ny}")));
        }
        for (a, &v) in acc.iter_mut().zip(f.spectrum(i, j)) {
            *a += v;
        }
    }
    let max = acc.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::Numerical {
            msg: "mean profile over the region is zero; cannot normalize".into(),
        });
    }
    Ok(acc.into_iter().map(|v| v / max).collect())
}

/// Intensity-weighted centroid `(i, j)` of `image` (row-major `nx x ny`) over `region`.
pub fn centroid(image: &[f64], ny: usize, region: &[(usize, usize)]) -> Option<(f64, f64)> {
    let (mut w, mut ci, mut cj) = (0.0, 0.0, 0.0);
    for &(i, j) in region {
        let v = image[i * ny + j].max(0.0);
        w += v;
        ci += v * i as f64;
        cj += v * j as f64;
    }
    (w > 0.0).then(|| (ci / w, cj / w))
}
