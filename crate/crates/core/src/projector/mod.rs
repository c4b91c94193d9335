//! Forward and backward projectors of the coherent-scatter model.
//!
//! `g(r') = C sum_r G_so(r) G_od(s) T(r, r') dtheta W(r, theta)` with
//! `W(r, theta) = dq sum_q S(theta, q) f(r, q)`. The backward operator is the
//! exact adjoint of the forward operator for matching options.

pub mod benchmark;
mod naive;
mod optimized;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::geometry::{gso_kernel, SystemGeometry};
use crate::image::{DetectorImage, HyperspectralImage};
use crate::mask::{MaskImage, QuadrantStacks};
use crate::spectrum::{
    angular_prefactor, factor_within, grid_node, InterpMode, MomentumGrid, SourceSpectrum, SpectralFactorTable,
    HC_KEV_ANGSTROM,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectorConfig {
    pub use_interpolation: bool,
    pub use_translation_sym: bool,
    pub use_lr_mirror: bool,
    pub use_ud_mirror: bool,
    pub precompute_gso: bool,
    pub precompute_mask_quadrants: bool,
    /// Scatter-angle samples on `(0, theta_max]`.
    pub n_theta: usize,
    pub theta_max: f64,
    pub interp_mode: InterpMode,
    /// Normalization constant `C`.
    pub normalization: f64,
}

impl Default for ProjectorConfig {
    fn default() -> Self {
        ProjectorConfig {
            use_interpolation: false,
            use_translation_sym: false,
            use_lr_mirror: false,
            use_ud_mirror: false,
            precompute_gso: false,
            precompute_mask_quadrants: false,
            n_theta: 250,
            theta_max: std::f64::consts::FRAC_PI_6,
            interp_mode: InterpMode::Nearest,
            normalization: 1.0,
        }
    }
}

impl ProjectorConfig {
    /// Options of a benchmark variant, keeping angle sampling and `C` from `self`.
    pub fn with_variant(&self, variant: Variant) -> Self {
        let mut cfg = ProjectorConfig {
            use_interpolation: false,
            use_translation_sym: false,
            use_lr_mirror: false,
            use_ud_mirror: false,
            precompute_gso: false,
            precompute_mask_quadrants: false,
            ..*self
        };
        match variant {
            Variant::NO => {}
            Variant::SAI => cfg.use_interpolation = true,
            Variant::TS => cfg.use_translation_sym = true,
            Variant::LRMS => cfg.use_lr_mirror = true,
            Variant::UDMS => cfg.use_ud_mirror = true,
            Variant::OOT => {
                cfg.precompute_gso = true;
                cfg.precompute_mask_quadrants = true;
            }
            Variant::AO => {
                cfg.use_interpolation = true;
                cfg.use_translation_sym = true;
                cfg.use_lr_mirror = true;
                cfg.use_ud_mirror = true;
                cfg.precompute_gso = true;
                cfg.precompute_mask_quadrants = true;
            }
        }
        cfg
    }

    pub fn all_optimizations() -> Self {
        Self::default().with_variant(Variant::AO)
    }
}

/// Optimization levels compared in the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// No optimization.
    NO,
    /// Scatter-angle interpolation.
    SAI,
    /// Translation symmetry.
    TS,
    /// Left-right mirror symmetry.
    LRMS,
    /// Up-down mirror symmetry.
    UDMS,
    /// Offline precomputation of `G_so` and the mask factors.
    OOT,
    /// All optimizations.
    AO,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::NO,
        Variant::SAI,
        Variant::TS,
        Variant::LRMS,
        Variant::UDMS,
        Variant::OOT,
        Variant::AO,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::NO => "NO",
            Variant::SAI => "SAI",
            Variant::TS => "TS",
            Variant::LRMS => "LRMS",
            Variant::UDMS => "UDMS",
            Variant::OOT => "OOT",
            Variant::AO => "AO",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .iter()
            .copied()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown variant '{s}' (expected NO, SAI, TS, LRMS, UDMS, OOT or AO)")))
    }
}

/// Detector pixels a projection is restricted to.
#[derive(Debug, Clone, Copy)]
pub enum Scope<'a> {
    Full,
    /// Row-major membership flags over the `M x N` detector.
    Subset(&'a [bool]),
}

/// Rows and columns touched by a scope, plus the exact membership.
pub(crate) struct PixelSet<'a> {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub member: Option<&'a [bool]>,
}

impl<'a> PixelSet<'a> {
    pub fn new(geom: &SystemGeometry, scope: Scope<'a>) -> Result<Self> {
        let (m, n) = (geom.detector_rows, geom.detector_cols);
        match scope {
            Scope::Full => Ok(PixelSet {
                rows: (0..m).collect(),
                cols: (0..n).collect(),
                member: None,
            }),
            Scope::Subset(member) => {
                if member.len() != m * n {
                    return Err(Error::DimensionMismatch(format!(
                        "subset mask has {} entries, detector has {}",
                        member.len(),
                        m * n
                    )));
                }
                let rows = (0..m).filter(|&r| member[r * n..(r + 1) * n].iter().any(|&b| b)).collect();
                let cols = (0..n).filter(|&c| (0..m).any(|r| member[r * n + c])).collect();
                Ok(PixelSet {
                    rows,
                    cols,
                    member: Some(member),
                })
            }
        }
    }

    #[inline]
    pub fn contains(&self, pixel: usize) -> bool {
        self.member.map_or(true, |m| m[pixel])
    }
}

/// Where a ray's scatter angle falls relative to the modeled range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum AngleClass {
    /// Nearer to `theta = 0` than to the first grid angle: no contribution.
    Forward,
    /// Beyond `theta_max`: no contribution, counted.
    OutOfRange,
    /// 1-based nearest grid node.
    Node(usize),
}

/// Linear operator interface used by the reconstruction.
pub trait LinearOperator: Sync {
    fn object_len(&self) -> usize;
    fn detector_len(&self) -> usize;
    fn forward(&self, f: &[f64], scope: Scope<'_>) -> Result<Vec<f64>>;
    fn backward(&self, g: &[f64], scope: Scope<'_>) -> Result<Vec<f64>>;
}

pub struct Projector {
    geom: SystemGeometry,
    grid: MomentumGrid,
    spectrum: SourceSpectrum,
    mask: MaskImage,
    cfg: ProjectorConfig,
    dq: f64,
    theta_step: f64,
    table: Option<SpectralFactorTable>,
    stacks: Option<QuadrantStacks>,
    gso: Option<Vec<f64>>,
    out_of_range: AtomicU64,
}

impl fmt::Debug for Projector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Projector")
            .field("geom", &self.geom)
            .field("cfg", &self.cfg)
            .finish_non_exhaustive()
    }
}

impl Projector {
    pub fn new(
        geom: SystemGeometry,
        grid: MomentumGrid,
        spectrum: SourceSpectrum,
        mask: MaskImage,
        cfg: ProjectorConfig,
    ) -> Result<Self> {
        geom.validate()?;
        if cfg.n_theta < 2 {
            return Err(Error::Config(format!("n_theta must be at least 2, got {}", cfg.n_theta)));
        }
        if !(cfg.theta_max > 0.0 && cfg.theta_max < std::f64::consts::PI) {
            return Err(Error::Config(format!("theta_max must lie in (0, pi), got {}", cfg.theta_max)));
        }
        if !(cfg.normalization.is_finite() && cfg.normalization > 0.0) {
            return Err(Error::Config(format!(
                "normalization constant must be positive, got {}",
                cfg.normalization
            )));
        }
        let table = if cfg.use_interpolation {
            Some(SpectralFactorTable::build(&spectrum, &grid, cfg.n_theta, cfg.theta_max)?)
        } else {
            None
        };
        let stacks = if cfg.precompute_mask_quadrants {
            Some(QuadrantStacks::precompute(&mask, &geom)?)
        } else {
            None
        };
        let gso = cfg.precompute_gso.then(|| {
            let mut v = Vec::with_capacity(geom.object_pixel_count());
            for i in 0..geom.object_nx {
                for j in 0..geom.object_ny {
                    v.push(gso_kernel(geom.object_x(i), geom.object_y(j)));
                }
            }
            v
        });
        Ok(Projector {
            dq: grid.spacing(),
            theta_step: cfg.theta_max / cfg.n_theta as f64,
            geom,
            grid,
            spectrum,
            mask,
            cfg,
            table,
            stacks,
            gso,
            out_of_range: AtomicU64::new(0),
        })
    }

    /// Same system with different projector options.
    pub fn reconfigured(&self, cfg: ProjectorConfig) -> Result<Self> {
        Projector::new(
            self.geom.clone(),
            self.grid.clone(),
            self.spectrum.clone(),
            self.mask.clone(),
            cfg,
        )
    }

    pub fn geometry(&self) -> &SystemGeometry {
        &self.geom
    }

    pub fn grid(&self) -> &MomentumGrid {
        &self.grid
    }

    pub fn spectrum(&self) -> &SourceSpectrum {
        &self.spectrum
    }

    pub fn mask(&self) -> &MaskImage {
        &self.mask
    }

    pub fn config(&self) -> &ProjectorConfig {
        &self.cfg
    }

    pub fn table(&self) -> Option<&SpectralFactorTable> {
        self.table.as_ref()
    }

    /// Rays with transmission but a scatter angle beyond `theta_max`,
    /// accumulated over all projections so far.
    pub fn out_of_range_rays(&self) -> u64 {
        self.out_of_range.load(Ordering::Relaxed)
    }

    pub fn reset_counters(&self) {
        self.out_of_range.store(0, Ordering::Relaxed);
    }

    pub(crate) fn add_out_of_range(&self, n: u64) {
        if n > 0 {
            self.out_of_range.fetch_add(n, Ordering::Relaxed);
        }
    }

    #[inline]
    pub(crate) fn classify(&self, theta: f64) -> AngleClass {
        if theta > self.cfg.theta_max {
            return AngleClass::OutOfRange;
        }
        match grid_node(theta, self.theta_step, self.cfg.n_theta) {
            0 => AngleClass::Forward,
            k => AngleClass::Node(k),
        }
    }

    #[inline]
    pub(crate) fn gso_at(&self, i: usize, j: usize) -> f64 {
        match &self.gso {
            Some(t) => t[i * self.geom.object_ny + j],
            None => gso_kernel(self.geom.object_x(i), self.geom.object_y(j)),
        }
    }

    #[inline]
    pub(crate) fn transmits(&self, i: usize, j: usize, m: usize, n: usize) -> bool {
        match &self.stacks {
            Some(st) => st.get(i, j, m, n),
            None => self.mask.transmits(&self.geom, i, j, m, n),
        }
    }

    /// Exact `S(theta, q)` for every momentum bin.
    #[inline]
    pub(crate) fn spectral_row(&self, theta: f64, out: &mut [f64]) {
        let pre = angular_prefactor(theta);
        let (lo, hi) = self.support(pre);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (o, &q) in out[lo..hi].iter_mut().zip(&self.grid.values()[lo..hi]) {
            *o = factor_within(pre, q, &self.spectrum);
        }
    }

    /// Momentum bins whose Bragg energy lies inside the source spectrum;
    /// the spectral factor is exactly zero elsewhere.
    #[inline]
    fn support(&self, pre: (f64, f64)) -> (usize, usize) {
        let q = self.grid.values();
        let energy = |q: f64| HC_KEV_ANGSTROM * q * pre.1;
        let (e_min, e_max) = (self.spectrum.e_min(), self.spectrum.e_max());
        let lo = q.partition_point(|&v| energy(v) < e_min);
        let hi = lo + q[lo..].partition_point(|&v| energy(v) <= e_max);
        (lo, hi)
    }

    /// Exact `W(theta)` for one spectrum.
    #[inline]
    pub(crate) fn exact_w(&self, theta: f64, f_row: &[f64]) -> f64 {
        let pre = angular_prefactor(theta);
        let (lo, hi) = self.support(pre);
        let mut acc = 0.0;
        for (&q, &fv) in self.grid.values()[lo..hi].iter().zip(&f_row[lo..hi]) {
            acc += factor_within(pre, q, &self.spectrum) * fv;
        }
        acc * self.dq
    }

    /// Exact `W(theta)` for two spectra sharing the spectral factor.
    #[inline]
    pub(crate) fn exact_w_pair(&self, theta: f64, f_l: &[f64], f_r: &[f64]) -> (f64, f64) {
        let pre = angular_prefactor(theta);
        let (lo, hi) = self.support(pre);
        let (mut a, mut b) = (0.0, 0.0);
        for ((&q, &fl), &fr) in self.grid.values()[lo..hi].iter().zip(&f_l[lo..hi]).zip(&f_r[lo..hi]) {
            let s = factor_within(pre, q, &self.spectrum);
            a += s * fl;
            b += s * fr;
        }
        (a * self.dq, b * self.dq)
    }

    pub(crate) fn check_object(&self, f: &HyperspectralImage) -> Result<()> {
        let want = (self.geom.object_nx, self.geom.object_ny, self.grid.len());
        if f.dims() != want {
            return Err(Error::DimensionMismatch(format!(
                "object image is {:?}, system expects {:?}",
                f.dims(),
                want
            )));
        }
        Ok(())
    }

    pub(crate) fn check_detector(&self, g: &DetectorImage) -> Result<()> {
        let want = (self.geom.detector_rows, self.geom.detector_cols);
        if g.dims() != want {
            return Err(Error::DimensionMismatch(format!(
                "detector image is {:?}, system expects {:?}",
                g.dims(),
                want
            )));
        }
        Ok(())
    }

    pub fn zero_object(&self) -> HyperspectralImage {
        HyperspectralImage::zeros(self.geom.object_nx, self.geom.object_ny, self.grid.len())
    }

    pub fn zero_detector(&self) -> DetectorImage {
        DetectorImage::zeros(self.geom.detector_rows, self.geom.detector_cols)
    }

    /// Forward projection with the configured options.
    pub fn forward(&self, f: &HyperspectralImage, scope: Scope<'_>) -> Result<DetectorImage> {
        self.forward_optimized(f, scope)
    }

    /// Backward projection with the configured options.
    pub fn backward(&self, g: &DetectorImage, scope: Scope<'_>) -> Result<HyperspectralImage> {
        self.backward_optimized(g, scope)
    }
}

/// `W = dq sum_q S(q) f(q)`.
pub fn effective_spectral(f_row: &[f64], s_row: &[f64], dq: f64) -> Result<f64> {
    if f_row.len() != s_row.len() {
        return Err(Error::DimensionMismatch(format!(
            "spectrum has {} bins, spectral factor row has {}",
            f_row.len(),
            s_row.len()
        )));
    }
    let mut acc = 0.0;
    for (&s, &f) in s_row.iter().zip(f_row) {
        acc += s * f;
    }
    Ok(acc * dq)
}

impl LinearOperator for Projector {
    fn object_len(&self) -> usize {
        self.geom.object_pixel_count() * self.grid.len()
    }

    fn detector_len(&self) -> usize {
        self.geom.pixel_count()
    }

    fn forward(&self, f: &[f64], scope: Scope<'_>) -> Result<Vec<f64>> {
        let (nx, ny, nq) = (self.geom.object_nx, self.geom.object_ny, self.grid.len());
        let f = HyperspectralImage::from_vec(nx, ny, nq, f.to_vec())?;
        Ok(self.forward_optimized(&f, scope)?.into_vec())
    }

    fn backward(&self, g: &[f64], scope: Scope<'_>) -> Result<Vec<f64>> {
        let g = DetectorImage::from_vec(self.geom.detector_rows, self.geom.detector_cols, g.to_vec())?;
        Ok(self.backward_optimized(&g, scope)?.into_vec())
    }
}

/// The unoptimized projector pair behind the [`LinearOperator`] interface.
pub struct NaiveOperator<'a>(pub &'a Projector);

impl LinearOperator for NaiveOperator<'_> {
    fn object_len(&self) -> usize {
        self.0.object_len()
    }

    fn detector_len(&self) -> usize {
        self.0.detector_len()
    }

    fn forward(&self, f: &[f64], scope: Scope<'_>) -> Result<Vec<f64>> {
        let g = &self.0.geom;
        let f = HyperspectralImage::from_vec(g.object_nx, g.object_ny, self.0.grid.len(), f.to_vec())?;
        Ok(self.0.forward_naive(&f, scope)?.into_vec())
    }

    fn backward(&self, g: &[f64], scope: Scope<'_>) -> Result<Vec<f64>> {
        let geom = &self.0.geom;
        let g = DetectorImage::from_vec(geom.detector_rows, geom.detector_cols, g.to_vec())?;
        Ok(self.0.backward_naive(&g, scope)?.into_vec())
    }
}
