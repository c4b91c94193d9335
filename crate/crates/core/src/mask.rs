//! Binary coded aperture in the mask plane and the transmission factor `T`.

use bitvec::prelude::*;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Point3, SystemGeometry};

/// Placement of a mask raster in its plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskLayout {
    /// In-plane pixel pitch (mm).
    pub pitch: f64,
    /// Raster center offset from the central ray along `y` (mm).
    pub offset_y: f64,
    /// Raster center offset from the central ray along `z` (mm).
    pub offset_z: f64,
}

impl MaskLayout {
    pub fn centered(pitch: f64) -> Self {
        MaskLayout {
            pitch,
            offset_y: 0.0,
            offset_z: 0.0,
        }
    }
}

/// Binary raster, row 0 at the top (largest `z`), column 0 at the smallest `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskImage {
    rows: usize,
    cols: usize,
    bits: BitVec,
    layout: MaskLayout,
}

impl MaskImage {
    pub fn from_bits(rows: usize, cols: usize, open: &[bool], layout: MaskLayout) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DegenerateMask("empty raster"));
        }
        if open.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "mask raster {rows}x{cols} needs {} values, got {}",
                rows * cols,
                open.len()
            )));
        }
        if !(layout.pitch > 0.0) {
            return Err(Error::Domain(format!("mask pitch must be > 0, got {}", layout.pitch)));
        }
        Ok(MaskImage {
            rows,
            cols,
            bits: open.iter().copied().collect(),
            layout,
        })
    }

    pub fn filled(rows: usize, cols: usize, open: bool, layout: MaskLayout) -> Result<Self> {
        Self::from_bits(rows, cols, &vec![open; rows * cols], layout)
    }

    /// Thresholds a nonnegative raster at `fraction * max`.
    pub fn binarize(raster: &[f64], rows: usize, cols: usize, fraction: f64, layout: MaskLayout) -> Result<Self> {
        if raster.is_empty() {
            return Err(Error::DegenerateMask("empty raster"));
        }
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::Domain(format!("threshold fraction must lie in (0, 1], got {fraction}")));
        }
        if raster.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Domain("mask raster must be finite and nonnegative".into()));
        }
        let max = raster.iter().copied().fold(0.0, f64::max);
        if max == 0.0 {
            return Err(Error::DegenerateMask("raster is all zeros"));
        }
        let tau = fraction * max;
        let open: Vec<bool> = raster.iter().map(|&v| v >= tau).collect();
        Self::from_bits(rows, cols, &open, layout)
    }

    /// Pseudo-random pattern with each pixel open with probability `open_fraction`.
    pub fn random(rows: usize, cols: usize, open_fraction: f64, seed: u64, layout: MaskLayout) -> Result<Self> {
        if !(0.0..=1.0).contains(&open_fraction) {
            return Err(Error::Domain(format!("open fraction must lie in [0, 1], got {open_fraction}")));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let open: Vec<bool> = (0..rows * cols).map(|_| rng.gen_bool(open_fraction)).collect();
        Self::from_bits(rows, cols, &open, layout)
    }

    /// Closes every row whose center lies within `half_height` of `z = 0`.
    pub fn with_beam_stop(mut self, half_height: f64) -> Self {
        for r in 0..self.rows {
            let zc = self.layout.offset_z + self.layout.pitch * (0.5 * self.rows as f64 - r as f64 - 0.5);
            if zc.abs() < half_height {
                for c in 0..self.cols {
                    self.bits.set(r * self.cols + c, false);
                }
            }
        }
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn layout(&self) -> MaskLayout {
        self.layout
    }

    pub fn is_open(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.cols + col]
    }

    pub fn open_fraction(&self) -> f64 {
        self.bits.count_ones() as f64 / self.bits.len() as f64
    }

    /// Raster value at in-plane point `(y, z)`; outside the raster is opaque.
    #[inline]
    pub fn sample(&self, y: f64, z: f64) -> bool {
        let inv = 1.0 / self.layout.pitch;
        let c = (y - self.layout.offset_y) * inv + 0.5 * self.cols as f64;
        let r = 0.5 * self.rows as f64 - (z - self.layout.offset_z) * inv;
        if !(c >= 0.0 && r >= 0.0) {
            return false;
        }
        let (c, r) = (c as usize, r as usize);
        c < self.cols && r < self.rows && self.bits[r * self.cols + c]
    }

    /// `T(r, r')` for arbitrary points.
    pub fn transmission(&self, geom: &SystemGeometry, r: &Point3, r_det: &Point3) -> Result<bool> {
        let xm = geom.mask_plane_x();
        if !(r.x < xm) || !(r_det.x > xm) {
            return Err(Error::Geometry(format!(
                "mask plane x = {xm} mm must lie strictly between the object (x = {}) and detector (x = {})",
                r.x, r_det.x
            )));
        }
        let s = r_det - r;
        let t = (xm - r.x) / s.x;
        Ok(self.sample(r.y + t * s.y, r.z + t * s.z))
    }

    /// `T` between object pixel `(i, j)` and detector pixel `(m, n)`.
    #[inline]
    pub fn transmits(&self, geom: &SystemGeometry, i: usize, j: usize, m: usize, n: usize) -> bool {
        let s = geom.scatter_vector(i, j, m, n);
        let t = (geom.mask_plane_x() - geom.object_x(i)) / s.x;
        self.sample(geom.object_y(j) + t * s.y, t * s.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrant {
    UL,
    DL,
    UR,
    DR,
}

/// Precomputed transmissions for every left-half object pixel `(i, j)`,
/// `j < ny / 2`, and its mirror `(i, ny - 1 - j)`, each against one detector
/// quadrant layout of `M/2 x N` pixels:
///
/// * `UL[i, j, m, n] = T((i, j), (m, n))`
/// * `DL[i, j, m, n] = T((i, j), (M - 1 - m, n))`
/// * `UR[i, j, m, n] = T((i, ny - 1 - j), (m, N - 1 - n))`
/// * `DR[i, j, m, n] = T((i, ny - 1 - j), (M - 1 - m, N - 1 - n))`
#[derive(Debug, Clone)]
pub struct QuadrantStacks {
    half_ny: usize,
    half_rows: usize,
    rows: usize,
    cols: usize,
    object_ny: usize,
    stacks: [BitVec; 4],
}

impl QuadrantStacks {
    pub fn precompute(mask: &MaskImage, geom: &SystemGeometry) -> Result<Self> {
        geom.validate()?;
        let half_ny = geom.half_ny();
        let hr = geom.half_rows();
        let (rows, cols) = (geom.detector_rows, geom.detector_cols);
        let points: Vec<(usize, usize)> = (0..geom.object_nx)
            .flat_map(|i| (0..half_ny).map(move |j| (i, j)))
            .collect();
        let per_point: Vec<[BitVec; 4]> = points
            .par_iter()
            .map(|&(i, j)| {
                let jr = geom.mirror_object_col(j);
                let mut out: [BitVec; 4] = Default::default();
                for b in out.iter_mut() {
                    b.reserve(hr * cols);
                }
                for m in 0..hr {
                    let md = rows - 1 - m;
                    for n in 0..cols {
                        let nr = cols - 1 - n;
                        out[0].push(mask.transmits(geom, i, j, m, n));
                        out[1].push(mask.transmits(geom, i, j, md, n));
                        out[2].push(mask.transmits(geom, i, jr, m, nr));
                        out[3].push(mask.transmits(geom, i, jr, md, nr));
                    }
                }
                out
            })
            .collect();
        let mut stacks: [BitVec; 4] = Default::default();
        for (q, stack) in stacks.iter_mut().enumerate() {
            stack.reserve(points.len() * hr * cols);
            for p in &per_point {
                stack.extend_from_bitslice(&p[q]);
            }
        }
        Ok(QuadrantStacks {
            half_ny,
            half_rows: hr,
            rows,
            cols,
            object_ny: geom.object_ny,
            stacks,
        })
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        (i * self.half_ny + j) * self.half_rows * self.cols
    }

    /// Transmission bits of quadrant `q` for left-half object pixel `(i, j)`,
    /// row-major `M/2 x N`.
    #[inline]
    pub fn block(&self, q: Quadrant, i: usize, j: usize) -> &BitSlice {
        let start = self.offset(i, j);
        &self.stacks[q as usize][start..start + self.half_rows * self.cols]
    }

    /// `T((i, j), (m, n))` for any object and detector pixel.
    #[inline]
    pub fn get(&self, i: usize, j: usize, m: usize, n: usize) -> bool {
        let up = m < self.half_rows;
        let mq = if up { m } else { self.rows - 1 - m };
        if j < self.half_ny {
            let q = if up { Quadrant::UL } else { Quadrant::DL };
            self.stacks[q as usize][self.offset(i, j) + mq * self.cols + n]
        } else {
            let q = if up { Quadrant::UR } else { Quadrant::DR };
            let jl = self.object_ny - 1 - j;
            self.stacks[q as usize][self.offset(i, jl) + mq * self.cols + (self.cols - 1 - n)]
        }
    }

    pub fn memory_bytes(&self) -> usize {
        self.stacks.iter().map(|s| s.as_raw_slice().len() * std::mem::size_of::<usize>()).sum()
    }
}
