//! Fan-beam system geometry and per-ray geometric factors.
//!
//! The source focal spot sits at the origin, the fan beam lies in the `z = 0`
//! plane and the flat detector is the plane `x = detector_distance`. Detector
//! pixel `(m, n)` has row `m` along `z` (row 0 is the top, largest `z`) and
//! column `n` along `y` (increasing `y`). Object pixel `(i, j)` has `i` along
//! `x` and `j` along `y`.
//!
//! Transverse coordinates of detector and object pixel centers are integer
//! multiples of half a detector pitch. Scatter vectors are formed from those
//! integers before scaling, so translating both endpoints by one object pixel
//! reproduces the scatter vector bit for bit and mirror images are exact
//! negations.

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Point3 = Vector3<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct SystemGeometry {
    /// Source-to-detector distance along `+x` (mm).
    pub detector_distance: f64,
    /// Detector rows `M` (along `z`).
    pub detector_rows: usize,
    /// Detector columns `N` (along `y`).
    pub detector_cols: usize,
    /// Detector pixel pitch (mm), identical in `y` and `z`.
    pub detector_pitch: f64,
    /// Distance from the detector plane back toward the source to the mask plane (mm).
    pub mask_distance: f64,
    pub object_center_x: f64,
    pub object_nx: usize,
    pub object_ny: usize,
    pub object_dx: f64,
    /// Detector pixels per object pixel along `y`.
    pub translation_step: usize,
}

impl SystemGeometry {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Geometry(msg));
        if !(self.detector_distance > 0.0) {
            return fail(format!("detector_distance must be > 0, got {}", self.detector_distance));
        }
        if !(self.detector_pitch > 0.0) {
            return fail(format!("detector_pitch must be > 0, got {}", self.detector_pitch));
        }
        if !(self.object_dx > 0.0) {
            return fail(format!("object_dx must be > 0, got {}", self.object_dx));
        }
        if self.detector_rows == 0 || self.detector_rows % 2 != 0 {
            return fail(format!("detector_rows must be even and positive, got {}", self.detector_rows));
        }
        if self.detector_cols == 0 || self.detector_cols % 2 != 0 {
            return fail(format!("detector_cols must be even and positive, got {}", self.detector_cols));
        }
        if self.object_nx == 0 {
            return fail("object_nx must be positive".into());
        }
        if self.object_ny == 0 || self.object_ny % 2 != 0 {
            return fail(format!("object_ny must be even and positive, got {}", self.object_ny));
        }
        if self.translation_step == 0 {
            return fail("translation_step must be a positive integer".into());
        }
        let x_near = self.object_x(0) - 0.5 * self.object_dx;
        if !(x_near > 0.0) {
            return fail(format!("object grid extends behind the source (near edge x = {x_near} mm)"));
        }
        let x_far = self.object_x(self.object_nx - 1) + 0.5 * self.object_dx;
        if !(self.mask_distance > 0.0) || !(x_far < self.mask_plane_x()) {
            return fail(format!(
                "mask plane x = {} mm must lie strictly between the object (far edge {x_far} mm) and the detector",
                self.mask_plane_x()
            ));
        }
        Ok(())
    }

    pub fn object_dy(&self) -> f64 {
        self.translation_step as f64 * self.detector_pitch
    }

    pub fn mask_plane_x(&self) -> f64 {
        self.detector_distance - self.mask_distance
    }

    pub fn half_rows(&self) -> usize {
        self.detector_rows / 2
    }

    pub fn half_ny(&self) -> usize {
        self.object_ny / 2
    }

    pub fn pixel_count(&self) -> usize {
        self.detector_rows * self.detector_cols
    }

    pub fn object_pixel_count(&self) -> usize {
        self.object_nx * self.object_ny
    }

    #[inline]
    fn half_pitch(&self) -> f64 {
        0.5 * self.detector_pitch
    }

    /// Detector column center in half-pitch units.
    #[inline]
    fn col_units(&self, n: usize) -> i64 {
        2 * n as i64 - self.detector_cols as i64 + 1
    }

    /// Detector row center in half-pitch units (row 0 is the top).
    #[inline]
    fn row_units(&self, m: usize) -> i64 {
        self.detector_rows as i64 - 1 - 2 * m as i64
    }

    /// Object column center in half-pitch units.
    #[inline]
    fn object_col_units(&self, j: usize) -> i64 {
        self.translation_step as i64 * (2 * j as i64 - self.object_ny as i64 + 1)
    }

    #[inline]
    pub fn object_x(&self, i: usize) -> f64 {
        self.object_center_x + 0.5 * self.object_dx * (2 * i as i64 - self.object_nx as i64 + 1) as f64
    }

    #[inline]
    pub fn object_y(&self, j: usize) -> f64 {
        self.half_pitch() * self.object_col_units(j) as f64
    }

    #[inline]
    pub fn detector_y(&self, n: usize) -> f64 {
        self.half_pitch() * self.col_units(n) as f64
    }

    #[inline]
    pub fn detector_z(&self, m: usize) -> f64 {
        self.half_pitch() * self.row_units(m) as f64
    }

    pub fn object_point(&self, i: usize, j: usize) -> Point3 {
        Point3::new(self.object_x(i), self.object_y(j), 0.0)
    }

    pub fn detector_point(&self, m: usize, n: usize) -> Point3 {
        Point3::new(self.detector_distance, self.detector_y(n), self.detector_z(m))
    }

    /// Scatter vector from object pixel `(i, j)` to detector pixel `(m, n)`.
    #[inline]
    pub fn scatter_vector(&self, i: usize, j: usize, m: usize, n: usize) -> Point3 {
        let hp = self.half_pitch();
        Point3::new(
            self.detector_distance - self.object_x(i),
            hp * (self.col_units(n) - self.object_col_units(j)) as f64,
            hp * self.row_units(m) as f64,
        )
    }

    #[inline]
    pub fn mirror_row(&self, m: usize) -> usize {
        self.detector_rows - 1 - m
    }

    #[inline]
    pub fn mirror_col(&self, n: usize) -> usize {
        self.detector_cols - 1 - n
    }

    #[inline]
    pub fn mirror_object_col(&self, j: usize) -> usize {
        self.object_ny - 1 - j
    }
}

// Unchecked kernels used in the projector inner loops.

#[inline]
pub(crate) fn gso_kernel(x: f64, y: f64) -> f64 {
    let r2 = x * x + y * y;
    x / (r2 * r2.sqrt())
}

#[inline]
pub(crate) fn god_kernel(s: &Point3) -> f64 {
    let s2 = s.x * s.x + s.y * s.y + s.z * s.z;
    s.x.abs() / (s2 * s2.sqrt())
}

/// Angle between `r = [x, y, 0]` and `s`, via `atan2(|r x s|, r . s)`.
#[inline]
pub(crate) fn theta_kernel(x: f64, y: f64, s: &Point3) -> f64 {
    let cz = x * s.y - y * s.x;
    let cross = (s.z * s.z * (x * x + y * y) + cz * cz).sqrt();
    let dot = x * s.x + y * s.y;
    cross.atan2(dot)
}

/// Angle between `s + [0, 0, h]` and `s - [0, 0, h]`.
#[inline]
pub(crate) fn spread_kernel(s: &Point3, half_pitch: f64) -> f64 {
    let rho2 = s.x * s.x + s.y * s.y;
    let cross = 2.0 * half_pitch * rho2.sqrt();
    let dot = rho2 + s.z * s.z - half_pitch * half_pitch;
    cross.atan2(dot)
}

/// Source-to-object solid-angle factor `x / (x^2 + y^2)^1.5` (mm^-2).
pub fn source_object_factor(r: &Point3) -> Result<f64> {
    if !(r.x > 0.0) {
        return Err(Error::InvalidObjectPoint { x: r.x });
    }
    Ok(gso_kernel(r.x, r.y))
}

/// Object-to-detector solid-angle factor `|n_d . s_hat| / |s|^2` with the
/// detector normal along `x` (mm^-2).
pub fn object_detector_factor(s: &Point3) -> Result<f64> {
    if s.norm_squared() == 0.0 {
        return Err(Error::DegenerateRay("zero-length scatter vector"));
    }
    Ok(god_kernel(s))
}

/// Scatter angle between the incident direction `r_hat` and the scatter
/// direction toward `r_det`.
pub fn scatter_angle(r: &Point3, r_det: &Point3) -> Result<f64> {
    let s = r_det - r;
    if s.norm_squared() == 0.0 {
        return Err(Error::DegenerateRay("object and detector points coincide"));
    }
    if r.norm_squared() == 0.0 {
        return Err(Error::DegenerateRay("object point at the source"));
    }
    Ok(r.cross(&s).norm().atan2(r.dot(&s)))
}

/// Angular spread subtended at `r` by a detector pixel centered at `r_det`:
/// the angle between the scatter vectors to the midpoints of the pixel's two
/// edges along `z`.
pub fn angular_spread(r: &Point3, r_det: &Point3, pitch: f64) -> Result<f64> {
    let s = r_det - r;
    if s.norm_squared() == 0.0 {
        return Err(Error::DegenerateRay("object and detector points coincide"));
    }
    let h = Point3::new(0.0, 0.0, 0.5 * pitch);
    let upper = s + h;
    let lower = s - h;
    if upper.norm_squared() == 0.0 || lower.norm_squared() == 0.0 {
        return Err(Error::DegenerateRay("pixel edge coincides with the object point"));
    }
    Ok(upper.cross(&lower).norm().atan2(upper.dot(&lower)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorHalf {
    Up,
    Down,
}

/// Object-to-detector factors from one object pixel to a set of detector
/// pixels (a row set times a column set), maintained across a sweep along `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct GodBlock {
    object_i: usize,
    object_j: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    /// For each detector column, its slot in `cols` if present.
    col_slot: Vec<Option<u32>>,
    values: Vec<f64>,
    recomputed_cols: usize,
}

impl GodBlock {
    /// Freshly computes the block for object pixel `(i, j)`. `cols` must be
    /// strictly increasing.
    pub fn compute(geom: &SystemGeometry, i: usize, j: usize, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_slot = vec![None; geom.detector_cols];
        for (slot, &n) in cols.iter().enumerate() {
            debug_assert!(slot == 0 || cols[slot - 1] < n);
            col_slot[n] = Some(slot as u32);
        }
        let mut block = GodBlock {
            object_i: i,
            object_j: j,
            rows: rows.to_vec(),
            cols: cols.to_vec(),
            col_slot,
            values: vec![0.0; rows.len() * cols.len()],
            recomputed_cols: cols.len(),
        };
        for slot in 0..cols.len() {
            block.fill_column(geom, slot);
        }
        block
    }

    fn fill_column(&mut self, geom: &SystemGeometry, slot: usize) {
        let n = self.cols[slot];
        let width = self.cols.len();
        for (r, &m) in self.rows.iter().enumerate() {
            let s = geom.scatter_vector(self.object_i, self.object_j, m, n);
            self.values[r * width + slot] = god_kernel(&s);
        }
    }

    /// Moves the block one object pixel along `+y`: columns whose source
    /// column `n - translation_step` is tracked are copied, the rest are
    /// recomputed.
    pub fn translate_in_place(&mut self, geom: &SystemGeometry) {
        let step = geom.translation_step;
        let width = self.cols.len();
        self.object_j += 1;
        let mut recomputed = 0;
        for slot in (0..width).rev() {
            let n = self.cols[slot];
            let src = n.checked_sub(step).and_then(|src| self.col_slot[src]);
            match src {
                Some(src) => {
                    let src = src as usize;
                    for r in 0..self.rows.len() {
                        self.values[r * width + slot] = self.values[r * width + src];
                    }
                }
                None => {
                    self.fill_column(geom, slot);
                    recomputed += 1;
                }
            }
        }
        self.recomputed_cols = recomputed;
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    pub fn object_index(&self) -> (usize, usize) {
        (self.object_i, self.object_j)
    }

    /// Number of columns computed from scratch by the last construction or update.
    pub fn recomputed_cols(&self) -> usize {
        self.recomputed_cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols.len() + col]
    }
}

fn half_rows(geom: &SystemGeometry, half: DetectorHalf) -> Vec<usize> {
    let h = geom.half_rows();
    match half {
        DetectorHalf::Up => (0..h).collect(),
        DetectorHalf::Down => (h..geom.detector_rows).collect(),
    }
}

/// `M/2 x N` object-to-detector factors from object pixel `(i, j)` to one
/// detector half.
pub fn god_block(geom: &SystemGeometry, i: usize, j: usize, half: DetectorHalf) -> GodBlock {
    let cols: Vec<usize> = (0..geom.detector_cols).collect();
    GodBlock::compute(geom, i, j, &half_rows(geom, half), &cols)
}

/// Updates `prev` (the block of object pixel `(i, j - 1)`) to object pixel
/// `(i, j)` using translation symmetry.
pub fn god_translate_update(geom: &SystemGeometry, prev: &GodBlock, i: usize, j: usize) -> Result<GodBlock> {
    let (pi, pj) = prev.object_index();
    if pi != i || pj + 1 != j {
        return Err(Error::Misuse(format!(
            "translation update from object pixel ({pi}, {pj}) to ({i}, {j}) is not a single +y step"
        )));
    }
    if j >= geom.object_ny {
        return Err(Error::Misuse(format!("object column {j} outside the grid")));
    }
    let mut next = prev.clone();
    next.translate_in_place(geom);
    Ok(next)
}
