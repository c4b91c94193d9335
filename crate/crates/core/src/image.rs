//! Object and detector image containers.

use crate::error::{Error, Result};

/// Scatter density `f(r, q)`, stored `[i][j][q]` (row-major, `q` fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct HyperspectralImage {
    nx: usize,
    ny: usize,
    nq: usize,
    data: Vec<f64>,
}

impl HyperspectralImage {
    pub fn zeros(nx: usize, ny: usize, nq: usize) -> Self {
        HyperspectralImage {
            nx,
            ny,
            nq,
            data: vec![0.0; nx * ny * nq],
        }
    }

    pub fn from_vec(nx: usize, ny: usize, nq: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != nx * ny * nq {
            return Err(Error::DimensionMismatch(format!(
                "hyperspectral image {nx}x{ny}x{nq} needs {} values, got {}",
                nx * ny * nq,
                data.len()
            )));
        }
        Ok(HyperspectralImage { nx, ny, nq, data })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nq)
    }

    pub fn spatial_len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn spectrum(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.ny + j) * self.nq;
        &self.data[start..start + self.nq]
    }

    #[inline]
    pub fn spectrum_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let start = (i * self.ny + j) * self.nq;
        &mut self.data[start..start + self.nq]
    }

    pub fn get(&self, i: usize, j: usize, q: usize) -> f64 {
        self.data[(i * self.ny + j) * self.nq + q]
    }

    pub fn set(&mut self, i: usize, j: usize, q: usize, v: f64) {
        self.data[(i * self.ny + j) * self.nq + q] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

/// Detector raster `g(m, n)`, row-major with row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorImage {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DetectorImage {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DetectorImage {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "detector image {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(DetectorImage { rows, cols, data })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.data[m * self.cols + n]
    }

    pub fn set(&mut self, m: usize, n: usize, v: f64) {
        self.data[m * self.cols + n] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `sqrt(mean((a - b)^2)) / sqrt(mean(b^2))`; zero when both are zero.
pub fn nrmse(a: &[f64], reference: &[f64]) -> Result<f64> {
    if a.len() != reference.len() {
        return Err(Error::DimensionMismatch(format!(
            "nrmse of {} values against {}",
            a.len(),
            reference.len()
        )));
    }
    let err: f64 = a.iter().zip(reference).map(|(x, y)| (x - y) * (x - y)).sum();
    let norm: f64 = reference.iter().map(|y| y * y).sum();
    if norm == 0.0 {
        return Ok(if err == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok((err / norm).sqrt())
}
