//! Direct evaluation of every (object pixel, detector pixel) ray with the
//! exact spectral factor.

use rayon::prelude::*;

use super::{AngleClass, PixelSet, Projector, Scope};
use crate::error::Result;
use crate::geometry::{god_kernel, spread_kernel, theta_kernel};
use crate::image::{DetectorImage, HyperspectralImage};

impl Projector {
    pub fn forward_naive(&self, f: &HyperspectralImage, scope: Scope<'_>) -> Result<DetectorImage> {
        self.check_object(f)?;
        let geom = &self.geom;
        let set = PixelSet::new(geom, scope)?;
        let pixels = member_pixels(&set, geom.detector_cols);
        let hp = 0.5 * geom.detector_pitch;

        let partials: Vec<(Vec<f64>, u64)> = (0..geom.object_nx)
            .into_par_iter()
            .map(|i| {
                let mut acc = vec![0.0; pixels.len()];
                let mut oor = 0u64;
                let x = geom.object_x(i);
                for j in 0..geom.object_ny {
                    let y = geom.object_y(j);
                    let gso = crate::geometry::gso_kernel(x, y);
                    let f_row = f.spectrum(i, j);
                    for (p, &(m, n)) in pixels.iter().enumerate() {
                        if !self.mask.transmits(geom, i, j, m, n) {
                            continue;
                        }
                        let s = geom.scatter_vector(i, j, m, n);
                        let theta = theta_kernel(x, y, &s);
                        match self.classify(theta) {
                            AngleClass::Node(_) => {}
                            AngleClass::Forward => continue,
                            AngleClass::OutOfRange => {
                                oor += 1;
                                continue;
                            }
                        }
                        let base = gso * god_kernel(&s) * spread_kernel(&s, hp);
                        acc[p] += base * self.exact_w(theta, f_row);
                    }
                }
                (acc, oor)
            })
            .collect();

        let mut total = vec![0.0; pixels.len()];
        let mut oor = 0;
        for (acc, o) in partials {
            for (t, a) in total.iter_mut().zip(acc) {
                *t += a;
            }
            oor += o;
        }
        self.add_out_of_range(oor);
        let mut out = self.zero_detector();
        let c = self.cfg.normalization;
        let data = out.as_mut_slice();
        for (&(m, n), v) in pixels.iter().zip(total) {
            data[m * geom.detector_cols + n] = c * v;
        }
        Ok(out)
    }

    pub fn backward_naive(&self, g: &DetectorImage, scope: Scope<'_>) -> Result<HyperspectralImage> {
        self.check_detector(g)?;
        let geom = &self.geom;
        let set = PixelSet::new(geom, scope)?;
        let pixels = member_pixels(&set, geom.detector_cols);
        let hp = 0.5 * geom.detector_pitch;
        let nq = self.grid.len();
        let scale = self.cfg.normalization * self.dq;

        let rows: Vec<(Vec<f64>, u64)> = (0..geom.object_nx)
            .into_par_iter()
            .map(|i| {
                let mut out = vec![0.0; geom.object_ny * nq];
                let mut srow = vec![0.0; nq];
                let mut oor = 0u64;
                let x = geom.object_x(i);
                for j in 0..geom.object_ny {
                    let y = geom.object_y(j);
                    let gso = crate::geometry::gso_kernel(x, y);
                    let acc = &mut out[j * nq..(j + 1) * nq];
                    for &(m, n) in &pixels {
                        let gv = g.get(m, n);
                        if gv == 0.0 || !self.mask.transmits(geom, i, j, m, n) {
                            continue;
                        }
                        let s = geom.scatter_vector(i, j, m, n);
                        let theta = theta_kernel(x, y, &s);
                        match self.classify(theta) {
                            AngleClass::Node(_) => {}
                            AngleClass::Forward => continue,
                            AngleClass::OutOfRange => {
                                oor += 1;
                                continue;
                            }
                        }
                        let v = gso * god_kernel(&s) * spread_kernel(&s, hp) * gv;
                        self.spectral_row(theta, &mut srow);
                        for (a, &sv) in acc.iter_mut().zip(&srow) {
                            *a += v * sv;
                        }
                    }
                    for a in acc.iter_mut() {
                        *a *= scale;
                    }
                }
                (out, oor)
            })
            .collect();

        let mut f = self.zero_object();
        let mut oor = 0;
        let data = f.as_mut_slice();
        let stride = geom.object_ny * nq;
        for (i, (row, o)) in rows.into_iter().enumerate() {
            data[i * stride..(i + 1) * stride].copy_from_slice(&row);
            oor += o;
        }
        self.add_out_of_range(oor);
        Ok(f)
    }
}

fn member_pixels(set: &PixelSet<'_>, cols: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(set.rows.len() * set.cols.len());
    for &m in &set.rows {
        for &n in &set.cols {
            if set.contains(m * cols + n) {
                out.push((m, n));
            }
        }
    }
    out
}
