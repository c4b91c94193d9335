//! Projectors that share work between rays related by translation or mirror
//! symmetry and optionally look up the spectral factor on a scatter-angle grid.
//!
//! Primary rays run from a primary object pixel to a primary detector pixel.
//! With the left-right mirror on, primary object pixels are the left half and
//! each also serves its mirror `(i, ny - 1 - j)` at detector column
//! `N - 1 - n`. With the up-down mirror on, primary detector rows are the top
//! half and each also serves row `M - 1 - m`. The four resulting quadrant
//! images are accumulated separately and folded into the detector image at
//! the end.

use rayon::prelude::*;

use super::{AngleClass, PixelSet, Projector, Scope};
use crate::error::Result;
use crate::geometry::{god_kernel, spread_kernel, theta_kernel, GodBlock};
use crate::image::{DetectorImage, HyperspectralImage};
use crate::spectrum::InterpMode;

const UL: usize = 0;
const DL: usize = 1;
const UR: usize = 2;
const DR: usize = 3;

struct Layout {
    rows: Vec<usize>,
    cols: Vec<usize>,
    /// Primary object columns.
    js: Vec<usize>,
    lr: bool,
    ud: bool,
}

impl Layout {
    fn new(p: &Projector, set: &PixelSet<'_>) -> Self {
        let g = &p.geom;
        let lr = p.cfg.use_lr_mirror;
        let ud = p.cfg.use_ud_mirror;
        let rows = if ud {
            let mut r: Vec<usize> = set.rows.iter().map(|&m| m.min(g.mirror_row(m))).collect();
            r.sort_unstable();
            r.dedup();
            r
        } else {
            set.rows.clone()
        };
        let cols = if lr {
            let mut c: Vec<usize> = set.cols.iter().flat_map(|&n| [n, g.mirror_col(n)]).collect();
            c.sort_unstable();
            c.dedup();
            c
        } else {
            set.cols.clone()
        };
        let js = (0..if lr { g.half_ny() } else { g.object_ny }).collect();
        Layout { rows, cols, js, lr, ud }
    }

    fn len(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    fn active(&self) -> [bool; 4] {
        [true, self.ud, self.lr, self.lr && self.ud]
    }

    /// Detector pixel receiving quadrant `q` at primary pixel `(m, n)`.
    #[inline]
    fn target(&self, p: &Projector, q: usize, m: usize, n: usize) -> (usize, usize) {
        let g = &p.geom;
        match q {
            UL => (m, n),
            DL => (g.mirror_row(m), n),
            UR => (m, g.mirror_col(n)),
            _ => (g.mirror_row(m), g.mirror_col(n)),
        }
    }
}

/// Maintains object-to-detector factors across a sweep of one object row.
struct GodSource {
    block: Option<GodBlock>,
}

impl GodSource {
    fn advance(&mut self, p: &Projector, lay: &Layout, i: usize, j: usize) {
        if !p.cfg.use_translation_sym {
            return;
        }
        match &mut self.block {
            Some(b) if b.object_index() == (i, j.wrapping_sub(1)) => b.translate_in_place(&p.geom),
            _ => self.block = Some(GodBlock::compute(&p.geom, i, j, &lay.rows, &lay.cols)),
        }
    }

    #[inline]
    fn get(&self, idx: usize, s: &crate::geometry::Point3) -> f64 {
        match &self.block {
            Some(b) => b.values()[idx],
            None => god_kernel(s),
        }
    }
}

impl Projector {
    /// `W` on the table's angle grid for one spectrum; index 0 stands for
    /// `theta = 0` and stays zero.
    fn w_table(&self, f_row: &[f64], out: &mut [f64]) {
        let table = self.table.as_ref().expect("interpolation table");
        out[0] = 0.0;
        for (k, o) in out[1..].iter_mut().enumerate() {
            let row = table.row(k);
            let mut acc = 0.0;
            for (&s, &f) in row.iter().zip(f_row) {
                acc += s * f;
            }
            *o = acc * self.dq;
        }
    }

    #[inline]
    fn lookup(&self, w: &[f64], node: usize, theta: f64) -> f64 {
        match self.cfg.interp_mode {
            InterpMode::Nearest => w[node],
            InterpMode::Linear => {
                let (k, t) = self.table.as_ref().expect("interpolation table").bracket(theta);
                if k == 0 {
                    w[1]
                } else {
                    (1.0 - t) * w[k] + t * w[k + 1]
                }
            }
        }
    }

    #[inline]
    fn deposit(&self, h: &mut [f64], node: usize, theta: f64, v: f64) {
        match self.cfg.interp_mode {
            InterpMode::Nearest => h[node] += v,
            InterpMode::Linear => {
                let (k, t) = self.table.as_ref().expect("interpolation table").bracket(theta);
                if k == 0 {
                    h[1] += v;
                } else {
                    h[k] += (1.0 - t) * v;
                    h[k + 1] += t * v;
                }
            }
        }
    }

    /// Transmission flags of the up to four rays served by primary ray
    /// `((i, j), (m, n))`.
    #[inline]
    fn quad_transmission(&self, lay: &Layout, i: usize, j: usize, m: usize, n: usize) -> [bool; 4] {
        let g = &self.geom;
        let mut t = [self.transmits(i, j, m, n), false, false, false];
        if lay.ud {
            t[DL] = self.transmits(i, j, g.mirror_row(m), n);
        }
        if lay.lr {
            let (jr, nr) = (g.mirror_object_col(j), g.mirror_col(n));
            t[UR] = self.transmits(i, jr, m, nr);
            if lay.ud {
                t[DR] = self.transmits(i, jr, g.mirror_row(m), nr);
            }
        }
        t
    }

    fn forward_row(&self, f: &HyperspectralImage, lay: &Layout, i: usize) -> ([Vec<f64>; 4], u64) {
        let geom = &self.geom;
        let hp = 0.5 * geom.detector_pitch;
        let active = lay.active();
        let mut quads: [Vec<f64>; 4] = Default::default();
        for (q, buf) in quads.iter_mut().enumerate() {
            if active[q] {
                *buf = vec![0.0; lay.len()];
            }
        }
        let sai = self.table.is_some();
        let nw = if sai { self.cfg.n_theta + 1 } else { 0 };
        let (mut w_l, mut w_r) = (vec![0.0; nw], vec![0.0; nw]);
        let mut god = GodSource { block: None };
        let mut oor = 0u64;
        let ncols = lay.cols.len();
        let x = geom.object_x(i);

        for &j in &lay.js {
            let jr = geom.mirror_object_col(j);
            let y = geom.object_y(j);
            let gso = self.gso_at(i, j);
            let f_l = f.spectrum(i, j);
            let f_r = f.spectrum(i, jr);
            if sai {
                self.w_table(f_l, &mut w_l);
                if lay.lr {
                    self.w_table(f_r, &mut w_r);
                }
            }
            god.advance(self, lay, i, j);
            for (r, &m) in lay.rows.iter().enumerate() {
                for (c, &n) in lay.cols.iter().enumerate() {
                    let t = self.quad_transmission(lay, i, j, m, n);
                    if !(t[UL] | t[DL] | t[UR] | t[DR]) {
                        continue;
                    }
                    let s = geom.scatter_vector(i, j, m, n);
                    let theta = theta_kernel(x, y, &s);
                    let node = match self.classify(theta) {
                        AngleClass::Node(k) => k,
                        AngleClass::Forward => continue,
                        AngleClass::OutOfRange => {
                            oor += t.iter().filter(|&&b| b).count() as u64;
                            continue;
                        }
                    };
                    let idx = r * ncols + c;
                    let base = gso * god.get(idx, &s) * spread_kernel(&s, hp);
                    let (wl, wr) = if sai {
                        let wl = self.lookup(&w_l, node, theta);
                        let wr = if lay.lr { self.lookup(&w_r, node, theta) } else { 0.0 };
                        (wl, wr)
                    } else if lay.lr && (t[UR] | t[DR]) {
                        self.exact_w_pair(theta, f_l, f_r)
                    } else {
                        (self.exact_w(theta, f_l), 0.0)
                    };
                    if t[UL] {
                        quads[UL][idx] += base * wl;
                    }
                    if t[DL] {
                        quads[DL][idx] += base * wl;
                    }
                    if t[UR] {
                        quads[UR][idx] += base * wr;
                    }
                    if t[DR] {
                        quads[DR][idx] += base * wr;
                    }
                }
            }
        }
        (quads, oor)
    }

    pub fn forward_optimized(&self, f: &HyperspectralImage, scope: Scope<'_>) -> Result<DetectorImage> {
        self.check_object(f)?;
        let geom = &self.geom;
        let set = PixelSet::new(geom, scope)?;
        let lay = Layout::new(self, &set);
        let rows: Vec<([Vec<f64>; 4], u64)> = (0..geom.object_nx)
            .into_par_iter()
            .map(|i| self.forward_row(f, &lay, i))
            .collect();

        let active = lay.active();
        let mut total: [Vec<f64>; 4] = Default::default();
        for (q, buf) in total.iter_mut().enumerate() {
            if active[q] {
                *buf = vec![0.0; lay.len()];
            }
        }
        let mut oor = 0;
        for (quads, o) in rows {
            for (t, part) in total.iter_mut().zip(quads.iter()) {
                for (a, b) in t.iter_mut().zip(part) {
                    *a += b;
                }
            }
            oor += o;
        }
        self.add_out_of_range(oor);

        let mut out = self.zero_detector();
        let ncols_det = geom.detector_cols;
        let ncols = lay.cols.len();
        let data = out.as_mut_slice();
        for q in [UL, UR, DL, DR] {
            if !active[q] {
                continue;
            }
            for (r, &m) in lay.rows.iter().enumerate() {
                for (c, &n) in lay.cols.iter().enumerate() {
                    let (tm, tn) = lay.target(self, q, m, n);
                    data[tm * ncols_det + tn] += total[q][r * ncols + c];
                }
            }
        }
        let cnorm = self.cfg.normalization;
        for (p, v) in data.iter_mut().enumerate() {
            *v = if set.contains(p) { cnorm * *v } else { 0.0 };
        }
        Ok(out)
    }

    pub fn backward_optimized(&self, g: &DetectorImage, scope: Scope<'_>) -> Result<HyperspectralImage> {
        self.check_detector(g)?;
        let geom = &self.geom;
        let set = PixelSet::new(geom, scope)?;
        let lay = Layout::new(self, &set);
        let masked: Vec<f64> = g
            .as_slice()
            .iter()
            .enumerate()
            .map(|(p, &v)| if set.contains(p) { v } else { 0.0 })
            .collect();

        let nq = self.grid.len();
        let rows: Vec<(Vec<f64>, u64)> = (0..geom.object_nx)
            .into_par_iter()
            .map(|i| self.backward_row(&masked, &lay, i))
            .collect();

        let mut f = self.zero_object();
        let stride = geom.object_ny * nq;
        let mut oor = 0;
        let data = f.as_mut_slice();
        for (i, (row, o)) in rows.into_iter().enumerate() {
            data[i * stride..(i + 1) * stride].copy_from_slice(&row);
            oor += o;
        }
        self.add_out_of_range(oor);
        Ok(f)
    }

    fn backward_row(&self, g: &[f64], lay: &Layout, i: usize) -> (Vec<f64>, u64) {
        let geom = &self.geom;
        let hp = 0.5 * geom.detector_pitch;
        let nq = self.grid.len();
        let ncd = geom.detector_cols;
        let sai = self.table.is_some();
        let nh = if sai { self.cfg.n_theta + 1 } else { 0 };
        let mut out = vec![0.0; geom.object_ny * nq];
        let (mut h_l, mut h_r) = (vec![0.0; nh], vec![0.0; nh]);
        let (mut a_l, mut a_r) = (vec![0.0; nq], vec![0.0; nq]);
        let mut srow = vec![0.0; nq];
        let mut god = GodSource { block: None };
        let mut oor = 0u64;
        let ncols = lay.cols.len();
        let x = geom.object_x(i);
        let scale = self.cfg.normalization * self.dq;

        for &j in &lay.js {
            let jr = geom.mirror_object_col(j);
            let y = geom.object_y(j);
            let gso = self.gso_at(i, j);
            h_l.iter_mut().chain(h_r.iter_mut()).for_each(|v| *v = 0.0);
            a_l.iter_mut().chain(a_r.iter_mut()).for_each(|v| *v = 0.0);
            god.advance(self, lay, i, j);
            for (r, &m) in lay.rows.iter().enumerate() {
                let md = geom.mirror_row(m);
                for (c, &n) in lay.cols.iter().enumerate() {
                    let nr = geom.mirror_col(n);
                    let t = self.quad_transmission(lay, i, j, m, n);
                    let mut gl = 0.0;
                    if t[UL] {
                        gl += g[m * ncd + n];
                    }
                    if t[DL] {
                        gl += g[md * ncd + n];
                    }
                    let mut gr = 0.0;
                    if t[UR] {
                        gr += g[m * ncd + nr];
                    }
                    if t[DR] {
                        gr += g[md * ncd + nr];
                    }
                    if gl == 0.0 && gr == 0.0 {
                        continue;
                    }
                    let s = geom.scatter_vector(i, j, m, n);
                    let theta = theta_kernel(x, y, &s);
                    let node = match self.classify(theta) {
                        AngleClass::Node(k) => k,
                        AngleClass::Forward => continue,
                        AngleClass::OutOfRange => {
                            oor += t.iter().filter(|&&b| b).count() as u64;
                            continue;
                        }
                    };
                    let base = gso * god.get(r * ncols + c, &s) * spread_kernel(&s, hp);
                    let (vl, vr) = (base * gl, base * gr);
                    if sai {
                        self.deposit(&mut h_l, node, theta, vl);
                        if lay.lr {
                            self.deposit(&mut h_r, node, theta, vr);
                        }
                    } else {
                        self.spectral_row(theta, &mut srow);
                        for (a, &sv) in a_l.iter_mut().zip(&srow) {
                            *a += vl * sv;
                        }
                        if lay.lr {
                            for (a, &sv) in a_r.iter_mut().zip(&srow) {
                                *a += vr * sv;
                            }
                        }
                    }
                }
            }
            if sai {
                let table = self.table.as_ref().expect("interpolation table");
                for (k, (&hl, &hr)) in h_l[1..].iter().zip(&h_r[1..]).enumerate() {
                    if hl == 0.0 && hr == 0.0 {
                        continue;
                    }
                    for (q, &sv) in table.row(k).iter().enumerate() {
                        a_l[q] += hl * sv;
                        a_r[q] += hr * sv;
                    }
                }
            }
            for (o, &a) in out[j * nq..(j + 1) * nq].iter_mut().zip(&a_l) {
                *o = scale * a;
            }
            if lay.lr {
                for (o, &a) in out[jr * nq..(jr + 1) * nq].iter_mut().zip(&a_r) {
                    *o = scale * a;
                }
            }
        }
        (out, oor)
    }
}
