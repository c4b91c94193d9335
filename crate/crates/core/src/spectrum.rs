//! Source spectrum, Bragg's law and the spectral factor `S(theta, q)`.

use std::path::Path;

use crate::error::{Error, Result};

/// Planck constant times speed of light (keV * angstrom).
pub const HC_KEV_ANGSTROM: f64 = 12.3984193;

const DEFAULT_SPECTRUM: &str = include_str!("../data/spectrum_w125_al05.txt");

/// Parses whitespace-separated two-column numeric text; `#` starts a comment.
pub(crate) fn parse_two_column(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let mut next = |what: &str| -> Result<f64> {
            let tok = fields.next().ok_or_else(|| Error::Parse {
                line: idx + 1,
                msg: format!("missing {what} column"),
            })?;
            tok.parse::<f64>().map_err(|_| Error::Parse {
                line: idx + 1,
                msg: format!("cannot parse {what} value '{tok}'"),
            })
        };
        let x = next("first")?;
        let y = next("second")?;
        if fields.next().is_some() {
            return Err(Error::Parse {
                line: idx + 1,
                msg: "expected exactly two columns".into(),
            });
        }
        a.push(x);
        b.push(y);
    }
    Ok((a, b))
}

/// Piecewise-linear effective source spectrum `Phi(E)`, zero outside its samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpectrum {
    energies: Vec<f64>,
    flux: Vec<f64>,
    /// `(first energy, 1 / spacing)` when the samples are evenly spaced.
    uniform: Option<(f64, f64)>,
    /// `[flux[k], flux[k + 1] - flux[k]]` per segment.
    segments: Vec<[f64; 2]>,
}

impl SourceSpectrum {
    pub fn new(energies: Vec<f64>, flux: Vec<f64>) -> Result<Self> {
        if energies.len() != flux.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} energies but {} flux values",
                energies.len(),
                flux.len()
            )));
        }
        if energies.len() < 2 {
            return Err(Error::Domain("spectrum needs at least two samples".into()));
        }
        if energies.windows(2).any(|w| !(w[1] > w[0])) || !energies[0].is_finite() {
            return Err(Error::Domain("spectrum energies must be finite and strictly increasing".into()));
        }
        if let Some(bad) = flux.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!("spectrum flux must be finite and nonnegative, got {bad}")));
        }
        let n = energies.len();
        let step = (energies[n - 1] - energies[0]) / (n - 1) as f64;
        let even = energies
            .iter()
            .enumerate()
            .all(|(k, &e)| (e - (energies[0] + step * k as f64)).abs() <= 1e-9 * step);
        let uniform = even.then(|| (energies[0], 1.0 / step));
        let segments = flux.windows(2).map(|w| [w[0], w[1] - w[0]]).collect();
        Ok(SourceSpectrum {
            energies,
            flux,
            uniform,
            segments,
        })
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (e, f) = parse_two_column(text)?;
        Self::new(e, f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Bundled 125 kVp tungsten-anode spectrum behind 0.5 mm of aluminum.
    pub fn default_tungsten() -> Self {
        Self::from_text(DEFAULT_SPECTRUM).expect("bundled spectrum is well formed")
    }

    /// Unit flux on `[e_min, e_max]`.
    pub fn flat(e_min: f64, e_max: f64) -> Result<Self> {
        Self::new(vec![e_min, e_max], vec![1.0, 1.0])
    }

    pub fn e_min(&self) -> f64 {
        self.energies[0]
    }

    pub fn e_max(&self) -> f64 {
        self.energies[self.energies.len() - 1]
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn flux(&self) -> &[f64] {
        &self.flux
    }

    /// `Phi(E)` by linear interpolation.
    #[inline]
    pub fn flux_at(&self, e: f64) -> f64 {
        if !(e >= self.e_min() && e <= self.e_max()) {
            return 0.0;
        }
        self.flux_within(e)
    }

    /// `Phi(E)` for `e_min <= e <= e_max`; the caller guarantees the range.
    #[inline(always)]
    pub(crate) fn flux_within(&self, e: f64) -> f64 {
        if let Some((e0, inv)) = self.uniform {
            let u = (e - e0) * inv;
            let k = (u as usize).min(self.segments.len() - 1);
            let [f0, d] = self.segments[k];
            return f0 + (u - k as f64) * d;
        }
        let n = self.energies.len();
        let k = self.energies.partition_point(|&x| x <= e).clamp(1, n - 1) - 1;
        let (e0, e1) = (self.energies[k], self.energies[k + 1]);
        let t = (e - e0) / (e1 - e0);
        let [f0, d] = self.segments[k];
        f0 + t * d
    }
}

/// Evenly spaced momentum-transfer bins (inverse angstrom).
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumGrid {
    values: Vec<f64>,
}

impl MomentumGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("momentum grid is empty".into()));
        }
        if !(values[0] > 0.0) || values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("momentum grid must be positive and strictly increasing".into()));
        }
        Ok(MomentumGrid { values })
    }

    /// `count` values from `start` to `end` inclusive.
    pub fn uniform(start: f64, end: f64, count: usize) -> Result<Self> {
        if count == 1 {
            return Self::new(vec![start]);
        }
        if count == 0 {
            return Err(Error::Domain("momentum grid is empty".into()));
        }
        let step = (end - start) / (count - 1) as f64;
        Self::new((0..count).map(|k| start + step * k as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spacing(&self) -> f64 {
        if self.values.len() < 2 {
            1.0
        } else {
            (self.values[self.values.len() - 1] - self.values[0]) / (self.values.len() - 1) as f64
        }
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta < std::f64::consts::PI) {
        return Err(Error::Singularity { theta });
    }
    Ok(())
}

/// `E = hc q / sin(theta / 2)` in keV.
pub fn bragg_energy(q: f64, theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta <= std::f64::consts::PI) {
        return Err(Error::Singularity { theta });
    }
    if !(q > 0.0) {
        return Err(Error::Domain(format!("momentum transfer must be positive, got {q}")));
    }
    Ok(HC_KEV_ANGSTROM * q / (0.5 * theta).sin())
}

/// 1-based nearest node of the grid `step * i`, `i = 1..=n`, ties toward the
/// smaller angle; 0 when `theta = 0` is nearer than the first node.
#[inline]
pub(crate) fn grid_node(theta: f64, step: f64, n: usize) -> usize {
    let k = (theta / step - 0.5).ceil();
    if k <= 0.0 {
        0
    } else {
        (k as usize).min(n)
    }
}

/// Angle-only part of the spectral factor and `1 / sin(theta / 2)`.
#[inline]
pub(crate) fn angular_prefactor(theta: f64) -> (f64, f64) {
    let (s, c) = (0.5 * theta).sin_cos();
    let cos_t = theta.cos();
    ((1.0 + cos_t * cos_t) * c / (s * s), 1.0 / s)
}

#[inline]
pub(crate) fn factor_with(pre: (f64, f64), q: f64, spectrum: &SourceSpectrum) -> f64 {
    q * pre.0 * spectrum.flux_at(HC_KEV_ANGSTROM * q * pre.1)
}

/// `factor_with` for a `q` whose Bragg energy is known to lie in the spectrum support.
#[inline(always)]
pub(crate) fn factor_within(pre: (f64, f64), q: f64, spectrum: &SourceSpectrum) -> f64 {
    q * pre.0 * spectrum.flux_within(HC_KEV_ANGSTROM * q * pre.1)
}

/// `S(theta, q) = q (1 + cos^2 theta) cos(theta/2) / sin^2(theta/2) * Phi(E)`.
pub fn spectral_factor(theta: f64, q: f64, spectrum: &SourceSpectrum) -> Result<f64> {
    check_theta(theta)?;
    if !(q > 0.0) {
        return Err(Error::Domain(format!("momentum transfer must be positive, got {q}")));
    }
    Ok(factor_with(angular_prefactor(theta), q, spectrum))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InterpMode {
    #[default]
    Nearest,
    Linear,
}

impl std::str::FromStr for InterpMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nearest" => Ok(InterpMode::Nearest),
            "linear" => Ok(InterpMode::Linear),
            _ => Err(Error::Config(format!("unknown interpolation '{s}' (expected nearest or linear)"))),
        }
    }
}

/// `S(theta, q)` on `theta_max * i / n_theta`, `i = 1..=n_theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFactorTable {
    theta_max: f64,
    n_theta: usize,
    step: f64,
    q_len: usize,
    theta_grid: Vec<f64>,
    /// Row-major `n_theta x Q`.
    table: Vec<f64>,
}

impl SpectralFactorTable {
    pub fn build(spectrum: &SourceSpectrum, grid: &MomentumGrid, n_theta: usize, theta_max: f64) -> Result<Self> {
        if n_theta < 2 {
            return Err(Error::Domain(format!("need at least 2 scatter-angle samples, got {n_theta}")));
        }
        if !(theta_max > 0.0 && theta_max < std::f64::consts::PI) {
            return Err(Error::Domain(format!("theta_max must lie in (0, pi), got {theta_max}")));
        }
        let theta_grid: Vec<f64> = (1..=n_theta).map(|i| theta_max * i as f64 / n_theta as f64).collect();
        let q_len = grid.len();
        let mut table = Vec::with_capacity(n_theta * q_len);
        for &theta in &theta_grid {
            let pre = angular_prefactor(theta);
            table.extend(grid.values().iter().map(|&q| factor_with(pre, q, spectrum)));
        }
        Ok(SpectralFactorTable {
            theta_max,
            n_theta,
            step: theta_max / n_theta as f64,
            q_len,
            theta_grid,
            table,
        })
    }

    pub fn theta_max(&self) -> f64 {
        self.theta_max
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn q_len(&self) -> usize {
        self.q_len
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn theta_grid(&self) -> &[f64] {
        &self.theta_grid
    }

    /// Row `k` (0-based) of the table, i.e. the angle `theta_grid()[k]`.
    #[inline]
    pub fn row(&self, k: usize) -> &[f64] {
        &self.table[k * self.q_len..(k + 1) * self.q_len]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.table
    }

    /// 1-based nearest grid node, ties toward the smaller angle; 0 means the
    /// nearest node is the excluded `theta = 0`. Caller guarantees
    /// `theta <= theta_max`.
    #[inline]
    pub(crate) fn nearest_node(&self, theta: f64) -> usize {
        grid_node(theta, self.step, self.n_theta)
    }

    /// Bracketing 1-based nodes `k, k + 1` and the weight of `k + 1`, with node
    /// 0 standing for `theta = 0`. Caller guarantees `theta <= theta_max`.
    #[inline]
    pub(crate) fn bracket(&self, theta: f64) -> (usize, f64) {
        let u = theta / self.step;
        let k = (u.floor() as usize).min(self.n_theta - 1);
        (k, (u - k as f64).clamp(0.0, 1.0))
    }

    fn check_range(&self, theta: f64) -> Result<()> {
        if theta > self.theta_max || theta.is_nan() {
            return Err(Error::AngleOutOfRange {
                theta,
                theta_max: self.theta_max,
            });
        }
        Ok(())
    }

    /// Nearest-neighbor row; angles below the first node map to the first row.
    pub fn interp_row(&self, theta: f64) -> Result<&[f64]> {
        self.check_range(theta)?;
        Ok(self.row(self.nearest_node(theta).max(1) - 1))
    }

    /// Row for `theta` under `mode`, written into `out`.
    pub fn interp_into(&self, theta: f64, mode: InterpMode, out: &mut [f64]) -> Result<()> {
        if out.len() != self.q_len {
            return Err(Error::DimensionMismatch(format!(
                "output has {} entries, table has {} momentum bins",
                out.len(),
                self.q_len
            )));
        }
        match mode {
            InterpMode::Nearest => out.copy_from_slice(self.interp_row(theta)?),
            InterpMode::Linear => {
                self.check_range(theta)?;
                let (k, w) = self.bracket(theta);
                if k == 0 {
                    out.copy_from_slice(self.row(0));
                } else {
                    let (a, b) = (self.row(k - 1), self.row(k));
                    for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
                        *o = (1.0 - w) * x + w * y;
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    #[test]
    fn bragg_hand_values() {
        let e = bragg_energy(0.2, 0.2).unwrap();
        assert!((e - 12.3984193 * 0.2 / 0.1f64.sin()).abs() < 1e-12);
        assert!((e - 24.8383).abs() < 1e-4);
        let e = bragg_energy(0.2, PI).unwrap();
        assert!((e - 2.47968386).abs() < 1e-8);
        assert_eq!(bragg_energy(0.4, 0.3).unwrap(), 2.0 * bragg_energy(0.2, 0.3).unwrap());
        assert!(matches!(bragg_energy(0.2, 0.0), Err(Error::Singularity { .. })));
    }

    #[test]
    fn spectral_factor_flat_spectrum() {
        let flat = SourceSpectrum::flat(1.0, 200.0).unwrap();
        let s = spectral_factor(PI / 2.0, 0.1, &flat).unwrap();
        assert!((s - 0.1 * 2f64.sqrt()).abs() < 1e-12);
        assert!((s - 0.141421).abs() < 1e-6);
        // Bragg energy above the support.
        assert_eq!(spectral_factor(0.01, 0.4, &flat).unwrap(), 0.0);
        assert!(matches!(spectral_factor(0.0, 0.1, &flat), Err(Error::Singularity { .. })));
    }

    #[test]
    fn flux_interpolation_and_support() {
        let sp = SourceSpectrum::new(vec![10.0, 20.0, 30.0], vec![1.0, 3.0, 2.0]).unwrap();
        assert_eq!(sp.flux_at(9.99), 0.0);
        assert_eq!(sp.flux_at(30.01), 0.0);
        assert_eq!(sp.flux_at(10.0), 1.0);
        assert_eq!(sp.flux_at(30.0), 2.0);
        assert!((sp.flux_at(15.0) - 2.0).abs() < 1e-15);
        assert!((sp.flux_at(27.5) - 2.25).abs() < 1e-15);
        let uneven = SourceSpectrum::new(vec![10.0, 11.0, 30.0], vec![0.0, 1.0, 0.0]).unwrap();
        assert!((uneven.flux_at(20.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn uniform_lookup_matches_binary_search() {
        let sp = SourceSpectrum::default_tungsten();
        let mut uneven_e = sp.energies().to_vec();
        uneven_e.push(sp.e_max() + 1e-3);
        let mut uneven_f = sp.flux().to_vec();
        uneven_f.push(0.0);
        let other = SourceSpectrum::new(uneven_e, uneven_f).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let e = rng.gen_range(5.0..130.0);
            assert!((sp.flux_at(e) - other.flux_at(e)).abs() < 1e-13, "E = {e}");
        }
    }

    #[test]
    fn spectrum_parser_errors_carry_line_numbers() {
        let err = SourceSpectrum::from_text("# c\n10 1\n11 x\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        assert!(SourceSpectrum::from_text("10 1\n9 1\n").is_err());
        assert!(SourceSpectrum::from_text("10 1\n11 -1\n").is_err());
    }

    #[test]
    fn default_spectrum_support() {
        let sp = SourceSpectrum::default_tungsten();
        assert!(sp.e_min() >= 5.0 && sp.e_max() <= 125.0 + 1e-9);
        assert!(sp.flux().iter().all(|&f| f >= 0.0));
    }

    #[test]
    fn momentum_grid_uniform() {
        let g = MomentumGrid::uniform(0.01, 0.4, 79).unwrap();
        assert_eq!(g.len(), 79);
        assert!((g.spacing() - 0.005).abs() < 1e-15);
        assert!((g.values()[78] - 0.4).abs() < 1e-15);
        assert!(MomentumGrid::new(vec![0.0, 0.1]).is_err());
        assert!(MomentumGrid::new(vec![0.2, 0.1]).is_err());
    }

    fn small_table(n: usize) -> SpectralFactorTable {
        let grid = MomentumGrid::uniform(0.01, 0.4, 79).unwrap();
        SpectralFactorTable::build(&SourceSpectrum::default_tungsten(), &grid, n, PI / 6.0).unwrap()
    }

    #[test]
    fn table_rows_equal_direct_evaluation() {
        let t = small_table(250);
        assert!((t.step() - PI / 1500.0).abs() < 1e-18);
        let grid = MomentumGrid::uniform(0.01, 0.4, 79).unwrap();
        let sp = SourceSpectrum::default_tungsten();
        for k in [0, 1, 100, 249] {
            let theta = t.theta_grid()[k];
            for (qi, &q) in grid.values().iter().enumerate() {
                assert_eq!(t.row(k)[qi], spectral_factor(theta, q, &sp).unwrap());
            }
        }
        assert!(t.as_slice().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn fine_table_refines_coarse_table() {
        let coarse = small_table(250);
        let fine = small_table(2000);
        for k in 0..250 {
            assert_eq!(coarse.theta_grid()[k], fine.theta_grid()[8 * k + 7]);
            assert_eq!(coarse.row(k), fine.row(8 * k + 7));
            let theta = coarse.theta_grid()[k];
            assert_eq!(coarse.interp_row(theta).unwrap(), fine.interp_row(theta).unwrap());
        }
    }

    #[test]
    fn interp_row_rules() {
        let t = small_table(250);
        let h = t.step();
        for k in [0usize, 5, 249] {
            assert_eq!(t.interp_row(t.theta_grid()[k]).unwrap(), t.row(k));
        }
        // Midway between nodes 5 and 6 (1-based) picks node 5.
        assert_eq!(t.interp_row(5.5 * h).unwrap(), t.row(4));
        assert_eq!(t.interp_row(5.5001 * h).unwrap(), t.row(5));
        assert_eq!(t.interp_row(0.1 * h).unwrap(), t.row(0));
        assert!(matches!(
            t.interp_row(PI / 6.0 + 1e-9),
            Err(Error::AngleOutOfRange { .. })
        ));
        assert_eq!(t.nearest_node(0.4 * h), 0);
        assert_eq!(t.nearest_node(0.5 * h), 0);
        assert_eq!(t.nearest_node(0.51 * h), 1);
    }

    #[test]
    fn linear_mode_blends_neighbors() {
        let t = small_table(250);
        let h = t.step();
        let mut out = vec![0.0; t.q_len()];
        t.interp_into(10.25 * h, InterpMode::Linear, &mut out).unwrap();
        for q in 0..t.q_len() {
            let want = 0.75 * t.row(9)[q] + 0.25 * t.row(10)[q];
            assert!((out[q] - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
        t.interp_into(t.theta_grid()[42], InterpMode::Linear, &mut out).unwrap();
        for q in 0..t.q_len() {
            assert!((out[q] - t.row(42)[q]).abs() <= 1e-12 * t.row(42)[q].abs().max(1e-300));
        }
    }

    fn interp_nrmse(n: usize, mode: InterpMode) -> f64 {
        let t = small_table(n);
        let grid = MomentumGrid::uniform(0.01, 0.4, 79).unwrap();
        let sp = SourceSpectrum::default_tungsten();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (mut err, mut norm) = (0.0, 0.0);
        let mut out = vec![0.0; t.q_len()];
        for _ in 0..3000 {
            let theta = rng.gen_range(0.05..PI / 6.0);
            t.interp_into(theta, mode, &mut out).unwrap();
            for (qi, &q) in grid.values().iter().enumerate() {
                let exact = spectral_factor(theta, q, &sp).unwrap();
                err += (out[qi] - exact).powi(2);
                norm += exact * exact;
            }
        }
        (err / norm).sqrt()
    }

    #[test]
    fn interpolation_error_shrinks_with_grid_density() {
        let errs: Vec<f64> = [250, 500, 1000, 2000]
            .iter()
            .map(|&n| interp_nrmse(n, InterpMode::Nearest))
            .collect();
        for w in errs.windows(2) {
            assert!(w[1] < w[0], "{errs:?}");
        }
        assert!(interp_nrmse(250, InterpMode::Linear) < errs[0]);
    }

    #[test]
    fn spectral_factor_is_smooth_away_from_lines() {
        let sp = SourceSpectrum::default_tungsten();
        let q = 0.2;
        let h = 1e-3;
        let mut worst: f64 = 0.0;
        let mut peak: f64 = 0.0;
        let mut theta = 0.1;
        while theta < PI / 6.0 - h {
            let e = bragg_energy(q, theta).unwrap();
            let near_line = (55.0..=72.0).contains(&e);
            let s0 = spectral_factor(theta - h, q, &sp).unwrap();
            let s1 = spectral_factor(theta, q, &sp).unwrap();
            let s2 = spectral_factor(theta + h, q, &sp).unwrap();
            peak = peak.max(s1);
            if !near_line && e > 20.0 && e < 120.0 {
                worst = worst.max((s0 - 2.0 * s1 + s2).abs());
            }
            theta += h;
        }
        assert!(worst < 0.02 * peak, "second difference {worst} vs peak {peak}");
    }
}
