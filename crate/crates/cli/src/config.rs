//! Sectioned `key = value` engine configuration.
//!
//! ```text
//! # comment
//! [geometry]
//! detector_rows = 192
//! ```
//!
//! Every key has a default (the desk-scale system), so an empty file is valid.
//! Relative paths resolve against the directory holding the config file.

use std::collections::HashMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fanscatter_core::presets::{desk_geometry, DESK_MASK_SEED, DESK_RHO_Z};
use fanscatter_core::{
    build_partition, Background, BetaScaling, Insert, InterpMode, MaskImage, MaskLayout, MaterialMtp, MomentumGrid,
    PhantomSpec, Projector, ProjectorConfig, SourceSpectrum, SystemGeometry, Variant,
};

use crate::error::{CliError, CliResult};
use crate::raster::{read_pgm, RawRaster};

const SCHEMA: &[(&str, &[&str])] = &[
    (
        "geometry",
        &[
            "detector_distance",
            "detector_rows",
            "detector_cols",
            "detector_pitch",
            "mask_distance",
            "object_center_x",
            "object_nx",
            "object_ny",
            "object_dx",
            "translation_step",
        ],
    ),
    ("spectrum", &["file", "n_theta", "theta_max"]),
    ("grid", &["q_min", "q_max", "q_bins"]),
    (
        "mask",
        &[
            "file",
            "threshold_fraction",
            "rows",
            "cols",
            "open_fraction",
            "seed",
            "pitch",
            "offset_y",
            "offset_z",
            "beam_stop",
        ],
    ),
    ("projector", &["variant", "interp", "normalization"]),
    (
        "recon",
        &["beta", "delta", "iterations", "rho_y", "rho_z", "osem", "beta_scaling"],
    ),
    ("simulation", &["peak_count", "seed", "background", "background_file"]),
    ("phantom", &["preset", "insert"]),
    ("benchmark", &["runs"]),
    ("run", &["threads"]),
];

#[derive(Debug, Clone)]
struct Entry {
    section: String,
    key: String,
    value: String,
    line: usize,
}

/// Parsed key/value text before typing.
#[derive(Debug, Clone, Default)]
struct Document {
    entries: Vec<Entry>,
    sections: HashMap<String, usize>,
    base: PathBuf,
}

impl Document {
    fn parse(text: &str, base: &Path) -> CliResult<Self> {
        let mut doc = Document {
            base: base.to_path_buf(),
            ..Default::default()
        };
        let mut section: Option<String> = None;
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| at(line, "unterminated section header"))?
                    .trim()
                    .to_ascii_lowercase();
                if !SCHEMA.iter().any(|(s, _)| *s == name) {
                    return Err(at(line, format!("unknown section [{name}]")));
                }
                doc.sections.entry(name.clone()).or_insert(line);
                section = Some(name);
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| at(line, format!("expected 'key = value', got '{content}'")))?;
            let key = key.trim().to_ascii_lowercase();
            let section = section
                .clone()
                .ok_or_else(|| at(line, format!("key '{key}' appears before any [section]")))?;
            let known = SCHEMA
                .iter()
                .find(|(s, _)| *s == section)
                .map(|(_, keys)| keys.contains(&key.as_str()) || (section == "phantom" && key.starts_with("mtp.")))
                .unwrap_or(false);
            if !known {
                return Err(at(line, format!("unknown key '{key}' in [{section}]")));
            }
            if key != "insert" && doc.entries.iter().any(|e| e.section == section && e.key == key) {
                return Err(at(line, format!("duplicate key '{key}' in [{section}]")));
            }
            doc.entries.push(Entry {
                section,
                key,
                value: value.trim().to_string(),
                line,
            });
        }
        Ok(doc)
    }

    fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.section == section && e.key == key)
    }

    fn all<'a>(&'a self, section: &'a str, key: &'a str) -> impl Iterator<Item = &'a Entry> + 'a {
        self.entries.iter().filter(move |e| e.section == section && e.key == key)
    }

    fn value<T>(&self, section: &str, key: &str, default: T) -> CliResult<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.get(section, key) {
            None => Ok(default),
            Some(e) => e
                .value
                .parse::<T>()
                .map_err(|err| at(e.line, format!("[{section}] {key} = '{}': {err}", e.value))),
        }
    }

    fn path(&self, section: &str, key: &str) -> Option<(PathBuf, usize)> {
        self.get(section, key).map(|e| (self.base.join(&e.value), e.line))
    }

    /// Line of `key`, else of the section header, for cross-field errors.
    fn line_of(&self, section: &str, key: &str) -> Option<usize> {
        self.get(section, key)
            .map(|e| e.line)
            .or_else(|| self.sections.get(section).copied())
    }

    fn fail(&self, section: &str, key: &str, msg: impl Display) -> CliError {
        match self.line_of(section, key) {
            Some(line) => at(line, format!("[{section}] {msg}")),
            None => CliError::input(format!("config [{section}]: {msg}")),
        }
    }
}

fn at(line: usize, msg: impl Display) -> CliError {
    CliError::input(format!("config line {line}: {msg}"))
}

/// `true/false`, `yes/no`, `on/off`, `1/0`.
#[derive(Debug, Clone, Copy)]
struct Flag(bool);

impl FromStr for Flag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "true" | "yes" | "on" | "1" => Ok(Flag(true)),
            "false" | "no" | "off" | "0" => Ok(Flag(false)),
            _ => Err("expected true or false".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconSection {
    /// Regularization weight relative to the data term at the initial image.
    pub beta_rel: f64,
    /// Huber threshold as a fraction of the initial image level.
    pub delta_fraction: f64,
    pub iterations: usize,
    pub rho_y: usize,
    pub rho_z: usize,
    pub osem: bool,
    pub beta_scaling: BetaScaling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSection {
    pub peak_count: f64,
    pub seed: u64,
    pub background: Background,
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub geometry: SystemGeometry,
    pub spectrum: SourceSpectrum,
    pub grid: MomentumGrid,
    pub mask: MaskImage,
    pub projector: ProjectorConfig,
    pub variant: Variant,
    pub recon: ReconSection,
    pub simulation: SimulationSection,
    pub phantom: PhantomSpec,
    pub benchmark_runs: usize,
    /// Worker threads; 0 leaves the choice to `ENGINE_THREADS` or the runtime.
    pub threads: usize,
}

impl EngineConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_text(&text, base).map_err(|e| match e {
            CliError::Input(m) => CliError::Input(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn desk() -> Self {
        Self::from_text("", Path::new(".")).expect("defaults are valid")
    }

    pub fn from_text(text: &str, base: &Path) -> CliResult<Self> {
        let doc = Document::parse(text, base)?;
        let d = desk_geometry();
        let g = "geometry";
        let geometry = SystemGeometry {
            detector_distance: doc.value(g, "detector_distance", d.detector_distance)?,
            detector_rows: doc.value(g, "detector_rows", d.detector_rows)?,
            detector_cols: doc.value(g, "detector_cols", d.detector_cols)?,
            detector_pitch: doc.value(g, "detector_pitch", d.detector_pitch)?,
            mask_distance: doc.value(g, "mask_distance", d.mask_distance)?,
            object_center_x: doc.value(g, "object_center_x", d.object_center_x)?,
            object_nx: doc.value(g, "object_nx", d.object_nx)?,
            object_ny: doc.value(g, "object_ny", d.object_ny)?,
            object_dx: doc.value(g, "object_dx", d.object_dx)?,
            translation_step: doc.value(g, "translation_step", d.translation_step)?,
        };
        geometry.validate().map_err(|e| doc.fail(g, "", e))?;

        let spectrum = match doc.path("spectrum", "file") {
            Some((p, line)) => SourceSpectrum::load(&p).map_err(|e| at(line, format!("[spectrum] file: {e}")))?,
            None => SourceSpectrum::default_tungsten(),
        };
        let grid = MomentumGrid::uniform(
            doc.value("grid", "q_min", 0.01)?,
            doc.value("grid", "q_max", 0.4)?,
            doc.value("grid", "q_bins", 79)?,
        )
        .map_err(|e| doc.fail("grid", "q_bins", e))?;

        let mask = load_mask(&doc)?;

        let variant: Variant = doc.value("projector", "variant", Variant::AO)?;
        let base_cfg = ProjectorConfig {
            n_theta: doc.value("spectrum", "n_theta", 250)?,
            theta_max: doc.value("spectrum", "theta_max", std::f64::consts::FRAC_PI_6)?,
            interp_mode: doc.value("projector", "interp", InterpMode::Nearest)?,
            normalization: doc.value("projector", "normalization", 1.0)?,
            ..ProjectorConfig::default()
        };
        if base_cfg.n_theta == 0 || !(base_cfg.theta_max > 0.0 && base_cfg.theta_max < std::f64::consts::PI) {
            return Err(doc.fail("spectrum", "n_theta", "n_theta must be positive and theta_max in (0, pi)"));
        }
        if !(base_cfg.normalization > 0.0 && base_cfg.normalization.is_finite()) {
            return Err(doc.fail("projector", "normalization", "normalization must be positive"));
        }
        let projector = base_cfg.with_variant(variant);

        let r = "recon";
        let recon = ReconSection {
            beta_rel: doc.value(r, "beta", 0.05)?,
            delta_fraction: doc.value(r, "delta", 0.01)?,
            iterations: doc.value(r, "iterations", 20)?,
            rho_y: doc.value(r, "rho_y", geometry.translation_step)?,
            rho_z: doc.value(r, "rho_z", DESK_RHO_Z)?,
            osem: doc.value::<Flag>(r, "osem", Flag(true))?.0,
            beta_scaling: match doc.value(r, "beta_scaling", "unscaled".to_string())?.as_str() {
                "unscaled" => BetaScaling::Unscaled,
                "per_subset" => BetaScaling::PerSubset,
                other => {
                    return Err(doc.fail(
                        r,
                        "beta_scaling",
                        format!("unknown beta_scaling '{other}' (expected unscaled or per_subset)"),
                    ))
                }
            },
        };
        if !(recon.beta_rel >= 0.0 && recon.beta_rel.is_finite()) {
            return Err(doc.fail(r, "beta", "beta must be finite and nonnegative"));
        }
        if !(recon.delta_fraction > 0.0 && recon.delta_fraction.is_finite()) {
            return Err(doc.fail(r, "delta", "delta must be positive"));
        }
        if recon.osem {
            build_partition(geometry.detector_rows, geometry.detector_cols, recon.rho_y, recon.rho_z)
                .map_err(|e| doc.fail(r, "rho_z", e))?;
        }

        let s = "simulation";
        let background = match doc.path(s, "background_file") {
            Some((p, line)) => {
                if doc.get(s, "background").is_some() {
                    return Err(at(line, "[simulation] give either background or background_file"));
                }
                let raster = RawRaster::read(&p).map_err(|e| at(line, format!("[simulation] background_file: {e}")))?;
                raster
                    .expect_dims(&[geometry.detector_rows, geometry.detector_cols], "background raster")
                    .map_err(|e| at(line, e))?;
                Background::PerPixel(raster.data)
            }
            None => Background::Constant(doc.value(s, "background", 0.0)?),
        };
        background
            .expand(geometry.pixel_count())
            .map_err(|e| doc.fail(s, "background", e))?;
        let simulation = SimulationSection {
            peak_count: doc.value(s, "peak_count", 50.0)?,
            seed: doc.value(s, "seed", 7)?,
            background,
        };
        if !(simulation.peak_count > 0.0 && simulation.peak_count.is_finite()) {
            return Err(doc.fail(s, "peak_count", "peak_count must be positive"));
        }

        let phantom = load_phantom(&doc, &geometry)?;
        let benchmark_runs: usize = doc.value("benchmark", "runs", 3)?;
        if benchmark_runs == 0 {
            return Err(doc.fail("benchmark", "runs", "runs must be at least 1"));
        }
        Ok(EngineConfig {
            geometry,
            spectrum,
            grid,
            mask,
            projector,
            variant,
            recon,
            simulation,
            phantom,
            benchmark_runs,
            threads: doc.value("run", "threads", 0)?,
        })
    }

    pub fn build_projector(&self, variant: Variant) -> CliResult<Projector> {
        Ok(Projector::new(
            self.geometry.clone(),
            self.grid.clone(),
            self.spectrum.clone(),
            self.mask.clone(),
            self.projector.with_variant(variant),
        )?)
    }

    pub fn detector_dims(&self) -> [usize; 2] {
        [self.geometry.detector_rows, self.geometry.detector_cols]
    }

    pub fn object_dims(&self) -> [usize; 3] {
        [self.geometry.object_nx, self.geometry.object_ny, self.grid.len()]
    }
}

fn load_mask(doc: &Document) -> CliResult<MaskImage> {
    let m = "mask";
    let layout = MaskLayout {
        pitch: doc.value(m, "pitch", 0.5)?,
        offset_y: doc.value(m, "offset_y", 0.0)?,
        offset_z: doc.value(m, "offset_z", 0.0)?,
    };
    if !(layout.pitch > 0.0 && layout.pitch.is_finite()) {
        return Err(doc.fail(m, "pitch", "pitch must be positive"));
    }
    let mask = match doc.path(m, "file") {
        Some((path, line)) => {
            if !path.exists() {
                return Err(at(line, format!("[mask] file: missing file {}", path.display())));
            }
            let (rows, cols, values) = read_mask_raster(&path).map_err(|e| at(line, format!("[mask] file: {e}")))?;
            let fraction = doc.value(m, "threshold_fraction", 0.5)?;
            MaskImage::binarize(&values, rows, cols, fraction, layout)
                .map_err(|e| doc.fail(m, "threshold_fraction", e))?
        }
        None => MaskImage::random(
            doc.value(m, "rows", 64)?,
            doc.value(m, "cols", 128)?,
            doc.value(m, "open_fraction", 0.5)?,
            doc.value(m, "seed", DESK_MASK_SEED)?,
            layout,
        )
        .map_err(|e| doc.fail(m, "rows", e))?,
    };
    let stop: f64 = doc.value(m, "beam_stop", 2.5)?;
    if !(stop >= 0.0) {
        return Err(doc.fail(m, "beam_stop", "beam_stop half-height must be nonnegative"));
    }
    Ok(if stop > 0.0 { mask.with_beam_stop(stop) } else { mask })
}

/// A 2-D raster or a graymap, chosen by content.
fn read_mask_raster(path: &Path) -> CliResult<(usize, usize, Vec<f64>)> {
    let bytes = std::fs::read(path).map_err(|e| crate::raster::io_error(path, e))?;
    if bytes.starts_with(crate::raster::MAGIC) {
        let r = RawRaster::from_bytes(&bytes)?;
        if r.dims.len() != 2 {
            return Err(CliError::input(format!("mask raster must be 2-D, got dims {:?}", r.dims)));
        }
        Ok((r.dims[0], r.dims[1], r.data))
    } else {
        read_pgm(path)
    }
}

fn load_phantom(doc: &Document, geom: &SystemGeometry) -> CliResult<PhantomSpec> {
    let p = "phantom";
    let mut custom: HashMap<String, MaterialMtp> = HashMap::new();
    for e in doc.entries.iter().filter(|e| e.section == p && e.key.starts_with("mtp.")) {
        let name = &e.key["mtp.".len()..];
        let mtp = MaterialMtp::load(name, &doc.base.join(&e.value)).map_err(|err| at(e.line, err))?;
        custom.insert(name.to_string(), mtp);
    }
    let has_inserts = doc.all(p, "insert").next().is_some();
    let preset = doc.value(p, "preset", if has_inserts { "none" } else { "two_vial" }.to_string())?;
    let mut spec = match preset.as_str() {
        "two_vial" => PhantomSpec::two_vial(geom)?,
        "none" => PhantomSpec::default(),
        other => return Err(doc.fail(p, "preset", format!("unknown preset '{other}' (expected two_vial or none)"))),
    };
    for e in doc.all(p, "insert") {
        let fields: Vec<&str> = e.value.split_whitespace().collect();
        if !(fields.len() == 5 || fields.len() == 6) {
            return Err(at(
                e.line,
                "[phantom] insert = <material> <x_offset_mm> <y_mm> <width_x_mm> <width_y_mm> [amplitude]",
            ));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| at(e.line, format!("[phantom] insert: '{s}' is not a number")))
        };
        let material = match custom.get(fields[0]) {
            Some(m) => m.clone(),
            None => MaterialMtp::bundled(fields[0]).map_err(|err| at(e.line, err))?,
        };
        spec.inserts.push(Insert {
            center_x: geom.object_center_x + num(fields[1])?,
            center_y: num(fields[2])?,
            width_x: num(fields[3])?,
            width_y: num(fields[4])?,
            material,
            amplitude: if fields.len() == 6 { num(fields[5])? } else { 1.0 },
        });
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> CliResult<EngineConfig> {
        EngineConfig::from_text(text, Path::new("."))
    }

    fn message(r: CliResult<EngineConfig>) -> String {
        match r {
            Err(CliError::Input(m)) => m,
            Err(other) => panic!("wrong error kind: {other}"),
            Ok(_) => panic!("expected an error"),
        }
    }

    #[test]
    fn empty_config_is_the_desk_system() {
        let c = EngineConfig::desk();
        assert_eq!(c.geometry, desk_geometry());
        assert_eq!(c.grid.len(), 79);
        assert_eq!((c.mask.rows(), c.mask.cols()), (64, 128));
        assert_eq!(c.variant, Variant::AO);
        assert_eq!(c.projector.n_theta, 250);
        assert_eq!((c.recon.rho_y, c.recon.rho_z), (16, 8));
        assert_eq!(c.phantom.inserts.len(), 2);
        assert_eq!(c.simulation.background, Background::Constant(0.0));
    }

    #[test]
    fn comments_sections_and_overrides() {
        let c = parse(
            "# top\n[projector]\nvariant = sai   # trailing\ninterp = linear\n\n[recon]\nosem = no\nbeta = 0\n",
        )
        .unwrap();
        assert_eq!(c.variant, Variant::SAI);
        assert!(c.projector.use_interpolation && !c.projector.use_translation_sym);
        assert_eq!(c.projector.interp_mode, InterpMode::Linear);
        assert!(!c.recon.osem);
        assert_eq!(c.recon.beta_rel, 0.0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert!(message(parse("[geometry]\n\ndetector_rows = many\n")).contains("line 3"));
        assert!(message(parse("\n[nowhere]\n")).contains("line 2: unknown section"));
        assert!(message(parse("[grid]\nq_min = 0.1\nq_min = 0.2\n")).contains("line 3: duplicate"));
        assert!(message(parse("[grid]\nbins = 3\n")).contains("unknown key 'bins'"));
        assert!(message(parse("q_min = 3\n")).contains("before any [section]"));
        assert!(message(parse("[grid]\njunk\n")).contains("line 2"));
    }

    #[test]
    fn cross_field_validation_points_at_the_key() {
        let m = message(parse("[recon]\nrho_y = 16\n\nrho_z = 7\n"));
        assert!(m.contains("line 4"), "{m}");
        let m = message(parse("[geometry]\ndetector_rows = 191\n"));
        assert!(m.contains("line 1") && m.contains("even"), "{m}");
        assert!(parse("[recon]\nosem = false\nrho_z = 7\n").is_ok());
    }

    #[test]
    fn missing_mask_file_is_named() {
        let m = message(parse("[mask]\nfile = no/such/mask.pgm\n"));
        assert!(m.contains("line 2") && m.contains("no/such/mask.pgm"), "{m}");
    }

    #[test]
    fn mask_from_graymap_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        crate::raster::write_pgm(&path, 2, 4, &[0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let c = EngineConfig::from_text("[mask]\nfile = m.pgm\npitch = 1\nbeam_stop = 0\n", dir.path()).unwrap();
        assert_eq!((c.mask.rows(), c.mask.cols()), (2, 4));
        assert!(c.mask.is_open(0, 1) && !c.mask.is_open(0, 0));
    }

    #[test]
    fn custom_inserts_replace_the_preset() {
        let c = parse("[phantom]\ninsert = graphite 0 0 5 6.08 2\n").unwrap();
        assert_eq!(c.phantom.inserts.len(), 1);
        assert_eq!(c.phantom.inserts[0].material.name, "graphite");
        assert_eq!(c.phantom.inserts[0].amplitude, 2.0);
        assert_eq!(c.phantom.inserts[0].center_x, c.geometry.object_center_x);
        let both = parse("[phantom]\npreset = two_vial\ninsert = al 0 0 5 6 \n").unwrap();
        assert_eq!(both.phantom.inserts.len(), 3);
        assert!(message(parse("[phantom]\ninsert = al 0 0\n")).contains("line 2"));
        assert!(message(parse("[phantom]\ninsert = unobtainium 0 0 1 1\n")).contains("line 2"));
    }
}
