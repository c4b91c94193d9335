use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fanscatter_core::phantom::{mean_mtp, spatial_distribution, POISSON_GENERATOR_VERSION};
use fanscatter_core::recon::{absolute_beta, initial_level, iterate, sensitivity};
use fanscatter_core::{
    benchmark_variants, build_partition, build_phantom, osem_iterate, simulate, BenchmarkRow, BenchmarkSpec, DataMode,
    DetectorImage, Direction, HyperspectralImage, MeasurementSet, Neighborhood, Projector, ReconOptions, Regularizer,
    Scope, SubsetPartition, Variant,
};

use crate::config::EngineConfig;
use crate::error::{CliError, CliResult};
use crate::raster::{io_error, write_pgm, RawRaster};

fn prepare_dir(out: &Path) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| io_error(out, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn ensure_finite(values: &[f64], what: &str) -> CliResult<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(k) => Err(CliError::Numerical(format!(
            "{what} contains a non-finite value ({}) at flat index {k}",
            values[k]
        ))),
        None => Ok(()),
    }
}

pub struct SimulateOutput {
    pub scale: f64,
    pub seed: u64,
    pub max_count: f64,
}

pub fn cmd_simulate(cfg: &EngineConfig, out: &Path, seed: Option<u64>, pgm: bool) -> CliResult<SimulateOutput> {
    prepare_dir(out)?;
    let seed = seed.unwrap_or(cfg.simulation.seed);
    // Data always come from the unoptimized model; skip building lookup tables.
    let projector = cfg.build_projector(Variant::NO)?;
    let f = build_phantom(&cfg.phantom, &cfg.geometry, &cfg.grid)?;
    let sim = simulate(&projector, &f, cfg.simulation.peak_count, &cfg.simulation.background, seed)?;
    let det = cfg.detector_dims();
    RawRaster::new(det.to_vec(), sim.noiseless.as_slice().to_vec())?.write(&out.join("noiseless.raster"))?;
    RawRaster::new(det.to_vec(), sim.measurements.counts().to_vec())?.write(&out.join("counts.raster"))?;
    RawRaster::new(cfg.object_dims().to_vec(), f.as_slice().to_vec())?.write(&out.join("phantom.raster"))?;
    if pgm {
        write_pgm(&out.join("counts.pgm"), det[0], det[1], sim.measurements.counts())?;
        write_pgm(&out.join("noiseless.pgm"), det[0], det[1], sim.noiseless.as_slice())?;
        let spatial = spatial_distribution(&f, cfg.grid.spacing());
        write_pgm(&out.join("phantom_spatial.pgm"), cfg.geometry.object_nx, cfg.geometry.object_ny, &spatial)?;
    }
    let max_count = sim.measurements.counts().iter().copied().fold(0.0, f64::max);
    let mut meta = String::new();
    let _ = writeln!(meta, "engine_version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(meta, "poisson_generator = {POISSON_GENERATOR_VERSION}");
    let _ = writeln!(meta, "seed = {seed}");
    let _ = writeln!(meta, "peak_count = {}", cfg.simulation.peak_count);
    let _ = writeln!(meta, "scale = {:e}", sim.scale);
    let _ = writeln!(meta, "detector = {}x{}", det[0], det[1]);
    let _ = writeln!(meta, "object = {}x{}x{}", cfg.object_dims()[0], cfg.object_dims()[1], cfg.object_dims()[2]);
    let _ = writeln!(meta, "total_counts = {}", sim.measurements.counts().iter().sum::<f64>());
    let _ = writeln!(meta, "max_counts = {max_count}");
    for (k, ins) in cfg.phantom.inserts.iter().enumerate() {
        let _ = writeln!(
            meta,
            "insert{k} = {} x {} y {} wx {} wy {} amplitude {}",
            ins.material.name, ins.center_x, ins.center_y, ins.width_x, ins.width_y, ins.amplitude
        );
    }
    write_text(&out.join("meta.txt"), &meta)?;
    Ok(SimulateOutput {
        scale: sim.scale,
        seed,
        max_count,
    })
}

/// Forward projection of a `(nx, ny, nq)` raster; the unoptimized variant
/// runs the direct ray loop.
pub fn cmd_project(cfg: &EngineConfig, input: &Path, out: &Path, variant: Variant) -> CliResult<PathBuf> {
    let raster = RawRaster::read(input)?;
    raster.expect_dims(&cfg.object_dims(), "input image")?;
    let [nx, ny, nq] = cfg.object_dims();
    let f = HyperspectralImage::from_vec(nx, ny, nq, raster.data)?;
    let p = cfg.build_projector(variant)?;
    let g = if variant == Variant::NO {
        p.forward_naive(&f, Scope::Full)?
    } else {
        p.forward(&f, Scope::Full)?
    };
    ensure_finite(g.as_slice(), "projection")?;
    report_out_of_range(&p);
    prepare_dir(out)?;
    let path = out.join("projection.raster");
    RawRaster::new(cfg.detector_dims().to_vec(), g.into_vec())?.write(&path)?;
    Ok(path)
}

pub fn cmd_backproject(cfg: &EngineConfig, input: &Path, out: &Path, variant: Variant) -> CliResult<PathBuf> {
    let raster = RawRaster::read(input)?;
    raster.expect_dims(&cfg.detector_dims(), "input detector image")?;
    let [rows, cols] = cfg.detector_dims();
    let g = DetectorImage::from_vec(rows, cols, raster.data)?;
    let p = cfg.build_projector(variant)?;
    let f = if variant == Variant::NO {
        p.backward_naive(&g, Scope::Full)?
    } else {
        p.backward(&g, Scope::Full)?
    };
    ensure_finite(f.as_slice(), "backprojection")?;
    report_out_of_range(&p);
    prepare_dir(out)?;
    let path = out.join("backprojection.raster");
    RawRaster::new(cfg.object_dims().to_vec(), f.into_vec())?.write(&path)?;
    Ok(path)
}

fn report_out_of_range(p: &Projector) {
    let n = p.out_of_range_rays();
    if n > 0 {
        log::warn!("{n} rays exceeded theta_max = {} rad and were dropped", p.config().theta_max);
    }
}

pub struct ReconstructOutput {
    pub objective: Vec<f64>,
    pub level: f64,
    pub subsets: usize,
}

pub fn cmd_reconstruct(cfg: &EngineConfig, counts: &Path, out: &Path, variant: Variant) -> CliResult<ReconstructOutput> {
    let raster = RawRaster::read(counts)?;
    raster.expect_dims(&cfg.detector_dims(), "counts")?;
    ensure_finite(&raster.data, "counts")?;
    let g = &cfg.geometry;
    let background = cfg.simulation.background.expand(g.pixel_count())?;
    let meas = MeasurementSet::new(raster.data, background)?;
    let p = cfg.build_projector(variant)?;
    let b1 = sensitivity(&p, Scope::Full)?;
    let level = initial_level(&b1, &meas)?;
    let nq = cfg.grid.len();
    let neighborhood = Neighborhood::new(g.object_nx, g.object_ny, nq, g.object_dx, g.object_dy())?;
    let reg = Regularizer::new(
        absolute_beta(cfg.recon.beta_rel, &b1, level),
        cfg.recon.delta_fraction * level,
        neighborhood,
    )?;
    let f0 = vec![level; g.object_pixel_count() * nq];
    let opts = ReconOptions {
        iterations: cfg.recon.iterations,
        beta_scaling: cfg.recon.beta_scaling,
        track_objective: true,
    };
    let (res, subsets) = if cfg.recon.osem {
        let partition = partition(cfg)?;
        log::info!("OSEM with {} subsets, {} iterations", partition.len(), opts.iterations);
        (osem_iterate(&p, &f0, &meas, &reg, &partition, &opts)?, partition.len())
    } else {
        log::info!("EM, {} iterations", opts.iterations);
        (iterate(&p, &f0, &meas, &reg, &[Scope::Full], &[b1], &opts)?, 1)
    };
    ensure_finite(&res.image, "reconstruction")?;
    ensure_finite(&res.trace.objective, "objective trace")?;
    if res.trace.unbounded_updates > 0 {
        log::warn!("{} voxel updates were unbounded and kept their value", res.trace.unbounded_updates);
    }
    report_out_of_range(&p);

    prepare_dir(out)?;
    let fhat = HyperspectralImage::from_vec(g.object_nx, g.object_ny, nq, res.image)?;
    let spatial = spatial_distribution(&fhat, cfg.grid.spacing());
    RawRaster::new(cfg.object_dims().to_vec(), fhat.as_slice().to_vec())?.write(&out.join("fhat.raster"))?;
    RawRaster::new(vec![g.object_nx, g.object_ny], spatial.clone())?.write(&out.join("spatial.raster"))?;
    write_pgm(&out.join("spatial.pgm"), g.object_nx, g.object_ny, &spatial)?;

    let mut csv = String::from("outer_iteration,objective\n");
    for (t, v) in res.trace.objective.iter().enumerate() {
        let _ = writeln!(csv, "{t},{v:.17e}");
    }
    write_text(&out.join("objective.csv"), &csv)?;

    let mut used: Vec<String> = Vec::new();
    for ins in &cfg.phantom.inserts {
        let region = ins.pixels(g);
        if region.is_empty() {
            continue;
        }
        let mut name = ins.material.name.clone();
        if used.contains(&name) {
            name = format!("{name}_{}", used.len());
        }
        used.push(name.clone());
        let reference = ins.material.resample(&cfg.grid);
        let mut csv = String::from("q,estimate,reference\n");
        match mean_mtp(&fhat, &region) {
            Ok(est) => {
                for ((q, e), r) in cfg.grid.values().iter().zip(&est).zip(&reference) {
                    let _ = writeln!(csv, "{q},{e:.9},{r:.9}");
                }
            }
            Err(e) => log::warn!("region '{name}': {e}"),
        }
        write_text(&out.join(format!("mtp_{name}.csv")), &csv)?;
    }
    Ok(ReconstructOutput {
        objective: res.trace.objective,
        level,
        subsets,
    })
}

fn partition(cfg: &EngineConfig) -> CliResult<SubsetPartition> {
    Ok(build_partition(
        cfg.geometry.detector_rows,
        cfg.geometry.detector_cols,
        cfg.recon.rho_y,
        cfg.recon.rho_z,
    )?)
}

/// Writes `report.csv` (forward) and `report_backward.csv`.
pub fn cmd_benchmark(
    cfg: &EngineConfig,
    out: &Path,
    variant: Option<Variant>,
    mode: Option<DataMode>,
) -> CliResult<Vec<BenchmarkRow>> {
    let base = cfg.build_projector(Variant::NO)?;
    let f = build_phantom(&cfg.phantom, &cfg.geometry, &cfg.grid)?;
    let sim = simulate(&base, &f, cfg.simulation.peak_count, &cfg.simulation.background, cfg.simulation.seed)?;
    let variants: Vec<Variant> = match variant {
        Some(Variant::NO) => vec![Variant::NO],
        Some(v) => vec![Variant::NO, v],
        None => Variant::ALL.to_vec(),
    };
    let modes: Vec<DataMode> = match mode {
        Some(m) => vec![m],
        None => vec![DataMode::Fdi, DataMode::Osi],
    };
    let masks = if modes.contains(&DataMode::Osi) {
        partition(cfg)?.masks()
    } else {
        Vec::new()
    };
    let rows = benchmark_variants(
        &base,
        &f,
        &sim.noiseless,
        &BenchmarkSpec {
            variants: &variants,
            modes: &modes,
            directions: &[Direction::Forward, Direction::Backward],
            runs: cfg.benchmark_runs,
            subsets: &masks,
        },
    )?;
    prepare_dir(out)?;
    for (dir, file) in [(Direction::Forward, "report.csv"), (Direction::Backward, "report_backward.csv")] {
        let mut csv = String::from("variant,mode,time_s,speedup,nrmse_pct\n");
        for r in rows.iter().filter(|r| r.direction == dir) {
            let _ = writeln!(
                csv,
                "{},{},{:.6},{:.2},{:.2}",
                r.variant,
                r.mode.name(),
                r.time_s,
                r.speedup,
                100.0 * r.nrmse
            );
        }
        write_text(&out.join(file), &csv)?;
    }
    Ok(rows)
}

/// Human-readable partition report and whether every check passed.
pub fn cmd_partition_check(cfg: &EngineConfig) -> CliResult<(String, bool)> {
    let p = partition(cfg)?;
    let r = p.check();
    let (min, max) = (
        r.sizes.iter().copied().min().unwrap_or(0),
        r.sizes.iter().copied().max().unwrap_or(0),
    );
    let mark = |b: bool| if b { "pass" } else { "FAIL" };
    let mut s = String::new();
    let _ = writeln!(
        s,
        "detector {}x{}, rho_y {}, rho_z {}",
        cfg.geometry.detector_rows, cfg.geometry.detector_cols, cfg.recon.rho_y, cfg.recon.rho_z
    );
    let _ = writeln!(s, "subsets P = {}", r.subsets);
    let _ = writeln!(s, "subset sizes {min}..{max}");
    let _ = writeln!(s, "equal sizes: {}", mark(r.balanced));
    let _ = writeln!(s, "disjoint: {}", mark(r.disjoint));
    let _ = writeln!(s, "covering: {}", mark(r.covering));
    let _ = writeln!(s, "left-right mirror closure: {}", mark(r.lr_closed));
    let _ = writeln!(s, "up-down mirror closure: {}", mark(r.ud_closed));
    let _ = writeln!(s, "translation closure: {}", mark(r.translation_closed));
    Ok((s, r.all_pass()))
}
