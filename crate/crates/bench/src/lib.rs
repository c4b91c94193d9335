//! Fixtures shared by the benchmarks.
//!
//! The bench system keeps the desk geometry's proportions but uses a
//! 48 x 64 detector at 0.76 mm pitch so one projection takes milliseconds.

use fanscatter_core::presets::desk_mask;
use fanscatter_core::{
    build_phantom, simulate, Background, DetectorImage, HyperspectralImage, MomentumGrid, PhantomSpec, Projector,
    ProjectorConfig, Simulation, SourceSpectrum, SystemGeometry,
};

pub fn bench_geometry() -> SystemGeometry {
    SystemGeometry {
        detector_distance: 1546.5,
        detector_rows: 48,
        detector_cols: 64,
        detector_pitch: 0.76,
        mask_distance: 100.0,
        object_center_x: 1035.0,
        object_nx: 16,
        object_ny: 8,
        object_dx: 2.5,
        translation_step: 4,
    }
}

pub fn bench_projector(cfg: ProjectorConfig) -> Projector {
    Projector::new(
        bench_geometry(),
        MomentumGrid::uniform(0.01, 0.4, 40).expect("valid grid"),
        SourceSpectrum::default_tungsten(),
        desk_mask(1),
        cfg,
    )
    .expect("valid bench system")
}

pub struct Workload {
    pub phantom: HyperspectralImage,
    pub data: Simulation,
}

impl Workload {
    pub fn new(base: &Projector) -> Self {
        let spec = PhantomSpec::two_vial(base.geometry()).expect("bundled profiles");
        let phantom = build_phantom(&spec, base.geometry(), base.grid()).expect("vials fit the grid");
        let data = simulate(base, &phantom, 50.0, &Background::Constant(0.0), 1).expect("nonzero data");
        Workload { phantom, data }
    }

    pub fn noiseless(&self) -> &DetectorImage {
        &self.data.noiseless
    }
}
