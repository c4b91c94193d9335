//! Ready-made system configurations.

use crate::error::Result;
use crate::geometry::SystemGeometry;
use crate::mask::{MaskImage, MaskLayout};
use crate::projector::{Projector, ProjectorConfig};
use crate::spectrum::{MomentumGrid, SourceSpectrum};

pub const DESK_RHO_Z: usize = 8;
pub const DESK_MASK_SEED: u64 = 20_160_321;

/// 192 x 256 detector at 0.19 mm pitch, 28 x 28 object, 16-pixel translation step.
pub fn desk_geometry() -> SystemGeometry {
    SystemGeometry {
        detector_distance: 1546.5,
        detector_rows: 192,
        detector_cols: 256,
        detector_pitch: 0.19,
        mask_distance: 100.0,
        object_center_x: 1035.0,
        object_nx: 28,
        object_ny: 28,
        object_dx: 2.5,
        translation_step: 16,
    }
}

/// 79 bins from 0.01 to 0.4 inverse angstrom.
pub fn desk_grid() -> MomentumGrid {
    MomentumGrid::uniform(0.01, 0.4, 79).expect("valid grid")
}

/// Half-open random 0.5 mm mask with a 2.5 mm beam stop over the fan plane.
pub fn desk_mask(seed: u64) -> MaskImage {
    MaskImage::random(64, 128, 0.5, seed, MaskLayout::centered(0.5))
        .expect("valid mask")
        .with_beam_stop(2.5)
}

pub fn desk_projector(cfg: ProjectorConfig) -> Result<Projector> {
    Projector::new(
        desk_geometry(),
        desk_grid(),
        SourceSpectrum::default_tungsten(),
        desk_mask(DESK_MASK_SEED),
        cfg,
    )
}
