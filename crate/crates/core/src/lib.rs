//! Forward models, adjoints and penalized ordered-subsets reconstruction for
//! fan-beam coded-aperture coherent-scatter imaging.

pub mod error;
pub mod geometry;
pub mod image;
pub mod mask;
pub mod phantom;
pub mod presets;
pub mod projector;
pub mod recon;
pub mod spectrum;

pub use error::{Error, Result};
pub use geometry::{DetectorHalf, GodBlock, Point3, SystemGeometry};
pub use image::{nrmse, DetectorImage, HyperspectralImage};
pub use mask::{MaskImage, MaskLayout, Quadrant, QuadrantStacks};
pub use phantom::{build_phantom, simulate, Background, Insert, MaterialMtp, PhantomSpec, Simulation};
pub use projector::benchmark::{benchmark_variants, BenchmarkRow, BenchmarkSpec, DataMode, Direction};
pub use projector::{LinearOperator, NaiveOperator, Projector, ProjectorConfig, Scope, Variant};
pub use recon::{
    build_partition, em_iterate, osem_iterate, BetaScaling, MeasurementSet, Neighborhood, ReconOptions, ReconResult,
    ReconTrace, Regularizer, SubsetPartition,
};
pub use spectrum::{InterpMode, MomentumGrid, SourceSpectrum, SpectralFactorTable};
