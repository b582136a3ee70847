//! Multiscale analysis: scale labels, clusters and self-energy graphs, and the
//! resummed self-energy matrices with their dressed propagators.

mod catalog;
mod clusters;
mod matrix;
mod scales;
mod selfenergy;

pub use catalog::{build_catalog, SelfEnergyCatalog, Skeleton};
pub use clusters::{
    assign_scales, bryuno_check, shift_family, BryunoReport, BryunoRow, Cluster, GraphVertex, ScaledGraph, ScaledTree,
    SelfEnergyGraph, ShiftFamily,
};
pub use matrix::{
    log_log_slope, BlockBoundReport, MLimit, ResumError, SelfEnergyEngine, BLOCK_FIT_RANGE, CONDITION_LIMIT,
};
pub use scales::{
    build_scale_sequence, mass_bound, ScaleCertificate, ScaleError, ScaleSequence, GRID_SIZE, SCALE_FLOOR_LIMIT,
};
pub use selfenergy::{
    bare_propagator, blocks, graph_value, localize, project, self_energy_value, sup_norm, verify_catalog_cancellations,
    verify_localized_cancellations, FamilyCancellation, GraphSpec, Localized, LocalizedReport, SelfEnergyError,
    LOCALIZE_STEP,
};
