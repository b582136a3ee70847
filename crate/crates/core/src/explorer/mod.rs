//! Fully renormalized solution, its checks on the torus and the analyticity domain probe.

mod commands;
mod domain;
mod expand;
mod report;

use thiserror::Error;

use crate::multiscale::{ResumError, ScaleError};
use crate::oracle::OracleError;

pub use commands::{
    agreement_tolerance, compare_trees_with_oracle, dump_zero_momentum_trees, relative, run_bench, run_expand,
    run_probe_domain, run_resum, run_verify, symmetry_defects, DomainRun, Expansion, RunSettings, Suite,
    SymmetryDefects, TreeOracleComparison, CUSP_TOLERANCE, FIXED_POINT_LEVELS, FIXED_POINT_TOLERANCE,
    MIXED_CANCELLATION_TOLERANCE, RESIDUAL_TOLERANCE, SLOPE_TOLERANCE, STRICT_CANCELLATION_TOLERANCE,
    SYMMETRY_TOLERANCE, ZERO_MOMENTUM_TOLERANCE,
};
pub use domain::{default_phi_grid, window_samples, DomainProbe, DomainReport, DomainSpec, ProbeSample, ProbeSettings};
pub use expand::{
    coefficient_growth, force_at, residual_on_torus, residual_scaling, torus_embedding, torus_grid,
    verify_order_matching, GrowthFit, LimitSettings, OrderMatching, Provenance, RenormalizedExpander,
    RenormalizedSolution, ResidualScaling, TorusPoint, RE_EXPANSION_POINTS, RE_EXPANSION_RADIUS,
};
pub use report::{fmt_complex, fmt_number, Report};

#[derive(Debug, Error)]
pub enum ExplorerError {
    #[error(transparent)]
    Resum(#[from] ResumError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

impl From<ScaleError> for ExplorerError {
    fn from(e: ScaleError) -> Self {
        Self::Resum(e.into())
    }
}
