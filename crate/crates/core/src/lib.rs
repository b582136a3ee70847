//! Formal and resummed quasi-periodic solutions for hyperbolic lower-dimensional
//! tori of `H = ω·A + A²/2 + B²/2 + ε f(α, β)`.

pub mod explorer;
pub mod lattice;
pub mod model;
pub mod multiscale;
pub mod oracle;
pub mod real;
pub mod series;
pub mod trees;

pub use model::{load_model, Model, ModelError};
