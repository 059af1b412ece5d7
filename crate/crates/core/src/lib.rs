//! Graph signal processing over distributions of graph operators.
//!
//! A signal lives on a fixed vertex set while the operator that defines its
//! frequencies is random. An [`OperatorEnsemble`] discretizes that
//! distribution into weighted fibers; the transform, filters, sampling and
//! learning modules all work fiber by fiber and average.

pub mod base_change;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod filters;
pub mod io;
pub mod learning;
pub mod operator;
pub mod sampling;
pub mod synth;
pub mod transform;

pub use ensemble::{compile, DistributionSpec, IntervalFamily, OperatorEnsemble};
pub use error::{Error, Result};
pub use operator::{laplacian_from_edges, Signal, SymOperator};
