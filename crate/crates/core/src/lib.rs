//! Semiparametric multinomial-choice estimation with sparse random projections
//! and cyclic-monotonicity moment inequalities.

pub mod criterion;
pub mod data;
pub mod error;
pub mod estimate;
pub mod projection;
pub mod registry;
pub mod seed;
pub mod simulate;
pub mod stats;

pub use criterion::{criterion, Criterion, CriterionForm, Cycle, CycleSet, Orientation, ParamPoint};
pub use data::{ChoiceData, ColumnScaling, CsvSchema, Dataset, Market, ShareTotal};
pub use error::{Error, Result};
pub use estimate::{
    estimate_polar_grid, estimate_subgradient, run_replications, Estimate, Estimator, EstimatorConfig,
    IdentifiedSet, ReplicationConfig, ReplicationSummary,
};
pub use projection::{jl_diagnostic, CompressedDataset, ProjectionSpec, SparseProjection, Sparsity};
pub use simulate::{compute_shares_mc, logit_oracle_dataset, simulate_dataset, SimConfig};
