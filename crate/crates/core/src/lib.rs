//! Sequential experiment design for process-parameter studies.
//!
//! Two strategies map a grid of process parameters to a scalar response:
//! a Taguchi orthogonal-array design with an additive main-effects predictor,
//! and Gaussian-process regression seeded by Latin hypercube sampling and
//! grown by uncertainty sampling. [`campaign`] ties them together with a
//! persistent run log, held-out evaluation and comparison reports.

pub mod active_learning;
pub mod campaign;
pub mod design_space;
pub mod error;
pub mod gpr;
pub mod linalg;
pub mod oracle;
pub mod report;
pub mod response;
pub mod sampling;
pub mod seed;
pub mod taguchi;

pub use active_learning::{AlConfig, TraceEntry};
pub use campaign::{init_campaign, CampaignState, FileLock, InitOptions, Status, Strategy, Suggestion};
pub use design_space::{DesignPoint, DesignSpace, Factor, RealPoint};
pub use error::{Error, Result};
pub use oracle::OracleSpec;
pub use report::{compare, export_csv, ComparisonReport, ExportKind};
pub use gpr::{FitReport, GprModel, KernelParams, SearchSpec, Standardizer};
pub use response::{composite_response, BeadGeometry, MetricPair, ResponseY};
pub use taguchi::{FactorAnalysis, MainEffectsModel, OrthogonalArray};
