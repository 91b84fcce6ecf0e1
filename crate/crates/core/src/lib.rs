//! Group knockoff filtering across several sites: knockoff construction,
//! group-lasso path statistics, the combined multi-site filter, simulation
//! and file-based federation.

pub mod data;
pub mod error;
pub mod federation;
pub mod filter;
pub mod knockoff;
pub mod linalg;
pub mod path;
pub mod pipeline;
pub mod simulation;

pub use data::{DatasetView, GroupPartition, OutcomeFamily};
pub use error::{Error, Result};
pub use filter::{osff_product, threshold, FilterStatistics, SelectionResult};
pub use path::{group_lasso_path, LambdaGrid, PathStatistics};
