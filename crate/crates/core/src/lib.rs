//! Solution-level tree search for program synthesis.
//!
//! The crate is organised around two boundaries: a [`generators::Generator`]
//! that proposes program text and a [`verifier::Verifier`] that scores it
//! against assert tests. Search strategies in [`strategies`] drive both and
//! emit [`types::RunRecord`]s; [`metrics`] and [`harness`] turn records into
//! reports.

pub mod engine;
pub mod forest;
pub mod generators;
pub mod harness;
pub mod metrics;
pub mod strategies;
pub mod types;
pub mod verifier;

pub use engine::{EngineConfig, Policy, PuctConfig};
pub use forest::{Forest, NodeId, SearchNode, Trajectory};
pub use types::{
    select_final, CandidateSolution, CoreError, Direction, DirectionId, DirectionStats, InsightMemory, Method,
    RunConfig, RunRecord, SeedTheme, Task, TaskView, ValidationTest,
};
