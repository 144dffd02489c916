//! Self-stabilizing balancing of rooted trees by edge swapping.
//!
//! Every node runs two guarded actions against its own height variable and
//! those of its children:
//!
//! * a **height update**, enabled when the node's height variable is not one
//!   more than the largest child height (or not zero for a leaf);
//! * an **edge swap**, enabled when the node and its tallest child are stable
//!   but two of the node's children differ in height by more than `alpha`. The
//!   node then trades its shortest child for the tallest grandchild under its
//!   tallest child.
//!
//! A distributed daemon activates any non-empty subset of enabled nodes per
//! step. The crate provides:
//!
//! * [`tree`]: configurations, guards and batch step execution;
//! * [`analysis`]: bad nodes, the component partition, badness vectors, leaf
//!   components, swap chains and per-step invariant checkers;
//! * [`scheduling`]: daemons and round accounting with neutralization;
//! * [`generators`]: caterpillars, the lower-bound family and random trees;
//! * [`engine`]: full runs, sweeps and fuzz campaigns.

pub mod analysis;
pub mod engine;
pub mod error;
pub mod generators;
pub mod scheduling;
pub mod tree;

pub use analysis::{
    BadnessVector, CheckLevel, ComponentPartition, ComponentRoot, FinalCheck, Rule, SwapChain,
    Violation,
};
pub use engine::{
    AggregateRow, FuzzCampaign, FuzzCase, FuzzOutcome, FuzzReport, RunMetrics, RunOptions,
    RunReport, RunStatus, ShapeKind, SweepPlan, SweepRow,
};
pub use error::{Diagnostic, EngineError, GeneratorError, ScheduleError, StepError};
pub use generators::{GeneratorSpec, HeightPolicy, Shape};
pub use scheduling::{RoundTracker, Scheduler, SchedulerKind};
pub use tree::{ActionPlan, Alpha, Configuration, Height, NodeId, StepRecord, SwapRoles};
