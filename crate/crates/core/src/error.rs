use thiserror::Error;

use crate::tree::NodeId;

/// First structural violation found by [`crate::Configuration::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Diagnostic {
    #[error("configuration has no nodes")]
    Empty,
    #[error("node id 0 is not allowed; ids must be positive")]
    ZeroId,
    #[error("duplicate node id {0}")]
    DuplicateId(NodeId),
    #[error("root {0} is not a node of the configuration")]
    UnknownRoot(NodeId),
    #[error("root {0} has a father")]
    RootHasFather(NodeId),
    #[error("node {node} names unknown father {father}")]
    UnknownFather { node: NodeId, father: NodeId },
    #[error("node {0} has no father but is not the root")]
    MissingFather(NodeId),
    #[error("not a tree: node {0} is unreachable from the root")]
    NotATree(NodeId),
    #[error("degree < 2: internal node {0} has a single child")]
    DegreeOne(NodeId),
    #[error("father/children maps disagree at node {0}")]
    Inconsistent(NodeId),
    #[error("alpha must be at least 1, got {0}")]
    AlphaTooSmall(i64),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("activated set is empty")]
    EmptyActivation,
    #[error("node {0} is not enabled")]
    NotEnabled(NodeId),
    #[error("edge ({from}, {to}) scheduled for removal by two swaps")]
    EdgeConflict { from: NodeId, to: NodeId },
    #[error("node {0} is the target of two swaps")]
    SharedTarget(NodeId),
    #[error("height overflow while updating node {0}")]
    HeightOverflow(NodeId),
    #[error("step produced an invalid configuration: {0}")]
    Corrupted(Diagnostic),
    #[error("configuration still has enabled nodes")]
    NotTerminal,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("no enabled node to select")]
    NothingEnabled,
    #[error("scripted subset for step {step} shares no node with the enabled set")]
    ScriptDisjoint { step: usize },
    #[error("script exhausted after {step} steps")]
    ScriptExhausted { step: usize },
    #[error("inclusion probability must lie in (0, 1], got {0}")]
    Probability(f64),
    #[error("cannot parse scheduler {0:?}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeneratorError {
    #[error("{shape} trees need an odd node count of at least 3, got {n}")]
    Size { shape: &'static str, n: usize },
    #[error("empty height range [{lo}, {hi}]")]
    HeightRange { lo: i64, hi: i64 },
    #[error("cannot parse {0:?}")]
    Parse(String),
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Invalid(#[from] Diagnostic),
    #[error("step cap must be positive")]
    ZeroStepCap,
    #[error("cannot parse fuzz case {0:?}")]
    Replay(String),
}
