use thiserror::Error;

use crate::spectrum::AllocId;
use crate::topology::NodeId;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: duplicate node `{id}`")]
    DuplicateNode { line: usize, id: String },
    #[error("line {line}: unknown node `{id}`")]
    DanglingEndpoint { line: usize, id: String },
    #[error("line {line}: link length must be positive, got {length}")]
    NonPositiveLength { line: usize, length: f64 },
    #[error("line {line}: self-loop on `{id}`")]
    SelfLoop { line: usize, id: String },
    #[error("topology declares no nodes")]
    NoNodes,
    #[error("unknown node {0:?}")]
    UnknownNode(NodeId),
    #[error("unknown node name `{0}`")]
    UnknownName(String),
    #[error("slots per link must be at least 1")]
    NoSlots,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpectrumError {
    #[error("empty fiber path")]
    EmptyPath,
    #[error("slot range {start}+{len} does not fit in {slots} slots")]
    OutOfRange { start: usize, len: usize, slots: usize },
    #[error("slot {slot} on arc {arc} conflicts with allocation {owner:?}")]
    Conflict { arc: usize, slot: usize, owner: AllocId },
    #[error("unknown allocation {0:?}")]
    UnknownAllocation(AllocId),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IlpError {
    #[error("candidate path set is empty")]
    NoCandidates,
    #[error("slot count must be positive")]
    NoSlots,
    #[error("assignment has no value for `{0}`")]
    MissingValue(String),
    #[error("assignment is infeasible")]
    Infeasible,
    #[error("LP parse error on line {line}: {msg}")]
    LpParse { line: usize, msg: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("instance exceeds oracle limits: {0}")]
    TooLarge(String),
    #[error("enumeration budget of {0} combinations exceeded")]
    BudgetExceeded(u64),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("scenario file: {0}")]
    Scenario(String),
}
