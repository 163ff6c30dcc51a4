use thiserror::Error;

use crate::ids::NodeId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DhrError {
    #[error("unknown DHR type `{0}`")]
    UnknownDhrType(String),
    #[error("property `{property}` is not in the domain of DHR type `{ty}`")]
    UnknownProperty { ty: String, property: String },
    #[error("DHR type `{0}` has an empty property domain")]
    EmptyDomain(String),
    #[error("DHR type `{ty}` lists property `{property}` twice")]
    DuplicateProperty { ty: String, property: String },
    #[error("threshold DHR type `{0}` needs a strictly increasing numeric domain")]
    NotIncreasing(String),
    #[error("DHR type `{ty}`: {reason}")]
    InvalidType { ty: String, reason: String },
    #[error("DHR type `{0}` is declared twice")]
    DuplicateType(String),
    #[error("no comparison predicate registered for kind `{0}`")]
    UnknownKind(String),
    #[error("demand for `{0}` must name at least one property")]
    EmptyDemand(String),
    #[error("malformed registry document: {0}")]
    Json(String),
}

/// Parser failures. Positions are byte offsets into the statement text.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {pos}: expected {expected}, found {found}")]
    Syntax {
        pos: usize,
        expected: String,
        found: String,
    },
    #[error("unknown DHR type `{name}` at byte {pos}")]
    UnknownDhrType { pos: usize, name: String },
    #[error("property `{property}` not allowed for `{ty}` at byte {pos}")]
    UnknownProperty {
        pos: usize,
        ty: String,
        property: String,
    },
}

impl ParseError {
    pub fn position(&self) -> usize {
        match self {
            ParseError::Syntax { pos, .. }
            | ParseError::UnknownDhrType { pos, .. }
            | ParseError::UnknownProperty { pos, .. } => *pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RingError {
    #[error("replication factor {r} outside 1..={nodes}")]
    InvalidReplicationFactor { r: usize, nodes: usize },
    #[error("token ring has no nodes")]
    Empty,
    #[error("token {token} assigned to both {a} and {b}")]
    DuplicateToken { token: u64, a: NodeId, b: NodeId },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Dhr(#[from] DhrError),
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error("malformed configuration JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParamError {
    #[error("invalid workload parameter: {0}")]
    Invalid(String),
}
