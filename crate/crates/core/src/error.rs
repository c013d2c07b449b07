use std::path::PathBuf;

use thiserror::Error;

/// Broad failure classes. The numeric value doubles as the CLI exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorClass {
    Parse = 2,
    Query = 3,
    Validation = 4,
    Io = 5,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("cycle detected through node `{0}`")]
    Cycle(String),
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("edge {from} -> {to} references undeclared node `{missing}`")]
    UndeclaredNode { from: String, to: String, missing: String },
    #[error("node `{0}` is latent but marked adjustable")]
    LatentAdjustable(String),

    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("treatment and outcome must differ (both `{0}`)")]
    SameEndpoints(String),
    #[error("path {0} is not present in the graph")]
    PathNotInGraph(String),

    #[error("duplicate record {0}")]
    DuplicateRecord(String),
    #[error("dangling {kind} id `{id}` in record {key}")]
    DanglingId {
        kind: &'static str,
        id: String,
        key: String,
    },
    #[error("missing record {0}")]
    MissingRecord(String),
    #[error("conflicting gold for ({relation}, {instance}): `{first}` vs `{second}`")]
    GoldConflict {
        relation: String,
        instance: String,
        first: String,
        second: String,
    },
    #[error("invalid catalog: {0}")]
    Catalog(String),
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("unknown {kind} `{id}`")]
    UnknownId { kind: &'static str, id: String },
    #[error("empty relation `{0}`")]
    EmptyRelation(String),
    #[error("relation `{0}` has fewer than two prompts")]
    SinglePrompt(String),
    #[error("stability undefined for relation `{0}`: no instance has two or more verbalizations")]
    StabilityUndefined(String),
    #[error("at least {required} models are required, found {found}")]
    TooFewModels { required: usize, found: usize },
    #[error("rankings cover different model sets")]
    InconsistentUniverse,
    #[error("no default {kind} flagged for `{id}`")]
    NoDefault { kind: &'static str, id: String },
    #[error("unknown evaluation mode `{0}`")]
    UnknownMode(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("weight mismatch: {0}")]
    WeightMismatch(String),
    #[error("empty sample for relation `{0}`")]
    EmptySample(String),
    #[error("subset size {subset} exceeds the {available} available relations")]
    SubsetTooLarge { subset: usize, available: usize },
    #[error("runtime {runtime}: {source}")]
    Runtime {
        runtime: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("scenario: {0}")]
    Scenario(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            Syntax { .. } | Cycle(_) | DuplicateNode(_) | UndeclaredNode { .. } | LatentAdjustable(_) | Catalog(_) => {
                ErrorClass::Parse
            }
            UnknownNode(_)
            | SameEndpoints(_)
            | PathNotInGraph(_)
            | UnknownId { .. }
            | UnknownMode(_)
            | Config(_)
            | WeightMismatch(_)
            | SubsetTooLarge { .. }
            | TooFewModels { .. }
            | InconsistentUniverse => ErrorClass::Query,
            DuplicateRecord(_)
            | DanglingId { .. }
            | MissingRecord(_)
            | GoldConflict { .. }
            | Grid(_)
            | EmptyRelation(_)
            | SinglePrompt(_)
            | StabilityUndefined(_)
            | NoDefault { .. }
            | EmptySample(_)
            | Scenario(_) => ErrorClass::Validation,
            Runtime { source, .. } => source.class(),
            Io { .. } => ErrorClass::Io,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn syntax(line: usize, message: impl Into<String>) -> Self {
        Error::Syntax {
            line,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
