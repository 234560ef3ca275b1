use std::fmt;

/// Pipeline stage a failure originated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Encoding,
    Pca,
    Align,
    Scale,
    Generalize,
    Classify,
    Persist,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Encoding => "encoding",
            Stage::Pca => "pca",
            Stage::Align => "align",
            Stage::Scale => "scale",
            Stage::Generalize => "generalize",
            Stage::Classify => "classify",
            Stage::Persist => "persist",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("non-finite value in input")]
    NonFiniteInput,
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("empty input")]
    EmptyInput,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("weight matrix is not symmetric")]
    AsymmetricInput,
    #[error("right-hand matrix of the generalized eigenproblem is not positive definite")]
    SingularPencil,
    #[error("solver did not converge: {0}")]
    NonConvergence(String),
    #[error("insufficient labels: {0}")]
    InsufficientLabels(String),
    #[error("unknown domain index {0}")]
    UnknownDomain(usize),
    #[error("class {0} has no labeled instances")]
    MissingClass(usize),
    #[error("training loss became non-finite at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },
    #[error("only one class present")]
    SingleClass,
    #[error("too few samples: {0}")]
    TooFewSamples(String),
    #[error("bad synthetic spec: {0}")]
    BadSpec(String),
    #[error("requested split exceeds available samples: {0}")]
    SplitTooLarge(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("source and target class sets differ")]
    ClassSetMismatch,
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("model version mismatch: file has {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("config error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("[{stage}] {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

/// Coarse failure class, used for CLI exit codes and the C error codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn at(self, stage: Stage) -> Error {
        match self {
            // keep the innermost stage label
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// The error with any stage wrappers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self.root() {
            Error::BadConfig(_) | Error::Config(_) | Error::BadSpec(_) => ErrorKind::Config,
            Error::SingularPencil
            | Error::NonConvergence(_)
            | Error::NonFiniteLoss { .. }
            | Error::DegenerateData(_) => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numerical => 4,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
