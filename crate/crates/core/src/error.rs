use std::path::PathBuf;

/// Every failure the engine can report. The CLI maps [`Error::exit_code`] to
/// its process status and prints [`Error::to_json_line`] on stderr.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid magnetic field: {0}")]
    Field(String),
    #[error("invalid elastic tensor: {0}")]
    Tensor(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("expression error at offset {pos}: {msg}")]
    Expr { pos: usize, msg: String },
    #[error("conjugate gradient stalled after {iterations} iterations (relative residual {residual:e})")]
    CgNotConverged { iterations: usize, residual: f64 },
    #[error("eigensolver stagnated: {converged} of {requested} modes converged")]
    EigenStagnation { converged: usize, requested: usize },
    #[error("time step {dt:e} exceeds the stable bound {stable:e}")]
    Cfl { dt: f64, stable: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("stale artifact {artifact}: expected fingerprint {expected}, found {found}")]
    Fingerprint {
        artifact: String,
        expected: String,
        found: String,
    },
    #[error("missing prerequisites: {}", .0.join(", "))]
    Missing(Vec<String>),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("check failed: {0}")]
    CheckFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Geometry(_) => "geometry",
            Error::Field(_) => "field",
            Error::Tensor(_) => "tensor",
            Error::Config(_) => "config",
            Error::Expr { .. } => "expression",
            Error::CgNotConverged { .. } => "cg_not_converged",
            Error::EigenStagnation { .. } => "eigen_stagnation",
            Error::Cfl { .. } => "cfl",
            Error::Numerical(_) => "numerical",
            Error::Unsupported(_) => "unsupported",
            Error::Fingerprint { .. } => "fingerprint",
            Error::Missing(_) => "missing_prerequisites",
            Error::Io { .. } => "io",
            Error::CheckFailed(_) => "check_failed",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Geometry(_)
            | Error::Field(_)
            | Error::Tensor(_)
            | Error::Config(_)
            | Error::Expr { .. }
            | Error::Unsupported(_) => 3,
            Error::Fingerprint { .. } => 4,
            Error::CgNotConverged { .. } | Error::EigenStagnation { .. } | Error::Cfl { .. } | Error::Numerical(_) => 5,
            Error::Io { .. } => 6,
            Error::CheckFailed(_) => 7,
            Error::Missing(_) => 8,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "code": self.exit_code(),
            "message": self.to_string(),
        })
        .to_string()
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
