use thiserror::Error;

/// Why a command stopped; each variant maps to one exit code.
#[derive(Debug, Error)]
pub enum Failure {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Numeric(String),

    #[error("invariant failed: {0}")]
    Invariant(String),
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Failure::Usage(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Numeric(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Invariant(_) => 3,
        }
    }
}

impl From<addsv::Error> for Failure {
    fn from(e: addsv::Error) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Numeric(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numeric(format!("i/o: {e}"))
    }
}
