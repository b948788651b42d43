use thiserror::Error;

use crate::gf2poly::Gf2Poly;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("zero modulus")]
    ZeroModulus,

    #[error("constant polynomial {0} has no irreducibility status")]
    ConstantPolynomial(Gf2Poly),

    #[error("modulus {0} is reducible")]
    Reducible(Gf2Poly),

    #[error("degree out of range: {0}")]
    DegreeOutOfRange(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("computation budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("{source_name}:{line}: {msg}")]
    Parse {
        source_name: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
