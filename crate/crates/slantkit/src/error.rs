use thiserror::Error;

/// Every failure the library can report. Mathematical failures carry enough
/// context to serve as a witness in reports.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("vectors live at different base points")]
    BasePoint,
    #[error("rank deficiency: {0}")]
    Rank(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("matrix is not symmetric (residual {residual:e})")]
    Symmetry { residual: f64 },
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("evaluation error in `{expr}`: {message}")]
    Eval { expr: String, message: String },
    #[error("operation requires a contact-like structure")]
    Kind,
    #[error("model error: {0}")]
    Model(String),
    #[error("component `{component}` splits into several eigenvalue clusters at point #{point}: {eigenvalues:?}")]
    Component {
        component: String,
        point: usize,
        eigenvalues: Vec<f64>,
    },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("parameter out of range: {0}")]
    Param(String),
    #[error("invalid spec: {0}")]
    Spec(String),
}

impl Error {
    /// Input problems map to exit code 2, mathematical ones to 1.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Spec(_) | Error::Param(_) | Error::Dimension(_) | Error::Kind
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
