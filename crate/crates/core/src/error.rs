use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid fractional order: {0}")]
    FracOrder(String),
    #[error("quadrature did not converge in {what} (error estimate {estimate:e})")]
    Quadrature { what: &'static str, estimate: f64 },
    #[error("symbol calibration mismatch: quadrature {quadrature:.12e}, closed form {closed_form:.12e}")]
    Calibration { quadrature: f64, closed_form: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("missing tail descriptor on the {0} side")]
    MissingTail(&'static str),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("under-resolved: {0}")]
    Resolution(String),
    #[error("time step {dt:e} exceeds the stability bound {bound:e}")]
    Cfl { dt: f64, bound: f64 },
    #[error("maximum principle violated: min {min:e}, max {max:e}")]
    MaxPrinciple { min: f64, max: f64 },
    #[error("configuration invalid:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }
}
