use thiserror::Error;

/// Errors raised by the phase computations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter point or argument outside the domain of a model.
    #[error("domain error: {0}")]
    Domain(String),

    /// A surface, circuit or profile failed a structural check.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("grid too narrow: edge amplitude {amplitude:.3e} exceeds {limit:.0e}")]
    GridTooNarrow { amplitude: f64, limit: f64 },

    #[error("aliasing: {0}")]
    Aliasing(String),

    #[error("gap collapse at level {level}: gap {gap:.3e} below threshold {threshold:.3e}")]
    GapCollapse { level: usize, gap: f64, threshold: f64 },

    #[error("overlap magnitude {0:.3e} below 0.1; refine the plaquette step")]
    SmallOverlap(f64),

    #[error("ill-conditioned overlap at loop step {step} (smallest singular value {sigma_min:.3e}); refine the circuit sampling")]
    IllConditioned { step: usize, sigma_min: f64 },

    #[error("quadrature support insufficient: tail mass {0:.3e}")]
    QuadratureSupport(f64),

    #[error("adiabaticity failure: {0}")]
    Adiabaticity(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    /// True for errors caused by parameter points outside a model's domain.
    pub fn is_domain(&self) -> bool {
        matches!(self, Error::Domain(_) | Error::Validation(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
