use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("occupation diverges: bosonic energy {eps} at or below chemical potential {mu}")]
    Domain { eps: f64, mu: f64 },
    #[error("quadrature did not converge (estimated error {estimate:e}, tolerance {tolerance:e})")]
    Quadrature { estimate: f64, tolerance: f64 },
    #[error("matrix is singular or ill-conditioned ({0})")]
    Singular(String),
    #[error("root bracketing failed on [{lo}, {hi}]")]
    Bracketing { lo: f64, hi: f64 },
    #[error("contour of radius {radius:e} around {center} touches the spectral support")]
    Contour { center: f64, radius: f64 },
    #[error("integration unstable at step {step}: norm {norm}")]
    Unstable { step: usize, norm: f64 },
    #[error("energy grid spacing {spacing:e} too coarse for t_max {t_max} (needs < {limit:e})")]
    Nyquist { spacing: f64, t_max: f64, limit: f64 },
    #[error("matrix dimension {n} exceeds the limit {limit}")]
    TooLarge { n: usize, limit: usize },
    #[error("truncated basis discards probability {mass:e}")]
    Truncation { mass: f64 },
    #[error("operator string leaves the truncated basis")]
    Overflow,
    #[error("trace deviates from one by {0:e}")]
    Trace(f64),
    #[error("localized modes present; the steady state depends on the initial state")]
    LocalizedModes,
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
