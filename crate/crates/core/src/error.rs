use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("malformed protocol at `{field}`: {reason}")]
    MalformedProtocol { field: String, reason: String },

    #[error("quadrature did not converge: estimate {estimate:e}, error {error:e} > tolerance {tolerance:e}")]
    Quadrature { estimate: f64, error: f64, tolerance: f64 },

    #[error("root not bracketed on [{lo}, {hi}]: f(lo) = {f_lo:e}, f(hi) = {f_hi:e}")]
    RootNotBracketed { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("could not bracket the optimal K at gamma_tau = {gamma_tau}: best log10(K) = {best_log10_k} lies on the scan edge ({scan_len} scan points)")]
    KappaBracket {
        gamma_tau: f64,
        best_log10_k: f64,
        scan_len: usize,
    },

    #[error("optimizer failed: {0}")]
    Optimizer(String),

    #[error("closed-form optimal protocols need Gamma_in/Gamma_out = 2, got {0}")]
    UnsupportedRatio(f64),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn malformed(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::MalformedProtocol {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
