use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unphysical covariance: smallest symplectic eigenvalue is {lambda} (< 1/2)")]
    UnphysicalCovariance { lambda: f64 },
    #[error("invariant inconsistency: discriminant {discriminant:e} is negative")]
    InvariantInconsistency { discriminant: f64 },
    #[error("covariance block is not symmetric")]
    AsymmetricBlock,
    #[error("{what} must be {bound}, got {value}")]
    Domain {
        what: &'static str,
        bound: &'static str,
        value: f64,
    },
    #[error("on-resonance pole at s = {re} + {im}i")]
    Pole { re: f64, im: f64 },
    #[error("harmonic {k} outside the solved window |k| <= {k_max}")]
    HarmonicOutOfWindow { k: i32, k_max: i32 },
    #[error("operation requires a {expected} band pair")]
    WrongRelation { expected: &'static str },
    #[error("linearized purity invalid; reduce t (2 sqrt(det) = {value})")]
    PurityInvalid { value: f64 },
    #[error("validity horizon exceeded: {reason}")]
    ValidityHorizon { reason: String },
    #[error("regime not applicable: {0}")]
    Regime(String),
    #[error("t = {t} does not exceed the entanglement latency {t_ent}")]
    BeforeLatency { t: f64, t_ent: f64 },
    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("oracle: {0}")]
    Oracle(String),
    #[error("transient not decayed or regime invalid: fit R^2 = {r2:.4} for {quantity}")]
    PoorFit { quantity: &'static str, r2: f64 },
}

impl Error {
    pub(crate) fn domain(what: &'static str, bound: &'static str, value: f64) -> Self {
        Error::Domain { what, bound, value }
    }
}
