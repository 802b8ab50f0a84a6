use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Invalid user-facing parameters (dimensions, constants, names).
    #[error("configuration error: {0}")]
    Config(String),

    /// A prox computation left the domain of the prox-function, e.g. a zero
    /// coordinate under the entropy geometry.
    #[error("prox domain error: {0}")]
    ProxDomain(String),

    /// An oracle probe landed outside the neighborhood of the feasible set on
    /// which the objective is guaranteed to be Lipschitz.
    #[error(
        "probe point {point:?} lies {distance:e} from the feasible set, beyond the allowed margin {margin:e}{}",
        radii_note(*tau, *mu)
    )]
    ProbeOutOfDomain {
        point: Vec<f64>,
        distance: f64,
        margin: f64,
        tau: Option<f64>,
        mu: Option<f64>,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// Replicate traces that should differ only in their seeds do not.
    #[error("mismatched run configurations: {0}")]
    MismatchedRuns(String),
}

fn radii_note(tau: Option<f64>, mu: Option<f64>) -> String {
    match (tau, mu) {
        (Some(t), Some(m)) => format!(" (smoothing radii tau = {t:e}, mu = {m:e})"),
        _ => String::new(),
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
