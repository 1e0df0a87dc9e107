//! Error type shared across the crate.

/// Errors produced by construction, evaluation, and search routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A constructor argument violated an invariant.
    #[error("invalid {what}: {why}")]
    InvalidInput {
        /// Name of the offending field or argument.
        what: &'static str,
        /// The violated invariant.
        why: String,
    },

    /// An operation was evaluated outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The closed loop p + theta >= 0 makes the infinite-horizon cost diverge.
    #[error("closed loop unstable: p + theta = {pole} >= 0")]
    Unstable {
        /// The closed-loop pole p + theta.
        pole: f64,
    },

    /// A fixed-order and a refined quadrature rule disagreed beyond tolerance.
    #[error("quadrature did not converge: |{coarse} - {fine}| exceeds tolerance")]
    QuadratureDivergence { coarse: f64, fine: f64 },

    /// The quadrature rule family does not match the prior family.
    #[error("quadrature rule {rule} does not match prior kind {prior}")]
    RuleMismatch {
        rule: &'static str,
        prior: &'static str,
    },

    /// An operation that needs a finite horizon received T = infinity.
    #[error("operation requires a finite horizon T")]
    NonFiniteHorizon,

    /// The scalar search converged onto a bracket endpoint, so the bracket
    /// does not isolate an interior minimum.
    #[error("minimizer at bracket endpoint {endpoint}; widen the bracket")]
    BracketEndpoint { endpoint: f64 },

    /// The post-hoc audit found the objective is not decreasing-then-increasing
    /// over the bracket, so the returned point may be a local minimum only.
    #[error("objective not unimodal over the search bracket near theta = {near}")]
    NotUnimodal { near: f64 },

    /// The iteration cap was reached before the convergence criterion.
    #[error("search exceeded {max_iters} iterations")]
    MaxIterations { max_iters: u32 },

    /// The tabulated gain map theta(p) is not strictly monotone, so the
    /// single-branch change of variables is invalid.
    #[error("gain map theta(p) is not strictly monotone near p = {near}")]
    NotMonotone { near: f64 },

    /// The density maximum sits on the curve boundary.
    #[error("density maximum at curve boundary; no interior mode to fit")]
    BoundaryMode,

    /// The log-density is not locally concave at the mode.
    #[error("log-density curvature {curvature} is not negative at the mode")]
    NonNegativeCurvature { curvature: f64 },

    /// Every simulated path tripped the overflow guard.
    #[error("all {n_paths} simulated paths overflowed")]
    AllPathsOverflowed { n_paths: u64 },
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
