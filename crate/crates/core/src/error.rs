use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("t = {t} lies outside the open interval ({lower}, {upper})")]
    Domain { t: f64, lower: f64, upper: f64 },

    #[error("empty sampling window [{lower}, {upper}]")]
    EmptyWindow { lower: f64, upper: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("resolution {given} along axis {axis} is below the minimum {min}")]
    Resolution { axis: usize, given: usize, min: usize },

    #[error("metric is not positive definite at node {node} (m11 = {m11}, det = {det})")]
    NotPositiveDefinite { node: usize, m11: f64, det: f64 },

    #[error("graph is not spacelike: slack f(u)^2 - |Du|^2 = {slack} at node {node}")]
    NotSpacelike { node: usize, slack: f64 },

    #[error("field has {got} values but the mesh has {expected} nodes")]
    FieldLength { expected: usize, got: usize },

    #[error("non-finite value at node {node}")]
    NonFinite { node: usize },

    #[error("{given} refinement levels requested, at least {min} required")]
    Levels { given: usize, min: usize },

    #[error("recipe produces a constant field; a non-constant field is required")]
    ConstantRecipe,

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error(
        "spacelike safeguard breached at iteration {iteration}: max speed {max_speed} after repeated step rejection"
    )]
    SafeguardBreach { iteration: usize, max_speed: f64 },

    #[error("solver did not converge in {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
}
