use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown selector: {0}")]
    UnknownSelector(String),

    #[error("derivative `{derivative}` is not supported for `{ingredient}`")]
    UnsupportedDerivative {
        ingredient: String,
        derivative: String,
    },

    #[error("`{0}` depends on the environment but no E value was supplied")]
    MissingEnvironment(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("growth rate {value} below gamma0 = {gamma0} at s = {s}")]
    GammaBound { s: f64, value: f64, gamma0: f64 },

    #[error("no positive equilibrium found in bracket [{lo}, {hi}] (F(lo) = {f_lo}, F(hi) = {f_hi})")]
    NoEquilibrium {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("operation requires a strictly separable attack kernel, got {terms} terms")]
    NotSeparable { terms: usize },

    #[error("lambda = {lambda} outside the admissible half-line lambda > -mu0 = {neg_mu0}")]
    LambdaOutOfDomain { lambda: f64, neg_mu0: f64 },

    #[error("lambda = {lambda} is a pole of the resolvent (L(lambda) = {l_value})")]
    Pole { lambda: f64, l_value: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("CFL violated: gamma*dt/h = {courant} > 1 at s = {s}")]
    Cfl { courant: f64, s: f64 },

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("non-finite value in column `{column}`, row {row}")]
    NonFiniteOutput { column: String, row: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
