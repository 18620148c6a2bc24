use canndyn_core::Error;
use serde_json::json;

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    /// Model loaded but failed its assumption checks.
    Validation(String),
    Usage(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Usage(_) => 4,
            CliError::Core(e) => match e {
                Error::Config { .. }
                | Error::GammaBound { .. }
                | Error::NotSeparable { .. }
                | Error::UnknownSelector(_)
                | Error::UnsupportedDerivative { .. }
                | Error::MissingEnvironment(_) => 2,
                Error::NoEquilibrium { .. }
                | Error::NonConvergence { .. }
                | Error::NonFinite { .. }
                | Error::NonFiniteOutput { .. }
                | Error::Cfl { .. } => 3,
                _ => 4,
            },
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Usage(_) => "usage",
            CliError::Core(e) => match e {
                Error::Config { .. } => "config",
                Error::InvalidParameter(_) => "invalid_parameter",
                Error::UnknownSelector(_) => "unknown_selector",
                Error::UnsupportedDerivative { .. } => "unsupported_derivative",
                Error::MissingEnvironment(_) => "missing_environment",
                Error::InvalidGrid(_) => "invalid_grid",
                Error::GammaBound { .. } => "gamma_bound",
                Error::NoEquilibrium { .. } => "no_equilibrium",
                Error::NonConvergence { .. } => "non_convergence",
                Error::NotSeparable { .. } => "not_separable",
                Error::LambdaOutOfDomain { .. } => "lambda_out_of_domain",
                Error::Pole { .. } => "pole",
                Error::Precondition(_) => "precondition",
                Error::Cfl { .. } => "cfl",
                Error::NonFinite { .. } => "non_finite",
                Error::NotApplicable(_) => "not_applicable",
                Error::NonFiniteOutput { .. } => "non_finite_output",
                Error::Io(_) => "io",
                Error::Json(_) => "json",
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Core(e) => e.to_string(),
            CliError::Validation(m) | CliError::Usage(m) => m.clone(),
        }
    }

    /// Single-line JSON for stderr.
    pub fn to_json_line(&self) -> String {
        json!({
            "error": self.kind(),
            "message": self.message(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}
