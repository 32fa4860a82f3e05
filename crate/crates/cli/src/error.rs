use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("solver error: {0}")]
    Solver(#[from] heteroclinic::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => crate::EXIT_CONFIG,
            Self::Io(_) | Self::Solver(_) => crate::EXIT_SOLVER,
        }
    }
}
