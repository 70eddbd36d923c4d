use std::process::ExitCode;

use convnet::equilibrium::EquilibriumError;
use convnet::export::ExportError;
use convnet::linearization::CertificateError;
use convnet::network::NetworkError;
use convnet::simulation::SimulationError;
use thiserror::Error;

/// Failure classes, each with a fixed process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Exit 1: unreadable or invalid input, bad options, I/O.
    #[error("{0}")]
    Input(String),
    /// Exit 2: the equilibrium solve or an integration failed.
    #[error("{0}")]
    Solver(String),
    /// Exit 3: the decentralised condition fails at some converter.
    #[error("{0}")]
    Condition(String),
    /// Exit 4: no certificate could be built.
    #[error("{0}")]
    Certificate(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Input(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Condition(_) => 3,
            CliError::Certificate(_) => 4,
        })
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<EquilibriumError> for CliError {
    fn from(e: EquilibriumError) -> Self {
        match e {
            EquilibriumError::InvalidInput(_) | EquilibriumError::Model(_) => CliError::Input(e.to_string()),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

impl From<CertificateError> for CliError {
    fn from(e: CertificateError) -> Self {
        match e {
            CertificateError::Refused { .. } => CliError::Condition(e.to_string()),
            CertificateError::Weight(_) => CliError::Input(e.to_string()),
            _ => CliError::Certificate(e.to_string()),
        }
    }
}

impl From<SimulationError> for CliError {
    fn from(e: SimulationError) -> Self {
        match e {
            SimulationError::InvalidOptions(_) | SimulationError::UnknownMethod { .. } | SimulationError::Model(_) => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Solver(e.to_string()),
        }
    }
}

impl From<ExportError> for CliError {
    fn from(e: ExportError) -> Self {
        CliError::Input(format!("cannot write output: {e}"))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(format!("I/O error: {e}"))
    }
}
