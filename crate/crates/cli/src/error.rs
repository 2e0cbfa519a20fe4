use std::process::ExitCode;

use greenlight::forecast::ForecastError;
use greenlight::pipeline::PipelineError;
use greenlight::simulator::SimError;
use greenlight::tariff::TariffError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Solver(_) => 4,
            CliError::Io(_) => 1,
        })
    }

    /// Wraps an I/O failure with the path involved.
    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(m) => CliError::Config(m),
            PipelineError::Data(m) => CliError::Data(m),
            PipelineError::Solver { .. } => CliError::Solver(e.to_string()),
            PipelineError::Simulation(s) => s.into(),
            PipelineError::Tariff(t) => t.into(),
            PipelineError::Forecast(f) => f.into(),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) => CliError::Config(e.to_string()),
            SimError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TariffError> for CliError {
    fn from(e: TariffError) -> Self {
        match e {
            TariffError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ForecastError> for CliError {
    fn from(e: ForecastError) -> Self {
        match e {
            ForecastError::Config(_) => CliError::Config(e.to_string()),
            ForecastError::Diverged { .. } => CliError::Solver(e.to_string()),
            ForecastError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use greenlight::mpc::MpcError;

    fn code(e: CliError) -> ExitCode {
        e.exit_code()
    }

    #[test]
    fn codes_follow_the_error_class() {
        assert_eq!(code(CliError::Config("x".into())), ExitCode::from(2));
        assert_eq!(code(PipelineError::Data("gap".into()).into()), ExitCode::from(3));
        let solver = PipelineError::Solver {
            day: "2023-01-01".into(),
            source: MpcError::Solver("stalled".into()),
        };
        assert_eq!(code(solver.into()), ExitCode::from(4));
        let diverged = ForecastError::Diverged {
            epoch: 1,
            batch: 2,
            loss: f64::NAN,
        };
        assert_eq!(code(diverged.into()), ExitCode::from(4));
        assert_eq!(code(SimError::Config("area".into()).into()), ExitCode::from(2));
        assert_eq!(
            code(SimError::MissingWeather { required: 2, available: 1 }.into()),
            ExitCode::from(3)
        );
    }
}
