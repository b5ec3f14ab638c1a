use std::fmt;
use std::path::Path;

use zonalcut_core::bubbleclust::ClusterError;
use zonalcut_core::{CongestionError, GridError, MarketError, PtdfError, ZonalError};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// A failure tagged with the pipeline stage it came from and an exit code.
#[derive(Debug)]
pub struct CliError {
    pub stage: &'static str,
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn data(stage: &'static str, message: impl Into<String>) -> Self {
        Self { stage, code: EXIT_DATA, message: message.into() }
    }

    pub fn numerical(stage: &'static str, message: impl Into<String>) -> Self {
        Self { stage, code: EXIT_NUMERICAL, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self { stage: "usage", code: EXIT_USAGE, message: message.into() }
    }

    pub fn read(path: &Path, err: std::io::Error) -> Self {
        Self::data("read", format!("{}: {err}", path.display()))
    }

    pub fn write(path: &Path, err: impl fmt::Display) -> Self {
        Self::data("write", format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Keep the diagnostic on one line.
        let message = self.message.replace('\n', " ");
        write!(f, "error [{}]: {}", self.stage, message)
    }
}

pub fn grid_error(path: &Path, err: GridError) -> CliError {
    CliError::data("parse", format!("{}: {err}", path.display()))
}

pub fn ptdf_error(err: PtdfError) -> CliError {
    match err {
        PtdfError::Singular => CliError::numerical("ptdf", err.to_string()),
        other => CliError::data("ptdf", other.to_string()),
    }
}

pub fn congestion_error(err: CongestionError) -> CliError {
    match err {
        CongestionError::Infeasible { .. }
        | CongestionError::Unbounded { .. }
        | CongestionError::Solver { .. } => CliError::numerical("congestion", err.to_string()),
        other => CliError::data("congestion", other.to_string()),
    }
}

pub fn zonal_error(stage: &'static str, err: ZonalError) -> CliError {
    match err {
        ZonalError::SingularGsk { .. } => CliError::numerical(stage, err.to_string()),
        other => CliError::data(stage, other.to_string()),
    }
}

pub fn cluster_error(err: ClusterError) -> CliError {
    match err {
        ClusterError::Zonal(e) => zonal_error("cluster", e),
        other => CliError::data("cluster", other.to_string()),
    }
}

pub fn market_error(err: MarketError) -> CliError {
    match err {
        MarketError::Infeasible { .. } | MarketError::Unbounded { .. } | MarketError::Solver { .. } => {
            CliError::numerical("compare", err.to_string())
        }
        MarketError::Zonal(e) => zonal_error("compare", e),
        MarketError::Congestion(e) => congestion_error(e),
        other => CliError::data("compare", other.to_string()),
    }
}
