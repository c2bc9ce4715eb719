use thiserror::Error;

/// Errors raised by the converter model, the analyses and the scenario runner.
///
/// Port numbers carried in the variants are 1-based, matching the labels used
/// in reports and CSV headers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MabError {
    #[error("at least 2 ports are required, got {0}")]
    TooFewPorts(usize),

    #[error("port indices must be contiguous from 1: expected {expected}, found {found}")]
    PortIndex { expected: usize, found: usize },

    #[error("non-positive inductance, port {0}")]
    NonPositiveInductance(usize),

    #[error("non-positive turns ratio, port {0}")]
    NonPositiveTurnsRatio(usize),

    #[error("non-positive dc voltage, port {0}")]
    NonPositiveVoltage(usize),

    #[error("negative dc capacitance, port {0}")]
    NegativeCapacitance(usize),

    #[error("switching frequency must be positive and finite, got {0}")]
    InvalidFrequency(f64),

    #[error("invalid load on port {port}: {reason}")]
    InvalidLoad { port: usize, reason: String },

    #[error("expected {expected} values, got {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("port {port} out of range (converter has {ports} ports)")]
    PortOutOfRange { port: usize, ports: usize },

    #[error("invalid phase shift on port {port}: {reason}")]
    InvalidShift { port: usize, reason: String },

    #[error("lambda {lambda} outside (0, {max}]")]
    LambdaOutOfRange { lambda: f64, max: f64 },

    #[error("tolerance must be non-negative, got {0}")]
    NegativeTolerance(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("voltage collapse on port {port} at t = {time:.6e} s (V = {voltage:.4} V)")]
    VoltageCollapse { port: usize, time: f64, voltage: f64 },

    #[error("{mode} controllers did not converge within {time} s")]
    NotConverged { mode: String, time: f64 },

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl MabError {
    /// Failures that happen while running a valid scenario rather than while
    /// reading or checking inputs.
    pub fn is_runtime(&self) -> bool {
        matches!(
            self,
            MabError::VoltageCollapse { .. } | MabError::NotConverged { .. } | MabError::Io { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, MabError>;
