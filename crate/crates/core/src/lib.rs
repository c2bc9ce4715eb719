//! Steady-state modelling, full-ZVS inner phase-shift optimization and
//! closed-loop simulation of N-port multi-active-bridge DC-DC converters.
//!
//! Rust APIs index ports from 0 (port 1 is `0`); reports, CSV headers and
//! error messages use 1-based port numbers.

// NaN inputs must fail validation, hence `!(x > 0.0)` style guards.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod control;
pub mod error;
pub mod model;
pub mod oracle;
pub mod scenario;
pub mod verify;
pub mod waveform;
pub mod zvs;

pub use control::{ControllerState, Modulation, ScenarioEvent, ScenarioResult, SimOptions};
pub use error::{MabError, Result};
pub use model::{ConverterConfig, DerivedParams, LoadModel, PortSpec};
pub use scenario::{Scenario, ScenarioFile};
pub use waveform::{OperatingPoint, PhaseShiftSet, SteadyStateReport, WaveformSeries, ZvsStatus};
pub use zvs::ZvsSolution;
