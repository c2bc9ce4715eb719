//! JSON scenario files.
//!
//! Ports are listed in order; port numbers in `controllers`, `events` and
//! `sweep` are 1-based. All quantities are SI (V, H, F, Hz, W, ohm, s).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::{ControllerState, Modulation, ScenarioEvent, SimOptions};
use crate::error::{MabError, Result};
use crate::model::{ConverterConfig, LoadModel, PortSpec};

pub const DEFAULT_KP: f64 = 5e-4;
pub const DEFAULT_KI: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub converter: ConverterSection,
    #[serde(default)]
    pub control: ControlSection,
    #[serde(default)]
    pub events: Vec<EventEntry>,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConverterSection {
    pub switching_frequency: f64,
    pub ports: Vec<PortEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortEntry {
    pub dc_voltage: f64,
    pub turns_ratio: f64,
    pub leakage_inductance: f64,
    #[serde(default)]
    pub dc_capacitance: f64,
    pub load: LoadModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSection {
    pub mode: Modulation,
    pub duration: f64,
    pub control_period_cycles: usize,
    pub inner_rate_limit: Option<f64>,
    pub settling_band: f64,
    /// Start `dynamic` runs from the converged operating point.
    pub warm_start: bool,
    /// Regulated ports without an entry get the default gains.
    pub controllers: Vec<ControllerEntry>,
}

impl Default for ControlSection {
    fn default() -> Self {
        let sim = SimOptions::default();
        ControlSection {
            mode: sim.mode,
            duration: sim.duration,
            control_period_cycles: sim.control_period_cycles,
            inner_rate_limit: sim.inner_rate_limit,
            settling_band: sim.settling_band,
            warm_start: true,
            controllers: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerEntry {
    pub port: usize,
    pub kp: f64,
    pub ki: f64,
    /// Defaults to the port's `dc_voltage`.
    #[serde(default)]
    pub reference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventEntry {
    pub time: f64,
    pub port: usize,
    #[serde(default)]
    pub load: Option<f64>,
    #[serde(default)]
    pub reference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub eps_current: f64,
    /// Relative voltage tolerance for the converged operating point.
    pub converge_tolerance: f64,
    pub converge_time: f64,
    pub points_per_period: usize,
    pub periods: usize,
    pub sweep: Option<SweepSection>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            eps_current: 0.0,
            converge_tolerance: 1e-9,
            converge_time: 0.5,
            points_per_period: 200,
            periods: 2,
            sweep: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub port: usize,
    pub start: f64,
    pub stop: f64,
    /// Number of load points, evenly spaced from `start` to `stop`.
    pub points: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

/// A scenario file resolved into validated simulator inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ConverterConfig,
    pub controllers: Vec<ControllerState>,
    pub events: Vec<ScenarioEvent>,
    pub options: SimOptions,
    pub warm_start: bool,
    pub analysis: AnalysisSection,
    pub output_dir: Option<PathBuf>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path).map_err(|e| MabError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Scenario::parse(&text).map_err(|e| match e {
            MabError::Scenario(msg) => MabError::Scenario(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Scenario> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| MabError::Scenario(e.to_string()))?;
        file.resolve()
    }

    /// Replaces the load value on a 0-based port.
    pub fn set_load(&mut self, port: usize, value: f64) -> Result<()> {
        self.config.check_port(port)?;
        let load = self.config.ports[port].load.with_value(value);
        load.check(port + 1)?;
        self.config.ports[port].load = load;
        if load.is_source() {
            self.config.ports[port].dc_voltage = value;
        }
        Ok(())
    }

    pub fn with_mode(&self, mode: Modulation) -> Scenario {
        let mut s = self.clone();
        s.options.mode = mode;
        s
    }
}

fn port_index(port: usize, ports: usize, what: &str) -> Result<usize> {
    if port == 0 || port > ports {
        return Err(MabError::Scenario(format!(
            "{what}: port {port} out of range 1..={ports}"
        )));
    }
    Ok(port - 1)
}

fn positive(value: f64, what: &str) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(MabError::Scenario(format!("{what} must be positive, got {value}")))
    }
}

impl ScenarioFile {
    pub fn resolve(&self) -> Result<Scenario> {
        let ports = self
            .converter
            .ports
            .iter()
            .map(|p| PortSpec {
                index: 0,
                dc_voltage: p.dc_voltage,
                turns_ratio: p.turns_ratio,
                leakage_inductance: p.leakage_inductance,
                dc_capacitance: p.dc_capacitance,
                load: p.load,
            })
            .collect();
        let config = ConverterConfig::new(ports, self.converter.switching_frequency)?;
        let n = config.num_ports();

        let mut controllers = Vec::new();
        for i in 1..n {
            if config.ports[i].load.is_source() {
                continue;
            }
            controllers.push(ControllerState::new(
                i,
                DEFAULT_KP,
                DEFAULT_KI,
                config.ports[i].dc_voltage,
            ));
        }
        for entry in &self.control.controllers {
            let i = port_index(entry.port, n, "controller")?;
            let c = controllers
                .iter_mut()
                .find(|c| c.port == i)
                .ok_or_else(|| MabError::Scenario(format!("controller: port {} is not regulated", entry.port)))?;
            if !(entry.kp >= 0.0 && entry.ki >= 0.0) {
                return Err(MabError::Scenario(format!(
                    "controller: gains on port {} must be non-negative",
                    entry.port
                )));
            }
            c.kp = entry.kp;
            c.ki = entry.ki;
            if let Some(r) = entry.reference {
                positive(r, "controller reference")?;
                c.reference = r;
            }
        }

        let mut events = Vec::new();
        for e in &self.events {
            let port = port_index(e.port, n, "event")?;
            if !(e.time >= 0.0 && e.time.is_finite()) {
                return Err(MabError::Scenario(format!(
                    "event time must be non-negative, got {}",
                    e.time
                )));
            }
            if e.load.is_none() && e.reference.is_none() {
                return Err(MabError::Scenario(format!("event at t = {} changes nothing", e.time)));
            }
            if let Some(v) = e.load {
                config.ports[port].load.with_value(v).check(e.port)?;
            }
            if let Some(r) = e.reference {
                positive(r, "event reference")?;
            }
            events.push(ScenarioEvent {
                time: e.time,
                port,
                load: e.load,
                reference: e.reference,
            });
        }

        let c = &self.control;
        positive(c.duration, "control.duration")?;
        positive(c.settling_band, "control.settling_band")?;
        if c.control_period_cycles == 0 {
            return Err(MabError::Scenario(
                "control.control_period_cycles must be at least 1".into(),
            ));
        }
        if let Some(r) = c.inner_rate_limit {
            positive(r, "control.inner_rate_limit")?;
        }
        let a = &self.analysis;
        if !(a.eps_current >= 0.0) {
            return Err(MabError::NegativeTolerance(a.eps_current));
        }
        positive(a.converge_tolerance, "analysis.converge_tolerance")?;
        positive(a.converge_time, "analysis.converge_time")?;
        if a.points_per_period < 2 {
            return Err(MabError::Scenario(
                "analysis.points_per_period must be at least 2".into(),
            ));
        }
        if let Some(s) = &a.sweep {
            port_index(s.port, n, "sweep")?;
            positive(s.start, "sweep.start")?;
            positive(s.stop, "sweep.stop")?;
            if s.points == 0 {
                return Err(MabError::Scenario("sweep.points must be at least 1".into()));
            }
        }

        Ok(Scenario {
            config,
            controllers,
            events,
            options: SimOptions {
                mode: c.mode,
                duration: c.duration,
                control_period_cycles: c.control_period_cycles,
                inner_rate_limit: c.inner_rate_limit,
                eps_current: a.eps_current,
                settling_band: c.settling_band,
            },
            warm_start: c.warm_start,
            analysis: a.clone(),
            output_dir: self.output.dir.clone(),
        })
    }
}
