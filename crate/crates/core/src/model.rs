//! Converter description and the per-port quantities derived from it.
//!
//! Port 1 (index 0 in every Rust slice) is the reference port. All other
//! ports are described relative to it through the voltage conversion ratio
//! `M_i = n_1 V_i / (n_i V_1)` and the inductor coefficient
//! `l_i = (n_i^2 / L_i) / sum_k (n_k^2 / L_k)`.

use serde::{Deserialize, Serialize};

use crate::error::{MabError, Result};

/// What hangs off the DC side of a port.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case", deny_unknown_fields)]
pub enum LoadModel {
    /// Stiff source holding the bus at the given voltage (volts).
    VoltageSource(f64),
    /// Resistive load (ohms).
    Resistor(f64),
    /// Electronic load drawing a fixed power (watts).
    ConstantPower(f64),
}

impl LoadModel {
    /// Power drawn from the DC bus at voltage `v`. Zero for a source.
    pub fn power_at(&self, v: f64) -> f64 {
        match *self {
            LoadModel::VoltageSource(_) => 0.0,
            LoadModel::Resistor(r) => v * v / r,
            LoadModel::ConstantPower(p) => p,
        }
    }

    pub fn is_source(&self) -> bool {
        matches!(self, LoadModel::VoltageSource(_))
    }

    pub fn value(&self) -> f64 {
        match *self {
            LoadModel::VoltageSource(v) | LoadModel::Resistor(v) | LoadModel::ConstantPower(v) => v,
        }
    }

    /// Same kind of load with a new value.
    pub fn with_value(&self, value: f64) -> LoadModel {
        match self {
            LoadModel::VoltageSource(_) => LoadModel::VoltageSource(value),
            LoadModel::Resistor(_) => LoadModel::Resistor(value),
            LoadModel::ConstantPower(_) => LoadModel::ConstantPower(value),
        }
    }

    pub(crate) fn check(&self, port: usize) -> Result<()> {
        let bad = |reason: &str| {
            Err(MabError::InvalidLoad {
                port,
                reason: reason.to_string(),
            })
        };
        match *self {
            LoadModel::VoltageSource(v) if !(v > 0.0 && v.is_finite()) => bad("source voltage must be positive"),
            LoadModel::Resistor(r) if !(r > 0.0 && r.is_finite()) => bad("resistance must be positive"),
            LoadModel::ConstantPower(p) if !(p >= 0.0 && p.is_finite()) => bad("constant power must be non-negative"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortSpec {
    /// 1-based port number.
    pub index: usize,
    /// Reference (or regulated setpoint) DC voltage, volts.
    pub dc_voltage: f64,
    /// Primary-side value `n_i` of the `n_i : 1` transformer.
    pub turns_ratio: f64,
    /// Total leakage inductance seen by the bridge, henries.
    pub leakage_inductance: f64,
    /// DC-side capacitance, farads. Only the closed-loop simulator reads it.
    pub dc_capacitance: f64,
    pub load: LoadModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConverterConfig {
    pub ports: Vec<PortSpec>,
    pub switching_frequency: f64,
    /// `T = 1 / (2 f_s)`; one switching period is `2T`.
    pub half_period: f64,
}

impl ConverterConfig {
    /// Builds a config and validates it. Port indices are taken from the
    /// position in `ports`, overriding whatever the caller put there.
    pub fn new(mut ports: Vec<PortSpec>, switching_frequency: f64) -> Result<Self> {
        for (i, p) in ports.iter_mut().enumerate() {
            p.index = i + 1;
        }
        let config = ConverterConfig {
            ports,
            switching_frequency,
            half_period: 0.5 / switching_frequency,
        };
        validate_config(config)
    }

    pub fn num_ports(&self) -> usize {
        self.ports.len()
    }

    pub fn setpoints(&self) -> Vec<f64> {
        self.ports.iter().map(|p| p.dc_voltage).collect()
    }

    pub fn turns_ratios(&self) -> Vec<f64> {
        self.ports.iter().map(|p| p.turns_ratio).collect()
    }

    pub fn period(&self) -> f64 {
        2.0 * self.half_period
    }

    pub fn check_port(&self, port: usize) -> Result<()> {
        if port < self.ports.len() {
            Ok(())
        } else {
            Err(MabError::PortOutOfRange {
                port: port + 1,
                ports: self.ports.len(),
            })
        }
    }
}

/// Per-port quantities shared by every analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedParams {
    /// Voltage conversion ratios `M_i`.
    pub ratios: Vec<f64>,
    /// Inductor coefficients `l_i`, summing to one.
    pub coefficients: Vec<f64>,
    /// Current scale factors `K_i = (n_i/n_1) V_1 T / (2 L_i)`, amperes.
    pub current_scales: Vec<f64>,
}

impl DerivedParams {
    /// `sum_k l_k M_k`, the ratio-weighted link level that appears in both
    /// the current expression and the full-ZVS term.
    pub fn weighted_ratio(&self) -> f64 {
        self.coefficients.iter().zip(&self.ratios).map(|(l, m)| l * m).sum()
    }

    pub fn num_ports(&self) -> usize {
        self.ratios.len()
    }
}

/// Checks every port and converter invariant, reporting the first violation.
pub fn validate_config(config: ConverterConfig) -> Result<ConverterConfig> {
    let f = config.switching_frequency;
    if !(f > 0.0 && f.is_finite()) {
        return Err(MabError::InvalidFrequency(f));
    }
    if config.ports.len() < 2 {
        return Err(MabError::TooFewPorts(config.ports.len()));
    }
    if ((config.half_period * f) - 0.5).abs() > 1e-12 {
        return Err(MabError::InvalidArgument(format!(
            "half period {} s inconsistent with switching frequency {} Hz",
            config.half_period, f
        )));
    }
    for (i, p) in config.ports.iter().enumerate() {
        let n = i + 1;
        if p.index != n {
            return Err(MabError::PortIndex {
                expected: n,
                found: p.index,
            });
        }
        if !(p.dc_voltage > 0.0 && p.dc_voltage.is_finite()) {
            return Err(MabError::NonPositiveVoltage(n));
        }
        if !(p.turns_ratio > 0.0 && p.turns_ratio.is_finite()) {
            return Err(MabError::NonPositiveTurnsRatio(n));
        }
        if !(p.leakage_inductance > 0.0 && p.leakage_inductance.is_finite()) {
            return Err(MabError::NonPositiveInductance(n));
        }
        if !(p.dc_capacitance >= 0.0 && p.dc_capacitance.is_finite()) {
            return Err(MabError::NegativeCapacitance(n));
        }
        p.load.check(n)?;
    }
    Ok(config)
}

fn check_voltages(expected: usize, live_voltages: &[f64]) -> Result<()> {
    if live_voltages.len() != expected {
        return Err(MabError::LengthMismatch {
            expected,
            found: live_voltages.len(),
        });
    }
    match live_voltages.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        Some(i) => Err(MabError::NonPositiveVoltage(i + 1)),
        None => Ok(()),
    }
}

/// `M_i = n_1 V_i / (n_i V_1)` from raw voltages and turns ratios.
pub fn ratios_from(live_voltages: &[f64], turns_ratios: &[f64]) -> Result<Vec<f64>> {
    check_voltages(turns_ratios.len(), live_voltages)?;
    if let Some(i) = turns_ratios.iter().position(|n| !(*n > 0.0 && n.is_finite())) {
        return Err(MabError::NonPositiveTurnsRatio(i + 1));
    }
    let (n1, v1) = (turns_ratios[0], live_voltages[0]);
    Ok(live_voltages
        .iter()
        .zip(turns_ratios)
        .enumerate()
        .map(|(i, (v, n))| if i == 0 { 1.0 } else { (n1 * v) / (n * v1) })
        .collect())
}

pub fn conversion_ratios(config: &ConverterConfig, live_voltages: &[f64]) -> Result<Vec<f64>> {
    ratios_from(live_voltages, &config.turns_ratios())
}

pub fn inductor_coefficients(config: &ConverterConfig) -> Vec<f64> {
    let admittances: Vec<f64> = config
        .ports
        .iter()
        .map(|p| p.turns_ratio * p.turns_ratio / p.leakage_inductance)
        .collect();
    let total: f64 = admittances.iter().sum();
    admittances.into_iter().map(|y| y / total).collect()
}

pub fn current_scales(config: &ConverterConfig, live_voltages: &[f64]) -> Result<Vec<f64>> {
    check_voltages(config.num_ports(), live_voltages)?;
    let n1 = config.ports[0].turns_ratio;
    let base = live_voltages[0] * config.half_period / 2.0;
    Ok(config
        .ports
        .iter()
        .map(|p| (p.turns_ratio / n1) * base / p.leakage_inductance)
        .collect())
}

pub fn derive_params(config: &ConverterConfig, live_voltages: &[f64]) -> Result<DerivedParams> {
    Ok(DerivedParams {
        ratios: conversion_ratios(config, live_voltages)?,
        coefficients: inductor_coefficients(config),
        current_scales: current_scales(config, live_voltages)?,
    })
}
