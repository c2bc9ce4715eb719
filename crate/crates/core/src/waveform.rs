//! Closed-form steady-state analysis of the converter at a fixed set of phase
//! shifts.
//!
//! Time is handled in units of the half period, `u = t / T`. Every bridge
//! voltage is the sum of two half-magnitude square waves with rising edges at
//! `u = d_i` and `u = d_i + D_i`, so it sits at zero on `(d_i, d_i + D_i)`, at
//! `+V_i` on `(d_i + D_i, d_i + 1)` and mirrors with opposite sign over the
//! next half period. Each square wave drives a triangular current component,
//! which gives the current expression
//!
//! ```text
//! i_i(u) = K_i [ A - M_i + M_i g_i(u) - sum_k l_k M_k g_k(u) ]
//! g_k(u) = tri(u - d_k) + tri(u - d_k - D_k),     A = sum_k l_k M_k
//! ```
//!
//! where `tri` is the period-2 triangle equal to `|x|` on `[-1, 1]`.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{MabError, Result};
use crate::model::{derive_params, ConverterConfig, DerivedParams};
use crate::zvs::full_zvs_term;

/// Currents are only resolved to this fraction of `K_i`; anything smaller is
/// treated as zero when classifying switching edges.
pub const CURRENT_RESOLUTION: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseShiftSet {
    /// Outer phase-shift ratios `d_i`, port 1 fixed at zero.
    pub outer: Vec<f64>,
    /// Inner phase-shift ratios `D_i`.
    pub inner: Vec<f64>,
}

impl PhaseShiftSet {
    pub fn new(outer: Vec<f64>, inner: Vec<f64>) -> Result<Self> {
        let set = PhaseShiftSet { outer, inner };
        set.validate()?;
        Ok(set)
    }

    /// All shifts zero.
    pub fn zero(ports: usize) -> Self {
        PhaseShiftSet {
            outer: vec![0.0; ports],
            inner: vec![0.0; ports],
        }
    }

    pub fn len(&self) -> usize {
        self.outer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outer.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.outer.len() != self.inner.len() {
            return Err(MabError::LengthMismatch {
                expected: self.outer.len(),
                found: self.inner.len(),
            });
        }
        let bad = |port: usize, reason: String| Err(MabError::InvalidShift { port, reason });
        if let Some(d1) = self.outer.first() {
            if *d1 != 0.0 {
                return bad(1, format!("reference outer shift must be 0, got {d1}"));
            }
        }
        for (i, (d, big_d)) in self.outer.iter().zip(&self.inner).enumerate() {
            if !(-0.5..=0.5).contains(d) {
                return bad(i + 1, format!("outer shift {d} outside [-0.5, 0.5]"));
            }
            if !(0.0..1.0).contains(big_d) {
                return bad(i + 1, format!("inner shift {big_d} outside [0, 1)"));
            }
        }
        Ok(())
    }
}

/// Period-2 even triangle: `|x|` on `[-1, 1]`, extended periodically.
pub fn tri(x: f64) -> f64 {
    let r = x.rem_euclid(2.0);
    if r <= 1.0 {
        r
    } else {
        2.0 - r
    }
}

/// Period-2 square wave: `+1` on `[0, 1)`, `-1` on `[1, 2)`.
fn square(x: f64) -> f64 {
    if x.rem_euclid(2.0) < 1.0 {
        1.0
    } else {
        -1.0
    }
}

// Shared branch logic of F1/F2: the excess of `tri(x) + tri(x - D_k)` over
// `D_k`, halved. `x` is the offset of the sampling instant from `d_k`.
fn edge_offset_term(x: f64, inner_k: f64) -> f64 {
    // reduce to (-1, 1]
    let mut x = x.rem_euclid(2.0);
    if x > 1.0 {
        x -= 2.0;
    }
    if x <= 0.0 {
        (-x).min(1.0 - inner_k)
    } else if x >= inner_k {
        x - inner_k
    } else {
        0.0
    }
}

/// Load-dependent term of port `i`'s current at its first edge `t_i1 = d_i T`
/// contributed by port `k`. Always non-negative.
pub fn f1(shifts: &PhaseShiftSet, i: usize, k: usize) -> f64 {
    edge_offset_term(shifts.outer[i] - shifts.outer[k], shifts.inner[k])
}

/// As [`f1`], at the second edge `t_i2 = (d_i + D_i) T`.
pub fn f2(shifts: &PhaseShiftSet, i: usize, k: usize) -> f64 {
    edge_offset_term(shifts.outer[i] + shifts.inner[i] - shifts.outer[k], shifts.inner[k])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ZvsStatus {
    Zvs,
    Boundary,
    Hard,
}

impl fmt::Display for ZvsStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            ZvsStatus::Zvs => "ZVS",
            ZvsStatus::Boundary => "BOUNDARY",
            ZvsStatus::Hard => "HARD",
        })
    }
}

/// ZVS when both edge currents are below `-eps`, HARD when either exceeds
/// `+eps`, BOUNDARY otherwise.
pub fn classify_zvs(currents: (f64, f64), eps: f64) -> Result<ZvsStatus> {
    if !(eps >= 0.0) {
        return Err(MabError::NegativeTolerance(eps));
    }
    let (a, b) = currents;
    Ok(if a < -eps && b < -eps {
        ZvsStatus::Zvs
    } else if a > eps || b > eps {
        ZvsStatus::Hard
    } else {
        ZvsStatus::Boundary
    })
}

/// Sorted, deduplicated switching edges of all ports over one period, in
/// units of `T`, bracketed by 0 and 2.
pub fn edge_grid(shifts: &PhaseShiftSet) -> Vec<f64> {
    let mut u: Vec<f64> = vec![0.0, 2.0];
    for (d, big_d) in shifts.outer.iter().zip(&shifts.inner) {
        for base in [*d, d + big_d] {
            for half in [0.0, 1.0] {
                let x = (base + half).rem_euclid(2.0);
                if x < 2.0 {
                    u.push(x);
                }
            }
        }
    }
    u.sort_by(f64::total_cmp);
    u.dedup();
    u
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortReport {
    /// 1-based port number.
    pub port: usize,
    pub current_at_t1: f64,
    pub current_at_t2: f64,
    pub zvs_status: ZvsStatus,
    pub rms_current: f64,
    /// Average power delivered from the DC side into the link, watts.
    pub dc_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadyStateReport {
    pub ports: Vec<PortReport>,
    pub shifts: PhaseShiftSet,
    /// Root-sum-square of the port RMS currents, amperes.
    pub total_rms: f64,
    /// `sum_i I_rms,i^2`, proportional to conduction loss.
    pub sum_squared_rms: f64,
    /// Sum of edge-current magnitudes at edges that switch hard.
    pub hard_switching_current: f64,
    /// `sum_i P_i`; zero for the lossless model up to rounding.
    pub power_imbalance: f64,
    pub eps_current: f64,
}

impl SteadyStateReport {
    pub fn statuses(&self) -> Vec<ZvsStatus> {
        self.ports.iter().map(|p| p.zvs_status).collect()
    }

    pub fn rms_currents(&self) -> Vec<f64> {
        self.ports.iter().map(|p| p.rms_current).collect()
    }

    pub fn powers(&self) -> Vec<f64> {
        self.ports.iter().map(|p| p.dc_power).collect()
    }
}

impl fmt::Display for SteadyStateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>4} {:>9} {:>9} {:>11} {:>11} {:>9} {:>11}",
            "port", "d", "D", "i(t1) [A]", "i(t2) [A]", "status", "rms [A]"
        )?;
        for (p, (d, big_d)) in self.ports.iter().zip(self.shifts.outer.iter().zip(&self.shifts.inner)) {
            writeln!(
                f,
                "{:>4} {:>9.5} {:>9.5} {:>11.4} {:>11.4} {:>9} {:>11.4}   P = {:.2} W",
                p.port, d, big_d, p.current_at_t1, p.current_at_t2, p.zvs_status, p.rms_current, p.dc_power
            )?;
        }
        writeln!(f, "total rms (root-sum-square): {:.4} A", self.total_rms)?;
        writeln!(f, "sum of squared rms:          {:.4} A^2", self.sum_squared_rms)?;
        writeln!(f, "hard-switching current:      {:.4} A", self.hard_switching_current)?;
        write!(f, "power imbalance:             {:.3e} W", self.power_imbalance)
    }
}

/// Uniformly sampled waveforms over an integer number of periods.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformSeries {
    pub time: Vec<f64>,
    /// `bridge_voltages[port][sample]`
    pub bridge_voltages: Vec<Vec<f64>>,
    /// `currents[port][sample]`
    pub currents: Vec<Vec<f64>>,
    pub link_voltage: Vec<f64>,
}

impl WaveformSeries {
    pub fn header(ports: usize) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend((1..=ports).map(|i| format!("v_s{i}")));
        h.extend((1..=ports).map(|i| format!("i_L{i}")));
        h.push("v_H".to_string());
        h
    }

    /// CSV with columns `t, v_s1..v_sN, i_L1..i_LN, v_H` in SI units.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let n = self.currents.len();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::header(n))?;
        for (s, t) in self.time.iter().enumerate() {
            let mut row = Vec::with_capacity(2 * n + 2);
            row.push(t.to_string());
            row.extend(self.bridge_voltages.iter().map(|v| v[s].to_string()));
            row.extend(self.currents.iter().map(|c| c[s].to_string()));
            row.push(self.link_voltage[s].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A converter evaluated at one set of bus voltages and phase shifts.
#[derive(Debug, Clone)]
pub struct OperatingPoint<'a> {
    config: &'a ConverterConfig,
    voltages: Vec<f64>,
    shifts: PhaseShiftSet,
    derived: DerivedParams,
}

impl<'a> OperatingPoint<'a> {
    pub fn new(config: &'a ConverterConfig, voltages: &[f64], shifts: PhaseShiftSet) -> Result<Self> {
        if shifts.len() != config.num_ports() {
            return Err(MabError::LengthMismatch {
                expected: config.num_ports(),
                found: shifts.len(),
            });
        }
        shifts.validate()?;
        let derived = derive_params(config, voltages)?;
        Ok(OperatingPoint {
            config,
            voltages: voltages.to_vec(),
            shifts,
            derived,
        })
    }

    /// Open-loop analysis: bus voltages at their setpoints.
    pub fn at_setpoints(config: &'a ConverterConfig, shifts: PhaseShiftSet) -> Result<Self> {
        Self::new(config, &config.setpoints(), shifts)
    }

    pub fn config(&self) -> &ConverterConfig {
        self.config
    }

    pub fn voltages(&self) -> &[f64] {
        &self.voltages
    }

    pub fn shifts(&self) -> &PhaseShiftSet {
        &self.shifts
    }

    pub fn derived(&self) -> &DerivedParams {
        &self.derived
    }

    pub fn num_ports(&self) -> usize {
        self.voltages.len()
    }

    fn bridge_voltage_norm(&self, port: usize, u: f64) -> f64 {
        let d = self.shifts.outer[port];
        let big_d = self.shifts.inner[port];
        0.5 * self.voltages[port] * (square(u - d) + square(u - d - big_d))
    }

    /// Bridge output voltage `v_si(t)`, one of `{+V_i, 0, -V_i}`.
    pub fn switched_node_voltage(&self, port: usize, t: f64) -> Result<f64> {
        self.config.check_port(port)?;
        Ok(self.bridge_voltage_norm(port, t / self.config.half_period))
    }

    /// `v_H(t) = sum_i (l_i / n_i) v_si(t)`.
    pub fn link_voltage(&self, t: f64) -> f64 {
        let u = t / self.config.half_period;
        (0..self.num_ports())
            .map(|i| self.derived.coefficients[i] / self.config.ports[i].turns_ratio * self.bridge_voltage_norm(i, u))
            .sum()
    }

    fn triangle_pair(&self, k: usize, u: f64) -> f64 {
        let d = self.shifts.outer[k];
        tri(u - d) + tri(u - d - self.shifts.inner[k])
    }

    /// Current in port `i` at normalized time `u = t / T`.
    pub(crate) fn current_norm(&self, i: usize, u: f64) -> f64 {
        let m = &self.derived.ratios;
        let l = &self.derived.coefficients;
        let mut bracket = self.derived.weighted_ratio() - m[i] + m[i] * self.triangle_pair(i, u);
        for k in 0..self.num_ports() {
            bracket -= l[k] * m[k] * self.triangle_pair(k, u);
        }
        self.derived.current_scales[i] * bracket
    }

    pub fn inductor_current(&self, port: usize, t: f64) -> Result<f64> {
        self.config.check_port(port)?;
        Ok(self.current_norm(port, t / self.config.half_period))
    }

    /// Port currents at `t_i1 = d_i T` and `t_i2 = (d_i + D_i) T`, evaluated
    /// from the full-ZVS term and the F1/F2 edge-offset terms.
    pub fn switching_instant_currents(&self) -> Vec<(f64, f64)> {
        let n = self.num_ports();
        let m = &self.derived.ratios;
        let l = &self.derived.coefficients;
        (0..n)
            .map(|i| {
                let base = full_zvs_term(&self.derived, &self.shifts.inner, i);
                let (mut a, mut b) = (base, base);
                for k in 0..n {
                    let w = 2.0 * l[k] * m[k];
                    a -= w * f1(&self.shifts, i, k);
                    b -= w * f2(&self.shifts, i, k);
                }
                let scale = self.derived.current_scales[i];
                (scale * a, scale * b)
            })
            .collect()
    }

    /// Mean-square currents and average powers for every port, integrated
    /// exactly over the piecewise-linear segments between switching edges.
    fn period_integrals(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.num_ports();
        let grid = edge_grid(&self.shifts);
        let mut sq = vec![0.0; n];
        let mut pw = vec![0.0; n];
        for w in grid.windows(2) {
            let (u0, u1) = (w[0], w[1]);
            let du = u1 - u0;
            if du <= 0.0 {
                continue;
            }
            let mid = 0.5 * (u0 + u1);
            for i in 0..n {
                let a = self.current_norm(i, u0);
                let b = self.current_norm(i, u1);
                sq[i] += du * (a * a + a * b + b * b) / 3.0;
                pw[i] += du * self.bridge_voltage_norm(i, mid) * 0.5 * (a + b);
            }
        }
        // normalise by the period length (2 in units of T)
        for i in 0..n {
            sq[i] /= 2.0;
            pw[i] /= 2.0;
        }
        (sq, pw)
    }

    pub fn rms_currents(&self) -> Vec<f64> {
        self.period_integrals().0.into_iter().map(f64::sqrt).collect()
    }

    pub fn rms_current(&self, port: usize) -> Result<f64> {
        self.config.check_port(port)?;
        Ok(self.rms_currents()[port])
    }

    pub fn port_powers(&self) -> Vec<f64> {
        self.period_integrals().1
    }

    pub fn port_power(&self, port: usize) -> Result<f64> {
        self.config.check_port(port)?;
        Ok(self.port_powers()[port])
    }

    /// Edge currents, ZVS status, RMS and power for every port. Edge currents
    /// within `CURRENT_RESOLUTION * K_i` of zero count as zero.
    pub fn report(&self, eps_current: f64) -> Result<SteadyStateReport> {
        if !(eps_current >= 0.0) {
            return Err(MabError::NegativeTolerance(eps_current));
        }
        let instants = self.switching_instant_currents();
        let (sq, pw) = self.period_integrals();
        let mut hard = 0.0;
        let mut ports = Vec::with_capacity(self.num_ports());
        for (i, &(a, b)) in instants.iter().enumerate() {
            let eps = eps_current.max(CURRENT_RESOLUTION * self.derived.current_scales[i]);
            let status = classify_zvs((a, b), eps)?;
            hard += [a, b].iter().filter(|x| **x > eps).sum::<f64>();
            ports.push(PortReport {
                port: i + 1,
                current_at_t1: a,
                current_at_t2: b,
                zvs_status: status,
                rms_current: sq[i].sqrt(),
                dc_power: pw[i],
            });
        }
        let sum_sq: f64 = sq.iter().sum();
        Ok(SteadyStateReport {
            ports,
            shifts: self.shifts.clone(),
            total_rms: sum_sq.sqrt(),
            sum_squared_rms: sum_sq,
            hard_switching_current: hard,
            power_imbalance: pw.iter().sum(),
            eps_current,
        })
    }

    pub fn sample_waveforms(&self, points_per_period: usize, periods: usize) -> Result<WaveformSeries> {
        if points_per_period < 2 {
            return Err(MabError::InvalidArgument("points_per_period must be at least 2".into()));
        }
        let n = self.num_ports();
        let total = points_per_period * periods;
        let dt = self.config.period() / points_per_period as f64;
        let mut series = WaveformSeries {
            time: Vec::with_capacity(total),
            bridge_voltages: vec![Vec::with_capacity(total); n],
            currents: vec![Vec::with_capacity(total); n],
            link_voltage: Vec::with_capacity(total),
        };
        // one period is computed and repeated so every period is bit-identical
        let mut one = WaveformSeries {
            time: vec![],
            bridge_voltages: vec![Vec::with_capacity(points_per_period); n],
            currents: vec![Vec::with_capacity(points_per_period); n],
            link_voltage: Vec::with_capacity(points_per_period),
        };
        for s in 0..points_per_period {
            let u = 2.0 * s as f64 / points_per_period as f64;
            let t = u * self.config.half_period;
            for i in 0..n {
                one.bridge_voltages[i].push(self.bridge_voltage_norm(i, u));
                one.currents[i].push(self.current_norm(i, u));
            }
            one.link_voltage.push(self.link_voltage(t));
        }
        for p in 0..periods {
            for s in 0..points_per_period {
                series.time.push((p * points_per_period + s) as f64 * dt);
            }
            for i in 0..n {
                series.bridge_voltages[i].extend_from_slice(&one.bridge_voltages[i]);
                series.currents[i].extend_from_slice(&one.currents[i]);
            }
            series.link_voltage.extend_from_slice(&one.link_voltage);
        }
        Ok(series)
    }
}
