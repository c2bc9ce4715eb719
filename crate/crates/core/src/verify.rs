//! Randomized verification campaign: closed-form currents against the
//! event-driven oracle, edge-current formula against the waveform, and the
//! algebraic full-ZVS identities.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{MabError, Result};
use crate::model::{derive_params, ConverterConfig, LoadModel, PortSpec};
use crate::oracle::{compare_closed_form, compare_with};
use crate::waveform::{edge_grid, f1, f2, OperatingPoint, PhaseShiftSet};
use crate::zvs::{full_zvs_terms, online_solution, zvs_system_residual};

/// Relative tolerance for waveform comparisons, in units of `K_i`.
pub const CURRENT_TOLERANCE: f64 = 1e-9;
/// Absolute tolerance for the dimensionless full-ZVS identities.
pub const IDENTITY_TOLERANCE: f64 = 1e-12;

/// Deliberate defects used to check that the campaign can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Adds `1e-6 K_i` to every closed-form current.
    CurrentOffset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub config: ConverterConfig,
    pub shifts: PhaseShiftSet,
}

/// Random converter with `ports_min..=ports_max` ports and random shifts.
/// Every fourth draw uses SPS shifts.
pub fn random_draw<R: Rng>(rng: &mut R, ports_min: usize, ports_max: usize) -> Draw {
    let n = rng.gen_range(ports_min..=ports_max);
    let ports = (0..n)
        .map(|i| {
            let v = rng.gen_range(50.0..1000.0);
            PortSpec {
                index: i + 1,
                dc_voltage: v,
                turns_ratio: rng.gen_range(0.2..5.0),
                leakage_inductance: rng.gen_range(1e-6..100e-6),
                dc_capacitance: 500e-6,
                load: if i == 0 {
                    LoadModel::VoltageSource(v)
                } else {
                    LoadModel::Resistor(100.0)
                },
            }
        })
        .collect();
    let f = rng.gen_range(10e3..200e3);
    let config = ConverterConfig::new(ports, f).expect("random config is valid");
    let sps = rng.gen_range(0..4) == 0;
    let mut outer = vec![0.0; n];
    let mut inner = vec![0.0; n];
    for i in 0..n {
        if i > 0 {
            outer[i] = rng.gen_range(-0.5..=0.5);
        }
        if !sps {
            inner[i] = rng.gen_range(0.0..1.0);
        }
    }
    let shifts = PhaseShiftSet::new(outer, inner).expect("random shifts are valid");
    Draw { config, shifts }
}

/// Independent stream per draw so results do not depend on scheduling.
pub fn draw_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct DrawErrors {
    pub oracle: f64,
    pub edge: f64,
    pub antisymmetry: f64,
    pub mean: f64,
    pub power_balance: f64,
    pub identity: f64,
    pub zvs_residual: f64,
    /// Most negative F1/F2 value (zero if none).
    pub edge_offset_min: f64,
}

impl DrawErrors {
    fn merge(self, o: DrawErrors) -> DrawErrors {
        DrawErrors {
            oracle: self.oracle.max(o.oracle),
            edge: self.edge.max(o.edge),
            antisymmetry: self.antisymmetry.max(o.antisymmetry),
            mean: self.mean.max(o.mean),
            power_balance: self.power_balance.max(o.power_balance),
            identity: self.identity.max(o.identity),
            zvs_residual: self.zvs_residual.max(o.zvs_residual),
            edge_offset_min: self.edge_offset_min.min(o.edge_offset_min),
        }
    }

    pub fn failures(&self) -> Vec<&'static str> {
        let mut f = vec![];
        if !(self.oracle <= CURRENT_TOLERANCE) {
            f.push("oracle equivalence");
        }
        if !(self.edge <= CURRENT_TOLERANCE) {
            f.push("edge currents");
        }
        if !(self.antisymmetry <= CURRENT_TOLERANCE) {
            f.push("half-period antisymmetry");
        }
        if !(self.mean <= CURRENT_TOLERANCE) {
            f.push("zero mean");
        }
        if !(self.power_balance <= CURRENT_TOLERANCE) {
            f.push("power balance");
        }
        if !(self.identity <= IDENTITY_TOLERANCE) {
            f.push("weighted full-ZVS sum");
        }
        if !(self.zvs_residual <= IDENTITY_TOLERANCE) {
            f.push("online solution residual");
        }
        if !(self.edge_offset_min >= -IDENTITY_TOLERANCE) {
            f.push("edge-offset non-negativity");
        }
        f
    }
}

pub fn check_draw(draw: &Draw, fault: Option<Fault>) -> Result<DrawErrors> {
    let config = &draw.config;
    let n = config.num_ports();
    let op = OperatingPoint::at_setpoints(config, draw.shifts.clone())?;
    let derived = op.derived();
    let k = &derived.current_scales;
    let half = config.half_period;
    let current = |i: usize, t: f64| {
        let i_t = op.current_norm(i, t / half);
        match fault {
            Some(Fault::CurrentOffset) => i_t + 1e-6 * k[i],
            None => i_t,
        }
    };

    let mut e = DrawErrors {
        oracle: match fault {
            None => compare_closed_form(&op),
            Some(_) => compare_with(&op, current),
        },
        ..DrawErrors::default()
    };

    let edges = op.switching_instant_currents();
    let grid = edge_grid(&draw.shifts);
    for i in 0..n {
        let d = draw.shifts.outer[i];
        let dd = draw.shifts.inner[i];
        let a = (edges[i].0 - current(i, d * half)).abs() / k[i];
        let b = (edges[i].1 - current(i, (d + dd) * half)).abs() / k[i];
        e.edge = e.edge.max(a).max(b);

        let mut integral = 0.0;
        for w in grid.windows(2) {
            let (u0, u1) = (w[0], w[1]);
            let mid = 0.5 * (u0 + u1);
            for u in [u0, mid] {
                let anti = (current(i, (u + 1.0) * half) + current(i, u * half)).abs() / k[i];
                e.antisymmetry = e.antisymmetry.max(anti);
            }
            integral += (u1 - u0) * 0.5 * (current(i, u0 * half) + current(i, u1 * half));
        }
        e.mean = e.mean.max((integral / 2.0).abs() / k[i]);

        for j in 0..n {
            e.edge_offset_min = e
                .edge_offset_min
                .min(f1(&draw.shifts, i, j))
                .min(f2(&draw.shifts, i, j));
        }
    }

    let powers = op.port_powers();
    let scale = (0..n).map(|i| config.ports[i].dc_voltage * k[i]).fold(0.0, f64::max);
    e.power_balance = powers.iter().sum::<f64>().abs() / scale;

    let terms = full_zvs_terms(derived, &draw.shifts.inner);
    e.identity = derived
        .coefficients
        .iter()
        .zip(&terms)
        .map(|(l, t)| l * t)
        .sum::<f64>()
        .abs();

    let live = derive_params(config, &config.setpoints())?;
    let sol = online_solution(&live)?;
    let zeroed = full_zvs_terms(&live, &sol.inner_ratios);
    let residual = zvs_system_residual(&live, &sol.inner_ratios);
    e.zvs_residual = zeroed.iter().chain(&residual).fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(e)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignReport {
    pub seed: u64,
    pub draws: usize,
    pub worst: DrawErrors,
    /// Number of draws with at least one failed check.
    pub failed_draws: usize,
    pub failed_checks: Vec<&'static str>,
}

impl CampaignReport {
    pub fn passed(&self) -> bool {
        self.failed_draws == 0
    }
}

impl fmt::Display for CampaignReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = &self.worst;
        writeln!(f, "seed {} draws {}", self.seed, self.draws)?;
        writeln!(f, "max |closed form - oracle| / K   {:.3e}", w.oracle)?;
        writeln!(f, "max edge-current error / K       {:.3e}", w.edge)?;
        writeln!(f, "max antisymmetry error / K       {:.3e}", w.antisymmetry)?;
        writeln!(f, "max mean current / K             {:.3e}", w.mean)?;
        writeln!(f, "max power imbalance / (V K)      {:.3e}", w.power_balance)?;
        writeln!(f, "max |sum l_i T_i|                {:.3e}", w.identity)?;
        writeln!(f, "max online-solution residual     {:.3e}", w.zvs_residual)?;
        writeln!(f, "min edge-offset term             {:.3e}", w.edge_offset_min)?;
        if self.passed() {
            write!(f, "PASS")
        } else {
            write!(
                f,
                "FAIL: {} draws ({})",
                self.failed_draws,
                self.failed_checks.join(", ")
            )
        }
    }
}

/// Runs `draws` independent checks in parallel. The report depends only on
/// `seed`, `draws` and the port range.
pub fn run_campaign(seed: u64, draws: usize, ports: (usize, usize), fault: Option<Fault>) -> Result<CampaignReport> {
    if draws == 0 {
        return Err(MabError::InvalidArgument("draws must be at least 1".into()));
    }
    if ports.0 < 2 || ports.1 < ports.0 {
        return Err(MabError::InvalidArgument(format!(
            "bad port range {}..={}",
            ports.0, ports.1
        )));
    }
    let results: Vec<DrawErrors> = (0..draws as u64)
        .into_par_iter()
        .map(|idx| {
            let draw = random_draw(&mut draw_rng(seed, idx), ports.0, ports.1);
            check_draw(&draw, fault)
        })
        .collect::<Result<_>>()?;
    let mut worst = DrawErrors::default();
    let mut failed_draws = 0;
    for r in &results {
        if !r.failures().is_empty() {
            failed_draws += 1;
        }
        worst = worst.merge(*r);
    }
    Ok(CampaignReport {
        seed,
        draws,
        worst,
        failed_draws,
        failed_checks: worst.failures(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_campaign_passes_and_repeats() {
        let a = run_campaign(7, 50, (2, 6), None).unwrap();
        assert!(a.passed(), "{a}");
        assert_eq!(a, run_campaign(7, 50, (2, 6), None).unwrap());
    }

    #[test]
    fn injected_fault_is_caught() {
        let r = run_campaign(7, 5, (2, 4), Some(Fault::CurrentOffset)).unwrap();
        assert!(!r.passed());
        assert!(r.failed_checks.contains(&"oracle equivalence"));
    }

    #[test]
    fn argument_checks() {
        assert!(run_campaign(1, 0, (2, 6), None).is_err());
        assert!(run_campaign(1, 1, (1, 6), None).is_err());
    }
}
