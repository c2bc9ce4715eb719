//! Scenario-level analyses behind the CLI: steady state at the
//! controller-converged operating point, SPS versus online-ZVS comparison,
//! load sweeps and closed-loop runs.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::control::{
    converge_operating_point, polish_equilibrium, run_scenario, ConvergedPoint, Modulation, ScenarioResult,
};
use crate::error::{MabError, Result};
use crate::scenario::Scenario;
use crate::waveform::{OperatingPoint, PhaseShiftSet, SteadyStateReport, WaveformSeries, ZvsStatus};

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyAnalysis {
    pub mode: Modulation,
    pub point: ConvergedPoint,
    pub report: SteadyStateReport,
}

impl SteadyAnalysis {
    pub fn operating_point<'a>(&self, scenario: &'a Scenario) -> Result<OperatingPoint<'a>> {
        OperatingPoint::new(&scenario.config, &self.point.voltages, self.point.shifts.clone())
    }

    pub fn waveforms(&self, scenario: &Scenario) -> Result<WaveformSeries> {
        self.operating_point(scenario)?
            .sample_waveforms(scenario.analysis.points_per_period, scenario.analysis.periods)
    }
}

/// Closed-loop operating point for the scenario's loads and mode: the
/// simulated controllers locate the equilibrium, which is then solved
/// exactly. Fails if the controllers do not converge within
/// `analysis.converge_time`.
pub fn converged(scenario: &Scenario) -> Result<ConvergedPoint> {
    let point = converge_operating_point(
        &scenario.config,
        &scenario.controllers,
        &scenario.options,
        scenario.analysis.converge_tolerance,
        scenario.analysis.converge_time,
    )?;
    if !point.converged {
        return Err(MabError::NotConverged {
            mode: scenario.options.mode.to_string(),
            time: scenario.analysis.converge_time,
        });
    }
    polish_equilibrium(&scenario.config, &point, scenario.options.mode)
}

pub fn steady(scenario: &Scenario) -> Result<SteadyAnalysis> {
    let point = converged(scenario)?;
    let report = OperatingPoint::new(&scenario.config, &point.voltages, point.shifts.clone())?
        .report(scenario.analysis.eps_current)?;
    Ok(SteadyAnalysis {
        mode: scenario.options.mode,
        point,
        report,
    })
}

/// Steady state at fixed shifts and the nominal bus voltages.
pub fn steady_at(scenario: &Scenario, shifts: PhaseShiftSet) -> Result<SteadyStateReport> {
    OperatingPoint::at_setpoints(&scenario.config, shifts)?.report(scenario.analysis.eps_current)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub sps: SteadyAnalysis,
    pub zvs: SteadyAnalysis,
    /// `sum_i I_rms,i^2` under online ZVS over the same under SPS.
    pub rms_ratio: f64,
    /// Ratio of the root-sum-square totals, `sqrt(rms_ratio)`.
    pub total_rms_ratio: f64,
}

pub fn compare(scenario: &Scenario) -> Result<Comparison> {
    let sps = steady(&scenario.with_mode(Modulation::Sps))?;
    let zvs = steady(&scenario.with_mode(Modulation::Zvs))?;
    let rms_ratio = zvs.report.sum_squared_rms / sps.report.sum_squared_rms;
    let total_rms_ratio = zvs.report.total_rms / sps.report.total_rms;
    Ok(Comparison {
        sps,
        zvs,
        rms_ratio,
        total_rms_ratio,
    })
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = (&self.sps.report, &self.zvs.report);
        writeln!(
            f,
            "{:>4}  {:>10} {:>10}  {:>9} {:>9}  {:>8} {:>8}",
            "port", "d SPS", "d ZVS", "Irms SPS", "Irms ZVS", "SPS", "ZVS"
        )?;
        for (p, q) in a.ports.iter().zip(&b.ports) {
            let i = p.port - 1;
            writeln!(
                f,
                "{:>4}  {:>10.6} {:>10.6}  {:>9.4} {:>9.4}  {:>8} {:>8}",
                p.port, a.shifts.outer[i], b.shifts.outer[i], p.rms_current, q.rms_current, p.zvs_status, q.zvs_status
            )?;
        }
        writeln!(f, "D (ZVS): {:?}", b.shifts.inner)?;
        writeln!(f, "total RMS: SPS {:.4} A, ZVS {:.4} A", a.total_rms, b.total_rms)?;
        writeln!(f, "rms_ratio (sum of squares): {:.4}", self.rms_ratio)?;
        write!(f, "total_rms_ratio: {:.4}", self.total_rms_ratio)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    /// 1-based swept port.
    pub port: usize,
    pub load: f64,
    pub mode: Modulation,
    pub total_rms: f64,
    pub sum_squared_rms: f64,
    pub hard_switching_current: f64,
    pub statuses: Vec<ZvsStatus>,
}

/// Evenly spaced load values, `points` of them, from `start` to `stop`.
pub fn sweep_values(start: f64, stop: f64, points: usize) -> Result<Vec<f64>> {
    if points == 0 {
        return Err(MabError::InvalidArgument("sweep needs at least one point".into()));
    }
    if points == 1 {
        return Ok(vec![start]);
    }
    let step = (stop - start) / (points - 1) as f64;
    Ok((0..points).map(|k| start + step * k as f64).collect())
}

/// Both modes at every load point of `analysis.sweep`, one row per
/// (point, mode), SPS first.
pub fn sweep(scenario: &Scenario) -> Result<Vec<SweepRow>> {
    let spec = scenario
        .analysis
        .sweep
        .clone()
        .ok_or_else(|| MabError::Scenario("no analysis.sweep section".into()))?;
    let values = sweep_values(spec.start, spec.stop, spec.points)?;
    let jobs: Vec<(f64, Modulation)> = values
        .iter()
        .flat_map(|&v| [(v, Modulation::Sps), (v, Modulation::Zvs)])
        .collect();
    jobs.par_iter()
        .map(|&(value, mode)| {
            let mut s = scenario.with_mode(mode);
            s.set_load(spec.port - 1, value)?;
            let r = steady(&s)?.report;
            Ok(SweepRow {
                port: spec.port,
                load: value,
                mode,
                total_rms: r.total_rms,
                sum_squared_rms: r.sum_squared_rms,
                hard_switching_current: r.hard_switching_current,
                statuses: r.statuses(),
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> csv::Result<()> {
    let n = rows.first().map_or(0, |r| r.statuses.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = [
        "port",
        "load",
        "mode",
        "total_rms",
        "sum_squared_rms",
        "hard_switching_current",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=n).map(|i| format!("zvs_{i}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.port.to_string(),
            r.load.to_string(),
            r.mode.to_string(),
            r.total_rms.to_string(),
            r.sum_squared_rms.to_string(),
            r.hard_switching_current.to_string(),
        ];
        rec.extend(r.statuses.iter().map(ZvsStatus::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Closed-loop run of the scenario's events, optionally starting from the
/// converged operating point at the initial loads.
pub fn dynamic(scenario: &Scenario) -> Result<ScenarioResult> {
    let controllers = if scenario.warm_start {
        converged(scenario)?.controllers
    } else {
        scenario.controllers.clone()
    };
    run_scenario(&scenario.config, &controllers, &scenario.events, &scenario.options)
}

/// Settling and regulation summary for a closed-loop run.
pub fn dynamic_summary(result: &ScenarioResult) -> String {
    if result.events.is_empty() {
        return "no events".to_string();
    }
    let mut out = String::new();
    for e in &result.events {
        let settle = match e.settling_time {
            Some(t) => format!("{:.3} ms", t * 1e3),
            None => "unsettled".to_string(),
        };
        let dev: Vec<String> = e
            .max_voltage_deviation
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, d)| format!("V_{} {:.3}%", i + 1, d * 100.0))
            .collect();
        out.push_str(&format!(
            "event t = {:.4} s, port {}: settling {settle}; max deviation {}\n",
            e.time,
            e.port,
            dev.join(", ")
        ));
    }
    let err: Vec<String> = result
        .steady_state_errors
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, e)| format!("V_{} {:.3e} V", i + 1, e))
        .collect();
    out.push_str(&format!("final voltage error: {}", err.join(", ")));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_grid() {
        let v = sweep_values(200.0, 2000.0, 10).unwrap();
        assert_eq!(v.len(), 10);
        assert_eq!(v[0], 200.0);
        assert!((v[9] - 2000.0).abs() < 1e-9);
        assert!((v[1] - 400.0).abs() < 1e-9);
        assert_eq!(sweep_values(500.0, 900.0, 1).unwrap(), vec![500.0]);
        assert!(sweep_values(1.0, 2.0, 0).is_err());
    }
}
