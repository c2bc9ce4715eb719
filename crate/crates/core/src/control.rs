//! Average-value closed-loop simulation.
//!
//! Once per control period the simulator samples the bus voltages, picks the
//! inner shifts (online full-ZVS rule or all zero), updates every regulated
//! port's outer shift with its PI controller, evaluates the steady-state port
//! powers at the resulting shifts and advances the DC bus capacitors with an
//! explicit Euler step. Port 1 is the reference and is held by a stiff source.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MabError, Result};
use crate::model::{derive_params, ConverterConfig, LoadModel};
use crate::waveform::{OperatingPoint, PhaseShiftSet, ZvsStatus};
use crate::zvs::{online_duty_ratios, sps_duty_ratios};

pub const OUTER_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modulation {
    /// Single phase shift: all inner shifts zero.
    Sps,
    /// Inner shifts from the online full-ZVS rule each control period.
    #[serde(alias = "online_zvs")]
    Zvs,
}

impl std::fmt::Display for Modulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(match self {
            Modulation::Sps => "SPS",
            Modulation::Zvs => "ONLINE_ZVS",
        })
    }
}

/// PI voltage controller driving one port's outer phase shift.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    /// 0-based port index; never 0.
    pub port: usize,
    /// Proportional gain, 1/V.
    pub kp: f64,
    /// Integral gain, 1/(V s).
    pub ki: f64,
    /// Integral contribution to the output, already scaled by `ki`.
    pub integrator: f64,
    pub output_min: f64,
    pub output_max: f64,
    /// Bus voltage reference, volts.
    pub reference: f64,
    pub output: f64,
}

impl ControllerState {
    pub fn new(port: usize, kp: f64, ki: f64, reference: f64) -> Self {
        ControllerState {
            port,
            kp,
            ki,
            integrator: 0.0,
            output_min: -OUTER_LIMIT,
            output_max: OUTER_LIMIT,
            reference,
            output: 0.0,
        }
    }

    /// One PI update with output clamping. The integrator is held whenever
    /// the unclamped output is saturated and the error pushes further into
    /// the limit.
    pub fn pi_step(&mut self, measured: f64, dt: f64) -> Result<f64> {
        if !(dt > 0.0) {
            return Err(MabError::InvalidArgument(format!(
                "control step must be positive, got {dt}"
            )));
        }
        let error = self.reference - measured;
        let proportional = self.kp * error;
        let candidate = self.integrator + self.ki * error * dt;
        let unclamped = proportional + candidate;
        let winding_up = (unclamped > self.output_max && error > 0.0) || (unclamped < self.output_min && error < 0.0);
        if !winding_up {
            self.integrator = candidate.clamp(self.output_min, self.output_max);
        }
        self.output = (proportional + self.integrator).clamp(self.output_min, self.output_max);
        Ok(self.output)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEvent {
    pub time: f64,
    /// 0-based port index.
    pub port: usize,
    pub load: Option<f64>,
    pub reference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub mode: Modulation,
    pub duration: f64,
    /// Switching periods per control update.
    pub control_period_cycles: usize,
    /// Largest change of any inner shift per control update; `None` = no limit.
    pub inner_rate_limit: Option<f64>,
    pub eps_current: f64,
    /// Settling envelope as a fraction of the final value.
    pub settling_band: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            mode: Modulation::Zvs,
            duration: 0.02,
            control_period_cycles: 1,
            inner_rate_limit: None,
            eps_current: 0.0,
            settling_band: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventMetrics {
    pub time: f64,
    /// 1-based port number.
    pub port: usize,
    /// Settling time of the event port's power; `None` if it had not settled
    /// by the next event or the end of the run.
    pub settling_time: Option<f64>,
    /// Largest `|V - ref| / ref` per port between this event and the next
    /// (zero for the source port).
    pub max_voltage_deviation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub mode: Modulation,
    pub time: Vec<f64>,
    /// `[sample][port]`
    pub voltages: Vec<Vec<f64>>,
    pub powers: Vec<Vec<f64>>,
    pub outer: Vec<Vec<f64>>,
    pub inner: Vec<Vec<f64>>,
    pub statuses: Vec<Vec<ZvsStatus>>,
    pub events: Vec<EventMetrics>,
    /// `reference - V` per port at the end of the run (zero for the source).
    pub steady_state_errors: Vec<f64>,
}

impl ScenarioResult {
    pub fn num_ports(&self) -> usize {
        self.voltages.first().map_or(0, Vec::len)
    }

    pub fn column(series: &[Vec<f64>], port: usize) -> Vec<f64> {
        series.iter().map(|row| row[port]).collect()
    }

    pub fn header(ports: usize) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend((2..=ports).map(|i| format!("V_{i}")));
        h.extend((1..=ports).map(|i| format!("P_{i}")));
        h.extend((2..=ports).map(|i| format!("d_{i}")));
        h.extend((1..=ports).map(|i| format!("D_{i}")));
        h.extend((1..=ports).map(|i| format!("zvs_{i}")));
        h
    }

    /// CSV with columns `t, V_2..V_N, P_1..P_N, d_2..d_N, D_1..D_N, zvs_1..zvs_N`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let n = self.num_ports();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::header(n))?;
        for s in 0..self.time.len() {
            let mut row = vec![self.time[s].to_string()];
            row.extend(self.voltages[s][1..].iter().map(f64::to_string));
            row.extend(self.powers[s].iter().map(f64::to_string));
            row.extend(self.outer[s][1..].iter().map(f64::to_string));
            row.extend(self.inner[s].iter().map(f64::to_string));
            row.extend(self.statuses[s].iter().map(ZvsStatus::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Advances every non-source bus by one explicit Euler step of
/// `C_i dV_i/dt = (-P_i - P_load,i(V_i)) / V_i`, where `P_i` is the power the
/// port injects into the link.
pub fn plant_step(
    config: &ConverterConfig,
    loads: &[LoadModel],
    powers: &[f64],
    voltages: &[f64],
    dt: f64,
    time: f64,
) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(MabError::InvalidArgument(format!(
            "plant step must be positive, got {dt}"
        )));
    }
    let mut next = voltages.to_vec();
    for (i, port) in config.ports.iter().enumerate() {
        let load = &loads[i];
        if let LoadModel::VoltageSource(v) = load {
            next[i] = *v;
            continue;
        }
        let v = voltages[i];
        if !(v > 0.0) {
            return Err(MabError::VoltageCollapse {
                port: i + 1,
                time,
                voltage: v,
            });
        }
        let dv = (-powers[i] - load.power_at(v)) / (port.dc_capacitance * v);
        next[i] = v + dv * dt;
        if !(next[i] > 0.0 && next[i].is_finite()) {
            return Err(MabError::VoltageCollapse {
                port: i + 1,
                time: time + dt,
                voltage: next[i],
            });
        }
    }
    Ok(next)
}

/// Time from `times[start]` until the series last leaves the band around its
/// final value. The final value is the mean of the last 5% of the samples;
/// `None` when those samples themselves are not inside the band.
pub fn settling_time(times: &[f64], series: &[f64], start: usize, band: f64) -> Result<Option<f64>> {
    if !(band > 0.0) {
        return Err(MabError::InvalidArgument(format!(
            "settling band must be positive, got {band}"
        )));
    }
    if start >= series.len() {
        return Ok(None);
    }
    let window = &series[start..];
    let tail = (window.len() / 20).max(1);
    let final_value = window[window.len() - tail..].iter().sum::<f64>() / tail as f64;
    let scale = if final_value != 0.0 {
        final_value.abs()
    } else {
        window.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    };
    let envelope = band * scale;
    let outside = |x: &f64| (x - final_value).abs() > envelope;
    if window[window.len() - tail..].iter().any(outside) {
        return Ok(None);
    }
    Ok(Some(match window.iter().rposition(outside) {
        None => 0.0,
        Some(k) => times[start + k + 1] - times[start],
    }))
}

fn check_scenario(config: &ConverterConfig, controllers: &[ControllerState], events: &[ScenarioEvent]) -> Result<()> {
    let n = config.num_ports();
    if !config.ports[0].load.is_source() {
        return Err(MabError::Scenario("port 1 must be a voltage source".into()));
    }
    for i in 1..n {
        let port = &config.ports[i];
        if port.load.is_source() {
            return Err(MabError::Scenario(format!("port {} cannot be a voltage source", i + 1)));
        }
        if !(port.dc_capacitance > 0.0) {
            return Err(MabError::Scenario(format!(
                "port {} needs a positive dc capacitance",
                i + 1
            )));
        }
        let count = controllers.iter().filter(|c| c.port == i).count();
        if count != 1 {
            return Err(MabError::Scenario(format!(
                "port {} needs exactly one controller, found {count}",
                i + 1
            )));
        }
    }
    if let Some(c) = controllers.iter().find(|c| c.port == 0 || c.port >= n) {
        return Err(MabError::Scenario(format!(
            "controller on port {} is not allowed",
            c.port + 1
        )));
    }
    for w in events.windows(2) {
        if w[1].time < w[0].time {
            return Err(MabError::Scenario("event times must be non-decreasing".into()));
        }
    }
    for e in events {
        if e.port >= n {
            return Err(MabError::PortOutOfRange {
                port: e.port + 1,
                ports: n,
            });
        }
        if e.port == 0 && e.reference.is_some() {
            return Err(MabError::Scenario("port 1 has no voltage reference".into()));
        }
    }
    Ok(())
}

/// Mutable state of one simulation run.
struct Loop<'a> {
    config: &'a ConverterConfig,
    controllers: Vec<ControllerState>,
    loads: Vec<LoadModel>,
    voltages: Vec<f64>,
    inner: Vec<f64>,
    opts: &'a SimOptions,
    dt: f64,
}

struct StepOutput {
    shifts: PhaseShiftSet,
    powers: Vec<f64>,
    statuses: Vec<ZvsStatus>,
}

impl<'a> Loop<'a> {
    fn new(config: &'a ConverterConfig, controllers: &[ControllerState], opts: &'a SimOptions) -> Result<Self> {
        if opts.control_period_cycles == 0 {
            return Err(MabError::InvalidArgument(
                "control_period_cycles must be at least 1".into(),
            ));
        }
        let mut loop_ = Loop {
            config,
            controllers: controllers.to_vec(),
            loads: config.ports.iter().map(|p| p.load).collect(),
            voltages: config.setpoints(),
            inner: vec![0.0; config.num_ports()],
            opts,
            dt: config.period() * opts.control_period_cycles as f64,
        };
        loop_.voltages[0] = loop_.loads[0].value();
        loop_.inner = loop_.target_inner()?;
        Ok(loop_)
    }

    fn target_inner(&self) -> Result<Vec<f64>> {
        match self.opts.mode {
            Modulation::Sps => sps_duty_ratios(self.config.num_ports()),
            Modulation::Zvs => Ok(online_duty_ratios(&self.voltages, &self.config.turns_ratios())?.inner_ratios),
        }
    }

    fn apply(&mut self, event: &ScenarioEvent) {
        if let Some(load) = event.load {
            self.loads[event.port] = self.loads[event.port].with_value(load);
            if event.port == 0 {
                self.voltages[0] = load;
            }
        }
        if let Some(r) = event.reference {
            for c in self.controllers.iter_mut().filter(|c| c.port == event.port) {
                c.reference = r;
            }
        }
    }

    /// Control update and power evaluation at the current bus voltages.
    fn control(&mut self) -> Result<StepOutput> {
        let target = self.target_inner()?;
        for (d, t) in self.inner.iter_mut().zip(target) {
            *d = match self.opts.inner_rate_limit {
                Some(r) => *d + (t - *d).clamp(-r, r),
                None => t,
            };
        }
        let mut outer = vec![0.0; self.config.num_ports()];
        for c in &mut self.controllers {
            outer[c.port] = c.pi_step(self.voltages[c.port], self.dt)?;
        }
        let shifts = PhaseShiftSet::new(outer, self.inner.clone())?;
        let report = OperatingPoint::new(self.config, &self.voltages, shifts.clone())?.report(self.opts.eps_current)?;
        Ok(StepOutput {
            shifts,
            powers: report.powers(),
            statuses: report.statuses(),
        })
    }

    fn advance(&mut self, powers: &[f64], time: f64) -> Result<()> {
        self.voltages = plant_step(self.config, &self.loads, powers, &self.voltages, self.dt, time)?;
        Ok(())
    }

    fn references(&self) -> Vec<f64> {
        let mut r = self.voltages.clone();
        for c in &self.controllers {
            r[c.port] = c.reference;
        }
        r
    }
}

pub fn run_scenario(
    config: &ConverterConfig,
    controllers: &[ControllerState],
    events: &[ScenarioEvent],
    opts: &SimOptions,
) -> Result<ScenarioResult> {
    check_scenario(config, controllers, events)?;
    let mut sim = Loop::new(config, controllers, opts)?;
    let steps = (opts.duration / sim.dt).round() as usize;
    let mut result = ScenarioResult {
        mode: opts.mode,
        time: Vec::with_capacity(steps + 1),
        voltages: Vec::with_capacity(steps + 1),
        powers: Vec::with_capacity(steps + 1),
        outer: Vec::with_capacity(steps + 1),
        inner: Vec::with_capacity(steps + 1),
        statuses: Vec::with_capacity(steps + 1),
        events: vec![],
        steady_state_errors: vec![],
    };
    let mut next_event = 0;
    let mut event_steps = Vec::new();
    let mut event_refs = Vec::new();
    for k in 0..=steps {
        let t = k as f64 * sim.dt;
        while next_event < events.len() && events[next_event].time <= t + 1e-3 * sim.dt {
            sim.apply(&events[next_event]);
            event_steps.push(k);
            event_refs.push(sim.references());
            next_event += 1;
        }
        let out = sim.control()?;
        result.time.push(t);
        result.voltages.push(sim.voltages.clone());
        result.outer.push(out.shifts.outer);
        result.inner.push(out.shifts.inner);
        result.statuses.push(out.statuses);
        if k < steps {
            sim.advance(&out.powers, t)?;
        }
        result.powers.push(out.powers);
    }

    for (e, event) in events.iter().take(event_steps.len()).enumerate() {
        let start = event_steps[e];
        let end = event_steps.get(e + 1).copied().unwrap_or(result.time.len());
        let power = ScenarioResult::column(&result.powers[..end], event.port);
        let settling = settling_time(&result.time[..end], &power, start, opts.settling_band)?;
        let refs = &event_refs[e];
        let max_voltage_deviation = (0..config.num_ports())
            .map(|i| {
                if i == 0 {
                    return 0.0;
                }
                result.voltages[start..end]
                    .iter()
                    .map(|v| (v[i] - refs[i]).abs() / refs[i])
                    .fold(0.0, f64::max)
            })
            .collect();
        result.events.push(EventMetrics {
            time: event.time,
            port: event.port + 1,
            settling_time: settling,
            max_voltage_deviation,
        });
    }
    let refs = sim.references();
    result.steady_state_errors = refs
        .iter()
        .zip(result.voltages.last().unwrap())
        .enumerate()
        .map(|(i, (r, v))| if i == 0 { 0.0 } else { r - v })
        .collect();
    Ok(result)
}

/// Closed-loop operating point reached by the controllers with the loads
/// held constant.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergedPoint {
    pub shifts: PhaseShiftSet,
    pub voltages: Vec<f64>,
    /// Controller states at the end of the run; reuse them to start a
    /// scenario from this point.
    pub controllers: Vec<ControllerState>,
    pub time: f64,
    pub converged: bool,
}

/// Runs the loop until every regulated voltage is within `tolerance`
/// (relative) of its reference and the outer shifts have stopped moving, or
/// until `max_time` elapses.
pub fn converge_operating_point(
    config: &ConverterConfig,
    controllers: &[ControllerState],
    opts: &SimOptions,
    tolerance: f64,
    max_time: f64,
) -> Result<ConvergedPoint> {
    check_scenario(config, controllers, &[])?;
    let mut sim = Loop::new(config, controllers, opts)?;
    let steps = (max_time / sim.dt).ceil() as usize;
    let mut previous: Option<Vec<f64>> = None;
    let mut quiet = 0;
    for k in 0..=steps {
        let t = k as f64 * sim.dt;
        let out = sim.control()?;
        let settled = sim
            .controllers
            .iter()
            .all(|c| (sim.voltages[c.port] - c.reference).abs() <= tolerance * c.reference);
        let still = previous
            .as_ref()
            .map(|p| p.iter().zip(&out.shifts.outer).all(|(a, b)| (a - b).abs() <= tolerance))
            .unwrap_or(false);
        quiet = if settled && still { quiet + 1 } else { 0 };
        if quiet >= 10 || k == steps {
            return Ok(ConvergedPoint {
                shifts: out.shifts,
                voltages: sim.voltages.clone(),
                controllers: sim.controllers.clone(),
                time: t,
                converged: quiet >= 10,
            });
        }
        previous = Some(out.shifts.outer.clone());
        sim.advance(&out.powers, t)?;
    }
    unreachable!("loop returns on its last iteration")
}

/// Refines a converged point to the exact closed-loop equilibrium: every
/// regulated bus at its reference, inner shifts from the modulation rule at
/// those voltages, and outer shifts solving the port power balance by Newton
/// iteration with a finite-difference Jacobian.
pub fn polish_equilibrium(
    config: &ConverterConfig,
    point: &ConvergedPoint,
    mode: Modulation,
) -> Result<ConvergedPoint> {
    let n = config.num_ports();
    let mut voltages = point.voltages.clone();
    voltages[0] = config.ports[0].load.value();
    for c in &point.controllers {
        voltages[c.port] = c.reference;
    }
    let inner = match mode {
        Modulation::Sps => sps_duty_ratios(n)?,
        Modulation::Zvs => online_duty_ratios(&voltages, &config.turns_ratios())?.inner_ratios,
    };
    let ports: Vec<usize> = point.controllers.iter().map(|c| c.port).collect();
    let demand: Vec<f64> = ports
        .iter()
        .map(|&i| config.ports[i].load.power_at(voltages[i]))
        .collect();
    let residual = |outer: &[f64]| -> Result<DVector<f64>> {
        let shifts = PhaseShiftSet::new(outer.to_vec(), inner.clone())?;
        let p = OperatingPoint::new(config, &voltages, shifts)?.port_powers();
        Ok(DVector::from_iterator(
            ports.len(),
            ports.iter().zip(&demand).map(|(&i, d)| p[i] + d),
        ))
    };
    let scales = derive_params(config, &voltages)?.current_scales;
    let tol = 1e-12 * ports.iter().map(|&i| voltages[i] * scales[i]).fold(0.0, f64::max);
    let h = 1e-7;
    let fail = || MabError::NotConverged {
        mode: mode.to_string(),
        time: point.time,
    };

    let mut outer = point.shifts.outer.clone();
    let mut r = residual(&outer)?;
    let mut iterations = 0;
    while r.amax() > tol {
        iterations += 1;
        if iterations > 50 {
            return Err(fail());
        }
        let mut jac = DMatrix::zeros(ports.len(), ports.len());
        for (col, &i) in ports.iter().enumerate() {
            let mut hi = outer.clone();
            let mut lo = outer.clone();
            hi[i] = (hi[i] + h).min(OUTER_LIMIT);
            lo[i] = (lo[i] - h).max(-OUTER_LIMIT);
            let diff = (residual(&hi)? - residual(&lo)?) / (hi[i] - lo[i]);
            jac.set_column(col, &diff);
        }
        let step = jac.lu().solve(&(-&r)).ok_or_else(fail)?;
        for (k, &i) in ports.iter().enumerate() {
            outer[i] = (outer[i] + step[k]).clamp(-OUTER_LIMIT, OUTER_LIMIT);
        }
        r = residual(&outer)?;
    }

    let mut controllers = point.controllers.clone();
    for c in &mut controllers {
        c.integrator = outer[c.port];
        c.output = outer[c.port];
    }
    Ok(ConvergedPoint {
        shifts: PhaseShiftSet::new(outer, inner)?,
        voltages,
        controllers,
        time: point.time,
        converged: true,
    })
}
