//! Brute-force reference for the closed-form currents.
//!
//! The inductor ODE `L_i di_i/dt = v_si - n_i v_H` is integrated exactly over
//! the segments between consecutive bridge edges, where every drive voltage
//! is constant. The link voltage is formed directly from the physical
//! admittances `n_k^2 / L_k`. Nothing here calls the closed-form current or
//! edge-current code; only the bridge voltage synthesis is shared.

use crate::waveform::OperatingPoint;

/// Segment boundaries over one period and the bridge voltages on each segment.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTimeline {
    /// Strictly increasing, starting at 0, seconds. Segment `s` spans
    /// `[breakpoints[s], breakpoints[s + 1])`, the last one ending at `2T`.
    pub breakpoints: Vec<f64>,
    pub period: f64,
    /// `voltages[segment][port]`, volts.
    pub voltages: Vec<Vec<f64>>,
}

impl EventTimeline {
    pub fn segment_end(&self, s: usize) -> f64 {
        self.breakpoints.get(s + 1).copied().unwrap_or(self.period)
    }

    pub fn num_segments(&self) -> usize {
        self.breakpoints.len()
    }
}

/// Continuous piecewise-linear currents: values at every breakpoint plus the
/// closing value at `2T`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseCurrents {
    /// Knot times, `breakpoints` followed by the period end.
    pub knots: Vec<f64>,
    /// `values[port][knot]`, amperes.
    pub values: Vec<Vec<f64>>,
}

impl PiecewiseCurrents {
    /// Linear interpolation of port `i` at `t` in `[0, 2T]`.
    pub fn eval(&self, port: usize, t: f64) -> f64 {
        let k = match self.knots.partition_point(|x| *x <= t) {
            0 => 0,
            n if n >= self.knots.len() => self.knots.len() - 2,
            n => n - 1,
        };
        let (t0, t1) = (self.knots[k], self.knots[k + 1]);
        let (a, b) = (self.values[port][k], self.values[port][k + 1]);
        a + (b - a) * (t - t0) / (t1 - t0)
    }

    /// Period average, exact for piecewise-linear data.
    pub fn mean(&self, port: usize) -> f64 {
        let v = &self.values[port];
        let span = self.knots.last().unwrap() - self.knots[0];
        self.knots
            .windows(2)
            .enumerate()
            .map(|(k, w)| (w[1] - w[0]) * 0.5 * (v[k] + v[k + 1]))
            .sum::<f64>()
            / span
    }
}

/// Collects every bridge edge in `[0, 2T)` and samples each bridge voltage
/// in the middle of every segment.
pub fn build_timeline(op: &OperatingPoint<'_>) -> EventTimeline {
    let half = op.config().half_period;
    let period = 2.0 * half;
    let shifts = op.shifts();
    let mut edges = vec![0.0];
    for (d, big_d) in shifts.outer.iter().zip(&shifts.inner) {
        for x in [*d, d + big_d, d + 1.0, d + big_d + 1.0] {
            let t = x.rem_euclid(2.0) * half;
            if t < period {
                edges.push(t);
            }
        }
    }
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    let voltages = (0..edges.len())
        .map(|s| {
            let end = edges.get(s + 1).copied().unwrap_or(period);
            let mid = 0.5 * (edges[s] + end);
            (0..op.num_ports())
                .map(|i| op.switched_node_voltage(i, mid).expect("port in range"))
                .collect()
        })
        .collect();
    EventTimeline {
        breakpoints: edges,
        period,
        voltages,
    }
}

/// Exact segment-wise integration of the inductor ODE from `initial`.
pub fn integrate_currents(op: &OperatingPoint<'_>, initial: &[f64], timeline: &EventTimeline) -> PiecewiseCurrents {
    let config = op.config();
    let n = config.num_ports();
    let admittance: Vec<f64> = config
        .ports
        .iter()
        .map(|p| p.turns_ratio / p.leakage_inductance)
        .collect();
    let total: f64 = config
        .ports
        .iter()
        .map(|p| p.turns_ratio * p.turns_ratio / p.leakage_inductance)
        .sum();

    let mut knots = timeline.breakpoints.clone();
    knots.push(timeline.period);
    let mut values: Vec<Vec<f64>> = initial.iter().map(|x| vec![*x]).collect();
    let mut state = initial.to_vec();
    for (s, v) in timeline.voltages.iter().enumerate() {
        let dt = timeline.segment_end(s) - timeline.breakpoints[s];
        let link: f64 = (0..n).map(|k| admittance[k] * v[k]).sum::<f64>() / total;
        for i in 0..n {
            let p = &config.ports[i];
            let slope = (v[i] - p.turns_ratio * link) / p.leakage_inductance;
            state[i] += slope * dt;
            values[i].push(state[i]);
        }
    }
    PiecewiseCurrents { knots, values }
}

/// The zero-mean periodic solution: integrate one period from rest and
/// remove each current's average.
pub fn steady_state_oracle(op: &OperatingPoint<'_>) -> PiecewiseCurrents {
    let timeline = build_timeline(op);
    let mut currents = integrate_currents(op, &vec![0.0; op.num_ports()], &timeline);
    for i in 0..op.num_ports() {
        let mean = currents.mean(i);
        for x in &mut currents.values[i] {
            *x -= mean;
        }
    }
    currents
}

/// Largest `|closed form - oracle| / K_i` over all ports, breakpoints and
/// segment midpoints.
pub fn compare_closed_form(op: &OperatingPoint<'_>) -> f64 {
    compare_with(op, |i, t| op.inductor_current(i, t).expect("port in range"))
}

/// As [`compare_closed_form`] for an arbitrary current evaluator.
pub fn compare_with<F: Fn(usize, f64) -> f64>(op: &OperatingPoint<'_>, current: F) -> f64 {
    let reference = steady_state_oracle(op);
    let scales = &op.derived().current_scales;
    let mut probes = Vec::with_capacity(2 * reference.knots.len());
    for w in reference.knots.windows(2) {
        probes.push(w[0]);
        probes.push(0.5 * (w[0] + w[1]));
    }
    let mut worst = 0.0f64;
    for (i, k) in scales.iter().enumerate() {
        for &t in &probes {
            let err = (current(i, t) - reference.eval(i, t)).abs() / k;
            worst = worst.max(err);
        }
    }
    worst
}
