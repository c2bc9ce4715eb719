//! Full-ZVS inner phase shifts.
//!
//! The load-independent part of each port's edge current is the full-ZVS
//! term `T_i`. Since `sum_i l_i T_i = 0` for any inner shifts, no port can
//! have `T_i < 0` without another having `T_i > 0`; full ZVS therefore needs
//! every `T_i = 0`. The solutions form the one-parameter family
//! `D_i = 1 - lambda / M_i` with `lambda` in `(0, min M]`, and the online rule
//! picks `lambda = min M`, which gives the smallest inner shifts.

use crate::error::{MabError, Result};
use crate::model::{ratios_from, DerivedParams};

#[derive(Debug, Clone, PartialEq)]
pub struct ZvsSolution {
    pub inner_ratios: Vec<f64>,
    pub lambda: f64,
    /// 0-based index of the (first) port with the smallest conversion ratio.
    pub min_ratio_port: usize,
    /// Largest absolute row residual of the full-ZVS system. Only filled in
    /// when inductor coefficients are known; zero otherwise.
    pub residual_norm: f64,
}

/// `T_i = sum_{k != i} l_k M_k (1 - D_k) - (1 - l_i) M_i (1 - D_i)`.
pub fn full_zvs_term(derived: &DerivedParams, inner: &[f64], i: usize) -> f64 {
    let m = &derived.ratios;
    let l = &derived.coefficients;
    let others: f64 = (0..m.len())
        .filter(|&k| k != i)
        .map(|k| l[k] * m[k] * (1.0 - inner[k]))
        .sum();
    others - (1.0 - l[i]) * m[i] * (1.0 - inner[i])
}

pub fn full_zvs_terms(derived: &DerivedParams, inner: &[f64]) -> Vec<f64> {
    (0..derived.num_ports())
        .map(|i| full_zvs_term(derived, inner, i))
        .collect()
}

/// Row residuals `A D - b` of the full-ZVS linear system, with
/// `A_ii = (1 - l_i) M_i`, `A_ik = -l_k M_k` and `b_i = M_i - sum_k l_k M_k`.
/// Each entry equals `T_i`.
pub fn zvs_system_residual(derived: &DerivedParams, inner: &[f64]) -> Vec<f64> {
    let m = &derived.ratios;
    let l = &derived.coefficients;
    let n = m.len();
    let weighted = derived.weighted_ratio();
    (0..n)
        .map(|i| {
            let row: f64 = (0..n)
                .map(|k| {
                    let a = if k == i { (1.0 - l[i]) * m[i] } else { -l[k] * m[k] };
                    a * inner[k]
                })
                .sum();
            row - (m[i] - weighted)
        })
        .collect()
}

fn argmin(values: &[f64]) -> usize {
    // lowest index wins ties
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// `D_i = 1 - lambda / M_i` for `0 < lambda <= min M`.
pub fn general_solution(ratios: &[f64], lambda: f64) -> Result<ZvsSolution> {
    if ratios.is_empty() {
        return Err(MabError::TooFewPorts(0));
    }
    if let Some(i) = ratios.iter().position(|m| !(*m > 0.0 && m.is_finite())) {
        return Err(MabError::InvalidArgument(format!(
            "conversion ratio of port {} must be positive",
            i + 1
        )));
    }
    let j = argmin(ratios);
    let max = ratios[j];
    if !(lambda > 0.0 && lambda <= max) {
        return Err(MabError::LambdaOutOfRange { lambda, max });
    }
    Ok(ZvsSolution {
        inner_ratios: ratios.iter().map(|m| 1.0 - lambda / m).collect(),
        lambda,
        min_ratio_port: j,
        residual_norm: 0.0,
    })
}

/// Online rule: ratios from the sampled bus voltages, `lambda = min M`.
pub fn online_duty_ratios(live_voltages: &[f64], turns_ratios: &[f64]) -> Result<ZvsSolution> {
    let m = ratios_from(live_voltages, turns_ratios)?;
    let lambda = m[argmin(&m)];
    general_solution(&m, lambda)
}

/// As [`online_duty_ratios`] with the residual of the full-ZVS system filled in.
pub fn online_solution(derived: &DerivedParams) -> Result<ZvsSolution> {
    let lambda = derived.ratios[argmin(&derived.ratios)];
    let mut sol = general_solution(&derived.ratios, lambda)?;
    sol.residual_norm = zvs_system_residual(derived, &sol.inner_ratios)
        .into_iter()
        .fold(0.0, |acc, r| acc.max(r.abs()));
    Ok(sol)
}

/// Single phase-shift baseline: no inner shift anywhere.
pub fn sps_duty_ratios(ports: usize) -> Result<Vec<f64>> {
    if ports < 2 {
        return Err(MabError::TooFewPorts(ports));
    }
    Ok(vec![0.0; ports])
}
