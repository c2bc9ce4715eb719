//! Python bindings. Port indices are 0-based, as in the Rust API; the `port`
//! field of a report is the 1-based port number.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mab_core::analysis;
use mab_core::oracle::compare_closed_form;
use mab_core::verify::run_campaign;
use mab_core::zvs::online_duty_ratios as online_rule;
use mab_core::{
    ConverterConfig, LoadModel, MabError, Modulation, OperatingPoint, PhaseShiftSet, PortSpec, SteadyStateReport,
};

fn to_py(e: MabError) -> PyErr {
    if e.is_runtime() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn parse_mode(mode: Option<&str>) -> PyResult<Option<Modulation>> {
    match mode {
        None => Ok(None),
        Some("sps") => Ok(Some(Modulation::Sps)),
        Some("zvs") => Ok(Some(Modulation::Zvs)),
        Some(other) => Err(PyValueError::new_err(format!(
            "mode must be 'sps' or 'zvs', got {other:?}"
        ))),
    }
}

#[pyclass(name = "PortReport", frozen, get_all, from_py_object)]
#[derive(Clone)]
struct PyPortReport {
    port: usize,
    current_at_t1: f64,
    current_at_t2: f64,
    zvs_status: String,
    rms_current: f64,
    dc_power: f64,
}

#[pymethods]
impl PyPortReport {
    fn __repr__(&self) -> String {
        format!(
            "PortReport(port={}, zvs_status={}, i_t1={:.4}, i_t2={:.4}, rms={:.4}, power={:.2})",
            self.port, self.zvs_status, self.current_at_t1, self.current_at_t2, self.rms_current, self.dc_power
        )
    }
}

#[pyclass(name = "SteadyReport", frozen, get_all)]
struct PySteadyReport {
    ports: Vec<PyPortReport>,
    outer: Vec<f64>,
    inner: Vec<f64>,
    total_rms: f64,
    sum_squared_rms: f64,
    hard_switching_current: f64,
    power_imbalance: f64,
    text: String,
}

impl From<&SteadyStateReport> for PySteadyReport {
    fn from(r: &SteadyStateReport) -> Self {
        PySteadyReport {
            ports: r
                .ports
                .iter()
                .map(|p| PyPortReport {
                    port: p.port,
                    current_at_t1: p.current_at_t1,
                    current_at_t2: p.current_at_t2,
                    zvs_status: p.zvs_status.to_string(),
                    rms_current: p.rms_current,
                    dc_power: p.dc_power,
                })
                .collect(),
            outer: r.shifts.outer.clone(),
            inner: r.shifts.inner.clone(),
            total_rms: r.total_rms,
            sum_squared_rms: r.sum_squared_rms,
            hard_switching_current: r.hard_switching_current,
            power_imbalance: r.power_imbalance,
            text: r.to_string(),
        }
    }
}

#[pymethods]
impl PySteadyReport {
    fn statuses(&self) -> Vec<String> {
        self.ports.iter().map(|p| p.zvs_status.clone()).collect()
    }

    fn __str__(&self) -> String {
        self.text.clone()
    }
}

/// Converter with a stiff source on port 0 and idle loads elsewhere.
#[pyclass(name = "Converter", frozen)]
struct PyConverter {
    config: ConverterConfig,
}

impl PyConverter {
    fn point(&self, outer: Vec<f64>, inner: Vec<f64>) -> PyResult<OperatingPoint<'_>> {
        let shifts = PhaseShiftSet::new(outer, inner).map_err(to_py)?;
        if shifts.len() != self.config.num_ports() {
            return Err(to_py(MabError::LengthMismatch {
                expected: self.config.num_ports(),
                found: shifts.len(),
            }));
        }
        OperatingPoint::at_setpoints(&self.config, shifts).map_err(to_py)
    }
}

#[pymethods]
impl PyConverter {
    #[new]
    #[pyo3(signature = (voltages, turns_ratios, inductances, switching_frequency = 50e3))]
    fn new(
        voltages: Vec<f64>,
        turns_ratios: Vec<f64>,
        inductances: Vec<f64>,
        switching_frequency: f64,
    ) -> PyResult<Self> {
        let n = voltages.len();
        for len in [turns_ratios.len(), inductances.len()] {
            if len != n {
                return Err(to_py(MabError::LengthMismatch {
                    expected: n,
                    found: len,
                }));
            }
        }
        let ports = (0..n)
            .map(|i| PortSpec {
                index: i + 1,
                dc_voltage: voltages[i],
                turns_ratio: turns_ratios[i],
                leakage_inductance: inductances[i],
                dc_capacitance: 0.0,
                load: if i == 0 {
                    LoadModel::VoltageSource(voltages[0])
                } else {
                    LoadModel::ConstantPower(0.0)
                },
            })
            .collect();
        let config = ConverterConfig::new(ports, switching_frequency).map_err(to_py)?;
        Ok(PyConverter { config })
    }

    #[getter]
    fn num_ports(&self) -> usize {
        self.config.num_ports()
    }

    #[getter]
    fn half_period(&self) -> f64 {
        self.config.half_period
    }

    /// Conversion ratios, inductor coefficients and current scales.
    fn derived<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = mab_core::model::derive_params(&self.config, &self.config.setpoints()).map_err(to_py)?;
        let out = PyDict::new(py);
        out.set_item("ratios", d.ratios)?;
        out.set_item("coefficients", d.coefficients)?;
        out.set_item("current_scales", d.current_scales)?;
        Ok(out)
    }

    /// Inner shifts from the online full-ZVS rule at the nominal voltages.
    fn online_inner(&self) -> PyResult<Vec<f64>> {
        online_rule(&self.config.setpoints(), &self.config.turns_ratios())
            .map(|s| s.inner_ratios)
            .map_err(to_py)
    }

    #[pyo3(signature = (outer, inner, eps_current = 0.0))]
    fn report(&self, outer: Vec<f64>, inner: Vec<f64>, eps_current: f64) -> PyResult<PySteadyReport> {
        let r = self.point(outer, inner)?.report(eps_current).map_err(to_py)?;
        Ok(PySteadyReport::from(&r))
    }

    fn inductor_current(&self, port: usize, t: f64, outer: Vec<f64>, inner: Vec<f64>) -> PyResult<f64> {
        self.point(outer, inner)?.inductor_current(port, t).map_err(to_py)
    }

    /// Largest closed-form vs oracle current difference, in units of `K_i`.
    fn oracle_error(&self, outer: Vec<f64>, inner: Vec<f64>) -> PyResult<f64> {
        Ok(compare_closed_form(&self.point(outer, inner)?))
    }

    #[pyo3(signature = (outer, inner, points_per_period = 200, periods = 1))]
    fn waveforms<'py>(
        &self,
        py: Python<'py>,
        outer: Vec<f64>,
        inner: Vec<f64>,
        points_per_period: usize,
        periods: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let w = self
            .point(outer, inner)?
            .sample_waveforms(points_per_period, periods)
            .map_err(to_py)?;
        let out = PyDict::new(py);
        out.set_item("time", w.time)?;
        out.set_item("bridge_voltages", w.bridge_voltages)?;
        out.set_item("currents", w.currents)?;
        out.set_item("link_voltage", w.link_voltage)?;
        Ok(out)
    }
}

#[pyclass(name = "Scenario")]
struct PyScenario {
    inner: mab_core::Scenario,
}

impl PyScenario {
    fn with_mode(&self, mode: Option<&str>) -> PyResult<mab_core::Scenario> {
        Ok(match parse_mode(mode)? {
            Some(m) => self.inner.with_mode(m),
            None => self.inner.clone(),
        })
    }
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyScenario {
            inner: mab_core::Scenario::load(&path).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyScenario {
            inner: mab_core::Scenario::parse(text).map_err(to_py)?,
        })
    }

    #[getter]
    fn mode(&self) -> String {
        match self.inner.options.mode {
            Modulation::Sps => "sps".into(),
            Modulation::Zvs => "zvs".into(),
        }
    }

    fn set_load(&mut self, port: usize, value: f64) -> PyResult<()> {
        self.inner.set_load(port, value).map_err(to_py)
    }

    /// Report at the controller-converged operating point.
    #[pyo3(signature = (mode = None))]
    fn steady(&self, py: Python<'_>, mode: Option<&str>) -> PyResult<PySteadyReport> {
        let s = self.with_mode(mode)?;
        let a = py.detach(|| analysis::steady(&s)).map_err(to_py)?;
        Ok(PySteadyReport::from(&a.report))
    }

    fn compare<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = self.inner.clone();
        let c = py.detach(|| analysis::compare(&s)).map_err(to_py)?;
        let out = PyDict::new(py);
        out.set_item("sps", PySteadyReport::from(&c.sps.report))?;
        out.set_item("zvs", PySteadyReport::from(&c.zvs.report))?;
        out.set_item("rms_ratio", c.rms_ratio)?;
        out.set_item("total_rms_ratio", c.total_rms_ratio)?;
        Ok(out)
    }

    #[pyo3(signature = (mode = None))]
    fn dynamic<'py>(&self, py: Python<'py>, mode: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
        let s = self.with_mode(mode)?;
        let r = py.detach(|| analysis::dynamic(&s)).map_err(to_py)?;
        let out = PyDict::new(py);
        out.set_item("time", r.time)?;
        out.set_item("voltages", r.voltages)?;
        out.set_item("powers", r.powers)?;
        out.set_item("outer", r.outer)?;
        out.set_item("inner", r.inner)?;
        let statuses: Vec<Vec<String>> = r
            .statuses
            .iter()
            .map(|row| row.iter().map(|s| s.to_string()).collect())
            .collect();
        out.set_item("statuses", statuses)?;
        out.set_item(
            "settling_times",
            r.events.iter().map(|e| e.settling_time).collect::<Vec<_>>(),
        )?;
        out.set_item(
            "max_voltage_deviation",
            r.events
                .iter()
                .map(|e| e.max_voltage_deviation.clone())
                .collect::<Vec<_>>(),
        )?;
        Ok(out)
    }

    fn sweep<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let s = self.inner.clone();
        let rows = py.detach(|| analysis::sweep(&s)).map_err(to_py)?;
        rows.into_iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("port", r.port)?;
                d.set_item("load", r.load)?;
                d.set_item("mode", r.mode.to_string())?;
                d.set_item("total_rms", r.total_rms)?;
                d.set_item("sum_squared_rms", r.sum_squared_rms)?;
                d.set_item("hard_switching_current", r.hard_switching_current)?;
                d.set_item("statuses", r.statuses.iter().map(|s| s.to_string()).collect::<Vec<_>>())?;
                Ok(d)
            })
            .collect()
    }
}

/// Online full-ZVS inner shifts for the given bus voltages and turns ratios.
#[pyfunction]
fn online_duty_ratios(voltages: Vec<f64>, turns_ratios: Vec<f64>) -> PyResult<Vec<f64>> {
    online_rule(&voltages, &turns_ratios)
        .map(|s| s.inner_ratios)
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (seed = 0, draws = 1000, min_ports = 2, max_ports = 6))]
fn verify<'py>(
    py: Python<'py>,
    seed: u64,
    draws: usize,
    min_ports: usize,
    max_ports: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let r = py
        .detach(|| run_campaign(seed, draws, (min_ports, max_ports), None))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("passed", r.passed())?;
    out.set_item("draws", r.draws)?;
    out.set_item("max_oracle_error", r.worst.oracle)?;
    out.set_item("max_edge_error", r.worst.edge)?;
    out.set_item("max_identity_error", r.worst.identity)?;
    out.set_item("max_zvs_residual", r.worst.zvs_residual)?;
    Ok(out)
}

#[pymodule]
pub fn mabpy(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConverter>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PySteadyReport>()?;
    m.add_class::<PyPortReport>()?;
    m.add_function(wrap_pyfunction!(online_duty_ratios, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
