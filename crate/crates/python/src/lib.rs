//! Python bindings for the `collapse_timing` simulator.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use collapse_timing::analysis;
use collapse_timing::config;
use collapse_timing::experiment;
use collapse_timing::io;
use collapse_timing::propagator::{self, ComponentWeights, DetectorSpec};
use collapse_timing::reduction::{self, ReductionRule, RuleKind, TrialInputs, TrialRecord};
use collapse_timing::state::{self, EnergyMoments, PacketSpec, PARTICLE_MASS};
use collapse_timing::Error;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io { .. } => PyOSError::new_err(err.to_string()),
        e if e.exit_code() == 2 => PyRuntimeError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

#[pyclass(name = "Grid", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGrid(state::Grid1D);

#[pymethods]
impl PyGrid {
    #[new]
    fn new(n_points: usize, length: f64, origin: f64) -> PyResult<Self> {
        state::build_grid(n_points, length, origin).map(Self).map_err(to_py)
    }

    #[getter]
    fn n_points(&self) -> usize {
        self.0.n_points()
    }

    #[getter]
    fn length(&self) -> f64 {
        self.0.length()
    }

    #[getter]
    fn origin(&self) -> f64 {
        self.0.origin()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.0.spacing()
    }

    fn coordinates(&self) -> Vec<f64> {
        self.0.coordinates().collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Grid(n_points={}, length={}, origin={})",
            self.0.n_points(),
            self.0.length(),
            self.0.origin()
        )
    }
}

#[pyclass(name = "WaveFunction", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyWaveFunction(state::WaveFunction);

#[pymethods]
impl PyWaveFunction {
    #[getter]
    fn time(&self) -> f64 {
        self.0.time()
    }

    fn norm_sqr(&self) -> f64 {
        self.0.norm_sqr()
    }

    fn density(&self) -> Vec<f64> {
        self.0.density()
    }

    fn mean_position(&self) -> PyResult<f64> {
        self.0.mean_position().map_err(to_py)
    }

    fn position_spread(&self) -> PyResult<f64> {
        self.0.position_spread().map_err(to_py)
    }

    fn superpose(&self, other: &PyWaveFunction) -> PyResult<Self> {
        state::superpose(&self.0, &other.0).map(Self).map_err(to_py)
    }

    fn normalized(&self) -> PyResult<Self> {
        self.0.normalized_to(1.0).map(Self).map_err(to_py)
    }
}

#[pyfunction]
#[pyo3(signature = (grid, center, width, momentum, weight = 1.0))]
fn gaussian_packet(grid: &PyGrid, center: f64, width: f64, momentum: f64, weight: f64) -> PyResult<PyWaveFunction> {
    let spec = PacketSpec::new(center, width, momentum).with_weight(weight);
    state::gaussian_packet(&grid.0, &spec).map(PyWaveFunction).map_err(to_py)
}

/// (mean energy, energy spread) of a state.
#[pyfunction]
fn energy_moments(psi: &PyWaveFunction) -> PyResult<(f64, f64)> {
    let m = state::energy_moments(&psi.0, PARTICLE_MASS).map_err(to_py)?;
    Ok((m.mean_energy, m.energy_spread))
}

#[pyclass(name = "Weights", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyWeights(ComponentWeights);

#[pymethods]
impl PyWeights {
    #[new]
    fn new(times: Vec<f64>, p_no_capture: Vec<f64>, p_capture: Vec<f64>, current: Vec<f64>) -> PyResult<Self> {
        ComponentWeights::new(times, p_no_capture, p_capture, current)
            .map(Self)
            .map_err(to_py)
    }

    #[staticmethod]
    fn from_csv(path: PathBuf) -> PyResult<Self> {
        io::read_weights_csv(&path).map(Self).map_err(to_py)
    }

    fn to_csv(&self) -> String {
        io::weights_csv(&self.0)
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.0.times.clone()
    }

    #[getter]
    fn p_no_capture(&self) -> Vec<f64> {
        self.0.p_no_capture.clone()
    }

    #[getter]
    fn p_capture(&self) -> Vec<f64> {
        self.0.p_capture.clone()
    }

    #[getter]
    fn current(&self) -> Vec<f64> {
        self.0.current.clone()
    }

    fn final_capture(&self) -> f64 {
        self.0.final_capture()
    }

    fn peak_current(&self) -> f64 {
        self.0.peak_current()
    }

    fn integrated_current(&self) -> Vec<f64> {
        self.0.integrated_current()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Evolve `psi` with a cos² detector and return the sampled weights.
#[pyfunction]
#[pyo3(signature = (psi, detector_center, half_width, strength, t_final, dt, sample_every = 1))]
#[allow(clippy::too_many_arguments)]
fn run_evolution(
    py: Python<'_>,
    psi: &PyWaveFunction,
    detector_center: f64,
    half_width: f64,
    strength: f64,
    t_final: f64,
    dt: f64,
    sample_every: usize,
) -> PyResult<(PyWeights, PyWaveFunction)> {
    let detector = DetectorSpec::new(detector_center, half_width, strength);
    let psi = psi.0.clone();
    let run = py
        .detach(|| propagator::run_evolution(&psi, &detector, t_final, dt, sample_every))
        .map_err(to_py)?;
    Ok((PyWeights(run.weights), PyWaveFunction(run.final_state)))
}

fn parse(text: &str) -> PyResult<config::RunConfig> {
    config::parse_config(text).map_err(to_py)
}

/// Validate a config; returns it re-serialised with defaults filled in.
#[pyfunction]
fn parse_config(text: &str) -> PyResult<String> {
    parse(text).map(|c| c.to_config_string())
}

#[pyfunction]
fn calibrate<'py>(py: Python<'py>, config_text: &str) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = parse(config_text)?;
    cfg.calibration.enabled = true;
    let c = py
        .detach(|| experiment::calibrate(&cfg))
        .map_err(to_py)?
        .expect("calibration enabled");
    let d = PyDict::new(py);
    d.set_item("strength", c.strength)?;
    d.set_item("achieved_capture", c.achieved_capture)?;
    d.set_item("iterations", c.iterations)?;
    d.set_item("bracket", c.bracket)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (weights, threshold_ratio = reduction::ZERO_CURRENT_RATIO))]
fn zero_current_window<'py>(py: Python<'py>, weights: &PyWeights, threshold_ratio: f64) -> PyResult<Bound<'py, PyDict>> {
    let w = analysis::detect_zero_current_window(&weights.0, threshold_ratio);
    let d = PyDict::new(py);
    d.set_item("exists", w.exists)?;
    d.set_item("window_start", w.window_start)?;
    d.set_item("window_end", w.window_end)?;
    d.set_item("peak_current", w.peak_current)?;
    d.set_item("window_max_current", w.window_max_current)?;
    Ok(d)
}

#[pyfunction]
fn ks_distance(samples: Vec<f64>, weights: &PyWeights) -> PyResult<f64> {
    analysis::ks_distance(&samples, &weights.0).map_err(to_py)
}

fn record_dict<'py>(py: Python<'py>, r: &TrialRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("seed", r.seed)?;
    d.set_item("rule", r.rule.as_str())?;
    d.set_item("collapse_time", r.collapse_time)?;
    d.set_item("chosen", r.chosen.as_str())?;
    d.set_item("p_capture_at_collapse", r.p_capture_at_collapse)?;
    d.set_item("current_at_collapse", r.current_at_collapse)?;
    d.set_item("flags", r.flags.names())?;
    Ok(d)
}

/// Reduction trials seeded `base_seed + i` on a weights record.
#[pyfunction]
#[pyo3(signature = (weights, rule, n_trials, base_seed = 0, tau_env = reduction::DEFAULT_TAU_ENV, energy_spread = None))]
fn run_trials<'py>(
    py: Python<'py>,
    weights: &PyWeights,
    rule: &str,
    n_trials: usize,
    base_seed: u64,
    tau_env: f64,
    energy_spread: Option<f64>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let rule = match rule.parse::<RuleKind>().map_err(to_py)? {
        RuleKind::PenroseEnv => ReductionRule::penrose_env(tau_env),
        RuleKind::PenroseSpread => ReductionRule::penrose_spread(),
        RuleKind::CurrentJump => ReductionRule::current_jump(),
    };
    let moments = energy_spread.map(|s| EnergyMoments {
        mean_energy: f64::NAN,
        energy_spread: s,
    });
    let window = analysis::detect_zero_current_window(&weights.0, reduction::ZERO_CURRENT_RATIO);
    let w = &weights.0;
    let records = py
        .detach(|| {
            TrialInputs {
                weights: w,
                rule: &rule,
                moments: moments.as_ref(),
                window: Some(&window),
            }
            .run_batch(base_seed, n_trials)
        })
        .map_err(to_py)?;
    records.iter().map(|r| record_dict(py, r)).collect()
}

/// Full pipeline into `out_dir`; returns the claim report as a list of dicts.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config_text: &str, out_dir: PathBuf) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = parse(config_text)?;
    let result = py.detach(|| experiment::run_pipeline(&cfg)).map_err(to_py)?;
    experiment::emit(&result, &out_dir, experiment::Emit::Everything).map_err(to_py)?;
    result
        .claims
        .claims
        .iter()
        .map(|c| {
            let d = PyDict::new(py);
            d.set_item("id", &c.id)?;
            d.set_item("statement", &c.statement)?;
            d.set_item("expected", c.expected)?;
            d.set_item("holds", c.holds)?;
            d.set_item("status", &c.status)?;
            d.set_item("measured", c.measured.clone())?;
            Ok(d)
        })
        .collect()
}

#[pymodule(name = "collapse_timing")]
mod module {
    #[pymodule_export]
    use super::{
        calibrate, energy_moments, gaussian_packet, ks_distance, parse_config, run_evolution, run_experiment,
        run_trials, zero_current_window, PyGrid, PyWaveFunction, PyWeights,
    };
}
