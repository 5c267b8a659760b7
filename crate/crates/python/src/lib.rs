//! Python bindings: the model, the two passes of a single replicate, the
//! parallel replicate driver and the comparison-process phase scan.

use std::path::PathBuf;

use hawkes_cftp as hc;
use hc::stats::{write_summaries_csv, ReplicateSummary};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: hc::Error) -> PyErr {
    match e {
        hc::Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn report_to_py<'py>(py: Python<'py>, value: &hc::StatsReport) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn run_in_pool<T: Send>(py: Python<'_>, workers: Option<usize>, job: impl FnOnce() -> T + Send) -> PyResult<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(PyValueError::new_err("invalid value for `workers`: must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| PyOSError::new_err(e.to_string()))?;
    Ok(py.detach(|| pool.install(job)))
}

/// Network on the integer lattice with hyperbolic rate and power-law kernel.
#[pyclass(frozen, module = "pyhawkes")]
struct Model {
    params: hc::ModelParams,
    config: hc::NetworkConfig,
}

#[pymethods]
impl Model {
    #[new]
    #[pyo3(signature = (beta_min = 2.0, beta_max = 3.0, w = 1.0, lambda_ = 2.0, range = 1))]
    fn new(beta_min: f64, beta_max: f64, w: f64, lambda_: f64, range: u32) -> PyResult<Self> {
        let params = hc::ModelParams {
            beta_min,
            beta_max,
            w,
            lambda: lambda_,
            range,
        };
        let config = params.build().map_err(py_err)?;
        Ok(Self { params, config })
    }

    /// Builds a model from the JSON config schema (`beta_min`, `beta_max`,
    /// `W`, `lambda`, `range`).
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let params = hc::ModelParams::from_json(text).map_err(py_err)?;
        let config = params.build().map_err(py_err)?;
        Ok(Self { params, config })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.params).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn beta_min(&self) -> f64 {
        self.params.beta_min
    }

    #[getter]
    fn beta_max(&self) -> f64 {
        self.params.beta_max
    }

    #[getter]
    fn w(&self) -> f64 {
        self.params.w
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.params.lambda
    }

    #[getter]
    fn range(&self) -> u32 {
        self.params.range
    }

    #[getter]
    fn delta(&self) -> PyResult<f64> {
        hc::delta_of(self.params.beta_min, self.params.beta_max).map_err(py_err)
    }

    /// Firing rate at potential `x >= 0`.
    fn rate(&self, x: f64) -> PyResult<f64> {
        self.config.rate.eval(x).map_err(py_err)
    }

    /// Kernel value after `elapsed >= 0` time units.
    fn kernel(&self, elapsed: f64) -> PyResult<f64> {
        self.config.kernel.eval(elapsed).map_err(py_err)
    }

    /// Potential at time `t` from presynaptic spikes at `times`, all of which
    /// must lie strictly before `t`.
    fn potential(&self, times: Vec<f64>, t: f64) -> PyResult<f64> {
        hc::potential_at(&times, t, &self.config.kernel).map_err(py_err)
    }

    fn acceptance_probability(&self, x: f64) -> PyResult<f64> {
        hc::acceptance_probability(x, &self.config.rate).map_err(py_err)
    }

    fn neighbors(&self, i: i64) -> Vec<i64> {
        self.config.neighbors(i)
    }

    fn __repr__(&self) -> String {
        let p = &self.params;
        format!(
            "Model(beta_min={}, beta_max={}, w={}, lambda_={}, range={})",
            p.beta_min, p.beta_max, p.w, p.lambda, p.range
        )
    }
}

/// Atoms of a backward pass, in generation order (decreasing time).
#[pyclass(frozen, module = "pyhawkes")]
struct Backward {
    result: hc::BackwardResult,
    config: hc::NetworkConfig,
    target: i64,
}

#[pymethods]
impl Backward {
    /// `"terminated"` or `"budget_exhausted"`.
    #[getter]
    fn status(&self) -> &'static str {
        self.result.status.as_str()
    }

    #[getter]
    fn terminated(&self) -> bool {
        self.result.terminated()
    }

    #[getter]
    fn n_stop(&self) -> Option<u64> {
        self.result.n_stop
    }

    #[getter]
    fn t_stop(&self) -> f64 {
        self.result.t_stop
    }

    #[getter]
    fn touched(&self) -> Vec<i64> {
        self.result.touched.clone()
    }

    /// `(index, neuron, time, mark, sure)` per atom.
    #[getter]
    fn jumps(&self) -> Vec<(u64, i64, f64, f64, bool)> {
        self.result
            .jumps
            .iter()
            .map(|j| (j.index, j.neuron, j.time, j.mark, j.resolution == hc::Resolution::Sure))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.result.jumps.len()
    }

    /// Resolves every candidate chronologically; fails if the backward pass
    /// did not terminate.
    fn forward(&self) -> PyResult<Forward> {
        if !self.result.terminated() {
            return Err(PyValueError::new_err("backward pass exhausted its budget; nothing to resolve"));
        }
        let result = hc::forward_run(&self.result.chronological(), &self.config, self.target).map_err(py_err)?;
        Ok(Forward { result })
    }
}

#[pyclass(frozen, module = "pyhawkes")]
struct Forward {
    result: hc::ForwardResult,
}

#[pymethods]
impl Forward {
    #[getter]
    fn final_potential(&self) -> f64 {
        self.result.final_potential
    }

    #[getter]
    fn presyn_count(&self) -> usize {
        self.result.presyn_count
    }

    #[getter]
    fn presyn_times(&self) -> Vec<f64> {
        self.result.presyn_times.clone()
    }

    /// `(index, neuron, time, potential, resolution)` per atom, chronological.
    #[getter]
    fn resolved(&self) -> Vec<(u64, i64, f64, f64, &'static str)> {
        self.result
            .resolved
            .iter()
            .map(|r| (r.index, r.neuron, r.time, r.potential, r.resolution.as_str()))
            .collect()
    }
}

#[pyfunction]
#[pyo3(signature = (model, seed, budget = hc::backward::DEFAULT_BUDGET, target = 0))]
fn backward_run(py: Python<'_>, model: &Model, seed: u64, budget: u64, target: i64) -> PyResult<Backward> {
    let config = model.config.clone();
    let result = py.detach(|| hc::backward_run(&config, target, seed, budget)).map_err(py_err)?;
    Ok(Backward { result, config, target })
}

/// Replicate summaries plus aggregate statistics.
#[pyclass(frozen, module = "pyhawkes")]
struct Simulation {
    summaries: Vec<ReplicateSummary>,
    report: Option<hc::StatsReport>,
}

#[pymethods]
impl Simulation {
    /// Aggregate statistics as a dict, or `None` if no replicate terminated.
    #[getter]
    fn report<'py>(&self, py: Python<'py>) -> PyResult<Option<Bound<'py, PyAny>>> {
        self.report.as_ref().map(|r| report_to_py(py, r)).transpose()
    }

    #[getter]
    fn zero_probability(&self) -> PyResult<(f64, f64)> {
        let e = hc::zero_probability(&self.summaries).map_err(py_err)?;
        Ok((e.estimate, e.stderr))
    }

    #[getter]
    fn presyn_pmf(&self) -> PyResult<Vec<f64>> {
        hc::presyn_pmf(&self.summaries).map_err(py_err)
    }

    /// Final potentials, `None` for budget-exhausted replicates.
    #[getter]
    fn final_potentials(&self) -> Vec<Option<f64>> {
        self.summaries.iter().map(|s| s.final_potential).collect()
    }

    #[getter]
    fn presyn_counts(&self) -> Vec<Option<usize>> {
        self.summaries.iter().map(|s| s.presyn_count).collect()
    }

    #[getter]
    fn backward_steps(&self) -> Vec<u64> {
        self.summaries.iter().map(|s| s.n_steps_backward).collect()
    }

    /// Column-wise copy of the per-replicate summaries.
    fn columns<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        let s = &self.summaries;
        d.set_item("seed_index", s.iter().map(|r| r.seed_index).collect::<Vec<_>>())?;
        d.set_item("final_potential", self.final_potentials())?;
        d.set_item("presyn_count", self.presyn_counts())?;
        d.set_item("n_steps_backward", self.backward_steps())?;
        d.set_item("backward_status", s.iter().map(|r| r.backward_status.as_str()).collect::<Vec<_>>())?;
        d.set_item("firing_rate", s.iter().map(|r| r.firing_rate).collect::<Vec<_>>())?;
        Ok(d)
    }

    /// Writes `summaries.csv` and, when available, `histograms.csv` into
    /// `out_dir`, in the same format as the command-line tool.
    fn write(&self, out_dir: PathBuf) -> PyResult<()> {
        let open = |name: &str| -> PyResult<std::io::BufWriter<std::fs::File>> {
            let file = std::fs::File::create(out_dir.join(name)).map_err(|e| PyOSError::new_err(e.to_string()))?;
            Ok(std::io::BufWriter::new(file))
        };
        std::fs::create_dir_all(&out_dir).map_err(|e| PyOSError::new_err(e.to_string()))?;
        write_summaries_csv(&self.summaries, open("summaries.csv")?).map_err(py_err)?;
        if let Some(report) = &self.report {
            report.write_histograms_csv(open("histograms.csv")?).map_err(py_err)?;
        }
        Ok(())
    }

    fn __len__(&self) -> usize {
        self.summaries.len()
    }
}

/// Runs `replicates` independent perfect samples of the potential of neuron
/// 0. Replicate `k` uses stream `k` of `seed`, so results do not depend on
/// `workers`.
#[pyfunction]
#[pyo3(signature = (model, replicates, seed, budget = hc::backward::DEFAULT_BUDGET, workers = None))]
fn simulate(
    py: Python<'_>,
    model: &Model,
    replicates: u64,
    seed: u64,
    budget: u64,
    workers: Option<usize>,
) -> PyResult<Simulation> {
    let config = &model.config;
    let summaries =
        run_in_pool(py, workers, || hc::run_replicates(config, replicates, seed, budget))?.map_err(py_err)?;
    let report = if summaries.iter().any(|s| s.terminated()) {
        Some(hc::StatsReport::from_summaries(&summaries, config).map_err(py_err)?)
    } else {
        None
    };
    Ok(Simulation { summaries, report })
}

#[pyfunction]
fn delta_of(beta_min: f64, beta_max: f64) -> PyResult<f64> {
    hc::delta_of(beta_min, beta_max).map_err(py_err)
}

fn estimate_dict<'py>(py: Python<'py>, e: &hc::phase::ExtinctionEstimate) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("delta", e.delta)?;
    d.set_item("replicates", e.replicates)?;
    d.set_item("estimate", e.estimate)?;
    d.set_item("stderr", e.standard_error)?;
    d.set_item("mean_extinction_time", e.mean_extinction_time)?;
    d.set_item("censored_fraction", e.censored_fraction)?;
    Ok(d)
}

fn branching(delta: f64, replicates: u64, horizon: f64, cap: u64) -> hc::BranchingConfig {
    hc::BranchingConfig {
        replicates,
        horizon,
        cap,
        ..hc::BranchingConfig::new(delta)
    }
}

/// Extinction probability of the birth–death comparison process started
/// from one individual.
#[pyfunction]
#[pyo3(signature = (delta, replicates = 100_000, seed = 0, horizon = 1e3, cap = 1_000_000, workers = None))]
fn extinction_probability<'py>(
    py: Python<'py>,
    delta: f64,
    replicates: u64,
    seed: u64,
    horizon: f64,
    cap: u64,
    workers: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let config = branching(delta, replicates, horizon, cap);
    let est = run_in_pool(py, workers, || hc::extinction_probability(&config, seed))?.map_err(py_err)?;
    estimate_dict(py, &est)
}

/// `extinction_probability` over a grid of deltas, sorted ascending.
#[pyfunction]
#[pyo3(signature = (grid, replicates = 100_000, seed = 0, horizon = 1e3, cap = 1_000_000, workers = None))]
fn delta_scan<'py>(
    py: Python<'py>,
    grid: Vec<f64>,
    replicates: u64,
    seed: u64,
    horizon: f64,
    cap: u64,
    workers: Option<usize>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let template = branching(1.0, replicates, horizon, cap);
    let report = run_in_pool(py, workers, || hc::delta_scan(&grid, &template, seed))?.map_err(py_err)?;
    report.rows.iter().map(|r| estimate_dict(py, r)).collect()
}

#[pymodule]
pub fn pyhawkes(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_class::<Backward>()?;
    m.add_class::<Forward>()?;
    m.add_class::<Simulation>()?;
    m.add_function(wrap_pyfunction!(backward_run, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(delta_of, m)?)?;
    m.add_function(wrap_pyfunction!(extinction_probability, m)?)?;
    m.add_function(wrap_pyfunction!(delta_scan, m)?)?;
    Ok(())
}
