//! Python bindings for the marl-o2o lab.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use marl_o2o::env::{Env as CoreEnv, Observation};
use marl_o2o::exploration::{lambda_schedule_value, Schedule as CoreSchedule, ScheduleVariant};
use marl_o2o::harness::config::KEYS;
use marl_o2o::harness::phases;
use marl_o2o::harness::{evaluate, read_metrics, success_auc, MetricsRow, RunConfig as CoreConfig};
use marl_o2o::networks::{greedy_joint_action, QmixNet as CoreNet};
use marl_o2o::replay::Dataset as CoreDataset;
use marl_o2o::tensor::Tensor;
use marl_o2o::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Config(_) | Error::Shape(_) | Error::Usage(_) | Error::Contract(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn obs_dict<'py>(py: Python<'py>, o: &Observation) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("state", o.state.clone())?;
    d.set_item("obs", o.obs.clone())?;
    d.set_item("avail", o.avail.clone())?;
    Ok(d)
}

fn row_dict<'py>(py: Python<'py>, r: &MetricsRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("step", r.step)?;
    for name in &marl_o2o::harness::METRICS_COLUMNS[1..] {
        d.set_item(*name, r.column(name))?;
    }
    Ok(d)
}

/// Experiment configuration addressed by dotted keys.
#[pyclass(name = "RunConfig")]
#[derive(Clone)]
struct RunConfig {
    inner: CoreConfig,
}

#[pymethods]
impl RunConfig {
    #[new]
    #[pyo3(signature = (text = None))]
    fn new(text: Option<&str>) -> PyResult<Self> {
        let mut inner = CoreConfig::default();
        if let Some(t) = text {
            inner.apply_text(t).map_err(py_err)?;
        }
        Ok(Self { inner })
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.inner.set(key, value).map_err(py_err)
    }

    fn get(&self, key: &str) -> PyResult<String> {
        self.inner
            .get(key)
            .ok_or_else(|| PyValueError::new_err(format!("unknown key {key:?}")))
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(py_err)
    }

    #[staticmethod]
    fn keys() -> Vec<&'static str> {
        KEYS.iter().map(|(k, _)| *k).collect()
    }
}

/// One of the built-in cooperative tasks.
#[pyclass(name = "Env", unsendable)]
struct Env {
    inner: Box<dyn CoreEnv>,
}

#[pymethods]
impl Env {
    #[new]
    fn new(config: &RunConfig) -> PyResult<Self> {
        Ok(Self {
            inner: config.inner.env.build().map_err(py_err)?,
        })
    }

    #[getter]
    fn spec<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = self.inner.spec();
        let d = PyDict::new(py);
        d.set_item("n_agents", s.n_agents)?;
        d.set_item("state_dim", s.state_dim)?;
        d.set_item("obs_dim", s.obs_dim)?;
        d.set_item("action_dim", s.action_dim)?;
        d.set_item("horizon", s.horizon)?;
        d.set_item("gamma", s.gamma)?;
        Ok(d)
    }

    fn reset<'py>(&mut self, py: Python<'py>, seed: u64) -> PyResult<Bound<'py, PyDict>> {
        let o = self.inner.reset(seed);
        obs_dict(py, &o)
    }

    /// Returns `(observation, reward, terminated, truncated, success)`.
    fn step<'py>(
        &mut self,
        py: Python<'py>,
        actions: Vec<usize>,
    ) -> PyResult<(Bound<'py, PyDict>, f64, bool, bool, bool)> {
        let out = self.inner.step(&actions).map_err(py_err)?;
        Ok((obs_dict(py, &out.next)?, out.reward, out.terminated, out.truncated, out.success))
    }
}

/// Linear anneal with a floor clamp (or the literal `min` variant).
#[pyclass(name = "Schedule")]
struct Schedule {
    inner: CoreSchedule,
}

#[pymethods]
impl Schedule {
    #[new]
    #[pyo3(signature = (start, end, duration, variant = "clamped"))]
    fn new(start: f64, end: f64, duration: u64, variant: &str) -> PyResult<Self> {
        let variant: ScheduleVariant = variant.parse().map_err(py_err)?;
        Ok(Self {
            inner: CoreSchedule::new(start, end, duration).with_variant(variant),
        })
    }

    fn value(&self, t: u64) -> f64 {
        self.inner.value(t)
    }
}

/// Agent networks plus monotonic mixer.
#[pyclass(name = "QmixNet")]
struct QmixNet {
    inner: CoreNet,
}

#[pymethods]
impl QmixNet {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: CoreNet::load(&path).map_err(py_err)?,
        })
    }

    /// Writes a checkpoint and returns its sha256.
    fn save(&self, path: PathBuf) -> PyResult<String> {
        self.inner.save(&path).map_err(py_err)
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.arch.input_dim()
    }

    #[getter]
    fn n_agents(&self) -> usize {
        self.inner.arch.n_agents
    }

    /// Per-agent action values for rows of agent inputs.
    fn agent_values(&self, inputs: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let rows = inputs.len();
        let cols = inputs.first().map_or(0, |r| r.len());
        let t = Tensor::new(vec![rows, cols], inputs.concat()).map_err(py_err)?;
        let v = self.inner.agent_values(&t).map_err(py_err)?;
        Ok((0..rows).map(|r| v.row(r).to_vec()).collect())
    }

    /// `Q_tot` for each row of per-agent chosen values and state.
    fn mix(&self, qs: Vec<Vec<f64>>, states: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let q = Tensor::new(vec![qs.len(), self.inner.arch.n_agents], qs.concat()).map_err(py_err)?;
        let s = Tensor::new(vec![states.len(), self.inner.arch.state_dim], states.concat())
            .map_err(py_err)?;
        self.inner.mix(&q, &s).map_err(py_err)
    }

    /// Greedy evaluation on the configured environment.
    fn evaluate<'py>(&self, py: Python<'py>, config: &RunConfig) -> PyResult<Bound<'py, PyDict>> {
        let c = &config.inner;
        let mut env = c.env.build().map_err(py_err)?;
        let s = evaluate(&self.inner, env.as_mut(), c.eval_episodes, c.eval_seed).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("episodes", s.episodes)?;
        d.set_item("mean_return", s.mean_return)?;
        d.set_item("std_return", s.std_return)?;
        d.set_item("success_rate", s.success_rate)?;
        Ok(d)
    }
}

/// Offline episode dataset.
#[pyclass(name = "Dataset")]
struct Dataset {
    inner: CoreDataset,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: CoreDataset::load(&path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<String> {
        self.inner.save(&path).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn mean_return(&self) -> f64 {
        self.inner.mean_return()
    }

    #[getter]
    fn mode(&self) -> String {
        self.inner.meta.mode.clone()
    }

    #[getter]
    fn behavior_mean_return(&self) -> f64 {
        self.inner.meta.behavior_mean_return
    }

    fn returns(&self) -> Vec<f64> {
        self.inner.episodes.iter().map(|e| e.episode_return).collect()
    }
}

#[pyfunction]
fn greedy_joint(values: Vec<Vec<f64>>, masks: Vec<Vec<bool>>) -> PyResult<Vec<usize>> {
    greedy_joint_action(&values, &masks).map_err(py_err)
}

#[pyfunction]
fn lambda_value(t: u64, lambda_end: f64, t_anneal: u64) -> f64 {
    lambda_schedule_value(t, lambda_end, t_anneal)
}

/// `(optimal_return, optimal_joint)` of a two-player payoff table.
#[pyfunction]
fn solve_matrix_game(payoff: Vec<Vec<f64>>) -> PyResult<(f64, Vec<usize>)> {
    let s = marl_o2o::oracle::solve_matrix_game(&payoff).map_err(py_err)?;
    Ok((s.optimal_return, s.optimal_joint))
}

/// Mean optimal return over the configured evaluation seeds.
#[pyfunction]
fn oracle_optimum(config: &RunConfig) -> PyResult<f64> {
    let c = &config.inner;
    phases::oracle_optimum(&c.env, &phases::eval_seeds(c)).map_err(py_err)
}

#[pyfunction]
fn gen_dataset<'py>(py: Python<'py>, config: &RunConfig, out: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let r = phases::gen_dataset(&config.inner, &out).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("path", r.path)?;
    d.set_item("sha256", r.hash)?;
    d.set_item("episodes", r.dataset.len())?;
    d.set_item("behavior_mean_return", r.dataset.meta.behavior_mean_return)?;
    d.set_item("behavior_steps", r.behavior_steps)?;
    d.set_item("reached_threshold", r.reached_threshold)?;
    d.set_item("optimum", r.optimum)?;
    Ok(d)
}

#[pyfunction]
fn pretrain<'py>(
    py: Python<'py>,
    config: &RunConfig,
    dataset: PathBuf,
    out: PathBuf,
) -> PyResult<Bound<'py, PyDict>> {
    let data = CoreDataset::load(&dataset).map_err(py_err)?;
    let r = phases::run_offline_phase(&config.inner, &data, &out).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("policy", r.artifacts.policy)?;
    d.set_item("policy_sha256", r.artifacts.policy_hash)?;
    d.set_item("offline_target", r.artifacts.offline_target)?;
    d.set_item("offline_target_sha256", r.artifacts.offline_target_hash)?;
    d.set_item("final_return", r.final_eval.mean_return)?;
    d.set_item("final_success", r.final_eval.success_rate)?;
    Ok(d)
}

/// Online phase; returns the metrics rows.
#[pyfunction]
#[pyo3(signature = (config, out, offline = None, dataset = None))]
fn finetune<'py>(
    py: Python<'py>,
    config: &RunConfig,
    out: PathBuf,
    offline: Option<PathBuf>,
    dataset: Option<PathBuf>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let c = &config.inner;
    let sources = phases::load_sources(c, offline.as_deref(), dataset.as_deref()).map_err(py_err)?;
    let run = phases::run_online_phase(c, sources, &out, None).map_err(py_err)?;
    run.rows.iter().map(|r| row_dict(py, r)).collect()
}

#[pyfunction]
fn metrics<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let rows = read_metrics(&path).map_err(py_err)?;
    rows.iter().map(|r| row_dict(py, r)).collect()
}

#[pyfunction]
fn success_auc_of(path: PathBuf) -> PyResult<f64> {
    Ok(success_auc(&read_metrics(&path).map_err(py_err)?))
}

#[pymodule]
fn marl_o2o_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<RunConfig>()?;
    m.add_class::<Env>()?;
    m.add_class::<Schedule>()?;
    m.add_class::<QmixNet>()?;
    m.add_class::<Dataset>()?;
    m.add_function(wrap_pyfunction!(greedy_joint, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_value, m)?)?;
    m.add_function(wrap_pyfunction!(solve_matrix_game, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_optimum, m)?)?;
    m.add_function(wrap_pyfunction!(gen_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(pretrain, m)?)?;
    m.add_function(wrap_pyfunction!(finetune, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(success_auc_of, m)?)?;
    Ok(())
}
