//! Python bindings: `import gapo`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use gapo_core::sim::{ExperimentSummary, TrainConfig};
use gapo_core::{AdvantageConfig, AnalysisConfig, Estimator, GapoError, HdiConfig, RewardGroup};

fn py_err(e: GapoError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

type PyGroups = Vec<(String, Vec<f64>)>;

fn estimator(name: &str) -> PyResult<Estimator> {
    name.parse().map_err(py_err)
}

/// Levenshtein distance between two strings, counted in characters.
#[pyfunction]
fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    gapo_core::edit_distance(&a, &b)
}

/// Composite exact-match plus normalised edit-similarity reward in [0, 1].
#[pyfunction]
fn composite_reward(predicted: &str, truth: &str) -> f64 {
    gapo_core::text_reward(predicted, truth).get()
}

#[pyclass(name = "HdiResult", frozen, get_all)]
struct PyHdiResult {
    start_index: usize,
    end_index: usize,
    values: Vec<f64>,
    length: f64,
    q: f64,
    windows_scanned: usize,
}

#[pymethods]
impl PyHdiResult {
    fn __repr__(&self) -> String {
        format!(
            "HdiResult(start_index={}, end_index={}, length={}, q={})",
            self.start_index, self.end_index, self.length, self.q
        )
    }
}

/// Shortest window covering a `tau` fraction of the sorted rewards.
#[pyfunction]
#[pyo3(signature = (rewards, tau = 0.5))]
fn find_hdi(rewards: Vec<f64>, tau: f64) -> PyResult<PyHdiResult> {
    let r = gapo_core::find_hdi(&rewards, HdiConfig::new(tau).map_err(py_err)?).map_err(py_err)?;
    Ok(PyHdiResult {
        start_index: r.start_index,
        end_index: r.end_index,
        values: r.values,
        length: r.length,
        q: r.q,
        windows_scanned: r.windows_scanned,
    })
}

#[pyfunction]
#[pyo3(signature = (rewards, tau = 0.5))]
fn adaptive_q(rewards: Vec<f64>, tau: f64) -> PyResult<f64> {
    gapo_core::adaptive_q(&rewards, HdiConfig::new(tau).map_err(py_err)?).map_err(py_err)
}

#[pyclass(name = "GroupAdvantages", frozen, get_all)]
struct PyGroupAdvantages {
    advantages: Vec<f64>,
    center: f64,
    denominator: f64,
    degenerate: bool,
    negative_count: usize,
}

#[pymethods]
impl PyGroupAdvantages {
    fn __repr__(&self) -> String {
        format!(
            "GroupAdvantages(center={}, denominator={}, degenerate={}, advantages={:?})",
            self.center,
            self.denominator,
            if self.degenerate { "True" } else { "False" },
            self.advantages
        )
    }
}

/// Per-rollout advantages for one group of rewards in [0, 1].
#[pyfunction]
#[pyo3(signature = (rewards, estimator = "gapo-median-div", tau = 0.5, degenerate_threshold = 1e-8))]
fn compute_advantages(
    rewards: Vec<f64>,
    estimator: &str,
    tau: f64,
    degenerate_threshold: f64,
) -> PyResult<PyGroupAdvantages> {
    let config = AdvantageConfig {
        estimator: self::estimator(estimator)?,
        tau,
        degenerate_threshold,
    };
    let group = RewardGroup::new("", rewards).map_err(py_err)?;
    let adv = gapo_core::compute_advantages(&group, &config).map_err(py_err)?;
    Ok(PyGroupAdvantages {
        advantages: adv.advantages,
        center: adv.center,
        denominator: adv.denominator,
        degenerate: adv.degenerate,
        negative_count: adv.negative_count,
    })
}

/// Splits `(prompt_id, rewards)` pairs into kept groups and dropped ids.
#[pyfunction]
fn dynamic_sample_filter(groups: PyGroups) -> PyResult<(PyGroups, Vec<String>)> {
    let groups = groups
        .into_iter()
        .map(|(id, r)| RewardGroup::new(id, r))
        .collect::<Result<Vec<_>, _>>()
        .map_err(py_err)?;
    let (kept, dropped) = gapo_core::dynamic_sample_filter(groups);
    Ok((
        kept.into_iter().map(|g| (g.prompt_id, g.rewards)).collect(),
        dropped,
    ))
}

/// Skew label of one reward group: one of `left_skewed`, `right_skewed`,
/// `approx_normal`, `degenerate`.
#[pyfunction]
#[pyo3(signature = (rewards, tau = 0.5, skew_threshold = 0.5))]
fn classify_group(rewards: Vec<f64>, tau: f64, skew_threshold: f64) -> PyResult<&'static str> {
    let group = RewardGroup::new("", rewards).map_err(py_err)?;
    let config = AnalysisConfig {
        tau,
        skew_threshold,
    };
    Ok(gapo_core::classify_group(&group, &config)
        .map_err(py_err)?
        .label
        .as_str())
}

/// Label fractions over a batch of reward groups.
#[pyfunction]
#[pyo3(signature = (groups, tau = 0.5, skew_threshold = 0.5))]
fn batch_report<'py>(
    py: Python<'py>,
    groups: Vec<Vec<f64>>,
    tau: f64,
    skew_threshold: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let groups = groups
        .into_iter()
        .enumerate()
        .map(|(i, r)| RewardGroup::new(i.to_string(), r))
        .collect::<Result<Vec<_>, _>>()
        .map_err(py_err)?;
    let report = gapo_core::batch_report(
        &groups,
        &AnalysisConfig {
            tau,
            skew_threshold,
        },
    )
    .map_err(py_err)?;
    let dict = PyDict::new(py);
    dict.set_item("groups", report.groups)?;
    for label in gapo_core::SkewLabel::ALL {
        dict.set_item(label.as_str(), report.fractions.get(label))?;
    }
    Ok(dict)
}

fn summary_dict<'py>(py: Python<'py>, s: &ExperimentSummary) -> PyResult<Bound<'py, PyDict>> {
    let dict = PyDict::new(py);
    dict.set_item("seed", s.seed)?;
    dict.set_item("estimator", s.estimator.as_str())?;
    dict.set_item("tau", s.tau)?;
    dict.set_item("steps", s.steps)?;
    dict.set_item("initial_exact_match", s.initial_exact_match)?;
    dict.set_item("initial_mean_reward", s.initial_mean_reward)?;
    dict.set_item("final_exact_match", s.final_exact_match)?;
    dict.set_item("final_mean_reward", s.final_mean_reward)?;
    dict.set_item("mean_pg_clipfrac", s.mean_pg_clipfrac)?;
    dict.set_item("skipped_steps", s.skipped_steps)?;
    Ok(dict)
}

/// Runs a simulator experiment. `config` uses the same `key = value` format
/// as the command-line tool; keyword arguments override individual keys.
#[pyfunction]
#[pyo3(signature = (config = "", **overrides))]
fn run_experiment<'py>(
    py: Python<'py>,
    config: &str,
    overrides: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = TrainConfig::from_kv_str(config).map_err(py_err)?;
    if let Some(overrides) = overrides {
        for (key, value) in overrides.iter() {
            let key: String = key.extract()?;
            let value = value.str()?.to_string();
            let value = match value.as_str() {
                "True" => "true".to_owned(),
                "False" => "false".to_owned(),
                _ => value,
            };
            cfg.set(&key, &value).map_err(py_err)?;
        }
    }
    cfg.validate().map_err(py_err)?;
    let experiment = py
        .detach(|| gapo_core::sim::run_experiment(&cfg))
        .map_err(py_err)?;
    summary_dict(py, &experiment.summary)
}

#[pymodule]
fn gapo(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyHdiResult>()?;
    m.add_class::<PyGroupAdvantages>()?;
    m.add_function(wrap_pyfunction!(edit_distance, m)?)?;
    m.add_function(wrap_pyfunction!(composite_reward, m)?)?;
    m.add_function(wrap_pyfunction!(find_hdi, m)?)?;
    m.add_function(wrap_pyfunction!(adaptive_q, m)?)?;
    m.add_function(wrap_pyfunction!(compute_advantages, m)?)?;
    m.add_function(wrap_pyfunction!(dynamic_sample_filter, m)?)?;
    m.add_function(wrap_pyfunction!(classify_group, m)?)?;
    m.add_function(wrap_pyfunction!(batch_report, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
