//! Python bindings: the dataset/store/rule-base types and the main pipeline
//! operations, with quadruples passed as plain `(s, r, o, t)` tuples.

use std::path::PathBuf;
use std::time::Duration;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use onsep_core as core;
use onsep_core::scorer::ScorerBackend;

fn to_py_err(e: core::OnsepError) -> PyErr {
    use core::OnsepError::*;
    match e {
        MissingFile(_) | Io(_) => PyIOError::new_err(e.to_string()),
        Argument(_) | Mapping(_) | Parse { .. } | Integrity(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

type Quad = (u64, u64, u64, u64);

fn quads_out(facts: &[core::Quadruple]) -> Vec<Quad> {
    facts.iter().map(|q| (q.subject, q.relation, q.object, q.t)).collect()
}

#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Dataset {
    inner: core::Dataset,
}

#[pymethods]
impl Dataset {
    /// Load a dataset directory (entity2id.txt, relation2id.txt,
    /// train/valid/test.txt).
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Dataset {
            inner: core::Dataset::load(&path).map_err(to_py_err)?,
        })
    }

    /// A copy with mirrored facts and doubled relation vocabulary.
    fn add_inverse_relations(&self) -> PyResult<Self> {
        Ok(Dataset {
            inner: self.inner.clone().add_inverse_relations().map_err(to_py_err)?,
        })
    }

    fn write_to_dir(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write_to_dir(&path).map_err(to_py_err)
    }

    #[getter]
    fn entity_count(&self) -> usize {
        self.inner.entity_count()
    }

    #[getter]
    fn relation_count(&self) -> usize {
        self.inner.relation_count()
    }

    #[getter]
    fn interval(&self) -> u64 {
        self.inner.interval
    }

    #[getter]
    fn inverse_augmented(&self) -> bool {
        self.inner.inverse_augmented
    }

    #[getter]
    fn entity_names(&self) -> Vec<String> {
        self.inner.entity_names.clone()
    }

    #[getter]
    fn relation_names(&self) -> Vec<String> {
        self.inner.relation_names.clone()
    }

    fn train(&self) -> Vec<Quad> {
        quads_out(&self.inner.train)
    }

    fn valid(&self) -> Vec<Quad> {
        quads_out(&self.inner.valid)
    }

    fn test(&self) -> Vec<Quad> {
        quads_out(&self.inner.test)
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(entities={}, relations={}, train={}, valid={}, test={})",
            self.inner.entity_count(),
            self.inner.relation_count(),
            self.inner.train.len(),
            self.inner.valid.len(),
            self.inner.test.len()
        )
    }
}

#[pyclass]
struct TkgStore {
    inner: core::TkgStore,
}

#[pymethods]
impl TkgStore {
    #[new]
    fn new() -> Self {
        TkgStore {
            inner: core::TkgStore::new(),
        }
    }

    fn insert(&mut self, subject: u64, relation: u64, object: u64, t: u64) {
        self.inner.insert(core::Quadruple::new(subject, relation, object, t));
    }

    fn extend(&mut self, facts: Vec<Quad>) {
        self.inner
            .extend(facts.into_iter().map(|(s, r, o, t)| core::Quadruple::new(s, r, o, t)));
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// All stored facts with this subject and t < before, ascending by t.
    fn history_for_subject(&self, subject: u64, before: u64) -> Vec<Quad> {
        quads_out(self.inner.history_for_subject(subject, before).events())
    }

    fn facts_at(&self, t: u64) -> Vec<Quad> {
        quads_out(&self.inner.facts_at(t))
    }
}

#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct RuleBase {
    inner: core::CausalRuleBase,
}

#[pymethods]
impl RuleBase {
    #[new]
    fn new() -> Self {
        RuleBase {
            inner: core::CausalRuleBase::new(),
        }
    }

    /// Merge a proposed confidence and return the stored one.
    fn upsert(&mut self, effect: u64, cause: u64, conf: f64, t: u64, theta: f64, beta: f64) -> f64 {
        self.inner.upsert(effect, cause, conf, t, theta, beta)
    }

    fn maintain(&mut self, conf_min: f64) {
        self.inner.maintain(conf_min);
    }

    /// (cause, confidence, last_updated) triples in confidence-descending
    /// order.
    fn recall(&self, effect: u64) -> Vec<(u64, f64, u64)> {
        self.inner
            .recall(effect)
            .iter()
            .map(|r| (r.cause, r.confidence, r.last_updated))
            .collect()
    }

    fn rules(&self) -> Vec<(u64, u64, f64, u64)> {
        self.inner
            .iter()
            .map(|r| (r.effect, r.cause, r.confidence, r.last_updated))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn export(&self, dataset: &Dataset) -> PyResult<String> {
        self.inner.export(&dataset.inner.relation_names).map_err(to_py_err)
    }

    /// Parse a rule file against the dataset's relation names; returns the
    /// rule base and how many rules were dropped as unresolvable.
    #[staticmethod]
    fn import_text(text: &str, dataset: &Dataset) -> PyResult<(Self, usize)> {
        let outcome = core::CausalRuleBase::import(text, &dataset.inner.relation_names)
            .map_err(to_py_err)?;
        Ok((RuleBase { inner: outcome.rulebase }, outcome.dropped))
    }
}

#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct OnlineConfig {
    inner: core::OnlineConfig,
}

#[pymethods]
impl OnlineConfig {
    #[new]
    #[pyo3(signature = (
        history_len = 200,
        lambda_ = 0.1,
        alpha = 0.5,
        theta = 0.25,
        beta = 0.2,
        topk_rules = 10,
        conf_min = 0.01,
        scorer = "stub",
        scorer_url = None,
        seed = 0,
        mining_enabled = true,
        workers = 1,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        history_len: usize,
        lambda_: f64,
        alpha: f64,
        theta: f64,
        beta: f64,
        topk_rules: usize,
        conf_min: f64,
        scorer: &str,
        scorer_url: Option<String>,
        seed: u64,
        mining_enabled: bool,
        workers: usize,
    ) -> PyResult<Self> {
        let scorer = match scorer {
            "stub" => core::ScorerKind::Stub,
            "http" => core::ScorerKind::Http,
            other => {
                return Err(PyValueError::new_err(format!(
                    "scorer must be 'stub' or 'http', got '{other}'"
                )))
            }
        };
        let cfg = core::OnlineConfig {
            history_len,
            lambda: lambda_,
            alpha,
            theta,
            beta,
            topk_rules,
            conf_min,
            scorer,
            scorer_url,
            seed,
            mining_enabled,
            workers,
            record_predictions: false,
        };
        cfg.validate().map_err(to_py_err)?;
        Ok(OnlineConfig { inner: cfg })
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

#[pyclass]
struct RunReport {
    inner: core::RunReport,
}

#[pymethods]
impl RunReport {
    /// {'hit@1': .., 'hit@3': .., 'hit@10': .., 'queries': ..}
    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
        let d = pyo3::types::PyDict::new(py);
        d.set_item("hit@1", self.inner.metrics.hit_at(1))?;
        d.set_item("hit@3", self.inner.metrics.hit_at(3))?;
        d.set_item("hit@10", self.inner.metrics.hit_at(10))?;
        d.set_item("queries", self.inner.metrics.queries)?;
        Ok(d)
    }

    fn hits(&self, k: usize) -> f64 {
        self.inner.metrics.hit_at(k)
    }

    #[getter]
    fn queries(&self) -> u64 {
        self.inner.metrics.queries
    }

    #[getter]
    fn incomplete(&self) -> bool {
        self.inner.incomplete
    }

    #[getter]
    fn elapsed_seconds(&self) -> f64 {
        self.inner.elapsed.as_secs_f64()
    }

    fn rulebase(&self) -> RuleBase {
        RuleBase {
            inner: self.inner.rulebase.clone(),
        }
    }

    fn metrics_file_text(&self) -> String {
        self.inner.metrics.to_file_format()
    }
}

fn build_backend(cfg: &core::OnlineConfig) -> PyResult<Box<dyn ScorerBackend>> {
    match cfg.scorer {
        core::ScorerKind::Stub => Ok(Box::new(core::StubScorer)),
        core::ScorerKind::Http => {
            let url = cfg
                .scorer_url
                .as_deref()
                .ok_or_else(|| PyValueError::new_err("http scorer requires scorer_url"))?;
            let timeout = std::env::var("ONSEP_SCORER_TIMEOUT_MS")
                .ok()
                .and_then(|v| v.parse().ok())
                .unwrap_or(30_000);
            core::HttpScorer::new(url, Duration::from_millis(timeout))
                .map(|s| Box::new(s) as Box<dyn ScorerBackend>)
                .map_err(to_py_err)
        }
    }
}

/// Generate a planted-rule synthetic dataset. Rules are
/// (cause, effect, lag, probability) tuples.
#[pyfunction]
#[pyo3(signature = (entities, relations, snapshots, rules, noise_rate, seed))]
fn generate_synthetic(
    entities: u64,
    relations: u64,
    snapshots: u64,
    rules: Vec<(u64, u64, u64, f64)>,
    noise_rate: f64,
    seed: u64,
) -> PyResult<Dataset> {
    let spec = core::SyntheticSpec {
        entities,
        relations,
        snapshots,
        rules: rules
            .into_iter()
            .map(|(cause, effect, lag, probability)| core::PlantedRule {
                cause,
                effect,
                lag,
                probability,
            })
            .collect(),
        noise_rate,
        seed,
    };
    Ok(Dataset {
        inner: core::generate_synthetic(&spec).map_err(to_py_err)?,
    })
}

#[pyfunction]
fn load_dataset(path: PathBuf) -> PyResult<Dataset> {
    Dataset::load(path)
}

/// Drive the full online loop and return the report.
#[pyfunction]
#[pyo3(signature = (dataset, config, initial_rules = None))]
fn run_online(
    py: Python<'_>,
    dataset: &Dataset,
    config: &OnlineConfig,
    initial_rules: Option<&RuleBase>,
) -> PyResult<RunReport> {
    let backend = build_backend(&config.inner)?;
    let dataset = dataset.inner.clone();
    let cfg = config.inner.clone();
    let rules = initial_rules.map(|r| r.inner.clone());
    let report = py
        .detach(move || core::run_online(&dataset, &cfg, backend.as_ref(), rules))
        .map_err(to_py_err)?;
    Ok(RunReport { inner: report })
}

/// Answer one query against a store and rule base. Returns the ranked
/// (entity, probability) list and a status flag
/// ('ok' | 'degraded' | 'no-history').
#[pyfunction]
fn predict(
    store: &TkgStore,
    rulebase: &RuleBase,
    subject: u64,
    relation: u64,
    t: u64,
    config: &OnlineConfig,
) -> PyResult<(Vec<(u64, f64)>, String)> {
    let backend = build_backend(&config.inner)?;
    let prediction = core::dhag::predict(
        &store.inner,
        &rulebase.inner,
        &core::Query::new(subject, relation, t),
        backend.as_ref(),
        &config.inner,
    )
    .map_err(to_py_err)?;
    let flag = match prediction.flag {
        core::PredictionFlag::Ok => "ok",
        core::PredictionFlag::Degraded => "degraded",
        core::PredictionFlag::NoHistory => "no-history",
    };
    Ok((prediction.ranked, flag.to_string()))
}

/// Mine rule proposals from one revealed outcome; returns
/// (effect, cause, confidence, t) tuples.
#[pyfunction]
fn learn_from_feedback(
    store: &TkgStore,
    dataset: &Dataset,
    subject: u64,
    relation: u64,
    t: u64,
    target: u64,
    config: &OnlineConfig,
) -> PyResult<Vec<(u64, u64, f64, u64)>> {
    let backend = build_backend(&config.inner)?;
    let feedback = core::Feedback {
        query: core::Query::new(subject, relation, t),
        target,
    };
    Ok(core::dcrm::learn_from_feedback(
        &store.inner,
        &feedback,
        backend.as_ref(),
        &dataset.inner.relation_names,
        &config.inner,
    )
    .into_iter()
    .map(|u| (u.effect, u.cause, u.conf, u.t))
    .collect())
}

/// Softmax over the logits restricted to the subset of labels.
#[pyfunction]
fn normalize(logits: Vec<f64>, subset: Vec<usize>) -> PyResult<Vec<f64>> {
    Ok(core::scorer::normalize(&logits, &subset)
        .map_err(to_py_err)?
        .probabilities()
        .to_vec())
}

/// Entrywise (1 - lambda) * d1 + lambda * d2 over two distributions.
#[pyfunction]
fn ensemble(d1: Vec<f64>, d2: Vec<f64>, lambda_: f64) -> PyResult<Vec<f64>> {
    let a = core::ScoreDistribution::new(d1).map_err(to_py_err)?;
    let b = core::ScoreDistribution::new(d2).map_err(to_py_err)?;
    Ok(core::dhag::ensemble(&a, &b, lambda_)
        .map_err(to_py_err)?
        .probabilities()
        .to_vec())
}

#[pymodule]
fn onsep(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<TkgStore>()?;
    m.add_class::<RuleBase>()?;
    m.add_class::<OnlineConfig>()?;
    m.add_class::<RunReport>()?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(run_online, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(learn_from_feedback, m)?)?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(ensemble, m)?)?;
    Ok(())
}
