//! Python bindings. Structured values cross the boundary as plain dicts and
//! lists (through JSON), so results match the HTTP API payloads.

use std::path::PathBuf;
use std::sync::Arc;

use proactive_safety::config::ScenarioConfig;
use proactive_safety::graph::RiskGraph;
use proactive_safety::ingest::{apply_review, build_graph, parse_review, Corpus, Gazetteers};
use proactive_safety::monitor::{scan, Sample};
use proactive_safety::query::{run_query, Query, Traversal};
use proactive_safety::scenario::{resolve_charts, run_samples};
use proactive_safety::session::{OperatorAction, Session as CoreSession};
use proactive_safety::Error;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        Error::Session(_) | Error::Divergence { .. } => PyRuntimeError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_py<T: DeserializeOwned>(py: Python<'_>, obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = py
        .import("json")?
        .call_method1("dumps", (obj,))?
        .extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// `None` means the reference scenario.
fn config(toml: Option<&str>) -> PyResult<ScenarioConfig> {
    match toml {
        Some(t) => ScenarioConfig::from_toml_str(t).map_err(err),
        None => Ok(ScenarioConfig::reference()),
    }
}

/// Runs a scenario and returns its samples.
#[pyfunction]
#[pyo3(signature = (config=None, seed=None, duration=None))]
fn simulate(
    py: Python<'_>,
    config: Option<&str>,
    seed: Option<u64>,
    duration: Option<u64>,
) -> PyResult<Py<PyAny>> {
    let mut cfg = self::config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(d) = duration {
        cfg.duration = d;
    }
    let samples = py.detach(|| run_samples(&cfg)).map_err(err)?;
    to_py(py, &samples)
}

/// SPC events for a list of samples under the charts of `config`.
#[pyfunction]
#[pyo3(signature = (samples, config=None))]
fn detect(py: Python<'_>, samples: &Bound<'_, PyAny>, config: Option<&str>) -> PyResult<Py<PyAny>> {
    let samples: Vec<Sample> = from_py(py, samples)?;
    let cfg = self::config(config)?;
    let charts = resolve_charts(&cfg).map_err(err)?;
    to_py(py, &scan(&samples, &charts).map_err(err)?)
}

/// Candidate triples extracted from every document in `corpus`.
#[pyfunction]
fn ingest(py: Python<'_>, corpus: PathBuf) -> PyResult<Py<PyAny>> {
    let gaz = Gazetteers::builtin();
    let x = Corpus::load(&corpus, &gaz).map_err(err)?.extract(&gaz);
    to_py(py, &x)
}

#[pyclass(frozen)]
struct Graph {
    inner: Arc<RiskGraph>,
}

#[pymethods]
impl Graph {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: Arc::new(RiskGraph::load(&path).map_err(err)?),
        })
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Arc::new(RiskGraph::from_text(text).map_err(err)?),
        })
    }

    /// Ingests `corpus`, applies the decision file `review` and builds the
    /// graph. Fails while any candidate is left pending.
    #[staticmethod]
    fn build(corpus: PathBuf, review: PathBuf) -> PyResult<Self> {
        let gaz = Gazetteers::builtin();
        let mut x = Corpus::load(&corpus, &gaz).map_err(err)?.extract(&gaz);
        let text = std::fs::read_to_string(&review)?;
        let decisions = parse_review(&text, &review.display().to_string()).map_err(err)?;
        apply_review(&mut x.triples, &decisions).map_err(err)?;
        Ok(Self {
            inner: Arc::new(build_graph(&x).map_err(err)?),
        })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn triple_count(&self) -> usize {
        self.inner.triple_count()
    }

    #[pyo3(signature = (keywords, depth=4, direction="both", match_any=false))]
    fn query(
        &self,
        py: Python<'_>,
        keywords: Vec<String>,
        depth: usize,
        direction: &str,
        match_any: bool,
    ) -> PyResult<Py<PyAny>> {
        let dir = Traversal::parse(direction)
            .ok_or_else(|| PyValueError::new_err(format!("unknown direction {direction:?}")))?;
        let q = Query::new(&keywords)
            .map_err(err)?
            .with_depth(depth)
            .with_direction(dir)
            .with_match_any(match_any);
        to_py(py, &run_query(&self.inner, &q).map_err(err)?)
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(nodes={}, triples={})",
            self.inner.node_count(),
            self.inner.triple_count()
        )
    }
}

/// An operator session. Starts paused.
#[pyclass]
struct Session {
    inner: CoreSession,
}

#[pymethods]
impl Session {
    #[new]
    #[pyo3(signature = (config=None, graph=None, id="py"))]
    fn new(config: Option<&str>, graph: Option<&Graph>, id: &str) -> PyResult<Self> {
        let cfg = self::config(config)?;
        let inner = CoreSession::start(id, cfg, graph.map(|g| g.inner.clone())).map_err(err)?;
        Ok(Self { inner })
    }

    /// Issues an action such as `{"kind": "turn_off_heater"}` or
    /// `{"kind": "set_coolant_valve", "target": 285.0}`.
    fn act(&mut self, py: Python<'_>, action: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
        let action: OperatorAction = from_py(py, action)?;
        to_py(py, &self.inner.apply_action(action).map_err(err)?)
    }

    fn resume(&mut self) -> PyResult<()> {
        self.inner
            .apply_action(OperatorAction::Resume)
            .map(drop)
            .map_err(err)
    }

    fn pause(&mut self) -> PyResult<()> {
        self.inner
            .apply_action(OperatorAction::Pause)
            .map(drop)
            .map_err(err)
    }

    /// Advances up to `n` ticks and returns what each produced.
    #[pyo3(signature = (n=1))]
    fn run(&mut self, py: Python<'_>, n: u64) -> PyResult<Py<PyAny>> {
        let out = self.inner.run(n).map_err(err)?;
        to_py(py, &out)
    }

    #[getter]
    fn tick(&self) -> u64 {
        self.inner.tick_count()
    }

    fn status(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.status())
    }

    fn alarms(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.alarms())
    }

    fn actions(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.actions())
    }

    fn queries(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.queries())
    }

    #[pyo3(signature = (since=-1.0))]
    fn telemetry(&self, py: Python<'_>, since: f64) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.telemetry_since(since))
    }
}

#[pymodule]
fn psafety(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(ingest, m)?)?;
    m.add_class::<Graph>()?;
    m.add_class::<Session>()?;
    Ok(())
}
