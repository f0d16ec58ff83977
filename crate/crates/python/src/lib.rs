//! Python bindings. Structured results cross the boundary as plain Python
//! objects decoded from the same JSON the CLI and service emit.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;
use tnsr_core::datagen::{generate_dataset as gen_dataset, write_dataset, DatasetConfig};
use tnsr_core::executor::{Dialogue, ExecutionTrace};
use tnsr_core::grounding::FlipGrounder;
use tnsr_core::parser::{self, hungarian as lsa, ScoreMatrix};
use tnsr_core::scene::{parse_scene, sample_scene, serialize_scene, SplitTag};
use tnsr_core::{ConceptMemory, ExecConfig, Grammar, OracleGrounder, RelationThresholds, SamplerConfig, SceneGraph};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, json: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (json,))
}

fn memory(lexicon: &str) -> PyResult<Arc<ConceptMemory>> {
    match lexicon {
        "training" => Ok(ConceptMemory::training()),
        "extended" => Ok(Arc::new(ConceptMemory::training().extended())),
        other => Err(PyValueError::new_err(format!("unknown lexicon '{other}'"))),
    }
}

fn split_tag(name: &str) -> PyResult<SplitTag> {
    serde_json::from_value(serde_json::Value::String(name.into())).map_err(|_| value_err(format!("unknown split '{name}'")))
}

#[pyclass(module = "tnsr", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Scene {
    inner: SceneGraph,
}

#[pymethods]
impl Scene {
    #[staticmethod]
    #[pyo3(signature = (seed, split = "scattered", min_objects = 4, max_objects = 8))]
    fn sample(seed: u64, split: &str, min_objects: usize, max_objects: usize) -> PyResult<Self> {
        let cfg = SamplerConfig { split: split_tag(split)?, min_objects, max_objects, ..Default::default() };
        sample_scene(&cfg, seed).map(|inner| Scene { inner }).map_err(value_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        parse_scene(text).map(|inner| Scene { inner }).map_err(value_err)
    }

    fn to_json(&self) -> String {
        serialize_scene(&self.inner)
    }

    /// The scene document as nested dicts.
    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &serialize_scene(&self.inner))
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn split(&self) -> String {
        self.inner.split_tag.to_string()
    }

    #[getter]
    fn categories(&self) -> Vec<String> {
        self.inner.objects.iter().map(|o| o.category.clone()).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.objects.len()
    }

    fn __repr__(&self) -> String {
        format!("Scene(seed={}, split={}, objects={})", self.inner.seed, self.inner.split_tag, self.inner.objects.len())
    }
}

#[pyclass(module = "tnsr", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Program {
    inner: tnsr_core::Program,
}

#[pymethods]
impl Program {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        tnsr_core::Program::parse_text(text).map(|inner| Program { inner }).map_err(value_err)
    }

    /// Post-order `(op, concept)` pairs.
    #[getter]
    fn steps(&self) -> Vec<(String, Option<String>)> {
        self.inner.linearize().into_iter().map(|s| (s.op.name().to_string(), s.concept)).collect()
    }

    #[getter]
    fn output_type(&self) -> PyResult<String> {
        self.inner.typecheck().map(|t| format!("{t:?}")).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __str__(&self) -> String {
        self.inner.to_text()
    }

    fn __repr__(&self) -> String {
        format!("Program('{}')", self.inner.to_text().replace('\'', "\\'"))
    }

    fn __eq__(&self, other: &Program) -> bool {
        self.inner == other.inner
    }
}

#[pyclass(module = "tnsr", frozen)]
struct Trace {
    inner: ExecutionTrace,
}

#[pymethods]
impl Trace {
    #[getter]
    fn ok(&self) -> bool {
        self.inner.failure().is_none()
    }

    /// The answer value as a Python object, or `None` on failure.
    #[getter]
    fn answer<'py>(&self, py: Python<'py>) -> PyResult<Option<Bound<'py, PyAny>>> {
        match self.inner.answer() {
            Some(a) => to_py(py, &serde_json::to_string(a).map_err(value_err)?).map(Some),
            None => Ok(None),
        }
    }

    #[getter]
    fn failure_kind(&self) -> Option<String> {
        self.inner.failure().map(|f| f.kind.to_string())
    }

    #[getter]
    fn message(&self) -> Option<String> {
        self.inner.failure().map(|f| f.message.clone())
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.to_json())
    }

    fn __repr__(&self) -> String {
        match (self.inner.answer(), self.inner.failure()) {
            (Some(a), _) => format!("Trace(answer={a})"),
            (_, Some(f)) => format!("Trace(failure={})", f.kind),
            _ => "Trace()".into(),
        }
    }
}

/// Clarification dialogue over one scene with the oracle grounder.
#[pyclass(module = "tnsr")]
struct Session {
    dialogue: Dialogue,
    grammar: Arc<Grammar>,
    grounder: OracleGrounder,
    exec: ExecConfig,
}

impl Session {
    fn turn(&self, result: Result<(), String>) -> String {
        match result {
            Ok(()) => self.dialogue.transcript.last().map(|t| t.text.clone()).unwrap_or_default(),
            Err(reply) => reply,
        }
    }
}

#[pymethods]
impl Session {
    #[new]
    #[pyo3(signature = (scene, lexicon = "training"))]
    fn new(scene: &Scene, lexicon: &str) -> PyResult<Self> {
        Ok(Session {
            dialogue: Dialogue::new(scene.inner.clone()),
            grammar: Grammar::builtin(),
            grounder: OracleGrounder::new(memory(lexicon)?, RelationThresholds::default()),
            exec: ExecConfig::default(),
        })
    }

    /// Ask a question or give a command; returns the system reply.
    fn query(&mut self, text: &str) -> String {
        let r = self.dialogue.query(text, &self.grammar, &self.grounder, &self.exec).map(|_| ()).map_err(|e| e.response());
        self.turn(r)
    }

    /// Answer a clarification request; returns the system reply.
    fn feedback(&mut self, text: &str) -> String {
        let r = self.dialogue.feedback(text, &self.grounder, &self.exec).map(|_| ()).map_err(|e| e.response());
        self.turn(r)
    }

    #[getter]
    fn pending(&self) -> bool {
        self.dialogue.pending.is_some()
    }

    #[getter]
    fn program(&self) -> Option<String> {
        self.dialogue.program.as_ref().map(|p| p.to_text())
    }

    #[getter]
    fn trace(&self) -> Option<Trace> {
        self.dialogue.trace.clone().map(|inner| Trace { inner })
    }

    /// `(speaker, text)` pairs in order.
    #[getter]
    fn transcript(&self) -> Vec<(String, String)> {
        self.dialogue
            .transcript
            .iter()
            .map(|t| (serde_json::to_value(t.speaker).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default(), t.text.clone()))
            .collect()
    }
}

/// Parse an utterance into a program.
#[pyfunction]
#[pyo3(signature = (text, lexicon = "training"))]
fn parse(text: &str, lexicon: &str) -> PyResult<Program> {
    let mem = memory(lexicon)?;
    parser::parse(text, &mem, &Grammar::builtin()).map(|inner| Program { inner }).map_err(value_err)
}

/// Parse an utterance and return the full explanation as a dict.
#[pyfunction]
#[pyo3(signature = (text, lexicon = "training"))]
fn explain<'py>(py: Python<'py>, text: &str, lexicon: &str) -> PyResult<Bound<'py, PyAny>> {
    let mem = memory(lexicon)?;
    let e = parser::explain(text, &mem, &Grammar::builtin()).map_err(value_err)?;
    to_py(py, &serde_json::to_string(&e).map_err(value_err)?)
}

/// Run a program on a scene. A positive `flip_rate` perturbs grounding
/// scores deterministically from `seed`.
#[pyfunction]
#[pyo3(signature = (program, scene, flip_rate = 0.0, seed = 0, batched = false))]
fn execute(program: &Program, scene: &Scene, flip_rate: f64, seed: u64, batched: bool) -> PyResult<Trace> {
    if !(0.0..=1.0).contains(&flip_rate) {
        return Err(PyValueError::new_err("flip_rate must lie in [0, 1]"));
    }
    let oracle = OracleGrounder::new(ConceptMemory::training(), RelationThresholds::default());
    let cfg = ExecConfig { batched, ..Default::default() };
    let inner = if flip_rate > 0.0 {
        tnsr_core::execute(&program.inner, &scene.inner, &FlipGrounder::new(oracle, flip_rate, seed), &cfg)
    } else {
        tnsr_core::execute(&program.inner, &scene.inner, &oracle, &cfg)
    };
    Ok(Trace { inner })
}

/// Maximum-score assignment of rows to distinct columns. `mask[r][c]`
/// false forbids the pair; all pairs are allowed when it is omitted.
#[pyfunction]
#[pyo3(signature = (scores, mask = None))]
fn hungarian(scores: Vec<Vec<f64>>, mask: Option<Vec<Vec<bool>>>) -> PyResult<(Vec<usize>, f64)> {
    let mask = mask.unwrap_or_else(|| scores.iter().map(|r| vec![true; r.len()]).collect());
    let cols = scores.first().map_or(0, Vec::len);
    if scores.len() != mask.len() || scores.iter().any(|r| r.len() != cols) || mask.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("scores and mask must be rectangular and the same shape"));
    }
    let a = lsa(&ScoreMatrix::new(scores, mask)).map_err(value_err)?;
    Ok((a.cols, a.total))
}

/// Generate a question/program dataset and write it to `out`. Returns
/// the dataset statistics as a dict.
#[pyfunction]
#[pyo3(signature = (out, num_scenes = 10, seed = 0, family_quota = 6))]
fn generate_dataset<'py>(
    py: Python<'py>,
    out: PathBuf,
    num_scenes: usize,
    seed: u64,
    family_quota: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = DatasetConfig { num_scenes, seed, family_quota, ..Default::default() };
    let data = py.detach(|| gen_dataset(&cfg)).map_err(value_err)?;
    write_dataset(&out, &data).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &serde_json::to_string(&data.stats).map_err(value_err)?)
}

#[pymodule]
fn tnsr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scene>()?;
    m.add_class::<Program>()?;
    m.add_class::<Trace>()?;
    m.add_class::<Session>()?;
    m.add_function(wrap_pyfunction!(parse, m)?)?;
    m.add_function(wrap_pyfunction!(explain, m)?)?;
    m.add_function(wrap_pyfunction!(execute, m)?)?;
    m.add_function(wrap_pyfunction!(hungarian, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    Ok(())
}
