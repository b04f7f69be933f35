//! Python bindings.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use symptomclip::encoders::{Encoder, EncoderBundle, EncoderError};
use symptomclip::eval::{EvalError, Evaluator};
use symptomclip::knowledge::{KnowledgeBase, KnowledgeError, PromptTemplate, PromptVariant};
use symptomclip::report::{build_case_report, export_report, ReportConfig, ReportFormat};
use symptomclip::scoring::{self, AggregationMode, EmbeddedClass, Embedding, ScoringError};
use symptomclip::{DatasetManifest, EvalOptions};

create_exception!(symptomclip, SymptomClipError, PyValueError);
create_exception!(symptomclip, ConfigMismatchError, SymptomClipError);
create_exception!(symptomclip, ManifestMismatchError, SymptomClipError);
create_exception!(symptomclip, LlmError, SymptomClipError);

fn scoring_err(e: ScoringError) -> PyErr {
    SymptomClipError::new_err(e.to_string())
}

fn encoder_err(e: EncoderError) -> PyErr {
    match e {
        EncoderError::Io { .. } => PyOSError::new_err(e.to_string()),
        EncoderError::Integrity { .. } | EncoderError::Manifest(_) => ConfigMismatchError::new_err(e.to_string()),
        _ => SymptomClipError::new_err(e.to_string()),
    }
}

fn knowledge_err(e: KnowledgeError) -> PyErr {
    if e.is_llm_failure() {
        return LlmError::new_err(e.to_string());
    }
    match e.root() {
        KnowledgeError::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => SymptomClipError::new_err(e.to_string()),
    }
}

fn eval_err(e: EvalError) -> PyErr {
    match e {
        EvalError::Io { .. } | EvalError::Encode { .. } => PyOSError::new_err(e.to_string()),
        EvalError::Manifest(_) | EvalError::ClassMismatch { .. } => ManifestMismatchError::new_err(e.to_string()),
        EvalError::ConfigMismatch(_) | EvalError::Incomparable(_) => ConfigMismatchError::new_err(e.to_string()),
        _ => SymptomClipError::new_err(e.to_string()),
    }
}

fn mode(s: &str) -> PyResult<AggregationMode> {
    s.parse().map_err(PyValueError::new_err)
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| SymptomClipError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A fixed-dimension vector of finite floats.
#[pyclass(name = "Embedding", module = "symptomclip", frozen, from_py_object)]
#[derive(Clone)]
struct PyEmbedding(Embedding);

#[pymethods]
impl PyEmbedding {
    #[new]
    #[pyo3(signature = (values, normalize = false))]
    fn new(values: Vec<f32>, normalize: bool) -> PyResult<Self> {
        let e = if normalize { Embedding::unit(values) } else { Embedding::new(values) };
        e.map(PyEmbedding).map_err(scoring_err)
    }

    #[getter]
    fn values(&self) -> Vec<f32> {
        self.0.values().to_vec()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn norm(&self) -> f64 {
        self.0.norm()
    }

    fn normalized(&self) -> PyResult<Self> {
        self.0.l2_normalize().map(PyEmbedding).map_err(scoring_err)
    }

    fn dot(&self, other: &PyEmbedding) -> PyResult<f64> {
        scoring::dot(&self.0, &other.0).map_err(scoring_err)
    }

    fn __len__(&self) -> usize {
        self.0.dim()
    }

    fn __repr__(&self) -> String {
        format!("Embedding(dim={})", self.0.dim())
    }
}

/// Aggregated similarity of an image embedding to one class's symptoms.
#[pyfunction]
#[pyo3(signature = (image, symptoms, aggregation = "mean"))]
fn score(image: &PyEmbedding, symptoms: Vec<PyEmbedding>, aggregation: &str) -> PyResult<f64> {
    let g: Vec<Embedding> = symptoms.into_iter().map(|s| s.0).collect();
    scoring::score(&image.0, &g, mode(aggregation)?).map_err(scoring_err)
}

/// Scores an image embedding against `{class_id: [(symptom, embedding), ...]}`
/// given as a list of pairs, returning the full score report as a dict.
#[pyfunction]
#[pyo3(signature = (image, classes, aggregation = "mean"))]
fn classify<'py>(
    py: Python<'py>,
    image: &PyEmbedding,
    classes: Vec<(String, Vec<(String, PyEmbedding)>)>,
    aggregation: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let classes: Vec<EmbeddedClass> = classes
        .into_iter()
        .map(|(id, syms)| EmbeddedClass::new(id, syms.into_iter().map(|(t, e)| (t, e.0)).collect()))
        .collect();
    let report = scoring::classify(&image.0, &classes, mode(aggregation)?).map_err(scoring_err)?;
    to_py(py, &report)
}

#[pyclass(name = "EncoderBundle", module = "symptomclip", frozen)]
struct PyEncoderBundle(EncoderBundle);

#[pymethods]
impl PyEncoderBundle {
    /// Loads a bundle directory or its manifest.json, verifying file digests.
    #[new]
    fn new(py: Python<'_>, path: PathBuf) -> PyResult<Self> {
        py.detach(|| EncoderBundle::load(&path)).map(PyEncoderBundle).map_err(encoder_err)
    }

    #[getter]
    fn fingerprint(&self) -> &str {
        self.0.fingerprint()
    }

    #[getter]
    fn label(&self) -> &str {
        self.0.label()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn tokenize(&self, text: &str) -> Vec<u32> {
        self.0.tokenize(text).ids().to_vec()
    }

    /// Model-ready pixels in CHW order, flattened.
    fn preprocess(&self, py: Python<'_>, raw: &[u8]) -> PyResult<Vec<f32>> {
        py.detach(|| self.0.preprocess(raw)).map(|t| t.data().to_vec()).map_err(encoder_err)
    }

    fn encode_image(&self, py: Python<'_>, raw: &[u8]) -> PyResult<PyEmbedding> {
        py.detach(|| self.0.encode_image_bytes(raw)).map(PyEmbedding).map_err(encoder_err)
    }

    fn encode_image_file(&self, py: Python<'_>, path: PathBuf) -> PyResult<PyEmbedding> {
        let raw = std::fs::read(&path).map_err(|e| PyOSError::new_err(format!("{}: {e}", path.display())))?;
        self.encode_image(py, &raw)
    }

    fn encode_texts(&self, py: Python<'_>, texts: Vec<String>) -> PyResult<Vec<PyEmbedding>> {
        py.detach(|| self.0.encode_texts(&texts))
            .map(|v| v.into_iter().map(PyEmbedding).collect())
            .map_err(encoder_err)
    }

    fn __repr__(&self) -> String {
        format!("EncoderBundle({})", self.0.describe())
    }
}

#[pyclass(name = "KnowledgeBase", module = "symptomclip", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyKnowledgeBase(KnowledgeBase);

#[pymethods]
impl PyKnowledgeBase {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        symptomclip::load_kb(&path).map(PyKnowledgeBase).map_err(knowledge_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        KnowledgeBase::from_json(text).map(PyKnowledgeBase).map_err(knowledge_err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(knowledge_err)
    }

    #[getter]
    fn kb_id(&self) -> &str {
        &self.0.kb_id
    }

    #[getter]
    fn class_ids(&self) -> Vec<String> {
        self.0.class_ids().map(str::to_string).collect()
    }

    fn symptoms(&self, class_id: &str) -> PyResult<Vec<String>> {
        self.0
            .class(class_id)
            .map(|c| c.symptoms.clone())
            .ok_or_else(|| PyValueError::new_err(format!("no class `{class_id}`")))
    }

    /// The same classes with each class's display name as its only symptom.
    fn category_name_baseline(&self) -> Self {
        PyKnowledgeBase(self.0.category_name_baseline())
    }

    fn __len__(&self) -> usize {
        self.0.classes.len()
    }
}

#[pyfunction]
#[pyo3(signature = (category, variant = "designed"))]
fn render_prompt(category: &str, variant: &str) -> PyResult<String> {
    let v: PromptVariant = variant.parse().map_err(PyValueError::new_err)?;
    PromptTemplate::for_variant(v).render(category).map_err(knowledge_err)
}

#[pyfunction]
fn parse_symptoms(raw: &str) -> PyResult<Vec<String>> {
    symptomclip::parse_symptoms(raw).map_err(knowledge_err)
}

/// Classifies one image file and returns the case report in `format`
/// (json, csv or text) as a string.
#[pyfunction]
#[pyo3(signature = (bundle, kb, image, aggregation = "mean", format = "json"))]
fn classify_image(
    py: Python<'_>,
    bundle: &PyEncoderBundle,
    kb: &PyKnowledgeBase,
    image: PathBuf,
    aggregation: &str,
    format: &str,
) -> PyResult<String> {
    let mode = mode(aggregation)?;
    let format: ReportFormat = format.parse().map_err(|e: symptomclip::report::ReportError| PyValueError::new_err(e.to_string()))?;
    let raw = std::fs::read(&image).map_err(|e| PyOSError::new_err(format!("{}: {e}", image.display())))?;
    let (b, kb) = (&bundle.0, &kb.0);
    let bytes = py.detach(|| -> PyResult<Vec<u8>> {
        let ev = Evaluator::new();
        let opts = EvalOptions::default().with_mode(mode);
        let classes = ev.embed_kb(kb, b, &opts).map_err(eval_err)?;
        let f = b.encode_image_bytes(&raw).map_err(encoder_err)?;
        let scores = scoring::classify(&f, &classes, mode).map_err(scoring_err)?;
        let report = build_case_report(&scores, image.to_string_lossy()).with_config(ReportConfig {
            encoder_label: b.label().to_string(),
            encoder_fingerprint: b.fingerprint().to_string(),
            kb_id: kb.kb_id.clone(),
        });
        Ok(export_report(&report, format))
    })?;
    String::from_utf8(bytes).map_err(|e| SymptomClipError::new_err(e.to_string()))
}

/// Evaluates a labeled manifest (JSON, or CSV with a `.classes.txt`
/// sidecar) and returns the result as a dict.
#[pyfunction]
#[pyo3(signature = (manifest, kb, bundle, aggregation = "mean", strict = true, workers = None))]
fn evaluate<'py>(
    py: Python<'py>,
    manifest: PathBuf,
    kb: &PyKnowledgeBase,
    bundle: &PyEncoderBundle,
    aggregation: &str,
    strict: bool,
    workers: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut opts = EvalOptions::default().with_mode(mode(aggregation)?);
    opts.strict = strict;
    if let Some(n) = workers {
        opts.workers = n;
    }
    let (b, kb) = (&bundle.0, &kb.0);
    let result = py
        .detach(|| {
            let m = DatasetManifest::load(&manifest)?;
            Evaluator::new().evaluate(&m, kb, b, &opts)
        })
        .map_err(eval_err)?;
    to_py(py, &result)
}

#[pymodule]
#[pyo3(name = "symptomclip")]
fn symptomclip_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add_class::<PyEmbedding>()?;
    m.add_class::<PyEncoderBundle>()?;
    m.add_class::<PyKnowledgeBase>()?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(render_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(parse_symptoms, m)?)?;
    m.add_function(wrap_pyfunction!(classify_image, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add("SymptomClipError", py.get_type::<SymptomClipError>())?;
    m.add("ConfigMismatchError", py.get_type::<ConfigMismatchError>())?;
    m.add("ManifestMismatchError", py.get_type::<ManifestMismatchError>())?;
    m.add("LlmError", py.get_type::<LlmError>())?;
    Ok(())
}
