//! Similarity, aggregation and argmax classification over embeddings.
//!
//! A class score is the aggregate of the dot products between the image
//! embedding and each of the class's symptom embeddings. With
//! [`AggregationMode::Mean`] this is `(1/m) Σ f·g_i`; [`AggregationMode::Max`]
//! takes the largest single similarity instead. The predicted class is the one
//! with the highest aggregate, ties going to the class declared first.
//!
//! Everything here is a pure function over immutable inputs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `|‖v‖ - 1|` for an embedding flagged as normalized.
pub const NORM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoringError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("embedding contains a non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("embedding is empty")]
    EmptyEmbedding,
    #[error("cannot normalize a zero vector")]
    ZeroNorm,
    #[error("class `{class_id}` has no symptom embeddings")]
    EmptyDescriptors { class_id: String },
    #[error("no classes to score against")]
    NoClasses,
    #[error("embedding flagged as normalized has norm {norm}")]
    NotUnitNorm { norm: f64 },
}

/// A fixed-dimension real vector produced by an encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEmbedding", into = "RawEmbedding")]
pub struct Embedding {
    values: Vec<f32>,
    normalized: bool,
}

#[derive(Serialize, Deserialize)]
struct RawEmbedding {
    values: Vec<f32>,
    normalized: bool,
}

impl TryFrom<RawEmbedding> for Embedding {
    type Error = ScoringError;

    fn try_from(raw: RawEmbedding) -> Result<Self, Self::Error> {
        let emb = Embedding::new(raw.values)?;
        if raw.normalized {
            let norm = emb.norm();
            if (norm - 1.0).abs() >= NORM_TOLERANCE {
                return Err(ScoringError::NotUnitNorm { norm });
            }
            Ok(Embedding { normalized: true, ..emb })
        } else {
            Ok(emb)
        }
    }
}

impl From<Embedding> for RawEmbedding {
    fn from(e: Embedding) -> Self {
        RawEmbedding { values: e.values, normalized: e.normalized }
    }
}

impl Embedding {
    /// Wraps raw encoder output. Rejects empty and non-finite vectors.
    pub fn new(values: Vec<f32>) -> Result<Self, ScoringError> {
        if values.is_empty() {
            return Err(ScoringError::EmptyEmbedding);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(ScoringError::NonFinite { index });
        }
        Ok(Embedding { values, normalized: false })
    }

    /// Builds an embedding and scales it to unit L2 norm.
    pub fn unit(values: Vec<f32>) -> Result<Self, ScoringError> {
        Embedding::new(values)?.l2_normalize()
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }

    /// Returns `v / ‖v‖₂` with the normalized flag set.
    pub fn l2_normalize(&self) -> Result<Embedding, ScoringError> {
        let norm = self.norm();
        if norm == 0.0 {
            return Err(ScoringError::ZeroNorm);
        }
        let values = self
            .values
            .iter()
            .map(|&v| (f64::from(v) / norm) as f32)
            .collect();
        Ok(Embedding { values, normalized: true })
    }

    /// Multiplies every entry by `factor`. The result is not flagged normalized.
    pub fn scaled(&self, factor: f32) -> Result<Embedding, ScoringError> {
        Embedding::new(self.values.iter().map(|v| v * factor).collect())
    }
}

/// Free-function form of [`Embedding::l2_normalize`].
pub fn l2_normalize(v: &Embedding) -> Result<Embedding, ScoringError> {
    v.l2_normalize()
}

/// `Σ a_k·b_k`, accumulated in f64 in index order.
pub fn dot(a: &Embedding, b: &Embedding) -> Result<f64, ScoringError> {
    if a.dim() != b.dim() {
        return Err(ScoringError::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    #[default]
    Mean,
    Max,
}

impl AggregationMode {
    pub const ALL: [AggregationMode; 2] = [AggregationMode::Mean, AggregationMode::Max];

    pub fn as_str(self) -> &'static str {
        match self {
            AggregationMode::Mean => "mean",
            AggregationMode::Max => "max",
        }
    }
}

impl fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AggregationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mean" | "avg" | "average" => Ok(AggregationMode::Mean),
            "max" => Ok(AggregationMode::Max),
            other => Err(format!("unknown aggregation mode `{other}` (expected mean or max)")),
        }
    }
}

fn aggregate(sims: &[f64], mode: AggregationMode) -> f64 {
    match mode {
        AggregationMode::Mean => sims.iter().sum::<f64>() / sims.len() as f64,
        AggregationMode::Max => sims.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Aggregated similarity of `f` against one class's symptom embeddings.
pub fn score(f: &Embedding, g: &[Embedding], mode: AggregationMode) -> Result<f64, ScoringError> {
    if g.is_empty() {
        return Err(ScoringError::EmptyDescriptors { class_id: String::new() });
    }
    let sims = g.iter().map(|gi| dot(f, gi)).collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate(&sims, mode))
}

/// One symptom phrase together with its text embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedSymptom {
    pub text: String,
    pub embedding: Embedding,
}

/// The embedded symptom list of one class, in knowledge-base order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedClass {
    pub class_id: String,
    pub symptoms: Vec<EmbeddedSymptom>,
}

impl EmbeddedClass {
    pub fn new(class_id: impl Into<String>, symptoms: Vec<(String, Embedding)>) -> Self {
        EmbeddedClass {
            class_id: class_id.into(),
            symptoms: symptoms
                .into_iter()
                .map(|(text, embedding)| EmbeddedSymptom { text, embedding })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymptomScore {
    pub symptom: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class_id: String,
    pub symptom_scores: Vec<SymptomScore>,
    pub aggregate: f64,
}

/// Per-symptom similarities, per-class aggregates and the predicted class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub classes: Vec<ClassScore>,
    pub predicted: String,
    pub aggregation: AggregationMode,
}

impl ScoreReport {
    pub fn class(&self, class_id: &str) -> Option<&ClassScore> {
        self.classes.iter().find(|c| c.class_id == class_id)
    }

    pub fn predicted_score(&self) -> &ClassScore {
        self.class(&self.predicted).expect("predicted class is always scored")
    }
}

/// Scores `f` against every class and picks the argmax.
///
/// Classes are visited in the given order and a later class must be strictly
/// greater to take over, so ties resolve to the earliest declaration.
pub fn classify(
    f: &Embedding,
    classes: &[EmbeddedClass],
    mode: AggregationMode,
) -> Result<ScoreReport, ScoringError> {
    if classes.is_empty() {
        return Err(ScoringError::NoClasses);
    }
    let mut scored = Vec::with_capacity(classes.len());
    let mut best: Option<(usize, f64)> = None;
    for (idx, class) in classes.iter().enumerate() {
        if class.symptoms.is_empty() {
            return Err(ScoringError::EmptyDescriptors { class_id: class.class_id.clone() });
        }
        let symptom_scores = class
            .symptoms
            .iter()
            .map(|s| {
                dot(f, &s.embedding).map(|score| SymptomScore { symptom: s.text.clone(), score })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let sims: Vec<f64> = symptom_scores.iter().map(|s| s.score).collect();
        let agg = aggregate(&sims, mode);
        match best {
            Some((_, b)) if agg <= b => {}
            _ => best = Some((idx, agg)),
        }
        scored.push(ClassScore {
            class_id: class.class_id.clone(),
            symptom_scores,
            aggregate: agg,
        });
    }
    let (best_idx, _) = best.expect("at least one class");
    Ok(ScoreReport {
        predicted: scored[best_idx].class_id.clone(),
        classes: scored,
        aggregation: mode,
    })
}
