use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoders::{sha256_hex, Encoder};
use crate::knowledge::{KnowledgeBase, CATEGORY_NAME_PROMPT_ID};
use crate::scoring::{classify, AggregationMode, EmbeddedClass, Embedding};

use super::manifest::DatasetManifest;
use super::EvalError;

/// Placeholder for the optional wrapper applied to symptom phrases before
/// text encoding, e.g. `a chest X-ray showing {symptom}`.
pub const SYMPTOM_PLACEHOLDER: &str = "{symptom}";

const TEXT_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub mode: AggregationMode,
    /// Abort on the first unreadable image instead of recording it.
    pub strict: bool,
    pub workers: usize,
    pub symptom_template: Option<String>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            mode: AggregationMode::Mean,
            strict: true,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            symptom_template: None,
        }
    }
}

impl EvalOptions {
    pub fn with_mode(mut self, mode: AggregationMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.workers == 0 {
            return Err(EvalError::ConfigMismatch("worker count must be at least 1".into()));
        }
        if let Some(t) = &self.symptom_template {
            if t.matches(SYMPTOM_PLACEHOLDER).count() != 1 {
                return Err(EvalError::ConfigMismatch(format!(
                    "symptom template must contain {SYMPTOM_PLACEHOLDER} exactly once"
                )));
            }
        }
        Ok(())
    }

    fn wrap(&self, symptom: &str) -> String {
        match &self.symptom_template {
            Some(t) => t.replacen(SYMPTOM_PLACEHOLDER, symptom, 1),
            None => symptom.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub text_hits: usize,
    pub text_misses: usize,
    pub image_hits: usize,
    pub image_misses: usize,
}

/// Memoizes text embeddings by (encoder fingerprint, text) and image
/// embeddings by (encoder fingerprint, image sha256). Image embeddings can
/// also be persisted under a directory.
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    text: RwLock<HashMap<(String, String), Embedding>>,
    images: RwLock<HashMap<(String, String), Embedding>>,
    disk: Option<PathBuf>,
    text_hits: AtomicUsize,
    text_misses: AtomicUsize,
    image_hits: AtomicUsize,
    image_misses: AtomicUsize,
}

impl EmbeddingCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_disk(dir: impl Into<PathBuf>) -> Self {
        EmbeddingCache { disk: Some(dir.into()), ..Self::default() }
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            text_hits: self.text_hits.load(Ordering::Relaxed),
            text_misses: self.text_misses.load(Ordering::Relaxed),
            image_hits: self.image_hits.load(Ordering::Relaxed),
            image_misses: self.image_misses.load(Ordering::Relaxed),
        }
    }

    /// Embeds texts, encoding only the ones not seen before for this encoder.
    pub fn texts(&self, encoder: &dyn Encoder, texts: &[String]) -> Result<Vec<Embedding>, EvalError> {
        let fp = encoder.fingerprint().to_string();
        let mut missing: Vec<String> = Vec::new();
        {
            let map = self.text.read().expect("text cache lock");
            let mut queued = HashSet::new();
            for t in texts {
                if map.contains_key(&(fp.clone(), t.clone())) {
                    self.text_hits.fetch_add(1, Ordering::Relaxed);
                } else {
                    self.text_misses.fetch_add(1, Ordering::Relaxed);
                    if queued.insert(t.as_str()) {
                        missing.push(t.clone());
                    }
                }
            }
        }
        for chunk in missing.chunks(TEXT_BATCH) {
            let embs = encoder.encode_texts(chunk).map_err(EvalError::Encoder)?;
            let mut map = self.text.write().expect("text cache lock");
            for (t, e) in chunk.iter().zip(embs) {
                map.insert((fp.clone(), t.clone()), e);
            }
        }
        let map = self.text.read().expect("text cache lock");
        Ok(texts.iter().map(|t| map[&(fp.clone(), t.clone())].clone()).collect())
    }

    fn disk_path(&self, fp: &str, sha: &str) -> Option<PathBuf> {
        self.disk.as_ref().map(|d| d.join("images").join(&fp[..fp.len().min(16)]).join(format!("{sha}.json")))
    }

    /// Embeds one encoded image file's bytes.
    pub fn image(&self, encoder: &dyn Encoder, raw: &[u8]) -> Result<Embedding, crate::EncoderError> {
        let fp = encoder.fingerprint().to_string();
        let key = (fp.clone(), sha256_hex(raw));
        if let Some(e) = self.images.read().expect("image cache lock").get(&key) {
            self.image_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(e.clone());
        }
        let disk = self.disk_path(&fp, &key.1);
        if let Some(e) = disk.as_deref().and_then(read_cached) {
            if e.dim() == encoder.dim() {
                self.image_hits.fetch_add(1, Ordering::Relaxed);
                self.images.write().expect("image cache lock").insert(key, e.clone());
                return Ok(e);
            }
        }
        self.image_misses.fetch_add(1, Ordering::Relaxed);
        let e = encoder.encode_image_bytes(raw)?;
        if let Some(path) = disk {
            // a failed write only costs a recompute next time
            let _ = write_cached(&path, &e);
        }
        self.images.write().expect("image cache lock").insert(key, e.clone());
        Ok(e)
    }
}

fn read_cached(path: &Path) -> Option<Embedding> {
    serde_json::from_str(&fs::read_to_string(path).ok()?).ok()
}

fn write_cached(path: &Path, e: &Embedding) -> std::io::Result<()> {
    fs::create_dir_all(path.parent().expect("cache path has parent"))?;
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, serde_json::to_vec(e).expect("serializable"))?;
    fs::rename(tmp, path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTally {
    pub class_id: String,
    pub support: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub path: String,
    pub truth: String,
    pub predicted: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemFailure {
    pub path: String,
    pub error: String,
}

/// Settings that produced a result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub encoder_fingerprint: String,
    pub encoder_label: String,
    pub kb_id: String,
    pub aggregation: AggregationMode,
    pub prompt_variant: Option<String>,
    pub manifest_digest: String,
    pub strict: bool,
    pub symptom_template: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub dataset_id: String,
    /// Knowledge-base class order; indexes the confusion matrix.
    pub classes: Vec<String>,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub per_class: Vec<ClassTally>,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub predictions: Vec<Prediction>,
    pub failures: Vec<ItemFailure>,
    pub config: ConfigEcho,
}

impl EvalResult {
    pub fn accuracy_percent(&self) -> f64 {
        self.accuracy * 100.0
    }

    pub fn trace(&self) -> usize {
        (0..self.classes.len()).map(|i| self.confusion[i][i]).sum()
    }
}

/// Evaluates manifests against knowledge bases, sharing embedding caches
/// across calls.
#[derive(Debug, Default)]
pub struct Evaluator {
    cache: EmbeddingCache,
}

impl Evaluator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_cache(cache: EmbeddingCache) -> Self {
        Evaluator { cache }
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    /// Text-embeds every symptom of `kb`, keeping knowledge-base order.
    pub fn embed_kb(
        &self,
        kb: &KnowledgeBase,
        encoder: &dyn Encoder,
        opts: &EvalOptions,
    ) -> Result<Vec<EmbeddedClass>, EvalError> {
        opts.validate()?;
        if let Some(fp) = &kb.encoder_fingerprint {
            if fp != encoder.fingerprint() {
                return Err(EvalError::ConfigMismatch(format!(
                    "knowledge base `{}` was built for encoder {fp}, not {}",
                    kb.kb_id,
                    encoder.fingerprint()
                )));
            }
        }
        let texts: Vec<String> =
            kb.classes.iter().flat_map(|c| c.symptoms.iter().map(|s| opts.wrap(s))).collect();
        let mut embs = self.cache.texts(encoder, &texts)?.into_iter();
        Ok(kb
            .classes
            .iter()
            .map(|c| {
                let symptoms = c.symptoms.iter().map(|s| (s.clone(), embs.next().expect("one per symptom")));
                EmbeddedClass::new(c.class_id.clone(), symptoms.collect())
            })
            .collect())
    }

    pub fn evaluate(
        &self,
        manifest: &DatasetManifest,
        kb: &KnowledgeBase,
        encoder: &dyn Encoder,
        opts: &EvalOptions,
    ) -> Result<EvalResult, EvalError> {
        let classes: Vec<String> = kb.class_ids().map(String::from).collect();
        let missing: Vec<String> =
            manifest.classes.iter().filter(|c| !classes.contains(c)).cloned().collect();
        if !missing.is_empty() {
            return Err(EvalError::ClassMismatch { kb_id: kb.kb_id.clone(), missing });
        }
        let embedded = self.embed_kb(kb, encoder, opts)?;

        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| EvalError::ConfigMismatch(e.to_string()))?;
        let outcomes: Vec<Result<(String, f64), EvalError>> = pool.install(|| {
            manifest
                .entries
                .par_iter()
                .map(|entry| {
                    let path = manifest.resolve(entry);
                    let raw = fs::read(&path).map_err(|source| EvalError::Io { path: path.clone(), source })?;
                    let f = self
                        .cache
                        .image(encoder, &raw)
                        .map_err(|source| EvalError::Encode { path: path.clone(), source })?;
                    let report = classify(&f, &embedded, opts.mode)?;
                    let score = report.predicted_score().aggregate;
                    Ok((report.predicted, score))
                })
                .collect()
        });

        let index: HashMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let n = classes.len();
        let mut confusion = vec![vec![0usize; n]; n];
        let mut predictions = Vec::new();
        let mut failures = Vec::new();
        for (entry, outcome) in manifest.entries.iter().zip(outcomes) {
            match outcome {
                Ok((predicted, score)) => {
                    confusion[index[entry.class_id.as_str()]][index[predicted.as_str()]] += 1;
                    predictions.push(Prediction {
                        path: entry.path.clone(),
                        truth: entry.class_id.clone(),
                        predicted,
                        score,
                    });
                }
                Err(e) if opts.strict => return Err(e),
                Err(e) => failures.push(ItemFailure { path: entry.path.clone(), error: e.to_string() }),
            }
        }
        let total = predictions.len();
        if total == 0 {
            return Err(EvalError::NothingEvaluated { failures: failures.len() });
        }
        let per_class: Vec<ClassTally> = classes
            .iter()
            .enumerate()
            .map(|(i, c)| ClassTally { class_id: c.clone(), support: confusion[i].iter().sum(), correct: confusion[i][i] })
            .collect();
        let correct = per_class.iter().map(|t| t.correct).sum();
        Ok(EvalResult {
            dataset_id: manifest.dataset_id.clone(),
            classes,
            total,
            correct,
            accuracy: correct as f64 / total as f64,
            per_class,
            confusion,
            predictions,
            failures,
            config: ConfigEcho {
                encoder_fingerprint: encoder.fingerprint().to_string(),
                encoder_label: encoder.label().to_string(),
                kb_id: kb.kb_id.clone(),
                aggregation: opts.mode,
                prompt_variant: prompt_label(kb),
                manifest_digest: manifest.digest(),
                strict: opts.strict,
                symptom_template: opts.symptom_template.clone(),
            },
        })
    }
}

fn prompt_label(kb: &KnowledgeBase) -> Option<String> {
    if kb.classes.iter().all(|c| c.prompt_id == CATEGORY_NAME_PROMPT_ID) {
        return Some(CATEGORY_NAME_PROMPT_ID.into());
    }
    kb.prompt_variant().map(|v| v.as_str().to_string())
}

/// One-shot evaluation with a fresh cache.
pub fn evaluate(
    manifest: &DatasetManifest,
    kb: &KnowledgeBase,
    encoder: &dyn Encoder,
    opts: &EvalOptions,
) -> Result<EvalResult, EvalError> {
    Evaluator::new().evaluate(manifest, kb, encoder, opts)
}
