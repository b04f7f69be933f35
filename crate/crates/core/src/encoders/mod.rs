//! Images and symptom strings to embeddings.
//!
//! An [`EncoderBundle`] is described by a JSON asset manifest naming the two
//! ONNX graphs (visual and text tower), the BPE merges file, the
//! preprocessing constants and a SHA-256 digest for each file. Digests are
//! checked on load, and the bundle fingerprint is derived from them.

mod backend;
pub mod preprocess;
pub mod tokenizer;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use backend::{Backend, Graph, OnnxBackend, TensorData};
pub use preprocess::{preprocess_image, ImageTensor, PreprocessConfig};
pub use tokenizer::{BpeTokenizer, TokenSequence};

use crate::scoring::{Embedding, ScoringError};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("image has zero area")]
    EmptyImage,
    #[error("asset error: {0}")]
    Asset(String),
    #[error("invalid asset manifest: {0}")]
    Manifest(String),
    #[error("integrity check failed for {path}: expected sha256 {expected}, found {found}")]
    Integrity { path: PathBuf, expected: String, found: String },
    #[error("backend error in graph `{graph}`: {message}")]
    Backend { graph: String, message: String },
    #[error("nothing to encode")]
    EmptyBatch,
    #[error("encoder output dimension {found} does not match declared dimension {expected}")]
    Dimension { expected: usize, found: usize },
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// What the evaluation harness needs from an encoder pair.
pub trait Encoder: Send + Sync {
    /// Content hash identifying the weights and preprocessing.
    fn fingerprint(&self) -> &str;
    /// Human-readable model name.
    fn label(&self) -> &str;
    fn dim(&self) -> usize;
    fn encode_image_bytes(&self, raw: &[u8]) -> Result<Embedding, EncoderError>;
    fn encode_texts(&self, texts: &[String]) -> Result<Vec<Embedding>, EncoderError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileAsset {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphAsset {
    pub path: String,
    pub sha256: String,
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizerAsset {
    pub merges: FileAsset,
    #[serde(default = "default_context_length")]
    pub context_length: usize,
}

fn default_context_length() -> usize {
    tokenizer::CONTEXT_LENGTH
}

/// On-disk description of an encoder bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetManifest {
    pub format_version: u32,
    pub model_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub embedding_dim: usize,
    pub visual: GraphAsset,
    pub text: GraphAsset,
    pub tokenizer: TokenizerAsset,
    pub preprocess: PreprocessConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub golden: Option<FileAsset>,
}

impl AssetManifest {
    pub fn from_file(path: &Path) -> Result<Self, EncoderError> {
        let text = fs::read_to_string(path)
            .map_err(|source| EncoderError::Io { path: path.to_path_buf(), source })?;
        let manifest: AssetManifest =
            serde_json::from_str(&text).map_err(|e| EncoderError::Manifest(e.to_string()))?;
        if manifest.format_version != MANIFEST_FORMAT_VERSION {
            return Err(EncoderError::Manifest(format!(
                "unsupported format_version {}",
                manifest.format_version
            )));
        }
        if manifest.embedding_dim == 0 {
            return Err(EncoderError::Manifest("embedding_dim must be positive".into()));
        }
        manifest.preprocess.validate()?;
        Ok(manifest)
    }

    /// Stable digest over the asset hashes and preprocessing constants.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.model_name.as_bytes());
        for part in [
            &self.visual.sha256,
            &self.visual.output,
            &self.text.sha256,
            &self.text.output,
            &self.tokenizer.merges.sha256,
        ] {
            h.update(b"\0");
            h.update(part.as_bytes());
        }
        h.update(format!("\0{}\0{}", self.embedding_dim, self.tokenizer.context_length));
        h.update(serde_json::to_vec(&self.preprocess).expect("serializable"));
        hex::encode(h.finalize())
    }
}

pub fn sha256_file(path: &Path) -> Result<String, EncoderError> {
    let bytes =
        fs::read(path).map_err(|source| EncoderError::Io { path: path.to_path_buf(), source })?;
    Ok(sha256_hex(&bytes))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn verified_path(root: &Path, rel: &str, expected: &str) -> Result<PathBuf, EncoderError> {
    let path = root.join(rel);
    let found = sha256_file(&path)?;
    if !found.eq_ignore_ascii_case(expected) {
        return Err(EncoderError::Integrity { path, expected: expected.to_string(), found });
    }
    Ok(path)
}

/// Visual and text towers plus tokenizer and preprocessing constants.
///
/// Immutable after load; share it across threads by reference.
#[derive(Debug)]
pub struct EncoderBundle {
    root: PathBuf,
    manifest: AssetManifest,
    fingerprint: String,
    tokenizer: BpeTokenizer,
    visual: Box<dyn Graph>,
    text: Box<dyn Graph>,
}

impl EncoderBundle {
    /// Loads a bundle from its manifest (or from a directory holding
    /// `manifest.json`) using the ONNX backend.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EncoderError> {
        Self::load_with(path, &OnnxBackend)
    }

    pub fn load_with(path: impl AsRef<Path>, backend: &dyn Backend) -> Result<Self, EncoderError> {
        let path = path.as_ref();
        let manifest_path = if path.is_dir() { path.join("manifest.json") } else { path.to_path_buf() };
        let root = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let manifest = AssetManifest::from_file(&manifest_path)?;

        let visual_path = verified_path(&root, &manifest.visual.path, &manifest.visual.sha256)?;
        let text_path = verified_path(&root, &manifest.text.path, &manifest.text.sha256)?;
        let merges_path =
            verified_path(&root, &manifest.tokenizer.merges.path, &manifest.tokenizer.merges.sha256)?;

        let tokenizer = BpeTokenizer::from_file(&merges_path, manifest.tokenizer.context_length)?;

        let visual = backend.load(&visual_path)?;
        let text = backend.load(&text_path)?;
        for (graph, output) in [(&visual, &manifest.visual.output), (&text, &manifest.text.output)] {
            if let Some(found) = graph.output_dim(output) {
                if found != manifest.embedding_dim {
                    return Err(EncoderError::Dimension { expected: manifest.embedding_dim, found });
                }
            }
        }
        let fingerprint = manifest.fingerprint();
        Ok(EncoderBundle { root, manifest, fingerprint, tokenizer, visual, text })
    }

    pub fn manifest(&self) -> &AssetManifest {
        &self.manifest
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn tokenizer(&self) -> &BpeTokenizer {
        &self.tokenizer
    }

    pub fn preprocess_config(&self) -> &PreprocessConfig {
        &self.manifest.preprocess
    }

    pub fn tokenize(&self, text: &str) -> TokenSequence {
        self.tokenizer.tokenize(text)
    }

    pub fn preprocess(&self, raw: &[u8]) -> Result<ImageTensor, EncoderError> {
        preprocess_image(raw, &self.manifest.preprocess)
    }

    fn unit_rows(&self, shape: &[usize], data: Vec<f32>, rows: usize) -> Result<Vec<Embedding>, EncoderError> {
        let d = self.manifest.embedding_dim;
        let found = shape.last().copied().unwrap_or(0);
        if found != d || data.len() != rows * d {
            return Err(EncoderError::Dimension { expected: d, found });
        }
        data.chunks_exact(d)
            .map(|row| Embedding::unit(row.to_vec()).map_err(EncoderError::from))
            .collect()
    }

    pub fn encode_image(&self, img: &ImageTensor) -> Result<Embedding, EncoderError> {
        let mut out = self.encode_images(std::slice::from_ref(img))?;
        Ok(out.remove(0))
    }

    pub fn encode_images(&self, imgs: &[ImageTensor]) -> Result<Vec<Embedding>, EncoderError> {
        if imgs.is_empty() {
            return Err(EncoderError::EmptyBatch);
        }
        let size = imgs[0].size();
        let mut data = Vec::with_capacity(imgs.len() * imgs[0].data().len());
        for img in imgs {
            data.extend_from_slice(img.data());
        }
        let input = TensorData::F32 { shape: vec![imgs.len(), 3, size, size], data };
        let (shape, data) = self.run_single(&*self.visual, &self.manifest.visual, input)?;
        self.unit_rows(&shape, data, imgs.len())
    }

    pub fn encode_texts(&self, texts: &[String]) -> Result<Vec<Embedding>, EncoderError> {
        if texts.is_empty() {
            return Err(EncoderError::EmptyBatch);
        }
        let ctx = self.tokenizer.context_length();
        let mut data = Vec::with_capacity(texts.len() * ctx);
        for t in texts {
            data.extend(self.tokenizer.tokenize(t).ids().iter().map(|&id| i64::from(id)));
        }
        let input = TensorData::I64 { shape: vec![texts.len(), ctx], data };
        let (shape, data) = self.run_single(&*self.text, &self.manifest.text, input)?;
        self.unit_rows(&shape, data, texts.len())
    }

    fn run_single(
        &self,
        graph: &dyn Graph,
        asset: &GraphAsset,
        input: TensorData,
    ) -> Result<(Vec<usize>, Vec<f32>), EncoderError> {
        let outputs = graph.run(vec![(asset.input.clone(), input)])?;
        let (_, tensor) = outputs
            .into_iter()
            .find(|(name, _)| *name == asset.output)
            .ok_or_else(|| EncoderError::Backend {
                graph: graph.name().to_string(),
                message: format!("graph has no output `{}`", asset.output),
            })?;
        tensor.into_f32().ok_or_else(|| EncoderError::Backend {
            graph: graph.name().to_string(),
            message: "expected a float output".into(),
        })
    }

    /// One-line summary for logs.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{} (d={}, fp={})", self.manifest.model_name, self.manifest.embedding_dim, &self.fingerprint[..12]);
        s
    }
}

impl Encoder for EncoderBundle {
    fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    fn label(&self) -> &str {
        &self.manifest.model_name
    }

    fn dim(&self) -> usize {
        self.manifest.embedding_dim
    }

    fn encode_image_bytes(&self, raw: &[u8]) -> Result<Embedding, EncoderError> {
        let tensor = self.preprocess(raw)?;
        self.encode_image(&tensor)
    }

    fn encode_texts(&self, texts: &[String]) -> Result<Vec<Embedding>, EncoderError> {
        EncoderBundle::encode_texts(self, texts)
    }
}
