#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use symptomclip::encoders::{sha256_hex, Encoder, EncoderError};
use symptomclip::eval::{DatasetManifest, ManifestEntry};
use symptomclip::knowledge::{ClassDescriptor, KnowledgeBase};
use symptomclip::Embedding;

/// Image files hold comma-separated floats; text embeddings come from a
/// lookup table. Unknown texts and unparseable files are errors.
pub struct TableEncoder {
    pub fingerprint: String,
    pub texts: HashMap<String, Vec<f32>>,
}

impl TableEncoder {
    pub fn new(texts: &[(&str, &[f32])]) -> Self {
        let texts: HashMap<String, Vec<f32>> = texts.iter().map(|(t, v)| (t.to_string(), v.to_vec())).collect();
        let mut keys: Vec<_> = texts.iter().map(|(k, v)| format!("{k}={v:?}")).collect();
        keys.sort();
        TableEncoder { fingerprint: sha256_hex(keys.join(";").as_bytes()), texts }
    }
}

impl Encoder for TableEncoder {
    fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    fn label(&self) -> &str {
        "table"
    }

    fn dim(&self) -> usize {
        self.texts.values().next().map_or(0, Vec::len)
    }

    fn encode_image_bytes(&self, raw: &[u8]) -> Result<Embedding, EncoderError> {
        let text = std::str::from_utf8(raw).map_err(|e| EncoderError::Decode(e.to_string()))?;
        let values = text
            .trim()
            .split(',')
            .map(|v| v.trim().parse::<f32>().map_err(|e| EncoderError::Decode(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Embedding::new(values)?.l2_normalize()?)
    }

    fn encode_texts(&self, texts: &[String]) -> Result<Vec<Embedding>, EncoderError> {
        if texts.is_empty() {
            return Err(EncoderError::EmptyBatch);
        }
        texts
            .iter()
            .map(|t| {
                let v = self.texts.get(t).ok_or_else(|| EncoderError::Asset(format!("no embedding for `{t}`")))?;
                Ok(Embedding::new(v.clone())?.l2_normalize()?)
            })
            .collect()
    }
}

pub fn manual_kb(id: &str, classes: &[(&str, &[&str])]) -> KnowledgeBase {
    KnowledgeBase::new(
        id,
        classes
            .iter()
            .map(|(c, s)| ClassDescriptor::manual(*c, *c, s.iter().map(|x| x.to_string()).collect()))
            .collect(),
    )
    .unwrap()
}

/// Writes one image file per (vector, label) and returns the manifest.
pub fn write_dataset(dir: &Path, id: &str, classes: &[&str], items: &[(Vec<f32>, &str)]) -> DatasetManifest {
    let mut entries = Vec::new();
    for (i, (v, label)) in items.iter().enumerate() {
        let name = format!("img_{i:04}.vec");
        let body: Vec<String> = v.iter().map(f32::to_string).collect();
        std::fs::write(dir.join(&name), body.join(",")).unwrap();
        entries.push(ManifestEntry { path: name, class_id: label.to_string() });
    }
    DatasetManifest::new(id, classes.iter().map(|c| c.to_string()).collect(), entries, dir).unwrap()
}

pub fn bundle_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../assets/tiny-clip")
}

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}
