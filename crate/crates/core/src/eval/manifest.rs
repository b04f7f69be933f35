use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EvalError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Image path, absolute or relative to the manifest's directory.
    pub path: String,
    #[serde(alias = "label")]
    pub class_id: String,
}

/// A labeled image list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_id: String,
    /// Ordered label set; must be covered by the knowledge base.
    pub classes: Vec<String>,
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    root: PathBuf,
}

impl DatasetManifest {
    pub fn new(
        dataset_id: impl Into<String>,
        classes: Vec<String>,
        entries: Vec<ManifestEntry>,
        root: impl Into<PathBuf>,
    ) -> Result<Self, EvalError> {
        let m = DatasetManifest { dataset_id: dataset_id.into(), classes, entries, root: root.into() };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |msg: String| Err(EvalError::Manifest(format!("{}: {msg}", self.dataset_id)));
        if self.entries.is_empty() {
            return bad("no entries".into());
        }
        let mut classes = HashSet::new();
        for c in &self.classes {
            if c.trim().is_empty() || !classes.insert(c.as_str()) {
                return bad(format!("empty or duplicate class `{c}`"));
            }
        }
        let mut paths = HashSet::new();
        for e in &self.entries {
            if !classes.contains(e.class_id.as_str()) {
                return bad(format!("entry `{}` has undeclared class `{}`", e.path, e.class_id));
            }
            if !paths.insert(e.path.as_str()) {
                return bad(format!("duplicate path `{}`", e.path));
            }
        }
        Ok(())
    }

    /// Loads a JSON manifest, or a `path,label` CSV whose class list sits in
    /// a sidecar `<stem>.classes.txt`.
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let io = |source| EvalError::Io { path: path.to_path_buf(), source };
        let root = path.parent().unwrap_or(Path::new("")).to_path_buf();
        let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        let mut m = if is_csv {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset").to_string();
            let sidecar = root.join(format!("{stem}.classes.txt"));
            let classes = fs::read_to_string(&sidecar)
                .map_err(|source| EvalError::Io { path: sidecar.clone(), source })?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(String::from)
                .collect();
            let mut reader = csv::Reader::from_path(path).map_err(|e| EvalError::Manifest(e.to_string()))?;
            let mut entries = Vec::new();
            for row in reader.deserialize::<ManifestEntry>() {
                entries.push(row.map_err(|e| EvalError::Manifest(format!("{}: {e}", path.display())))?);
            }
            DatasetManifest { dataset_id: stem, classes, entries, root }
        } else {
            let text = fs::read_to_string(path).map_err(io)?;
            let mut m: DatasetManifest = serde_json::from_str(&text)
                .map_err(|e| EvalError::Manifest(format!("{}: {e}", path.display())))?;
            m.root = root;
            m
        };
        if m.root.as_os_str().is_empty() {
            m.root = PathBuf::from(".");
        }
        m.validate()?;
        Ok(m)
    }

    pub fn save_json(&self, path: &Path) -> Result<(), EvalError> {
        let body = serde_json::to_string_pretty(self).expect("serializable") + "\n";
        fs::write(path, body).map_err(|source| EvalError::Io { path: path.to_path_buf(), source })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn class_counts(&self) -> Vec<(String, usize)> {
        self.classes
            .iter()
            .map(|c| (c.clone(), self.entries.iter().filter(|e| &e.class_id == c).count()))
            .collect()
    }

    /// Content hash that ignores entry order.
    pub fn digest(&self) -> String {
        let mut rows: Vec<(&str, &str)> =
            self.entries.iter().map(|e| (e.path.as_str(), e.class_id.as_str())).collect();
        rows.sort_unstable();
        let mut h = Sha256::new();
        h.update(self.dataset_id.as_bytes());
        h.update([0]);
        for c in &self.classes {
            h.update(c.as_bytes());
            h.update([0]);
        }
        h.update([1]);
        for (p, c) in rows {
            h.update(p.as_bytes());
            h.update([0]);
            h.update(c.as_bytes());
            h.update([0]);
        }
        hex::encode(h.finalize())
    }
}
