//! Manifest builders for the public datasets' published directory layouts.
//!
//! Category display names are our own choice; no canonical strings exist.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::knowledge::class_id_for;

use super::manifest::{DatasetManifest, ManifestEntry};
use super::EvalError;

pub const TB_CATEGORIES: [&str; 2] = ["Normal lungs", "Tuberculosis"];
pub const PNEUMONIA_CATEGORIES: [&str; 2] = ["Normal lungs", "Pneumonia"];
pub const IDRID_CATEGORIES: [&str; 5] = [
    "No Diabetic Retinopathy",
    "Mild Nonproliferative Retinopathy",
    "Moderate Nonproliferative Retinopathy",
    "Severe Nonproliferative Retinopathy",
    "Proliferative Retinopathy",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// `*_0.png` normal, `*_1.png` tuberculosis.
    Montgomery,
    /// Same naming as Montgomery.
    Shenzhen,
    /// `NORMAL/` and `PNEUMONIA/` folders under `train/` and `val/`
    /// (bacterial and viral merged into one class).
    Pneumonia,
    /// Disease-grading CSVs with a `Retinopathy grade` column, 0..=4.
    Idrid,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Montgomery => "montgomery",
            Preset::Shenzhen => "shenzhen",
            Preset::Pneumonia => "pneumonia",
            Preset::Idrid => "idrid",
        }
    }

    pub fn categories(self) -> &'static [&'static str] {
        match self {
            Preset::Montgomery | Preset::Shenzhen => &TB_CATEGORIES,
            Preset::Pneumonia => &PNEUMONIA_CATEGORIES,
            Preset::Idrid => &IDRID_CATEGORIES,
        }
    }

    pub fn build(self, root: &Path) -> Result<DatasetManifest, EvalError> {
        match self {
            Preset::Montgomery | Preset::Shenzhen => suffix_labeled(self, root),
            Preset::Pneumonia => pneumonia(root),
            Preset::Idrid => idrid(root),
        }
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "montgomery" => Ok(Preset::Montgomery),
            "shenzhen" => Ok(Preset::Shenzhen),
            "pneumonia" => Ok(Preset::Pneumonia),
            "idrid" => Ok(Preset::Idrid),
            other => Err(format!("unknown preset `{other}`")),
        }
    }
}

fn class_ids(preset: Preset) -> Vec<String> {
    preset.categories().iter().map(|c| class_id_for(c)).collect()
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), EvalError> {
    let rd = fs::read_dir(dir).map_err(|source| EvalError::Io { path: dir.to_path_buf(), source })?;
    for item in rd {
        let item = item.map_err(|source| EvalError::Io { path: dir.to_path_buf(), source })?;
        let path = item.path();
        if path.is_dir() {
            walk(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

fn files(root: &Path) -> Result<Vec<PathBuf>, EvalError> {
    let mut out = Vec::new();
    walk(root, &mut out)?;
    out.sort();
    Ok(out)
}

fn has_ext(p: &Path, exts: &[&str]) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| exts.iter().any(|x| e.eq_ignore_ascii_case(x)))
}

fn rel(root: &Path, p: &Path) -> String {
    p.strip_prefix(root).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

fn suffix_labeled(preset: Preset, root: &Path) -> Result<DatasetManifest, EvalError> {
    let classes = class_ids(preset);
    let mut entries = Vec::new();
    for p in files(root)? {
        if !has_ext(&p, &["png"]) {
            continue;
        }
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let class = if stem.ends_with("_0") {
            &classes[0]
        } else if stem.ends_with("_1") {
            &classes[1]
        } else {
            continue;
        };
        entries.push(ManifestEntry { path: rel(root, &p), class_id: class.clone() });
    }
    DatasetManifest::new(preset.name(), classes, entries, root)
}

fn pneumonia(root: &Path) -> Result<DatasetManifest, EvalError> {
    let classes = class_ids(Preset::Pneumonia);
    let mut entries = Vec::new();
    for p in files(root)? {
        if !has_ext(&p, &["jpeg", "jpg", "png"]) {
            continue;
        }
        let parts: Vec<String> = p
            .strip_prefix(root)
            .unwrap_or(&p)
            .components()
            .map(|c| c.as_os_str().to_string_lossy().to_ascii_lowercase())
            .collect();
        if parts.iter().any(|s| s == "test") {
            continue;
        }
        let class = match parts.iter().rev().nth(1).map(String::as_str) {
            Some("normal") => &classes[0],
            Some("pneumonia") => &classes[1],
            _ => continue,
        };
        entries.push(ManifestEntry { path: rel(root, &p), class_id: class.clone() });
    }
    DatasetManifest::new(Preset::Pneumonia.name(), classes, entries, root)
}

fn idrid(root: &Path) -> Result<DatasetManifest, EvalError> {
    let classes = class_ids(Preset::Idrid);
    let all = files(root)?;
    let images: Vec<&PathBuf> = all.iter().filter(|p| has_ext(p, &["jpg", "jpeg", "png", "tif"])).collect();
    let mut entries = Vec::new();
    for csv_path in all.iter().filter(|p| has_ext(p, &["csv"])) {
        let mut reader = csv::Reader::from_path(csv_path).map_err(|e| EvalError::Manifest(e.to_string()))?;
        let headers = reader.headers().map_err(|e| EvalError::Manifest(e.to_string()))?.clone();
        let find = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
        let (Some(name_col), Some(grade_col)) = (find("Image name"), find("Retinopathy grade")) else {
            continue;
        };
        for row in reader.records() {
            let row = row.map_err(|e| EvalError::Manifest(format!("{}: {e}", csv_path.display())))?;
            let name = row.get(name_col).unwrap_or_default().trim();
            if name.is_empty() {
                continue;
            }
            let grade: usize = row
                .get(grade_col)
                .and_then(|g| g.trim().parse().ok())
                .filter(|g| *g < classes.len())
                .ok_or_else(|| EvalError::Manifest(format!("{name}: bad retinopathy grade")))?;
            let image = images
                .iter()
                .find(|p| p.file_stem().and_then(|s| s.to_str()) == Some(name))
                .ok_or_else(|| EvalError::Manifest(format!("image `{name}` listed in {} not found", csv_path.display())))?;
            entries.push(ManifestEntry { path: rel(root, image), class_id: classes[grade].clone() });
        }
    }
    DatasetManifest::new(Preset::Idrid.name(), classes, entries, root)
}
