//! Per-case explanations: every symptom's similarity, ranked, with the
//! predicted class first.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scoring::{AggregationMode, ScoreReport, SymptomScore};

const BAR_WIDTH: usize = 24;
const EIGHTHS: [char; 8] = ['▏', '▎', '▍', '▌', '▋', '▊', '▉', '█'];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("unknown report format `{0}` (expected json, csv or text)")]
    UnknownFormat(String),
    #[error("malformed report: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Text,
}

impl ReportFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
            ReportFormat::Text => "text",
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "text" | "txt" => Ok(ReportFormat::Text),
            _ => Err(ReportError::UnknownFormat(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEvidence {
    pub class_id: String,
    pub aggregate: f64,
    /// Symptoms by score, highest first; ties keep knowledge-base order.
    pub ranked: Vec<SymptomScore>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub encoder_label: String,
    pub encoder_fingerprint: String,
    pub kb_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub image_id: String,
    pub predicted: String,
    pub aggregation: AggregationMode,
    /// Predicted class first, then the others by aggregate score.
    pub classes: Vec<ClassEvidence>,
    /// The predicted class's ranked symptoms.
    pub top_evidence: Vec<SymptomScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ReportConfig>,
}

impl CaseReport {
    pub fn with_config(mut self, config: ReportConfig) -> Self {
        self.config = Some(config);
        self
    }

    pub fn symptom_count(&self) -> usize {
        self.classes.iter().map(|c| c.ranked.len()).sum()
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ReportError> {
        serde_json::from_slice(bytes).map_err(|e| ReportError::Json(e.to_string()))
    }
}

fn rank(scores: &[SymptomScore]) -> Vec<SymptomScore> {
    let mut ranked = scores.to_vec();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    ranked
}

/// Reorders a score report for presentation. Scores are copied, never
/// recomputed.
pub fn build_case_report(report: &ScoreReport, image_id: impl Into<String>) -> CaseReport {
    let mut classes: Vec<ClassEvidence> = report
        .classes
        .iter()
        .map(|c| ClassEvidence { class_id: c.class_id.clone(), aggregate: c.aggregate, ranked: rank(&c.symptom_scores) })
        .collect();
    classes.sort_by(|a, b| {
        let pa = a.class_id != report.predicted;
        let pb = b.class_id != report.predicted;
        pa.cmp(&pb).then(b.aggregate.total_cmp(&a.aggregate))
    });
    let top_evidence = classes.first().map(|c| c.ranked.clone()).unwrap_or_default();
    CaseReport {
        image_id: image_id.into(),
        predicted: report.predicted.clone(),
        aggregation: report.aggregation,
        classes,
        top_evidence,
        config: None,
    }
}

pub fn export_report(report: &CaseReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(report).expect("serializable");
            out.push(b'\n');
            out
        }
        ReportFormat::Csv => to_csv(report),
        ReportFormat::Text => to_text(report).into_bytes(),
    }
}

fn to_csv(report: &CaseReport) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["image_id", "class", "symptom", "score", "predicted"]).expect("in-memory write");
    for class in &report.classes {
        let predicted = (class.class_id == report.predicted).to_string();
        for s in &class.ranked {
            w.write_record([&report.image_id, &class.class_id, &s.symptom, &s.score.to_string(), &predicted])
                .expect("in-memory write");
        }
    }
    w.into_inner().expect("in-memory flush")
}

fn bar(score: f64, max: f64) -> String {
    let eighths = if max > 0.0 && score > 0.0 {
        ((score / max) * (BAR_WIDTH * 8) as f64).round() as usize
    } else {
        0
    };
    let eighths = eighths.min(BAR_WIDTH * 8);
    let mut s: String = std::iter::repeat_n('█', eighths / 8).collect();
    if eighths % 8 > 0 {
        s.push(EIGHTHS[eighths % 8 - 1]);
    }
    let used = s.chars().count();
    s.extend(std::iter::repeat_n(' ', BAR_WIDTH - used));
    s
}

fn to_text(report: &CaseReport) -> String {
    let max = report
        .classes
        .iter()
        .flat_map(|c| c.ranked.iter().map(|s| s.score))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("image      {}\nprediction {}\n", report.image_id, report.predicted);
    if let Some(cfg) = &report.config {
        out.push_str(&format!("encoder    {}\nkb         {}\n", cfg.encoder_label, cfg.kb_id));
    }
    for class in &report.classes {
        let tag = if class.class_id == report.predicted { "  <- predicted" } else { "" };
        out.push_str(&format!("\n{}  {} {:.2}{tag}\n", class.class_id, report.aggregation, class.aggregate));
        for s in &class.ranked {
            out.push_str(&format!("  {} {:>5.2}  {}\n", bar(s.score, max), s.score, s.symptom));
        }
    }
    out
}
