use serde::{Deserialize, Serialize};

use crate::encoders::Encoder;
use crate::knowledge::KnowledgeBase;
use crate::scoring::AggregationMode;

use super::harness::{EvalOptions, EvalResult, Evaluator};
use super::manifest::DatasetManifest;

/// A grid row: one encoder under one aggregation mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub encoder_label: String,
    pub encoder_fingerprint: String,
    pub mode: AggregationMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub row: usize,
    pub column: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<EvalResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SweepCell {
    pub fn accuracy(&self) -> Option<f64> {
        self.result.as_ref().map(|r| r.accuracy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestCell {
    pub row: usize,
    pub accuracy: f64,
}

/// Results for every (encoder, mode) row and knowledge-base column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub dataset_id: String,
    /// Knowledge-base ids.
    pub columns: Vec<String>,
    pub rows: Vec<SweepRow>,
    /// Row-major, `rows.len() * columns.len()` cells.
    pub cells: Vec<SweepCell>,
    /// Per column, the highest accuracy over rows; the earliest row wins ties.
    pub best: Vec<Option<BestCell>>,
}

impl SweepGrid {
    pub fn cell(&self, row: usize, column: usize) -> &SweepCell {
        &self.cells[row * self.columns.len() + column]
    }

    pub fn failures(&self) -> impl Iterator<Item = &SweepCell> {
        self.cells.iter().filter(|c| c.error.is_some())
    }
}

impl Evaluator {
    /// Evaluates the full Cartesian grid. A failing cell records its error
    /// and the remaining cells still run. Image embeddings are shared across
    /// modes and knowledge bases, text embeddings across modes.
    pub fn sweep(
        &self,
        manifest: &DatasetManifest,
        kbs: &[KnowledgeBase],
        encoders: &[&dyn Encoder],
        modes: &[AggregationMode],
        opts: &EvalOptions,
    ) -> SweepGrid {
        let columns: Vec<String> = kbs.iter().map(|k| k.kb_id.clone()).collect();
        let mut rows = Vec::new();
        let mut cells = Vec::new();
        for encoder in encoders {
            for &mode in modes {
                let row = rows.len();
                rows.push(SweepRow {
                    encoder_label: encoder.label().to_string(),
                    encoder_fingerprint: encoder.fingerprint().to_string(),
                    mode,
                });
                let cell_opts = opts.clone().with_mode(mode);
                for (column, kb) in kbs.iter().enumerate() {
                    let (result, error) = match self.evaluate(manifest, kb, *encoder, &cell_opts) {
                        Ok(r) => (Some(r), None),
                        Err(e) => (None, Some(e.to_string())),
                    };
                    cells.push(SweepCell { row, column, result, error });
                }
            }
        }
        let best = (0..columns.len())
            .map(|column| {
                let mut best: Option<BestCell> = None;
                for cell in cells.iter().filter(|c| c.column == column) {
                    if let Some(acc) = cell.accuracy() {
                        if best.as_ref().is_none_or(|b| acc > b.accuracy) {
                            best = Some(BestCell { row: cell.row, accuracy: acc });
                        }
                    }
                }
                best
            })
            .collect();
        SweepGrid { dataset_id: manifest.dataset_id.clone(), columns, rows, cells, best }
    }
}
