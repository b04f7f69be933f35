//! Aligned text tables and CSV exports for results, gains and sweeps.

use super::gain::{format_percent, GainRow};
use super::harness::EvalResult;
use super::sweep::SweepGrid;

fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|i| rows.iter().filter_map(|r| r.get(i)).map(|c| c.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (i, cell) in row.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            line.push_str(cell);
            if i + 1 < row.len() {
                line.extend(std::iter::repeat_n(' ', widths[i] - cell.chars().count()));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

fn csv_string(rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

pub fn result_text(r: &EvalResult) -> String {
    let c = &r.config;
    let mut out = align(&[
        vec!["dataset".into(), format!("{} ({} images, {} failed)", r.dataset_id, r.total, r.failures.len())],
        vec!["encoder".into(), c.encoder_label.clone()],
        vec![
            "kb".into(),
            format!("{} ({}, {})", c.kb_id, c.prompt_variant.as_deref().unwrap_or("mixed prompts"), c.aggregation),
        ],
        vec!["accuracy".into(), format!("{}%", format_percent(r.accuracy_percent()))],
    ]);
    out.push('\n');
    let mut rows = vec![vec!["class".into(), "support".into(), "correct".into(), "acc %".into()]];
    for t in &r.per_class {
        let acc = if t.support == 0 { "-".into() } else { format_percent(100.0 * t.correct as f64 / t.support as f64) };
        rows.push(vec![t.class_id.clone(), t.support.to_string(), t.correct.to_string(), acc]);
    }
    out.push_str(&align(&rows));
    out.push_str("\nconfusion (rows: truth, columns: predicted)\n");
    let mut rows = vec![std::iter::once(String::new()).chain(r.classes.iter().cloned()).collect::<Vec<_>>()];
    for (i, class) in r.classes.iter().enumerate() {
        rows.push(std::iter::once(class.clone()).chain(r.confusion[i].iter().map(usize::to_string)).collect());
    }
    out.push_str(&align(&rows));
    if !r.failures.is_empty() {
        out.push_str("\nfailed images\n");
        for f in &r.failures {
            out.push_str(&format!("  {}: {}\n", f.path, f.error));
        }
    }
    out
}

/// One row per result, the shape of an accuracy table.
pub fn results_csv(results: &[EvalResult]) -> String {
    let mut rows = vec![["dataset", "encoder", "kb", "prompt", "aggregation", "images", "correct", "accuracy"]
        .map(String::from)
        .to_vec()];
    for r in results {
        rows.push(vec![
            r.dataset_id.clone(),
            r.config.encoder_label.clone(),
            r.config.kb_id.clone(),
            r.config.prompt_variant.clone().unwrap_or_default(),
            r.config.aggregation.to_string(),
            r.total.to_string(),
            r.correct.to_string(),
            format_percent(r.accuracy_percent()),
        ]);
    }
    csv_string(rows)
}

pub fn gains_text(rows: &[GainRow]) -> String {
    let mut t = vec![["dataset", "encoder", "ours %", "baseline %", "gain"].map(String::from).to_vec()];
    for g in rows {
        t.push(vec![g.dataset_id.clone(), g.encoder_label.clone(), g.display_ours(), g.display_baseline(), g.display_gain()]);
    }
    align(&t)
}

pub fn gains_csv(rows: &[GainRow]) -> String {
    let mut t = vec![["dataset", "encoder", "ours", "baseline", "gain"].map(String::from).to_vec()];
    for g in rows {
        t.push(vec![g.dataset_id.clone(), g.encoder_label.clone(), g.display_ours(), g.display_baseline(), g.display_gain()]);
    }
    csv_string(t)
}

fn sweep_rows(grid: &SweepGrid) -> Vec<Vec<String>> {
    let mut t = vec![std::iter::once("encoder".to_string())
        .chain(std::iter::once("aggregation".to_string()))
        .chain(grid.columns.iter().cloned())
        .collect::<Vec<_>>()];
    for (i, row) in grid.rows.iter().enumerate() {
        let mut line = vec![row.encoder_label.clone(), row.mode.to_string()];
        for c in 0..grid.columns.len() {
            line.push(match grid.cell(i, c).accuracy() {
                Some(a) => format_percent(100.0 * a),
                None => "error".into(),
            });
        }
        t.push(line);
    }
    let mut best = vec!["Best Acc".to_string(), String::new()];
    for b in &grid.best {
        best.push(b.as_ref().map_or_else(|| "-".into(), |b| format_percent(100.0 * b.accuracy)));
    }
    t.push(best);
    t
}

pub fn sweep_text(grid: &SweepGrid) -> String {
    let mut out = format!("dataset {}\n\n", grid.dataset_id);
    out.push_str(&align(&sweep_rows(grid)));
    let failures: Vec<_> = grid.failures().collect();
    if !failures.is_empty() {
        out.push_str("\nfailed cells\n");
        for c in failures {
            let row = &grid.rows[c.row];
            out.push_str(&format!(
                "  {} / {} / {}: {}\n",
                row.encoder_label,
                row.mode,
                grid.columns[c.column],
                c.error.as_deref().unwrap_or_default()
            ));
        }
    }
    out
}

pub fn sweep_csv(grid: &SweepGrid) -> String {
    csv_string(sweep_rows(grid))
}
