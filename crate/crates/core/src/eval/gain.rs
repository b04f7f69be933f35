use serde::{Deserialize, Serialize};

use super::harness::EvalResult;
use super::EvalError;

/// Accuracy of a method, its baseline and the difference, in percent at
/// full precision. Rounding happens only in the `display_*` helpers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub dataset_id: String,
    pub encoder_label: String,
    pub ours: f64,
    pub baseline: f64,
    pub gain: f64,
}

impl GainRow {
    pub fn from_percentages(dataset_id: impl Into<String>, ours: f64, baseline: f64) -> Self {
        GainRow {
            dataset_id: dataset_id.into(),
            encoder_label: String::new(),
            ours,
            baseline,
            gain: ours - baseline,
        }
    }

    pub fn display_ours(&self) -> String {
        format_percent(self.ours)
    }

    pub fn display_baseline(&self) -> String {
        format_percent(self.baseline)
    }

    pub fn display_gain(&self) -> String {
        format_gain(self.gain)
    }
}

/// Two decimals, as in the accuracy tables.
pub fn format_percent(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" { "0.00".into() } else { s }
}

/// Signed, two decimals; a gain that rounds to zero prints as `+0.00`.
pub fn format_gain(v: f64) -> String {
    let s = format!("{v:+.2}");
    if s == "-0.00" { "+0.00".into() } else { s }
}

/// Gain of `ours` over `baseline`; both must come from the same manifest
/// and encoder.
pub fn compare(ours: &EvalResult, baseline: &EvalResult) -> Result<GainRow, EvalError> {
    if ours.config.manifest_digest != baseline.config.manifest_digest {
        return Err(EvalError::Incomparable(format!(
            "results come from different manifests ({} vs {})",
            ours.dataset_id, baseline.dataset_id
        )));
    }
    if ours.config.encoder_fingerprint != baseline.config.encoder_fingerprint {
        return Err(EvalError::Incomparable(format!(
            "results come from different encoders ({} vs {})",
            ours.config.encoder_label, baseline.config.encoder_label
        )));
    }
    let mut row = GainRow::from_percentages(&ours.dataset_id, ours.accuracy_percent(), baseline.accuracy_percent());
    row.encoder_label = ours.config.encoder_label.clone();
    Ok(row)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gain_arithmetic() {
        assert_eq!(GainRow::from_percentages("pneumonia", 76.28, 64.55).display_gain(), "+11.73");
        assert_eq!(GainRow::from_percentages("shenzhen", 68.13, 50.76).display_gain(), "+17.37");
        assert_eq!(GainRow::from_percentages("x", 50.0, 50.0).display_gain(), "+0.00");
        assert_eq!(GainRow::from_percentages("x", 50.0, 61.5).display_gain(), "-11.50");
    }

    #[test]
    fn tiny_negative_gain_is_plus_zero() {
        assert_eq!(format_gain(-1e-9), "+0.00");
        assert_eq!(format_percent(-1e-9), "0.00");
    }
}
