use std::fmt::Write as _;

use serde::Serialize;

use crate::descriptor::{read_descriptor_file, DatasetManifest, Split};
use crate::error::{Error, Result};

use super::bundle::ModelBundle;
use super::config::{PipelineConfig, Setting};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Prediction {
    pub id: String,
    pub label: String,
    pub predicted: String,
}

/// Test-split results. Rows and columns of `confusion` and `counts` follow
/// `classes`, which is the model's class order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub setting: Setting,
    pub classes: Vec<String>,
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// Row-normalized; all zeros for a class with no test images.
    pub confusion: Vec<Vec<f64>>,
    pub counts: Vec<Vec<usize>>,
    pub per_class_counts: Vec<usize>,
    pub predictions: Vec<Prediction>,
    pub config: PipelineConfig,
}

impl EvaluationReport {
    fn from_predictions(
        config: PipelineConfig,
        classes: Vec<String>,
        predictions: Vec<Prediction>,
    ) -> Self {
        let n = classes.len();
        let index = |name: &str| classes.iter().position(|c| c == name).expect("known class");
        let mut counts = vec![vec![0usize; n]; n];
        for p in &predictions {
            counts[index(&p.label)][index(&p.predicted)] += 1;
        }
        let per_class_counts: Vec<usize> = counts.iter().map(|row| row.iter().sum()).collect();
        let confusion = counts
            .iter()
            .zip(&per_class_counts)
            .map(|(row, &total)| {
                row.iter()
                    .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
                    .collect()
            })
            .collect();
        let correct = (0..n).map(|i| counts[i][i]).sum();
        let total = predictions.len();
        Self {
            setting: config.setting,
            classes,
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
            correct,
            total,
            confusion,
            counts,
            per_class_counts,
            predictions,
            config,
        }
    }

    /// Fraction of test images whose true class is in `group` that were
    /// predicted exactly. `None` when the group has no test images.
    pub fn group_accuracy(&self, group: &[&str]) -> Option<f64> {
        let members: Vec<_> = self
            .predictions
            .iter()
            .filter(|p| group.contains(&p.label.as_str()))
            .collect();
        if members.is_empty() {
            return None;
        }
        let hits = members.iter().filter(|p| p.label == p.predicted).count();
        Some(hits as f64 / members.len() as f64)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Confusion table with rates to two decimals.
    pub fn to_text(&self) -> String {
        let width = self
            .classes
            .iter()
            .map(|c| c.len())
            .max()
            .unwrap_or(0)
            .max(6);
        let mut out = String::new();
        writeln!(out, "setting: {}", self.setting).unwrap();
        writeln!(
            out,
            "accuracy: {:.2}% ({}/{})",
            100.0 * self.accuracy,
            self.correct,
            self.total
        )
        .unwrap();
        write!(out, "{:width$}", "").unwrap();
        for c in &self.classes {
            write!(out, " {c:>width$}").unwrap();
        }
        out.push('\n');
        for (name, row) in self.classes.iter().zip(&self.confusion) {
            write!(out, "{name:<width$}").unwrap();
            for rate in row {
                write!(out, " {rate:>width$.2}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Predicts every test entry of the manifest.
pub fn evaluate(bundle: &ModelBundle, manifest: &DatasetManifest) -> Result<EvaluationReport> {
    let classes = bundle.svm().classes().to_vec();
    let mut predictions = Vec::new();
    for entry in manifest.split(Split::Test) {
        if bundle.svm().class_index(&entry.label).is_none() {
            return Err(Error::UnknownClass(entry.label.clone()));
        }
        let set = read_descriptor_file(manifest.resolve(entry))?.with_image_id(entry.id.clone());
        let predicted = bundle.predict(&set)?.to_string();
        predictions.push(Prediction {
            id: entry.id.clone(),
            label: entry.label.clone(),
            predicted,
        });
    }
    if predictions.is_empty() {
        return Err(Error::InsufficientData("manifest has no test entries".into()));
    }
    Ok(EvaluationReport::from_predictions(
        bundle.config().clone(),
        classes,
        predictions,
    ))
}
