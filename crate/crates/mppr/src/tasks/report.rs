//! Per-run metric records and their aggregates, emitted as JSON lines
//! plus a single aggregate JSON object.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Everything recorded about one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub task: String,
    pub seed: u64,
    pub config_hash: String,
    pub epochs_run: usize,
    /// Epoch whose snapshot was restored by early stopping.
    pub best_epoch: Option<usize>,
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    /// Validation accuracy (node classification) or AUC (link prediction)
    /// per epoch.
    pub val_metrics: Vec<f64>,
    pub test_accuracy: Option<f64>,
    pub test_auc: Option<f64>,
    pub test_ap: Option<f64>,
    pub total_seconds: f64,
    pub mean_epoch_seconds: f64,
    /// Threshold used when the operator was sparsified before the beta
    /// power, if the lazy path was taken.
    pub sparsify_threshold: Option<f64>,
    /// Times a zero probability had to be clamped inside the loss.
    pub loss_clamps: usize,
}

/// Mean/variance summary over a batch of runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub task: String,
    pub config_hash: String,
    pub n_runs: usize,
    pub mean_accuracy: Option<f64>,
    pub var_accuracy: Option<f64>,
    pub mean_auc: Option<f64>,
    pub var_auc: Option<f64>,
    pub mean_ap: Option<f64>,
    pub var_ap: Option<f64>,
    pub mean_epochs: f64,
    pub mean_total_seconds: f64,
    pub mean_epoch_seconds: f64,
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

fn summarize(values: Vec<f64>) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        (None, None)
    } else {
        let (m, v) = mean_var(&values);
        (Some(m), Some(v))
    }
}

/// Summarizes a batch of runs (mean and sample variance of each metric,
/// mean epoch counts and timings).
pub fn aggregate(reports: &[RunReport]) -> Result<Aggregate> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Domain("no reports to aggregate".into()))?;
    let collect = |f: fn(&RunReport) -> Option<f64>| -> Vec<f64> {
        reports.iter().filter_map(f).collect()
    };
    let (mean_accuracy, var_accuracy) = summarize(collect(|r| r.test_accuracy));
    let (mean_auc, var_auc) = summarize(collect(|r| r.test_auc));
    let (mean_ap, var_ap) = summarize(collect(|r| r.test_ap));
    let n = reports.len() as f64;
    Ok(Aggregate {
        task: first.task.clone(),
        config_hash: first.config_hash.clone(),
        n_runs: reports.len(),
        mean_accuracy,
        var_accuracy,
        mean_auc,
        var_auc,
        mean_ap,
        var_ap,
        mean_epochs: reports.iter().map(|r| r.epochs_run as f64).sum::<f64>() / n,
        mean_total_seconds: reports.iter().map(|r| r.total_seconds).sum::<f64>() / n,
        mean_epoch_seconds: reports.iter().map(|r| r.mean_epoch_seconds).sum::<f64>() / n,
    })
}

/// One JSON object per line, one line per run.
pub fn write_reports_jsonl(path: impl AsRef<Path>, reports: &[RunReport]) -> Result<()> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = std::fs::File::create(path).map_err(|e| Error::io(&display, e))?;
    let mut w = std::io::BufWriter::new(file);
    for report in reports {
        let line = serde_json::to_string(report)
            .map_err(|e| Error::Domain(format!("report serialization: {e}")))?;
        writeln!(w, "{line}").map_err(|e| Error::io(&display, e))?;
    }
    w.flush().map_err(|e| Error::io(&display, e))
}
