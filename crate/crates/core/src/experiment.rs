//! Multi-run experiments: one fit per split, combined into a labeled report.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetBundle, Protocol, SplitSpec};
use crate::error::{invalid, Error, Result};
use crate::evaluator::EvalReport;
use crate::model::ModelConfig;
use crate::scalar::Scalar;
use crate::trainer::{fit, FitOutcome, TrainConfig};

/// Combined multi-run evaluation tagged with the model variant that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub label: String,
    pub scalar: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub best_epochs: Vec<usize>,
    pub report: EvalReport,
}

impl ExperimentReport {
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub struct Experiment<S> {
    pub runs: Vec<FitOutcome<S>>,
    pub report: ExperimentReport,
}

/// Fit once per split. Run `k` trains with seed `train.seed + k`.
pub fn run_experiment<S: Scalar>(
    bundle: &DatasetBundle,
    splits: &[SplitSpec],
    model: &ModelConfig,
    train: &TrainConfig,
    mut on_run: impl FnMut(usize, &FitOutcome<S>) -> Result<()>,
) -> Result<Experiment<S>> {
    if splits.is_empty() {
        return Err(invalid("at least one split is required"));
    }
    let mut runs = Vec::with_capacity(splits.len());
    for (k, split) in splits.iter().enumerate() {
        let cfg = TrainConfig {
            seed: train.seed.wrapping_add(k as u64),
            ..train.clone()
        };
        let outcome = fit::<S>(bundle, split, model, &cfg)?;
        on_run(k, &outcome)?;
        runs.push(outcome);
    }
    let reports: Vec<EvalReport> = runs.iter().map(|r| r.report.clone()).collect();
    let report = ExperimentReport {
        label: model.label(),
        scalar: S::NAME.to_string(),
        model: model.clone(),
        train: train.clone(),
        best_epochs: runs.iter().map(|r| r.best_epoch).collect(),
        report: EvalReport::combine(&reports)?,
    };
    Ok(Experiment { runs, report })
}

/// One row of the results table; datasets that were not run stay empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: String,
    pub summe_f1: Option<f64>,
    pub tvsum_f1: Option<f64>,
}

impl TableRow {
    /// Row for a report, placed in the column its protocol corresponds to:
    /// max-user under `summe_f1`, everything else under `tvsum_f1`.
    pub fn from_report(method: impl Into<String>, report: &EvalReport) -> Self {
        let (summe_f1, tvsum_f1) = match report.protocol {
            Protocol::MaxUser => (Some(report.grand_mean), None),
            _ => (None, Some(report.grand_mean)),
        };
        Self {
            method: method.into(),
            summe_f1,
            tvsum_f1,
        }
    }

    pub fn average(&self) -> Option<f64> {
        let vals: Vec<f64> = [self.summe_f1, self.tvsum_f1].into_iter().flatten().collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// CSV with header `method,summe_f1,tvsum_f1,average`.
pub fn table_csv(rows: &[TableRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
    let io = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
    w.write_record(["method", "summe_f1", "tvsum_f1", "average"]).map_err(io)?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            fmt(r.summe_f1),
            fmt(r.tvsum_f1),
            fmt(r.average()),
        ])
        .map_err(io)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluator::VideoScore;

    fn report(protocol: Protocol, f1: f64) -> EvalReport {
        EvalReport::combine(&[EvalReport {
            protocol,
            aggregate: f1,
            per_video: vec![VideoScore { video_id: "video_1".into(), f1 }],
            runs: vec![crate::evaluator::RunSummary {
                run: 0,
                aggregate: f1,
                per_video: vec![],
            }],
            grand_mean: f1,
        }])
        .unwrap()
    }

    #[test]
    fn csv_quotes_labels_and_averages() {
        let rows = vec![
            TableRow::from_report("multimodal=on,fssa=fused", &report(Protocol::MeanUser, 0.5)),
            TableRow {
                method: "both".into(),
                summe_f1: Some(0.4),
                tvsum_f1: Some(0.6),
            },
        ];
        let text = table_csv(&rows).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "method,summe_f1,tvsum_f1,average");
        assert_eq!(lines[1], "\"multimodal=on,fssa=fused\",,0.5000,0.5000");
        assert_eq!(lines[2], "both,0.4000,0.6000,0.5000");
        let max = TableRow::from_report("m", &report(Protocol::MaxUser, 0.3));
        assert_eq!(max.summe_f1, Some(0.3));
        assert_eq!(max.tvsum_f1, None);
    }
}
