//! Frame-level F1 under the multi-user and single-reference protocols.

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetBundle, Protocol, SplitSpec, VideoRecord};
use crate::error::{invalid, shape, Error, Result};
use crate::model::Model;
use crate::scalar::Scalar;
use crate::selector::ScoreSequence;
use crate::summarizer::{build_summary, summarize_frames, KnapsackValue, SummaryMask, DEFAULT_BUDGET_RATIO};

/// Harmonic mean of precision and recall of `a` against `g`; 0 whenever
/// either side is empty or they do not overlap.
pub fn f1_frame(a: &[u8], g: &[u8]) -> Result<f64> {
    if a.len() != g.len() {
        return Err(shape(format!("summary has {} frames, reference has {}", a.len(), g.len())));
    }
    let (mut sa, mut sg, mut overlap) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.iter().zip(g) {
        let (x, y) = (x != 0, y != 0);
        sa += x as usize;
        sg += y as usize;
        overlap += (x && y) as usize;
    }
    if sa == 0 || sg == 0 || overlap == 0 {
        return Ok(0.0);
    }
    let p = overlap as f64 / sa as f64;
    let r = overlap as f64 / sg as f64;
    Ok(2.0 * p * r / (p + r))
}

/// Reference mask for the single-reference protocol: `gt_score` pushed
/// through the same expand → shot → knapsack pipeline at the default budget.
pub fn reference_mask(record: &VideoRecord) -> Result<Vec<u8>> {
    let gt = record.gt_score.as_ref().ok_or_else(|| Error::MissingAnnotation {
        video: record.video_id.clone(),
        what: "gtscore (needed for single-reference)".into(),
    })?;
    let gt: Vec<f64> = gt.iter().map(|&v| v as f64).collect();
    Ok(summarize_frames(
        &gt,
        &record.picks,
        record.n_frames,
        &record.change_points,
        DEFAULT_BUDGET_RATIO,
        KnapsackValue::Mean,
    )?
    .mask)
}

pub fn evaluate_video(mask: &SummaryMask, record: &VideoRecord, protocol: Protocol) -> Result<f64> {
    match protocol {
        Protocol::MaxUser | Protocol::MeanUser => {
            let users = record
                .user_summaries
                .as_ref()
                .filter(|u| u.nrows() > 0)
                .ok_or_else(|| Error::MissingAnnotation {
                    video: record.video_id.clone(),
                    what: format!("user_summary (needed for {protocol})"),
                })?;
            let scores = users
                .rows()
                .into_iter()
                .map(|u| f1_frame(&mask.mask, u.as_slice().expect("row-major user summaries")))
                .collect::<Result<Vec<_>>>()?;
            Ok(if protocol == Protocol::MaxUser {
                scores.iter().copied().fold(0.0, f64::max)
            } else {
                scores.iter().sum::<f64>() / scores.len() as f64
            })
        }
        Protocol::SingleReference => f1_frame(&mask.mask, &reference_mask(record)?),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoScore {
    pub video_id: String,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub aggregate: f64,
    pub per_video: Vec<VideoScore>,
}

/// Per-video and aggregate F1 for one or more runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    /// Mean over videos of the first (or only) run.
    pub aggregate: f64,
    pub per_video: Vec<VideoScore>,
    pub runs: Vec<RunSummary>,
    pub grand_mean: f64,
}

impl EvalReport {
    fn single(protocol: Protocol, per_video: Vec<VideoScore>) -> Self {
        let aggregate = per_video.iter().map(|v| v.f1).sum::<f64>() / per_video.len() as f64;
        Self {
            protocol,
            aggregate,
            per_video: per_video.clone(),
            runs: vec![RunSummary {
                run: 0,
                aggregate,
                per_video,
            }],
            grand_mean: aggregate,
        }
    }

    /// Merge single-run reports; the grand mean averages per-run aggregates.
    pub fn combine(reports: &[EvalReport]) -> Result<Self> {
        let first = reports.first().ok_or_else(|| invalid("no reports to combine"))?;
        if reports.iter().any(|r| r.protocol != first.protocol) {
            return Err(invalid("cannot combine reports with different protocols"));
        }
        let runs: Vec<RunSummary> = reports
            .iter()
            .flat_map(|r| r.runs.iter().cloned())
            .enumerate()
            .map(|(k, mut run)| {
                run.run = k;
                run
            })
            .collect();
        let grand_mean = runs.iter().map(|r| r.aggregate).sum::<f64>() / runs.len() as f64;
        Ok(Self {
            protocol: first.protocol,
            aggregate: first.aggregate,
            per_video: first.per_video.clone(),
            runs,
            grand_mean,
        })
    }
}

/// Evaluate arbitrary per-video scores over the split's test videos.
pub fn evaluate_with<S, F>(
    bundle: &DatasetBundle,
    split: &SplitSpec,
    protocol: Protocol,
    budget_ratio: f64,
    value: KnapsackValue,
    mut score: F,
) -> Result<EvalReport>
where
    S: Scalar,
    F: FnMut(&VideoRecord) -> Result<ScoreSequence<S>>,
{
    if split.test_ids.is_empty() {
        return Err(invalid("test split is empty"));
    }
    let per_video = split
        .test_ids
        .iter()
        .map(|id| {
            let record = bundle
                .get(id)
                .ok_or_else(|| invalid(format!("split references unknown video `{id}`")))?;
            let scores = score(record)?;
            let mask = build_summary(record, &scores, budget_ratio, value)?;
            Ok(VideoScore {
                video_id: id.clone(),
                f1: evaluate_video(&mask, record, protocol)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::single(protocol, per_video))
}

pub fn evaluate_run<S: Scalar>(
    model: &Model<S>,
    bundle: &DatasetBundle,
    split: &SplitSpec,
    protocol: Protocol,
    budget_ratio: f64,
    value: KnapsackValue,
) -> Result<EvalReport> {
    evaluate_with(bundle, split, protocol, budget_ratio, value, |r| model.score(r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn f1_examples() {
        assert_eq!(f1_frame(&[1, 0, 1], &[1, 0, 1]).unwrap(), 1.0);
        assert_eq!(f1_frame(&[1, 1, 0, 0], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_eq!(f1_frame(&[0, 0], &[0, 1]).unwrap(), 0.0);
        // |a|=5, |g|=6, overlap 3
        let a = [1, 1, 1, 1, 1, 0, 0, 0, 0, 0];
        let g = [1, 1, 1, 0, 0, 1, 1, 1, 0, 0];
        assert!((f1_frame(&a, &g).unwrap() - 0.6 / 1.1).abs() < 1e-12);
        assert!(f1_frame(&[1], &[1, 0]).is_err());
    }

    fn record_with_users(users: Array2<u8>) -> VideoRecord {
        let n = users.ncols();
        VideoRecord {
            video_id: "video_1".into(),
            visual: Array2::zeros((2, 1)),
            semantic: Array2::zeros((2, 1)),
            n_frames: n,
            picks: vec![0, 1],
            change_points: vec![[0, n - 1]],
            user_summaries: Some(users),
            gt_score: None,
        }
    }

    #[test]
    fn protocol_reductions() {
        let mask = SummaryMask { mask: vec![1, 1, 0, 0, 0], budget_ratio: 0.15, selected_shots: vec![] };
        // user A: overlap 1 of (2,2) -> 0.5 ; user B: identical -> 1.0
        let users = ndarray::array![[1, 0, 1, 0, 0], [1, 1, 0, 0, 0]];
        let r = record_with_users(users);
        assert_eq!(evaluate_video(&mask, &r, Protocol::MaxUser).unwrap(), 1.0);
        assert_eq!(evaluate_video(&mask, &r, Protocol::MeanUser).unwrap(), 0.75);
        let single = record_with_users(ndarray::array![[1, 0, 1, 0, 0]]);
        let max = evaluate_video(&mask, &single, Protocol::MaxUser).unwrap();
        assert_eq!(max, evaluate_video(&mask, &single, Protocol::MeanUser).unwrap());
        assert_eq!(max, 0.5);
        assert!(matches!(
            evaluate_video(&mask, &single, Protocol::SingleReference),
            Err(Error::MissingAnnotation { .. })
        ));
    }

    #[test]
    fn combine_averages_runs() {
        let mk = |f1: f64| EvalReport::single(Protocol::MeanUser, vec![VideoScore { video_id: "v".into(), f1 }]);
        let c = EvalReport::combine(&[mk(0.5), mk(0.7)]).unwrap();
        assert_eq!(c.runs.len(), 2);
        assert!((c.grand_mean - 0.6).abs() < 1e-15);
        assert_eq!(c.runs[1].run, 1);
        assert!(EvalReport::combine(&[]).is_err());
    }
}
