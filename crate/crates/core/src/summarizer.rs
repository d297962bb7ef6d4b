//! From sampled-frame scores to a full-frame-rate binary summary.

use serde::{Deserialize, Serialize};

use crate::dataset::{validate_partition, VideoRecord};
use crate::error::{invalid, shape, Error, Result};
use crate::scalar::Scalar;
use crate::selector::ScoreSequence;

pub const DEFAULT_BUDGET_RATIO: f64 = 0.15;

/// How a shot's knapsack value is derived from its mean frame score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnapsackValue {
    #[default]
    Mean,
    MeanTimesLength,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Shot<S> {
    pub start: usize,
    pub end: usize,
    pub length: usize,
    pub score: S,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShotTable<S> {
    pub shots: Vec<Shot<S>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryMask {
    pub mask: Vec<u8>,
    pub budget_ratio: f64,
    pub selected_shots: Vec<usize>,
}

impl SummaryMask {
    pub fn selected_frames(&self) -> usize {
        self.mask.iter().map(|&m| m as usize).sum()
    }

    /// Runs of ones as `[start, length]`.
    pub fn run_lengths(&self) -> Vec<[usize; 2]> {
        let mut runs = Vec::new();
        let mut start = None;
        for (i, &m) in self.mask.iter().enumerate() {
            match (m, start) {
                (1, None) => start = Some(i),
                (0, Some(s)) => {
                    runs.push([s, i - s]);
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            runs.push([s, self.mask.len() - s]);
        }
        runs
    }

    pub fn export(&self, video_id: &str) -> MaskExport {
        MaskExport {
            video_id: video_id.to_string(),
            n_frames: self.mask.len(),
            selected_shots: self.selected_shots.clone(),
            mask_rle: self.run_lengths(),
        }
    }
}

/// JSON form `{"video_id", "n_frames", "selected_shots", "mask_rle"}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskExport {
    pub video_id: String,
    pub n_frames: usize,
    pub selected_shots: Vec<usize>,
    pub mask_rle: Vec<[usize; 2]>,
}

impl MaskExport {
    pub fn to_mask(&self) -> Vec<u8> {
        let mut mask = vec![0; self.n_frames];
        for &[s, len] in &self.mask_rle {
            mask[s..s + len].fill(1);
        }
        mask
    }
}

/// Piecewise-constant upsampling: frame `f` takes the score of the last pick
/// at or before it; frames before the first pick take the first score.
pub fn expand_scores<S: Scalar>(scores: &[S], picks: &[usize], n_frames: usize) -> Result<Vec<S>> {
    if scores.len() != picks.len() {
        return Err(shape(format!(
            "{} scores for {} picks",
            scores.len(),
            picks.len()
        )));
    }
    if scores.is_empty() {
        return Err(invalid("no scores to expand"));
    }
    if picks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("picks must be strictly increasing"));
    }
    if picks[picks.len() - 1] >= n_frames {
        return Err(invalid(format!(
            "pick {} out of range for {n_frames} frames",
            picks[picks.len() - 1]
        )));
    }
    let mut out = Vec::with_capacity(n_frames);
    let mut k = 0;
    for f in 0..n_frames {
        while k + 1 < picks.len() && picks[k + 1] <= f {
            k += 1;
        }
        out.push(scores[k]);
    }
    Ok(out)
}

pub fn shot_scores<S: Scalar>(frame_scores: &[S], change_points: &[[usize; 2]]) -> Result<ShotTable<S>> {
    validate_partition(change_points, frame_scores.len()).map_err(Error::InvalidArgument)?;
    let shots = change_points
        .iter()
        .map(|&[start, end]| {
            let seg = &frame_scores[start..=end];
            let length = seg.len();
            let sum = seg.iter().fold(S::zero(), |a, &b| a + b);
            Shot {
                start,
                end,
                length,
                score: sum / S::from_usize(length).unwrap(),
            }
        })
        .collect();
    Ok(ShotTable { shots })
}

/// Exact 0/1 knapsack over `(value, weight)` items.
///
/// Among optimal index sets the lexicographically smallest one is returned:
/// each item is taken whenever some optimal completion includes it, except
/// zero-value items, which are skipped.
pub fn knapsack<S: Scalar>(values: &[S], weights: &[usize], capacity: usize) -> Vec<usize> {
    let n = values.len();
    assert_eq!(n, weights.len());
    // best[i][w]: optimum over items i.. with capacity w.
    let width = capacity + 1;
    let mut best = vec![S::zero(); (n + 1) * width];
    for i in (0..n).rev() {
        for w in 0..width {
            let skip = best[(i + 1) * width + w];
            let take = if weights[i] <= w {
                values[i] + best[(i + 1) * width + w - weights[i]]
            } else {
                S::neg_infinity()
            };
            best[i * width + w] = if take > skip { take } else { skip };
        }
    }
    let total: S = values.iter().fold(S::zero(), |a, &v| a + v.abs());
    let tol = S::epsilon() * S::lit(64.0) * (S::one() + total);
    let mut chosen = Vec::new();
    let mut w = capacity;
    for i in 0..n {
        if weights[i] > w || values[i] <= S::zero() {
            continue;
        }
        let take = values[i] + best[(i + 1) * width + w - weights[i]];
        if take >= best[i * width + w] - tol {
            chosen.push(i);
            w -= weights[i];
        }
    }
    chosen
}

pub fn knapsack_select<S: Scalar>(shots: &ShotTable<S>, budget_frames: usize, value: KnapsackValue) -> Vec<usize> {
    let values: Vec<S> = shots
        .shots
        .iter()
        .map(|s| match value {
            KnapsackValue::Mean => s.score,
            KnapsackValue::MeanTimesLength => s.score * S::from_usize(s.length).unwrap(),
        })
        .collect();
    let weights: Vec<usize> = shots.shots.iter().map(|s| s.length).collect();
    knapsack(&values, &weights, budget_frames)
}

/// `floor(ratio · n_frames)`, tolerant of representation error in `ratio`.
pub fn budget_frames(ratio: f64, n_frames: usize) -> usize {
    (ratio * n_frames as f64 + 1e-9).floor() as usize
}

pub fn summarize_frames<S: Scalar>(
    scores: &[S],
    picks: &[usize],
    n_frames: usize,
    change_points: &[[usize; 2]],
    budget_ratio: f64,
    value: KnapsackValue,
) -> Result<SummaryMask> {
    if !(0.0..=1.0).contains(&budget_ratio) {
        return Err(invalid(format!("budget ratio {budget_ratio} outside [0, 1]")));
    }
    let frames = expand_scores(scores, picks, n_frames)?;
    let table = shot_scores(&frames, change_points)?;
    let selected = knapsack_select(&table, budget_frames(budget_ratio, n_frames), value);
    let mut mask = vec![0u8; n_frames];
    for &k in &selected {
        let shot = &table.shots[k];
        mask[shot.start..=shot.end].fill(1);
    }
    Ok(SummaryMask {
        mask,
        budget_ratio,
        selected_shots: selected,
    })
}

pub fn build_summary<S: Scalar>(
    record: &VideoRecord,
    scores: &ScoreSequence<S>,
    budget_ratio: f64,
    value: KnapsackValue,
) -> Result<SummaryMask> {
    summarize_frames(
        &scores.scores,
        &record.picks,
        record.n_frames,
        &record.change_points,
        budget_ratio,
        value,
    )
}
