//! Video feature records, benchmark-format containers, synthetic data and
//! train/test splits.

mod io;
mod split;
mod synth;

use std::collections::HashSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use io::{load_dataset, save_dataset};
pub use split::{make_splits, SplitFile, SplitSpec};
pub use synth::{synth_generate, SynthConfig};

use crate::error::{Error, Result};

/// Which reference the F1 protocol scores a summary against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Best F1 over annotators.
    MaxUser,
    /// Mean F1 over annotators.
    MeanUser,
    /// F1 against one mask derived from `gt_score`.
    SingleReference,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::MaxUser => "max-user",
            Protocol::MeanUser => "mean-user",
            Protocol::SingleReference => "single-reference",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max-user" => Ok(Protocol::MaxUser),
            "mean-user" => Ok(Protocol::MeanUser),
            "single-reference" => Ok(Protocol::SingleReference),
            other => Err(Error::InvalidArgument(format!(
                "unknown protocol `{other}` (expected max-user, mean-user or single-reference)"
            ))),
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One video's features and annotations.
///
/// Feature rows live on the sampled frames (`picks`); annotations and shot
/// boundaries live on the original frame grid of length `n_frames`.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoRecord {
    pub video_id: String,
    /// `T×d_v`
    pub visual: Array2<f32>,
    /// `T×d_s`
    pub semantic: Array2<f32>,
    pub n_frames: usize,
    pub picks: Vec<usize>,
    /// Inclusive `[start, end]` shot intervals on the original frame grid.
    pub change_points: Vec<[usize; 2]>,
    /// `U×n_frames`, entries 0 or 1.
    pub user_summaries: Option<Array2<u8>>,
    /// Length `T`, values in `[0, 1]`.
    pub gt_score: Option<Vec<f32>>,
}

impl VideoRecord {
    pub fn len(&self) -> usize {
        self.visual.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.visual.nrows() == 0
    }

    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Validation {
            video: self.video_id.clone(),
            reason: reason.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.visual.nrows();
        if t < 2 {
            return Err(self.fail(format!("need at least 2 sampled frames, found {t}")));
        }
        if self.semantic.nrows() != t {
            return Err(self.fail(format!(
                "visual has {t} rows but semantic has {}",
                self.semantic.nrows()
            )));
        }
        if self.visual.ncols() == 0 || self.semantic.ncols() == 0 {
            return Err(self.fail("feature dimension must be positive"));
        }
        if !self.visual.iter().chain(self.semantic.iter()).all(|v| v.is_finite()) {
            return Err(self.fail("features contain non-finite values"));
        }
        if self.n_frames == 0 {
            return Err(self.fail("n_frames must be positive"));
        }
        if self.picks.len() != t {
            return Err(self.fail(format!("picks has {} entries, expected {t}", self.picks.len())));
        }
        if self.picks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(self.fail("picks are not strictly increasing"));
        }
        if let Some(&last) = self.picks.last() {
            if last >= self.n_frames {
                return Err(self.fail(format!(
                    "pick {last} outside [0, {}]",
                    self.n_frames - 1
                )));
            }
        }
        validate_partition(&self.change_points, self.n_frames).map_err(|r| self.fail(r))?;
        if let Some(us) = &self.user_summaries {
            if us.ncols() != self.n_frames {
                return Err(self.fail(format!(
                    "user_summary rows have length {}, expected {}",
                    us.ncols(),
                    self.n_frames
                )));
            }
            if us.iter().any(|&v| v > 1) {
                return Err(self.fail("user_summary entries must be 0 or 1"));
            }
        }
        if let Some(gt) = &self.gt_score {
            if gt.len() != t {
                return Err(self.fail(format!("gtscore has {} entries, expected {t}", gt.len())));
            }
            if gt.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(self.fail("gtscore values must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Checks that inclusive intervals tile `[0, n_frames-1]` in order.
pub fn validate_partition(cps: &[[usize; 2]], n_frames: usize) -> Result<(), String> {
    if cps.is_empty() {
        return Err("change_points is empty".into());
    }
    let mut expected = 0;
    for (k, &[start, end]) in cps.iter().enumerate() {
        if start != expected {
            return Err(format!(
                "shot {k} starts at {start}, expected {expected} (gap or overlap)"
            ));
        }
        if end < start {
            return Err(format!("shot {k} has end {end} before start {start}"));
        }
        expected = end + 1;
    }
    if expected != n_frames {
        return Err(format!(
            "change_points cover [0, {}] but video has {n_frames} frames",
            expected - 1
        ));
    }
    Ok(())
}

/// A validated collection of videos sharing feature dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub records: Vec<VideoRecord>,
    pub protocol_hint: Protocol,
    pub d_v: usize,
    pub d_s: usize,
}

impl DatasetBundle {
    /// Validates every record and the cross-record invariants.
    pub fn new(records: Vec<VideoRecord>, protocol_hint: Protocol) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::InvalidArgument("dataset has no videos".into()))?;
        let (d_v, d_s) = (first.visual.ncols(), first.semantic.ncols());
        let mut seen = HashSet::new();
        for r in &records {
            r.validate()?;
            if r.visual.ncols() != d_v || r.semantic.ncols() != d_s {
                return Err(r.fail(format!(
                    "feature dims ({}, {}) differ from dataset dims ({d_v}, {d_s})",
                    r.visual.ncols(),
                    r.semantic.ncols()
                )));
            }
            if !seen.insert(r.video_id.as_str()) {
                return Err(r.fail("duplicate video_id"));
            }
        }
        Ok(Self {
            records,
            protocol_hint,
            d_v,
            d_s,
        })
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.video_id.clone()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&VideoRecord> {
        self.records.iter().find(|r| r.video_id == id)
    }
}
