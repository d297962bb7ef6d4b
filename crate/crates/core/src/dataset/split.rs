use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DatasetBundle;
use crate::error::{invalid, Error, Result};

/// One train/test partition of the bundle's video ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

/// `n_runs` shuffled 80/20 splits; run `r` shuffles with seed `seed + r`.
///
/// The train share is `round(0.8·n)`, clamped so both sides keep at least
/// one video.
pub fn make_splits(bundle: &DatasetBundle, seed: u64, n_runs: usize) -> Result<Vec<SplitSpec>> {
    let n = bundle.records.len();
    if n < 2 {
        return Err(invalid(format!("splitting needs at least 2 videos, found {n}")));
    }
    if n_runs == 0 {
        return Err(invalid("n_runs must be at least 1"));
    }
    let n_train = ((0.8 * n as f64).round() as usize).clamp(1, n - 1);
    Ok((0..n_runs)
        .map(|run| {
            let run_seed = seed.wrapping_add(run as u64);
            let mut ids = bundle.ids();
            ids.shuffle(&mut ChaCha8Rng::seed_from_u64(run_seed));
            let test_ids = ids.split_off(n_train);
            SplitSpec {
                seed: run_seed,
                train_ids: ids,
                test_ids,
            }
        })
        .collect())
}

/// On-disk form: `{"seed":…, "runs":[{"train":[…],"test":[…]}]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitFile {
    pub seed: u64,
    pub runs: Vec<SplitRun>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRun {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl SplitFile {
    pub fn from_splits(seed: u64, splits: &[SplitSpec]) -> Self {
        Self {
            seed,
            runs: splits
                .iter()
                .map(|s| SplitRun {
                    train: s.train_ids.clone(),
                    test: s.test_ids.clone(),
                })
                .collect(),
        }
    }

    pub fn to_splits(&self) -> Vec<SplitSpec> {
        self.runs
            .iter()
            .enumerate()
            .map(|(r, run)| SplitSpec {
                seed: self.seed.wrapping_add(r as u64),
                train_ids: run.train.clone(),
                test_ids: run.test.clone(),
            })
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}
