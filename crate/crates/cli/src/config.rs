//! Run configuration: a TOML file whose values command-line flags may override.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use semsum_core::{GeneratorKind, KnapsackValue, LossWeights, ModelConfig, Protocol, ScoreMode, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

/// Width preset the `[model]` overrides start from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Narrow layers for CPU-scale synthetic runs.
    Desk,
    /// Default widths (d_c 128, hidden 256, d_model 256, d_ff 512).
    Full,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub protocol: Option<Protocol>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    /// Existing split file; generated from `seed` and `runs` when absent.
    pub splits: Option<PathBuf>,
    pub precision: Option<Precision>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub preset: Option<Preset>,
    pub d_c: Option<usize>,
    pub selector_hidden: Option<usize>,
    pub d_model: Option<usize>,
    pub layers: Option<usize>,
    pub heads: Option<usize>,
    pub d_ff: Option<usize>,
    pub dropout: Option<f64>,
    pub discriminator_hidden: Option<usize>,
    pub fssa_mode: Option<ScoreMode>,
    pub multimodal: Option<bool>,
    pub transformer_generator: Option<bool>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub lr_discriminator: Option<f64>,
    pub lr_other: Option<f64>,
    pub clip_norm: Option<f64>,
    pub adversarial: Option<bool>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub adam_eps: Option<f64>,
    pub budget_ratio: Option<f64>,
    pub knapsack_value: Option<KnapsackValue>,
    pub mu: Option<f64>,
    pub nu: Option<f64>,
    pub lambda_s: Option<f64>,
    pub g_adv: Option<f64>,
    pub use_ssim: Option<bool>,
}

/// Fully resolved settings for one `train` invocation.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub output_dir: PathBuf,
    pub runs: usize,
    pub splits: Option<PathBuf>,
    pub precision: Precision,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
    }

    /// Checks every field against its domain and builds model and training
    /// configurations for features of width `d_v` and `d_s`.
    pub fn resolve(&self, d_v: usize, d_s: usize, output_dir: PathBuf) -> Result<Resolved, String> {
        if self.dataset.is_none() {
            return Err("dataset: required (config key or --dataset)".into());
        }
        let runs = self.runs.unwrap_or(5);
        if runs == 0 {
            return Err("runs: must be at least 1".into());
        }
        let m = &self.model;
        let mut model = match m.preset.unwrap_or(Preset::Desk) {
            Preset::Desk => ModelConfig::desk(d_v, d_s),
            Preset::Full => ModelConfig::new(d_v, d_s),
        };
        let dims = [
            ("model.d_c", m.d_c, &mut model.d_c),
            ("model.selector_hidden", m.selector_hidden, &mut model.selector_hidden),
            ("model.d_model", m.d_model, &mut model.d_model),
            ("model.heads", m.heads, &mut model.heads),
            ("model.d_ff", m.d_ff, &mut model.d_ff),
            ("model.discriminator_hidden", m.discriminator_hidden, &mut model.discriminator_hidden),
        ];
        for (name, value, slot) in dims {
            if let Some(v) = value {
                if v == 0 {
                    return Err(format!("{name}: must be positive"));
                }
                *slot = v;
            }
        }
        if let Some(v) = m.layers {
            model.layers = v;
        }
        if let Some(v) = m.dropout {
            if !(0.0..1.0).contains(&v) {
                return Err(format!("model.dropout: must lie in [0, 1), got {v}"));
            }
            model.dropout = v;
        }
        if let Some(v) = m.fssa_mode {
            model.fssa_mode = v;
        }
        if let Some(v) = m.multimodal {
            model.multimodal = v;
        }
        if let Some(v) = m.transformer_generator {
            model.generator = if v { GeneratorKind::Transformer } else { GeneratorKind::Recurrent };
        }
        if model.generator == GeneratorKind::Transformer && model.d_model % model.heads != 0 {
            return Err(format!(
                "model.heads: d_model ({}) must be divisible by heads ({})",
                model.d_model, model.heads
            ));
        }
        model.validate().map_err(|e| format!("model: {e}"))?;

        let t = &self.train;
        let defaults = TrainConfig::default();
        let w = LossWeights::default();
        let positive = |name: &str, v: Option<f64>, d: f64| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => Err(format!("{name}: must be positive, got {x}")),
            Some(x) => Ok(x),
            None => Ok(d),
        };
        let non_negative = |name: &str, v: Option<f64>, d: f64| match v {
            Some(x) if !(x >= 0.0 && x.is_finite()) => Err(format!("{name}: must be >= 0, got {x}")),
            Some(x) => Ok(x),
            None => Ok(d),
        };
        let unit = |name: &str, v: Option<f64>, d: f64| match v {
            Some(x) if !(0.0..=1.0).contains(&x) => Err(format!("{name}: must lie in [0, 1], got {x}")),
            Some(x) => Ok(x),
            None => Ok(d),
        };
        let beta = |name: &str, v: Option<f64>, d: f64| match v {
            Some(x) if !(0.0..1.0).contains(&x) => Err(format!("{name}: must lie in [0, 1), got {x}")),
            Some(x) => Ok(x),
            None => Ok(d),
        };
        let epochs = t.epochs.unwrap_or(defaults.epochs);
        if epochs == 0 {
            return Err("train.epochs: must be at least 1".into());
        }
        let train = TrainConfig {
            lr_discriminator: positive("train.lr_discriminator", t.lr_discriminator, defaults.lr_discriminator)?,
            lr_other: positive("train.lr_other", t.lr_other, defaults.lr_other)?,
            epochs,
            clip_norm: non_negative("train.clip_norm", t.clip_norm, defaults.clip_norm)?,
            weights: LossWeights {
                mu: non_negative("train.mu", t.mu, w.mu)?,
                nu: non_negative("train.nu", t.nu, w.nu)?,
                lambda_s: unit("train.lambda_s", t.lambda_s, w.lambda_s)?,
                g_adv: non_negative("train.g_adv", t.g_adv, w.g_adv)?,
                use_ssim: t.use_ssim.unwrap_or(w.use_ssim),
            },
            seed: self.seed.unwrap_or(0),
            adversarial: t.adversarial.unwrap_or(defaults.adversarial),
            beta1: beta("train.beta1", t.beta1, defaults.beta1)?,
            beta2: beta("train.beta2", t.beta2, defaults.beta2)?,
            adam_eps: positive("train.adam_eps", t.adam_eps, defaults.adam_eps)?,
            budget_ratio: unit("train.budget_ratio", t.budget_ratio, defaults.budget_ratio)?,
            knapsack_value: t.knapsack_value.unwrap_or(defaults.knapsack_value),
            protocol: Some(self.protocol.unwrap_or(Protocol::MeanUser)),
        };
        train.validate().map_err(|e| format!("train: {e}"))?;

        Ok(Resolved {
            output_dir,
            runs,
            splits: self.splits.clone(),
            precision: self.precision.unwrap_or(Precision::F32),
            model,
            train,
        })
    }
}
