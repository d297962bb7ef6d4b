//! Three-stage incremental adversarial training.
//!
//! For every training video, in order and each with its own forward pass:
//!
//! 1. discriminator step on the real/fake objective;
//! 2. selector step on `ν·mean((T − T̂)²) + L_sparsity`;
//! 3. joint selector + generator step on `L_total + g_adv·g_loss`.
//!
//! Parameters outside a stage's target set are bound as graph constants, so
//! they receive no gradient and are never touched by that stage's update.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::dataset::{DatasetBundle, Protocol, SplitSpec};
use crate::error::{invalid, Error, Result};
use crate::evaluator::{evaluate_run, EvalReport};
use crate::losses::{adversarial_nodes, mse_node, reconstruction_node, sparsity_node, LossWeights};
use crate::model::{child_seed, Features, Model, ModelConfig};
use crate::nn::{adam_step, clip_global_norm, AdamConfig, AdamState, ParamSet};
use crate::scalar::Scalar;
use crate::summarizer::{KnapsackValue, DEFAULT_BUDGET_RATIO};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr_discriminator: f64,
    pub lr_other: f64,
    pub epochs: usize,
    /// Global gradient-norm bound per update; 0 disables clipping.
    pub clip_norm: f64,
    pub weights: LossWeights,
    pub seed: u64,
    /// Add `g_adv·g_loss` to the stage-3 objective.
    pub adversarial: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub budget_ratio: f64,
    pub knapsack_value: KnapsackValue,
    /// Validation protocol; falls back to the dataset's hint.
    pub protocol: Option<Protocol>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_discriminator: 0.001,
            lr_other: 0.002,
            epochs: 50,
            clip_norm: 5.0,
            weights: LossWeights::default(),
            seed: 0,
            adversarial: true,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            budget_ratio: DEFAULT_BUDGET_RATIO,
            knapsack_value: KnapsackValue::Mean,
            protocol: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_discriminator > 0.0 && self.lr_other > 0.0) {
            return Err(invalid("learning rates must be positive"));
        }
        if !(self.clip_norm >= 0.0) {
            return Err(invalid("clip_norm must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.budget_ratio) {
            return Err(invalid("budget_ratio must lie in [0, 1]"));
        }
        self.weights.validate()
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }
}

/// Model parameters, optimizer moments and counters.
#[derive(Clone, Debug)]
pub struct ModelState<S> {
    pub model: Model<S>,
    pub opt_selector: AdamState<S>,
    pub opt_generator: AdamState<S>,
    pub opt_discriminator: AdamState<S>,
    /// Completed epochs.
    pub epoch: usize,
    pub seed: u64,
    /// Training forward passes so far; seeds per-pass dropout.
    pub passes: u64,
}

impl<S: Scalar> PartialEq for ModelState<S> {
    fn eq(&self, other: &Self) -> bool {
        self.model.config == other.model.config
            && self.model.selector.params == other.model.selector.params
            && self.model.generator.params == other.model.generator.params
            && self.model.discriminator.params == other.model.discriminator.params
            && self.opt_selector == other.opt_selector
            && self.opt_generator == other.opt_generator
            && self.opt_discriminator == other.opt_discriminator
            && self.epoch == other.epoch
            && self.seed == other.seed
            && self.passes == other.passes
    }
}

impl<S: Scalar> ModelState<S> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let model = Model::new(config, seed)?;
        Ok(Self {
            opt_selector: AdamState::for_params(&model.selector.params),
            opt_generator: AdamState::for_params(&model.generator.params),
            opt_discriminator: AdamState::for_params(&model.discriminator.params),
            model,
            epoch: 0,
            seed,
            passes: 0,
        })
    }

    fn pass_rng(&mut self) -> ChaCha8Rng {
        let rng = ChaCha8Rng::seed_from_u64(child_seed(self.seed, 1000 + self.passes));
        self.passes += 1;
        rng
    }
}

fn finite<S: Scalar>(v: S, what: &str, epoch: usize) -> Result<S> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Divergence {
            epoch,
            detail: format!("{what} is {v}"),
        })
    }
}

fn apply<S: Scalar>(
    cfg: &TrainConfig,
    lr: f64,
    params: &mut ParamSet<S>,
    opt: &mut AdamState<S>,
    mut grads: Vec<ndarray::Array2<S>>,
    epoch: usize,
) -> Result<()> {
    clip_global_norm(&mut grads, cfg.clip_norm);
    adam_step(&cfg.adam(lr), params, opt, &grads);
    if !params.all_finite() {
        return Err(Error::Divergence {
            epoch,
            detail: "parameters became non-finite".into(),
        });
    }
    Ok(())
}

/// Stage 1: update only the discriminator. Returns `d_loss`.
pub fn stage1_update_discriminator<S: Scalar>(
    state: &mut ModelState<S>,
    features: &Features<S>,
    cfg: &TrainConfig,
) -> Result<S> {
    let mut rng = state.pass_rng();
    let model = &state.model;
    let mut g = Graph::new();
    let sel = model.selector.params.bind_frozen(&mut g);
    let gen = model.generator.params.bind_frozen(&mut g);
    let disc = model.discriminator.params.bind(&mut g);
    let pass = model.reconstruction_pass(&mut g, &sel, &gen, features, Some(&mut rng));
    let real = model
        .discriminator
        .forward(&mut g, &disc, pass.visual, Some(pass.semantic));
    let fake = model
        .discriminator
        .forward(&mut g, &disc, pass.visual_hat, pass.semantic_hat);
    let adv = adversarial_nodes(&mut g, real.prob, fake.prob);
    let d_loss = finite(g.scalar(adv.d_loss), "d_loss", state.epoch)?;
    let grads = g.backward(adv.d_loss);
    let grads = model.discriminator.params.collect_grads(&disc, &grads);
    let epoch = state.epoch;
    apply(
        cfg,
        cfg.lr_discriminator,
        &mut state.model.discriminator.params,
        &mut state.opt_discriminator,
        grads,
        epoch,
    )?;
    Ok(d_loss)
}

/// Semantic discrepancy (visual discrepancy for visual-only models) plus
/// sparsity, as built for stage 2.
fn stage2_objective<S: Scalar>(
    g: &mut Graph<S>,
    pass: &crate::model::ReconstructionPass,
    w: &LossWeights,
) -> Var {
    let discrepancy = match pass.semantic_hat {
        Some(t_hat) => {
            let m = mse_node(g, pass.semantic, t_hat);
            g.scale(m, S::lit(w.nu))
        }
        None => {
            let m = mse_node(g, pass.visual, pass.visual_hat);
            g.scale(m, S::lit(w.mu))
        }
    };
    let sparse = sparsity_node(g, pass.scores, w.lambda_s);
    g.add(discrepancy, sparse)
}

/// Stage 2: update only the selector. Returns the stage objective.
pub fn stage2_update_selector<S: Scalar>(
    state: &mut ModelState<S>,
    features: &Features<S>,
    cfg: &TrainConfig,
) -> Result<S> {
    let mut rng = state.pass_rng();
    let model = &state.model;
    let mut g = Graph::new();
    let sel = model.selector.params.bind(&mut g);
    let gen = model.generator.params.bind_frozen(&mut g);
    let pass = model.reconstruction_pass(&mut g, &sel, &gen, features, Some(&mut rng));
    let loss = stage2_objective(&mut g, &pass, &cfg.weights);
    let value = finite(g.scalar(loss), "stage-2 loss", state.epoch)?;
    let grads = g.backward(loss);
    let grads = model.selector.params.collect_grads(&sel, &grads);
    let epoch = state.epoch;
    apply(
        cfg,
        cfg.lr_other,
        &mut state.model.selector.params,
        &mut state.opt_selector,
        grads,
        epoch,
    )?;
    Ok(value)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stage3Losses<S> {
    pub total: S,
    pub rec: S,
    pub sparsity: S,
    pub g_loss: S,
}

/// Stage 3: update selector and generator jointly.
pub fn stage3_update_selector_generator<S: Scalar>(
    state: &mut ModelState<S>,
    features: &Features<S>,
    cfg: &TrainConfig,
) -> Result<Stage3Losses<S>> {
    let mut rng = state.pass_rng();
    let model = &state.model;
    let mut g = Graph::new();
    let sel = model.selector.params.bind(&mut g);
    let gen = model.generator.params.bind(&mut g);
    let disc = model.discriminator.params.bind_frozen(&mut g);
    let pass = model.reconstruction_pass(&mut g, &sel, &gen, features, Some(&mut rng));
    let semantic_pair = pass.semantic_hat.map(|t_hat| (pass.semantic, t_hat));
    let rec = reconstruction_node(&mut g, pass.visual, pass.visual_hat, semantic_pair, &cfg.weights);
    let sparse = sparsity_node(&mut g, pass.scores, cfg.weights.lambda_s);
    let mut total = g.add(rec, sparse);
    let fake = model
        .discriminator
        .forward(&mut g, &disc, pass.visual_hat, pass.semantic_hat);
    let real = g.scalar_constant(S::lit(0.5));
    let adv = adversarial_nodes(&mut g, real, fake.prob);
    if cfg.adversarial && cfg.weights.g_adv > 0.0 {
        let weighted = g.scale(adv.g_loss, S::lit(cfg.weights.g_adv));
        total = g.add(total, weighted);
    }
    let epoch = state.epoch;
    let losses = Stage3Losses {
        total: finite(g.scalar(total), "stage-3 loss", epoch)?,
        rec: finite(g.scalar(rec), "reconstruction loss", epoch)?,
        sparsity: finite(g.scalar(sparse), "sparsity loss", epoch)?,
        g_loss: finite(g.scalar(adv.g_loss), "g_loss", epoch)?,
    };
    let grads = g.backward(total);
    let sel_grads = model.selector.params.collect_grads(&sel, &grads);
    let gen_grads = model.generator.params.collect_grads(&gen, &grads);
    apply(
        cfg,
        cfg.lr_other,
        &mut state.model.selector.params,
        &mut state.opt_selector,
        sel_grads,
        epoch,
    )?;
    apply(
        cfg,
        cfg.lr_other,
        &mut state.model.generator.params,
        &mut state.opt_generator,
        gen_grads,
        epoch,
    )?;
    Ok(losses)
}

/// Epoch means of the per-video losses, one JSON line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub rec: f64,
    pub sparsity: f64,
    pub semantic: f64,
    pub total: f64,
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_f1: Option<f64>,
}

pub fn train_epoch<S: Scalar>(
    state: &mut ModelState<S>,
    bundle: &DatasetBundle,
    split: &SplitSpec,
    cfg: &TrainConfig,
) -> Result<EpochMetrics> {
    if split.train_ids.is_empty() {
        return Err(invalid("training split is empty"));
    }
    let mut order = split.train_ids.clone();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(child_seed(
        state.seed,
        state.epoch as u64,
    )));
    let mut sums = [0.0f64; 6];
    for id in &order {
        let record = bundle
            .get(id)
            .ok_or_else(|| invalid(format!("split references unknown video `{id}`")))?;
        let features = Features::from_record(record);
        let d = stage1_update_discriminator(state, &features, cfg)?;
        let sem = stage2_update_selector(state, &features, cfg)?;
        let s3 = stage3_update_selector_generator(state, &features, cfg)?;
        for (acc, v) in sums
            .iter_mut()
            .zip([d, s3.g_loss, s3.rec, s3.sparsity, sem, s3.total])
        {
            *acc += v.to_f64_lossless();
        }
    }
    let n = order.len() as f64;
    let m = sums.map(|s| s / n);
    let metrics = EpochMetrics {
        epoch: state.epoch + 1,
        d_loss: m[0],
        g_loss: m[1],
        rec: m[2],
        sparsity: m[3],
        semantic: m[4],
        total: m[5],
        alpha: state.model.selector.alpha().to_f64_lossless(),
        val_f1: None,
    };
    state.epoch += 1;
    Ok(metrics)
}

#[derive(Clone, Debug)]
pub struct FitOutcome<S> {
    /// State with the highest validation F1 (earliest on ties).
    pub best: ModelState<S>,
    pub best_epoch: usize,
    pub best_f1: f64,
    pub log: Vec<EpochMetrics>,
    /// Evaluation of `best` on the split's test videos.
    pub report: EvalReport,
}

/// Train from a fresh seeded state, keeping the best epoch by test-split F1.
pub fn fit<S: Scalar>(
    bundle: &DatasetBundle,
    split: &SplitSpec,
    model_config: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<FitOutcome<S>> {
    cfg.validate()?;
    if cfg.epochs == 0 {
        return Err(invalid("epochs must be at least 1"));
    }
    if model_config.d_v != bundle.d_v || model_config.d_s != bundle.d_s {
        return Err(invalid(format!(
            "model expects dims ({}, {}) but dataset has ({}, {})",
            model_config.d_v, model_config.d_s, bundle.d_v, bundle.d_s
        )));
    }
    let protocol = cfg.protocol.unwrap_or(bundle.protocol_hint);
    let mut state = ModelState::<S>::new(model_config.clone(), cfg.seed)?;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(ModelState<S>, usize, EvalReport)> = None;
    for _ in 0..cfg.epochs {
        let mut metrics = train_epoch(&mut state, bundle, split, cfg)?;
        let report = evaluate_run(
            &state.model,
            bundle,
            split,
            protocol,
            cfg.budget_ratio,
            cfg.knapsack_value,
        )?;
        metrics.val_f1 = Some(report.aggregate);
        let improved = best
            .as_ref()
            .map_or(true, |(_, _, r)| report.aggregate > r.aggregate);
        if improved {
            best = Some((state.clone(), metrics.epoch, report));
        }
        log.push(metrics);
    }
    let (best, best_epoch, report) = best.expect("at least one epoch ran");
    Ok(FitOutcome {
        best_f1: report.aggregate,
        best,
        best_epoch,
        log,
        report,
    })
}

/// One JSON object per line.
pub fn write_training_log(path: impl AsRef<Path>, log: &[EpochMetrics]) -> Result<()> {
    let path = path.as_ref();
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for m in log {
        serde_json::to_writer(&mut f, m)?;
        f.write_all(b"\n").map_err(io)?;
    }
    f.flush().map_err(io)
}
