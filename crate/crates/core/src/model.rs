//! The full summarization model: selector → weighting → generator, plus the
//! discriminator used during training.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::dataset::VideoRecord;
use crate::discriminator::{Discriminator, DiscriminatorConfig};
use crate::error::{invalid, Result};
use crate::generator::{Generator, GeneratorConfig, GeneratorKind};
use crate::nn::Bound;
use crate::scalar::{cast_matrix, Scalar};
use crate::selector::{ScoreMode, ScoreSequence, Selector, SelectorConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_v: usize,
    pub d_s: usize,
    pub d_c: usize,
    pub selector_hidden: usize,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub dropout: f64,
    pub discriminator_hidden: usize,
    pub fssa_mode: ScoreMode,
    /// Semantic rows enter the recurrent scorer, generator and discriminator.
    pub multimodal: bool,
    pub generator: GeneratorKind,
}

impl ModelConfig {
    pub fn new(d_v: usize, d_s: usize) -> Self {
        Self {
            d_v,
            d_s,
            d_c: 128,
            selector_hidden: 256,
            d_model: 256,
            layers: 2,
            heads: 4,
            d_ff: 512,
            dropout: 0.1,
            discriminator_hidden: 256,
            fssa_mode: ScoreMode::Fused,
            multimodal: true,
            generator: GeneratorKind::Transformer,
        }
    }

    /// Narrow widths that train in seconds on synthetic data.
    pub fn desk(d_v: usize, d_s: usize) -> Self {
        Self {
            d_c: 16,
            selector_hidden: 32,
            d_model: 32,
            d_ff: 64,
            discriminator_hidden: 32,
            ..Self::new(d_v, d_s)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_v", self.d_v),
            ("d_s", self.d_s),
            ("d_c", self.d_c),
            ("selector_hidden", self.selector_hidden),
            ("d_model", self.d_model),
            ("discriminator_hidden", self.discriminator_hidden),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        if self.generator == GeneratorKind::Transformer {
            if self.heads == 0 || self.d_model % self.heads != 0 {
                return Err(invalid(format!(
                    "d_model ({}) must be divisible by heads ({})",
                    self.d_model, self.heads
                )));
            }
            if self.layers > 0 && self.d_ff == 0 {
                return Err(invalid("d_ff must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid("dropout must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn selector_config(&self) -> SelectorConfig {
        SelectorConfig {
            d_v: self.d_v,
            d_s: self.d_s,
            d_c: self.d_c,
            hidden: self.selector_hidden,
            mode: self.fssa_mode,
            multimodal: self.multimodal,
        }
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig {
            d_v: self.d_v,
            d_s: self.d_s,
            d_model: self.d_model,
            layers: self.layers,
            heads: self.heads,
            d_ff: self.d_ff,
            dropout: self.dropout,
            kind: self.generator,
            multimodal: self.multimodal,
        }
    }

    pub fn discriminator_config(&self) -> DiscriminatorConfig {
        DiscriminatorConfig {
            d_v: self.d_v,
            d_s: self.d_s,
            hidden: self.discriminator_hidden,
            multimodal: self.multimodal,
        }
    }

    /// Ablation label, e.g. `multimodal=on,fssa=fused,generator=transformer`.
    pub fn label(&self) -> String {
        format!(
            "multimodal={},fssa={},generator={}",
            if self.multimodal { "on" } else { "off" },
            self.fssa_mode.as_str(),
            match self.generator {
                GeneratorKind::Transformer => "transformer",
                GeneratorKind::Recurrent => "recurrent",
            }
        )
    }
}

/// A video's features converted to the model scalar.
#[derive(Clone, Debug)]
pub struct Features<S> {
    pub visual: Array2<S>,
    pub semantic: Array2<S>,
}

impl<S: Scalar> Features<S> {
    pub fn from_record(r: &VideoRecord) -> Self {
        Self {
            visual: cast_matrix(&r.visual),
            semantic: cast_matrix(&r.semantic),
        }
    }
}

/// Nodes of one selector → generator pass.
pub struct ReconstructionPass {
    pub visual: Var,
    pub semantic: Var,
    pub scores: Var,
    pub alpha: Var,
    pub visual_hat: Var,
    pub semantic_hat: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct Model<S> {
    pub config: ModelConfig,
    pub selector: Selector<S>,
    pub generator: Generator<S>,
    pub discriminator: Discriminator<S>,
}

/// Independent child seeds for the three components.
pub(crate) fn child_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed
        .wrapping_add(k.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl<S: Scalar> Model<S> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            selector: Selector::new(config.selector_config(), child_seed(seed, 0))?,
            generator: Generator::new(config.generator_config(), child_seed(seed, 1))?,
            discriminator: Discriminator::new(config.discriminator_config(), child_seed(seed, 2))?,
            config,
        })
    }

    /// Selector → weighting → generator on already bound parameters.
    pub fn reconstruction_pass(
        &self,
        g: &mut Graph<S>,
        selector: &Bound,
        generator: &Bound,
        features: &Features<S>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> ReconstructionPass {
        let visual = g.constant(features.visual.clone());
        let semantic = g.constant(features.semantic.clone());
        let trace = self.selector.forward(g, selector, visual, semantic);
        let w = g.scale_rows(visual, trace.scores);
        let v = g.scale_rows(semantic, trace.scores);
        let out = self.generator.forward(g, generator, w, v, rng);
        ReconstructionPass {
            visual,
            semantic,
            scores: trace.scores,
            alpha: trace.alpha,
            visual_hat: out.visual,
            semantic_hat: out.semantic,
        }
    }

    /// Evaluation-mode frame scores for one video.
    pub fn score(&self, record: &VideoRecord) -> Result<ScoreSequence<S>> {
        let f = Features::from_record(record);
        self.selector.select(&f.visual, &f.semantic)
    }

    pub fn all_finite(&self) -> bool {
        self.selector.params.all_finite()
            && self.generator.params.all_finite()
            && self.discriminator.params.all_finite()
    }
}
