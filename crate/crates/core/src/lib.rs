//! Semantic-guided unsupervised video summarization.
//!
//! A frame selector fuses cross-modal cosine alignment with a bidirectional
//! recurrent scorer; a Transformer generator reconstructs the visual and
//! semantic streams from score-weighted features; a sequence discriminator
//! judges real against reconstructed pairs. Training runs three stages per
//! video. Summaries are picked by 0/1 knapsack over shots and scored by
//! frame-level F1.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*F32` and
//! `*F64` aliases name the common instantiations.

pub mod autodiff;
pub mod checkpoint;
pub mod dataset;
pub mod discriminator;
pub mod error;
pub mod evaluator;
pub mod experiment;
pub mod generator;
pub mod losses;
pub mod model;
pub mod nn;
pub mod scalar;
pub mod selector;
pub mod summarizer;
pub mod trainer;

pub use checkpoint::{load_checkpoint, peek_scalar, save_checkpoint};
pub use dataset::{
    load_dataset, make_splits, save_dataset, synth_generate, DatasetBundle, Protocol, SplitFile,
    SplitSpec, SynthConfig, VideoRecord,
};
pub use error::{Error, Result};
pub use evaluator::{evaluate_run, f1_frame, EvalReport};
pub use experiment::{run_experiment, ExperimentReport, TableRow};
pub use generator::GeneratorKind;
pub use losses::LossWeights;
pub use model::{Model, ModelConfig};
pub use scalar::Scalar;
pub use selector::{ScoreMode, ScoreSequence};
pub use summarizer::{build_summary, KnapsackValue, SummaryMask};
pub use trainer::{fit, EpochMetrics, FitOutcome, ModelState, TrainConfig};

pub type ModelF32 = Model<f32>;
pub type ModelF64 = Model<f64>;
pub type ModelStateF32 = ModelState<f32>;
pub type ModelStateF64 = ModelState<f64>;
pub type ScoreSequenceF32 = ScoreSequence<f32>;
pub type ScoreSequenceF64 = ScoreSequence<f64>;
