//! Frame selector: cross-modal cosine alignment fused with a bidirectional
//! recurrent score through a learnable convex weight.
//!
//! ```text
//! c_t = (1 + cos(X_t·P_v, T_t·P_s)) / 2
//! h_t = σ(head([fwd_t ⊕ bwd_t]))
//! S_t = α·c_t + (1 − α)·h_t,   α = σ(alpha_raw)
//! ```
//!
//! The cosine is mapped affinely onto `[0, 1]` so `S_t` stays in `[0, 1]`
//! for every `α`. Frames whose projected vectors have zero norm get the
//! neutral alignment `0.5` and are counted in [`Alignment::degenerate`].

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, Graph, Var};
use crate::error::{shape, Error, Result};
use crate::nn::{uniform, Bound, Linear, Lstm, ParamSet};
use crate::scalar::Scalar;

/// Which terms of the fusion are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    Fused,
    CosineOnly,
    RecurrentOnly,
}

impl ScoreMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreMode::Fused => "fused",
            ScoreMode::CosineOnly => "cosine_only",
            ScoreMode::RecurrentOnly => "recurrent_only",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectorConfig {
    pub d_v: usize,
    pub d_s: usize,
    /// Width of the shared alignment space.
    pub d_c: usize,
    /// Recurrent hidden size per direction.
    pub hidden: usize,
    pub mode: ScoreMode,
    /// Feed semantic rows to the recurrent scorer alongside visual rows.
    pub multimodal: bool,
}

impl SelectorConfig {
    pub fn new(d_v: usize, d_s: usize) -> Self {
        Self {
            d_v,
            d_s,
            d_c: 128,
            hidden: 256,
            mode: ScoreMode::Fused,
            multimodal: true,
        }
    }

    fn recurrent_input(&self) -> usize {
        if self.multimodal {
            self.d_v + self.d_s
        } else {
            self.d_v
        }
    }
}

/// Per-frame importance scores in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreSequence<S> {
    pub scores: Vec<S>,
    pub mode: ScoreMode,
}

impl<S: Scalar> ScoreSequence<S> {
    pub fn new(scores: Vec<S>, mode: ScoreMode) -> Result<Self> {
        if let Some(bad) = scores.iter().find(|s| !(**s >= S::zero() && **s <= S::one())) {
            return Err(Error::InvalidArgument(format!("score {bad} outside [0, 1]")));
        }
        Ok(Self { scores, mode })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn export(&self, video_id: &str) -> ScoreExport {
        ScoreExport {
            video_id: video_id.to_string(),
            scores: crate::scalar::to_f64_vec(&self.scores),
            mode: self.mode,
        }
    }
}

/// JSON form `{"video_id":…, "scores":[…], "mode":…}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreExport {
    pub video_id: String,
    pub scores: Vec<f64>,
    pub mode: ScoreMode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Alignment<S> {
    pub values: Vec<S>,
    /// Frames that fell back to the neutral 0.5.
    pub degenerate: usize,
}

/// Graph nodes produced by one selector forward pass.
pub struct SelectorTrace {
    /// `T×1`
    pub scores: Var,
    pub cosine: Option<Var>,
    pub recurrent: Option<Var>,
    pub alpha: Var,
    pub degenerate: usize,
}

#[derive(Clone, Debug)]
pub struct Selector<S> {
    pub config: SelectorConfig,
    pub params: ParamSet<S>,
    proj_v: usize,
    proj_s: usize,
    forward: Lstm,
    backward: Lstm,
    head: Linear,
    alpha_raw: usize,
}

impl<S: Scalar> Selector<S> {
    pub fn new(config: SelectorConfig, seed: u64) -> Result<Self> {
        if config.d_v == 0 || config.d_s == 0 || config.d_c == 0 || config.hidden == 0 {
            return Err(Error::InvalidArgument(
                "selector dimensions must all be positive".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let kv = 1.0 / (config.d_v as f64).sqrt();
        let ks = 1.0 / (config.d_s as f64).sqrt();
        let proj_v = params.push("proj_v", uniform(&mut rng, config.d_v, config.d_c, kv));
        let proj_s = params.push("proj_s", uniform(&mut rng, config.d_s, config.d_c, ks));
        let input = config.recurrent_input();
        let forward = Lstm::new(&mut params, &mut rng, "lstm_fwd", input, config.hidden);
        let backward = Lstm::new(&mut params, &mut rng, "lstm_bwd", input, config.hidden);
        let head = Linear::new(&mut params, &mut rng, "head", 2 * config.hidden, 1, true);
        let alpha_raw = params.push("alpha_raw", Array2::zeros((1, 1)));
        Ok(Self {
            config,
            params,
            proj_v,
            proj_s,
            forward,
            backward,
            head,
            alpha_raw,
        })
    }

    pub fn alpha_raw_index(&self) -> usize {
        self.alpha_raw
    }

    pub fn proj_indices(&self) -> (usize, usize) {
        (self.proj_v, self.proj_s)
    }

    pub fn head_indices(&self) -> (usize, Option<usize>) {
        (self.head.weight, self.head.bias)
    }

    pub fn alpha(&self) -> S {
        sigmoid(self.params.tensor(self.alpha_raw)[[0, 0]])
    }

    pub fn set_alpha_raw(&mut self, v: S) {
        self.params.tensor_mut(self.alpha_raw)[[0, 0]] = v;
    }

    /// Alignment in `[0,1]` as a `T×1` node.
    pub fn alignment_node(&self, g: &mut Graph<S>, p: &Bound, visual: Var, semantic: Var) -> (Var, usize) {
        let pv = g.matmul(visual, p.var(self.proj_v));
        let ps = g.matmul(semantic, p.var(self.proj_s));
        let (cos, degenerate) = g.row_cosine(pv, ps);
        let half = S::lit(0.5);
        (g.affine(cos, half, half), degenerate)
    }

    /// Bidirectional recurrent score in `(0,1)` as a `T×1` node.
    pub fn recurrent_node(&self, g: &mut Graph<S>, p: &Bound, visual: Var, semantic: Var) -> Var {
        let input = if self.config.multimodal {
            g.concat_cols(&[visual, semantic])
        } else {
            visual
        };
        let fwd = self.forward.forward(g, p, input, false);
        let bwd = self.backward.forward(g, p, input, true);
        let both = g.concat_cols(&[fwd.states, bwd.states]);
        let logits = self.head.forward(g, p, both);
        g.sigmoid(logits)
    }

    pub fn forward(&self, g: &mut Graph<S>, p: &Bound, visual: Var, semantic: Var) -> SelectorTrace {
        let alpha = g.sigmoid(p.var(self.alpha_raw));
        let (cosine, degenerate) = match self.config.mode {
            ScoreMode::RecurrentOnly => (None, 0),
            _ => {
                let (c, d) = self.alignment_node(g, p, visual, semantic);
                (Some(c), d)
            }
        };
        let recurrent = match self.config.mode {
            ScoreMode::CosineOnly => None,
            _ => Some(self.recurrent_node(g, p, visual, semantic)),
        };
        let scores = match (cosine, recurrent) {
            (Some(c), Some(h)) => fuse_nodes(g, alpha, c, h),
            (Some(c), None) => c,
            (None, Some(h)) => h,
            (None, None) => unreachable!("every mode has at least one term"),
        };
        SelectorTrace {
            scores,
            cosine,
            recurrent,
            alpha,
            degenerate,
        }
    }

    fn check_inputs(&self, visual: &Array2<S>, semantic: &Array2<S>) -> Result<()> {
        check_features(&self.config, visual, semantic)
    }

    pub fn cosine_alignment(&self, visual: &Array2<S>, semantic: &Array2<S>) -> Result<Alignment<S>> {
        self.check_inputs(visual, semantic)?;
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g);
        let (x, t) = (g.constant(visual.clone()), g.constant(semantic.clone()));
        let (c, degenerate) = self.alignment_node(&mut g, &p, x, t);
        Ok(Alignment {
            values: g.value(c).iter().copied().collect(),
            degenerate,
        })
    }

    pub fn recurrent_score(&self, visual: &Array2<S>, semantic: &Array2<S>) -> Result<Vec<S>> {
        self.check_inputs(visual, semantic)?;
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g);
        let (x, t) = (g.constant(visual.clone()), g.constant(semantic.clone()));
        let h = self.recurrent_node(&mut g, &p, x, t);
        Ok(g.value(h).iter().copied().collect())
    }

    /// `S_t = α·c_t + (1 − α)·h_t`.
    pub fn fuse_scores(&self, cosine: &[S], recurrent: &[S]) -> Result<ScoreSequence<S>> {
        fuse_scores(cosine, recurrent, self.params.tensor(self.alpha_raw)[[0, 0]])
    }

    pub fn select(&self, visual: &Array2<S>, semantic: &Array2<S>) -> Result<ScoreSequence<S>> {
        self.check_inputs(visual, semantic)?;
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g);
        let (x, t) = (g.constant(visual.clone()), g.constant(semantic.clone()));
        let trace = self.forward(&mut g, &p, x, t);
        ScoreSequence::new(g.value(trace.scores).iter().copied().collect(), self.config.mode)
    }
}

fn fuse_nodes<S: Scalar>(g: &mut Graph<S>, alpha: Var, cosine: Var, recurrent: Var) -> Var {
    let (rows, _) = g.shape(cosine);
    let a = g.broadcast(alpha, rows, 1);
    let one_minus = g.affine(a, -S::one(), S::one());
    let lhs = g.mul(a, cosine);
    let rhs = g.mul(one_minus, recurrent);
    let s = g.add(lhs, rhs);
    g.clamp(s, S::zero(), S::one())
}

/// Convex fusion with `α = σ(alpha_raw)`; always labelled [`ScoreMode::Fused`].
pub fn fuse_scores<S: Scalar>(cosine: &[S], recurrent: &[S], alpha_raw: S) -> Result<ScoreSequence<S>> {
    if cosine.len() != recurrent.len() {
        return Err(shape(format!(
            "cosine has {} scores, recurrent has {}",
            cosine.len(),
            recurrent.len()
        )));
    }
    let alpha = sigmoid(alpha_raw);
    let beta = -alpha + S::one();
    let scores = cosine
        .iter()
        .zip(recurrent)
        .map(|(&c, &h)| (alpha * c + beta * h).max(S::zero()).min(S::one()))
        .collect();
    ScoreSequence::new(scores, ScoreMode::Fused)
}

pub(crate) fn check_features<S: Scalar>(cfg: &SelectorConfig, visual: &Array2<S>, semantic: &Array2<S>) -> Result<()> {
    if visual.nrows() == 0 {
        return Err(shape("sequence has no frames"));
    }
    if visual.nrows() != semantic.nrows() {
        return Err(shape(format!(
            "visual has {} rows, semantic has {}",
            visual.nrows(),
            semantic.nrows()
        )));
    }
    if visual.ncols() != cfg.d_v || semantic.ncols() != cfg.d_s {
        return Err(shape(format!(
            "expected feature dims ({}, {}), got ({}, {})",
            cfg.d_v,
            cfg.d_s,
            visual.ncols(),
            semantic.ncols()
        )));
    }
    if !visual.iter().chain(semantic.iter()).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("selector input contains NaN or infinity".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small(mode: ScoreMode) -> Selector<f64> {
        let cfg = SelectorConfig {
            d_c: 2,
            hidden: 3,
            mode,
            ..SelectorConfig::new(2, 2)
        };
        let mut s = Selector::new(cfg, 1).unwrap();
        let (pv, ps) = s.proj_indices();
        s.params.tensor_mut(pv).assign(&Array2::eye(2));
        s.params.tensor_mut(ps).assign(&Array2::eye(2));
        s
    }

    #[test]
    fn alignment_of_parallel_antiparallel_orthogonal() {
        let s = small(ScoreMode::Fused);
        let x = array![[1.0, 2.0], [1.0, 0.0], [3.0, 1.0]];
        let t = array![[2.0, 4.0], [0.0, 5.0], [-3.0, -1.0]];
        let a = s.cosine_alignment(&x, &t).unwrap();
        assert!((a.values[0] - 1.0).abs() < 1e-12);
        assert!((a.values[1] - 0.5).abs() < 1e-12);
        assert!(a.values[2].abs() < 1e-12);
        assert_eq!(a.degenerate, 0);
    }

    #[test]
    fn zero_projection_is_neutral_and_counted() {
        let s = small(ScoreMode::Fused);
        let x = array![[0.0, 0.0], [1.0, 1.0]];
        let t = array![[1.0, 0.0], [1.0, 1.0]];
        let a = s.cosine_alignment(&x, &t).unwrap();
        assert_eq!(a.values[0], 0.5);
        assert_eq!(a.degenerate, 1);
    }

    #[test]
    fn nan_input_is_rejected() {
        let s = small(ScoreMode::Fused);
        let x = array![[f64::NAN, 0.0]];
        let t = array![[1.0, 0.0]];
        assert!(matches!(s.cosine_alignment(&x, &t), Err(Error::NonFinite(_))));
        assert!(s.select(&Array2::zeros((0, 2)), &Array2::zeros((0, 2))).is_err());
    }

    #[test]
    fn zeroed_recurrent_parameters_give_half() {
        let mut s = small(ScoreMode::RecurrentOnly);
        for k in 0..s.params.len() {
            s.params.tensor_mut(k).fill(0.0);
        }
        let x = array![[1.0, -2.0], [0.5, 0.1], [3.0, 3.0]];
        let h = s.recurrent_score(&x, &x).unwrap();
        assert!(h.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn single_frame_sequence() {
        let s = small(ScoreMode::Fused);
        let x = array![[0.3, 0.4]];
        let h = s.recurrent_score(&x, &x).unwrap();
        assert_eq!(h.len(), 1);
        assert!(h[0] > 0.0 && h[0] < 1.0);
        assert_eq!(s.select(&x, &x).unwrap().len(), 1);
    }

    #[test]
    fn fusion_arithmetic_and_endpoints() {
        let s = fuse_scores(&[0.8], &[0.4], 0.0).unwrap();
        assert!((s.scores[0] - 0.6f64).abs() < 1e-15);
        let c = [0.1f64, 0.9, 0.5];
        let h = [0.7, 0.2, 0.3];
        let hi = fuse_scores(&c, &h, 30.0).unwrap();
        let lo = fuse_scores(&c, &h, -30.0).unwrap();
        for k in 0..3 {
            assert!((hi.scores[k] - c[k]).abs() < 1e-6);
            assert!((lo.scores[k] - h[k]).abs() < 1e-6);
        }
        assert!(fuse_scores(&c, &h[..2], 0.0).is_err());
    }

    #[test]
    fn modes_select_their_terms() {
        let x = array![[1.0, 2.0], [0.0, 1.0]];
        let t = array![[2.0, 1.0], [1.0, 1.0]];
        let cos = small(ScoreMode::CosineOnly);
        let a = cos.cosine_alignment(&x, &t).unwrap();
        let sel = cos.select(&x, &t).unwrap();
        assert_eq!(sel.scores, a.values);
        assert_eq!(sel.mode, ScoreMode::CosineOnly);
        let rec = small(ScoreMode::RecurrentOnly);
        assert_eq!(rec.select(&x, &t).unwrap().scores, rec.recurrent_score(&x, &t).unwrap());
    }

    #[test]
    fn untrained_neutral_alignment_gives_half() {
        let mut s = small(ScoreMode::Fused);
        for k in 0..s.params.len() {
            s.params.tensor_mut(k).fill(0.0);
        }
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        let sel = s.select(&x, &x).unwrap();
        assert!(sel.scores.iter().all(|&v| v == 0.5));
    }
}
