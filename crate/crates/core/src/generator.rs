//! Reconstruction generator: an encoder-only Transformer over score-weighted
//! feature rows with one visual head and one semantic head.
//!
//! The recurrent variant replaces the Transformer trunk with a single LSTM
//! and exists for the generator ablation.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{shape, Error, Result};
use crate::nn::{Bound, LayerNorm, Linear, Lstm, ParamSet};
use crate::scalar::Scalar;
use crate::selector::ScoreSequence;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Transformer,
    Recurrent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub d_v: usize,
    pub d_s: usize,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub dropout: f64,
    pub kind: GeneratorKind,
    /// Consume and reconstruct semantic rows as well as visual rows.
    pub multimodal: bool,
}

impl GeneratorConfig {
    pub fn new(d_v: usize, d_s: usize) -> Self {
        Self {
            d_v,
            d_s,
            d_model: 256,
            layers: 2,
            heads: 4,
            d_ff: 512,
            dropout: 0.1,
            kind: GeneratorKind::Transformer,
            multimodal: true,
        }
    }
}

/// Score-weighted rows: `W_t = S_t·X_t`, `V_t = S_t·T_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedFeatures<S> {
    pub w: Array2<S>,
    pub v: Array2<S>,
}

pub fn weight_features<S: Scalar>(
    visual: &Array2<S>,
    semantic: &Array2<S>,
    scores: &ScoreSequence<S>,
) -> Result<WeightedFeatures<S>> {
    let t = scores.len();
    if visual.nrows() != t || semantic.nrows() != t {
        return Err(shape(format!(
            "{t} scores for {} visual and {} semantic rows",
            visual.nrows(),
            semantic.nrows()
        )));
    }
    let col = Array2::from_shape_vec((t, 1), scores.scores.clone()).expect("column shape");
    Ok(WeightedFeatures {
        w: visual * &col,
        v: semantic * &col,
    })
}

#[derive(Clone, Copy, Debug)]
struct EncoderLayer {
    norm_attn: LayerNorm,
    query: Linear,
    key: Linear,
    value: Linear,
    out: Linear,
    norm_ff: LayerNorm,
    ff_in: Linear,
    ff_out: Linear,
}

#[derive(Clone, Debug)]
enum Trunk {
    Transformer {
        layers: Vec<EncoderLayer>,
        final_norm: Option<LayerNorm>,
    },
    Recurrent(Lstm),
}

pub struct GeneratorOutput {
    pub visual: Var,
    pub semantic: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct Generator<S> {
    pub config: GeneratorConfig,
    pub params: ParamSet<S>,
    input: Linear,
    trunk: Trunk,
    visual_head: Linear,
    semantic_head: Option<Linear>,
}

/// Sinusoidal position table, `rows×width`.
pub fn positional_encoding<S: Scalar>(rows: usize, width: usize) -> Array2<S> {
    Array2::from_shape_fn((rows, width), |(t, j)| {
        let pair = (j / 2) as f64;
        let angle = t as f64 / 10000f64.powf(2.0 * pair / width as f64);
        S::lit(if j % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}

impl<S: Scalar> Generator<S> {
    pub fn new(config: GeneratorConfig, seed: u64) -> Result<Self> {
        let c = &config;
        if c.d_v == 0 || c.d_s == 0 || c.d_model == 0 {
            return Err(Error::InvalidArgument("generator dimensions must be positive".into()));
        }
        if c.kind == GeneratorKind::Transformer && (c.heads == 0 || c.d_model % c.heads != 0) {
            return Err(Error::InvalidArgument(format!(
                "d_model ({}) must be divisible by heads ({})",
                c.d_model, c.heads
            )));
        }
        if !(0.0..1.0).contains(&c.dropout) {
            return Err(Error::InvalidArgument("dropout must lie in [0, 1)".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let in_dim = if c.multimodal { c.d_v + c.d_s } else { c.d_v };
        let input = Linear::new(&mut params, &mut rng, "input", in_dim, c.d_model, true);
        let trunk = match c.kind {
            GeneratorKind::Transformer => {
                let layers = (0..c.layers)
                    .map(|l| {
                        let n = |s: &str| format!("layer{l}.{s}");
                        let dm = c.d_model;
                        EncoderLayer {
                            norm_attn: LayerNorm::new(&mut params, &n("norm_attn"), dm),
                            query: Linear::new(&mut params, &mut rng, &n("query"), dm, dm, true),
                            key: Linear::new(&mut params, &mut rng, &n("key"), dm, dm, true),
                            value: Linear::new(&mut params, &mut rng, &n("value"), dm, dm, true),
                            out: Linear::new(&mut params, &mut rng, &n("out"), dm, dm, true),
                            norm_ff: LayerNorm::new(&mut params, &n("norm_ff"), dm),
                            ff_in: Linear::new(&mut params, &mut rng, &n("ff_in"), dm, c.d_ff, true),
                            ff_out: Linear::new(&mut params, &mut rng, &n("ff_out"), c.d_ff, dm, true),
                        }
                    })
                    .collect::<Vec<_>>();
                let final_norm = (c.layers > 0).then(|| LayerNorm::new(&mut params, "final_norm", c.d_model));
                Trunk::Transformer { layers, final_norm }
            }
            GeneratorKind::Recurrent => {
                Trunk::Recurrent(Lstm::new(&mut params, &mut rng, "lstm", c.d_model, c.d_model))
            }
        };
        let visual_head = Linear::new(&mut params, &mut rng, "visual_head", c.d_model, c.d_v, true);
        let semantic_head = c
            .multimodal
            .then(|| Linear::new(&mut params, &mut rng, "semantic_head", c.d_model, c.d_s, true));
        Ok(Self {
            config,
            params,
            input,
            trunk,
            visual_head,
            semantic_head,
        })
    }

    /// Indices of (input weight, visual head weight, semantic head weight).
    pub fn linear_indices(&self) -> (usize, usize, Option<usize>) {
        (
            self.input.weight,
            self.visual_head.weight,
            self.semantic_head.map(|h| h.weight),
        )
    }

    fn dropout(&self, g: &mut Graph<S>, x: Var, rng: &mut Option<&mut ChaCha8Rng>) -> Var {
        let p = self.config.dropout;
        match rng {
            Some(rng) if p > 0.0 => {
                let (r, c) = g.shape(x);
                let keep = S::lit(1.0 / (1.0 - p));
                let mask = Array2::from_shape_fn((r, c), |_| {
                    if rng.gen_bool(1.0 - p) {
                        keep
                    } else {
                        S::zero()
                    }
                });
                let m = g.constant(mask);
                g.mul(x, m)
            }
            _ => x,
        }
    }

    fn attention(&self, g: &mut Graph<S>, p: &Bound, layer: &EncoderLayer, x: Var) -> Var {
        let heads = self.config.heads;
        let dk = self.config.d_model / heads;
        let q = layer.query.forward(g, p, x);
        let k = layer.key.forward(g, p, x);
        let v = layer.value.forward(g, p, x);
        let scale = S::lit(1.0 / (dk as f64).sqrt());
        let outs: Vec<Var> = (0..heads)
            .map(|h| {
                let qh = g.slice_cols(q, h * dk, dk);
                let kh = g.slice_cols(k, h * dk, dk);
                let vh = g.slice_cols(v, h * dk, dk);
                let logits = g.matmul_nt(qh, kh);
                let logits = g.scale(logits, scale);
                let weights = g.softmax_rows(logits);
                g.matmul(weights, vh)
            })
            .collect();
        let merged = if outs.len() == 1 { outs[0] } else { g.concat_cols(&outs) };
        layer.out.forward(g, p, merged)
    }

    /// Reconstruct from weighted rows. Pass an RNG to enable dropout
    /// (training mode); `None` is deterministic evaluation.
    pub fn forward(
        &self,
        g: &mut Graph<S>,
        p: &Bound,
        w: Var,
        v: Var,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> GeneratorOutput {
        let input = if self.config.multimodal {
            g.concat_cols(&[w, v])
        } else {
            w
        };
        let mut h = self.input.forward(g, p, input);
        match &self.trunk {
            Trunk::Transformer { layers, final_norm } => {
                let (t, _) = g.shape(h);
                let pe = g.constant(positional_encoding(t, self.config.d_model));
                h = g.add(h, pe);
                for layer in layers {
                    let n = layer.norm_attn.forward(g, p, h);
                    let a = self.attention(g, p, layer, n);
                    let a = self.dropout(g, a, &mut rng);
                    h = g.add(h, a);
                    let n = layer.norm_ff.forward(g, p, h);
                    let f = layer.ff_in.forward(g, p, n);
                    let f = g.relu(f);
                    let f = layer.ff_out.forward(g, p, f);
                    let f = self.dropout(g, f, &mut rng);
                    h = g.add(h, f);
                }
                if let Some(norm) = final_norm {
                    h = norm.forward(g, p, h);
                }
            }
            Trunk::Recurrent(lstm) => {
                h = lstm.forward(g, p, h, false).states;
                h = self.dropout(g, h, &mut rng);
            }
        }
        GeneratorOutput {
            visual: self.visual_head.forward(g, p, h),
            semantic: self.semantic_head.map(|head| head.forward(g, p, h)),
        }
    }

    /// Evaluation-mode reconstruction `(X̂, T̂)`; `T̂` is `None` when the
    /// generator is visual-only.
    pub fn reconstruct(&self, wf: &WeightedFeatures<S>) -> Result<(Array2<S>, Option<Array2<S>>)> {
        let c = &self.config;
        if wf.w.nrows() == 0 || wf.w.nrows() != wf.v.nrows() {
            return Err(shape("weighted features need matching, non-zero row counts"));
        }
        if wf.w.ncols() != c.d_v || wf.v.ncols() != c.d_s {
            return Err(shape(format!(
                "expected dims ({}, {}), got ({}, {})",
                c.d_v,
                c.d_s,
                wf.w.ncols(),
                wf.v.ncols()
            )));
        }
        if !wf.w.iter().chain(wf.v.iter()).all(|x| x.is_finite()) {
            return Err(Error::NonFinite("generator input contains NaN or infinity".into()));
        }
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g);
        let (w, v) = (g.constant(wf.w.clone()), g.constant(wf.v.clone()));
        let out = self.forward(&mut g, &p, w, v, None);
        Ok((
            g.value(out.visual).clone(),
            out.semantic.map(|s| g.value(s).clone()),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn rand_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
    }

    fn small(kind: GeneratorKind, layers: usize) -> Generator<f64> {
        let cfg = GeneratorConfig {
            d_model: 8,
            layers,
            heads: 2,
            d_ff: 12,
            kind,
            ..GeneratorConfig::new(5, 3)
        };
        Generator::new(cfg, 4).unwrap()
    }

    #[test]
    fn weighting_is_row_scaling() {
        let x = array![[2.0, 4.0]];
        let t = array![[1.0]];
        let s = ScoreSequence::new(vec![0.5], crate::selector::ScoreMode::Fused).unwrap();
        let wf = weight_features(&x, &t, &s).unwrap();
        assert_eq!(wf.w, array![[1.0, 2.0]]);
        assert_eq!(wf.v, array![[0.5]]);
        let ones = ScoreSequence::new(vec![1.0; 3], crate::selector::ScoreMode::Fused).unwrap();
        let x = rand_matrix(3, 4, 1);
        let t = rand_matrix(3, 2, 2);
        let wf = weight_features(&x, &t, &ones).unwrap();
        assert_eq!((wf.w, wf.v), (x.clone(), t.clone()));
        let zeros = ScoreSequence::new(vec![0.0; 3], crate::selector::ScoreMode::Fused).unwrap();
        let wf = weight_features(&x, &t, &zeros).unwrap();
        assert!(wf.w.iter().chain(wf.v.iter()).all(|&v| v == 0.0));
        assert!(weight_features(&x, &t, &s).is_err());
    }

    #[test]
    fn shapes_and_determinism() {
        for kind in [GeneratorKind::Transformer, GeneratorKind::Recurrent] {
            let gen = small(kind, 2);
            for t in [1, 2, 17] {
                let wf = WeightedFeatures {
                    w: rand_matrix(t, 5, t as u64),
                    v: rand_matrix(t, 3, 100 + t as u64),
                };
                let (x, s) = gen.reconstruct(&wf).unwrap();
                assert_eq!(x.dim(), (t, 5));
                assert_eq!(s.as_ref().unwrap().dim(), (t, 3));
                assert_eq!(gen.reconstruct(&wf).unwrap(), (x, s));
            }
        }
    }

    #[test]
    fn positional_encoding_breaks_permutation_symmetry() {
        let gen = small(GeneratorKind::Transformer, 1);
        let w = rand_matrix(4, 5, 9);
        let v = rand_matrix(4, 3, 10);
        let perm = [2usize, 0, 3, 1];
        let permute = |m: &Array2<f64>| {
            Array2::from_shape_fn(m.dim(), |(i, j)| m[[perm[i], j]])
        };
        let (x, _) = gen.reconstruct(&WeightedFeatures { w: w.clone(), v: v.clone() }).unwrap();
        let (xp, _) = gen
            .reconstruct(&WeightedFeatures { w: permute(&w), v: permute(&v) })
            .unwrap();
        let diff = (&permute(&x) - &xp).mapv(f64::abs).sum();
        assert!(diff > 1e-6, "outputs equivariant under permutation: {diff}");
    }

    #[test]
    fn zero_layer_generator_is_affine() {
        let gen = small(GeneratorKind::Transformer, 0);
        let a = WeightedFeatures { w: rand_matrix(3, 5, 1), v: rand_matrix(3, 3, 2) };
        let b = WeightedFeatures { w: rand_matrix(3, 5, 3), v: rand_matrix(3, 3, 4) };
        let mix = |l: f64| WeightedFeatures {
            w: &a.w * l + &b.w * (1.0 - l),
            v: &a.v * l + &b.v * (1.0 - l),
        };
        let (xa, _) = gen.reconstruct(&a).unwrap();
        let (xb, _) = gen.reconstruct(&b).unwrap();
        let (xm, _) = gen.reconstruct(&mix(0.3)).unwrap();
        let expect = &xa * 0.3 + &xb * 0.7;
        assert!((&xm - &expect).mapv(f64::abs).sum() < 1e-10);
    }

    #[test]
    fn rejects_bad_config_and_input() {
        let cfg = GeneratorConfig { d_model: 10, heads: 3, ..GeneratorConfig::new(2, 2) };
        assert!(Generator::<f64>::new(cfg, 0).is_err());
        let gen = small(GeneratorKind::Transformer, 1);
        let mut w = rand_matrix(2, 5, 1);
        w[[0, 0]] = f64::INFINITY;
        assert!(gen.reconstruct(&WeightedFeatures { w, v: rand_matrix(2, 3, 1) }).is_err());
    }

    #[test]
    fn visual_only_generator_has_no_semantic_head() {
        let cfg = GeneratorConfig { d_model: 4, heads: 2, d_ff: 4, multimodal: false, ..GeneratorConfig::new(3, 2) };
        let gen = Generator::<f64>::new(cfg, 0).unwrap();
        let wf = WeightedFeatures { w: rand_matrix(3, 3, 1), v: rand_matrix(3, 2, 2) };
        let (x, s) = gen.reconstruct(&wf).unwrap();
        assert_eq!(x.dim(), (3, 3));
        assert!(s.is_none());
    }
}
