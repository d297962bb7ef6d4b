//! Sequence discriminator: a unidirectional LSTM over `[X_t ⊕ T_t]` rows
//! whose final state feeds a logistic head.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{shape, Error, Result};
use crate::nn::{Bound, Linear, Lstm, ParamSet};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub d_v: usize,
    pub d_s: usize,
    pub hidden: usize,
    pub multimodal: bool,
}

impl DiscriminatorConfig {
    pub fn new(d_v: usize, d_s: usize) -> Self {
        Self {
            d_v,
            d_s,
            hidden: 256,
            multimodal: true,
        }
    }
}

pub struct DiscriminatorTrace {
    pub logit: Var,
    /// Probability that the sequence is original, `1×1`.
    pub prob: Var,
}

#[derive(Clone, Debug)]
pub struct Discriminator<S> {
    pub config: DiscriminatorConfig,
    pub params: ParamSet<S>,
    encoder: Lstm,
    head: Linear,
}

impl<S: Scalar> Discriminator<S> {
    pub fn new(config: DiscriminatorConfig, seed: u64) -> Result<Self> {
        if config.d_v == 0 || config.d_s == 0 || config.hidden == 0 {
            return Err(Error::InvalidArgument(
                "discriminator dimensions must be positive".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let input = if config.multimodal {
            config.d_v + config.d_s
        } else {
            config.d_v
        };
        let encoder = Lstm::new(&mut params, &mut rng, "encoder", input, config.hidden);
        let head = Linear::new(&mut params, &mut rng, "head", config.hidden, 1, true);
        Ok(Self {
            config,
            params,
            encoder,
            head,
        })
    }

    /// Zero the head so every sequence scores 0.5.
    pub fn zero_head(&mut self) {
        self.params.tensor_mut(self.head.weight).fill(S::zero());
        if let Some(b) = self.head.bias {
            self.params.tensor_mut(b).fill(S::zero());
        }
    }

    pub fn forward(&self, g: &mut Graph<S>, p: &Bound, visual: Var, semantic: Option<Var>) -> DiscriminatorTrace {
        let input = match (self.config.multimodal, semantic) {
            (true, Some(t)) => g.concat_cols(&[visual, t]),
            _ => visual,
        };
        let enc = self.encoder.forward(g, p, input, false);
        let logit = self.head.forward(g, p, enc.last);
        let prob = g.sigmoid(logit);
        DiscriminatorTrace { logit, prob }
    }

    pub fn discriminate(&self, visual: &Array2<S>, semantic: &Array2<S>) -> Result<S> {
        let c = &self.config;
        if visual.nrows() == 0 || visual.nrows() != semantic.nrows() {
            return Err(shape("discriminator needs matching, non-zero row counts"));
        }
        if visual.ncols() != c.d_v || (c.multimodal && semantic.ncols() != c.d_s) {
            return Err(shape(format!(
                "expected dims ({}, {}), got ({}, {})",
                c.d_v,
                c.d_s,
                visual.ncols(),
                semantic.ncols()
            )));
        }
        if !visual.iter().chain(semantic.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("discriminator input contains NaN or infinity".into()));
        }
        let mut g = Graph::new();
        let p = self.params.bind_frozen(&mut g);
        let x = g.constant(visual.clone());
        let t = g.constant(semantic.clone());
        let out = self.forward(&mut g, &p, x, Some(t));
        Ok(g.scalar(out.prob))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn rand_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-3.0..3.0))
    }

    #[test]
    fn probability_range_and_determinism() {
        let d = Discriminator::<f64>::new(DiscriminatorConfig { hidden: 6, ..DiscriminatorConfig::new(4, 3) }, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for t in 1..20 {
            let x = rand_matrix(t, 4, &mut rng);
            let s = rand_matrix(t, 3, &mut rng);
            let p = d.discriminate(&x, &s).unwrap();
            assert!(p > 0.0 && p < 1.0);
            assert_eq!(p, d.discriminate(&x, &s).unwrap());
        }
    }

    #[test]
    fn zero_head_is_undecided() {
        let mut d = Discriminator::<f64>::new(DiscriminatorConfig { hidden: 5, ..DiscriminatorConfig::new(2, 2) }, 1).unwrap();
        d.zero_head();
        let x = Array2::from_elem((3, 2), 0.7);
        assert_eq!(d.discriminate(&x, &x).unwrap(), 0.5);
    }

    #[test]
    fn rejects_non_finite_and_mismatched_input() {
        let d = Discriminator::<f64>::new(DiscriminatorConfig { hidden: 3, ..DiscriminatorConfig::new(2, 2) }, 1).unwrap();
        let mut x = Array2::zeros((2, 2));
        assert!(d.discriminate(&x, &Array2::zeros((3, 2))).is_err());
        x[[1, 1]] = f64::NAN;
        assert!(d.discriminate(&x, &Array2::zeros((2, 2))).is_err());
    }
}
