//! Parameter storage, the small set of layers the models are built from,
//! and the Adam optimizer.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Named, ordered list of parameter matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<S> {
    names: Vec<String>,
    tensors: Vec<Array2<S>>,
}

impl<S: Scalar> Default for ParamSet<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ParamSet<S> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Array2<S>) -> usize {
        self.names.push(name.into());
        self.tensors.push(value);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Array2<S>] {
        &self.tensors
    }

    pub fn tensor(&self, idx: usize) -> &Array2<S> {
        &self.tensors[idx]
    }

    pub fn tensor_mut(&mut self, idx: usize) -> &mut Array2<S> {
        &mut self.tensors[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Array2::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Register every tensor as a differentiable leaf.
    pub fn bind(&self, g: &mut Graph<S>) -> Bound {
        Bound(self.tensors.iter().map(|t| g.param(t.clone())).collect())
    }

    /// Register every tensor as a constant (no gradient flows into it).
    pub fn bind_frozen(&self, g: &mut Graph<S>) -> Bound {
        Bound(self.tensors.iter().map(|t| g.constant(t.clone())).collect())
    }

    pub fn collect_grads(&self, bound: &Bound, grads: &Gradients<S>) -> Vec<Array2<S>> {
        bound
            .0
            .iter()
            .zip(&self.tensors)
            .map(|(&v, t)| grads.get_or_zeros(v, t.dim()))
            .collect()
    }

    /// Overwrite values by name from `other`; shapes and names must match.
    pub fn load_from(&mut self, other: &ParamSet<S>) -> Result<()> {
        if self.names != other.names {
            return Err(Error::Checkpoint(format!(
                "parameter layout mismatch: expected {:?}, found {:?}",
                self.names, other.names
            )));
        }
        for ((dst, src), name) in self.tensors.iter_mut().zip(&other.tensors).zip(&self.names) {
            if dst.dim() != src.dim() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name}: expected shape {:?}, found {:?}",
                    dst.dim(),
                    src.dim()
                )));
            }
            dst.assign(src);
        }
        Ok(())
    }

    pub fn to_record(&self) -> ParamRecord {
        ParamRecord {
            tensors: self
                .names
                .iter()
                .zip(&self.tensors)
                .map(|(name, t)| TensorRecord {
                    name: name.clone(),
                    shape: [t.nrows(), t.ncols()],
                    data: t.iter().map(|v| v.to_f64_lossless()).collect(),
                })
                .collect(),
        }
    }

    pub fn from_record(rec: &ParamRecord) -> Result<Self> {
        let mut set = Self::new();
        for t in &rec.tensors {
            let data: Vec<S> = t.data.iter().map(|&v| S::lit(v)).collect();
            let arr = Array2::from_shape_vec((t.shape[0], t.shape[1]), data)
                .map_err(|e| Error::Checkpoint(format!("tensor {}: {e}", t.name)))?;
            set.push(t.name.clone(), arr);
        }
        Ok(set)
    }
}

/// Serializable form of a [`ParamSet`]. Values are widened to `f64`, which is
/// lossless for both supported scalar types.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub tensors: Vec<TensorRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

/// Graph handles for a bound [`ParamSet`], in the same order.
#[derive(Clone, Debug)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn var(&self, idx: usize) -> Var {
        self.0[idx]
    }
}

pub fn uniform<S: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Array2<S> {
    Array2::from_shape_fn((rows, cols), |_| S::lit(rng.gen_range(-bound..=bound)))
}

pub fn xavier<S: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<S> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    uniform(rng, rows, cols, bound)
}

/// `y = x·W + b`.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: usize,
    pub bias: Option<usize>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<S: Scalar>(
        params: &mut ParamSet<S>,
        rng: &mut ChaCha8Rng,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
    ) -> Self {
        let weight = params.push(format!("{name}.weight"), xavier(rng, fan_in, fan_out));
        let bias = bias.then(|| params.push(format!("{name}.bias"), Array2::zeros((1, fan_out))));
        Self {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, p: &Bound, x: Var) -> Var {
        let y = g.matmul(x, p.var(self.weight));
        match self.bias {
            Some(b) => g.add_row(y, p.var(b)),
            None => y,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerNorm {
    pub gamma: usize,
    pub beta: usize,
}

impl LayerNorm {
    pub fn new<S: Scalar>(params: &mut ParamSet<S>, name: &str, width: usize) -> Self {
        Self {
            gamma: params.push(format!("{name}.gamma"), Array2::ones((1, width))),
            beta: params.push(format!("{name}.beta"), Array2::zeros((1, width))),
        }
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, p: &Bound, x: Var) -> Var {
        g.layer_norm_rows(x, p.var(self.gamma), p.var(self.beta), S::lit(1e-5))
    }
}

/// Single-direction LSTM with gate order (input, forget, cell, output).
#[derive(Clone, Copy, Debug)]
pub struct Lstm {
    pub w_ih: usize,
    pub w_hh: usize,
    pub bias: usize,
    pub hidden: usize,
}

pub struct LstmOutput {
    /// `T×hidden`, row `t` is the state after consuming frame `t` (in frame
    /// order, regardless of direction).
    pub states: Var,
    /// State after the last step of the sweep.
    pub last: Var,
}

impl Lstm {
    pub fn new<S: Scalar>(
        params: &mut ParamSet<S>,
        rng: &mut ChaCha8Rng,
        name: &str,
        input: usize,
        hidden: usize,
    ) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        Self {
            w_ih: params.push(format!("{name}.w_ih"), uniform(rng, input, 4 * hidden, k)),
            w_hh: params.push(format!("{name}.w_hh"), uniform(rng, hidden, 4 * hidden, k)),
            bias: params.push(format!("{name}.bias"), uniform(rng, 1, 4 * hidden, k)),
            hidden,
        }
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, p: &Bound, x: Var, reverse: bool) -> LstmOutput {
        let (steps, _) = g.shape(x);
        assert!(steps > 0, "lstm needs at least one step");
        let h = self.hidden;
        let xw = g.matmul(x, p.var(self.w_ih));
        let xw = g.add_row(xw, p.var(self.bias));
        let mut hs = g.constant(Array2::zeros((1, h)));
        let mut cs = g.constant(Array2::zeros((1, h)));
        let mut outputs = vec![hs; steps];
        let order: Vec<usize> = if reverse {
            (0..steps).rev().collect()
        } else {
            (0..steps).collect()
        };
        for &t in &order {
            let xt = g.slice_rows(xw, t, 1);
            let rec = g.matmul(hs, p.var(self.w_hh));
            let gates = g.add(xt, rec);
            let i = g.slice_cols(gates, 0, h);
            let f = g.slice_cols(gates, h, h);
            let c = g.slice_cols(gates, 2 * h, h);
            let o = g.slice_cols(gates, 3 * h, h);
            let i = g.sigmoid(i);
            let f = g.sigmoid(f);
            let c = g.tanh(c);
            let o = g.sigmoid(o);
            let keep = g.mul(f, cs);
            let write = g.mul(i, c);
            cs = g.add(keep, write);
            let squashed = g.tanh(cs);
            hs = g.mul(o, squashed);
            outputs[t] = hs;
        }
        LstmOutput {
            states: g.concat_rows(&outputs),
            last: hs,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<S> {
    pub step: u64,
    pub m: Vec<Array2<S>>,
    pub v: Vec<Array2<S>>,
}

impl<S: Scalar> AdamState<S> {
    pub fn for_params(params: &ParamSet<S>) -> Self {
        let zeros = || params.tensors().iter().map(|t| Array2::zeros(t.dim())).collect();
        Self {
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn to_record(&self) -> AdamRecord {
        let flat = |ts: &[Array2<S>]| {
            ts.iter()
                .map(|t| t.iter().map(|v| v.to_f64_lossless()).collect())
                .collect()
        };
        AdamRecord {
            step: self.step,
            m: flat(&self.m),
            v: flat(&self.v),
        }
    }

    pub fn from_record(rec: &AdamRecord, params: &ParamSet<S>) -> Result<Self> {
        let unflat = |src: &[Vec<f64>]| -> Result<Vec<Array2<S>>> {
            if src.len() != params.len() {
                return Err(Error::Checkpoint("optimizer state length mismatch".into()));
            }
            src.iter()
                .zip(params.tensors())
                .map(|(d, t)| {
                    Array2::from_shape_vec(t.dim(), d.iter().map(|&x| S::lit(x)).collect())
                        .map_err(|e| Error::Checkpoint(format!("optimizer state: {e}")))
                })
                .collect()
        };
        Ok(Self {
            step: rec.step,
            m: unflat(&rec.m)?,
            v: unflat(&rec.v)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamRecord {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

/// Global L2 norm over a gradient list.
pub fn global_norm<S: Scalar>(grads: &[Array2<S>]) -> S {
    grads
        .iter()
        .flat_map(|g| g.iter())
        .fold(S::zero(), |acc, &x| acc + x * x)
        .sqrt()
}

/// Rescale `grads` so their global norm is at most `max_norm` (no-op when
/// `max_norm` is 0). Returns the pre-clip norm.
pub fn clip_global_norm<S: Scalar>(grads: &mut [Array2<S>], max_norm: f64) -> S {
    let norm = global_norm(grads);
    let max = S::lit(max_norm);
    if max_norm > 0.0 && norm > max {
        let k = max / norm;
        for g in grads.iter_mut() {
            g.mapv_inplace(|x| x * k);
        }
    }
    norm
}

pub fn adam_step<S: Scalar>(
    cfg: &AdamConfig,
    params: &mut ParamSet<S>,
    state: &mut AdamState<S>,
    grads: &[Array2<S>],
) {
    state.step += 1;
    let (b1, b2) = (S::lit(cfg.beta1), S::lit(cfg.beta2));
    let one = S::one();
    let bc1 = one - b1.powi(state.step as i32);
    let bc2 = one - b2.powi(state.step as i32);
    let lr = S::lit(cfg.lr);
    let eps = S::lit(cfg.eps);
    for (k, grad) in grads.iter().enumerate() {
        let m = &mut state.m[k];
        let v = &mut state.v[k];
        let p = params.tensor_mut(k);
        ndarray::Zip::from(p)
            .and(m)
            .and(v)
            .and(grad)
            .for_each(|p, m, v, &g| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *p = *p - lr * mhat / (vhat.sqrt() + eps);
            });
    }
}
