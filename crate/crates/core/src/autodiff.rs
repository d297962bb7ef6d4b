//! Define-by-run reverse-mode differentiation over dense row-major matrices.
//!
//! Every value is a 2-D array; scalars are `1×1`. A [`Graph`] records each
//! operation as it is evaluated, so control flow (recurrence, masking of
//! degenerate rows) is plain Rust. [`Graph::backward`] walks the tape in
//! reverse insertion order, which is a valid topological order.

use ndarray::{s, Array2, ArrayView2, Axis, Zip};

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulNT(Var, Var),
    Add(Var, Var),
    /// `a (r×c) + b (1×c)` broadcast over rows.
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    /// `a (r×c)` with row `i` multiplied by `s[i]`, `s` is `r×1`.
    ScaleRows(Var, Var),
    /// `1×1` broadcast to `rows×cols`.
    Broadcast(Var),
    /// `k·a + b` for constants.
    Affine(Var, S),
    Clamp(Var, S, S),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Square(Var),
    Sqrt(Var),
    Abs(Var),
    Log(Var),
    Sum(Var),
    Mean(Var),
    SoftmaxRows(Var),
    LayerNormRows {
        x: Var,
        gamma: Var,
        beta: Var,
        eps: S,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    /// Per-row cosine similarity, `r×1`; rows where either side has zero
    /// norm produce 0 and no gradient.
    RowCosine(Var, Var),
    /// Valid (no padding) uniform mean filter of the given window.
    BoxFilter(Var, usize, usize),
    MinAll(Var),
    MaxAll(Var),
}

struct Node<S> {
    value: Array2<S>,
    op: Op<S>,
    requires_grad: bool,
}

/// Computation tape.
pub struct Graph<S: Scalar> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<S>, op: Op<S>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Array2<S>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, value: Array2<S>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar_constant(&mut self, v: S) -> Var {
        self.constant(Array2::from_elem((1, 1), v))
    }

    pub fn value(&self, v: Var) -> &Array2<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// Value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> S {
        let val = &self.nodes[v.0].value;
        debug_assert_eq!(val.dim(), (1, 1));
        val[[0, 0]]
    }

    fn unary(&mut self, a: Var, value: Array2<S>, op: Op<S>) -> Var {
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    fn binary(&mut self, a: Var, b: Var, value: Array2<S>, op: Op<S>) -> Var {
        let rg = self.rg(a) || self.rg(b);
        self.push(value, op, rg)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) {
        assert_eq!(
            self.shape(a),
            self.shape(b),
            "{what}: operand shapes differ"
        );
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        self.binary(a, b, value, Op::MatMul(a, b))
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(&self.value(b).t());
        self.binary(a, b, value, Op::MatMulNT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "add");
        let value = self.value(a) + self.value(b);
        self.binary(a, b, value, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (_, c) = self.shape(a);
        assert_eq!(self.shape(row), (1, c), "add_row: bias must be 1×cols");
        let value = self.value(a) + self.value(row);
        self.binary(a, row, value, Op::AddRow(a, row))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "sub");
        let value = self.value(a) - self.value(b);
        self.binary(a, b, value, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "mul");
        let value = self.value(a) * self.value(b);
        self.binary(a, b, value, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "div");
        let value = self.value(a) / self.value(b);
        self.binary(a, b, value, Op::Div(a, b))
    }

    pub fn scale_rows(&mut self, a: Var, s: Var) -> Var {
        let (r, _) = self.shape(a);
        assert_eq!(self.shape(s), (r, 1), "scale_rows: scale must be rows×1");
        let value = self.value(a) * self.value(s);
        self.binary(a, s, value, Op::ScaleRows(a, s))
    }

    pub fn broadcast(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let v = self.scalar(a);
        self.unary(a, Array2::from_elem((rows, cols), v), Op::Broadcast(a))
    }

    /// Multiply every element by the `1×1` node `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Var {
        let (r, c) = self.shape(a);
        let b = self.broadcast(s, r, c);
        self.mul(a, b)
    }

    /// `k·a + offset`.
    pub fn affine(&mut self, a: Var, k: S, offset: S) -> Var {
        let value = self.value(a).mapv(|x| k * x + offset);
        self.unary(a, value, Op::Affine(a, k))
    }

    pub fn scale(&mut self, a: Var, k: S) -> Var {
        self.affine(a, k, S::zero())
    }

    pub fn clamp(&mut self, a: Var, lo: S, hi: S) -> Var {
        let value = self.value(a).mapv(|x| x.max(lo).min(hi));
        self.unary(a, value, Op::Clamp(a, lo, hi))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(sigmoid);
        self.unary(a, value, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(S::tanh);
        self.unary(a, value, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x.max(S::zero()));
        self.unary(a, value, Op::Relu(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x * x);
        self.unary(a, value, Op::Square(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(S::sqrt);
        self.unary(a, value, Op::Sqrt(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(S::abs);
        self.unary(a, value, Op::Abs(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(S::ln);
        self.unary(a, value, Op::Log(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = self.value(a).sum();
        self.unary(a, Array2::from_elem((1, 1), v), Op::Sum(a))
    }

    /// Mean of all elements; an empty matrix has mean 0.
    pub fn mean(&mut self, a: Var) -> Var {
        let val = self.value(a);
        let n = val.len();
        let v = if n == 0 {
            S::zero()
        } else {
            val.sum() / S::from_usize(n).unwrap()
        };
        self.unary(a, Array2::from_elem((1, 1), v), Op::Mean(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for mut row in value.rows_mut() {
            let m = row.iter().copied().fold(S::neg_infinity(), S::max);
            row.mapv_inplace(|x| (x - m).exp());
            let z: S = row.sum();
            row.mapv_inplace(|x| x / z);
        }
        self.unary(a, value, Op::SoftmaxRows(a))
    }

    pub fn layer_norm_rows(&mut self, x: Var, gamma: Var, beta: Var, eps: S) -> Var {
        let (_, c) = self.shape(x);
        assert_eq!(self.shape(gamma), (1, c));
        assert_eq!(self.shape(beta), (1, c));
        let (xhat, _) = normalize_rows(self.value(x), eps);
        let value = xhat * self.value(gamma) + self.value(beta);
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        self.push(
            value,
            Op::LayerNormRows {
                x,
                gamma,
                beta,
                eps,
            },
            rg,
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<ArrayView2<S>> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("concat_cols: row counts differ");
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(value, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<ArrayView2<S>> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("concat_rows: col counts differ");
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(value, Op::ConcatRows(parts.to_vec()), rg)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.unary(a, value, Op::SliceCols(a, start))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.value(a).slice(s![start..start + len, ..]).to_owned();
        self.unary(a, value, Op::SliceRows(a, start))
    }

    /// Returns the cosine node and the number of zero-norm rows.
    pub fn row_cosine(&mut self, a: Var, b: Var) -> (Var, usize) {
        self.same_shape(a, b, "row_cosine");
        let (va, vb) = (self.value(a), self.value(b));
        let mut degenerate = 0;
        let mut value = Array2::zeros((va.nrows(), 1));
        for (i, (ra, rb)) in va.rows().into_iter().zip(vb.rows()).enumerate() {
            let na = ra.dot(&ra).sqrt();
            let nb = rb.dot(&rb).sqrt();
            if na == S::zero() || nb == S::zero() {
                degenerate += 1;
                continue;
            }
            let c = ra.dot(&rb) / (na * nb);
            value[[i, 0]] = c.max(-S::one()).min(S::one());
        }
        (self.binary(a, b, value, Op::RowCosine(a, b)), degenerate)
    }

    pub fn box_filter(&mut self, a: Var, kh: usize, kw: usize) -> Var {
        let value = box_mean(self.value(a), kh, kw);
        self.unary(a, value, Op::BoxFilter(a, kh, kw))
    }

    pub fn min_all(&mut self, a: Var) -> Var {
        let (_, v) = arg_extreme(self.value(a), |x, y| x < y);
        self.unary(a, Array2::from_elem((1, 1), v), Op::MinAll(a))
    }

    pub fn max_all(&mut self, a: Var) -> Var {
        let (_, v) = arg_extreme(self.value(a), |x, y| x > y);
        self.unary(a, Array2::from_elem((1, 1), v), Op::MaxAll(a))
    }

    /// Reverse sweep from a `1×1` output.
    pub fn backward(&self, output: Var) -> Gradients<S> {
        assert_eq!(self.shape(output), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Array2<S>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Array2::ones((1, 1)));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, idx: usize, g: &Array2<S>, grads: &mut [Option<Array2<S>>]) {
        let node = &self.nodes[idx];
        let val = |v: Var| &self.nodes[v.0].value;
        let mut acc = |v: Var, d: Array2<S>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += &d,
                slot @ None => *slot = Some(d),
            }
        };
        let rg = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if rg(*a) {
                    acc(*a, g.dot(&val(*b).t()));
                }
                if rg(*b) {
                    acc(*b, val(*a).t().dot(g));
                }
            }
            Op::MatMulNT(a, b) => {
                if rg(*a) {
                    acc(*a, g.dot(val(*b)));
                }
                if rg(*b) {
                    acc(*b, g.t().dot(val(*a)));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::AddRow(a, b) => {
                acc(*a, g.clone());
                if rg(*b) {
                    acc(*b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                if rg(*b) {
                    acc(*b, g.mapv(|x| -x));
                }
            }
            Op::Mul(a, b) => {
                if rg(*a) {
                    acc(*a, g * val(*b));
                }
                if rg(*b) {
                    acc(*b, g * val(*a));
                }
            }
            Op::Div(a, b) => {
                let vb = val(*b);
                if rg(*a) {
                    acc(*a, g / vb);
                }
                if rg(*b) {
                    let mut d = Array2::zeros(g.raw_dim());
                    Zip::from(&mut d)
                        .and(g)
                        .and(val(*a))
                        .and(vb)
                        .for_each(|d, &g, &a, &b| *d = -g * a / (b * b));
                    acc(*b, d);
                }
            }
            Op::ScaleRows(a, s) => {
                if rg(*a) {
                    acc(*a, g * val(*s));
                }
                if rg(*s) {
                    let d = (g * val(*a)).sum_axis(Axis(1)).insert_axis(Axis(1));
                    acc(*s, d);
                }
            }
            Op::Broadcast(a) => acc(*a, Array2::from_elem((1, 1), g.sum())),
            Op::Affine(a, k) => acc(*a, g.mapv(|x| x * *k)),
            Op::Clamp(a, lo, hi) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(val(*a)).for_each(|d, &x| {
                    if x < *lo || x > *hi {
                        *d = S::zero();
                    }
                });
                acc(*a, d);
            }
            Op::Sigmoid(a) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(&node.value)
                    .for_each(|d, &y| *d = *d * y * (S::one() - y));
                acc(*a, d);
            }
            Op::Tanh(a) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(&node.value)
                    .for_each(|d, &y| *d = *d * (S::one() - y * y));
                acc(*a, d);
            }
            Op::Relu(a) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(val(*a)).for_each(|d, &x| {
                    if x <= S::zero() {
                        *d = S::zero();
                    }
                });
                acc(*a, d);
            }
            Op::Square(a) => {
                let two = S::lit(2.0);
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(val(*a))
                    .for_each(|d, &x| *d = *d * two * x);
                acc(*a, d);
            }
            Op::Sqrt(a) => {
                let two = S::lit(2.0);
                let mut d = g.clone();
                Zip::from(&mut d).and(&node.value).for_each(|d, &y| {
                    *d = if y > S::zero() { *d / (two * y) } else { S::zero() }
                });
                acc(*a, d);
            }
            Op::Abs(a) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(val(*a)).for_each(|d, &x| {
                    *d = if x > S::zero() {
                        *d
                    } else if x < S::zero() {
                        -*d
                    } else {
                        S::zero()
                    }
                });
                acc(*a, d);
            }
            Op::Log(a) => acc(*a, g / val(*a)),
            Op::Sum(a) => {
                let gv = g[[0, 0]];
                acc(*a, Array2::from_elem(val(*a).raw_dim(), gv));
            }
            Op::Mean(a) => {
                let n = val(*a).len().max(1);
                let gv = g[[0, 0]] / S::from_usize(n).unwrap();
                acc(*a, Array2::from_elem(val(*a).raw_dim(), gv));
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let gy = g * y;
                let dots = gy.sum_axis(Axis(1)).insert_axis(Axis(1));
                acc(*a, gy - y * &dots);
            }
            Op::LayerNormRows { x, gamma, beta, eps } => {
                let (xhat, inv_std) = normalize_rows(val(*x), *eps);
                if rg(*gamma) {
                    acc(*gamma, (g * &xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                if rg(*beta) {
                    acc(*beta, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                if rg(*x) {
                    let gx_hat = g * val(*gamma);
                    let c = S::from_usize(xhat.ncols()).unwrap();
                    let mut d = Array2::zeros(g.raw_dim());
                    for i in 0..xhat.nrows() {
                        let gr = gx_hat.row(i);
                        let xr = xhat.row(i);
                        let m1 = gr.sum() / c;
                        let m2 = gr.dot(&xr) / c;
                        let is = inv_std[i];
                        for j in 0..xhat.ncols() {
                            d[[i, j]] = is * (gr[j] - m1 - xr[j] * m2);
                        }
                    }
                    acc(*x, d);
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = val(p).ncols();
                    if rg(p) {
                        acc(p, g.slice(s![.., off..off + w]).to_owned());
                    }
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let h = val(p).nrows();
                    if rg(p) {
                        acc(p, g.slice(s![off..off + h, ..]).to_owned());
                    }
                    off += h;
                }
            }
            Op::SliceCols(a, start) => {
                let mut d = Array2::zeros(val(*a).raw_dim());
                d.slice_mut(s![.., *start..*start + g.ncols()]).assign(g);
                acc(*a, d);
            }
            Op::SliceRows(a, start) => {
                let mut d = Array2::zeros(val(*a).raw_dim());
                d.slice_mut(s![*start..*start + g.nrows(), ..]).assign(g);
                acc(*a, d);
            }
            Op::RowCosine(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let mut da = Array2::zeros(va.raw_dim());
                let mut db = Array2::zeros(vb.raw_dim());
                for i in 0..va.nrows() {
                    let (ra, rb) = (va.row(i), vb.row(i));
                    let na2 = ra.dot(&ra);
                    let nb2 = rb.dot(&rb);
                    if na2 == S::zero() || nb2 == S::zero() {
                        continue;
                    }
                    let (na, nb) = (na2.sqrt(), nb2.sqrt());
                    let c = ra.dot(&rb) / (na * nb);
                    let gi = g[[i, 0]];
                    for j in 0..va.ncols() {
                        da[[i, j]] = gi * (rb[j] / (na * nb) - c * ra[j] / na2);
                        db[[i, j]] = gi * (ra[j] / (na * nb) - c * rb[j] / nb2);
                    }
                }
                acc(*a, da);
                acc(*b, db);
            }
            Op::BoxFilter(a, kh, kw) => {
                acc(*a, box_mean_transpose(g, val(*a).dim(), *kh, *kw));
            }
            Op::MinAll(a) => {
                let (pos, _) = arg_extreme(val(*a), |x, y| x < y);
                let mut d = Array2::zeros(val(*a).raw_dim());
                d[pos] = g[[0, 0]];
                acc(*a, d);
            }
            Op::MaxAll(a) => {
                let (pos, _) = arg_extreme(val(*a), |x, y| x > y);
                let mut d = Array2::zeros(val(*a).raw_dim());
                d[pos] = g[[0, 0]];
                acc(*a, d);
            }
        }
    }
}

/// Gradients from one backward sweep, indexed by [`Var`].
pub struct Gradients<S> {
    grads: Vec<Option<Array2<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, v: Var) -> Option<&Array2<S>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `like` when nothing reached it.
    pub fn get_or_zeros(&self, v: Var, like: (usize, usize)) -> Array2<S> {
        self.get(v).cloned().unwrap_or_else(|| Array2::zeros(like))
    }
}

pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

fn normalize_rows<S: Scalar>(x: &Array2<S>, eps: S) -> (Array2<S>, Vec<S>) {
    let c = S::from_usize(x.ncols()).unwrap();
    let mut out = x.clone();
    let mut inv = Vec::with_capacity(x.nrows());
    for mut row in out.rows_mut() {
        let mean = row.sum() / c;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / c;
        let is = S::one() / (var + eps).sqrt();
        row.mapv_inplace(|v| (v - mean) * is);
        inv.push(is);
    }
    (out, inv)
}

fn arg_extreme<S: Scalar>(x: &Array2<S>, better: impl Fn(S, S) -> bool) -> ((usize, usize), S) {
    let mut best = ((0, 0), x[[0, 0]]);
    for ((i, j), &v) in x.indexed_iter() {
        if better(v, best.1) {
            best = ((i, j), v);
        }
    }
    best
}

/// Valid mean filter, separable: sliding sums down rows then across columns.
fn box_mean<S: Scalar>(x: &Array2<S>, kh: usize, kw: usize) -> Array2<S> {
    let (r, c) = x.dim();
    let (ro, co) = (r + 1 - kh, c + 1 - kw);
    let mut tmp = Array2::<S>::zeros((ro, c));
    for i in 0..ro {
        for p in 0..kh {
            let src = x.row(i + p);
            let mut dst = tmp.row_mut(i);
            dst += &src;
        }
    }
    let norm = S::one() / S::from_usize(kh * kw).unwrap();
    let mut out = Array2::<S>::zeros((ro, co));
    for i in 0..ro {
        for j in 0..co {
            let mut acc = S::zero();
            for q in 0..kw {
                acc = acc + tmp[[i, j + q]];
            }
            out[[i, j]] = acc * norm;
        }
    }
    out
}

fn box_mean_transpose<S: Scalar>(
    g: &Array2<S>,
    (r, c): (usize, usize),
    kh: usize,
    kw: usize,
) -> Array2<S> {
    let (ro, co) = g.dim();
    let norm = S::one() / S::from_usize(kh * kw).unwrap();
    let mut tmp = Array2::<S>::zeros((ro, c));
    for i in 0..ro {
        for j in 0..co {
            let v = g[[i, j]] * norm;
            for q in 0..kw {
                tmp[[i, j + q]] = tmp[[i, j + q]] + v;
            }
        }
    }
    let mut out = Array2::<S>::zeros((r, c));
    for i in 0..ro {
        for p in 0..kh {
            let src = tmp.row(i);
            let mut dst = out.row_mut(i + p);
            dst += &src;
        }
    }
    out
}
