//! Training objectives.
//!
//! ```text
//! L_rec      = μ·mean((X − X̂)²) + ν·mean((T − T̂)²) + (1 − SSIM(X, X̂))
//! L_sparsity = | mean(S) − λ |
//! L_total    = L_rec + L_sparsity
//! d_loss     = −log p_real − log(1 − p_fake)
//! g_loss     = −log p_fake
//! ```
//!
//! Every loss has a graph form (for training) and a plain form that builds a
//! throwaway graph, so both share one implementation.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{invalid, shape, Result};
use crate::scalar::Scalar;
use crate::selector::ScoreSequence;

pub const SSIM_WINDOW: usize = 8;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
pub const PROB_EPS: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    /// Visual reconstruction weight.
    pub mu: f64,
    /// Semantic reconstruction weight.
    pub nu: f64,
    /// Target mean score.
    pub lambda_s: f64,
    /// Generator adversarial weight.
    pub g_adv: f64,
    /// Include the `1 − SSIM` term.
    pub use_ssim: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            mu: 1.0,
            nu: 1.0,
            lambda_s: 0.15,
            g_adv: 1.0,
            use_ssim: true,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mu", self.mu), ("nu", self.nu), ("g_adv", self.g_adv)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.lambda_s) {
            return Err(invalid(format!("lambda_s must lie in [0, 1], got {}", self.lambda_s)));
        }
        Ok(())
    }
}

pub fn mse_node<S: Scalar>(g: &mut Graph<S>, a: Var, b: Var) -> Var {
    let d = g.sub(a, b);
    let sq = g.square(d);
    g.mean(sq)
}

/// Mean local SSIM of two equally shaped matrices treated as images.
///
/// Both are jointly min-max normalized to `[0, 1]`; windows are uniform,
/// `8×8` clipped to the matrix, stride 1, no padding.
pub fn ssim_node<S: Scalar>(g: &mut Graph<S>, a: Var, b: Var) -> Var {
    let (r, c) = g.shape(a);
    let both = g.concat_rows(&[a, b]);
    let lo = g.min_all(both);
    let hi = g.max_all(both);
    let lo_b = g.broadcast(lo, r, c);
    let mut x = g.sub(a, lo_b);
    let mut y = g.sub(b, lo_b);
    let range = g.sub(hi, lo);
    if g.scalar(range) > S::zero() {
        let range_b = g.broadcast(range, r, c);
        x = g.div(x, range_b);
        y = g.div(y, range_b);
    }
    let (kh, kw) = (SSIM_WINDOW.min(r), SSIM_WINDOW.min(c));
    let c1 = S::lit(SSIM_C1);
    let c2 = S::lit(SSIM_C2);
    let two = S::lit(2.0);
    let one = S::one();

    let mu_x = g.box_filter(x, kh, kw);
    let mu_y = g.box_filter(y, kh, kw);
    let xx = g.square(x);
    let yy = g.square(y);
    let xy = g.mul(x, y);
    let e_xx = g.box_filter(xx, kh, kw);
    let e_yy = g.box_filter(yy, kh, kw);
    let e_xy = g.box_filter(xy, kh, kw);

    let mu_xy = g.mul(mu_x, mu_y);
    let mu_xx = g.square(mu_x);
    let mu_yy = g.square(mu_y);
    let var_x = g.sub(e_xx, mu_xx);
    let var_y = g.sub(e_yy, mu_yy);
    let cov = g.sub(e_xy, mu_xy);

    let lum_num = g.affine(mu_xy, two, c1);
    let lum_sum = g.add(mu_xx, mu_yy);
    let lum_den = g.affine(lum_sum, one, c1);
    let con_num = g.affine(cov, two, c2);
    let var_sum = g.add(var_x, var_y);
    let con_den = g.affine(var_sum, one, c2);
    let num = g.mul(lum_num, con_num);
    let den = g.mul(lum_den, con_den);
    let map = g.div(num, den);
    g.mean(map)
}

/// Semantic pair `(T, T̂)` is omitted for visual-only models.
pub fn reconstruction_node<S: Scalar>(
    g: &mut Graph<S>,
    x: Var,
    x_hat: Var,
    semantic: Option<(Var, Var)>,
    w: &LossWeights,
) -> Var {
    let vis = mse_node(g, x, x_hat);
    let mut loss = g.scale(vis, S::lit(w.mu));
    if let Some((t, t_hat)) = semantic {
        let sem = mse_node(g, t, t_hat);
        let sem = g.scale(sem, S::lit(w.nu));
        loss = g.add(loss, sem);
    }
    if w.use_ssim {
        let s = ssim_node(g, x, x_hat);
        let dissim = g.affine(s, -S::one(), S::one());
        loss = g.add(loss, dissim);
    }
    loss
}

/// `|mean(S) − λ|` for a `T×1` score node.
pub fn sparsity_node<S: Scalar>(g: &mut Graph<S>, scores: Var, lambda: f64) -> Var {
    let m = g.mean(scores);
    let d = g.affine(m, S::one(), S::lit(-lambda));
    g.abs(d)
}

pub struct AdversarialNodes {
    pub d_loss: Var,
    pub g_loss: Var,
}

pub fn adversarial_nodes<S: Scalar>(g: &mut Graph<S>, p_real: Var, p_fake: Var) -> AdversarialNodes {
    let (lo, hi) = (S::lit(PROB_EPS), S::one() - S::lit(PROB_EPS));
    let real = g.clamp(p_real, lo, hi);
    let fake = g.clamp(p_fake, lo, hi);
    let log_real = g.log(real);
    let not_fake = g.affine(fake, -S::one(), S::one());
    let log_not_fake = g.log(not_fake);
    let sum = g.add(log_real, log_not_fake);
    let d_loss = g.scale(sum, -S::one());
    let log_fake = g.log(fake);
    let g_loss = g.scale(log_fake, -S::one());
    AdversarialNodes { d_loss, g_loss }
}

fn same_shape<S>(a: &Array2<S>, b: &Array2<S>, what: &str) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(shape(format!("{what}: {:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

pub fn ssim<S: Scalar>(a: &Array2<S>, b: &Array2<S>) -> Result<S> {
    same_shape(a, b, "ssim")?;
    if a.is_empty() {
        return Err(shape("ssim of an empty matrix"));
    }
    let mut g = Graph::new();
    let (va, vb) = (g.constant(a.clone()), g.constant(b.clone()));
    let s = ssim_node(&mut g, va, vb);
    Ok(g.scalar(s))
}

pub fn reconstruction_loss<S: Scalar>(
    x: &Array2<S>,
    x_hat: &Array2<S>,
    t: &Array2<S>,
    t_hat: &Array2<S>,
    w: &LossWeights,
) -> Result<S> {
    same_shape(x, x_hat, "visual reconstruction")?;
    same_shape(t, t_hat, "semantic reconstruction")?;
    if x.is_empty() {
        return Err(shape("reconstruction of an empty matrix"));
    }
    let mut g = Graph::new();
    let vars = [x, x_hat, t, t_hat].map(|m| g.constant(m.clone()));
    let l = reconstruction_node(&mut g, vars[0], vars[1], Some((vars[2], vars[3])), w);
    Ok(g.scalar(l))
}

pub fn sparsity_loss<S: Scalar>(scores: &ScoreSequence<S>, w: &LossWeights) -> Result<S> {
    if scores.is_empty() {
        return Err(invalid("sparsity loss of an empty score sequence"));
    }
    let mut g = Graph::new();
    let col = Array2::from_shape_vec((scores.len(), 1), scores.scores.clone()).expect("column");
    let s = g.constant(col);
    let l = sparsity_node(&mut g, s, w.lambda_s);
    Ok(g.scalar(l))
}

pub fn total_loss<S: Scalar>(rec: S, sparse: S) -> S {
    rec + sparse
}

/// `(d_loss, g_loss)` with both probabilities clamped to `[ε, 1−ε]`.
pub fn adversarial_losses<S: Scalar>(p_real: S, p_fake: S) -> (S, S) {
    let mut g = Graph::new();
    let r = g.scalar_constant(p_real);
    let f = g.scalar_constant(p_fake);
    let n = adversarial_nodes(&mut g, r, f);
    (g.scalar(n.d_loss), g.scalar(n.g_loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selector::ScoreMode;
    use ndarray::array;

    fn checkerboard(r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |(i, j)| ((i + j) % 2) as f64)
    }

    #[test]
    fn perfect_reconstruction_costs_nothing() {
        let x = array![[0.1, 0.5, -0.3], [0.7, 0.2, 0.9]];
        let t = array![[1.0, 2.0], [3.0, 4.0]];
        let l = reconstruction_loss(&x, &x, &t, &t, &LossWeights::default()).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn visual_mse_only() {
        let w = LossWeights { mu: 1.0, nu: 0.0, use_ssim: false, ..LossWeights::default() };
        let l = reconstruction_loss(&array![[0.0]], &array![[2.0]], &array![[0.0]], &array![[5.0]], &w).unwrap();
        assert_eq!(l, 4.0);
        assert!(reconstruction_loss(&array![[0.0]], &array![[2.0, 1.0]], &array![[0.0]], &array![[5.0]], &w).is_err());
    }

    #[test]
    fn ssim_identity_symmetry_and_checkerboard() {
        let a = array![[0.3, 0.9, 0.1], [0.5, 0.5, 0.2]];
        let b = array![[0.1, 0.4, 0.6], [0.9, 0.3, 0.2]];
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        let cb = checkerboard(4, 6);
        let inv = cb.mapv(|v| 1.0 - v);
        // frozen from an independent numpy loop implementation
        let expected = -0.9964064683569573;
        assert!((ssim(&cb, &inv).unwrap() - expected).abs() < 1e-12);
        let constant = Array2::from_elem((3, 3), 2.5);
        assert_eq!(ssim(&constant, &constant).unwrap(), 1.0);
        assert!(ssim(&a, &array![[1.0]]).is_err());
    }

    #[test]
    fn sparsity_cases() {
        let w = LossWeights::default();
        let at_target = ScoreSequence::new(vec![0.15f64; 4], ScoreMode::Fused).unwrap();
        assert!(sparsity_loss(&at_target, &w).unwrap().abs() < 1e-15);
        let s = ScoreSequence::new(vec![1.0f64, 0.0], ScoreMode::Fused).unwrap();
        assert!((sparsity_loss(&s, &w).unwrap() - 0.35).abs() < 1e-12);
        let rev = ScoreSequence::new(vec![0.0, 1.0], ScoreMode::Fused).unwrap();
        assert_eq!(sparsity_loss(&s, &w).unwrap(), sparsity_loss(&rev, &w).unwrap());
        let empty = ScoreSequence::<f64>::new(vec![], ScoreMode::Fused).unwrap();
        assert!(sparsity_loss(&empty, &w).is_err());
    }

    #[test]
    fn total_is_sum() {
        assert_eq!(total_loss(0.0, 0.0), 0.0);
        assert!((total_loss(1.5, 0.35) - 1.85f64).abs() < 1e-15);
    }

    #[test]
    fn adversarial_values() {
        let (d, gl) = adversarial_losses(0.5f64, 0.5);
        assert!((d - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((gl - 2f64.ln()).abs() < 1e-12);
        let (d, _) = adversarial_losses(1.0f64, 0.0);
        assert!(d > 0.0 && d < 1e-6);
        let (d, gl) = adversarial_losses(0.0f64, 1.0);
        assert!(d.is_finite() && gl.is_finite());
        let mut prev = f64::INFINITY;
        for k in 1..100 {
            let (_, gl) = adversarial_losses(0.5, k as f64 / 100.0);
            assert!(gl < prev);
            prev = gl;
        }
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::default().validate().is_ok());
        assert!(LossWeights { mu: -1.0, ..Default::default() }.validate().is_err());
        assert!(LossWeights { lambda_s: 1.5, ..Default::default() }.validate().is_err());
    }
}
