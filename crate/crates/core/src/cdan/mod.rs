//! Cross-dimension attention net.
//!
//! One level maps a sequence vector `x` (length 17 for the action subspace,
//! 24 for the isolation subspace) and expression coefficients `beta` (64) to
//! new coefficients:
//!
//! ```text
//! J    = x beta^T                      (L x 64 outer product)
//! J*   = J Wc^T + bc                   (row-wise linear)
//! A    = softmax(J* Wq^T (J* Wk^T)^T / 8)
//! att  = mean_rows(A (J* Wv^T))        (64)
//! fc   = relu(Wf [x; beta] + bf)       (64)
//! out  = W2 relu(W1 [att; fc] + b1) + b2
//! ```
//!
//! Two levels run in series: the level-2 net consumes the isolation vector
//! and the level-1 prediction.

mod grad;
mod io;
mod train;

pub use grad::{
    compare_gradients, grad_check, grad_check_scoped, GradCheckReport, GradScope, DEFAULT_EPSILON, GRAD_TOL,
    MIN_CHECKED,
};
pub use io::{load_params, save_params, ParamsError, PARAMS_FORMAT, PARAMS_SCHEMA_VERSION};
pub use train::{linear_toy_dataset, mse, train_toy, EpochLoss, Stage, TrainConfig, TrainReport};

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::au::AU_COUNT;
use crate::les::{ActVector, IsoVector, ISO_DIM};

/// Expression coefficient count.
pub const D_MODEL: usize = 64;
/// Width of the fusion MLP's hidden layer.
pub const HIDDEN: usize = 128;
pub const LEVEL1_LEN: usize = AU_COUNT;
pub const LEVEL2_LEN: usize = ISO_DIM;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CdanError {
    #[error("{what}: expected length {expected}, got {got}")]
    BadLength {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite activation in {0}")]
    NonFiniteActivation(&'static str),
    #[error("training diverged at epoch {epoch} ({stage:?})")]
    Diverged { stage: Stage, epoch: usize },
    #[error("bad training configuration: {0}")]
    BadConfig(String),
}

/// 3DMM expression coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ExprCoeff(Vec<f64>);

impl ExprCoeff {
    pub fn new(values: Vec<f64>) -> Result<Self, CdanError> {
        if values.len() != D_MODEL {
            return Err(CdanError::BadLength {
                what: "expression coefficients",
                expected: D_MODEL,
                got: values.len(),
            });
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(CdanError::NonFiniteActivation("expression coefficients"));
        }
        Ok(Self(values))
    }

    pub fn zeros() -> Self {
        Self(vec![0.0; D_MODEL])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ExprCoeff {
    type Error = CdanError;
    fn try_from(v: Vec<f64>) -> Result<Self, CdanError> {
        Self::new(v)
    }
}

impl From<ExprCoeff> for Vec<f64> {
    fn from(c: ExprCoeff) -> Vec<f64> {
        c.0
    }
}

/// Weights of one CDAN level. Matrices are stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct CdanLevel {
    pub seq_len: usize,
    pub combine_w: Array2<f64>,
    pub combine_b: Array1<f64>,
    pub attn_q: Array2<f64>,
    pub attn_k: Array2<f64>,
    pub attn_v: Array2<f64>,
    pub fc_w: Array2<f64>,
    pub fc_b: Array1<f64>,
    pub mlp1_w: Array2<f64>,
    pub mlp1_b: Array1<f64>,
    pub mlp2_w: Array2<f64>,
    pub mlp2_b: Array1<f64>,
}

/// Tensor names in storage order.
pub const TENSOR_NAMES: [&str; 11] = [
    "combine_w",
    "combine_b",
    "attn_q",
    "attn_k",
    "attn_v",
    "fc_w",
    "fc_b",
    "mlp1_w",
    "mlp1_b",
    "mlp2_w",
    "mlp2_b",
];

impl CdanLevel {
    pub fn zeros(seq_len: usize) -> Self {
        let m = |r, c| Array2::zeros((r, c));
        let b = |n| Array1::zeros(n);
        Self {
            seq_len,
            combine_w: m(D_MODEL, D_MODEL),
            combine_b: b(D_MODEL),
            attn_q: m(D_MODEL, D_MODEL),
            attn_k: m(D_MODEL, D_MODEL),
            attn_v: m(D_MODEL, D_MODEL),
            fc_w: m(D_MODEL, seq_len + D_MODEL),
            fc_b: b(D_MODEL),
            mlp1_w: m(HIDDEN, 2 * D_MODEL),
            mlp1_b: b(HIDDEN),
            mlp2_w: m(D_MODEL, HIDDEN),
            mlp2_b: b(D_MODEL),
        }
    }

    /// Xavier-uniform weights, zero biases.
    pub fn xavier(seq_len: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut level = Self::zeros(seq_len);
        for w in [
            &mut level.combine_w,
            &mut level.attn_q,
            &mut level.attn_k,
            &mut level.attn_v,
            &mut level.fc_w,
            &mut level.mlp1_w,
            &mut level.mlp2_w,
        ] {
            let (fan_out, fan_in) = w.dim();
            let bound = xavier_bound(fan_in, fan_out);
            w.mapv_inplace(|_| rng.random_range(-bound..=bound));
        }
        level
    }

    /// Expected shape of each tensor, in [`TENSOR_NAMES`] order.
    pub fn expected_shapes(seq_len: usize) -> Vec<Vec<usize>> {
        Self::zeros(seq_len)
            .tensors()
            .into_iter()
            .map(|(_, shape, _)| shape)
            .collect()
    }

    /// `(name, shape, flat data)` for every tensor.
    pub fn tensors(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        fn m(a: &Array2<f64>) -> (Vec<usize>, &[f64]) {
            (a.shape().to_vec(), a.as_slice().expect("standard layout"))
        }
        fn v(a: &Array1<f64>) -> (Vec<usize>, &[f64]) {
            (a.shape().to_vec(), a.as_slice().expect("standard layout"))
        }
        let parts = [
            m(&self.combine_w),
            v(&self.combine_b),
            m(&self.attn_q),
            m(&self.attn_k),
            m(&self.attn_v),
            m(&self.fc_w),
            v(&self.fc_b),
            m(&self.mlp1_w),
            v(&self.mlp1_b),
            m(&self.mlp2_w),
            v(&self.mlp2_b),
        ];
        TENSOR_NAMES
            .iter()
            .zip(parts)
            .map(|(&n, (shape, data))| (n, shape, data))
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let parts: [&mut [f64]; 11] = [
            self.combine_w.as_slice_mut().unwrap(),
            self.combine_b.as_slice_mut().unwrap(),
            self.attn_q.as_slice_mut().unwrap(),
            self.attn_k.as_slice_mut().unwrap(),
            self.attn_v.as_slice_mut().unwrap(),
            self.fc_w.as_slice_mut().unwrap(),
            self.fc_b.as_slice_mut().unwrap(),
            self.mlp1_w.as_slice_mut().unwrap(),
            self.mlp1_b.as_slice_mut().unwrap(),
            self.mlp2_w.as_slice_mut().unwrap(),
            self.mlp2_b.as_slice_mut().unwrap(),
        ];
        TENSOR_NAMES.iter().copied().zip(parts).collect()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, _, d)| d.len()).sum()
    }

    fn check_inputs(&self, x: &[f64], beta: &[f64]) -> Result<(), CdanError> {
        if x.len() != self.seq_len {
            return Err(CdanError::BadLength {
                what: "sequence input",
                expected: self.seq_len,
                got: x.len(),
            });
        }
        if beta.len() != D_MODEL {
            return Err(CdanError::BadLength {
                what: "expression coefficients",
                expected: D_MODEL,
                got: beta.len(),
            });
        }
        Ok(())
    }

    /// Combined joint coefficient matrix `J*` (L x 64).
    pub fn combine_joint(&self, x: &[f64], beta: &[f64]) -> Result<Array2<f64>, CdanError> {
        self.check_inputs(x, beta)?;
        let x = ArrayView1::from(x);
        let beta = ArrayView1::from(beta);
        Ok(joint(&self.combine_w, &self.combine_b, x, beta))
    }

    pub fn forward(&self, x: &[f64], beta: &[f64]) -> Result<Array1<f64>, CdanError> {
        let cache = self.forward_cached(x, beta)?;
        Ok(cache.out)
    }

    pub(crate) fn forward_cached(&self, x: &[f64], beta: &[f64]) -> Result<LevelCache, CdanError> {
        self.check_inputs(x, beta)?;
        let x = Array1::from(x.to_vec());
        let beta = Array1::from(beta.to_vec());
        let l = self.seq_len;

        // each row of J Wc^T is x_r * (Wc beta)
        let proj = self.combine_w.dot(&beta);
        let js = joint_from_proj(&proj, &self.combine_b, x.view());
        let q = js.dot(&self.attn_q.t());
        let k = js.dot(&self.attn_k.t());
        let v = js.dot(&self.attn_v.t());
        let scale = 1.0 / (D_MODEL as f64).sqrt();
        let mut attn = q.dot(&k.t()) * scale;
        softmax_rows(&mut attn);
        let ctx = attn.dot(&v);
        let att = ctx.mean_axis(Axis(0)).expect("non-empty sequence");

        let mut z = Array1::zeros(l + D_MODEL);
        z.slice_mut(s![..l]).assign(&x);
        z.slice_mut(s![l..]).assign(&beta);
        let pf = self.fc_w.dot(&z) + &self.fc_b;
        let f = pf.mapv(relu);

        let mut h_in = Array1::zeros(2 * D_MODEL);
        h_in.slice_mut(s![..D_MODEL]).assign(&att);
        h_in.slice_mut(s![D_MODEL..]).assign(&f);
        let ph = self.mlp1_w.dot(&h_in) + &self.mlp1_b;
        let h = ph.mapv(relu);
        let out = self.mlp2_w.dot(&h) + &self.mlp2_b;

        if !attn.iter().all(|a| a.is_finite()) {
            return Err(CdanError::NonFiniteActivation("attention"));
        }
        if !out.iter().all(|a| a.is_finite()) {
            return Err(CdanError::NonFiniteActivation("output"));
        }
        Ok(LevelCache {
            x,
            beta,
            proj,
            js,
            q,
            k,
            v,
            attn,
            z,
            pf,
            h_in,
            ph,
            h,
            out,
        })
    }

    /// Gradients of a scalar loss with respect to every weight, given
    /// `g_out = dloss/dout`. Returns `(weight grads, dloss/dx, dloss/dbeta)`.
    pub(crate) fn backward(
        &self,
        c: &LevelCache,
        g_out: &Array1<f64>,
    ) -> (CdanLevel, Array1<f64>, Array1<f64>) {
        let l = self.seq_len;
        let mut g = CdanLevel::zeros(l);

        // fusion MLP
        g.mlp2_w = outer(g_out, &c.h);
        g.mlp2_b = g_out.clone();
        let g_h = self.mlp2_w.t().dot(g_out);
        let g_ph = relu_grad(&c.ph, &g_h);
        g.mlp1_w = outer(&g_ph, &c.h_in);
        g.mlp1_b = g_ph.clone();
        let g_hin = self.mlp1_w.t().dot(&g_ph);
        let g_att = g_hin.slice(s![..D_MODEL]).to_owned();
        let g_f = g_hin.slice(s![D_MODEL..]).to_owned();

        // FC branch
        let g_pf = relu_grad(&c.pf, &g_f);
        g.fc_w = outer(&g_pf, &c.z);
        g.fc_b = g_pf.clone();
        let g_z = self.fc_w.t().dot(&g_pf);
        let mut g_x = g_z.slice(s![..l]).to_owned();
        let mut g_beta = g_z.slice(s![l..]).to_owned();

        // attention branch: mean pooling spreads the gradient evenly over rows
        let g_ctx = Array2::from_shape_fn((l, D_MODEL), |(_, j)| g_att[j] / l as f64);
        let g_attn = g_ctx.dot(&c.v.t());
        let g_v = c.attn.t().dot(&g_ctx);
        let mut g_scores = Array2::zeros((l, l));
        for r in 0..l {
            let row = c.attn.row(r);
            let dot: f64 = row.iter().zip(g_attn.row(r)).map(|(a, b)| a * b).sum();
            for col in 0..l {
                g_scores[(r, col)] = row[col] * (g_attn[(r, col)] - dot);
            }
        }
        let scale = 1.0 / (D_MODEL as f64).sqrt();
        let g_q = g_scores.dot(&c.k) * scale;
        let g_k = g_scores.t().dot(&c.q) * scale;

        g.attn_q = g_q.t().dot(&c.js);
        g.attn_k = g_k.t().dot(&c.js);
        g.attn_v = g_v.t().dot(&c.js);
        let g_js = g_q.dot(&self.attn_q) + g_k.dot(&self.attn_k) + g_v.dot(&self.attn_v);

        // combine: J* = x (Wc beta)^T + bc
        g.combine_b = g_js.sum_axis(Axis(0));
        let g_proj = g_js.t().dot(&c.x);
        g.combine_w = outer(&g_proj, &c.beta);
        g_x = g_x + g_js.dot(&c.proj);
        g_beta = g_beta + self.combine_w.t().dot(&g_proj);

        (g, g_x, g_beta)
    }
}

pub(crate) struct LevelCache {
    x: Array1<f64>,
    beta: Array1<f64>,
    proj: Array1<f64>,
    js: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    pub(crate) attn: Array2<f64>,
    z: Array1<f64>,
    pf: Array1<f64>,
    h_in: Array1<f64>,
    ph: Array1<f64>,
    h: Array1<f64>,
    pub(crate) out: Array1<f64>,
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

fn relu_grad(pre: &Array1<f64>, g: &Array1<f64>) -> Array1<f64> {
    Array1::from_shape_fn(pre.len(), |i| if pre[i] > 0.0 { g[i] } else { 0.0 })
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}

fn joint(w: &Array2<f64>, b: &Array1<f64>, x: ArrayView1<f64>, beta: ArrayView1<f64>) -> Array2<f64> {
    joint_from_proj(&w.dot(&beta), b, x)
}

fn joint_from_proj(proj: &Array1<f64>, b: &Array1<f64>, x: ArrayView1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((x.len(), D_MODEL), |(r, n)| x[r] * proj[n] + b[n])
}

pub(crate) fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|x| x / sum);
    }
}

/// Both CDAN levels.
#[derive(Debug, Clone, PartialEq)]
pub struct CdanParams {
    pub seed: u64,
    pub level1: CdanLevel,
    pub level2: CdanLevel,
}

impl CdanParams {
    pub fn zeros(seed: u64) -> Self {
        Self {
            seed,
            level1: CdanLevel::zeros(LEVEL1_LEN),
            level2: CdanLevel::zeros(LEVEL2_LEN),
        }
    }

    pub fn levels(&self) -> [(&'static str, &CdanLevel); 2] {
        [("level1", &self.level1), ("level2", &self.level2)]
    }

    pub fn levels_mut(&mut self) -> [(&'static str, &mut CdanLevel); 2] {
        [("level1", &mut self.level1), ("level2", &mut self.level2)]
    }

    pub fn param_count(&self) -> usize {
        self.level1.param_count() + self.level2.param_count()
    }

    pub fn is_finite(&self) -> bool {
        self.levels().iter().all(|(_, l)| {
            l.tensors()
                .iter()
                .all(|(_, _, d)| d.iter().all(|x| x.is_finite()))
        })
    }
}

/// Xavier-uniform initialization, deterministic in `seed`.
pub fn init_params(seed: u64) -> CdanParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let level1 = CdanLevel::xavier(LEVEL1_LEN, &mut rng);
    let level2 = CdanLevel::xavier(LEVEL2_LEN, &mut rng);
    CdanParams { seed, level1, level2 }
}

fn to_coeff(a: Array1<f64>) -> ExprCoeff {
    ExprCoeff(a.to_vec())
}

/// beta' from the action-subspace vector and the reference coefficients.
pub fn forward_level1(u: &ActVector, beta: &ExprCoeff, params: &CdanParams) -> Result<ExprCoeff, CdanError> {
    params.level1.forward(u.as_slice(), beta.as_slice()).map(to_coeff)
}

/// beta'' from the isolation vector and the level-1 prediction.
pub fn forward_level2(
    v: &IsoVector,
    beta_prime: &ExprCoeff,
    params: &CdanParams,
) -> Result<ExprCoeff, CdanError> {
    params
        .level2
        .forward(v.as_slice(), beta_prime.as_slice())
        .map(to_coeff)
}

/// Serial two-level inference: returns `(beta', beta'')`.
pub fn infer(
    u: &ActVector,
    v: &IsoVector,
    beta: &ExprCoeff,
    params: &CdanParams,
) -> Result<(ExprCoeff, ExprCoeff), CdanError> {
    let beta_prime = forward_level1(u, beta, params)?;
    let beta_second = forward_level2(v, &beta_prime, params)?;
    Ok((beta_prime, beta_second))
}

/// One training / evaluation example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub u: ActVector,
    pub v: IsoVector,
    pub beta: ExprCoeff,
    pub target: ExprCoeff,
}

/// Attention weights of a level for the given inputs (rows sum to one).
pub fn attention_weights(level: &CdanLevel, x: &[f64], beta: &[f64]) -> Result<Array2<f64>, CdanError> {
    Ok(level.forward_cached(x, beta)?.attn)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_inputs(seed: u64, len: usize) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = (0..len).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b = (0..D_MODEL).map(|_| rng.random_range(-1.0..1.0)).collect();
        (x, b)
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_params(42);
        assert_eq!(a, init_params(42));
        assert_ne!(a, init_params(43));
        for (_, level) in a.levels() {
            for (name, shape, data) in level.tensors() {
                if shape.len() == 1 {
                    assert!(data.iter().all(|&x| x == 0.0), "{name}");
                } else {
                    let bound = xavier_bound(shape[1], shape[0]);
                    assert!(data.iter().all(|x| x.abs() <= bound), "{name}");
                    assert!(data.iter().any(|&x| x != 0.0));
                }
            }
        }
    }

    #[test]
    fn outer_product_with_identity_combine() {
        let mut level = CdanLevel::zeros(LEVEL1_LEN);
        level.combine_w = Array2::eye(D_MODEL);
        let mut x = vec![0.0; LEVEL1_LEN];
        x[4] = 1.0;
        let mut b = vec![0.0; D_MODEL];
        b[10] = 1.0;
        let j = level.combine_joint(&x, &b).unwrap();
        for ((r, c), &val) in j.indexed_iter() {
            assert_eq!(val, if (r, c) == (4, 10) { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn zero_x_leaves_bias_rows() {
        let mut level = init_params(1).level1;
        level.combine_b = Array1::from_shape_fn(D_MODEL, |i| i as f64);
        let (_, b) = random_inputs(3, LEVEL1_LEN);
        let j = level.combine_joint(&[0.0; LEVEL1_LEN], &b).unwrap();
        for row in j.rows() {
            assert_eq!(row, level.combine_b);
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn combine_matches_naive_double_loop() {
        let level = init_params(5).level2;
        let (x, b) = random_inputs(9, LEVEL2_LEN);
        let got = level.combine_joint(&x, &b).unwrap();
        for r in 0..LEVEL2_LEN {
            for n in 0..D_MODEL {
                let mut acc = level.combine_b[n];
                for m in 0..D_MODEL {
                    acc += x[r] * b[m] * level.combine_w[(n, m)];
                }
                assert!((got[(r, n)] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dead_network_returns_bias() {
        let mut p = CdanParams::zeros(0);
        p.level1.mlp2_b = Array1::from_shape_fn(D_MODEL, |i| 0.5 - i as f64 * 0.01);
        for seed in 0..3 {
            let (x, b) = random_inputs(seed, LEVEL1_LEN);
            let out = p.level1.forward(&x, &b).unwrap();
            assert_eq!(out, p.level1.mlp2_b);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = init_params(8);
        for seed in 0..10 {
            let (x, b) = random_inputs(seed, LEVEL1_LEN);
            let a = attention_weights(&p.level1, &x, &b).unwrap();
            for row in a.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|&w| w >= 0.0));
            }
        }
    }

    #[test]
    fn level2_zero_v_depends_on_fc_only() {
        // biases are zero at init; with v = 0 the joint matrix and the
        // attention branch vanish, so only the FC branch sees beta'
        let p = init_params(12);
        let (_, b) = random_inputs(2, LEVEL2_LEN);
        let zero_v = vec![0.0; LEVEL2_LEN];
        let cache = p.level2.forward_cached(&zero_v, &b).unwrap();
        assert!(cache.js.iter().all(|&x| x == 0.0));
        let l = &p.level2;
        let mut z = vec![0.0; LEVEL2_LEN];
        z.extend_from_slice(&b);
        let f = (l.fc_w.dot(&Array1::from(z)) + &l.fc_b).mapv(relu);
        let mut h_in = Array1::zeros(2 * D_MODEL);
        h_in.slice_mut(s![D_MODEL..]).assign(&f);
        let want = l.mlp2_w.dot(&(l.mlp1_w.dot(&h_in) + &l.mlp1_b).mapv(relu)) + &l.mlp2_b;
        for (a, b) in cache.out.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_contract() {
        let p = init_params(0);
        let b = vec![0.1; D_MODEL];
        assert_eq!(p.level1.forward(&[0.3; 17], &b).unwrap().len(), D_MODEL);
        assert_eq!(p.level2.forward(&[0.3; 24], &b).unwrap().len(), D_MODEL);
        for bad in [16, 18, 24] {
            assert!(matches!(
                p.level1.forward(&vec![0.0; bad], &b),
                Err(CdanError::BadLength { expected: 17, .. })
            ));
        }
        assert!(p.level2.forward(&[0.0; 17], &b).is_err());
        assert!(p.level1.forward(&[0.0; 17], &[0.0; 63]).is_err());
        assert!(ExprCoeff::new(vec![0.0; 65]).is_err());
    }

    #[test]
    fn forward_is_repeatable() {
        let p = init_params(4);
        let (x, b) = random_inputs(6, LEVEL1_LEN);
        let a = p.level1.forward(&x, &b).unwrap();
        let c = p.level1.forward(&x, &b).unwrap();
        assert_eq!(a, c);
    }
}
