//! Smoothed-ReLU networks with a fixed summing head.
//!
//! An [`Encoder`] holds `K * m` neurons for one modality; neuron `(j, l)`
//! lives in row `j * m + l`. The head adds the `m` activations of class `j`
//! into logit `j` with unit, non-trainable weights. The late-fusion network
//! sums the two encoders' logits; the uni-modal network uses one encoder.

mod checkpoint;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, NetworkWeights, WEIGHTS_FORMAT_VERSION};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::Modality;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActParams {
    pub q: u32,
    pub beta: f64,
}

impl Default for ActParams {
    fn default() -> Self {
        ActParams { q: 3, beta: 0.1 }
    }
}

impl ActParams {
    pub fn validate(&self) -> Result<()> {
        if self.q < 3 {
            return Err(config_err(format!("q must be >= 3, got {}", self.q)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(config_err(format!("beta must be positive, got {}", self.beta)));
        }
        Ok(())
    }
}

/// Zero below 0, `x^q / (q beta^(q-1))` on `[0, beta]`, `x - beta (1 - 1/q)`
/// above `beta`.
#[inline]
pub fn smooth_relu(x: f64, p: &ActParams) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x <= p.beta {
        // (x/beta)^q * beta/q makes sigma(beta) = beta/q bit-exactly
        (x / p.beta).powi(p.q as i32) * (p.beta / p.q as f64)
    } else {
        x - p.beta * (1.0 - 1.0 / p.q as f64)
    }
}

#[inline]
pub fn smooth_relu_deriv(x: f64, p: &ActParams) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x <= p.beta {
        (x / p.beta).powi(p.q as i32 - 1)
    } else {
        1.0
    }
}

/// One modality's encoder: `K * m` neurons of dimension `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    k: usize,
    m: usize,
    w: Array2<f64>,
}

impl Encoder {
    pub fn zeros(k: usize, m: usize, d: usize) -> Self {
        Encoder {
            k,
            m,
            w: Array2::zeros((k * m, d)),
        }
    }

    pub fn from_array(k: usize, m: usize, w: Array2<f64>) -> Result<Self> {
        if w.nrows() != k * m {
            return Err(Error::Shape(format!(
                "encoder needs {} rows for K={k}, m={m}, got {}",
                k * m,
                w.nrows()
            )));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("encoder weights must be finite".into()));
        }
        Ok(Encoder { k, m, w })
    }

    /// Every entry i.i.d. `N(0, sigma0^2)`; `sigma0 = 0` gives zeros.
    pub fn gaussian<R: Rng + ?Sized>(k: usize, m: usize, d: usize, sigma0: f64, rng: &mut R) -> Result<Self> {
        let normal = Normal::new(0.0, sigma0).map_err(|e| config_err(format!("sigma0: {e}")))?;
        let w = Array2::from_shape_simple_fn((k * m, d), || normal.sample(rng));
        Ok(Encoder { k, m, w })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.w.ncols()
    }

    pub fn neuron(&self, j: usize, l: usize) -> ArrayView1<'_, f64> {
        self.w.row(j * self.m + l)
    }

    pub fn neuron_mut(&mut self, j: usize, l: usize) -> ArrayViewMut1<'_, f64> {
        self.w.row_mut(j * self.m + l)
    }

    /// All neurons, one per row.
    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.w.view()
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut Array2<f64> {
        &mut self.w
    }

    /// `n x (K m)` pre-activations for a batch of inputs (rows).
    pub fn preactivations(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.d() {
            return Err(Error::Shape(format!(
                "input dimension {} does not match encoder dimension {}",
                x.ncols(),
                self.d()
            )));
        }
        Ok(x.dot(&self.w.t()))
    }

    /// `n x K` logits for a batch of inputs.
    pub fn batch_logits(&self, x: ArrayView2<'_, f64>, p: &ActParams) -> Result<Array2<f64>> {
        let pre = self.preactivations(x)?;
        Ok(pool_classes(&pre.mapv(|v| smooth_relu(v, p)), self.k, self.m))
    }

    pub fn logits(&self, x: ArrayView1<'_, f64>, p: &ActParams) -> Result<Array1<f64>> {
        if x.len() != self.d() {
            return Err(Error::Shape(format!(
                "input dimension {} does not match encoder dimension {}",
                x.len(),
                self.d()
            )));
        }
        let pre = self.w.dot(&x);
        let mut out = Array1::zeros(self.k);
        for (i, v) in pre.iter().enumerate() {
            out[i / self.m] += smooth_relu(*v, p);
        }
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().all(|v| v.is_finite())
    }
}

/// Sums the `m` neuron columns of each class: `(n, K m) -> (n, K)`.
pub(crate) fn pool_classes(act: &Array2<f64>, k: usize, m: usize) -> Array2<f64> {
    let n = act.nrows();
    let mut out = Array2::zeros((n, k));
    for (src, mut dst) in act.rows().into_iter().zip(out.rows_mut()) {
        for (j, o) in dst.iter_mut().enumerate() {
            *o = src.slice(ndarray::s![j * m..(j + 1) * m]).sum();
        }
    }
    out
}

/// Late-fusion weights: one encoder per modality, same `K` and `m`.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    encoders: [Encoder; 2],
}

impl Weights {
    pub fn new(first: Encoder, second: Encoder) -> Result<Self> {
        if first.k != second.k || first.m != second.m {
            return Err(Error::Shape(format!(
                "encoders disagree on (K, m): ({}, {}) vs ({}, {})",
                first.k, first.m, second.k, second.m
            )));
        }
        Ok(Weights {
            encoders: [first, second],
        })
    }

    pub fn zeros(k: usize, m: usize, dims: [usize; 2]) -> Self {
        Weights {
            encoders: [Encoder::zeros(k, m, dims[0]), Encoder::zeros(k, m, dims[1])],
        }
    }

    pub fn k(&self) -> usize {
        self.encoders[0].k
    }

    pub fn m(&self) -> usize {
        self.encoders[0].m
    }

    pub fn dims(&self) -> [usize; 2] {
        [self.encoders[0].d(), self.encoders[1].d()]
    }

    pub fn encoder(&self, r: Modality) -> &Encoder {
        &self.encoders[r.index()]
    }

    pub fn encoder_mut(&mut self, r: Modality) -> &mut Encoder {
        &mut self.encoders[r.index()]
    }

    pub fn encoders(&self) -> &[Encoder; 2] {
        &self.encoders
    }
}

/// Weights of a network trained on a single modality.
#[derive(Clone, Debug, PartialEq)]
pub struct UniWeights {
    pub modality: Modality,
    pub encoder: Encoder,
}

impl UniWeights {
    pub fn new(modality: Modality, encoder: Encoder) -> Self {
        UniWeights { modality, encoder }
    }
}

/// Both encoders drawn from `N(0, sigma0^2 I)`, modality 1 first.
pub fn init_weights<R: Rng + ?Sized>(
    k: usize,
    m: usize,
    dims: [usize; 2],
    sigma0: f64,
    rng: &mut R,
) -> Result<Weights> {
    if !(sigma0 >= 0.0 && sigma0.is_finite()) {
        return Err(config_err(format!("sigma0 must be >= 0, got {sigma0}")));
    }
    let first = Encoder::gaussian(k, m, dims[0], sigma0, rng)?;
    let second = Encoder::gaussian(k, m, dims[1], sigma0, rng)?;
    Weights::new(first, second)
}

pub fn init_uni_weights<R: Rng + ?Sized>(
    modality: Modality,
    k: usize,
    m: usize,
    d: usize,
    sigma0: f64,
    rng: &mut R,
) -> Result<UniWeights> {
    if !(sigma0 >= 0.0 && sigma0.is_finite()) {
        return Err(config_err(format!("sigma0 must be >= 0, got {sigma0}")));
    }
    Ok(UniWeights::new(modality, Encoder::gaussian(k, m, d, sigma0, rng)?))
}

/// `f_j(x) = sum_l sigma(<w_{j,l,1}, x1>) + sigma(<w_{j,l,2}, x2>)`.
pub fn forward_multi(
    w: &Weights,
    x1: ArrayView1<'_, f64>,
    x2: ArrayView1<'_, f64>,
    p: &ActParams,
) -> Result<Array1<f64>> {
    Ok(w.encoders[0].logits(x1, p)? + w.encoders[1].logits(x2, p)?)
}

pub fn forward_uni(v: &UniWeights, x: ArrayView1<'_, f64>, p: &ActParams) -> Result<Array1<f64>> {
    v.encoder.logits(x, p)
}

/// The fixed head applied to one encoder of a jointly trained network.
pub fn probe_forward(w: &Weights, r: Modality, x: ArrayView1<'_, f64>, p: &ActParams) -> Result<Array1<f64>> {
    w.encoder(r).logits(x, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use approx::assert_relative_eq;

    const P: ActParams = ActParams { q: 3, beta: 0.1 };

    #[test]
    fn smooth_relu_pieces() {
        assert_eq!(smooth_relu(-1.0, &P), 0.0);
        assert_relative_eq!(smooth_relu(0.05, &P), 0.05f64.powi(3) / (0.01 * 3.0), max_relative = 1e-14);
        assert_relative_eq!(smooth_relu(0.05, &P), 0.004_166_666_666_666_667, max_relative = 1e-14);
        assert_relative_eq!(smooth_relu(0.2, &P), 0.2 - 0.1 * (2.0 / 3.0), max_relative = 1e-14);
        assert_relative_eq!(smooth_relu(0.2, &P), 0.133_333_333_333_333_33, max_relative = 1e-14);
    }

    #[test]
    fn smooth_relu_deriv_pieces() {
        assert_eq!(smooth_relu_deriv(P.beta, &P), 1.0);
        assert_eq!(smooth_relu_deriv(P.beta + 1e-12, &P), 1.0);
        assert_relative_eq!(smooth_relu_deriv(0.05, &P), 0.25, max_relative = 1e-14);
        assert_eq!(smooth_relu_deriv(-0.3, &P), 0.0);
    }

    #[test]
    fn value_at_beta_is_beta_over_q() {
        for q in 3..8 {
            for beta in [0.1, 0.05, 0.3, 1.0 / 7.0] {
                let p = ActParams { q, beta };
                assert_eq!(smooth_relu(beta, &p), beta / q as f64);
            }
        }
    }

    #[test]
    fn gaussian_init_moments() {
        let sigma0 = 1.0 / 20f64.sqrt();
        let mut rng = substream(3, "init");
        let w = init_weights(20, 6, [64, 64], sigma0, &mut rng).unwrap();
        let entries: Vec<f64> = w.encoders().iter().flat_map(|e| e.matrix().iter().copied().collect::<Vec<_>>()).collect();
        let n = entries.len() as f64;
        let mean = entries.iter().sum::<f64>() / n;
        let var = entries.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() <= 4.0 * sigma0 / n.sqrt(), "mean {mean}");
        assert!((var.sqrt() - sigma0).abs() <= 0.02 * sigma0, "sd {}", var.sqrt());
        let expected_norm = sigma0 * 64f64.sqrt();
        let norm = w.encoder(Modality::First).neuron(0, 0).dot(&w.encoder(Modality::First).neuron(0, 0)).sqrt();
        assert!((norm - expected_norm).abs() < 0.5 * expected_norm);
    }

    #[test]
    fn init_is_seeded_and_zero_scale_is_zero() {
        let a = init_weights(4, 2, [8, 6], 0.3, &mut substream(1, "init")).unwrap();
        let b = init_weights(4, 2, [8, 6], 0.3, &mut substream(1, "init")).unwrap();
        assert_eq!(a, b);
        let z = init_weights(4, 2, [8, 6], 0.0, &mut substream(1, "init")).unwrap();
        assert!(z.encoders().iter().all(|e| e.matrix().iter().all(|v| *v == 0.0)));
        assert!(init_weights(4, 2, [8, 6], -1.0, &mut substream(1, "init")).is_err());
    }

    #[test]
    fn zero_weights_zero_logits() {
        let w = Weights::zeros(5, 3, [7, 9]);
        let x1 = Array1::from_elem(7, 0.7);
        let x2 = Array1::from_elem(9, -0.2);
        assert!(forward_multi(&w, x1.view(), x2.view(), &P).unwrap().iter().all(|v| *v == 0.0));
        let v = UniWeights::new(Modality::First, Encoder::zeros(5, 3, 7));
        assert!(forward_uni(&v, x1.view(), &P).unwrap().iter().all(|v| *v == 0.0));
        assert!(probe_forward(&w, Modality::Second, x2.view(), &P).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_aligned_neuron() {
        let mut rng = substream(5, "dict");
        let dict = crate::data::build_dictionary(16, 4, &mut rng).unwrap();
        let mut w = Weights::zeros(4, 2, [16, 16]);
        let j = 2;
        let col = dict.column(j).to_owned();
        w.encoder_mut(Modality::First).neuron_mut(j, 0).assign(&(&col * (2.0 * P.beta)));
        let zero = Array1::zeros(16);
        let out = forward_multi(&w, col.view(), zero.view(), &P).unwrap();
        for (i, v) in out.iter().enumerate() {
            if i == j {
                assert_relative_eq!(*v, 2.0 * P.beta - P.beta * (1.0 - 1.0 / 3.0), max_relative = 1e-12);
            } else {
                assert_eq!(*v, 0.0);
            }
        }
        let uni = UniWeights::new(Modality::First, w.encoder(Modality::First).clone());
        let inner = w.encoder(Modality::First).neuron(j, 0).dot(&col);
        assert_relative_eq!(forward_uni(&uni, col.view(), &P).unwrap()[j], smooth_relu(inner, &P), max_relative = 1e-15);
    }

    fn loop_oracle(w: &Weights, x: [&Array1<f64>; 2], p: &ActParams, use_mod: [bool; 2]) -> Vec<f64> {
        let mut out = vec![0.0; w.k()];
        for (j, o) in out.iter_mut().enumerate() {
            for l in 0..w.m() {
                for r in 0..2 {
                    if !use_mod[r] {
                        continue;
                    }
                    let nrn = w.encoders()[r].neuron(j, l);
                    let mut dot = 0.0;
                    for i in 0..nrn.len() {
                        dot += nrn[i] * x[r][i];
                    }
                    *o += smooth_relu(dot, p);
                }
            }
        }
        out
    }

    #[test]
    fn batched_and_single_paths_match_loop_oracle() {
        let mut rng = substream(9, "init");
        let w = init_weights(3, 2, [5, 4], 0.8, &mut rng).unwrap();
        let x1: Array1<f64> = Encoder::gaussian(1, 1, 5, 1.0, &mut rng).unwrap().matrix().row(0).to_owned();
        let x2: Array1<f64> = Encoder::gaussian(1, 1, 4, 1.0, &mut rng).unwrap().matrix().row(0).to_owned();
        let got = forward_multi(&w, x1.view(), x2.view(), &P).unwrap();
        let want = loop_oracle(&w, [&x1, &x2], &P, [true, true]);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12);
        }
        let probe = probe_forward(&w, Modality::First, x1.view(), &P).unwrap();
        let want1 = loop_oracle(&w, [&x1, &x2], &P, [true, false]);
        for (a, b) in probe.iter().zip(&want1) {
            assert!((a - b).abs() <= 1e-12);
        }
        let batch = w.encoder(Modality::First).batch_logits(x1.view().insert_axis(ndarray::Axis(0)), &P).unwrap();
        for (a, b) in batch.row(0).iter().zip(&want1) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn uni_equals_multi_with_other_side_zeroed() {
        let mut rng = substream(10, "init");
        let w = init_weights(4, 3, [6, 6], 0.5, &mut rng).unwrap();
        let zeroed = Weights::new(w.encoder(Modality::First).clone(), Encoder::zeros(4, 3, 6)).unwrap();
        let x1 = Array1::linspace(-1.0, 1.0, 6);
        let x2 = Array1::linspace(2.0, -0.5, 6);
        let uni = UniWeights::new(Modality::First, w.encoder(Modality::First).clone());
        let a = forward_uni(&uni, x1.view(), &P).unwrap();
        let b = forward_multi(&zeroed, x1.view(), x2.view(), &P).unwrap();
        for (u, v) in a.iter().zip(b.iter()) {
            assert!((u - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let w = Weights::zeros(3, 2, [5, 4]);
        let bad = Array1::zeros(6);
        let ok = Array1::zeros(4);
        assert!(matches!(forward_multi(&w, bad.view(), ok.view(), &P), Err(Error::Shape(_))));
        assert!(Weights::new(Encoder::zeros(3, 2, 5), Encoder::zeros(3, 1, 5)).is_err());
    }

    #[test]
    fn act_params_validation() {
        assert!(ActParams { q: 2, beta: 0.1 }.validate().is_err());
        assert!(ActParams { q: 3, beta: 0.0 }.validate().is_err());
        assert!(ActParams::default().validate().is_ok());
    }
}
