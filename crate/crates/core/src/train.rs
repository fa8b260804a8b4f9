//! Cross-entropy loss, analytic gradients and full-batch gradient descent.
//!
//! For a sample `(X, y)` the loss gradient with respect to neuron
//! `w_{j,l,r}` is `(l_j(f, X) - 1{j = y}) * sigma'(<w_{j,l,r}, X^r>) * X^r`,
//! where `l_j` is the softmax probability of class `j`. The empirical loss
//! averages over the batch; descent subtracts `eta` times that average.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SparseCodingModel};
use crate::error::{arg_err, config_err, Error, Result};
use crate::net::{pool_classes, smooth_relu, smooth_relu_deriv, ActParams, Encoder, UniWeights, Weights};
use crate::Modality;

/// Loss above which a run is declared divergent.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub eta: f64,
    /// Number of gradient steps.
    pub iterations: usize,
    pub log_every: usize,
    /// Size of the held-out set used for test error.
    pub fresh_test_n: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eta: 0.05,
            iterations: 3000,
            log_every: 10,
            fresh_test_n: 5000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(config_err(format!("eta must be a finite non-negative number, got {}", self.eta)));
        }
        if self.iterations == 0 {
            return Err(config_err("iterations must be >= 1"));
        }
        if self.log_every == 0 {
            return Err(config_err("log_every must be >= 1"));
        }
        if self.fresh_test_n == 0 {
            return Err(config_err("fresh_test_n must be >= 1"));
        }
        Ok(())
    }
}

/// Softmax with max subtraction.
pub fn class_probs(logits: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |a, b| a.max(*b));
    let mut e = logits.mapv(|v| (v - max).exp());
    let s = e.sum();
    e /= s;
    e
}

/// `-log softmax(logits)[y]`, computed as `logsumexp - f_y`.
pub fn ce_loss(logits: ArrayView1<'_, f64>, y: usize) -> f64 {
    let max = logits.fold(f64::NEG_INFINITY, |a, b| a.max(*b));
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    (lse - logits[y]).max(0.0)
}

/// Fraction of rows whose label logit does not strictly beat every other
/// logit. Ties count as errors.
pub fn classification_error(logits: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(arg_err("cannot score an empty dataset"));
    }
    if logits.nrows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} logit rows for {} labels",
            logits.nrows(),
            labels.len()
        )));
    }
    let wrong = logits
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &y)| row.iter().enumerate().any(|(j, v)| j != y && row[y] <= *v))
        .count();
    Ok(wrong as f64 / labels.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub error: f64,
    /// Binomial standard error `sqrt(e (1 - e) / n)`.
    pub std_err: f64,
    pub n: usize,
}

impl ErrorEstimate {
    pub fn from_error(error: f64, n: usize) -> Self {
        ErrorEstimate {
            error,
            std_err: (error * (1.0 - error) / n as f64).sqrt(),
            n,
        }
    }
}

/// Error of `forward` on `n_fresh` new draws from `model`.
pub fn test_error_estimate<F, R>(
    forward: F,
    model: &SparseCodingModel,
    n_fresh: usize,
    rng: &mut R,
) -> Result<ErrorEstimate>
where
    F: Fn(&Dataset) -> Result<Array2<f64>>,
    R: Rng + ?Sized,
{
    if n_fresh == 0 {
        return Err(arg_err("n_fresh must be >= 1"));
    }
    let fresh = model.sample_dataset(n_fresh, rng)?;
    let logits = forward(&fresh)?;
    Ok(ErrorEstimate::from_error(classification_error(logits.view(), fresh.labels())?, n_fresh))
}

/// Loss, gradient and logits from one pass over a batch.
#[derive(Clone, Debug)]
pub struct Evaluation<N> {
    pub loss: f64,
    pub gradient: N,
    pub logits: Array2<f64>,
}

/// A network trainable by full-batch gradient descent. Gradients have the
/// same shape as the network.
pub trait Network: Clone {
    fn logits(&self, data: &Dataset, p: &ActParams) -> Result<Array2<f64>>;
    fn evaluate(&self, data: &Dataset, p: &ActParams) -> Result<Evaluation<Self>>;
    /// `self -= eta * grad`.
    fn descend(&mut self, grad: &Self, eta: f64);
    fn is_finite(&self) -> bool;
}

struct EncoderPass {
    act: Array2<f64>,
    dact: Array2<f64>,
}

fn encoder_pass(enc: &Encoder, x: ArrayView2<'_, f64>, p: &ActParams) -> Result<EncoderPass> {
    let mut act = enc.preactivations(x)?;
    let mut dact = Array2::zeros(act.raw_dim());
    ndarray::Zip::from(&mut act).and(&mut dact).for_each(|a, d| {
        *d = smooth_relu_deriv(*a, p);
        *a = smooth_relu(*a, p);
    });
    Ok(EncoderPass { act, dact })
}

/// Mean loss and `dL/dlogits = (softmax - onehot) / n`.
fn loss_and_logit_grad(logits: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let n = labels.len() as f64;
    let mut g = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for ((row, mut grow), &y) in logits.rows().into_iter().zip(g.rows_mut()).zip(labels) {
        loss += ce_loss(row, y);
        let probs = class_probs(row);
        grow.assign(&probs);
        grow[y] -= 1.0;
    }
    g /= n;
    (loss / n, g)
}

/// Gradient of one encoder given `dL/dlogits`.
fn encoder_gradient(pass: EncoderPass, logit_grad: &Array2<f64>, x: ArrayView2<'_, f64>, k: usize, m: usize) -> Array2<f64> {
    let mut gpre = pass.dact;
    for (mut row, grow) in gpre.rows_mut().into_iter().zip(logit_grad.rows()) {
        for j in 0..k {
            let gj = grow[j];
            row.slice_mut(ndarray::s![j * m..(j + 1) * m]).mapv_inplace(|v| v * gj);
        }
    }
    gpre.t().dot(&x)
}

fn check_data(data: &Dataset, k: usize) -> Result<()> {
    if data.n() == 0 {
        return Err(arg_err("empty batch"));
    }
    if data.config.k != k {
        return Err(Error::Shape(format!(
            "network has {k} classes, data has {}",
            data.config.k
        )));
    }
    Ok(())
}

impl Network for Weights {
    fn logits(&self, data: &Dataset, p: &ActParams) -> Result<Array2<f64>> {
        check_data(data, self.k())?;
        let a = self.encoder(Modality::First).batch_logits(data.inputs(Modality::First), p)?;
        let b = self.encoder(Modality::Second).batch_logits(data.inputs(Modality::Second), p)?;
        Ok(a + b)
    }

    fn evaluate(&self, data: &Dataset, p: &ActParams) -> Result<Evaluation<Self>> {
        check_data(data, self.k())?;
        let (k, m) = (self.k(), self.m());
        let passes = [
            encoder_pass(self.encoder(Modality::First), data.inputs(Modality::First), p)?,
            encoder_pass(self.encoder(Modality::Second), data.inputs(Modality::Second), p)?,
        ];
        let logits = pool_classes(&passes[0].act, k, m) + pool_classes(&passes[1].act, k, m);
        let (loss, lg) = loss_and_logit_grad(&logits, data.labels());
        let [p1, p2] = passes;
        let g1 = encoder_gradient(p1, &lg, data.inputs(Modality::First), k, m);
        let g2 = encoder_gradient(p2, &lg, data.inputs(Modality::Second), k, m);
        Ok(Evaluation {
            loss,
            gradient: Weights::new(Encoder::from_array(k, m, g1)?, Encoder::from_array(k, m, g2)?)?,
            logits,
        })
    }

    fn descend(&mut self, grad: &Self, eta: f64) {
        for r in Modality::BOTH {
            self.encoder_mut(r)
                .matrix_mut()
                .scaled_add(-eta, &grad.encoder(r).matrix());
        }
    }

    fn is_finite(&self) -> bool {
        self.encoders().iter().all(Encoder::is_finite)
    }
}

impl Network for UniWeights {
    fn logits(&self, data: &Dataset, p: &ActParams) -> Result<Array2<f64>> {
        check_data(data, self.encoder.k())?;
        self.encoder.batch_logits(data.inputs(self.modality), p)
    }

    fn evaluate(&self, data: &Dataset, p: &ActParams) -> Result<Evaluation<Self>> {
        check_data(data, self.encoder.k())?;
        let (k, m) = (self.encoder.k(), self.encoder.m());
        let x = data.inputs(self.modality);
        let pass = encoder_pass(&self.encoder, x, p)?;
        let logits = pool_classes(&pass.act, k, m);
        let (loss, lg) = loss_and_logit_grad(&logits, data.labels());
        let g = encoder_gradient(pass, &lg, x, k, m);
        Ok(Evaluation {
            loss,
            gradient: UniWeights::new(self.modality, Encoder::from_array(k, m, g)?),
            logits,
        })
    }

    fn descend(&mut self, grad: &Self, eta: f64) {
        self.encoder.matrix_mut().scaled_add(-eta, &grad.encoder.matrix());
    }

    fn is_finite(&self) -> bool {
        self.encoder.is_finite()
    }
}

/// Gradient of the mean loss of the late-fusion network.
pub fn grad_multi(w: &Weights, data: &Dataset, p: &ActParams) -> Result<Weights> {
    Ok(w.evaluate(data, p)?.gradient)
}

/// Gradient of the mean loss of a uni-modal network.
pub fn grad_uni(v: &UniWeights, data: &Dataset, p: &ActParams) -> Result<UniWeights> {
    Ok(v.evaluate(data, p)?.gradient)
}

pub fn mean_loss<N: Network>(net: &N, data: &Dataset, p: &ActParams) -> Result<f64> {
    let logits = net.logits(data, p)?;
    let total: f64 = logits
        .rows()
        .into_iter()
        .zip(data.labels())
        .map(|(row, &y)| ce_loss(row, y))
        .sum();
    Ok(total / data.n() as f64)
}

/// One logged snapshot. Fields the run does not produce stay `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub t: usize,
    pub train_loss: f64,
    pub train_error: f64,
    pub test_error: Option<f64>,
    pub probe_error: [Option<f64>; 2],
    /// Per class, per modality.
    pub gamma: Vec<[Option<f64>; 2]>,
    pub phi: Vec<[Option<f64>; 2]>,
}

impl MetricRecord {
    fn new(t: usize, train_loss: f64, train_error: f64) -> Self {
        MetricRecord {
            t,
            train_loss,
            train_error,
            test_error: None,
            probe_error: [None, None],
            gamma: Vec::new(),
            phi: Vec::new(),
        }
    }
}

/// Runs exactly `tc.iterations` full-batch steps. Snapshots are taken at
/// `t = 0, log_every, 2 log_every, ...` and at `t = iterations`; `hook` may
/// fill in the diagnostic fields of each.
pub fn train<N, H>(
    init: N,
    data: &Dataset,
    tc: &TrainConfig,
    p: &ActParams,
    mut hook: H,
) -> Result<(N, Vec<MetricRecord>)>
where
    N: Network,
    H: FnMut(usize, &N, &mut MetricRecord) -> Result<()>,
{
    tc.validate()?;
    p.validate()?;
    let mut net = init;
    let mut records = Vec::with_capacity(tc.iterations / tc.log_every + 2);
    let guard = |t: usize, loss: f64| -> Result<()> {
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            Err(Error::Divergence { iteration: t, value: loss })
        } else {
            Ok(())
        }
    };
    for t in 0..tc.iterations {
        let eval = net.evaluate(data, p)?;
        guard(t, eval.loss)?;
        if t % tc.log_every == 0 {
            let err = classification_error(eval.logits.view(), data.labels())?;
            let mut rec = MetricRecord::new(t, eval.loss, err);
            hook(t, &net, &mut rec)?;
            records.push(rec);
        }
        net.descend(&eval.gradient, tc.eta);
        if !net.is_finite() {
            return Err(Error::Divergence { iteration: t + 1, value: f64::NAN });
        }
    }
    let t = tc.iterations;
    let logits = net.logits(data, p)?;
    let loss: f64 = logits
        .rows()
        .into_iter()
        .zip(data.labels())
        .map(|(row, &y)| ce_loss(row, y))
        .sum::<f64>()
        / data.n() as f64;
    guard(t, loss)?;
    let mut rec = MetricRecord::new(t, loss, classification_error(logits.view(), data.labels())?);
    hook(t, &net, &mut rec)?;
    records.push(rec);
    Ok((net, records))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Metric stream as CSV: `t,arm,train_loss,train_error,test_error,
/// probe_error_1,probe_error_2,gamma_0_1,gamma_0_2,...` (one gamma pair per
/// class, classes numbered from 0).
pub fn write_metrics_csv<W: Write>(mut w: W, arm: &str, k: usize, records: &[MetricRecord]) -> Result<()> {
    let mut head = vec![
        "t".to_string(),
        "arm".into(),
        "train_loss".into(),
        "train_error".into(),
        "test_error".into(),
        "probe_error_1".into(),
        "probe_error_2".into(),
    ];
    for j in 0..k {
        head.push(format!("gamma_{j}_1"));
        head.push(format!("gamma_{j}_2"));
    }
    writeln!(w, "{}", head.join(","))?;
    for rec in records {
        let mut row = vec![
            rec.t.to_string(),
            arm.to_string(),
            rec.train_loss.to_string(),
            rec.train_error.to_string(),
            fmt_opt(rec.test_error),
            fmt_opt(rec.probe_error[0]),
            fmt_opt(rec.probe_error[1]),
        ];
        for j in 0..k {
            let g = rec.gamma.get(j).copied().unwrap_or([None, None]);
            row.push(fmt_opt(g[0]));
            row.push(fmt_opt(g[1]));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Logits of every sample under the probe network of modality `r`.
pub fn probe_logits(w: &Weights, r: Modality, data: &Dataset, p: &ActParams) -> Result<Array2<f64>> {
    w.encoder(r).batch_logits(data.inputs(r), p)
}
