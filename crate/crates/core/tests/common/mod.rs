//! Finite-difference gradient oracle shared by the gradient and acceptance
//! suites. The loss here is written with explicit loops and shares no code
//! with the library's forward or backward pass.

use std::time::{Duration, Instant};

use modcomp::data::{DataConfig, Dataset, ModalityConfig};
use modcomp::net::{ActParams, Encoder, UniWeights, Weights};
use modcomp::rng::substream;
use modcomp::train::{grad_multi, grad_uni};
use modcomp::Modality;
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const H: f64 = 1e-6;
const REL_TOL: f64 = 1e-5;
const ABS_TOL: f64 = 1e-8;
/// Preactivations closer than this to 0 or beta trigger a redraw.
const KINK_GAP: f64 = 1e-3;

fn act(x: f64, q: u32, beta: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x <= beta {
        x.powi(q as i32) / (q as f64 * beta.powi(q as i32 - 1))
    } else {
        x - beta + beta / q as f64
    }
}

/// Mean cross-entropy with explicit loops. An empty weight block drops its
/// modality.
fn loop_loss(w: [&Array2<f64>; 2], x: [&Array2<f64>; 2], labels: &[usize], k: usize, m: usize, q: u32, beta: f64) -> f64 {
    let n = labels.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut f = vec![0.0; k];
        for r in 0..2 {
            let (wr, xr) = (w[r], x[r]);
            if wr.nrows() == 0 {
                continue;
            }
            for j in 0..k {
                for l in 0..m {
                    let mut dot = 0.0;
                    for c in 0..xr.ncols() {
                        dot += wr[[j * m + l, c]] * xr[[i, c]];
                    }
                    f[j] += act(dot, q, beta);
                }
            }
        }
        let max = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + f.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - f[labels[i]];
    }
    total / n as f64
}

fn gaussian(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || {
        let v: f64 = StandardNormal.sample(rng);
        scale * v
    })
}

fn clear_of_kinks(w: &Array2<f64>, x: &Array2<f64>, beta: f64) -> bool {
    let pre = x.dot(&w.t());
    pre.iter().all(|&v| v.abs() > KINK_GAP && (v - beta).abs() > KINK_GAP)
}

struct Instance {
    k: usize,
    m: usize,
    act: ActParams,
    data: Dataset,
    w: [Array2<f64>; 2],
}

fn draw_instance(idx: usize) -> (Instance, usize) {
    let mut rng = substream(idx as u64, "gradient-oracle");
    let k = rng.random_range(2..=5);
    let m = rng.random_range(1..=3);
    let dims = [rng.random_range(k..=16), rng.random_range(k..=16)];
    let n = rng.random_range(3..=8);
    let act = ActParams {
        q: rng.random_range(3..=5),
        beta: rng.random_range(0.2..0.6),
    };
    let x = [gaussian(n, dims[0], 0.5, &mut rng), gaussian(n, dims[1], 0.5, &mut rng)];
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    let modality = |d| ModalityConfig { d, ..ModalityConfig::default() };
    let cfg = DataConfig {
        k,
        s: 1.0,
        modalities: [modality(dims[0]), modality(dims[1])],
        ..DataConfig::default()
    };
    let mut redraws = 0;
    let w = loop {
        let w = [gaussian(k * m, dims[0], 0.4, &mut rng), gaussian(k * m, dims[1], 0.4, &mut rng)];
        if clear_of_kinks(&w[0], &x[0], act.beta) && clear_of_kinks(&w[1], &x[1], act.beta) {
            break w;
        }
        redraws += 1;
        assert!(redraws < 10_000, "instance {idx}: cannot avoid kinks");
    };
    let data = Dataset::new(cfg, x, labels, vec![[true, true]; n], None).unwrap();
    (Instance { k, m, act, data, w }, redraws)
}

fn agrees(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= ABS_TOL || diff <= REL_TOL * analytic.abs().max(numeric.abs())
}

/// Central differences of `loss` over every entry of `w[r]`.
fn finite_differences(w: &[Array2<f64>; 2], r: usize, loss: &dyn Fn([&Array2<f64>; 2]) -> f64) -> Array2<f64> {
    let mut out = Array2::zeros(w[r].raw_dim());
    let mut plus = w.clone();
    let mut minus = w.clone();
    for idx in ndarray::indices(w[r].raw_dim()) {
        plus[r][idx] += H;
        minus[r][idx] -= H;
        out[idx] = (loss([&plus[0], &plus[1]]) - loss([&minus[0], &minus[1]])) / (2.0 * H);
        plus[r][idx] = w[r][idx];
        minus[r][idx] = w[r][idx];
    }
    out
}

fn compare(label: &str, analytic: &Array2<f64>, numeric: &Array2<f64>) -> usize {
    let mut bad = 0;
    for (idx, &a) in analytic.indexed_iter() {
        let f = numeric[idx];
        if !agrees(a, f) {
            bad += 1;
            eprintln!("{label} {idx:?}: analytic {a:e} numeric {f:e}");
        }
    }
    bad
}

pub struct GradientCheck {
    pub instances: usize,
    pub coordinates: usize,
    pub mismatches: usize,
    pub redraws: usize,
    pub elapsed: Duration,
}

/// Compares `grad_multi` and `grad_uni` against central differences on
/// `instances` random problems with K <= 5, m <= 3, d <= 16.
pub fn check_gradients(instances: usize) -> GradientCheck {
    let start = Instant::now();
    let mut coordinates = 0;
    let mut mismatches = 0;
    let mut redraws = 0;
    for idx in 0..instances {
        let (inst, r) = draw_instance(idx);
        redraws += r;
        let Instance { k, m, act, data, w } = inst;
        let x = [data.inputs(Modality::First).to_owned(), data.inputs(Modality::Second).to_owned()];
        let labels = data.labels().to_vec();

        let weights = Weights::new(
            Encoder::from_array(k, m, w[0].clone()).unwrap(),
            Encoder::from_array(k, m, w[1].clone()).unwrap(),
        )
        .unwrap();
        let g = grad_multi(&weights, &data, &act).unwrap();
        let multi_loss = |ws: [&Array2<f64>; 2]| loop_loss(ws, [&x[0], &x[1]], &labels, k, m, act.q, act.beta);
        for r in Modality::BOTH {
            let numeric = finite_differences(&w, r.index(), &multi_loss);
            let analytic = g.encoder(r).matrix().to_owned();
            coordinates += analytic.len();
            mismatches += compare(&format!("instance {idx} multi {r}"), &analytic, &numeric);
        }

        let empty = Array2::<f64>::zeros((0, 0));
        for r in Modality::BOTH {
            let uni = UniWeights::new(r, Encoder::from_array(k, m, w[r.index()].clone()).unwrap());
            let g = grad_uni(&uni, &data, &act).unwrap();
            let uni_loss = |ws: [&Array2<f64>; 2]| {
                let masked = if r == Modality::First { [ws[0], &empty] } else { [&empty, ws[1]] };
                loop_loss(masked, [&x[0], &x[1]], &labels, k, m, act.q, act.beta)
            };
            let numeric = finite_differences(&w, r.index(), &uni_loss);
            let analytic = g.encoder.matrix().to_owned();
            coordinates += analytic.len();
            mismatches += compare(&format!("instance {idx} uni {r}"), &analytic, &numeric);
        }
    }
    GradientCheck {
        instances,
        coordinates,
        mismatches,
        redraws,
        elapsed: start.elapsed(),
    }
}
