//! Two-modality sparse coding data.
//!
//! Each modality observes `x_r = M_r z_r + M_r a_r + g_r` where `M_r` is an
//! orthonormal dictionary, `z_r` a sparse code whose target coordinate is
//! large (sufficient) or small (insufficient), `a_r` non-negative spike noise
//! vanishing on the label, and `g_r` isotropic Gaussian noise.

mod io;

pub use io::{read_dataset, write_dataset, write_dataset_csv, DATASET_FORMAT_VERSION};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution as _, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::Modality;

/// Generative constants of one modality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalityConfig {
    pub d: usize,
    /// Scale of the target coefficient for insufficient codes.
    pub gamma: f64,
    /// Ceiling of off-target coefficients for insufficient codes.
    pub rho: f64,
    /// Probability that a code is insufficient.
    pub mu: f64,
    /// Upper end of the sufficient target band `[1, c_big]`.
    pub c_big: f64,
    /// Ceiling of off-target coefficients for sufficient codes.
    pub c_small: f64,
}

impl ModalityConfig {
    pub fn validate(&self, k: usize) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < self.rho && self.rho < 1.0) {
            return Err(config_err(format!(
                "need 0 < gamma < rho < 1, got gamma={} rho={}",
                self.gamma, self.rho
            )));
        }
        if !(0.0..1.0).contains(&self.mu) {
            return Err(config_err(format!("mu must lie in [0, 1), got {}", self.mu)));
        }
        if !(self.c_big >= 1.0) {
            return Err(config_err(format!("c_big must be >= 1, got {}", self.c_big)));
        }
        if !(self.c_small > 0.0 && self.c_small < 0.5) {
            return Err(config_err(format!(
                "c_small must lie in (0, 0.5), got {}",
                self.c_small
            )));
        }
        if self.d < k {
            return Err(config_err(format!(
                "modality dimension {} is smaller than the class count {}",
                self.d, k
            )));
        }
        Ok(())
    }
}

impl Default for ModalityConfig {
    fn default() -> Self {
        ModalityConfig {
            d: 64,
            gamma: 0.1,
            rho: 0.4,
            mu: 0.1,
            c_big: 2.0,
            c_small: 0.45,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub k: usize,
    /// Expected off-target support size; each off-target coordinate is
    /// active with probability `s / k`.
    pub s: f64,
    pub alpha: f64,
    pub sigma_g: f64,
    pub modalities: [ModalityConfig; 2],
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            k: 20,
            s: 3.0,
            alpha: 0.01,
            sigma_g: 1e-3,
            modalities: [ModalityConfig::default(), ModalityConfig::default()],
            seed: 0,
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(config_err(format!("need at least 2 classes, got {}", self.k)));
        }
        if !(self.s >= 1.0 && self.s < self.k as f64) {
            return Err(config_err(format!(
                "need 1 <= s < K, got s={} K={}",
                self.s, self.k
            )));
        }
        if !(self.alpha >= 0.0) || !(self.sigma_g >= 0.0) {
            return Err(config_err("alpha and sigma_g must be non-negative"));
        }
        for m in &self.modalities {
            m.validate(self.k)?;
        }
        Ok(())
    }

    pub fn modality(&self, r: Modality) -> &ModalityConfig {
        &self.modalities[r.index()]
    }

    pub fn dims(&self) -> [usize; 2] {
        [self.modalities[0].d, self.modalities[1].d]
    }

    /// True when inputs carry no noise, so codes are exactly recoverable by
    /// projecting onto the dictionary.
    pub fn is_noiseless(&self) -> bool {
        self.alpha == 0.0 && self.sigma_g == 0.0
    }
}

/// Orthonormal feature matrix, stored as a `d x K` array of columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Dictionary {
    columns: Array2<f64>,
}

impl Dictionary {
    pub fn from_columns(columns: Array2<f64>) -> Self {
        Dictionary { columns }
    }

    pub fn d(&self) -> usize {
        self.columns.nrows()
    }

    pub fn k(&self) -> usize {
        self.columns.ncols()
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.columns.column(j)
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.columns.view()
    }

    /// Coefficients `M^T x`.
    pub fn project(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        self.columns.t().dot(&x)
    }

    /// Largest absolute entry of `M^T M - I`.
    pub fn orthonormality_defect(&self) -> f64 {
        let gram = self.columns.t().dot(&self.columns);
        let mut worst = 0.0f64;
        for ((a, b), v) in gram.indexed_iter() {
            let target = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((v - target).abs());
        }
        worst
    }
}

/// Orthonormalizes `k` i.i.d. standard Gaussian vectors of dimension `d`.
pub fn build_dictionary<R: Rng + ?Sized>(d: usize, k: usize, rng: &mut R) -> Result<Dictionary> {
    if d < k {
        return Err(config_err(format!(
            "dictionary needs d >= K, got d={d} K={k}"
        )));
    }
    if k == 0 {
        return Err(config_err("dictionary needs at least one column"));
    }
    let mut cols = Array2::<f64>::zeros((d, k));
    let mut j = 0;
    while j < k {
        let mut v: Array1<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let raw_norm = v.dot(&v).sqrt();
        // Two Gram-Schmidt passes keep the Gram defect near machine epsilon.
        for _ in 0..2 {
            for i in 0..j {
                let c = cols.column(i);
                let coef = c.dot(&v);
                v.scaled_add(-coef, &c);
            }
        }
        let norm = v.dot(&v).sqrt();
        if norm <= 1e-8 * raw_norm.max(1.0) {
            // numerically dependent draw, redraw this column
            continue;
        }
        v /= norm;
        cols.column_mut(j).assign(&v);
        j += 1;
    }
    Ok(Dictionary { columns: cols })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseCode {
    pub z: Array1<f64>,
    pub sufficient: bool,
    pub label: usize,
}

impl SparseCode {
    pub fn support_size(&self) -> usize {
        self.z.iter().filter(|v| **v != 0.0).count()
    }
}

/// Draws a code for label `y`: insufficient with probability `mc.mu`,
/// otherwise sufficient. Off-target coordinates are active independently
/// with probability `s / k`.
pub fn sample_sparse_code<R: Rng + ?Sized>(
    y: usize,
    mc: &ModalityConfig,
    k: usize,
    s: f64,
    rng: &mut R,
) -> Result<SparseCode> {
    if y >= k {
        return Err(Error::Argument(format!("label {y} out of range for K={k}")));
    }
    let sufficient = !(mc.mu > 0.0 && rng.random::<f64>() < mc.mu);
    let (target, off_lo, off_hi) = if sufficient {
        (rng.random_range(1.0..=mc.c_big), 0.5 * mc.c_small, mc.c_small)
    } else {
        (
            rng.random_range(0.5 * mc.gamma..=1.5 * mc.gamma),
            0.5 * mc.rho,
            mc.rho,
        )
    };
    let p_active = s / k as f64;
    let mut z = Array1::<f64>::zeros(k);
    for (j, zj) in z.iter_mut().enumerate() {
        if j == y {
            *zj = target;
        } else if rng.random::<f64>() < p_active {
            *zj = rng.random_range(off_lo..=off_hi);
        }
    }
    Ok(SparseCode {
        z,
        sufficient,
        label: y,
    })
}

/// Non-negative feature noise in code space, uniform on `[0, alpha]` per
/// coordinate and zero on the label.
pub fn sample_spike_noise<R: Rng + ?Sized>(y: usize, k: usize, alpha: f64, rng: &mut R) -> Array1<f64> {
    let mut a = Array1::<f64>::zeros(k);
    if alpha > 0.0 {
        for (j, aj) in a.iter_mut().enumerate() {
            let v = rng.random_range(0.0..=alpha);
            if j != y {
                *aj = v;
            }
        }
    }
    a
}

/// The pieces a modality input was assembled from.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalityTrace {
    pub z: Array1<f64>,
    pub spike: Array1<f64>,
    pub gaussian: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub x: [Array1<f64>; 2],
    pub y: usize,
    pub sufficient: [bool; 2],
    pub trace: Option<[ModalityTrace; 2]>,
}

impl Sample {
    pub fn input(&self, r: Modality) -> ArrayView1<'_, f64> {
        self.x[r.index()].view()
    }
}

pub fn assemble_sample<R: Rng + ?Sized>(
    dicts: &[Dictionary; 2],
    codes: [SparseCode; 2],
    cfg: &DataConfig,
    rng: &mut R,
) -> Result<Sample> {
    let [c1, c2] = codes;
    if c1.label != c2.label {
        return Err(Error::Internal(format!(
            "codes disagree on the label: {} vs {}",
            c1.label, c2.label
        )));
    }
    let y = c1.label;
    let gauss = Normal::new(0.0, cfg.sigma_g).map_err(|e| config_err(e.to_string()))?;
    let mut build = |dict: &Dictionary, code: SparseCode| -> (Array1<f64>, ModalityTrace) {
        let spike = sample_spike_noise(y, cfg.k, cfg.alpha, rng);
        let coeffs = &code.z + &spike;
        let mut x = dict.columns.dot(&coeffs);
        let gaussian: Array1<f64> = (0..dict.d())
            .map(|_| if cfg.sigma_g > 0.0 { gauss.sample(rng) } else { 0.0 })
            .collect();
        x += &gaussian;
        (
            x,
            ModalityTrace {
                z: code.z,
                spike,
                gaussian,
            },
        )
    };
    let suff = [c1.sufficient, c2.sufficient];
    let (x1, t1) = build(&dicts[0], c1);
    let (x2, t2) = build(&dicts[1], c2);
    Ok(Sample {
        x: [x1, x2],
        y,
        sufficient: suff,
        trace: Some([t1, t2]),
    })
}

/// Stored codes and noise for every sample, one `n x K` (or `n x d`) array
/// per modality.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub z: [Array2<f64>; 2],
    pub spike: [Array2<f64>; 2],
    pub gaussian: [Array2<f64>; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub config: DataConfig,
    x: [Array2<f64>; 2],
    labels: Vec<usize>,
    sufficient: Vec<[bool; 2]>,
    provenance: Option<Provenance>,
}

impl Dataset {
    pub fn new(
        config: DataConfig,
        x: [Array2<f64>; 2],
        labels: Vec<usize>,
        sufficient: Vec<[bool; 2]>,
        provenance: Option<Provenance>,
    ) -> Result<Self> {
        let n = labels.len();
        let dims = config.dims();
        for r in 0..2 {
            if x[r].nrows() != n || x[r].ncols() != dims[r] {
                return Err(Error::Shape(format!(
                    "modality {} inputs are {:?}, expected ({n}, {})",
                    r + 1,
                    x[r].shape(),
                    dims[r]
                )));
            }
        }
        if sufficient.len() != n {
            return Err(Error::Shape("sufficiency flags length mismatch".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= config.k) {
            return Err(Error::Argument(format!("label {bad} out of range")));
        }
        Ok(Dataset {
            config,
            x,
            labels,
            sufficient,
            provenance,
        })
    }

    pub fn from_samples(config: DataConfig, samples: &[Sample], keep_trace: bool) -> Result<Self> {
        let n = samples.len();
        let k = config.k;
        let dims = config.dims();
        let mut x = [Array2::zeros((n, dims[0])), Array2::zeros((n, dims[1]))];
        let mut prov = if keep_trace {
            Some(Provenance {
                z: [Array2::zeros((n, k)), Array2::zeros((n, k))],
                spike: [Array2::zeros((n, k)), Array2::zeros((n, k))],
                gaussian: [Array2::zeros((n, dims[0])), Array2::zeros((n, dims[1]))],
            })
        } else {
            None
        };
        for (i, s) in samples.iter().enumerate() {
            for r in 0..2 {
                if s.x[r].len() != dims[r] {
                    return Err(Error::Shape(format!(
                        "sample {i} modality {} has length {}",
                        r + 1,
                        s.x[r].len()
                    )));
                }
                x[r].row_mut(i).assign(&s.x[r]);
            }
            if let Some(p) = prov.as_mut() {
                let trace = s.trace.as_ref().ok_or_else(|| {
                    Error::Argument(format!("sample {i} carries no trace"))
                })?;
                for r in 0..2 {
                    p.z[r].row_mut(i).assign(&trace[r].z);
                    p.spike[r].row_mut(i).assign(&trace[r].spike);
                    p.gaussian[r].row_mut(i).assign(&trace[r].gaussian);
                }
            }
        }
        let labels = samples.iter().map(|s| s.y).collect();
        let sufficient = samples.iter().map(|s| s.sufficient).collect();
        Dataset::new(config, x, labels, sufficient, prov)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Samples whose two modalities are both sufficient.
    pub fn n_s(&self) -> usize {
        self.sufficient.iter().filter(|f| f[0] && f[1]).count()
    }

    pub fn n_i(&self) -> usize {
        self.n() - self.n_s()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sufficiency(&self) -> &[[bool; 2]] {
        &self.sufficient
    }

    pub fn inputs(&self, r: Modality) -> ArrayView2<'_, f64> {
        self.x[r.index()].view()
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    pub fn without_provenance(mut self) -> Self {
        self.provenance = None;
        self
    }

    pub fn sample(&self, i: usize) -> Sample {
        let trace = self.provenance.as_ref().map(|p| {
            [0, 1].map(|r| ModalityTrace {
                z: p.z[r].row(i).to_owned(),
                spike: p.spike[r].row(i).to_owned(),
                gaussian: p.gaussian[r].row(i).to_owned(),
            })
        });
        Sample {
            x: [self.x[0].row(i).to_owned(), self.x[1].row(i).to_owned()],
            y: self.labels[i],
            sufficient: self.sufficient[i],
            trace,
        }
    }

    /// Appends `other`'s samples; configs must agree.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.config != other.config {
            return Err(Error::Argument("cannot concatenate datasets with different configs".into()));
        }
        let cat = |a: &Array2<f64>, b: &Array2<f64>| {
            ndarray::concatenate(Axis(0), &[a.view(), b.view()])
                .map_err(|e| Error::Shape(e.to_string()))
        };
        let x = [cat(&self.x[0], &other.x[0])?, cat(&self.x[1], &other.x[1])?];
        let provenance = match (&self.provenance, &other.provenance) {
            (Some(a), Some(b)) => Some(Provenance {
                z: [cat(&a.z[0], &b.z[0])?, cat(&a.z[1], &b.z[1])?],
                spike: [cat(&a.spike[0], &b.spike[0])?, cat(&a.spike[1], &b.spike[1])?],
                gaussian: [
                    cat(&a.gaussian[0], &b.gaussian[0])?,
                    cat(&a.gaussian[1], &b.gaussian[1])?,
                ],
            }),
            _ => None,
        };
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        let mut sufficient = self.sufficient.clone();
        sufficient.extend_from_slice(&other.sufficient);
        Dataset::new(self.config.clone(), x, labels, sufficient, provenance)
    }
}

/// A data distribution: the config together with its two dictionaries.
/// Training and held-out sets must be drawn from the same instance.
#[derive(Clone, Debug)]
pub struct SparseCodingModel {
    pub config: DataConfig,
    pub dicts: [Dictionary; 2],
}

impl SparseCodingModel {
    pub fn new<R: Rng + ?Sized>(config: DataConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d1 = build_dictionary(config.modalities[0].d, config.k, rng)?;
        let d2 = build_dictionary(config.modalities[1].d, config.k, rng)?;
        Ok(SparseCodingModel {
            config,
            dicts: [d1, d2],
        })
    }

    pub fn draw_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Sample> {
        let cfg = &self.config;
        let y = rng.random_range(0..cfg.k);
        let c1 = sample_sparse_code(y, &cfg.modalities[0], cfg.k, cfg.s, rng)?;
        let c2 = sample_sparse_code(y, &cfg.modalities[1], cfg.k, cfg.s, rng)?;
        assemble_sample(&self.dicts, [c1, c2], cfg, rng)
    }

    /// `n` i.i.d. samples with their codes and noise retained.
    pub fn sample_dataset<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::Argument("dataset size must be at least 1".into()));
        }
        let samples = (0..n)
            .map(|_| self.draw_sample(rng))
            .collect::<Result<Vec<_>>>()?;
        Dataset::from_samples(self.config.clone(), &samples, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn cfg() -> DataConfig {
        DataConfig::default()
    }

    #[test]
    fn square_dictionary_is_orthogonal() {
        let mut rng = substream(1, "dict");
        let d = build_dictionary(4, 4, &mut rng).unwrap();
        assert!(d.orthonormality_defect() <= 1e-10);
    }

    #[test]
    fn tall_dictionary_has_unit_columns() {
        let mut rng = substream(2, "dict");
        let d = build_dictionary(64, 20, &mut rng).unwrap();
        for j in 0..20 {
            let c = d.column(j);
            assert!((c.dot(&c).sqrt() - 1.0).abs() <= 1e-10);
        }
        assert!(d.orthonormality_defect() <= 1e-10);
    }

    #[test]
    fn wide_dictionary_rejected() {
        let mut rng = substream(3, "dict");
        assert!(matches!(build_dictionary(3, 5, &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn mu_zero_is_always_sufficient() {
        let mut rng = substream(4, "codes");
        let mc = ModalityConfig { mu: 0.0, ..Default::default() };
        for i in 0..2000 {
            let c = sample_sparse_code(i % 20, &mc, 20, 3.0, &mut rng).unwrap();
            assert!(c.sufficient);
            let t = c.z[i % 20];
            assert!((1.0..=mc.c_big).contains(&t));
        }
    }

    #[test]
    fn always_insufficient_target_band() {
        // mu = 1 is outside the validated config range but the sampler
        // must still honor it
        let mut rng = substream(5, "codes");
        let mc = ModalityConfig { mu: 1.0, gamma: 0.1, ..Default::default() };
        for i in 0..2000 {
            let c = sample_sparse_code(i % 20, &mc, 20, 3.0, &mut rng).unwrap();
            assert!(!c.sufficient);
            assert!((0.05..=0.15).contains(&c.z[i % 20]));
        }
    }

    #[test]
    fn off_target_support_matches_binomial_mean() {
        let mut rng = substream(6, "codes");
        let mc = ModalityConfig::default();
        let (k, s, draws) = (20usize, 3.0, 10_000usize);
        let total: usize = (0..draws)
            .map(|i| sample_sparse_code(i % k, &mc, k, s, &mut rng).unwrap().support_size() - 1)
            .sum();
        let mean = total as f64 / draws as f64;
        let p = s / k as f64;
        let expect = (k - 1) as f64 * p;
        let var = (k - 1) as f64 * p * (1.0 - p);
        let se = (var / draws as f64).sqrt();
        assert!((mean - expect).abs() <= 3.0 * var.sqrt(), "mean {mean}");
        // the tighter standard-error band also holds for this seed
        assert!((mean - expect).abs() <= 4.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn out_of_range_label_rejected() {
        let mut rng = substream(6, "codes");
        assert!(sample_sparse_code(20, &ModalityConfig::default(), 20, 3.0, &mut rng).is_err());
    }

    #[test]
    fn spike_noise_bands() {
        let mut rng = substream(7, "spike");
        assert!(sample_spike_noise(3, 20, 0.0, &mut rng).iter().all(|v| *v == 0.0));
        let draws = 10_000;
        let mut max = 0.0f64;
        let mut sum = 0.0;
        for i in 0..draws {
            let y = i % 20;
            let a = sample_spike_noise(y, 20, 0.01, &mut rng);
            assert_eq!(a[y], 0.0);
            for (j, v) in a.iter().enumerate() {
                max = max.max(*v);
                if j != y {
                    sum += v;
                }
            }
        }
        let mean = sum / (draws * 19) as f64;
        assert!(max <= 0.01);
        // uniform on [0, 0.01]: sd 0.01/sqrt(12) over 190k draws
        let se = 0.01 / 12f64.sqrt() / ((draws * 19) as f64).sqrt();
        assert!((mean - 0.005).abs() <= 4.0 * se, "mean {mean}");
    }

    fn model(cfg: DataConfig, seed: u64) -> SparseCodingModel {
        SparseCodingModel::new(cfg, &mut substream(seed, "dictionary")).unwrap()
    }

    #[test]
    fn noiseless_inputs_reconstruct_codes() {
        let c = DataConfig { alpha: 0.0, sigma_g: 0.0, ..cfg() };
        let m = model(c, 8);
        let mut rng = substream(8, "data");
        for _ in 0..50 {
            let s = m.draw_sample(&mut rng).unwrap();
            let tr = s.trace.as_ref().unwrap();
            for r in Modality::BOTH {
                let z = m.dicts[r.index()].project(s.input(r));
                let diff = (&z - &tr[r.index()].z).mapv(f64::abs).fold(0.0f64, |a, b| a.max(*b));
                assert!(diff <= 1e-10);
            }
        }
    }

    #[test]
    fn spike_noise_shows_up_in_code_space() {
        let c = DataConfig { sigma_g: 0.0, alpha: 0.05, ..cfg() };
        let m = model(c, 9);
        let mut rng = substream(9, "data");
        for _ in 0..50 {
            let s = m.draw_sample(&mut rng).unwrap();
            let tr = s.trace.as_ref().unwrap();
            for r in Modality::BOTH {
                let t = &tr[r.index()];
                let resid = m.dicts[r.index()].project(s.input(r)) - &t.z - &t.spike;
                assert!(resid.iter().all(|v| v.abs() <= 1e-10));
            }
        }
    }

    #[test]
    fn gaussian_residual_stays_within_six_sigma() {
        let c = DataConfig { sigma_g: 0.001, ..cfg() };
        let m = model(c, 10);
        let mut rng = substream(10, "data");
        let mut violations = 0;
        for _ in 0..1000 {
            let s = m.draw_sample(&mut rng).unwrap();
            let tr = s.trace.as_ref().unwrap();
            for r in Modality::BOTH {
                let t = &tr[r.index()];
                let resid = m.dicts[r.index()].project(s.input(r)) - &t.z - &t.spike;
                if resid.iter().any(|v| v.abs() > 6.0 * 0.001) {
                    violations += 1;
                }
            }
        }
        assert_eq!(violations, 0);
    }

    #[test]
    fn mismatched_labels_rejected() {
        let m = model(cfg(), 11);
        let mut rng = substream(11, "data");
        let a = sample_sparse_code(1, &m.config.modalities[0], 20, 3.0, &mut rng).unwrap();
        let b = sample_sparse_code(2, &m.config.modalities[1], 20, 3.0, &mut rng).unwrap();
        assert!(matches!(
            assemble_sample(&m.dicts, [a, b], &m.config, &mut rng),
            Err(Error::Internal(_))
        ));
    }

    #[test]
    fn no_insufficient_data_when_mu_zero() {
        let mut c = cfg();
        c.modalities[0].mu = 0.0;
        c.modalities[1].mu = 0.0;
        let m = model(c, 12);
        let ds = m.sample_dataset(1000, &mut substream(12, "data")).unwrap();
        assert_eq!(ds.n_i(), 0);
        assert_eq!(ds.n_s(), 1000);
    }

    #[test]
    fn labels_are_uniform() {
        let m = model(cfg(), 13);
        let n = 10_000;
        let ds = m.sample_dataset(n, &mut substream(13, "data")).unwrap();
        let mut counts = vec![0usize; 20];
        for &y in ds.labels() {
            counts[y] += 1;
        }
        let expect = n as f64 / 20.0;
        for c in counts {
            assert!((c as f64 - expect).abs() <= 3.0 * (n as f64 / 20.0).sqrt(), "count {c}");
        }
        assert_eq!(ds.n_s() + ds.n_i(), n);
    }

    #[test]
    fn same_seed_same_dataset() {
        let a = model(cfg(), 14).sample_dataset(200, &mut substream(14, "data")).unwrap();
        let b = model(cfg(), 14).sample_dataset(200, &mut substream(14, "data")).unwrap();
        assert_eq!(a, b);
        for r in Modality::BOTH {
            let bits_a: Vec<u64> = a.inputs(r).iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.inputs(r).iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn insufficiency_rate_matches_mu() {
        let m = model(cfg(), 15);
        let n = 10_000;
        let ds = m.sample_dataset(n, &mut substream(15, "data")).unwrap();
        for r in 0..2 {
            let mu = m.config.modalities[r].mu;
            let frac = ds.sufficiency().iter().filter(|f| !f[r]).count() as f64 / n as f64;
            assert!((frac - mu).abs() <= 4.0 * (mu * (1.0 - mu) / n as f64).sqrt(), "{frac}");
        }
    }

    #[test]
    fn config_validation() {
        let mut c = cfg();
        assert!(c.validate().is_ok());
        c.modalities[0].gamma = 0.5;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.s = 20.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.modalities[1].c_small = 0.5;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.modalities[1].d = 10;
        assert!(c.validate().is_err());
    }

    #[test]
    fn concat_preserves_order() {
        let m = model(cfg(), 16);
        let a = m.sample_dataset(5, &mut substream(16, "a")).unwrap();
        let b = m.sample_dataset(7, &mut substream(16, "b")).unwrap();
        let ab = a.concat(&b).unwrap();
        assert_eq!(ab.n(), 12);
        assert_eq!(ab.sample(6), b.sample(1));
    }
}
