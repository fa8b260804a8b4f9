//! Experiment specification and its flat key/value file form.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{DataConfig, ModalityConfig};
use crate::error::{config_err, Error, Result};
use crate::net::ActParams;
use crate::train::TrainConfig;
use crate::Modality;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    #[serde(rename = "uni_1")]
    Uni1,
    #[serde(rename = "uni_2")]
    Uni2,
    #[serde(rename = "joint")]
    Joint,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::Uni1, Arm::Uni2, Arm::Joint];

    pub fn uni(r: Modality) -> Arm {
        match r {
            Modality::First => Arm::Uni1,
            Modality::Second => Arm::Uni2,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Arm::Uni1 => "uni_1",
            Arm::Uni2 => "uni_2",
            Arm::Joint => "joint",
        }
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uni_1" => Ok(Arm::Uni1),
            "uni_2" => Ok(Arm::Uni2),
            "joint" => Ok(Arm::Joint),
            other => Err(config_err(format!("unknown arm '{other}' (expected uni_1, uni_2 or joint)"))),
        }
    }
}

impl std::fmt::Display for Arm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Neurons per class.
    pub m: usize,
    pub sigma0: f64,
}

/// Desk-scale constants for the competition diagnostics and the sweep
/// checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Property-1 margin.
    pub margin: f64,
    /// Crossing level for the observed winner; `None` means beta.
    pub threshold: Option<f64>,
    /// Stuck ceiling as a multiple of sigma0.
    pub stuck_factor: f64,
    /// A probe error at or above this marks an encoder as failed.
    pub probe_flag: f64,
    /// A uni-modal arm at or below this error counts as good.
    pub uni_ok: f64,
    /// Slack around each winning frequency in the joint-error band.
    pub band_slack: f64,
    /// Fraction of seeds that must show a failed probe.
    pub majority: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration {
            margin: 1.05,
            threshold: None,
            stuck_factor: 5.0,
            probe_flag: 0.3,
            uni_ok: 0.15,
            band_slack: 0.2,
            majority: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub act: ActParams,
    pub model: ModelConfig,
    pub n_train: usize,
    pub arms: Vec<Arm>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Draw the training data from `data.seed` for every run instead of
    /// from the run seed.
    pub fix_data: bool,
    pub calibration: Calibration,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        SpecFile::default().into_spec()
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.train.validate()?;
        self.act.validate()?;
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(config_err(format!("experiment name '{}' is not a valid directory name", self.name)));
        }
        if self.model.m == 0 {
            return Err(config_err("m must be >= 1"));
        }
        if !(self.model.sigma0 >= 0.0 && self.model.sigma0.is_finite()) {
            return Err(config_err("sigma0 must be >= 0"));
        }
        if self.n_train == 0 {
            return Err(config_err("n must be >= 1"));
        }
        if self.arms.is_empty() {
            return Err(config_err("at least one arm is required"));
        }
        let mut arms = self.arms.clone();
        arms.sort();
        arms.dedup();
        if arms.len() != self.arms.len() {
            return Err(config_err("arms must be distinct"));
        }
        if self.seeds.is_empty() {
            return Err(config_err("at least one seed is required"));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(config_err("seeds must be distinct"));
        }
        let c = &self.calibration;
        if !(c.margin > 1.0) {
            return Err(config_err("margin must exceed 1"));
        }
        if !(0.0..1.0).contains(&c.majority) {
            return Err(config_err("majority must lie in [0, 1)"));
        }
        if !(self.threshold() > self.stuck_ceiling() && self.stuck_ceiling() > 0.0) {
            return Err(config_err(format!(
                "competition threshold {} must exceed the stuck ceiling {} = {} * sigma0, which must be positive",
                self.threshold(),
                self.stuck_ceiling(),
                c.stuck_factor
            )));
        }
        Ok(())
    }

    pub fn threshold(&self) -> f64 {
        self.calibration.threshold.unwrap_or(self.act.beta)
    }

    pub fn stuck_ceiling(&self) -> f64 {
        self.calibration.stuck_factor * self.model.sigma0
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: SpecFile = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        let spec = file.into_spec();
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_file_string(&self) -> String {
        toml::to_string(&SpecFile::from_spec(self)).expect("flat spec always serializes")
    }

    /// Flat echo used inside reports.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(SpecFile::from_spec(self)).expect("flat spec always serializes")
    }
}

/// Flat key/value form of [`ExperimentSpec`]. Every key is optional and
/// falls back to the default experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpecFile {
    pub name: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub s: f64,
    pub alpha: f64,
    pub sigma_g: f64,
    pub data_seed: u64,
    pub d_1: usize,
    pub gamma_1: f64,
    pub rho_1: f64,
    pub mu_1: f64,
    pub c_big_1: f64,
    pub c_small_1: f64,
    pub d_2: usize,
    pub gamma_2: f64,
    pub rho_2: f64,
    pub mu_2: f64,
    pub c_big_2: f64,
    pub c_small_2: f64,
    pub q: u32,
    pub beta: f64,
    pub m: usize,
    pub sigma0: f64,
    pub n: usize,
    pub eta: f64,
    #[serde(rename = "T")]
    pub iterations: usize,
    pub log_every: usize,
    pub fresh_test_n: usize,
    pub arms: Vec<Arm>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub fix_data: bool,
    pub margin: f64,
    pub threshold: Option<f64>,
    pub stuck_factor: f64,
    pub probe_flag: f64,
    pub uni_ok: f64,
    pub band_slack: f64,
    pub majority: f64,
}

impl Default for SpecFile {
    fn default() -> Self {
        let k = 20;
        let mc = ModalityConfig::default();
        let cal = Calibration::default();
        SpecFile {
            name: "default".into(),
            k,
            s: 3.0,
            alpha: 0.01,
            sigma_g: 1e-3,
            data_seed: 0,
            d_1: mc.d,
            gamma_1: mc.gamma,
            rho_1: mc.rho,
            mu_1: mc.mu,
            c_big_1: mc.c_big,
            c_small_1: mc.c_small,
            d_2: mc.d,
            gamma_2: mc.gamma,
            rho_2: mc.rho,
            mu_2: mc.mu,
            c_big_2: mc.c_big,
            c_small_2: mc.c_small,
            q: 3,
            beta: 0.1,
            m: 6,
            sigma0: DEFAULT_SIGMA0,
            n: 4000,
            eta: 0.05,
            iterations: 3000,
            log_every: 10,
            fresh_test_n: 5000,
            arms: Arm::ALL.to_vec(),
            seeds: vec![0],
            output_dir: PathBuf::from("runs"),
            fix_data: false,
            margin: cal.margin,
            threshold: cal.threshold,
            stuck_factor: cal.stuck_factor,
            probe_flag: cal.probe_flag,
            uni_ok: cal.uni_ok,
            band_slack: cal.band_slack,
            majority: cal.majority,
        }
    }
}

/// Initialization scale of the default experiment. Small enough that five
/// times it stays below beta, so a crossing of beta separates a learned
/// feature from one still at its initial level.
pub const DEFAULT_SIGMA0: f64 = 0.01;

impl SpecFile {
    pub fn into_spec(self) -> ExperimentSpec {
        let modality = |d, gamma, rho, mu, c_big, c_small| ModalityConfig { d, gamma, rho, mu, c_big, c_small };
        ExperimentSpec {
            name: self.name,
            data: DataConfig {
                k: self.k,
                s: self.s,
                alpha: self.alpha,
                sigma_g: self.sigma_g,
                modalities: [
                    modality(self.d_1, self.gamma_1, self.rho_1, self.mu_1, self.c_big_1, self.c_small_1),
                    modality(self.d_2, self.gamma_2, self.rho_2, self.mu_2, self.c_big_2, self.c_small_2),
                ],
                seed: self.data_seed,
            },
            train: TrainConfig {
                eta: self.eta,
                iterations: self.iterations,
                log_every: self.log_every,
                fresh_test_n: self.fresh_test_n,
            },
            act: ActParams { q: self.q, beta: self.beta },
            model: ModelConfig { m: self.m, sigma0: self.sigma0 },
            n_train: self.n,
            arms: self.arms,
            seeds: self.seeds,
            output_dir: self.output_dir,
            fix_data: self.fix_data,
            calibration: Calibration {
                margin: self.margin,
                threshold: self.threshold,
                stuck_factor: self.stuck_factor,
                probe_flag: self.probe_flag,
                uni_ok: self.uni_ok,
                band_slack: self.band_slack,
                majority: self.majority,
            },
        }
    }

    pub fn from_spec(spec: &ExperimentSpec) -> Self {
        let [m1, m2] = &spec.data.modalities;
        let c = &spec.calibration;
        SpecFile {
            name: spec.name.clone(),
            k: spec.data.k,
            s: spec.data.s,
            alpha: spec.data.alpha,
            sigma_g: spec.data.sigma_g,
            data_seed: spec.data.seed,
            d_1: m1.d,
            gamma_1: m1.gamma,
            rho_1: m1.rho,
            mu_1: m1.mu,
            c_big_1: m1.c_big,
            c_small_1: m1.c_small,
            d_2: m2.d,
            gamma_2: m2.gamma,
            rho_2: m2.rho,
            mu_2: m2.mu,
            c_big_2: m2.c_big,
            c_small_2: m2.c_small,
            q: spec.act.q,
            beta: spec.act.beta,
            m: spec.model.m,
            sigma0: spec.model.sigma0,
            n: spec.n_train,
            eta: spec.train.eta,
            iterations: spec.train.iterations,
            log_every: spec.train.log_every,
            fresh_test_n: spec.train.fresh_test_n,
            arms: spec.arms.clone(),
            seeds: spec.seeds.clone(),
            output_dir: spec.output_dir.clone(),
            fix_data: spec.fix_data,
            margin: c.margin,
            threshold: c.threshold,
            stuck_factor: c.stuck_factor,
            probe_flag: c.probe_flag,
            uni_ok: c.uni_ok,
            band_slack: c.band_slack,
            majority: c.majority,
        }
    }
}
