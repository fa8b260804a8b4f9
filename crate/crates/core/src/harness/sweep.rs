//! Multi-seed sweeps, their on-disk layout and the gap report.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{Arm, ExperimentSpec};
use super::run::{run_joint, run_unimodal, ArmSummary, SeedContext};
use crate::diag::{estimate_p, CompetitionReport, PHat};
use crate::error::{arg_err, Error, Result};
use crate::net::{write_checkpoint, Checkpoint, NetworkWeights};
use crate::train::{write_metrics_csv, MetricRecord};
use crate::Modality;

pub const MIN_SWEEP_SEEDS: usize = 10;
pub const SUMMARY_FILE: &str = "summary.json";
pub const COMPETITION_FILE: &str = "competition.json";
pub const GAP_REPORT_FILE: &str = "gap_report.json";
pub const SPEC_FILE: &str = "spec.toml";

/// What one seed leaves behind, besides its metric streams and weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub arms: Vec<ArmSummary>,
    pub competition: Option<CompetitionReport>,
}

impl SeedSummary {
    pub fn arm(&self, arm: Arm) -> Option<&ArmSummary> {
        self.arms.iter().find(|a| a.arm == arm)
    }

    pub fn uni_error(&self, r: Modality) -> Option<f64> {
        self.arm(Arm::uni(r)).map(|a| a.test.error)
    }

    pub fn joint_error(&self) -> Option<f64> {
        self.arm(Arm::Joint).map(|a| a.test.error)
    }

    pub fn probe_errors(&self) -> Option<[f64; 2]> {
        self.arm(Arm::Joint).and_then(|a| a.probe).map(|p| [p[0].error, p[1].error])
    }
}

pub fn experiment_dir(spec: &ExperimentSpec) -> PathBuf {
    spec.output_dir.join(&spec.name)
}

pub fn seed_dir(spec: &ExperimentSpec, seed: u64) -> PathBuf {
    experiment_dir(spec).join(seed.to_string())
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> Result<()>,
{
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut out = BufWriter::new(fs::File::create(&tmp)?);
    fill(&mut out)?;
    out.flush()?;
    drop(out);
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

fn write_arm(
    spec: &ExperimentSpec,
    seed: u64,
    arm: Arm,
    records: &[MetricRecord],
    weights: NetworkWeights,
) -> Result<()> {
    let dir = seed_dir(spec, seed);
    write_atomic(&dir.join(format!("{arm}.csv")), |w| write_metrics_csv(w, arm.tag(), spec.data.k, records))?;
    let ck = Checkpoint {
        act: spec.act,
        sigma0: spec.model.sigma0,
        iteration: spec.train.iterations as u64,
        weights,
    };
    write_atomic(&dir.join(format!("{arm}.weights")), |w| write_checkpoint(w, &ck))
}

/// Trains `arms` for one seed. With `write` set, every artifact goes under
/// the seed's directory.
pub fn run_seed(spec: &ExperimentSpec, seed: u64, arms: &[Arm], write: bool) -> Result<SeedSummary> {
    let ctx = SeedContext::build(spec, seed)?;
    let mut summaries = Vec::new();
    let mut competition = None;
    for &arm in arms {
        match arm {
            Arm::Uni1 | Arm::Uni2 => {
                let r = if arm == Arm::Uni1 { Modality::First } else { Modality::Second };
                let run = run_unimodal(spec, &ctx, r)?;
                if write {
                    write_arm(spec, seed, arm, &run.records, NetworkWeights::Uni(run.weights))?;
                }
                summaries.push(run.summary);
            }
            Arm::Joint => {
                let run = run_joint(spec, &ctx)?;
                if write {
                    write_arm(spec, seed, arm, &run.records, NetworkWeights::Multi(run.weights))?;
                    write_json(&seed_dir(spec, seed).join(COMPETITION_FILE), &run.report)?;
                }
                summaries.push(run.summary);
                competition = Some(run.report);
            }
        }
    }
    let summary = SeedSummary { seed, arms: summaries, competition };
    if write {
        write_json(&seed_dir(spec, seed).join(SUMMARY_FILE), &summary)?;
    }
    Ok(summary)
}

/// Runs every seed of `spec`, spreading seeds over the available cores.
/// Results come back in seed order.
pub fn run_seeds(spec: &ExperimentSpec, write: bool) -> Result<Vec<SeedSummary>> {
    spec.validate()?;
    if write {
        write_atomic(&experiment_dir(spec).join(SPEC_FILE), |w| {
            w.write_all(spec.to_file_string().as_bytes())?;
            Ok(())
        })?;
    }
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(spec.seeds.len());
    if workers <= 1 {
        return spec.seeds.iter().map(|&s| run_seed(spec, s, &spec.arms, write)).collect();
    }
    let chunks: Vec<Vec<(usize, u64)>> = (0..workers)
        .map(|w| spec.seeds.iter().copied().enumerate().skip(w).step_by(workers).collect())
        .collect();
    let mut slots: Vec<Option<Result<SeedSummary>>> = (0..spec.seeds.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = chunks
            .iter()
            .map(|chunk| {
                scope.spawn(move || {
                    chunk
                        .iter()
                        .map(|&(i, s)| (i, run_seed(spec, s, &spec.arms, write)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, res) in h.join().expect("seed worker panicked") {
                slots[i] = Some(res);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every seed ran")).collect()
}

/// Mean and standard error of the mean over seeds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedStat {
    pub mean: f64,
    pub std_err: f64,
    pub n: usize,
}

impl SeedStat {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std_err = if n < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        Some(SeedStat { mean, std_err, n })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub seed: u64,
    pub e_uni: [Option<f64>; 2],
    pub e_joint: Option<f64>,
    pub probe: Option<[f64; 2]>,
    pub p_hat: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub name: String,
    pub rows: Vec<GapRow>,
    pub e_uni: [Option<SeedStat>; 2],
    pub e_joint: Option<SeedStat>,
    pub probe: [Option<SeedStat>; 2],
    /// Seed-paired `e_joint - min_r e_uni_r`, the arm with the lower mean
    /// taken as the best.
    pub gap: Option<SeedStat>,
    pub p_hat: Option<PHat>,
    pub band: Option<[f64; 2]>,
    pub band_slack: f64,
    /// Seeds whose joint arm shows a failed probe next to a good uni arm.
    pub probe_failure_rate: Option<f64>,
    pub checks: Vec<Check>,
    pub config: serde_json::Value,
}

impl GapReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Seed shows a failed probe on some modality whose uni arm did well.
pub fn probe_failure(spec: &ExperimentSpec, s: &SeedSummary) -> Option<bool> {
    let probe = s.probe_errors()?;
    let c = &spec.calibration;
    let mut seen = false;
    for r in Modality::BOTH {
        let uni = s.uni_error(r)?;
        seen |= probe[r.index()] >= c.probe_flag && uni <= c.uni_ok;
    }
    Some(seen)
}

pub fn aggregate(spec: &ExperimentSpec, seeds: &[SeedSummary]) -> Result<GapReport> {
    let rows: Vec<GapRow> = seeds
        .iter()
        .map(|s| GapRow {
            seed: s.seed,
            e_uni: [s.uni_error(Modality::First), s.uni_error(Modality::Second)],
            e_joint: s.joint_error(),
            probe: s.probe_errors(),
            p_hat: s.competition.as_ref().map(|c| c.p_hat.p),
        })
        .collect();
    let stat = |f: &dyn Fn(&GapRow) -> Option<f64>| -> Option<SeedStat> {
        let v: Option<Vec<f64>> = rows.iter().map(f).collect();
        v.and_then(|v| SeedStat::of(&v))
    };
    let e_uni = [stat(&|r| r.e_uni[0]), stat(&|r| r.e_uni[1])];
    let e_joint = stat(&|r| r.e_joint);
    let probe = [stat(&|r| r.probe.map(|p| p[0])), stat(&|r| r.probe.map(|p| p[1]))];
    let best = match e_uni {
        [Some(a), Some(b)] => Some(if a.mean <= b.mean { 0 } else { 1 }),
        _ => None,
    };
    let gap = best.and_then(|b| stat(&|r| Some(r.e_joint? - r.e_uni[b]?)));
    let reports: Vec<CompetitionReport> = seeds.iter().filter_map(|s| s.competition.clone()).collect();
    let p_hat = if reports.is_empty() { None } else { Some(estimate_p(&reports)?) };
    let delta = spec.calibration.band_slack;
    let band = p_hat.as_ref().map(|ph| {
        let mu = [spec.data.modalities[0].mu, spec.data.modalities[1].mu];
        [
            (ph.p[0] - delta) * mu[0] + (ph.p[1] - delta) * mu[1],
            (ph.p[0] + delta) * mu[0] + (ph.p[1] + delta) * mu[1],
        ]
    });
    let failures: Option<Vec<bool>> = seeds.iter().map(|s| probe_failure(spec, s)).collect();
    let probe_failure_rate = failures
        .filter(|f| !f.is_empty())
        .map(|f| f.iter().filter(|&&x| x).count() as f64 / f.len() as f64);

    let mut checks = Vec::new();
    if let (Some(g), Some(b)) = (gap, best) {
        checks.push(Check {
            name: "joint_not_below_best_uni".into(),
            pass: g.mean >= -g.std_err,
            detail: format!(
                "mean(e_joint - e_uni_{}) = {:.4}, one standard error = {:.4}",
                b + 1,
                g.mean,
                g.std_err
            ),
        });
    }
    if let (Some(ej), Some(band)) = (e_joint, band) {
        checks.push(Check {
            name: "joint_within_band".into(),
            pass: band[0] <= ej.mean && ej.mean <= band[1],
            detail: format!("e_joint = {:.4}, band = [{:.4}, {:.4}]", ej.mean, band[0], band[1]),
        });
    }
    if let Some(rate) = probe_failure_rate {
        checks.push(Check {
            name: "probe_failure_majority".into(),
            pass: rate > spec.calibration.majority,
            detail: format!(
                "{:.3} of seeds have a probe error >= {} next to a uni arm <= {}",
                rate, spec.calibration.probe_flag, spec.calibration.uni_ok
            ),
        });
    }
    Ok(GapReport {
        name: spec.name.clone(),
        rows,
        e_uni,
        e_joint,
        probe,
        gap,
        p_hat,
        band,
        band_slack: delta,
        probe_failure_rate,
        checks,
        config: spec.echo(),
    })
}

/// Full sweep: every arm, at least [`MIN_SWEEP_SEEDS`] seeds. Writes the
/// per-seed artifacts and the gap report under the experiment directory.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<GapReport> {
    spec.validate()?;
    if spec.seeds.len() < MIN_SWEEP_SEEDS {
        return Err(arg_err(format!(
            "a sweep needs at least {MIN_SWEEP_SEEDS} seeds, got {}",
            spec.seeds.len()
        )));
    }
    if Arm::ALL.iter().any(|a| !spec.arms.contains(a)) {
        return Err(arg_err("a sweep needs all three arms"));
    }
    let seeds = run_seeds(spec, true)?;
    let report = aggregate(spec, &seeds)?;
    write_json(&experiment_dir(spec).join(GAP_REPORT_FILE), &report)?;
    Ok(report)
}

/// Rebuilds the gap report from an existing experiment directory.
pub fn reaggregate(dir: &Path) -> Result<GapReport> {
    let spec = ExperimentSpec::load(&dir.join(SPEC_FILE))?;
    let seeds = spec
        .seeds
        .iter()
        .map(|s| {
            let path = dir.join(s.to_string()).join(SUMMARY_FILE);
            let text = fs::read_to_string(&path)
                .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
            Ok(serde_json::from_str(&text)?)
        })
        .collect::<Result<Vec<SeedSummary>>>()?;
    let report = aggregate(&spec, &seeds)?;
    write_json(&dir.join(GAP_REPORT_FILE), &report)?;
    Ok(report)
}
