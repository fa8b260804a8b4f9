//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::config::{Arm, ExperimentSpec};
use super::sweep::{reaggregate, run_seed, run_sweep, seed_dir, write_atomic, write_json, GapReport, SUMMARY_FILE};
use crate::data::{write_dataset, write_dataset_csv};
use crate::data::SparseCodingModel;
use crate::error::{Error, Result};
use crate::power::{default_grid, lemma_grid_check, DEFAULT_SLACK, DEFAULT_T_MAX};
use crate::rng::substream;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;
pub const EXIT_ASSERT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "modcomp", about = "Modality competition simulation lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment spec file (flat key/value).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory root.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Draw training data from the spec's data seed for every run.
    #[arg(long)]
    fix_data: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a dataset and write it to a file.
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
        /// Sample count; defaults to the spec's training set size.
        #[arg(long)]
        n: Option<usize>,
        /// Write CSV instead of the binary container.
        #[arg(long)]
        csv: bool,
        /// Keep the codes and noise in the binary container.
        #[arg(long)]
        debug: bool,
    },
    /// Train the arms of one seed.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Train only this arm.
        #[arg(long)]
        arm: Option<Arm>,
    },
    /// Train every arm over a range of seeds and write the gap report.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// First seed of the range.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of seeds; defaults to the spec's seed list.
        #[arg(long)]
        seeds: Option<usize>,
        /// Exit 3 when a report check fails.
        #[arg(long)]
        assert: bool,
    },
    /// Run the power recurrence grid.
    PowerCheck {
        #[arg(long, default_value_t = DEFAULT_SLACK)]
        slack: f64,
        #[arg(long, default_value_t = DEFAULT_T_MAX)]
        t_max: usize,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild the gap report of an existing experiment directory.
    Report {
        dir: PathBuf,
        #[arg(long)]
        assert: bool,
    },
}

fn load_spec(path: Option<&Path>) -> Result<ExperimentSpec> {
    match path {
        Some(p) => ExperimentSpec::load(p),
        None => Ok(ExperimentSpec::default()),
    }
}

fn apply_common(spec: &mut ExperimentSpec, common: &Common) {
    if let Some(out) = &common.out {
        spec.output_dir = out.clone();
    }
    if common.fix_data {
        spec.fix_data = true;
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn report_outcome(report: &GapReport, assert: bool) -> Result<i32> {
    for c in &report.checks {
        eprintln!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    print_json(report)?;
    Ok(if assert && !report.all_pass() { EXIT_ASSERT } else { EXIT_OK })
}

fn execute(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Gen { config, seed, out, n, csv, debug } => {
            let mut spec = load_spec(config.as_deref())?;
            spec.validate()?;
            let seed = seed.unwrap_or(spec.data.seed);
            spec.data.seed = seed;
            let model = SparseCodingModel::new(spec.data.clone(), &mut substream(seed, "dictionary"))?;
            let ds = model.sample_dataset(n.unwrap_or(spec.n_train), &mut substream(seed, "train-data"))?;
            write_atomic(&out, |w| if csv { write_dataset_csv(w, &ds) } else { write_dataset(w, &ds, debug) })?;
            eprintln!("wrote {} samples to {}", ds.n(), out.display());
            Ok(EXIT_OK)
        }
        Command::Train { common, seed, arm } => {
            let mut spec = load_spec(common.config.as_deref())?;
            apply_common(&mut spec, &common);
            if let Some(arm) = arm {
                spec.arms = vec![arm];
            }
            spec.seeds = vec![seed];
            spec.validate()?;
            let summary = run_seed(&spec, seed, &spec.arms, true)?;
            eprintln!("wrote {}", seed_dir(&spec, seed).join(SUMMARY_FILE).display());
            print_json(&summary)?;
            Ok(EXIT_OK)
        }
        Command::Sweep { common, seed, seeds, assert } => {
            let mut spec = load_spec(common.config.as_deref())?;
            apply_common(&mut spec, &common);
            if let Some(count) = seeds {
                spec.seeds = (seed..seed + count as u64).collect();
            }
            let report = run_sweep(&spec)?;
            report_outcome(&report, assert)
        }
        Command::PowerCheck { slack, t_max, out } => {
            let report = lemma_grid_check(&default_grid(), slack, t_max)?;
            if let Some(path) = out {
                write_json(&path, &report)?;
            }
            print_json(&report)?;
            Ok(if report.all_pass { EXIT_OK } else { EXIT_ASSERT })
        }
        Command::Report { dir, assert } => {
            let report = reaggregate(&dir)?;
            report_outcome(&report, assert)
        }
    }
}

/// Maps an error to the process exit status.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Divergence { .. } => EXIT_DIVERGED,
        _ => EXIT_CONFIG,
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit status.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
