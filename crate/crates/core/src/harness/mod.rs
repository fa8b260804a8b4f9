//! Experiment orchestration: specs, per-seed runs, sweeps and the CLI.

pub mod cli;
pub mod config;
pub mod run;
pub mod sweep;

pub use cli::cli_main;
pub use config::{Arm, Calibration, ExperimentSpec, ModelConfig, SpecFile};
pub use run::{run_joint, run_unimodal, ArmSummary, JointRun, SeedContext, UniRun};
pub use sweep::{aggregate, reaggregate, run_seed, run_seeds, run_sweep, GapReport, SeedSummary};
