//! Single-seed runs of each arm.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{Arm, ExperimentSpec};
use crate::data::{Dataset, SparseCodingModel};
use crate::diag::{observed_winner, predict_winner, CompetitionReport, CompetitionSnapshot};
use crate::error::Result;
use crate::net::{init_uni_weights, init_weights, UniWeights, Weights};
use crate::rng::substream;
use crate::train::{classification_error, probe_logits, train, ErrorEstimate, MetricRecord, Network};
use crate::Modality;

/// Everything a seed's arms share: the generative model, its training set
/// and a held-out set for test error.
pub struct SeedContext {
    pub seed: u64,
    pub model: SparseCodingModel,
    pub train: Dataset,
    pub test: Dataset,
}

impl SeedContext {
    pub fn build(spec: &ExperimentSpec, seed: u64) -> Result<Self> {
        let data_seed = if spec.fix_data { spec.data.seed } else { seed };
        let mut cfg = spec.data.clone();
        cfg.seed = data_seed;
        let model = SparseCodingModel::new(cfg, &mut substream(data_seed, "dictionary"))?;
        let train = model.sample_dataset(spec.n_train, &mut substream(data_seed, "train-data"))?;
        let test = model
            .sample_dataset(spec.train.fresh_test_n, &mut substream(seed, "test-data"))?
            .without_provenance();
        Ok(SeedContext { seed, model, train, test })
    }
}

/// Final numbers for one arm of one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: Arm,
    pub train_error: f64,
    pub train_loss: f64,
    /// First logged step with zero training error.
    pub zero_train_error_at: Option<usize>,
    pub test: ErrorEstimate,
    /// Probe-network test errors; joint arm only.
    pub probe: Option<[ErrorEstimate; 2]>,
    pub wall_seconds: f64,
}

pub struct UniRun {
    pub weights: UniWeights,
    pub records: Vec<MetricRecord>,
    pub summary: ArmSummary,
}

pub struct JointRun {
    pub weights: Weights,
    pub records: Vec<MetricRecord>,
    pub trajectory: Vec<CompetitionSnapshot>,
    pub report: CompetitionReport,
    pub summary: ArmSummary,
}

fn error_on<N: Network>(net: &N, data: &Dataset, spec: &ExperimentSpec) -> Result<f64> {
    classification_error(net.logits(data, &spec.act)?.view(), data.labels())
}

fn summarize(
    arm: Arm,
    records: &[MetricRecord],
    test: ErrorEstimate,
    probe: Option<[ErrorEstimate; 2]>,
    started: Instant,
) -> ArmSummary {
    let last = records.last().expect("training always logs a final record");
    ArmSummary {
        arm,
        train_error: last.train_error,
        train_loss: last.train_loss,
        zero_train_error_at: records.iter().find(|r| r.train_error == 0.0).map(|r| r.t),
        test,
        probe,
        wall_seconds: started.elapsed().as_secs_f64(),
    }
}

pub fn run_unimodal(spec: &ExperimentSpec, ctx: &SeedContext, r: Modality) -> Result<UniRun> {
    let started = Instant::now();
    let arm = Arm::uni(r);
    let k = spec.data.k;
    let init = init_uni_weights(
        r,
        k,
        spec.model.m,
        spec.data.modality(r).d,
        spec.model.sigma0,
        &mut substream(ctx.seed, &format!("init/{arm}")),
    )?;
    let dict = &ctx.model.dicts[r.index()];
    let (weights, records) = train(init, &ctx.train, &spec.train, &spec.act, |_, net: &UniWeights, rec| {
        rec.test_error = Some(error_on(net, &ctx.test, spec)?);
        rec.gamma = (0..k)
            .map(|j| {
                let mut g = [None, None];
                g[r.index()] = Some(crate::diag::encoder_gamma(&net.encoder, dict, j));
                g
            })
            .collect();
        rec.phi = (0..k)
            .map(|j| {
                let mut g = [None, None];
                g[r.index()] = Some(crate::diag::encoder_phi(&net.encoder, dict, j));
                g
            })
            .collect();
        Ok(())
    })?;
    let test = ErrorEstimate::from_error(error_on(&weights, &ctx.test, spec)?, ctx.test.n());
    let summary = summarize(arm, &records, test, None, started);
    Ok(UniRun { weights, records, summary })
}

pub fn run_joint(spec: &ExperimentSpec, ctx: &SeedContext) -> Result<JointRun> {
    let started = Instant::now();
    let init = init_weights(
        spec.data.k,
        spec.model.m,
        spec.data.dims(),
        spec.model.sigma0,
        &mut substream(ctx.seed, &format!("init/{}", Arm::Joint)),
    )?;
    let predicted = predict_winner(&init, &ctx.train, &ctx.model.dicts, &spec.act, spec.calibration.margin)?;
    let mut trajectory = Vec::new();
    let probe_error = |w: &Weights, r: Modality| -> Result<f64> {
        classification_error(probe_logits(w, r, &ctx.test, &spec.act)?.view(), ctx.test.labels())
    };
    let (weights, records) = train(init, &ctx.train, &spec.train, &spec.act, |t, w: &Weights, rec| {
        rec.test_error = Some(error_on(w, &ctx.test, spec)?);
        rec.probe_error = [Some(probe_error(w, Modality::First)?), Some(probe_error(w, Modality::Second)?)];
        let snap = CompetitionSnapshot::capture(t, w, &ctx.model.dicts);
        rec.gamma = snap.gamma.iter().map(|g| [Some(g[0]), Some(g[1])]).collect();
        rec.phi = snap.phi.iter().map(|g| [Some(g[0]), Some(g[1])]).collect();
        trajectory.push(snap);
        Ok(())
    })?;
    let observed = observed_winner(&trajectory, spec.threshold(), spec.stuck_ceiling())?;
    let n = ctx.test.n();
    let probe = [
        ErrorEstimate::from_error(probe_error(&weights, Modality::First)?, n),
        ErrorEstimate::from_error(probe_error(&weights, Modality::Second)?, n),
    ];
    let report = CompetitionReport::new(
        ctx.seed,
        predicted,
        observed,
        [probe[0].error, probe[1].error],
        spec.threshold(),
        spec.stuck_ceiling(),
        spec.echo(),
    );
    let test = ErrorEstimate::from_error(error_on(&weights, &ctx.test, spec)?, n);
    let summary = summarize(Arm::Joint, &records, test, Some(probe), started);
    Ok(JointRun { weights, records, trajectory, report, summary })
}
