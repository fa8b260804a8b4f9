//! Feature-learning diagnostics for the late-fusion network.
//!
//! * `Gamma_{j,r} = max_l [<w_{j,l,r}, M^r_j>]^+`: how far modality `r`'s
//!   best class-`j` neuron has moved toward the true feature.
//! * `Phi_{j,r} = sum_l [<w_{j,l,r}, M^r_j>]^+`.
//! * `d_{j,r} = (1 / (n beta^(q-1))) sum over both-sufficient samples of
//!   class j of (z^r_j)^q`: signal strength of class `j` in modality `r`.
//!
//! The predicted winner of class `j` is the modality whose score
//! `Gamma^(0)_{j,r} * d_{j,r}^(1/(q-2))` beats the other by a margin. The
//! observed winner is read off a Gamma trajectory: the modality that
//! crosses a threshold first while the other is still near initialization.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Dictionary};
use crate::error::{arg_err, Error, Result};
use crate::net::{ActParams, Encoder, Weights};
use crate::Modality;

/// Inner products `<w_{j,l}, M_j>` for `l = 0..m`.
pub fn alignments(enc: &Encoder, dict: &Dictionary, j: usize) -> Vec<f64> {
    let col = dict.column(j);
    (0..enc.m()).map(|l| enc.neuron(j, l).dot(&col)).collect()
}

pub fn encoder_gamma(enc: &Encoder, dict: &Dictionary, j: usize) -> f64 {
    alignments(enc, dict, j).into_iter().fold(0.0, |a, v| a.max(v))
}

pub fn encoder_phi(enc: &Encoder, dict: &Dictionary, j: usize) -> f64 {
    alignments(enc, dict, j).into_iter().map(|v| v.max(0.0)).sum()
}

pub fn gamma_stat(w: &Weights, dicts: &[Dictionary; 2], j: usize, r: Modality) -> f64 {
    encoder_gamma(w.encoder(r), &dicts[r.index()], j)
}

pub fn phi_stat(w: &Weights, dicts: &[Dictionary; 2], j: usize, r: Modality) -> f64 {
    encoder_phi(w.encoder(r), &dicts[r.index()], j)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompetitionSnapshot {
    pub t: usize,
    /// `gamma[j][r]`
    pub gamma: Vec<[f64; 2]>,
    pub phi: Vec<[f64; 2]>,
}

impl CompetitionSnapshot {
    pub fn capture(t: usize, w: &Weights, dicts: &[Dictionary; 2]) -> Self {
        let k = w.k();
        let mut gamma = Vec::with_capacity(k);
        let mut phi = Vec::with_capacity(k);
        for j in 0..k {
            let mut g = [0.0; 2];
            let mut f = [0.0; 2];
            for r in Modality::BOTH {
                let a = alignments(w.encoder(r), &dicts[r.index()], j);
                g[r.index()] = a.iter().fold(0.0f64, |acc, v| acc.max(*v));
                f[r.index()] = a.iter().map(|v| v.max(0.0)).sum();
            }
            gamma.push(g);
            phi.push(f);
        }
        CompetitionSnapshot { t, gamma, phi }
    }
}

/// Target coefficient `z^r_j` of sample `i`, from stored codes or, for
/// noiseless data, by projection.
fn target_coefficient(ds: &Dataset, dicts: &[Dictionary; 2], i: usize, j: usize, r: Modality) -> Result<f64> {
    if let Some(p) = ds.provenance() {
        return Ok(p.z[r.index()][[i, j]]);
    }
    if ds.config.is_noiseless() {
        return Ok(ds.inputs(r).row(i).dot(&dicts[r.index()].column(j)));
    }
    Err(Error::DiagnosticUnavailable(
        "dataset carries no sparse codes and its inputs are noisy".into(),
    ))
}

pub fn d_stat(ds: &Dataset, dicts: &[Dictionary; 2], j: usize, r: Modality, p: &ActParams) -> Result<f64> {
    if j >= ds.config.k {
        return Err(arg_err(format!("class {j} out of range")));
    }
    let mut total = 0.0;
    for (i, (&y, suff)) in ds.labels().iter().zip(ds.sufficiency()).enumerate() {
        if y == j && suff[0] && suff[1] {
            total += target_coefficient(ds, dicts, i, j, r)?.powi(p.q as i32);
        }
    }
    // an empty class still needs the availability check
    if ds.provenance().is_none() && !ds.config.is_noiseless() {
        return Err(Error::DiagnosticUnavailable(
            "dataset carries no sparse codes and its inputs are noisy".into(),
        ));
    }
    Ok(total / (ds.n() as f64 * p.beta.powi(p.q as i32 - 1)))
}

/// `d_{j,r}` for every class, `[j][r]`.
pub fn d_stats(ds: &Dataset, dicts: &[Dictionary; 2], p: &ActParams) -> Result<Vec<[f64; 2]>> {
    (0..ds.config.k)
        .map(|j| Ok([d_stat(ds, dicts, j, Modality::First, p)?, d_stat(ds, dicts, j, Modality::Second, p)?]))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Undecided {
    /// Neither score beats the other by the margin.
    MarginNotMet,
    /// Both signal statistics are zero.
    NoSignal,
    /// No modality crossed the threshold during the run.
    NeverCrossed,
    /// Both modalities crossed in the same snapshot.
    SimultaneousCrossing,
    /// The first crosser's rival was already above the stuck ceiling.
    LaggardNotStuck,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassPrediction {
    pub winner: Option<Modality>,
    pub scores: [f64; 2],
    pub gamma0: [f64; 2],
    pub d: [f64; 2],
    pub reason: Option<Undecided>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WinnerPrediction {
    pub margin: f64,
    pub classes: Vec<ClassPrediction>,
}

/// Declares `r` the winner iff its score is positive and at least `margin`
/// times the other's.
pub fn predict_class(gamma0: [f64; 2], d: [f64; 2], q: u32, margin: f64) -> ClassPrediction {
    let exponent = 1.0 / (q as f64 - 2.0);
    let scores = [gamma0[0] * d[0].powf(exponent), gamma0[1] * d[1].powf(exponent)];
    let mut pred = ClassPrediction {
        winner: None,
        scores,
        gamma0,
        d,
        reason: None,
    };
    if d[0] == 0.0 && d[1] == 0.0 {
        pred.reason = Some(Undecided::NoSignal);
        return pred;
    }
    for r in Modality::BOTH {
        let (mine, theirs) = (scores[r.index()], scores[r.other().index()]);
        if mine > 0.0 && mine >= theirs * margin {
            pred.winner = Some(r);
            return pred;
        }
    }
    pred.reason = Some(Undecided::MarginNotMet);
    pred
}

pub fn predict_winner(
    w0: &Weights,
    ds: &Dataset,
    dicts: &[Dictionary; 2],
    p: &ActParams,
    margin: f64,
) -> Result<WinnerPrediction> {
    if !(margin > 1.0) {
        return Err(arg_err(format!("margin must exceed 1, got {margin}")));
    }
    p.validate()?;
    let d = d_stats(ds, dicts, p)?;
    let snap = CompetitionSnapshot::capture(0, w0, dicts);
    let classes = (0..w0.k())
        .map(|j| predict_class(snap.gamma[j], d[j], p.q, margin))
        .collect();
    Ok(WinnerPrediction { margin, classes })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedOutcome {
    pub winner: Option<Modality>,
    /// The modality that alone crossed first, whether or not its rival was
    /// still stuck.
    pub first_crosser: Option<Modality>,
    pub crossing_t: Option<usize>,
    /// Rival's Gamma at the crossing snapshot.
    pub laggard_gamma: Option<f64>,
    pub reason: Option<Undecided>,
}

/// Per class, the modality whose Gamma first reaches `threshold` while the
/// other's is at most `stuck_ceiling`.
pub fn observed_winner(
    trajectory: &[CompetitionSnapshot],
    threshold: f64,
    stuck_ceiling: f64,
) -> Result<Vec<ObservedOutcome>> {
    if trajectory.is_empty() {
        return Err(arg_err("empty trajectory"));
    }
    if !(stuck_ceiling > 0.0 && threshold > stuck_ceiling) {
        return Err(arg_err(format!(
            "need threshold > stuck_ceiling > 0, got {threshold} and {stuck_ceiling}"
        )));
    }
    let k = trajectory[0].gamma.len();
    if trajectory.iter().any(|s| s.gamma.len() != k) {
        return Err(Error::Shape("snapshots disagree on the class count".into()));
    }
    let outcomes = (0..k)
        .map(|j| {
            let hit = trajectory.iter().find_map(|s| {
                let g = s.gamma[j];
                (g[0] >= threshold || g[1] >= threshold).then_some((s.t, g))
            });
            let Some((t, g)) = hit else {
                return ObservedOutcome {
                    winner: None,
                    first_crosser: None,
                    crossing_t: None,
                    laggard_gamma: None,
                    reason: Some(Undecided::NeverCrossed),
                };
            };
            if g[0] >= threshold && g[1] >= threshold {
                return ObservedOutcome {
                    winner: None,
                    first_crosser: None,
                    crossing_t: Some(t),
                    laggard_gamma: None,
                    reason: Some(Undecided::SimultaneousCrossing),
                };
            }
            let r = if g[0] >= threshold { Modality::First } else { Modality::Second };
            let lag = g[r.other().index()];
            let stuck = lag <= stuck_ceiling;
            ObservedOutcome {
                winner: stuck.then_some(r),
                first_crosser: Some(r),
                crossing_t: Some(t),
                laggard_gamma: Some(lag),
                reason: (!stuck).then_some(Undecided::LaggardNotStuck),
            }
        })
        .collect();
    Ok(outcomes)
}

/// Winning frequencies over (run, class) pairs with a decided winner.
/// `p[r]` is the fraction of those pairs won by modality `r`, i.e. lost by
/// the other modality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PHat {
    pub p: [f64; 2],
    pub decided: usize,
    pub total: usize,
    pub undecided_fraction: f64,
}

impl PHat {
    pub fn from_outcomes<'a, I>(outcomes: I) -> Self
    where
        I: IntoIterator<Item = &'a ObservedOutcome>,
    {
        let mut wins = [0usize; 2];
        let mut total = 0;
        for o in outcomes {
            total += 1;
            if let Some(r) = o.winner {
                wins[r.index()] += 1;
            }
        }
        let decided = wins[0] + wins[1];
        let frac = |c: usize| if decided == 0 { 0.0 } else { c as f64 / decided as f64 };
        PHat {
            p: [frac(wins[0]), frac(wins[1])],
            decided,
            total,
            undecided_fraction: if total == 0 { 0.0 } else { (total - decided) as f64 / total as f64 },
        }
    }

    /// Binomial standard error of `p[r]` over the decided pairs.
    pub fn std_err(&self) -> f64 {
        if self.decided == 0 {
            return 0.0;
        }
        (self.p[0] * self.p[1] / self.decided as f64).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompetitionReport {
    pub seed: u64,
    pub predicted: WinnerPrediction,
    pub observed: Vec<ObservedOutcome>,
    /// Agreement between prediction and observation over classes where
    /// both are decided; `None` when there are no such classes.
    pub match_rate: Option<f64>,
    pub compared: usize,
    pub probe_errors: [f64; 2],
    pub p_hat: PHat,
    pub threshold: f64,
    pub stuck_ceiling: f64,
    pub config: serde_json::Value,
}

impl CompetitionReport {
    pub fn new(
        seed: u64,
        predicted: WinnerPrediction,
        observed: Vec<ObservedOutcome>,
        probe_errors: [f64; 2],
        threshold: f64,
        stuck_ceiling: f64,
        config: serde_json::Value,
    ) -> Self {
        let (matched, compared) = match_counts(&predicted, &observed);
        let p_hat = PHat::from_outcomes(&observed);
        CompetitionReport {
            seed,
            predicted,
            observed,
            match_rate: (compared > 0).then(|| matched as f64 / compared as f64),
            compared,
            probe_errors,
            p_hat,
            threshold,
            stuck_ceiling,
            config,
        }
    }

    pub fn matched(&self) -> usize {
        match_counts(&self.predicted, &self.observed).0
    }
}

fn match_counts(pred: &WinnerPrediction, obs: &[ObservedOutcome]) -> (usize, usize) {
    let mut matched = 0;
    let mut compared = 0;
    for (p, o) in pred.classes.iter().zip(obs) {
        if let (Some(a), Some(b)) = (p.winner, o.winner) {
            compared += 1;
            matched += (a == b) as usize;
        }
    }
    (matched, compared)
}

/// Pooled winning frequencies across runs.
pub fn estimate_p(runs: &[CompetitionReport]) -> Result<PHat> {
    if runs.is_empty() {
        return Err(arg_err("need at least one run"));
    }
    Ok(PHat::from_outcomes(runs.iter().flat_map(|r| r.observed.iter())))
}
