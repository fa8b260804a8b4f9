//! Coupled power recurrences.
//!
//! A leader `x_{t+1} = x_t + eta A_t x_t^(q-1)` and a laggard
//! `y_{t+1} = y_t + eta M A_t y_t^(q-1)`. When the leader starts ahead by
//! `x_0 >= y_0 M^(1/(q-2)) (1 + eps)`, it reaches a constant level `C`
//! while the laggard is still of the order of `x_0`. Iterating the
//! equalities is the extremal case of the inequality form: fastest leader,
//! slowest possible bound on the laggard.

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, config_err, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant(f64),
    /// Per-step coefficients; the last one repeats once exhausted.
    Sequence(Vec<f64>),
}

impl Schedule {
    fn at(&self, t: usize) -> f64 {
        match self {
            Schedule::Constant(a) => *a,
            Schedule::Sequence(v) => v[t.min(v.len() - 1)],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerPairConfig {
    pub x0: f64,
    pub y0: f64,
    pub q: u32,
    pub eta: f64,
    pub a: Schedule,
    /// Laggard ratio: `B_t = M A_t`.
    pub m_ratio: f64,
    /// Crossing target for the leader.
    pub target: f64,
}

impl PowerPairConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.x0 > 0.0 && self.y0 > 0.0) {
            return Err(config_err("initial values must be positive"));
        }
        if !(self.m_ratio > 0.0) {
            return Err(config_err("laggard ratio must be positive"));
        }
        if !(self.target >= self.x0 && self.target <= 1.0) {
            return Err(config_err(format!(
                "target must lie in [x0, 1], got {} with x0 = {}",
                self.target, self.x0
            )));
        }
        if self.q < 3 {
            return Err(config_err("q must be >= 3"));
        }
        if !(self.eta >= 0.0) {
            return Err(config_err("eta must be non-negative"));
        }
        if let Schedule::Sequence(v) = &self.a {
            if v.is_empty() {
                return Err(config_err("empty coefficient schedule"));
            }
        }
        Ok(())
    }

    /// Smallest lead the lemma asks for: `y0 M^(1/(q-2))`.
    pub fn required_lead(&self) -> f64 {
        self.y0 * self.m_ratio.powf(1.0 / (self.q as f64 - 2.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerOutcome {
    /// First `t` with `x_t >= target`.
    pub crossing: Option<usize>,
    /// `y` at the crossing, or at `t_max` if there was none.
    pub laggard: f64,
    pub leader: f64,
}

pub fn simulate_power_pair(cfg: &PowerPairConfig, t_max: usize) -> Result<PowerOutcome> {
    if t_max == 0 {
        return Err(arg_err("t_max must be >= 1"));
    }
    cfg.validate()?;
    let e = cfg.q as i32 - 1;
    let (mut x, mut y) = (cfg.x0, cfg.y0);
    for t in 0..=t_max {
        if x >= cfg.target {
            return Ok(PowerOutcome {
                crossing: Some(t),
                laggard: y,
                leader: x,
            });
        }
        if t == t_max {
            break;
        }
        let a = cfg.a.at(t);
        x += cfg.eta * a * x.powi(e);
        y += cfg.eta * cfg.m_ratio * a * y.powi(e);
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::Divergence {
                iteration: t + 1,
                value: if x.is_finite() { y } else { x },
            });
        }
    }
    Ok(PowerOutcome {
        crossing: None,
        laggard: y,
        leader: x,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub config: PowerPairConfig,
    /// Declared lead: `x0 >= y0 M^(1/(q-2)) (1 + epsilon)`.
    pub epsilon: f64,
}

impl GridPoint {
    pub fn satisfies_precondition(&self) -> bool {
        self.epsilon > 0.0 && self.config.x0 >= self.config.required_lead() * (1.0 + self.epsilon) * (1.0 - 1e-12)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridStatus {
    Pass,
    Fail,
    /// The lead precondition does not hold; not simulated.
    Rejected,
    /// The leader never reached the target within `t_max`.
    NoCrossing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub point: GridPoint,
    pub crossing: Option<usize>,
    pub laggard: Option<f64>,
    /// `laggard / (x0 ln(1/x0))`.
    pub ratio: Option<f64>,
    pub bound: f64,
    pub status: GridStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub slack: f64,
    pub t_max: usize,
    pub entries: Vec<GridEntry>,
    pub max_ratio: f64,
    pub all_pass: bool,
    /// How the soft-O bound is read.
    pub bound_form: String,
}

impl GridReport {
    pub fn failures(&self) -> impl Iterator<Item = &GridEntry> {
        self.entries.iter().filter(|e| e.status != GridStatus::Pass)
    }
}

/// Checks `y_{T_x} <= slack * x0 * ln(1/x0)` over a grid.
pub fn lemma_grid_check(grid: &[GridPoint], slack: f64, t_max: usize) -> Result<GridReport> {
    if !(slack > 0.0) {
        return Err(arg_err("slack must be positive"));
    }
    let mut entries = Vec::with_capacity(grid.len());
    let mut max_ratio = 0.0f64;
    for point in grid {
        let x0 = point.config.x0;
        let scale = x0 * (1.0 / x0).ln();
        let bound = slack * scale;
        if !point.satisfies_precondition() {
            entries.push(GridEntry {
                point: point.clone(),
                crossing: None,
                laggard: None,
                ratio: None,
                bound,
                status: GridStatus::Rejected,
            });
            continue;
        }
        let out = simulate_power_pair(&point.config, t_max)?;
        let (status, ratio) = match out.crossing {
            None => (GridStatus::NoCrossing, None),
            Some(_) => {
                let ratio = out.laggard / scale;
                max_ratio = max_ratio.max(ratio);
                let ok = out.laggard <= bound;
                (if ok { GridStatus::Pass } else { GridStatus::Fail }, Some(ratio))
            }
        };
        entries.push(GridEntry {
            point: point.clone(),
            crossing: out.crossing,
            laggard: out.crossing.map(|_| out.laggard),
            ratio,
            bound,
            status,
        });
    }
    let all_pass = entries.iter().all(|e| e.status == GridStatus::Pass);
    Ok(GridReport {
        slack,
        t_max,
        entries,
        max_ratio,
        all_pass,
        bound_form: "y_Tx <= slack * x0 * ln(1/x0)".into(),
    })
}

/// Relative growth of the leader per step at `x0`; fixes `eta` per point so
/// every grid point needs about the same number of steps.
pub const DEFAULT_STEP_RESOLUTION: f64 = 1e-3;
pub const DEFAULT_TARGET: f64 = 0.5;
pub const DEFAULT_SLACK: f64 = 20.0;
pub const DEFAULT_T_MAX: usize = 10_000_000;

/// q in {3, 4}, M in {0.5, 1, 2}, eps in {0.05, 0.2}, x0 in {1e-2, 1e-3},
/// constant A = 1, laggard started at the tightest admissible `y0`.
pub fn default_grid() -> Vec<GridPoint> {
    let mut grid = Vec::new();
    for q in [3u32, 4] {
        for m_ratio in [0.5f64, 1.0, 2.0] {
            for epsilon in [0.05, 0.2] {
                for x0 in [1e-2, 1e-3] {
                    let lead = m_ratio.powf(1.0 / (q as f64 - 2.0)) * (1.0 + epsilon);
                    grid.push(GridPoint {
                        config: PowerPairConfig {
                            x0,
                            y0: x0 / lead,
                            q,
                            eta: DEFAULT_STEP_RESOLUTION / x0.powi(q as i32 - 2),
                            a: Schedule::Constant(1.0),
                            m_ratio,
                            target: DEFAULT_TARGET,
                        },
                        epsilon,
                    });
                }
            }
        }
    }
    grid
}
