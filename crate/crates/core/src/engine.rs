//! Replication harness.
//!
//! Replicate `r` always uses stream `r` of the master seed, outputs are
//! collected in replicate order and reduced in fixed blocks, so a run is
//! bit-identical whether it executes sequentially or on a thread pool.

use serde::Serialize;
use thiserror::Error;

use crate::formulas::{mean_un_given, FormulaError, SigmaSequence};
use crate::model::{Regime, UrnModel, UrnState};
use crate::rng::RandomStream;
use crate::sim::{check_horizon, validate_checkpoints, walk, SimError};
use crate::stats::{Moments, NeumaierSum};

/// Replicates per reduction block.
pub const BLOCK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
}

/// What each replicate reports at every checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Functional {
    /// `X_n`, `Y_n`, `X_n / tau_n`.
    FinalState,
    /// `Z_n = (U_n - n v1) / r_n` with `r_n = sqrt(n)` (Small),
    /// `sqrt(n ln n)` (Critical) or `n^sigma` (Large); reports both
    /// coordinates and the projections on `(1, -1) / sqrt 2` and
    /// `(1, 1) / sqrt 2`.
    ScaledDeviation,
    /// First coordinate of `M_n` and the quadratic variation scalar.
    MartingalePath,
    /// `W_n = (X_n - n v1_x) / (n^sigma v2_x)`.
    WEstimate,
    /// Normalised quadratic strong law sum and running LIL supremum.
    QslSum,
}

impl Functional {
    pub fn features(self) -> &'static [&'static str] {
        match self {
            Functional::FinalState => &["x", "y", "proportion"],
            Functional::ScaledDeviation => &["z_x", "z_y", "z_minus", "z_plus"],
            Functional::MartingalePath => &["m_x", "qvar"],
            Functional::WEstimate => &["w"],
            Functional::QslSum => &["qsl", "lil_sup"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is enabled and
    /// otherwise runs sequentially.
    #[default]
    Parallel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub model: UrnModel,
    pub horizon: u64,
    pub reps: u64,
    pub master_seed: u64,
    pub functional: Functional,
    /// Sorted step indices in `[1, horizon]`; empty means just the horizon.
    pub checkpoints: Vec<u64>,
}

impl SimConfig {
    pub fn new(model: UrnModel, horizon: u64, reps: u64, master_seed: u64, functional: Functional) -> Self {
        Self {
            model,
            horizon,
            reps,
            master_seed,
            functional,
            checkpoints: Vec::new(),
        }
    }

    pub fn with_checkpoints(mut self, checkpoints: Vec<u64>) -> Self {
        self.checkpoints = checkpoints;
        self
    }

    fn schedule(&self) -> Vec<u64> {
        if self.checkpoints.is_empty() {
            vec![self.horizon]
        } else {
            self.checkpoints.clone()
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.reps == 0 {
            return Err(EngineError::InvalidConfig("reps must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(EngineError::InvalidConfig("horizon must be at least 1".into()));
        }
        check_horizon(&self.model, self.horizon)?;
        validate_checkpoints(&self.checkpoints, self.horizon)?;
        if self.checkpoints.first() == Some(&0) {
            return Err(EngineError::InvalidConfig("checkpoints start at 1".into()));
        }
        Ok(())
    }
}

/// Per-run precomputation shared by all replicates.
struct Plan {
    model: UrnModel,
    functional: Functional,
    checkpoints: Vec<u64>,
    v1: [f64; 2],
    v2: [f64; 2],
    /// Normalisation `r_n` or `n^sigma` at each checkpoint.
    scale: Vec<f64>,
    /// `sigma_n` and `E[U_n]` at each checkpoint.
    sigma_at: Vec<f64>,
    mean_at: Vec<[f64; 2]>,
    /// `m^2 sigma_{k+1}^2` for `k < horizon`.
    qvar_weight: Vec<f64>,
}

impl Plan {
    fn new(cfg: &SimConfig) -> Result<Self, EngineError> {
        cfg.validate()?;
        let model = cfg.model.clone();
        let checkpoints = cfg.schedule();
        let regime = model.regime();
        let needs_vectors = !matches!(cfg.functional, Functional::FinalState);
        let (v1, v2) = match (model.v1_f64(), model.v2_f64()) {
            (Some(v1), Some(v2)) => (v1, v2),
            _ if matches!(cfg.functional, Functional::MartingalePath) => ([0.0; 2], [0.0; 2]),
            _ if needs_vectors => {
                return Err(FormulaError::mismatch("urn deviations", "b + c > 0", &model).into())
            }
            _ => ([0.0; 2], [0.0; 2]),
        };
        let sigma = model.sigma_f64();
        let scale = checkpoints
            .iter()
            .map(|&n| {
                let n = n as f64;
                match (cfg.functional, regime) {
                    (Functional::WEstimate, _) | (Functional::ScaledDeviation, Regime::Large) => {
                        n.powf(sigma)
                    }
                    (Functional::ScaledDeviation, Regime::Critical) => (n * n.ln()).sqrt(),
                    _ => n.sqrt(),
                }
            })
            .collect();
        match (cfg.functional, regime) {
            (Functional::WEstimate, r) if r != Regime::Large => {
                return Err(FormulaError::mismatch("W estimate", "Large", &model).into())
            }
            (Functional::QslSum, r) if r != Regime::Small && r != Regime::Critical => {
                return Err(FormulaError::mismatch("QSL sum", "Small or Critical", &model).into())
            }
            _ => {}
        }
        let mut sigma_at = Vec::new();
        let mut mean_at = Vec::new();
        let mut qvar_weight = Vec::new();
        if cfg.functional == Functional::MartingalePath && regime != Regime::Traditional {
            if model.tau() as i64 + model.m() == 0 {
                return Err(FormulaError::SingularNormalizer.into());
            }
            let m2 = (model.m() * model.m()) as f64;
            let mut seq = SigmaSequence::new(&model);
            let mut next = 0;
            qvar_weight.reserve(cfg.horizon as usize);
            for k in 0..=cfg.horizon {
                if next < checkpoints.len() && checkpoints[next] == k {
                    let s = seq.current();
                    sigma_at.push(s);
                    mean_at.push(mean_un_given(&model, k, 1.0 / s));
                    next += 1;
                }
                if k < cfg.horizon {
                    let s = seq.advance()?;
                    qvar_weight.push(m2 * s * s);
                }
            }
        }
        Ok(Self {
            model,
            functional: cfg.functional,
            checkpoints,
            v1,
            v2,
            scale,
            sigma_at,
            mean_at,
            qvar_weight,
        })
    }

    fn width(&self) -> usize {
        self.functional.features().len()
    }

    fn replicate(&self, master_seed: u64, r: u64) -> Vec<f64> {
        let mut rng = RandomStream::new(master_seed, r);
        let horizon = *self.checkpoints.last().expect("nonempty schedule");
        let mut out = Vec::with_capacity(self.checkpoints.len() * self.width());
        let mut next = 0;
        let model = &self.model;
        match self.functional {
            Functional::FinalState | Functional::ScaledDeviation | Functional::WEstimate => {
                walk(model, horizon, &mut rng, |_, _, after| {
                    if after.n == self.checkpoints[next] {
                        self.emit_state(next, after, &mut out);
                        next += 1;
                    }
                });
            }
            Functional::MartingalePath => {
                let traditional = model.regime() == Regime::Traditional;
                let s2 = (model.s() * model.s()) as f64;
                let mut qvar = NeumaierSum::default();
                walk(model, horizon, &mut rng, |before, _, after| {
                    let p = before.x as f64 / before.total() as f64;
                    if traditional {
                        let t = after.total() as f64;
                        qvar.add(s2 * p * (1.0 - p) / (t * t));
                    } else {
                        qvar.add(self.qvar_weight[before.n as usize] * p * (1.0 - p));
                    }
                    if after.n == self.checkpoints[next] {
                        let m = if traditional {
                            after.proportion()
                        } else {
                            self.sigma_at[next] * (after.x as f64 - self.mean_at[next][0])
                        };
                        out.push(m);
                        out.push(qvar.sum());
                        next += 1;
                    }
                });
            }
            Functional::QslSum => {
                let critical = model.regime() == Regime::Critical;
                let mut sum = NeumaierSum::default();
                let mut sup: f64 = 0.0;
                walk(model, horizon, &mut rng, |_, _, after| {
                    let k = after.n as f64;
                    let dx = after.x as f64 - k * self.v1[0];
                    let dy = after.y as f64 - k * self.v1[1];
                    let norm2 = dx * dx + dy * dy;
                    if critical {
                        if after.n >= 2 {
                            let w = k * k.ln();
                            sum.add(norm2 / (w * w));
                        }
                        if after.n >= 16 {
                            sup = sup.max(norm2 / (2.0 * k * k.ln() * k.ln().ln().ln()));
                        }
                    } else {
                        sum.add(norm2 / (k * k));
                        if after.n >= 3 {
                            sup = sup.max(norm2 / (2.0 * k * k.ln().ln()));
                        }
                    }
                    if after.n == self.checkpoints[next] {
                        let denom = if critical { k.ln().ln() } else { k.ln() };
                        out.push(sum.sum() / denom);
                        out.push(sup);
                        next += 1;
                    }
                });
            }
        }
        out
    }

    fn emit_state(&self, i: usize, st: &UrnState, out: &mut Vec<f64>) {
        let n = st.n as f64;
        match self.functional {
            Functional::FinalState => {
                out.extend([st.x as f64, st.y as f64, st.proportion()]);
            }
            Functional::ScaledDeviation => {
                // exact integer offsets keep the (1, 1) projection free of
                // cancellation: X + Y - n (v1_x + v1_y) = tau
                let zx = (st.x as f64 - n * self.v1[0]) / self.scale[i];
                let zy = (st.y as f64 - n * self.v1[1]) / self.scale[i];
                let r = std::f64::consts::FRAC_1_SQRT_2;
                out.extend([zx, zy, (zx - zy) * r, (zx + zy) * r]);
            }
            Functional::WEstimate => {
                out.push((st.x as f64 - n * self.v1[0]) / (self.scale[i] * self.v2[0]));
            }
            Functional::MartingalePath | Functional::QslSum => unreachable!("streamed"),
        }
    }
}

/// Moments at every checkpoint plus the raw per-replicate samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub model: String,
    pub horizon: u64,
    pub reps: u64,
    pub master_seed: u64,
    pub functional: Functional,
    pub checkpoints: Vec<u64>,
    pub features: Vec<&'static str>,
    /// `moments[checkpoint][feature]`.
    pub moments: Vec<Vec<Moments>>,
    #[serde(skip)]
    samples: Vec<Vec<f64>>,
}

impl RunSummary {
    fn column(&self, checkpoint: usize, feature: usize) -> usize {
        checkpoint * self.features.len() + feature
    }

    fn feature_index(&self, feature: &str) -> usize {
        self.features
            .iter()
            .position(|f| *f == feature)
            .unwrap_or_else(|| panic!("unknown feature {feature}"))
    }

    /// All replicate values of `feature` at checkpoint index `checkpoint`.
    pub fn sample(&self, checkpoint: usize, feature: &str) -> Vec<f64> {
        let col = self.column(checkpoint, self.feature_index(feature));
        self.samples.iter().map(|row| row[col]).collect()
    }

    pub fn moments_of(&self, checkpoint: usize, feature: &str) -> Moments {
        self.moments[checkpoint][self.feature_index(feature)]
    }

    /// Samples at the final checkpoint.
    pub fn final_sample(&self, feature: &str) -> Vec<f64> {
        self.sample(self.checkpoints.len() - 1, feature)
    }

    pub fn final_moments(&self, feature: &str) -> Moments {
        self.moments_of(self.checkpoints.len() - 1, feature)
    }

    /// Replicate rows in stream order.
    pub fn rows(&self) -> &[Vec<f64>] {
        &self.samples
    }
}

fn reduce(rows: &[Vec<f64>], width: usize) -> Vec<Moments> {
    let mut total = vec![Moments::default(); width];
    for block in rows.chunks(BLOCK) {
        let mut acc = vec![Moments::default(); width];
        for row in block {
            for (a, &v) in acc.iter_mut().zip(row) {
                a.push(v);
            }
        }
        for (t, a) in total.iter_mut().zip(&acc) {
            *t = t.merge(a);
        }
    }
    total
}

fn collect_rows(plan: &Plan, cfg: &SimConfig, exec: Execution) -> Vec<Vec<f64>> {
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..cfg.reps)
                .into_par_iter()
                .map(|r| plan.replicate(cfg.master_seed, r))
                .collect()
        }
        _ => (0..cfg.reps)
            .map(|r| plan.replicate(cfg.master_seed, r))
            .collect(),
    }
}

pub fn run_with(cfg: &SimConfig, exec: Execution) -> Result<RunSummary, EngineError> {
    let plan = Plan::new(cfg)?;
    let rows = collect_rows(&plan, cfg, exec);
    let width = plan.width();
    let flat = reduce(&rows, width * plan.checkpoints.len());
    let moments = flat.chunks(width).map(<[Moments]>::to_vec).collect();
    Ok(RunSummary {
        model: cfg.model.label(),
        horizon: cfg.horizon,
        reps: cfg.reps,
        master_seed: cfg.master_seed,
        functional: cfg.functional,
        checkpoints: plan.checkpoints.clone(),
        features: cfg.functional.features().to_vec(),
        moments,
        samples: rows,
    })
}

pub fn run(cfg: &SimConfig) -> Result<RunSummary, EngineError> {
    run_with(cfg, Execution::default())
}

/// The `R` values of `W_n` at the horizon, in replicate order.
pub fn w_estimate(cfg: &SimConfig) -> Result<Vec<f64>, EngineError> {
    let cfg = SimConfig {
        functional: Functional::WEstimate,
        checkpoints: Vec::new(),
        ..cfg.clone()
    };
    Ok(run(&cfg)?.final_sample("w"))
}
