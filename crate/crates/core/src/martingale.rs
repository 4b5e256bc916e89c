//! Martingales attached to urn paths.
//!
//! Traditional urns (`b = c = 0`): `M_n = X_n / tau_n`, with
//! `<M>_n = sum_{k<n} S^2 M_k (1 - M_k) / tau_{k+1}^2`.
//!
//! Otherwise: `M_n = sigma_n (U_n - E[U_n])`, a multiple of `(1, -1)`, with
//! `Delta M_{n+1} = m sigma_{n+1} (eps_{n+1} - X_n / tau_n) (1, -1)` and
//! `<M>_n = q_n (1 -1; -1 1)`, `q_n = m^2 sum_{k<n} sigma_{k+1}^2 p_k (1 - p_k)`,
//! `p_k = X_k / tau_k`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::formulas::{mean_un_exact, mean_un_given, sigma_n_exact, FormulaError, SigmaSequence};
use crate::model::{Regime, Trajectory, UrnModel, UrnState};
use crate::rng::RandomStream;
use crate::sim::{check_horizon, validate_checkpoints, walk, SimError};
use crate::stats::NeumaierSum;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MartingaleError {
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("Subsampled: the quadratic variation needs every state; use a tracked simulation")]
    Subsampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MartingaleKind {
    /// Scalar `X_n / tau_n`.
    Traditional,
    /// Vector `sigma_n (U_n - E[U_n])`.
    Generalized,
}

/// `M_n` and `<M>_n` at the recorded indices.
///
/// For [`MartingaleKind::Traditional`] only `values[i][0]` is used; for
/// [`MartingaleKind::Generalized`] both coordinates are computed
/// independently, and `qvar[i]` is the scalar `q_n` with
/// `<M>_n = q_n (1 -1; -1 1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingalePath {
    pub kind: MartingaleKind,
    pub ns: Vec<u64>,
    pub values: Vec<[f64; 2]>,
    pub qvar: Vec<f64>,
}

impl MartingalePath {
    fn new(kind: MartingaleKind) -> Self {
        Self {
            kind,
            ns: Vec::new(),
            values: Vec::new(),
            qvar: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ns.is_empty()
    }

    /// `<M>_n` as a 2x2 matrix (generalized) or `[[q, 0], [0, 0]]`.
    pub fn qvar_matrix(&self, i: usize) -> [[f64; 2]; 2] {
        let q = self.qvar[i];
        match self.kind {
            MartingaleKind::Traditional => [[q, 0.0], [0.0, 0.0]],
            MartingaleKind::Generalized => [[q, -q], [-q, q]],
        }
    }

    /// Trace of `<M>_n`.
    pub fn qvar_trace(&self, i: usize) -> f64 {
        match self.kind {
            MartingaleKind::Traditional => self.qvar[i],
            MartingaleKind::Generalized => 2.0 * self.qvar[i],
        }
    }
}

/// Incremental construction of a [`MartingalePath`] from transitions, so
/// that the quadratic variation is summed at full resolution while only
/// checkpoints are stored.
#[derive(Debug, Clone)]
pub struct MartingaleTracker {
    model: UrnModel,
    kind: MartingaleKind,
    sigma: SigmaSequence,
    qvar: NeumaierSum,
    keep: Vec<u64>,
    next_keep: usize,
    path: MartingalePath,
    error: Option<FormulaError>,
}

impl MartingaleTracker {
    /// Records `M_n` for every `n` in `keep` (sorted); `0` is always recorded.
    pub fn new(model: &UrnModel, keep: &[u64]) -> Result<Self, MartingaleError> {
        let kind = match model.regime() {
            Regime::Traditional => MartingaleKind::Traditional,
            _ => MartingaleKind::Generalized,
        };
        if kind == MartingaleKind::Generalized && model.tau() as i64 + model.m() == 0 {
            return Err(FormulaError::SingularNormalizer.into());
        }
        let mut t = Self {
            model: model.clone(),
            kind,
            sigma: SigmaSequence::new(model),
            qvar: NeumaierSum::default(),
            keep: keep.iter().copied().filter(|&n| n > 0).collect(),
            next_keep: 0,
            path: MartingalePath::new(kind),
            error: None,
        };
        t.record(&model.initial_state());
        Ok(t)
    }

    fn record(&mut self, state: &UrnState) {
        let value = match self.kind {
            MartingaleKind::Traditional => [state.proportion(), 0.0],
            MartingaleKind::Generalized => {
                let s = self.sigma.current();
                let mean = mean_un_given(&self.model, state.n, 1.0 / s);
                [s * (state.x as f64 - mean[0]), s * (state.y as f64 - mean[1])]
            }
        };
        self.path.ns.push(state.n);
        self.path.values.push(value);
        self.path.qvar.push(self.qvar.sum());
    }

    #[inline]
    pub fn observe(&mut self, before: &UrnState, _red: bool, after: &UrnState) {
        let tau_k = before.total() as f64;
        match self.kind {
            MartingaleKind::Traditional => {
                let mk = before.x as f64 / tau_k;
                let tau_next = after.total() as f64;
                let s = self.model.s() as f64;
                self.qvar.add(s * s * mk * (1.0 - mk) / (tau_next * tau_next));
            }
            MartingaleKind::Generalized => {
                let s_next = match self.sigma.advance() {
                    Ok(v) => v,
                    Err(e) => {
                        self.error.get_or_insert(e);
                        f64::NAN
                    }
                };
                let p = before.x as f64 / tau_k;
                let m = self.model.m() as f64;
                self.qvar.add(m * m * s_next * s_next * p * (1.0 - p));
            }
        }
        if self.next_keep < self.keep.len() && after.n == self.keep[self.next_keep] {
            self.record(after);
            self.next_keep += 1;
        }
    }

    pub fn finish(self) -> Result<MartingalePath, MartingaleError> {
        match self.error {
            Some(e) => Err(e.into()),
            None => Ok(self.path),
        }
    }
}

fn require_full(traj: &Trajectory) -> Result<(), MartingaleError> {
    let consecutive = traj
        .states()
        .iter()
        .enumerate()
        .all(|(i, s)| s.n == i as u64);
    if consecutive {
        Ok(())
    } else {
        Err(MartingaleError::Subsampled)
    }
}

fn from_states(traj: &Trajectory) -> Result<MartingalePath, MartingaleError> {
    require_full(traj)?;
    let model = traj.model();
    let keep: Vec<u64> = (1..=traj.horizon()).collect();
    let mut tracker = MartingaleTracker::new(model, &keep)?;
    for w in traj.states().windows(2) {
        let red = w[1].x - w[0].x == model.a();
        tracker.observe(&w[0], red, &w[1]);
    }
    tracker.finish()
}

/// `M_n = X_n / tau_n` and its quadratic variation along a full trajectory.
pub fn traditional_mart(traj: &Trajectory) -> Result<MartingalePath, MartingaleError> {
    if traj.model().regime() != Regime::Traditional {
        return Err(FormulaError::mismatch("proportion martingale", "Traditional", traj.model()).into());
    }
    from_states(traj)
}

/// `M_n = sigma_n (U_n - E[U_n])` and `<M>_n` along a full trajectory.
pub fn generalized_mart(traj: &Trajectory) -> Result<MartingalePath, MartingaleError> {
    if traj.model().regime() == Regime::Traditional {
        return Err(FormulaError::mismatch(
            "generalized martingale",
            "b + c > 0",
            traj.model(),
        )
        .into());
    }
    from_states(traj)
}

/// Dispatches on the regime.
pub fn martingale_path(traj: &Trajectory) -> Result<MartingalePath, MartingaleError> {
    from_states(traj)
}

/// Increments `M_{n+1} - M_n` predicted from the draws alone: the first
/// coordinate (the second is its negation for generalized urns).
pub fn increments_from_draws(traj: &Trajectory) -> Result<Vec<f64>, MartingaleError> {
    require_full(traj)?;
    let draws = traj.draws().ok_or(MartingaleError::Subsampled)?;
    let model = traj.model();
    let mut out = Vec::with_capacity(draws.len());
    let mut sigma = SigmaSequence::new(model);
    for (state, &red) in traj.states().iter().zip(draws) {
        let tau_k = state.total() as f64;
        let p = state.x as f64 / tau_k;
        let eps = if red { 1.0 } else { 0.0 };
        let delta = match model.regime() {
            Regime::Traditional => model.s() as f64 * (eps - p) / (tau_k + model.s() as f64),
            _ => model.m() as f64 * sigma.advance()? * (eps - p),
        };
        out.push(delta);
    }
    Ok(out)
}

/// Simulates `horizon` draws, keeping the martingale at `checkpoints` while
/// summing `<M>` over every step.
pub fn tracked_simulation(
    model: &UrnModel,
    horizon: u64,
    rng: &mut RandomStream,
    checkpoints: &[u64],
) -> Result<(UrnState, MartingalePath), MartingaleError> {
    check_horizon(model, horizon)?;
    validate_checkpoints(checkpoints, horizon)?;
    let mut tracker = MartingaleTracker::new(model, checkpoints)?;
    let last = walk(model, horizon, rng, |b, r, a| tracker.observe(b, r, a));
    Ok((last, tracker.finish()?))
}

/// Exact rational `M_n` for a consecutive run of states starting at `n = 0`.
pub fn exact_values(model: &UrnModel, states: &[UrnState]) -> Result<Vec<[BigRational; 2]>, FormulaError> {
    states
        .iter()
        .map(|st| {
            if model.regime() == Regime::Traditional {
                let v = BigRational::new(BigInt::from(st.x), BigInt::from(st.total()));
                return Ok([v, BigRational::zero()]);
            }
            let s = sigma_n_exact(model, st.n)?;
            let mean = mean_un_exact(model, st.n);
            let x = BigRational::from_integer(BigInt::from(st.x));
            let y = BigRational::from_integer(BigInt::from(st.y));
            Ok([&s * (x - &mean[0]), &s * (y - &mean[1])])
        })
        .collect()
}

/// Exact rational quadratic variation (`q_n` for generalized urns).
pub fn exact_qvar(model: &UrnModel, states: &[UrnState]) -> Result<Vec<BigRational>, FormulaError> {
    let mut out = vec![BigRational::zero()];
    let mut acc = BigRational::zero();
    let one = BigRational::one();
    for w in states.windows(2) {
        let tau_k = BigInt::from(w[0].total());
        let p = BigRational::new(BigInt::from(w[0].x), tau_k);
        let term = if model.regime() == Regime::Traditional {
            let s = BigRational::from_integer(BigInt::from(model.s()));
            let tau_next = BigRational::from_integer(BigInt::from(w[1].total()));
            &s * &s * &p * (&one - &p) / (&tau_next * &tau_next)
        } else {
            let m = BigRational::from_integer(BigInt::from(model.m()));
            let s_next = sigma_n_exact(model, w[0].n + 1)?;
            &m * &m * &s_next * &s_next * &p * (&one - &p)
        };
        acc += term;
        out.push(acc.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formulas::w_n;
    use crate::sim::simulate;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn path_from_draws(model: &UrnModel, draws: &[bool]) -> Trajectory {
        let mut states = vec![model.initial_state()];
        for &d in draws {
            let next = states.last().unwrap().step(model, d);
            states.push(next);
        }
        Trajectory::from_parts(model.clone(), states, Some(draws.to_vec()))
    }

    #[test]
    fn traditional_first_step() {
        let m = UrnModel::new(1, 0, 0, 1, 1, 1).unwrap();
        let t = path_from_draws(&m, &[true]);
        let p = traditional_mart(&t).unwrap();
        assert_eq!(p.values[0][0], 0.5);
        assert!((p.values[1][0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.qvar[1] - 1.0 / 36.0).abs() < 1e-16);
        assert_eq!(exact_qvar(&m, t.states()).unwrap()[1], rat(1, 36));
    }

    #[test]
    fn traditional_all_red_tends_to_one() {
        let m = UrnModel::new(1, 0, 0, 1, 1, 1).unwrap();
        let t = path_from_draws(&m, &[true; 200]);
        let p = traditional_mart(&t).unwrap();
        let last = p.values.last().unwrap()[0];
        assert!((last - 201.0 / 202.0).abs() < 1e-15);
        assert!(p.values.windows(2).all(|w| w[1][0] > w[0][0]));
    }

    #[test]
    fn generalized_first_step() {
        let m = UrnModel::new(2, 1, 1, 2, 1, 1).unwrap();
        let t = path_from_draws(&m, &[true]);
        let p = generalized_mart(&t).unwrap();
        assert_eq!(p.values[0], [0.0, 0.0]);
        assert_eq!(p.qvar[0], 0.0);
        assert!((p.values[1][0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.values[1][1] + 1.0 / 3.0).abs() < 1e-15);
        let exact = exact_values(&m, t.states()).unwrap();
        assert_eq!(exact[1], [rat(1, 3), rat(-1, 3)]);
    }

    #[test]
    fn regime_mismatches() {
        let trad = UrnModel::new(1, 0, 0, 1, 1, 1).unwrap();
        let small = UrnModel::new(2, 1, 1, 2, 1, 1).unwrap();
        assert!(generalized_mart(&path_from_draws(&trad, &[true])).is_err());
        assert!(traditional_mart(&path_from_draws(&small, &[true])).is_err());
    }

    #[test]
    fn increments_match_differences() {
        for m in [
            UrnModel::new(2, 1, 1, 2, 2, 1).unwrap(),
            UrnModel::new(4, 1, 1, 4, 1, 3).unwrap(),
            UrnModel::new(1, 0, 0, 1, 2, 1).unwrap(),
            UrnModel::new(0, 3, 2, 1, 2, 1).unwrap(),
        ] {
            let t = simulate(&m, 3000, &mut RandomStream::new(5, 1)).unwrap();
            let p = martingale_path(&t).unwrap();
            let inc = increments_from_draws(&t).unwrap();
            for (i, d) in inc.iter().enumerate() {
                let diff = p.values[i + 1][0] - p.values[i][0];
                assert!((diff - d).abs() < 1e-9, "{} step {i}", m.label());
            }
        }
    }

    #[test]
    fn generalized_values_live_on_v2_line() {
        let m = UrnModel::new(3, 1, 1, 3, 2, 1).unwrap();
        let t = simulate(&m, 20_000, &mut RandomStream::new(2, 2)).unwrap();
        let p = generalized_mart(&t).unwrap();
        for (n, v) in p.ns.iter().zip(&p.values) {
            let scale = 1.0 + v[0].abs() + *n as f64 * 1e-12;
            assert!((v[0] + v[1]).abs() <= 1e-9 * scale, "n = {n}");
        }
        let exact = exact_values(&m, &t.states()[..40]).unwrap();
        assert!(exact.iter().all(|v| (&v[0] + &v[1]).is_zero()));
    }

    #[test]
    fn trace_bound_and_monotone_qvar() {
        let m = UrnModel::new(2, 1, 1, 2, 1, 2).unwrap();
        let t = simulate(&m, 5000, &mut RandomStream::new(9, 0)).unwrap();
        let p = generalized_mart(&t).unwrap();
        let m2 = (m.m() * m.m()) as f64;
        for (i, &n) in p.ns.iter().enumerate() {
            assert!(p.qvar_trace(i) <= m2 * w_n(&m, n).unwrap() * (1.0 + 1e-12));
        }
        assert!(p.qvar.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn tracked_matches_full() {
        let m = UrnModel::new(4, 1, 1, 4, 2, 1).unwrap();
        let full = martingale_path(&simulate(&m, 12_000, &mut RandomStream::new(1, 4)).unwrap()).unwrap();
        let cps = [10, 100, 10_000, 12_000];
        let (last, tracked) = tracked_simulation(&m, 12_000, &mut RandomStream::new(1, 4), &cps).unwrap();
        assert_eq!(last.n, 12_000);
        assert_eq!(tracked.ns, vec![0, 10, 100, 10_000, 12_000]);
        for (i, &n) in tracked.ns.iter().enumerate() {
            assert_eq!(tracked.values[i], full.values[n as usize]);
            assert_eq!(tracked.qvar[i], full.qvar[n as usize]);
        }
    }

    #[test]
    fn subsampled_trajectory_is_rejected() {
        let m = UrnModel::new(2, 1, 1, 2, 1, 1).unwrap();
        let t = crate::sim::simulate_checkpointed(&m, 100, &mut RandomStream::new(0, 0), &[10, 50]).unwrap();
        assert_eq!(generalized_mart(&t), Err(MartingaleError::Subsampled));
    }

    #[test]
    fn singular_normalizer_is_reported() {
        let m = UrnModel::new(0, 1, 1, 0, 1, 0).unwrap();
        assert!(matches!(
            MartingaleTracker::new(&m, &[]),
            Err(MartingaleError::Formula(FormulaError::SingularNormalizer))
        ));
    }
}
