//! Exact integer-state simulation of a single urn path.

use thiserror::Error;

use crate::model::{Trajectory, UrnModel, UrnState};
use crate::rng::RandomStream;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("OverflowHorizon: tau + N S exceeds 2^63 for N = {horizon} (max {max})")]
    OverflowHorizon { horizon: u64, max: u64 },
    #[error("InvalidCheckpoints: {0}")]
    InvalidCheckpoints(String),
}

pub fn check_horizon(model: &UrnModel, horizon: u64) -> Result<(), SimError> {
    if model.tau_at(horizon).is_none() {
        return Err(SimError::OverflowHorizon {
            horizon,
            max: model.max_horizon(),
        });
    }
    Ok(())
}

/// Runs `horizon` draws from the initial composition, calling
/// `visit(before, red, after)` for each transition, and returns the final
/// state. The draw `eps_{k+1}` is red exactly with probability `X_k / tau_k`:
/// a uniform integer in `[0, tau_k)` is compared with `X_k`.
///
/// The caller is responsible for [`check_horizon`].
#[inline]
pub fn walk<F>(model: &UrnModel, horizon: u64, rng: &mut RandomStream, mut visit: F) -> UrnState
where
    F: FnMut(&UrnState, bool, &UrnState),
{
    let mut state = model.initial_state();
    for _ in 0..horizon {
        let red = rng.below(state.x + state.y) < state.x;
        let next = state.step(model, red);
        visit(&state, red, &next);
        state = next;
    }
    state
}

/// Advances `horizon` draws without observing intermediate states.
pub fn run_to(model: &UrnModel, horizon: u64, rng: &mut RandomStream) -> Result<UrnState, SimError> {
    check_horizon(model, horizon)?;
    Ok(walk(model, horizon, rng, |_, _, _| {}))
}

/// Full trajectory: every state and every draw.
pub fn simulate(
    model: &UrnModel,
    horizon: u64,
    rng: &mut RandomStream,
) -> Result<Trajectory, SimError> {
    check_horizon(model, horizon)?;
    let mut states = Vec::with_capacity(horizon as usize + 1);
    let mut draws = Vec::with_capacity(horizon as usize);
    states.push(model.initial_state());
    walk(model, horizon, rng, |_, red, next| {
        draws.push(red);
        states.push(*next);
    });
    Ok(Trajectory::from_parts(model.clone(), states, Some(draws)))
}

/// Trajectory keeping only the states at `checkpoints` (plus `0` and the
/// horizon). Consumes the random stream exactly like [`simulate`].
pub fn simulate_checkpointed(
    model: &UrnModel,
    horizon: u64,
    rng: &mut RandomStream,
    checkpoints: &[u64],
) -> Result<Trajectory, SimError> {
    check_horizon(model, horizon)?;
    validate_checkpoints(checkpoints, horizon)?;
    let mut keep: Vec<u64> = checkpoints.to_vec();
    keep.push(horizon);
    keep.dedup();
    let mut states = vec![model.initial_state()];
    let mut next_idx = keep.iter().position(|&n| n > 0).unwrap_or(keep.len());
    walk(model, horizon, rng, |_, _, next| {
        if next_idx < keep.len() && next.n == keep[next_idx] {
            states.push(*next);
            next_idx += 1;
        }
    });
    Ok(Trajectory::from_parts(model.clone(), states, None))
}

pub fn validate_checkpoints(checkpoints: &[u64], horizon: u64) -> Result<(), SimError> {
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SimError::InvalidCheckpoints(
            "checkpoints must be strictly increasing".into(),
        ));
    }
    if checkpoints.last().is_some_and(|&n| n > horizon) {
        return Err(SimError::InvalidCheckpoints(format!(
            "checkpoint beyond horizon {horizon}"
        )));
    }
    Ok(())
}

/// Roughly `per_decade` log-spaced step indices in `[1, horizon]`, always
/// ending at `horizon`.
pub fn log_checkpoints(horizon: u64, per_decade: u32) -> Vec<u64> {
    if horizon == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let decades = (horizon as f64).log10();
    let count = (decades * per_decade.max(1) as f64).ceil() as u32;
    for i in 0..=count {
        let n = 10f64.powf(i as f64 / per_decade.max(1) as f64).round() as u64;
        let n = n.clamp(1, horizon);
        if out.last() != Some(&n) {
            out.push(n);
        }
    }
    if out.last() != Some(&horizon) {
        out.push(horizon);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> UrnModel {
        UrnModel::new(2, 1, 1, 2, 1, 1).unwrap()
    }

    #[test]
    fn horizon_zero_is_initial_state() {
        let m = small();
        let t = simulate(&m, 0, &mut RandomStream::new(1, 0)).unwrap();
        assert_eq!(t.states(), &[m.initial_state()]);
        assert_eq!(t.draws().unwrap().len(), 0);
    }

    #[test]
    fn trajectories_are_valid_and_reproducible() {
        let m = UrnModel::new(4, 1, 1, 4, 2, 1).unwrap();
        let a = simulate(&m, 500, &mut RandomStream::new(3, 11)).unwrap();
        let b = simulate(&m, 500, &mut RandomStream::new(3, 11)).unwrap();
        assert!(a.validate().is_ok());
        assert_eq!(a, b);
        for st in a.states() {
            assert_eq!(st.x + st.y, m.tau() + st.n * m.s());
        }
    }

    #[test]
    fn checkpointed_matches_full() {
        let m = small();
        let full = simulate(&m, 1000, &mut RandomStream::new(8, 2)).unwrap();
        let cps = log_checkpoints(1000, 3);
        let sub = simulate_checkpointed(&m, 1000, &mut RandomStream::new(8, 2), &cps).unwrap();
        assert!(sub.validate().is_ok());
        for st in sub.states() {
            assert_eq!(*st, full.states()[st.n as usize]);
        }
        assert_eq!(sub.last(), full.last());
    }

    #[test]
    fn overflow_is_reported() {
        let m = UrnModel::new(1 << 40, 0, 0, 1 << 40, 1, 1).unwrap();
        assert!(matches!(
            run_to(&m, 1 << 30, &mut RandomStream::new(0, 0)),
            Err(SimError::OverflowHorizon { .. })
        ));
    }

    #[test]
    fn checkpoint_validation() {
        assert!(validate_checkpoints(&[1, 5, 5], 10).is_err());
        assert!(validate_checkpoints(&[1, 11], 10).is_err());
        assert!(validate_checkpoints(&[1, 10], 10).is_ok());
    }

    #[test]
    fn log_checkpoints_shape() {
        let c = log_checkpoints(1_000_000, 2);
        assert_eq!(c.first(), Some(&1));
        assert_eq!(c.last(), Some(&1_000_000));
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        assert!(c.len() <= 14);
    }

    #[test]
    fn csv_round_trip_passes_validation() {
        let m = small();
        let t = simulate(&m, 200, &mut RandomStream::new(4, 0)).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = Trajectory::read_csv(&m, buf.as_slice()).unwrap();
        assert_eq!(back, t);
        assert!(back.validate().is_ok());
    }
}
