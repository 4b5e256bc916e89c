//! Exact law of `U_n` by enumerating all `2^n` draw sequences with rational
//! path probabilities.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::model::{UrnModel, UrnState};

pub const ORACLE_MAX_N: u64 = 12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("TooLarge: enumeration is limited to n <= {max}, got {n}")]
    TooLarge { n: u64, max: u64 },
}

/// Exact distribution of `U_n = (X_n, Y_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactDistribution {
    pub n: u64,
    pub support: BTreeMap<(u64, u64), BigRational>,
}

impl ExactDistribution {
    pub fn total_probability(&self) -> BigRational {
        self.support.values().fold(BigRational::zero(), |a, p| a + p)
    }

    pub fn probability(&self, x: u64, y: u64) -> BigRational {
        self.support.get(&(x, y)).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn mean(&self) -> [BigRational; 2] {
        let mut out = [BigRational::zero(), BigRational::zero()];
        for (&(x, y), p) in &self.support {
            out[0] += p * BigInt::from(x);
            out[1] += p * BigInt::from(y);
        }
        out
    }

    pub fn variance_x(&self) -> BigRational {
        let mean = &self.mean()[0];
        self.support
            .iter()
            .map(|(&(x, _), p)| {
                let d = BigRational::from_integer(BigInt::from(x)) - mean;
                p * &d * &d
            })
            .fold(BigRational::zero(), |a, t| a + t)
    }
}

/// Calls `visit(states, draws, probability)` once per draw sequence of
/// length `n` with positive probability.
pub fn for_each_path<F>(model: &UrnModel, n: u64, mut visit: F) -> Result<(), OracleError>
where
    F: FnMut(&[UrnState], &[bool], &BigRational),
{
    if n > ORACLE_MAX_N {
        return Err(OracleError::TooLarge {
            n,
            max: ORACLE_MAX_N,
        });
    }
    let mut states = vec![model.initial_state()];
    let mut draws = Vec::new();
    descend(model, n, &mut states, &mut draws, BigRational::one(), &mut visit);
    Ok(())
}

fn descend<F>(
    model: &UrnModel,
    n: u64,
    states: &mut Vec<UrnState>,
    draws: &mut Vec<bool>,
    prob: BigRational,
    visit: &mut F,
) where
    F: FnMut(&[UrnState], &[bool], &BigRational),
{
    let state = *states.last().expect("path starts at the initial state");
    if state.n == n {
        visit(states, draws, &prob);
        return;
    }
    let total = BigInt::from(state.total());
    for (red, count) in [(true, state.x), (false, state.y)] {
        if count == 0 {
            continue;
        }
        let p = &prob * BigRational::new(BigInt::from(count), total.clone());
        states.push(state.step(model, red));
        draws.push(red);
        descend(model, n, states, draws, p, visit);
        states.pop();
        draws.pop();
    }
}

pub fn oracle_enumerate(model: &UrnModel, n: u64) -> Result<ExactDistribution, OracleError> {
    let mut support: BTreeMap<(u64, u64), BigRational> = BTreeMap::new();
    for_each_path(model, n, |states, _, p| {
        let last = states.last().expect("nonempty path");
        *support.entry((last.x, last.y)).or_insert_with(BigRational::zero) += p;
    })?;
    Ok(ExactDistribution { n, support })
}
