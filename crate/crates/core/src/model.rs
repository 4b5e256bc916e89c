//! Balanced two-colour urn models, their integer state and trajectories.
//!
//! A model is given by the replacement matrix `R = (a b; c d)` (row `(a, b)`
//! is added after a red draw, row `(c, d)` after a white draw) and the initial
//! composition `(alpha, beta)`. Balance means `a + b = c + d = S`, so the
//! total number of balls after `n` draws is the deterministic `tau + n S`.

use std::fmt;

use num_rational::Rational64;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest admissible ball count; keeps `tau + n S` exact in `u64` and
/// convertible to `i64` everywhere.
pub const COUNT_CAP: u64 = 1 << 63;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("BalanceViolation: a + b = {red_row} but c + d = {white_row}")]
    BalanceViolation { red_row: u64, white_row: u64 },
    #[error("EmptyUrn: alpha + beta must be at least 1")]
    EmptyUrn,
    #[error("ZeroGrowth: the urn must gain at least one ball per draw (S >= 1)")]
    ZeroGrowth,
    #[error("CountOverflow: replacement counts or initial composition exceed 2^62")]
    CountOverflow,
}

/// Position of `sigma = m / S` relative to the critical value 1/2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// Diagonal replacement matrix, `sigma = 1`.
    Traditional,
    /// `sigma < 1/2` (includes negative `m`).
    Small,
    /// `sigma = 1/2`.
    Critical,
    /// `1/2 < sigma < 1`.
    Large,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Regime::Traditional => "Traditional",
            Regime::Small => "Small",
            Regime::Critical => "Critical",
            Regime::Large => "Large",
        };
        f.write_str(s)
    }
}

/// A validated balanced urn together with its spectral data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UrnModel {
    a: u64,
    b: u64,
    c: u64,
    d: u64,
    alpha: u64,
    beta: u64,
    s: u64,
    m: i64,
    tau: u64,
    sigma: Rational64,
    eigen: Option<Eigenvectors>,
    regime: Regime,
}

/// Eigenvectors of `R^T`: `v1` for eigenvalue `S`, `v2` for eigenvalue `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Eigenvectors {
    pub v1: [Rational64; 2],
    pub v2: [Rational64; 2],
}

impl UrnModel {
    /// Validates the replacement matrix and initial composition and derives
    /// `S`, `m`, `sigma`, the eigenvectors and the regime.
    pub fn new(a: u64, b: u64, c: u64, d: u64, alpha: u64, beta: u64) -> Result<Self, ModelError> {
        const INPUT_CAP: u64 = 1 << 62;
        if [a, b, c, d, alpha, beta].iter().any(|&v| v > INPUT_CAP) {
            return Err(ModelError::CountOverflow);
        }
        let red_row = a + b;
        let white_row = c + d;
        if red_row != white_row {
            return Err(ModelError::BalanceViolation { red_row, white_row });
        }
        let s = red_row;
        if s == 0 {
            return Err(ModelError::ZeroGrowth);
        }
        let tau = alpha + beta;
        if tau == 0 {
            return Err(ModelError::EmptyUrn);
        }
        if s >= INPUT_CAP || tau >= INPUT_CAP {
            return Err(ModelError::CountOverflow);
        }

        let m = a as i64 - c as i64;
        let sigma = Rational64::new(m, s as i64);
        let half = Rational64::new(1, 2);
        let regime = if b + c == 0 {
            Regime::Traditional
        } else if sigma < half {
            Regime::Small
        } else if sigma == half {
            Regime::Critical
        } else {
            Regime::Large
        };
        let eigen = (b + c > 0).then(|| {
            let scale = Rational64::new(s as i64, (b + c) as i64);
            Eigenvectors {
                v1: [scale * c as i64, scale * b as i64],
                v2: [scale, -scale],
            }
        });

        Ok(Self {
            a,
            b,
            c,
            d,
            alpha,
            beta,
            s,
            m,
            tau,
            sigma,
            eigen,
            regime,
        })
    }

    /// Parses the row-major matrix `"a,b,c,d"` and the initial composition
    /// `"alpha,beta"`.
    pub fn parse(matrix: &str, init: &str) -> Result<Self, ParseModelError> {
        let r = parse_counts::<4>(matrix)?;
        let u = parse_counts::<2>(init)?;
        Ok(Self::new(r[0], r[1], r[2], r[3], u[0], u[1])?)
    }

    pub fn a(&self) -> u64 {
        self.a
    }
    pub fn b(&self) -> u64 {
        self.b
    }
    pub fn c(&self) -> u64 {
        self.c
    }
    pub fn d(&self) -> u64 {
        self.d
    }
    pub fn alpha(&self) -> u64 {
        self.alpha
    }
    pub fn beta(&self) -> u64 {
        self.beta
    }

    /// Balls added per draw (dominant eigenvalue of `R^T`).
    pub fn s(&self) -> u64 {
        self.s
    }

    /// Second eigenvalue `a - c = d - b`.
    pub fn m(&self) -> i64 {
        self.m
    }

    /// Initial number of balls.
    pub fn tau(&self) -> u64 {
        self.tau
    }

    /// Eigenvalue ratio `m / S` as an exact rational.
    pub fn sigma(&self) -> Rational64 {
        self.sigma
    }

    pub fn sigma_f64(&self) -> f64 {
        self.m as f64 / self.s as f64
    }

    /// `tau / S`, the shift that appears in every Gamma-function closed form.
    pub fn tau_over_s(&self) -> f64 {
        self.tau as f64 / self.s as f64
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// `None` for traditional urns, where `b + c = 0`.
    pub fn eigenvectors(&self) -> Option<&Eigenvectors> {
        self.eigen.as_ref()
    }

    pub fn v1(&self) -> Option<[Rational64; 2]> {
        self.eigen.map(|e| e.v1)
    }

    pub fn v2(&self) -> Option<[Rational64; 2]> {
        self.eigen.map(|e| e.v2)
    }

    pub fn v1_f64(&self) -> Option<[f64; 2]> {
        self.v1().map(|v| [ratio_f64(v[0]), ratio_f64(v[1])])
    }

    pub fn v2_f64(&self) -> Option<[f64; 2]> {
        self.v2().map(|v| [ratio_f64(v[0]), ratio_f64(v[1])])
    }

    /// `b alpha - c beta`, the coefficient of the transient `v2` component of
    /// the mean composition.
    pub fn drift_offset(&self) -> i128 {
        self.b as i128 * self.alpha as i128 - self.c as i128 * self.beta as i128
    }

    /// Total number of balls after `n` draws, `None` past the 64-bit cap.
    pub fn tau_at(&self, n: u64) -> Option<u64> {
        let t = n.checked_mul(self.s)?.checked_add(self.tau)?;
        (t < COUNT_CAP).then_some(t)
    }

    /// Largest horizon for which `tau + n S` stays below the cap.
    pub fn max_horizon(&self) -> u64 {
        (COUNT_CAP - 1 - self.tau) / self.s
    }

    pub fn initial_state(&self) -> UrnState {
        UrnState {
            n: 0,
            x: self.alpha,
            y: self.beta,
        }
    }

    /// `R^T v` in exact rationals.
    pub fn apply_transpose(&self, v: [Rational64; 2]) -> [Rational64; 2] {
        let (a, b, c, d) = (
            self.a as i64,
            self.b as i64,
            self.c as i64,
            self.d as i64,
        );
        [v[0] * a + v[1] * c, v[0] * b + v[1] * d]
    }

    /// Short label such as `(2,1,1,2|1,1)` used in reports.
    pub fn label(&self) -> String {
        format!(
            "({},{},{},{}|{},{})",
            self.a, self.b, self.c, self.d, self.alpha, self.beta
        )
    }
}

fn ratio_f64(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Formats a rational as `p/q`, or `p` when integral.
pub fn format_rational(r: Rational64) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else if r.is_zero() {
        "0".into()
    } else {
        let sign = if r.is_negative() { "-" } else { "" };
        format!("{sign}{}/{}", r.numer().abs(), r.denom())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseModelError {
    #[error("expected {expected} comma-separated nonnegative integers, got {input:?}")]
    Malformed { expected: usize, input: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn parse_counts<const N: usize>(input: &str) -> Result<[u64; N], ParseModelError> {
    let malformed = || ParseModelError::Malformed {
        expected: N,
        input: input.to_string(),
    };
    let parts: Vec<u64> = input
        .split(',')
        .map(|p| p.trim().parse::<u64>())
        .collect::<Result<_, _>>()
        .map_err(|_| malformed())?;
    parts.try_into().map_err(|_| malformed())
}

/// Urn composition after `n` draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UrnState {
    pub n: u64,
    pub x: u64,
    pub y: u64,
}

impl UrnState {
    /// One transition: a red draw adds row `(a, b)`, a white draw row `(c, d)`.
    #[inline]
    pub fn step(self, model: &UrnModel, red: bool) -> UrnState {
        let (dx, dy) = if red {
            (model.a, model.b)
        } else {
            (model.c, model.d)
        };
        UrnState {
            n: self.n + 1,
            x: self.x + dx,
            y: self.y + dy,
        }
    }

    pub fn total(&self) -> u64 {
        self.x + self.y
    }

    /// Proportion of red balls `X_n / tau_n`.
    pub fn proportion(&self) -> f64 {
        self.x as f64 / (self.x + self.y) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrajectoryError {
    #[error("state at n = {n} has total {found}, expected tau + n S = {expected}")]
    TotalMismatch { n: u64, found: u64, expected: u64 },
    #[error("first recorded state is {found:?}, expected the initial composition")]
    BadStart { found: UrnState },
    #[error("transition {n} -> {} does not add a row of R (draw = {red})", n + 1)]
    BadTransition { n: u64, red: bool },
    #[error("step indices are not strictly increasing at position {index}")]
    NonMonotone { index: usize },
    #[error("trajectory has {states} states but {draws} draws")]
    LengthMismatch { states: usize, draws: usize },
    #[error("malformed trajectory record on line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// A recorded path of the urn.
///
/// Full trajectories hold every state together with the draws; checkpointed
/// trajectories keep only the states at selected step indices (always
/// including `0` and the horizon) and no draws.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    model: UrnModel,
    states: Vec<UrnState>,
    draws: Option<Vec<bool>>,
}

impl Trajectory {
    pub(crate) fn from_parts(
        model: UrnModel,
        states: Vec<UrnState>,
        draws: Option<Vec<bool>>,
    ) -> Self {
        Self {
            model,
            states,
            draws,
        }
    }

    pub fn model(&self) -> &UrnModel {
        &self.model
    }

    pub fn states(&self) -> &[UrnState] {
        &self.states
    }

    /// Draw outcomes `eps_1 .. eps_N` (`true` = red); `None` when checkpointed.
    pub fn draws(&self) -> Option<&[bool]> {
        self.draws.as_deref()
    }

    pub fn is_full(&self) -> bool {
        self.draws.is_some()
    }

    pub fn horizon(&self) -> u64 {
        self.states.last().map_or(0, |s| s.n)
    }

    pub fn last(&self) -> UrnState {
        *self.states.last().expect("trajectory always holds the initial state")
    }

    /// Checks every structural invariant: deterministic totals, the initial
    /// composition, and (for full trajectories) that consecutive states differ
    /// by the row of `R` selected by the recorded draw.
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        let model = &self.model;
        let first = self.states[0];
        if first != model.initial_state() {
            return Err(TrajectoryError::BadStart { found: first });
        }
        for (i, st) in self.states.iter().enumerate() {
            let expected = model.tau + st.n * model.s;
            if st.total() != expected {
                return Err(TrajectoryError::TotalMismatch {
                    n: st.n,
                    found: st.total(),
                    expected,
                });
            }
            if i > 0 && st.n <= self.states[i - 1].n {
                return Err(TrajectoryError::NonMonotone { index: i });
            }
        }
        if let Some(draws) = &self.draws {
            if draws.len() + 1 != self.states.len() {
                return Err(TrajectoryError::LengthMismatch {
                    states: self.states.len(),
                    draws: draws.len(),
                });
            }
            for (k, (pair, &red)) in self.states.windows(2).zip(draws).enumerate() {
                if pair[0].step(model, red) != pair[1] {
                    return Err(TrajectoryError::BadTransition { n: k as u64, red });
                }
            }
        }
        Ok(())
    }

    /// Writes `n,X,Y` CSV with a header line.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,X,Y")?;
        for st in &self.states {
            writeln!(out, "{},{},{}", st.n, st.x, st.y)?;
        }
        Ok(())
    }

    /// Reads the CSV written by [`Trajectory::write_csv`].
    ///
    /// Draws are reconstructed when the rows are consecutive and every
    /// increment is one of the two rows of `R`; otherwise the trajectory is
    /// treated as checkpointed.
    pub fn read_csv<R: std::io::BufRead>(
        model: &UrnModel,
        input: R,
    ) -> Result<Trajectory, TrajectoryError> {
        let mut states = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| TrajectoryError::Malformed {
                line: line_no,
                reason: e.to_string(),
            })?;
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with('n')) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let parsed: Result<Vec<u64>, _> = fields.iter().map(|f| f.trim().parse()).collect();
            match parsed {
                Ok(v) if v.len() == 3 => states.push(UrnState {
                    n: v[0],
                    x: v[1],
                    y: v[2],
                }),
                _ => {
                    return Err(TrajectoryError::Malformed {
                        line: line_no,
                        reason: format!("expected n,X,Y got {line:?}"),
                    })
                }
            }
        }
        if states.is_empty() {
            return Err(TrajectoryError::Malformed {
                line: 0,
                reason: "no states".into(),
            });
        }
        let consecutive = states.iter().enumerate().all(|(i, s)| s.n == i as u64);
        let draws = if consecutive {
            states
                .windows(2)
                .map(|w| {
                    if w[0].step(model, true) == w[1] {
                        Some(true)
                    } else if w[0].step(model, false) == w[1] {
                        Some(false)
                    } else {
                        None
                    }
                })
                .collect::<Option<Vec<bool>>>()
        } else {
            None
        };
        let traj = Trajectory::from_parts(model.clone(), states, draws);
        if consecutive && traj.draws.is_none() && traj.states.len() > 1 {
            let bad = traj
                .states
                .windows(2)
                .position(|w| w[0].step(model, true) != w[1] && w[0].step(model, false) != w[1])
                .unwrap_or(0);
            return Err(TrajectoryError::BadTransition {
                n: bad as u64,
                red: false,
            });
        }
        traj.validate()?;
        Ok(traj)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    #[test]
    fn small_model_spectral_data() {
        let m = UrnModel::new(2, 1, 1, 2, 1, 1).unwrap();
        assert_eq!(m.s(), 3);
        assert_eq!(m.m(), 1);
        assert_eq!(m.sigma(), r(1, 3));
        assert_eq!(m.regime(), Regime::Small);
        assert_eq!(m.v1().unwrap(), [r(3, 2), r(3, 2)]);
        assert_eq!(m.v2().unwrap(), [r(3, 2), r(-3, 2)]);
    }

    #[test]
    fn traditional_model() {
        let m = UrnModel::new(1, 0, 0, 1, 2, 3).unwrap();
        assert_eq!((m.s(), m.m()), (1, 1));
        assert_eq!(m.sigma(), r(1, 1));
        assert_eq!(m.regime(), Regime::Traditional);
        assert!(m.eigenvectors().is_none());
    }

    #[test]
    fn balance_is_checked() {
        let m = UrnModel::new(2, 2, 1, 3, 1, 1).unwrap();
        assert_eq!(m.m(), 1);
        assert_eq!(m.sigma(), r(1, 4));
        assert_eq!(m.regime(), Regime::Small);
        assert_eq!(
            UrnModel::new(2, 1, 1, 3, 1, 1),
            Err(ModelError::BalanceViolation {
                red_row: 3,
                white_row: 4
            })
        );
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(UrnModel::new(1, 0, 0, 1, 0, 0), Err(ModelError::EmptyUrn));
        assert_eq!(UrnModel::new(0, 0, 0, 0, 1, 1), Err(ModelError::ZeroGrowth));
        assert_eq!(
            UrnModel::new(u64::MAX, 0, 0, u64::MAX, 1, 1),
            Err(ModelError::CountOverflow)
        );
    }

    #[test]
    fn grid_regimes() {
        let cases = [
            ((1, 0, 0, 1), Regime::Traditional),
            ((2, 1, 1, 2), Regime::Small),
            ((3, 1, 1, 3), Regime::Critical),
            ((4, 1, 1, 4), Regime::Large),
            ((0, 1, 1, 0), Regime::Small),
        ];
        for ((a, b, c, d), regime) in cases {
            assert_eq!(UrnModel::new(a, b, c, d, 1, 1).unwrap().regime(), regime);
        }
    }

    #[test]
    fn eigenvectors_are_exact() {
        for (a, b, c, d) in [(2, 1, 1, 2), (3, 1, 1, 3), (4, 1, 1, 4), (5, 2, 3, 4), (0, 3, 2, 1)] {
            let m = UrnModel::new(a, b, c, d, 1, 1).unwrap();
            let e = m.eigenvectors().unwrap();
            let s = m.s() as i64;
            let rv1 = m.apply_transpose(e.v1);
            let rv2 = m.apply_transpose(e.v2);
            assert_eq!(rv1, [e.v1[0] * s, e.v1[1] * s]);
            assert_eq!(rv2, [e.v2[0] * m.m(), e.v2[1] * m.m()]);
        }
    }

    #[test]
    fn step_adds_rows() {
        let m = UrnModel::new(2, 1, 1, 2, 1, 1).unwrap();
        let s0 = m.initial_state();
        assert_eq!(s0.step(&m, true), UrnState { n: 1, x: 3, y: 2 });
        assert_eq!(s0.step(&m, false), UrnState { n: 1, x: 2, y: 3 });
    }

    #[test]
    fn parse_flags() {
        let m = UrnModel::parse("2,1,1,2", "1,1").unwrap();
        assert_eq!(m.label(), "(2,1,1,2|1,1)");
        assert!(matches!(
            UrnModel::parse("2,1,1", "1,1"),
            Err(ParseModelError::Malformed { expected: 4, .. })
        ));
        assert!(matches!(
            UrnModel::parse("2,1,1,3", "1,1"),
            Err(ParseModelError::Model(ModelError::BalanceViolation { .. }))
        ));
    }

    #[test]
    fn rational_formatting() {
        assert_eq!(format_rational(r(1, 3)), "1/3");
        assert_eq!(format_rational(r(-2, 4)), "-1/2");
        assert_eq!(format_rational(r(3, 1)), "3");
    }

    #[test]
    fn validate_rejects_broken_paths() {
        let m = UrnModel::new(2, 1, 1, 2, 1, 1).unwrap();
        let s0 = m.initial_state();
        let good = Trajectory::from_parts(m.clone(), vec![s0, s0.step(&m, true)], Some(vec![true]));
        assert!(good.validate().is_ok());
        let wrong_draw =
            Trajectory::from_parts(m.clone(), vec![s0, s0.step(&m, true)], Some(vec![false]));
        assert!(matches!(
            wrong_draw.validate(),
            Err(TrajectoryError::BadTransition { .. })
        ));
        let bad_total = Trajectory::from_parts(
            m.clone(),
            vec![s0, UrnState { n: 1, x: 3, y: 3 }],
            None,
        );
        assert!(matches!(
            bad_total.validate(),
            Err(TrajectoryError::TotalMismatch { .. })
        ));
    }
}
