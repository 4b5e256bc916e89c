//! Statistical and exact checks of the urn limit theorems.
//!
//! Every check is deterministic given its seed. A gating report passes when
//! `|statistic - reference| <= tolerance`; diagnostics carry `pass = None`.

use std::fmt;
use std::str::FromStr;

use num_traits::Zero;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{run, EngineError, Functional, SimConfig};
use crate::formulas::{
    clt_gamma, finite_moments_recursive, large_urn_moments, mean_un_exact, w_estimator_moments,
    FormulaError,
};
use crate::martingale::{exact_qvar, exact_values};
use crate::model::{Regime, UrnModel};
use crate::oracle::{for_each_path, oracle_enumerate, OracleError};
use crate::rng::{derive_seed, RandomStream};
use crate::sim::run_to;
use crate::stats::{beta_cdf, ks_critical, ks_statistic, normal_cdf, Moments};

pub const KS_LEVEL: f64 = 0.01;
pub const Z_MOMENT: f64 = 3.0;
pub const PROXY_RATIO: u64 = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("DegenerateProxy: N / n = {ratio} is below {PROXY_RATIO}")]
    DegenerateProxy { ratio: f64 },
}

impl From<crate::sim::SimError> for VerifyError {
    fn from(e: crate::sim::SimError) -> Self {
        VerifyError::Engine(e.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub name: String,
    pub statistic: f64,
    pub reference: f64,
    pub tolerance: f64,
    pub pass: Option<bool>,
    pub seed: u64,
    pub reps: u64,
    pub horizon: u64,
    pub notes: String,
}

impl VerifyReport {
    pub fn is_gating(&self) -> bool {
        self.pass.is_some()
    }

    pub fn failed(&self) -> bool {
        self.pass == Some(false)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("reports serialise")
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = match self.pass {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "INFO",
        };
        write!(
            f,
            "{verdict} {}: statistic {:.6} reference {:.6} tolerance {:.3e}",
            self.name, self.statistic, self.reference, self.tolerance
        )?;
        if !self.notes.is_empty() {
            write!(f, " ({})", self.notes)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Meta {
    seed: u64,
    reps: u64,
    horizon: u64,
}

fn gate(name: String, statistic: f64, reference: f64, tolerance: f64, meta: Meta, notes: impl Into<String>) -> VerifyReport {
    VerifyReport {
        name,
        statistic,
        reference,
        tolerance,
        pass: Some((statistic - reference).abs() <= tolerance),
        seed: meta.seed,
        reps: meta.reps,
        horizon: meta.horizon,
        notes: notes.into(),
    }
}

fn diagnostic(name: String, statistic: f64, reference: f64, meta: Meta, notes: impl Into<String>) -> VerifyReport {
    VerifyReport {
        name,
        statistic,
        reference,
        tolerance: f64::NAN,
        pass: None,
        seed: meta.seed,
        reps: meta.reps,
        horizon: meta.horizon,
        notes: notes.into(),
    }
}

fn require(model: &UrnModel, ok: bool, what: &'static str, expected: &'static str) -> Result<(), VerifyError> {
    if ok {
        Ok(())
    } else {
        Err(FormulaError::mismatch(what, expected, model).into())
    }
}

/// `M_n` against `Beta(alpha / S, beta / S)`.
pub fn check_beta_limit(model: &UrnModel, n: u64, reps: u64, seed: u64) -> Result<Vec<VerifyReport>, VerifyError> {
    require(model, model.regime() == Regime::Traditional, "Beta limit", "Traditional")?;
    let s = model.s() as f64;
    let (a, b) = (model.alpha() as f64 / s, model.beta() as f64 / s);
    let summary = run(&SimConfig::new(model.clone(), n, reps, seed, Functional::FinalState))?;
    let mut sample = summary.final_sample("proportion");
    let moments = Moments::from_slice(&sample);
    let meta = Meta { seed, reps, horizon: n };
    let label = model.label();
    let d = ks_statistic(&mut sample, beta_cdf(a, b));
    Ok(vec![
        gate(
            format!("beta.ks {label}"),
            d,
            0.0,
            ks_critical(reps as usize, KS_LEVEL),
            meta,
            format!("Beta({a}, {b}); M_n differs from its limit by O(n^-1/2) per path"),
        ),
        gate(
            format!("beta.mean {label}"),
            moments.mean,
            a / (a + b),
            Z_MOMENT * moments.std_error(),
            meta,
            "",
        ),
    ])
}

/// `sqrt(n) (M_N - M_n) / sqrt(M_n (1 - M_n))` against `N(0, 1)`, with
/// `M_N` standing in for the limit.
pub fn check_traditional_clt(
    model: &UrnModel,
    n: u64,
    big_n: u64,
    reps: u64,
    seed: u64,
) -> Result<Vec<VerifyReport>, VerifyError> {
    require(model, model.regime() == Regime::Traditional, "traditional CLT", "Traditional")?;
    if big_n < PROXY_RATIO * n {
        return Err(VerifyError::DegenerateProxy {
            ratio: big_n as f64 / n as f64,
        });
    }
    let cfg = SimConfig::new(model.clone(), big_n, reps, seed, Functional::FinalState)
        .with_checkpoints(vec![n, big_n]);
    let summary = run(&cfg)?;
    let early = summary.sample(0, "proportion");
    let late = summary.sample(1, "proportion");
    let mut stat: Vec<f64> = early
        .iter()
        .zip(&late)
        .map(|(&mn, &mbig)| (n as f64).sqrt() * (mbig - mn) / (mn * (1.0 - mn)).sqrt())
        .collect();
    let moments = Moments::from_slice(&stat);
    let meta = Meta { seed, reps, horizon: big_n };
    let label = model.label();
    let proxy = format!("M_N with N = {big_n} replaces the limit; the proxy shrinks the variance by about n/N");
    let d = ks_statistic(&mut stat, normal_cdf(0.0, 1.0));
    Ok(vec![
        gate(format!("tradclt.variance {label}"), moments.variance(), 1.0, 0.05, meta, proxy),
        gate(
            format!("tradclt.ks {label}"),
            d,
            0.0,
            ks_critical(reps as usize, KS_LEVEL),
            meta,
            "",
        ),
        gate(
            format!("tradclt.mean {label}"),
            moments.mean,
            0.0,
            Z_MOMENT * moments.std_error(),
            meta,
            "",
        ),
        gate(format!("tradclt.kurtosis {label}"), moments.kurtosis(), 3.0, 0.3, meta, ""),
    ])
}

/// `(U_n - n v1) / sqrt(n)` (Small) or `/ sqrt(n ln n)` (Critical),
/// projected on `(1, -1) / sqrt 2`, against `N(0, 2 gamma)`.
pub fn check_clt(model: &UrnModel, n: u64, reps: u64, seed: u64) -> Result<Vec<VerifyReport>, VerifyError> {
    let regime = model.regime();
    require(
        model,
        matches!(regime, Regime::Small | Regime::Critical),
        "CLT",
        "Small or Critical",
    )?;
    let gamma = clt_gamma(model)?;
    let reference = 2.0 * gamma;
    let summary = run(&SimConfig::new(model.clone(), n, reps, seed, Functional::ScaledDeviation))?;
    let mut minus = summary.final_sample("z_minus");
    let plus = summary.final_sample("z_plus");
    let moments = Moments::from_slice(&minus);
    let meta = Meta { seed, reps, horizon: n };
    let label = model.label();
    let nf = n as f64;
    let r2 = if regime == Regime::Critical { nf * nf.ln() } else { nf };
    // the deviation from E[U_n] has zero (1, 1) component, so the scaled
    // (1, 1) projection of U_n - n v1 is the constant tau / sqrt(2 r_n^2)
    let expected_plus = model.tau() as f64 / (2.0 * r2).sqrt();
    let worst_plus = plus
        .iter()
        .map(|v| (v - expected_plus).abs())
        .fold(0.0, f64::max);
    let exact_var = 2.0 * finite_moments_recursive(model, n).var_x / r2;
    let d = ks_statistic(&mut minus, normal_cdf(0.0, reference.sqrt()));
    Ok(vec![
        gate(
            format!("clt.variance {label}"),
            moments.variance(),
            reference,
            0.05 * reference,
            meta,
            format!("exact finite-n variance {exact_var:.6}"),
        ),
        gate(
            format!("clt.ks {label}"),
            d,
            0.0,
            ks_critical(reps as usize, KS_LEVEL),
            meta,
            format!("against N(0, {reference})"),
        ),
        gate(
            format!("clt.sum_projection {label}"),
            worst_plus,
            0.0,
            1e-9,
            meta,
            "max deviation of the (1,1) projection of U_n - E[U_n] from 0",
        ),
    ])
}

fn qsl_run(model: &UrnModel, horizon: u64, seed: u64) -> Result<(f64, f64), VerifyError> {
    let regime = model.regime();
    require(
        model,
        matches!(regime, Regime::Small | Regime::Critical),
        "strong laws",
        "Small or Critical",
    )?;
    clt_gamma(model)?;
    let s = run(&SimConfig::new(model.clone(), horizon, 1, seed, Functional::QslSum))?;
    Ok((s.final_sample("qsl")[0], s.final_sample("lil_sup")[0]))
}

/// Single-path quadratic strong law, within 25% of `2 gamma`.
pub fn check_qsl(model: &UrnModel, horizon: u64, seed: u64) -> Result<VerifyReport, VerifyError> {
    let (qsl, _) = qsl_run(model, horizon, seed)?;
    let reference = 2.0 * clt_gamma(model)?;
    let notes = match model.regime() {
        Regime::Critical => "(1/ln ln n) sum_{k>=2} |U_k - k v1|^2 / (k ln k)^2",
        _ => "(1/ln n) sum_k |U_k - k v1|^2 / k^2",
    };
    Ok(gate(
        format!("qsl {}", model.label()),
        qsl,
        reference,
        0.25 * reference,
        Meta { seed, reps: 1, horizon },
        notes,
    ))
}

/// Running supremum of the LIL ratio; never gating.
pub fn lil_diagnostic(model: &UrnModel, horizon: u64, seed: u64) -> Result<VerifyReport, VerifyError> {
    let (_, sup) = qsl_run(model, horizon, seed)?;
    let reference = 2.0 * clt_gamma(model)?;
    let notes = match model.regime() {
        Regime::Critical => {
            "diagnostic only; sup_{n>=16} |U_n - n v1|^2 / (2 n ln n lnlnln n)"
        }
        _ => "diagnostic only; sup_{n>=3} |U_n - n v1|^2 / (2 n ln ln n)",
    };
    Ok(diagnostic(
        format!("lil {}", model.label()),
        sup,
        reference,
        Meta { seed, reps: 1, horizon },
        notes,
    ))
}

/// Moments of the `W` estimate against the limit closed forms and against
/// the exact finite-`n` moments, plus `U_n / n -> v1` on one long path.
pub fn check_large_urn(
    model: &UrnModel,
    n: u64,
    reps: u64,
    long_horizon: u64,
    seed: u64,
) -> Result<Vec<VerifyReport>, VerifyError> {
    require(model, model.regime() == Regime::Large, "large-urn check", "Large")?;
    let limit = large_urn_moments(model)?;
    let (finite_mean, finite_second) = w_estimator_moments(model, n)?;
    let summary = run(&SimConfig::new(model.clone(), n, reps, seed, Functional::WEstimate))?;
    let m = summary.final_moments("w");
    let meta = Meta { seed, reps, horizon: n };
    let label = model.label();
    let second = m.raw_second();
    let second_se = m.raw_second_std_error();

    let path_seed = derive_seed(seed, "long-path");
    let last = run_to(model, long_horizon, &mut RandomStream::new(path_seed, 0))?;
    let v1 = model.v1_f64().expect("large urns have b + c > 0");
    let ratio = [
        last.x as f64 / long_horizon as f64 / v1[0],
        last.y as f64 / long_horizon as f64 / v1[1],
    ];
    let worst = if (ratio[0] - 1.0).abs() > (ratio[1] - 1.0).abs() { ratio[0] } else { ratio[1] };
    let path_meta = Meta {
        seed: path_seed,
        reps: 1,
        horizon: long_horizon,
    };

    Ok(vec![
        gate(
            format!("large.mean {label}"),
            m.mean,
            limit.ew,
            Z_MOMENT * m.std_error(),
            meta,
            format!("exact finite-n mean {finite_mean:.6}"),
        ),
        gate(
            format!("large.second_moment {label}"),
            second,
            limit.ew2,
            Z_MOMENT * second_se,
            meta,
            "limit value; the estimator's bias decays like n^(1 - 2 sigma)".to_string(),
        ),
        gate(
            format!("large.second_moment_finite_n {label}"),
            second,
            finite_second,
            Z_MOMENT * second_se,
            meta,
            "exact E[W_n^2] from the variance recursion",
        ),
        gate(
            format!("large.u_over_n {label}"),
            worst,
            1.0,
            0.01,
            path_meta,
            "U_n / n relative to v1, worst coordinate",
        ),
    ])
}

/// Exact agreement of closed forms and martingale identities with the
/// enumerated law, for `n = 1..=max_n`.
pub fn check_oracle(model: &UrnModel, max_n: u64) -> Result<Vec<VerifyReport>, VerifyError> {
    let mut mean_mismatch = 0u64;
    let mut mart_mismatch = 0u64;
    for n in 1..=max_n {
        let dist = oracle_enumerate(model, n)?;
        if dist.mean() != mean_un_exact(model, n) {
            mean_mismatch += 1;
        }
        // E[M_n] = M_0 and E[(M_n - M_0)^2] = E[<M>_n], exactly
        let mut first = num_rational::BigRational::zero();
        let mut second = num_rational::BigRational::zero();
        let mut qvar = num_rational::BigRational::zero();
        let mut failed: Option<FormulaError> = None;
        let m0 = exact_values(model, &[model.initial_state()])?[0][0].clone();
        for_each_path(model, n, |states, _, p| {
            let values = match exact_values(model, &states[states.len() - 1..]) {
                Ok(v) => v,
                Err(e) => {
                    failed.get_or_insert(e);
                    return;
                }
            };
            let q = match exact_qvar(model, states) {
                Ok(q) => q,
                Err(e) => {
                    failed.get_or_insert(e);
                    return;
                }
            };
            let d = &values[0][0] - &m0;
            first += p * &d;
            second += p * &d * &d;
            qvar += p * q.last().expect("nonempty");
        })?;
        if let Some(e) = failed {
            return Err(e.into());
        }
        if !first.is_zero() || second != qvar {
            mart_mismatch += 1;
        }
    }
    let meta = Meta {
        seed: 0,
        reps: 1,
        horizon: max_n,
    };
    let label = model.label();
    Ok(vec![
        gate(
            format!("oracle.mean {label}"),
            mean_mismatch as f64,
            0.0,
            0.0,
            meta,
            format!("horizons 1..={max_n} with exact E[U_n] mismatches"),
        ),
        gate(
            format!("oracle.martingale {label}"),
            mart_mismatch as f64,
            0.0,
            0.0,
            meta,
            "horizons where E[M_n] != M_0 or E[(M_n - M_0)^2] != E[<M>_n]",
        ),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CheckKind {
    Beta,
    TradClt,
    Clt,
    Qsl,
    Lil,
    Large,
    Oracle,
}

impl CheckKind {
    pub const ALL: [CheckKind; 7] = [
        CheckKind::Beta,
        CheckKind::TradClt,
        CheckKind::Clt,
        CheckKind::Qsl,
        CheckKind::Lil,
        CheckKind::Large,
        CheckKind::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Beta => "beta",
            CheckKind::TradClt => "tradclt",
            CheckKind::Clt => "clt",
            CheckKind::Qsl => "qsl",
            CheckKind::Lil => "lil",
            CheckKind::Large => "large",
            CheckKind::Oracle => "oracle",
        }
    }
}

impl FromStr for CheckKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        CheckKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown check {s:?}"))
    }
}

/// Horizons and replicate counts for the suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scale {
    pub beta_n: u64,
    pub beta_reps: u64,
    pub tradclt_n: u64,
    pub tradclt_reps: u64,
    pub clt_n: u64,
    pub clt_reps: u64,
    pub path_n: u64,
    pub large_n: u64,
    pub large_reps: u64,
    pub large_alt_reps: u64,
    pub oracle_n: u64,
}

impl Scale {
    pub const FULL: Scale = Scale {
        beta_n: 10_000,
        beta_reps: 10_000,
        tradclt_n: 1_000,
        tradclt_reps: 10_000,
        clt_n: 100_000,
        clt_reps: 10_000,
        path_n: 1_000_000,
        large_n: 100_000,
        large_reps: 100_000,
        large_alt_reps: 10_000,
        oracle_n: 10,
    };

    pub const QUICK: Scale = Scale {
        beta_n: 1_000,
        beta_reps: 2_000,
        tradclt_n: 100,
        tradclt_reps: 2_000,
        clt_n: 5_000,
        clt_reps: 2_000,
        path_n: 100_000,
        large_n: 2_000,
        large_reps: 2_000,
        large_alt_reps: 1_000,
        oracle_n: 6,
    };
}

/// The fixed model grid: four matrices, each with `(alpha, beta)` in
/// `{(1, 1), (2, 1)}`.
pub fn grid() -> Vec<UrnModel> {
    let matrices = [(1, 0, 0, 1), (2, 1, 1, 2), (3, 1, 1, 3), (4, 1, 1, 4)];
    let mut out = Vec::new();
    for (a, b, c, d) in matrices {
        for (alpha, beta) in [(1, 1), (2, 1)] {
            out.push(UrnModel::new(a, b, c, d, alpha, beta).expect("grid models are valid"));
        }
    }
    out
}

/// Grid model with matrix `(a, 1, 1, a)` (or the identity for `a = 1`) and
/// initial composition `(alpha, 1)`.
pub fn grid_model(a: u64, alpha: u64) -> UrnModel {
    let (b, c, d) = if a == 1 { (0, 0, 1) } else { (1, 1, a) };
    UrnModel::new(a, b, c, d, alpha, 1).expect("grid models are valid")
}

/// Seed of the named check on `model` under master seed `master`.
pub fn check_seed(master: u64, check: &str, model: &UrnModel) -> u64 {
    derive_seed(master, &format!("{check} {}", model.label()))
}

/// Runs the selected checks at `scale`; seeds are derived from `seed` and
/// the check name, so a report does not depend on which others ran.
pub fn run_suite(kinds: &[CheckKind], scale: Scale, seed: u64) -> Result<Vec<VerifyReport>, VerifyError> {
    let mut out = Vec::new();
    let sub = |name: &str, model: &UrnModel| check_seed(seed, name, model);
    for &kind in CheckKind::ALL.iter().filter(|k| kinds.contains(k)) {
        match kind {
            CheckKind::Beta => {
                for alpha in [1, 2] {
                    let m = grid_model(1, alpha);
                    out.extend(check_beta_limit(&m, scale.beta_n, scale.beta_reps, sub("beta", &m))?);
                }
            }
            CheckKind::TradClt => {
                let m = grid_model(1, 1);
                out.extend(check_traditional_clt(
                    &m,
                    scale.tradclt_n,
                    PROXY_RATIO * scale.tradclt_n,
                    scale.tradclt_reps,
                    sub("tradclt", &m),
                )?);
            }
            CheckKind::Clt => {
                for a in [2, 3] {
                    let m = grid_model(a, 1);
                    out.extend(check_clt(&m, scale.clt_n, scale.clt_reps, sub("clt", &m))?);
                }
            }
            CheckKind::Qsl => {
                for a in [2, 3] {
                    let m = grid_model(a, 1);
                    out.push(check_qsl(&m, scale.path_n, sub("path", &m))?);
                }
            }
            CheckKind::Lil => {
                for a in [2, 3] {
                    let m = grid_model(a, 1);
                    out.push(lil_diagnostic(&m, scale.path_n, sub("path", &m))?);
                }
            }
            CheckKind::Large => {
                let m = grid_model(4, 1);
                out.extend(check_large_urn(&m, scale.large_n, scale.large_reps, scale.path_n, sub("large", &m))?);
                let m = grid_model(4, 2);
                out.extend(check_large_urn(&m, scale.large_n, scale.large_alt_reps, scale.path_n, sub("large", &m))?);
            }
            CheckKind::Oracle => {
                for m in grid() {
                    out.extend(check_oracle(&m, scale.oracle_n)?);
                }
            }
        }
    }
    Ok(out)
}

/// JSON lines, one report per line.
pub fn to_json_lines(reports: &[VerifyReport]) -> String {
    let mut s = String::new();
    for r in reports {
        s.push_str(&r.to_json_line());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_eight_models() {
        let g = grid();
        assert_eq!(g.len(), 8);
        assert_eq!(g[0].regime(), Regime::Traditional);
        assert_eq!(g[7].regime(), Regime::Large);
        assert_eq!(grid_model(3, 2).label(), "(3,1,1,3|2,1)");
    }

    #[test]
    fn regime_preconditions() {
        let small = grid_model(2, 1);
        assert!(matches!(
            check_beta_limit(&small, 10, 10, 1),
            Err(VerifyError::Formula(FormulaError::RegimeMismatch { .. }))
        ));
        assert!(check_large_urn(&small, 10, 10, 10, 1).is_err());
        assert!(check_clt(&grid_model(4, 1), 10, 10, 1).is_err());
        let degenerate = UrnModel::new(2, 0, 1, 1, 1, 1).unwrap();
        assert_eq!(
            check_clt(&degenerate, 10, 10, 1),
            Err(VerifyError::Formula(FormulaError::DegenerateUrn))
        );
    }

    #[test]
    fn proxy_ratio_enforced() {
        let m = grid_model(1, 1);
        assert!(matches!(
            check_traditional_clt(&m, 100, 9_999, 10, 1),
            Err(VerifyError::DegenerateProxy { .. })
        ));
    }

    #[test]
    fn oracle_passes_on_grid() {
        for m in grid() {
            for r in check_oracle(&m, 7).unwrap() {
                assert_eq!(r.pass, Some(true), "{r}");
            }
        }
    }

    #[test]
    fn report_json_schema() {
        let r = gate("x".into(), 1.0, 1.0, 0.0, Meta { seed: 4, reps: 2, horizon: 3 }, "");
        let v: serde_json::Value = serde_json::from_str(&r.to_json_line()).unwrap();
        for key in ["name", "statistic", "reference", "tolerance", "pass", "seed", "reps", "horizon", "notes"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let d = diagnostic("y".into(), 1.0, 2.0, Meta { seed: 0, reps: 1, horizon: 1 }, "");
        assert!(!d.is_gating());
        assert!(!d.failed());
    }

    #[test]
    fn check_kind_parsing() {
        assert_eq!("tradclt".parse::<CheckKind>(), Ok(CheckKind::TradClt));
        assert!("nope".parse::<CheckKind>().is_err());
    }
}
