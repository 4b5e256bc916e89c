//! Closed-form quantities of balanced urns.
//!
//! Notation: `x = tau / S`, `sigma = m / S`, `D = b alpha - c beta`.
//!
//! * `sigma_n = prod_{k<n} (1 + m / tau_k)^{-1}
//!            = Gamma(n + x) Gamma(x + sigma) / (Gamma(x) Gamma(n + x + sigma))`
//! * `lambda = lim n^sigma sigma_n = Gamma(x + sigma) / Gamma(x)`
//! * `w_n = sum_{k=1}^n sigma_k^2`
//! * `E[U_n] = (n + x) v1 + sigma_n^{-1} (D / S) v2` when `b + c > 0`,
//!   `E[U_n] = U_0 tau_n / tau` for diagonal `R`.

use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::gamma::{ln_gamma_ratio, GammaError, SignedLog};
use crate::model::{format_rational, Regime, UrnModel};
use crate::stats::NeumaierSum;

/// Horizons up to this use the exact big-integer product for `sigma_n`.
pub const EXACT_SIGMA_LIMIT: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormulaError {
    #[error(transparent)]
    Gamma(#[from] GammaError),
    #[error("GammaPole: sigma_n is infinite because tau + m = 0")]
    SingularNormalizer,
    #[error("RegimeMismatch: {what} needs {expected}, model is {found}")]
    RegimeMismatch {
        what: &'static str,
        expected: &'static str,
        found: Regime,
    },
    #[error("DegenerateUrn: the limit theorems need b c != 0")]
    DegenerateUrn,
}

impl FormulaError {
    pub(crate) fn mismatch(what: &'static str, expected: &'static str, model: &UrnModel) -> Self {
        FormulaError::RegimeMismatch {
            what,
            expected,
            found: model.regime(),
        }
    }
}

pub(crate) fn rational_to_big(r: Rational64) -> BigRational {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

/// Correctly scaled `num / den` as `f64` (relative error below `2^-52`) for
/// integers of any size.
pub fn big_ratio_to_f64(num: &BigInt, den: &BigInt) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    let negative = num.is_negative() != den.is_negative();
    let n = num.magnitude();
    let d = den.magnitude();
    let shift = d.bits() as i64 - n.bits() as i64 + 64;
    let q = if shift >= 0 {
        (n << shift as usize) / d
    } else {
        n / (d << (-shift) as usize)
    };
    let mut v = q.to_f64().unwrap_or(f64::INFINITY);
    // Split the exponent so neither factor overflows.
    let mut e = -shift;
    while e != 0 {
        let step = e.clamp(-1000, 1000);
        v *= 2f64.powi(step as i32);
        e -= step;
    }
    if negative {
        -v
    } else {
        v
    }
}

/// Running exact product `sigma_n = num / den` over `n = 0, 1, 2, ...`,
/// kept unreduced so that each step costs one small-by-big multiplication.
#[derive(Debug, Clone)]
pub struct SigmaProduct {
    tau: i128,
    s: i128,
    m: i128,
    n: u64,
    num: BigInt,
    den: BigInt,
}

impl SigmaProduct {
    pub fn new(model: &UrnModel) -> Self {
        Self {
            tau: model.tau() as i128,
            s: model.s() as i128,
            m: model.m() as i128,
            n: 0,
            num: BigInt::one(),
            den: BigInt::one(),
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Multiplies in the factor `tau_n / (tau_n + m)`.
    pub fn advance(&mut self) -> Result<(), FormulaError> {
        let tau_n = self.tau + self.n as i128 * self.s;
        let shifted = tau_n + self.m;
        if shifted == 0 {
            return Err(FormulaError::SingularNormalizer);
        }
        self.num *= BigInt::from(tau_n);
        self.den *= BigInt::from(shifted);
        self.n += 1;
        Ok(())
    }

    pub fn value(&self) -> f64 {
        big_ratio_to_f64(&self.num, &self.den)
    }

    pub fn exact(&self) -> BigRational {
        BigRational::new(self.num.clone(), self.den.clone())
    }

    /// `sigma_n^{-1}` exactly; finite even when `sigma_n` is not.
    pub fn exact_inverse(&self) -> BigRational {
        BigRational::new(self.den.clone(), self.num.clone())
    }
}

/// `sigma_n` as an exact rational.
pub fn sigma_n_exact(model: &UrnModel, n: u64) -> Result<BigRational, FormulaError> {
    let mut p = SigmaProduct::new(model);
    for _ in 0..n {
        p.advance()?;
    }
    Ok(p.exact())
}

/// `sigma_n^{-1} = prod_{k<n} (1 + m / tau_k)` as an exact rational.
pub fn inv_sigma_n_exact(model: &UrnModel, n: u64) -> BigRational {
    let tau = model.tau() as i128;
    let s = model.s() as i128;
    let m = model.m() as i128;
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for k in 0..n as i128 {
        let tau_k = tau + k * s;
        num *= BigInt::from(tau_k + m);
        den *= BigInt::from(tau_k);
    }
    BigRational::new(num, den)
}

/// `sigma_n` from the exact product, rounded once to `f64`.
pub fn sigma_n_product(model: &UrnModel, n: u64) -> Result<f64, FormulaError> {
    let mut p = SigmaProduct::new(model);
    for _ in 0..n {
        p.advance()?;
    }
    Ok(p.value())
}

/// `ln |sigma_n|` with sign, from the Gamma form.
pub fn ln_sigma_n_gamma(model: &UrnModel, n: u64) -> Result<SignedLog, FormulaError> {
    if n == 0 {
        return Ok(SignedLog {
            ln_abs: 0.0,
            sign: 1.0,
        });
    }
    let x = model.tau_over_s();
    let sigma = model.sigma_f64();
    let head = ln_gamma_ratio(n as f64 + x, sigma)?;
    let base = ln_gamma_ratio(x, sigma)?;
    Ok(head / base)
}

/// `sigma_n` from the Gamma form.
pub fn sigma_n_gamma(model: &UrnModel, n: u64) -> Result<f64, FormulaError> {
    ln_sigma_n_gamma(model, n).map(SignedLog::value)
}

/// `sigma_n`: exact product up to [`EXACT_SIGMA_LIMIT`], Gamma form beyond,
/// falling back to a floating product if the Gamma form hits a pole.
pub fn sigma_n(model: &UrnModel, n: u64) -> Result<f64, FormulaError> {
    if n <= EXACT_SIGMA_LIMIT {
        return sigma_n_product(model, n);
    }
    match sigma_n_gamma(model, n) {
        Ok(v) => Ok(v),
        Err(FormulaError::Gamma(_)) => float_sigma_product(model, n),
        Err(e) => Err(e),
    }
}

fn float_sigma_product(model: &UrnModel, n: u64) -> Result<f64, FormulaError> {
    let mut v = 1.0;
    for k in 0..n {
        let tau_k = model.tau() as f64 + (k * model.s()) as f64;
        let f = 1.0 + model.m() as f64 / tau_k;
        if f == 0.0 {
            return Err(FormulaError::SingularNormalizer);
        }
        v /= f;
    }
    Ok(v)
}

/// Streaming `sigma_0, sigma_1, ...` with the same branch choice as
/// [`sigma_n`], at amortised cost per step.
#[derive(Debug, Clone)]
pub struct SigmaSequence {
    model: UrnModel,
    exact: Option<SigmaProduct>,
    n: u64,
    current: f64,
}

impl SigmaSequence {
    pub fn new(model: &UrnModel) -> Self {
        Self {
            model: model.clone(),
            exact: Some(SigmaProduct::new(model)),
            n: 0,
            current: 1.0,
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// `sigma_n` at the current index.
    pub fn current(&self) -> f64 {
        self.current
    }

    /// Moves to `n + 1` and returns `sigma_{n+1}`.
    pub fn advance(&mut self) -> Result<f64, FormulaError> {
        let next = self.n + 1;
        if next <= EXACT_SIGMA_LIMIT {
            let p = self.exact.as_mut().expect("exact product kept below the limit");
            p.advance()?;
            self.current = p.value();
        } else {
            self.exact = None;
            self.current = match sigma_n_gamma(&self.model, next) {
                Ok(v) => v,
                Err(FormulaError::Gamma(_)) => {
                    let tau_k = self.model.tau() as f64 + self.n as f64 * self.model.s() as f64;
                    self.current * tau_k / (tau_k + self.model.m() as f64)
                }
                Err(e) => return Err(e),
            };
        }
        self.n = next;
        Ok(self.current)
    }
}

/// `sigma_n^{-1}`; zero (rather than an error) when `tau + m = 0`.
pub fn inv_sigma_n(model: &UrnModel, n: u64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    if model.tau() as i64 + model.m() == 0 {
        return 0.0;
    }
    1.0 / sigma_n(model, n).expect("tau + m != 0 excludes every pole")
}

/// `lambda = Gamma(x + sigma) / Gamma(x)`.
pub fn lambda(model: &UrnModel) -> Result<f64, FormulaError> {
    let r = ln_gamma_ratio(model.tau_over_s(), model.sigma_f64())?;
    Ok(r.recip().value())
}

/// Iterator over `sigma_1, sigma_2, ...` by the floating running product.
struct SigmaRun<'a> {
    model: &'a UrnModel,
    k: u64,
    value: f64,
}

impl<'a> SigmaRun<'a> {
    fn new(model: &'a UrnModel) -> Result<Self, FormulaError> {
        if model.tau() as i64 + model.m() == 0 {
            return Err(FormulaError::SingularNormalizer);
        }
        Ok(Self {
            model,
            k: 0,
            value: 1.0,
        })
    }
}

impl Iterator for SigmaRun<'_> {
    type Item = f64;
    fn next(&mut self) -> Option<f64> {
        let tau_k = self.model.tau() as f64 + self.k as f64 * self.model.s() as f64;
        self.value *= tau_k / (tau_k + self.model.m() as f64);
        self.k += 1;
        Some(self.value)
    }
}

/// `w_n = sum_{k=1}^n sigma_k^2` (zero for `n = 0`).
pub fn w_n(model: &UrnModel, n: u64) -> Result<f64, FormulaError> {
    if n == 0 {
        return Ok(0.0);
    }
    let mut acc = NeumaierSum::default();
    for s in SigmaRun::new(model)?.take(n as usize) {
        acc.add(s * s);
    }
    Ok(acc.sum())
}

/// Growth scale of `w_n`: `n^{1 - 2 sigma}` (Small), `ln n` (Critical),
/// `1` otherwise.
pub fn w_growth_scale(model: &UrnModel, n: u64) -> f64 {
    let n = n as f64;
    match model.regime() {
        Regime::Small => n.powf(1.0 - 2.0 * model.sigma_f64()),
        Regime::Critical => n.ln(),
        Regime::Large | Regime::Traditional => 1.0,
    }
}

/// Limit of `w_n / w_growth_scale(n)`.
///
/// Small: `lambda^2 / (1 - 2 sigma)`. Critical: `lambda^2` (`sigma_k^2 ~
/// lambda^2 / k`). Large and traditional (`sigma > 1/2`): the value of the
/// convergent series `sum_{k>=1} sigma_k^2`.
pub fn w_asymptote(model: &UrnModel) -> Result<f64, FormulaError> {
    match model.regime() {
        Regime::Small => {
            let l = lambda(model)?;
            Ok(l * l / (1.0 - 2.0 * model.sigma_f64()))
        }
        Regime::Critical => {
            let l = lambda(model)?;
            Ok(l * l)
        }
        Regime::Large | Regime::Traditional => w_series_limit(model),
    }
}

/// `Gamma(x + 1/2) / Gamma(x)`, which is `lambda` itself for a critical urn.
/// The `w_n / ln n` limit is its square.
pub fn critical_unsquared_constant(model: &UrnModel) -> Result<f64, FormulaError> {
    if model.regime() != Regime::Critical {
        return Err(FormulaError::mismatch(
            "critical w_n constant",
            "Critical",
            model,
        ));
    }
    Ok(ln_gamma_ratio(model.tau_over_s(), 0.5)?.recip().value())
}

/// Direct summation length before the analytic tail takes over.
const SERIES_DIRECT_TERMS: u64 = 1_000_000;

/// `sum_{k>=1} sigma_k^2` for `sigma > 1/2`.
///
/// Terms decay like `k^{-2 sigma}`, far too slowly to sum to a small tail, so
/// the first [`SERIES_DIRECT_TERMS`] terms are summed directly and the rest
/// by Euler–Maclaurin: the tail integral of `sigma(t)^2` (Gamma form at real
/// `t`) is computed by Gauss–Legendre quadrature after the substitution
/// `t = K u^{-1/(2 sigma - 1)}`, which makes the integrand nearly constant.
pub fn w_series_limit(model: &UrnModel) -> Result<f64, FormulaError> {
    let sigma = model.sigma_f64();
    if sigma <= 0.5 {
        return Err(FormulaError::mismatch(
            "convergent w series",
            "Large or Traditional",
            model,
        ));
    }
    let k_max = SERIES_DIRECT_TERMS;
    let head = w_n(model, k_max)?;
    let tail = sigma_sq_tail(model, k_max)?;
    Ok(head + tail)
}

/// `sum_{k > K} sigma_k^2` via Euler–Maclaurin around `K`.
pub(crate) fn sigma_sq_tail(model: &UrnModel, k_max: u64) -> Result<f64, FormulaError> {
    let sigma = model.sigma_f64();
    let x = model.tau_over_s();
    let base = ln_gamma_ratio(x, sigma)?;
    let ln_lambda = base.recip().ln_abs;
    // ln sigma(t)^2 for real t
    let ln_f = |t: f64| -> Result<f64, FormulaError> {
        let head = ln_gamma_ratio(t + x, sigma)?;
        Ok(2.0 * (head.ln_abs - base.ln_abs))
    };
    let k = k_max as f64;
    let p = 1.0 / (2.0 * sigma - 1.0);
    let ln_k = k.ln();
    let integrand = |u: f64| -> Result<f64, FormulaError> {
        // t = K u^{-p}, dt = K p u^{-p-1} du
        let ln_t = ln_k - p * u.ln();
        let ln_ft = if ln_t > 600.0 {
            2.0 * ln_lambda - 2.0 * sigma * ln_t
        } else {
            ln_f(ln_t.exp())?
        };
        Ok((ln_ft + ln_k + p.ln() - (p + 1.0) * u.ln()).exp())
    };
    let (nodes, weights) = gauss_legendre(24);
    let panels = [0.0, 0.05, 0.25, 0.5, 0.75, 1.0];
    let mut integral = NeumaierSum::default();
    for w in panels.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for (node, weight) in nodes.iter().zip(&weights) {
            integral.add(weight * half * integrand(mid + half * node)?);
        }
    }
    let f = |t: f64| ln_f(t).map(f64::exp);
    let fk = f(k)?;
    let dfk = (f(k + 1.0)? - f(k - 1.0)?) / 2.0;
    Ok(integral.sum() - 0.5 * fk - dfk / 12.0)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub(crate) fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let nf = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=order {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * z * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[order - 1 - i] = z;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

/// `E[U_n]` as exact rationals.
pub fn mean_un_exact(model: &UrnModel, n: u64) -> [BigRational; 2] {
    match model.eigenvectors() {
        None => {
            let scale = BigRational::new(
                BigInt::from(model.tau() + n * model.s()),
                BigInt::from(model.tau()),
            );
            [
                scale.clone() * BigInt::from(model.alpha()),
                scale * BigInt::from(model.beta()),
            ]
        }
        Some(e) => {
            let lead = BigRational::new(
                BigInt::from(n as i128 * model.s() as i128 + model.tau() as i128),
                BigInt::from(model.s()),
            );
            let drift = inv_sigma_n_exact(model, n)
                * BigRational::new(BigInt::from(model.drift_offset()), BigInt::from(model.s()));
            let v1 = e.v1.map(rational_to_big);
            let v2 = e.v2.map(rational_to_big);
            [
                &lead * &v1[0] + &drift * &v2[0],
                &lead * &v1[1] + &drift * &v2[1],
            ]
        }
    }
}

/// `E[U_n]` in floating point.
pub fn mean_un(model: &UrnModel, n: u64) -> [f64; 2] {
    mean_un_given(model, n, inv_sigma_n(model, n))
}

/// `E[U_n]` with a precomputed `sigma_n^{-1}`.
pub fn mean_un_given(model: &UrnModel, n: u64, inv_sigma: f64) -> [f64; 2] {
    let tau_n = model.tau() as f64 + n as f64 * model.s() as f64;
    match (model.v1_f64(), model.v2_f64()) {
        (Some(v1), Some(v2)) => {
            let lead = tau_n / model.s() as f64;
            let drift = inv_sigma * model.drift_offset() as f64 / model.s() as f64;
            [lead * v1[0] + drift * v2[0], lead * v1[1] + drift * v2[1]]
        }
        _ => {
            let scale = tau_n / model.tau() as f64;
            [model.alpha() as f64 * scale, model.beta() as f64 * scale]
        }
    }
}

/// `E[X_n]` and `Var(X_n)` by the one-step recursions
/// `E[X_{n+1}] = E[X_n] (1 + m / tau_n) + c` and
/// `Var_{n+1} = (1 + 2m / tau_n) Var_n + m^2 p_n (1 - p_n)`, `p_n = E[X_n] / tau_n`.
pub fn finite_moments_recursive(model: &UrnModel, n: u64) -> FiniteMoments {
    let m = model.m() as f64;
    let c = model.c() as f64;
    let mut mean = model.alpha() as f64;
    let mut var = 0.0;
    for k in 0..n {
        let tau_k = model.tau() as f64 + k as f64 * model.s() as f64;
        let p = mean / tau_k;
        var = (1.0 + 2.0 * m / tau_k) * var + m * m * p * (1.0 - p);
        mean += c + m * p;
    }
    FiniteMoments {
        n,
        mean_x: mean,
        var_x: var,
    }
}

/// Exact rational version of [`finite_moments_recursive`].
pub fn finite_moments_exact(model: &UrnModel, n: u64) -> (BigRational, BigRational) {
    let m = BigRational::from_integer(BigInt::from(model.m()));
    let c = BigRational::from_integer(BigInt::from(model.c()));
    let one = BigRational::one();
    let mut mean = BigRational::from_integer(BigInt::from(model.alpha()));
    let mut var = BigRational::zero();
    for k in 0..n {
        let tau_k =
            BigRational::from_integer(BigInt::from(model.tau() as i128 + (k * model.s()) as i128));
        let p = &mean / &tau_k;
        let two_m = &m + &m;
        var = (&one + two_m / &tau_k) * &var + &m * &m * &p * (&one - &p);
        mean = &mean + &c + &m * &p;
    }
    (mean, var)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiniteMoments {
    pub n: u64,
    pub mean_x: f64,
    pub var_x: f64,
}

/// Closed forms of the partial sums
/// `A_n = sum_{k=1}^n Gamma(k+x) / Gamma(k+x+2 sigma)`,
/// `B_n = sum_{k=1}^n Gamma(k-1+x+sigma) / Gamma(k+x+2 sigma)`,
/// `C_n = sum_{k=1}^n Gamma(k-1+x+sigma)^2 / (Gamma(k+x) Gamma(k+x+2 sigma))`.
/// Requires `sigma != 0` and `sigma != 1/2`.
pub fn abc_closed(model: &UrnModel, n: u64) -> Result<[f64; 3], FormulaError> {
    let sigma = model.sigma_f64();
    if sigma == 0.0 || model.regime() == Regime::Critical {
        return Err(FormulaError::mismatch(
            "A_n, B_n, C_n closed forms",
            "sigma not in {0, 1/2}",
            model,
        ));
    }
    let x = model.tau_over_s();
    let nf = n as f64;
    let r = |z: f64, d: f64| ln_gamma_ratio(z, d).map(SignedLog::value);
    let a = (r(x + 1.0, 2.0 * sigma - 1.0)? - r(nf + x + 1.0, 2.0 * sigma - 1.0)?)
        / (2.0 * sigma - 1.0);
    let b = (r(x + sigma, sigma)? - r(nf + x + sigma, sigma)?) / sigma;
    // Gamma(z+s)^2 / (Gamma(z) Gamma(z+2s)) = ratio(z+s, s) / ratio(z, s)
    let c_term = |z: f64| -> Result<f64, FormulaError> {
        Ok((ln_gamma_ratio(z + sigma, sigma)? / ln_gamma_ratio(z, sigma)?).value())
    };
    let c = (c_term(nf + x)? - c_term(x)?) / (sigma * sigma);
    Ok([a, b, c])
}

/// `Var(X_n)` from the `A_n, B_n, C_n` closed forms:
/// `sigma^2 / (1 - sigma)^2 * Gamma(n+x+2 sigma) / Gamma(n+x) * S_n` with
/// `S_n = bc A_n + (b - c)(D/S) lambda^{-1} B_n - (D/S)^2 lambda^{-2} C_n`.
pub fn variance_xn_closed(model: &UrnModel, n: u64) -> Result<f64, FormulaError> {
    if model.eigenvectors().is_none() {
        return Err(FormulaError::mismatch(
            "closed-form Var(X_n)",
            "b + c > 0",
            model,
        ));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let sigma = model.sigma_f64();
    let x = model.tau_over_s();
    let [a_n, b_n, c_n] = abc_closed(model, n)?;
    let (b, c) = (model.b() as f64, model.c() as f64);
    let d_over_s = model.drift_offset() as f64 / model.s() as f64;
    let inv_lambda = ln_gamma_ratio(x, sigma)?.value();
    let s_n = b * c * a_n + (b - c) * d_over_s * inv_lambda * b_n
        - d_over_s * d_over_s * inv_lambda * inv_lambda * c_n;
    let growth = ln_gamma_ratio(n as f64 + x, 2.0 * sigma)?.recip().value();
    Ok(sigma * sigma / ((1.0 - sigma) * (1.0 - sigma)) * growth * s_n)
}

/// Symmetric 2x2 matrix `gamma * (1 -1; -1 1)`.
pub fn rank_one_cov(gamma: f64) -> [[f64; 2]; 2] {
    [[gamma, -gamma], [-gamma, gamma]]
}

/// The scalar `gamma` of the CLT covariance `Gamma = gamma (1 -1; -1 1)`:
/// `bc m^2 / ((1 - 2 sigma)(b + c)^2)` for small urns and `bc` for critical
/// ones.
pub fn clt_gamma(model: &UrnModel) -> Result<f64, FormulaError> {
    let (b, c) = (model.b() as f64, model.c() as f64);
    match model.regime() {
        Regime::Small | Regime::Critical if model.b() * model.c() == 0 => {
            Err(FormulaError::DegenerateUrn)
        }
        Regime::Small => {
            let m = model.m() as f64;
            Ok(b * c * m * m / ((1.0 - 2.0 * model.sigma_f64()) * (b + c) * (b + c)))
        }
        Regime::Critical => Ok(b * c),
        _ => Err(FormulaError::mismatch(
            "CLT covariance",
            "Small or Critical",
            model,
        )),
    }
}

pub fn clt_covariance(model: &UrnModel) -> Result<[[f64; 2]; 2], FormulaError> {
    clt_gamma(model).map(rank_one_cov)
}

/// First two moments of the large-urn limit `W`, plus `E[M^2]` of the
/// martingale limit `M = lambda W - D / S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LargeUrnMoments {
    pub ew: f64,
    pub ew2: f64,
    pub em2: f64,
}

pub fn large_urn_moments(model: &UrnModel) -> Result<LargeUrnMoments, FormulaError> {
    if model.regime() != Regime::Large {
        return Err(FormulaError::mismatch("moments of W", "Large", model));
    }
    let sigma = model.sigma_f64();
    let x = model.tau_over_s();
    let s = model.s() as f64;
    let (b, c) = (model.b() as f64, model.c() as f64);
    let d = model.drift_offset() as f64;
    let inv_lambda = ln_gamma_ratio(x, sigma)?.value();
    let lambda = 1.0 / inv_lambda;
    let ew = inv_lambda * d / s;
    let bracket = b * c / (2.0 * sigma - 1.0) * x
        + (b - c) * d / (sigma * s)
        + d * d / (sigma * sigma * s * s);
    let ew2 = sigma * sigma * ln_gamma_ratio(x, 2.0 * sigma)?.value() * bracket;
    let em2 = lambda * lambda * ew2 - d * d / (s * s);
    Ok(LargeUrnMoments { ew, ew2, em2 })
}

/// Exact finite-`n` mean and second moment of the `W` estimator
/// `W_n = (X_n - n v1_x) / (n^sigma v2_x)`.
pub fn w_estimator_moments(model: &UrnModel, n: u64) -> Result<(f64, f64), FormulaError> {
    let (v1, v2) = match (model.v1_f64(), model.v2_f64()) {
        (Some(v1), Some(v2)) => (v1, v2),
        _ => return Err(FormulaError::mismatch("W estimator", "b + c > 0", model)),
    };
    let fm = finite_moments_recursive(model, n);
    let scale = (n as f64).powf(model.sigma_f64()) * v2[0];
    let bias = fm.mean_x - n as f64 * v1[0];
    Ok((bias / scale, (fm.var_x + bias * bias) / (scale * scale)))
}

/// Every closed-form quantity for one model and horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub model: String,
    pub regime: Regime,
    pub sigma: String,
    pub horizon: u64,
    pub sigma_n: f64,
    pub w_n: f64,
    pub mean_un: [f64; 2],
    pub lambda: f64,
    pub gamma_cov: Option<[[f64; 2]; 2]>,
    pub ew: Option<f64>,
    pub ew2: Option<f64>,
    pub em2: Option<f64>,
    pub regime_asymptote: Option<f64>,
}

pub fn moment_report(model: &UrnModel, n: u64) -> Result<MomentReport, FormulaError> {
    let large = large_urn_moments(model).ok();
    Ok(MomentReport {
        model: model.label(),
        regime: model.regime(),
        sigma: format_rational(model.sigma()),
        horizon: n,
        sigma_n: sigma_n(model, n)?,
        w_n: w_n(model, n)?,
        mean_un: mean_un(model, n),
        lambda: lambda(model)?,
        gamma_cov: clt_covariance(model).ok(),
        ew: large.map(|l| l.ew),
        ew2: large.map(|l| l.ew2),
        em2: large.map(|l| l.em2),
        regime_asymptote: w_asymptote(model).ok(),
    })
}
