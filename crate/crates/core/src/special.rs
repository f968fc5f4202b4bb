//! Log-domain special functions behind every mixture weight.
//!
//! Gamma-function ratios are always formed as differences of `ln Γ`, never
//! as products of rising factorials.
//!
//! Weights under a nonatomic base measure are limits of discrete ones as
//! the per-type mass goes to zero. [`LimitLog`] carries them as a leading
//! power of that vanishing mass together with the log of the finite
//! coefficient, and [`leading_order`] keeps the terms that survive.

use std::ops::{Add, Neg, Sub};

use crate::error::{Error, Result};
use crate::model::MultiIndex;

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `ln(a (a+1) ... (a+n-1))`, the log rising factorial. Zero for `n = 0`.
pub fn ln_rising(a: f64, n: f64) -> f64 {
    if n == 0.0 {
        0.0
    } else {
        ln_gamma(a + n) - ln_gamma(a)
    }
}

pub fn ln_factorial(n: u64) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

pub fn ln_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// `ln(1 - e^x)` for `x <= 0`.
pub fn ln_one_minus_exp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() || max.is_nan() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive, got {x}")))
    }
}

/// `ln B(a) = sum_j ln Γ(a_j) - ln Γ(sum_j a_j)`.
pub fn log_multivariate_beta(alpha: &[f64]) -> Result<f64> {
    for &a in alpha {
        check_positive("Dirichlet parameter", a)?;
    }
    let total: f64 = alpha.iter().sum();
    Ok(alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>() - ln_gamma(total))
}

/// Log probability of one ordered sample with multiplicities `n` under the
/// Dirichlet-categorical law with parameters `alpha`.
pub fn log_dir_cat(n: &MultiIndex, alpha: &[f64]) -> Result<f64> {
    let total: f64 = alpha.iter().sum();
    log_dir_cat_with_total(n, alpha, total)
}

/// As [`log_dir_cat`] when `alpha` lists only part of the types: `theta`
/// is the total mass, unlisted types have count zero.
pub fn log_dir_cat_with_total(n: &MultiIndex, alpha: &[f64], theta: f64) -> Result<f64> {
    check_positive("theta", theta)?;
    if n.dim() != alpha.len() {
        return Err(Error::Domain(format!(
            "counts have {} types but parameters have {}",
            n.dim(),
            alpha.len()
        )));
    }
    let mut out = -ln_rising(theta, n.total() as f64);
    for (&a, &c) in alpha.iter().zip(n.counts()) {
        check_positive("Dirichlet parameter", a)?;
        out += ln_rising(a, c as f64);
    }
    Ok(out)
}

/// `ln c(n, m) = ln m(n+m) - ln m(n) - ln m(m)`.
pub fn log_c(n: &MultiIndex, m: &MultiIndex, alpha: &[f64]) -> Result<f64> {
    Ok(log_dir_cat(&n.add(m), alpha)? - log_dir_cat(n, alpha)? - log_dir_cat(m, alpha)?)
}

/// Log of the gamma-Poisson total-count factor
/// `(β/(β+a))^θ (β+a)^{-n} Γ(θ+n)/Γ(θ)`.
///
/// `a = 0` is admitted (value one at `n = 0`, no likelihood information),
/// which the smoothing ratios need at boundary times.
pub fn log_gamma_marginal(n: u64, a: f64, theta: f64, beta: f64) -> Result<f64> {
    check_positive("theta", theta)?;
    check_positive("beta", beta)?;
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::Domain(format!("rate increment must be nonnegative, got {a}")));
    }
    let rate = beta + a;
    Ok(theta * (beta.ln() - rate.ln()) - n as f64 * rate.ln() + ln_rising(theta, n as f64))
}

/// Log marginal likelihood of `c` Poisson-process draws with per-draw
/// multiplicities `draws` summing to `total`.
pub fn log_rc(
    total: &MultiIndex,
    draws: &[MultiIndex],
    c: usize,
    alpha: &[f64],
    theta: f64,
    beta: f64,
) -> Result<f64> {
    let mut sum = MultiIndex::zeros(total.dim());
    for d in draws {
        if d.dim() != total.dim() {
            return Err(Error::Consistency("draw dimension mismatch".into()));
        }
        sum = sum.add(d);
    }
    if &sum != total {
        return Err(Error::Consistency(format!(
            "multiplicities {total} differ from the sum of draws {sum}"
        )));
    }
    if c != draws.len() {
        return Err(Error::Consistency(format!(
            "cardinality {c} differs from the number of draws {}",
            draws.len()
        )));
    }
    let factorials: f64 = draws
        .iter()
        .flat_map(|d| d.counts().iter())
        .map(|&k| ln_factorial(k as u64))
        .sum();
    Ok(log_gamma_marginal(total.total(), c as f64, theta, beta)? - factorials
        + log_dir_cat_with_total(total, alpha, theta)?)
}

/// `ln h(z, N, c)` for independent gamma cells with shapes `alpha` and
/// rate `beta`: the likelihood of `c` draws with total multiplicities `N`
/// divided by their marginal likelihood, without the per-draw factorials.
pub fn dw_dual_log_h(alpha: &[f64], beta: f64, z: &[f64], n: &MultiIndex, c: f64) -> f64 {
    let theta: f64 = alpha.iter().sum();
    let zsum: f64 = z.iter().sum();
    let mut out = -c * zsum + theta * (c / beta).ln_1p() + n.total() as f64 * (beta + c).ln();
    for ((&a, &zj), &nj) in alpha.iter().zip(z).zip(n.counts()) {
        if nj > 0 {
            out += nj as f64 * zj.ln() - ln_rising(a, nj as f64);
        }
    }
    out
}

/// Negative binomial log-pmf counting successes before `failures` failures,
/// `Γ(r+n)/(Γ(r) n!) (1-p)^r p^n`.
pub fn log_neg_bin_pmf(n: u64, failures: f64, success_prob: f64) -> Result<f64> {
    check_positive("number of failures", failures)?;
    if !(success_prob > 0.0 && success_prob < 1.0) {
        return Err(Error::Domain(format!(
            "success probability must lie in (0, 1), got {success_prob}"
        )));
    }
    let n_f = n as f64;
    Ok(ln_rising(failures, n_f) - ln_factorial(n) + failures * (-success_prob).ln_1p()
        + n_f * success_prob.ln())
}

/// A weight `ε^order · e^log` as the per-type base mass `ε` goes to zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LimitLog {
    pub order: i64,
    pub log: f64,
}

impl LimitLog {
    pub const ONE: LimitLog = LimitLog { order: 0, log: 0.0 };

    pub fn finite(log: f64) -> Self {
        Self { order: 0, log }
    }

    pub fn is_zero(&self) -> bool {
        self.log == f64::NEG_INFINITY
    }
}

impl Add for LimitLog {
    type Output = LimitLog;
    fn add(self, rhs: LimitLog) -> LimitLog {
        LimitLog {
            order: self.order + rhs.order,
            log: self.log + rhs.log,
        }
    }
}

impl Sub for LimitLog {
    type Output = LimitLog;
    fn sub(self, rhs: LimitLog) -> LimitLog {
        LimitLog {
            order: self.order - rhs.order,
            log: self.log - rhs.log,
        }
    }
}

impl Neg for LimitLog {
    type Output = LimitLog;
    fn neg(self) -> LimitLog {
        LimitLog {
            order: -self.order,
            log: -self.log,
        }
    }
}

impl Add<f64> for LimitLog {
    type Output = LimitLog;
    fn add(self, rhs: f64) -> LimitLog {
        LimitLog {
            order: self.order,
            log: self.log + rhs,
        }
    }
}

/// Keeps the terms of lowest order among the nonzero ones and returns
/// their finite log coefficients. Higher-order terms vanish in the limit
/// and get weight `-inf`.
pub fn leading_order(terms: &[LimitLog]) -> Vec<f64> {
    let min = terms
        .iter()
        .filter(|t| !t.is_zero())
        .map(|t| t.order)
        .min();
    terms
        .iter()
        .map(|t| match min {
            Some(o) if t.order == o => t.log,
            _ => f64::NEG_INFINITY,
        })
        .collect()
}

/// Per-type Dirichlet parameters of the base measure over the registered
/// types, or the nonatomic limit.
#[derive(Clone, Debug, PartialEq)]
pub enum DirichletParams {
    Nonatomic { theta: f64 },
    Discrete { theta: f64, atoms: Vec<f64> },
}

impl DirichletParams {
    pub fn nonatomic(theta: f64) -> Self {
        DirichletParams::Nonatomic { theta }
    }

    /// `atoms[j] = θ P0({y_j})`; they may sum to less than `θ`.
    pub fn discrete(theta: f64, atoms: Vec<f64>) -> Result<Self> {
        check_positive("theta", theta)?;
        for &a in &atoms {
            check_positive("atom mass", a)?;
        }
        let sum: f64 = atoms.iter().sum();
        if sum > theta * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "atom masses sum to {sum}, above theta = {theta}"
            )));
        }
        Ok(DirichletParams::Discrete { theta, atoms })
    }

    pub fn theta(&self) -> f64 {
        match self {
            DirichletParams::Nonatomic { theta } | DirichletParams::Discrete { theta, .. } => *theta,
        }
    }

    /// Base mass at registered type `j`; zero in the nonatomic limit.
    pub fn atom(&self, j: usize) -> f64 {
        match self {
            DirichletParams::Nonatomic { .. } => 0.0,
            DirichletParams::Discrete { atoms, .. } => atoms[j],
        }
    }

    pub fn is_nonatomic(&self) -> bool {
        matches!(self, DirichletParams::Nonatomic { .. })
    }

    /// Base mass outside the registered types.
    pub fn unseen_mass(&self) -> f64 {
        match self {
            DirichletParams::Nonatomic { theta } => *theta,
            DirichletParams::Discrete { theta, atoms } => {
                (theta - atoms.iter().sum::<f64>()).max(0.0)
            }
        }
    }

    /// Dirichlet-categorical probability of an ordered sample with
    /// multiplicities `n`.
    ///
    /// In the nonatomic limit each occupied type contributes
    /// `(θε)^{(n_j)} ≈ ε θ Γ(n_j)`, hence order one per occupied type.
    pub fn log_marginal(&self, n: &MultiIndex) -> LimitLog {
        let theta = self.theta();
        let denom = ln_rising(theta, n.total() as f64);
        match self {
            DirichletParams::Nonatomic { .. } => {
                let mut order = 0;
                let mut log = -denom;
                for &c in n.counts().iter().filter(|&&c| c > 0) {
                    order += 1;
                    log += theta.ln() + ln_gamma(c as f64);
                }
                LimitLog { order, log }
            }
            DirichletParams::Discrete { atoms, .. } => {
                let log = atoms
                    .iter()
                    .zip(n.counts())
                    .map(|(&a, &c)| ln_rising(a, c as f64))
                    .sum::<f64>()
                    - denom;
                LimitLog::finite(log)
            }
        }
    }

    /// Probability of sample `n` given an earlier sample `m`:
    /// `m(m+n)/m(m)`.
    pub fn log_predictive(&self, m: &MultiIndex, n: &MultiIndex) -> LimitLog {
        self.log_marginal(&m.add(n)) - self.log_marginal(m)
    }

    /// `m(k+n+l) / (m(k) m(n) m(l))`, the three-sample coupling ratio.
    pub fn log_coupling(&self, k: &MultiIndex, n: &MultiIndex, l: &MultiIndex) -> LimitLog {
        self.log_marginal(&k.add(n).add(l))
            - self.log_marginal(k)
            - self.log_marginal(n)
            - self.log_marginal(l)
    }
}
