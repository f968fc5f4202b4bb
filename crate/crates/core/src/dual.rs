//! Dual death processes.
//!
//! The Fleming-Viot dual is Kingman's typed coalescent: from `m` it jumps
//! to `m - e_j` at rate `m_j (θ + |m| - 1) / 2`. Its totals form a pure
//! death chain whose transition law is obtained by integrating the forward
//! equations; the split of survivors across types is multivariate
//! hypergeometric.
//!
//! The Dawson-Watanabe dual kills each lineage independently at rate
//! `κ (β + C_t)`, where `C_t` follows the deterministic flow started at the
//! sample cardinality. Survivors are therefore binomial thinnings with a
//! closed-form survival probability.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, RwLock};

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::mc::run_blocks;
use crate::model::MultiIndex;
use crate::ode::{integrate, Tolerance};
use crate::special::{ln_binomial, ln_one_minus_exp};

/// `S_t = β / (e^{βt/2} - 1)`.
pub fn s_t(beta: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("S_t needs t > 0, got {t}")));
    }
    Ok(beta / (beta * t / 2.0).exp_m1())
}

/// `C_t = βc / ((β + c) e^{βt/2} - c)`, with `C_0 = c`.
pub fn c_t(beta: f64, c: f64, t: f64) -> f64 {
    if t == 0.0 || c == 0.0 {
        return c;
    }
    let x = beta * t / 2.0;
    beta * c / (beta * x.exp() + c * x.exp_m1())
}

/// Parameters of the Fleming-Viot dual.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FvDualSpec {
    pub theta: f64,
}

/// Default per-lineage death-rate multiplier of the Dawson-Watanabe dual.
///
/// One half is the value under which the dual reproduces the gamma
/// transition with `S_t = β/(e^{βt/2}-1)`; the calibration suite checks it.
pub const DW_RATE_SCALE: f64 = 0.5;

/// Parameters of the Dawson-Watanabe dual started from cardinality `c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DwDualSpec {
    pub theta: f64,
    pub beta: f64,
    pub c: f64,
    /// Multiplier `κ` of the per-lineage death rate `κ (β + C_t)`.
    pub rate_scale: f64,
}

impl DwDualSpec {
    pub fn new(theta: f64, beta: f64, c: f64) -> Self {
        Self {
            theta,
            beta,
            c,
            rate_scale: DW_RATE_SCALE,
        }
    }

    pub fn with_rate_scale(mut self, rate_scale: f64) -> Self {
        self.rate_scale = rate_scale;
        self
    }

    /// Cardinality flow value at elapsed time `t`.
    pub fn c_at(&self, t: f64) -> f64 {
        c_t(self.beta, self.c, t)
    }

    /// Per-lineage death rate at elapsed time `t`.
    pub fn death_rate(&self, t: f64) -> f64 {
        self.rate_scale * (self.beta + self.c_at(t))
    }
}

/// `P(|M_t| = k | |M_0| = n)` for `k = 0..=n`.
#[derive(Clone, Debug, PartialEq)]
pub struct TotalsTransitionTable {
    pub n: u64,
    pub t: f64,
    pub probs: Vec<f64>,
}

/// Death rate of the totals chain at `i` lineages.
pub fn fv_totals_rate(theta: f64, i: u64) -> f64 {
    let i = i as f64;
    i * (theta + i - 1.0) / 2.0
}

/// Transition law of the totals chain by integration of its forward
/// equations on the states `0..=n`.
pub fn fv_totals_transition(
    spec: FvDualSpec,
    n: u64,
    t: f64,
    tol: Tolerance,
) -> Result<TotalsTransitionTable> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("elapsed time must be nonnegative, got {t}")));
    }
    if !(spec.theta > 0.0) {
        return Err(Error::Domain(format!("theta must be positive, got {}", spec.theta)));
    }
    let size = n as usize + 1;
    let mut start = vec![0.0; size];
    start[n as usize] = 1.0;
    if t == 0.0 {
        return Ok(TotalsTransitionTable { n, t, probs: start });
    }
    let rates: Vec<f64> = (0..=n).map(|i| fv_totals_rate(spec.theta, i)).collect();
    let mut probs = integrate(
        |_, p, dp| {
            for i in 0..size {
                let inflow = if i + 1 < size { rates[i + 1] * p[i + 1] } else { 0.0 };
                dp[i] = inflow - rates[i] * p[i];
            }
        },
        0.0,
        &start,
        t,
        tol,
    );
    for p in &mut probs {
        *p = p.max(0.0);
    }
    // The top state has an exact solution; use it to remove solver drift.
    probs[n as usize] = (-rates[n as usize] * t).exp();
    Ok(TotalsTransitionTable { n, t, probs })
}

/// Totals tables keyed by `(n, bits of t)`.
type TotalsCache = RwLock<HashMap<(u64, u64), Arc<Vec<f64>>>>;

/// Fleming-Viot dual with a cache of totals tables keyed by `(n, t)`.
#[derive(Debug)]
pub struct FvDual {
    spec: FvDualSpec,
    tol: Tolerance,
    cache: TotalsCache,
}

impl FvDual {
    pub fn new(theta: f64) -> Self {
        Self::with_tolerance(theta, Tolerance::default())
    }

    pub fn with_tolerance(theta: f64, tol: Tolerance) -> Self {
        Self {
            spec: FvDualSpec { theta },
            tol,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn theta(&self) -> f64 {
        self.spec.theta
    }

    /// Totals law from `n` lineages after `t`.
    pub fn totals(&self, n: u64, t: f64) -> Result<Arc<Vec<f64>>> {
        let key = (n, t.to_bits());
        if let Some(hit) = self.cache.read().expect("cache lock poisoned").get(&key) {
            return Ok(hit.clone());
        }
        let table = Arc::new(fv_totals_transition(self.spec, n, t, self.tol)?.probs);
        self.cache
            .write()
            .expect("cache lock poisoned")
            .entry(key)
            .or_insert_with(|| table.clone());
        Ok(table)
    }

    /// `ln p_{n,k}(t)` of the typed chain.
    pub fn log_typed(&self, n: &MultiIndex, k: &MultiIndex, t: f64) -> Result<f64> {
        if !k.le(n) {
            return Err(Error::Index(format!("{k} is not below {n}")));
        }
        let totals = self.totals(n.total(), t)?;
        let p = totals[k.total() as usize];
        Ok(p.ln() + hypergeometric_log(n, k))
    }
}

/// Log probability that `|k|` survivors drawn uniformly without replacement
/// from `n` have type counts `k`.
pub fn hypergeometric_log(n: &MultiIndex, k: &MultiIndex) -> f64 {
    n.counts()
        .iter()
        .zip(k.counts())
        .map(|(&a, &b)| ln_binomial(a as u64, b as u64))
        .sum::<f64>()
        - ln_binomial(n.total(), k.total())
}

/// Log survival probability of one lineage of the Dawson-Watanabe dual over
/// `[0, t]`, i.e. `-κ ∫ (β + C_s) ds` with
/// `∫ C_s ds = 2 ln(1 + c (1 - e^{-βt/2}) / β)`.
pub fn dw_log_survival(spec: &DwDualSpec, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("elapsed time must be nonnegative, got {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let decay = -(-spec.beta * t / 2.0).exp_m1();
    let integral = spec.beta * t + 2.0 * (spec.c * decay / spec.beta).ln_1p();
    Ok(-spec.rate_scale * integral)
}

pub fn dw_survival_prob(spec: &DwDualSpec, t: f64) -> Result<f64> {
    Ok(dw_log_survival(spec, t)?.exp())
}

/// `ln p^c_{n,k}(t)` as independent binomial thinning with survival
/// `e^{log_q}`.
pub fn dw_log_typed(n: &MultiIndex, k: &MultiIndex, log_q: f64) -> Result<f64> {
    if !k.le(n) {
        return Err(Error::Index(format!("{k} is not below {n}")));
    }
    let log_dead = if log_q == 0.0 {
        f64::NEG_INFINITY
    } else {
        ln_one_minus_exp(log_q)
    };
    let mut out = 0.0;
    for (&a, &b) in n.counts().iter().zip(k.counts()) {
        let dead = a - b;
        out += ln_binomial(a as u64, b as u64);
        if b > 0 {
            out += b as f64 * log_q;
        }
        if dead > 0 {
            out += dead as f64 * log_dead;
        }
    }
    Ok(out)
}

/// One path of the typed Fleming-Viot dual over `[0, t]`.
pub fn gillespie_fv<R: Rng + ?Sized>(theta: f64, start: &MultiIndex, t: f64, rng: &mut R) -> MultiIndex {
    let mut counts = start.counts().to_vec();
    let mut total = start.total();
    let mut clock = 0.0;
    while total > 0 {
        let rate = fv_totals_rate(theta, total);
        let wait: f64 = Exp1.sample(rng);
        clock += wait / rate;
        if clock > t {
            break;
        }
        remove_uniform_lineage(&mut counts, total, rng);
        total -= 1;
    }
    MultiIndex::new(counts)
}

/// One path of the Dawson-Watanabe dual over `[0, t]`, simulated by
/// thinning against the rate at the current time (the rate decreases).
pub fn gillespie_dw<R: Rng + ?Sized>(spec: &DwDualSpec, start: &MultiIndex, t: f64, rng: &mut R) -> MultiIndex {
    let mut counts = start.counts().to_vec();
    let mut total = start.total();
    let mut clock = 0.0;
    while total > 0 {
        let bound = total as f64 * spec.death_rate(clock);
        let wait: f64 = Exp1.sample(rng);
        clock += wait / bound;
        if clock > t {
            break;
        }
        let actual = total as f64 * spec.death_rate(clock);
        if rng.random::<f64>() * bound < actual {
            remove_uniform_lineage(&mut counts, total, rng);
            total -= 1;
        }
    }
    MultiIndex::new(counts)
}

fn remove_uniform_lineage<R: Rng + ?Sized>(counts: &mut [u32], total: u64, rng: &mut R) {
    let mut pick = rng.random_range(0..total);
    for c in counts.iter_mut() {
        if pick < *c as u64 {
            *c -= 1;
            return;
        }
        pick -= *c as u64;
    }
}

/// Empirical law of the terminal state over many simulated paths.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalLaw {
    pub replicates: u64,
    pub counts: BTreeMap<MultiIndex, u64>,
}

impl EmpiricalLaw {
    pub fn prob(&self, k: &MultiIndex) -> f64 {
        *self.counts.get(k).unwrap_or(&0) as f64 / self.replicates as f64
    }

    /// Standard error of [`EmpiricalLaw::prob`], floored at the resolution
    /// of one replicate.
    pub fn std_error(&self, k: &MultiIndex) -> f64 {
        let p = self.prob(k);
        let n = self.replicates as f64;
        (p * (1.0 - p) / n).sqrt().max(1.0 / n)
    }

    /// Law of the total `|k|`.
    pub fn totals(&self) -> BTreeMap<u64, u64> {
        let mut out = BTreeMap::new();
        for (k, &c) in &self.counts {
            *out.entry(k.total()).or_insert(0) += c;
        }
        out
    }
}

/// Which dual process a Gillespie run simulates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DualKind {
    Fv(FvDualSpec),
    Dw(DwDualSpec),
}

/// Simulates `replicates` independent paths from `start` and tabulates the
/// terminal states.
pub fn gillespie_oracle(kind: DualKind, start: &MultiIndex, t: f64, replicates: u64, seed: u64) -> EmpiricalLaw {
    let blocks = run_blocks(replicates as usize, seed, |rng, len| {
        let mut tally: BTreeMap<MultiIndex, u64> = BTreeMap::new();
        for _ in 0..len {
            let end = match kind {
                DualKind::Fv(spec) => gillespie_fv(spec.theta, start, t, rng),
                DualKind::Dw(spec) => gillespie_dw(&spec, start, t, rng),
            };
            *tally.entry(end).or_insert(0) += 1;
        }
        tally
    });
    let mut counts = BTreeMap::new();
    for block in blocks {
        for (k, c) in block {
            *counts.entry(k).or_insert(0) += c;
        }
    }
    EmpiricalLaw { replicates, counts }
}
