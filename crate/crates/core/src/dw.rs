//! Dawson-Watanabe engine: filtering, smoothing and prediction with finite
//! mixtures of gamma random measures.
//!
//! At time `t_i` the data are `c_i` independent Poisson-process draws with
//! multiplicities summing to `N_i`. A law `Σ_m w_m Γ^{β+b}_{α+Σ m_j δ_{y_j}}`
//! is a [`GammaMixtureLaw`] whose components share the rate offset `b`.

use std::collections::BTreeMap;

use rand::Rng;

use crate::dual::{dw_log_survival, dw_log_typed, DwDualSpec, DW_RATE_SCALE};
use crate::error::{Error, Result};
use crate::model::{BaseMeasure, Components, GammaMixtureLaw, MultiIndex, ObservationTimeline, TypeRegistry};
use crate::special::{leading_order, log_gamma_marginal, log_neg_bin_pmf, log_sum_exp, DirichletParams, LimitLog};
use crate::urn::{self, NextDrawPmf, UrnHistory};

pub use crate::fv::SmoothingPairs;

/// Smoothing pairs together with the rate offset of the smoothing law.
#[derive(Clone, Debug, PartialEq)]
pub struct DwSmoothingPairs {
    pub pairs: SmoothingPairs,
    pub rate_offset: f64,
}

/// Truncated pmf of the number of further observations.
#[derive(Clone, Debug, PartialEq)]
pub struct CountPmf {
    pub probs: Vec<f64>,
    /// Certified bound on the probability mass beyond the last entry.
    pub tail_bound: f64,
}

impl CountPmf {
    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }
}

/// Target tail mass for [`DwEngine::predict_count_pmf`].
pub const COUNT_TAIL: f64 = 1e-12;

/// Filtering, smoothing and prediction for one registry of observed types.
#[derive(Debug, Clone)]
pub struct DwEngine {
    registry: TypeRegistry,
    params: DirichletParams,
    beta: f64,
    rate_scale: f64,
    pruning_epsilon: f64,
}

impl DwEngine {
    pub fn new(base: &BaseMeasure, beta: f64, registry: TypeRegistry) -> Result<Self> {
        Self::with_options(base, beta, registry, DW_RATE_SCALE, 0.0)
    }

    pub fn with_options(
        base: &BaseMeasure,
        beta: f64,
        registry: TypeRegistry,
        rate_scale: f64,
        pruning_epsilon: f64,
    ) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!("beta must be positive, got {beta}")));
        }
        if !(rate_scale > 0.0 && rate_scale.is_finite()) {
            return Err(Error::Domain(format!("dual rate scale must be positive, got {rate_scale}")));
        }
        if !(0.0..=1e-3).contains(&pruning_epsilon) {
            return Err(Error::Domain(format!(
                "pruning threshold must lie in [0, 1e-3], got {pruning_epsilon}"
            )));
        }
        let params = base.resolve(&registry)?;
        Ok(Self {
            registry,
            params,
            beta,
            rate_scale,
            pruning_epsilon,
        })
    }

    pub fn registry(&self) -> &TypeRegistry {
        &self.registry
    }

    pub fn params(&self) -> &DirichletParams {
        &self.params
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn theta(&self) -> f64 {
        self.params.theta()
    }

    pub fn rate_scale(&self) -> f64 {
        self.rate_scale
    }

    pub fn dim(&self) -> usize {
        self.registry.len()
    }

    pub fn prior(&self) -> GammaMixtureLaw {
        GammaMixtureLaw::prior(self.dim(), self.beta)
    }

    /// Dual started from cardinality `c`.
    pub fn dual_spec(&self, c: f64) -> DwDualSpec {
        DwDualSpec::new(self.theta(), self.beta, c).with_rate_scale(self.rate_scale)
    }

    fn finish(&self, terms: Vec<(MultiIndex, LimitLog)>, rate_offset: f64) -> Result<GammaMixtureLaw> {
        let graded: Vec<LimitLog> = terms.iter().map(|t| t.1).collect();
        let lead = leading_order(&graded);
        let comps = Components::from_terms(terms.into_iter().map(|t| t.0).zip(lead));
        GammaMixtureLaw::new(comps.prune(self.pruning_epsilon)?, self.beta, rate_offset)
    }

    /// Log of `γ_a(n)` for the base parameters.
    fn gamma(&self, n: u64, a: f64) -> Result<f64> {
        log_gamma_marginal(n, a, self.theta(), self.beta)
    }

    /// Conditions on `draws`: component `m` moves to `m + N`, the rate
    /// offset grows by the cardinality, and weights are rescored by the
    /// marginal likelihood of the draws under the component.
    pub fn update(&self, law: &GammaMixtureLaw, draws: &[MultiIndex]) -> Result<GammaMixtureLaw> {
        if draws.is_empty() {
            return Ok(law.clone());
        }
        let mut total = MultiIndex::zeros(self.dim());
        for d in draws {
            if d.dim() != self.dim() {
                return Err(Error::Index(format!(
                    "draw {d} does not match the {} registered types",
                    self.dim()
                )));
            }
            total = total.add(d);
        }
        let c = draws.len() as f64;
        let rate = law.rate();
        let mut terms = Vec::with_capacity(law.len());
        for comp in law.components.iter() {
            let shape = self.theta() + comp.index.total() as f64;
            let counts = log_gamma_marginal(total.total(), c, shape, rate)?;
            let types = self.params.log_predictive(&comp.index, &total);
            terms.push((comp.index.add(&total), types + (counts + comp.log_weight)));
        }
        self.finish(terms, law.rate_offset + c)
    }

    /// Propagates by `dt`: each lineage of a component survives
    /// independently and the rate offset follows the cardinality flow.
    pub fn propagate(&self, law: &GammaMixtureLaw, dt: f64) -> Result<GammaMixtureLaw> {
        if !(dt >= 0.0) {
            return Err(Error::Domain(format!("elapsed time must be nonnegative, got {dt}")));
        }
        if dt == 0.0 {
            return Ok(law.clone());
        }
        let spec = self.dual_spec(law.rate_offset);
        let log_q = dw_log_survival(&spec, dt)?;
        let mut terms = Vec::new();
        for comp in law.components.iter() {
            for k in comp.index.below() {
                let lp = dw_log_typed(&comp.index, &k, log_q)?;
                terms.push((k, LimitLog::finite(comp.log_weight + lp)));
            }
        }
        self.finish(terms, spec.c_at(dt))
    }

    /// Law of the signal at `t_i` given the draws at `t_0..t_{i-1}`.
    pub fn filter_forward(&self, timeline: &ObservationTimeline, i: usize) -> Result<GammaMixtureLaw> {
        timeline.check_index(i)?;
        let mut law = self.prior();
        for j in 0..i {
            law = self.update(&law, timeline.draws(j))?;
            law = self.propagate(&law, timeline.time(j + 1) - timeline.time(j))?;
        }
        Ok(law)
    }

    /// Law of the signal at `t_i` given the draws at `t_{i+1}..t_N`.
    pub fn filter_backward(&self, timeline: &ObservationTimeline, i: usize) -> Result<GammaMixtureLaw> {
        timeline.check_index(i)?;
        let mut law = self.prior();
        for j in (i + 1..timeline.len()).rev() {
            law = self.update(&law, timeline.draws(j))?;
            law = self.propagate(&law, timeline.time(j) - timeline.time(j - 1))?;
        }
        Ok(law)
    }

    /// Law of the signal at `t_i` given the draws up to and including `t_i`.
    pub fn filter(&self, timeline: &ObservationTimeline, i: usize) -> Result<GammaMixtureLaw> {
        self.update(&self.filter_forward(timeline, i)?, timeline.draws(i))
    }

    /// Log-weight factor of a smoothing pair: the ratio of total-count
    /// marginals times the type coupling shared with the Fleming-Viot case.
    #[allow(clippy::too_many_arguments)]
    fn pair_factor(
        &self,
        k: &MultiIndex,
        n: &MultiIndex,
        l: &MultiIndex,
        b_past: f64,
        c: f64,
        b_future: f64,
    ) -> Result<LimitLog> {
        let s = k.total() + n.total() + l.total();
        let counts = self.gamma(s, b_past + c + b_future)?
            - self.gamma(k.total(), b_past)?
            - self.gamma(n.total(), c)?
            - self.gamma(l.total(), b_future)?;
        Ok(self.params.log_coupling(k, n, l) + counts)
    }

    fn normalize_pairs(terms: Vec<((MultiIndex, MultiIndex), LimitLog)>) -> Result<SmoothingPairs> {
        let graded: Vec<LimitLog> = terms.iter().map(|t| t.1).collect();
        let lead = leading_order(&graded);
        let total = log_sum_exp(&lead);
        if total == f64::NEG_INFINITY {
            return Err(Error::AllWeightsZero);
        }
        Ok(terms
            .into_iter()
            .map(|t| t.0)
            .zip(lead)
            .filter(|(_, lw)| *lw > f64::NEG_INFINITY)
            .map(|(key, lw)| (key, lw - total))
            .collect())
    }

    /// One-step smoothing law from single neighbouring samples: `n_past`
    /// with cardinality `c_past` at lag `dt_past`, the present draws, and
    /// `n_future` with `c_future` at lag `dt_future`.
    #[allow(clippy::too_many_arguments)]
    pub fn one_step_smoothing(
        &self,
        n_past: &MultiIndex,
        c_past: usize,
        dt_past: f64,
        now: &[MultiIndex],
        n_future: &MultiIndex,
        c_future: usize,
        dt_future: f64,
    ) -> Result<GammaMixtureLaw> {
        let past = self.propagate(&self.update(&self.prior(), &split_draws(n_past, c_past))?, dt_past)?;
        let future = self.propagate(&self.update(&self.prior(), &split_draws(n_future, c_future))?, dt_future)?;
        let pairs = self.combine(&past, now, &future)?;
        let n_now = sum_draws(now, self.dim());
        self.pairs_to_law(&pairs, &n_now)
    }

    fn combine(&self, past: &GammaMixtureLaw, now: &[MultiIndex], future: &GammaMixtureLaw) -> Result<DwSmoothingPairs> {
        let n_now = sum_draws(now, self.dim());
        let c = now.len() as f64;
        let mut terms = Vec::with_capacity(past.len() * future.len());
        for a in past.components.iter() {
            for b in future.components.iter() {
                let f = self.pair_factor(&a.index, &n_now, &b.index, past.rate_offset, c, future.rate_offset)?;
                terms.push(((a.index.clone(), b.index.clone()), f + (a.log_weight + b.log_weight)));
            }
        }
        Ok(DwSmoothingPairs {
            pairs: Self::normalize_pairs(terms)?,
            rate_offset: past.rate_offset + c + future.rate_offset,
        })
    }

    /// Weights of the smoothing pairs at `t_i` given all draws.
    pub fn smoothing_pairs(&self, timeline: &ObservationTimeline, i: usize) -> Result<DwSmoothingPairs> {
        let past = self.filter_forward(timeline, i)?;
        let future = self.filter_backward(timeline, i)?;
        self.combine(&past, timeline.draws(i), &future)
    }

    fn pairs_to_law(&self, pairs: &DwSmoothingPairs, n_now: &MultiIndex) -> Result<GammaMixtureLaw> {
        let comps = Components::from_terms(pairs.pairs.iter().map(|((k, l), &w)| (k.add(n_now).add(l), w)));
        GammaMixtureLaw::new(comps.prune(self.pruning_epsilon)?, self.beta, pairs.rate_offset)
    }

    /// Law of the signal at `t_i` given every draw.
    pub fn smooth(&self, timeline: &ObservationTimeline, i: usize) -> Result<GammaMixtureLaw> {
        let pairs = self.smoothing_pairs(timeline, i)?;
        self.pairs_to_law(&pairs, timeline.counts(i))
    }

    /// Smoothing law by the explicit double sum over the components of the
    /// filter at `t_{i-1}` and of the backward filter at `t_{i+1}`.
    pub fn smooth_by_double_sum(&self, timeline: &ObservationTimeline, i: usize) -> Result<GammaMixtureLaw> {
        timeline.check_index(i)?;
        let (left, dt_left) = if i > 0 {
            (self.filter(timeline, i - 1)?, timeline.time(i) - timeline.time(i - 1))
        } else {
            (self.prior(), 0.0)
        };
        let (right, dt_right) = if i < timeline.last() {
            let later = self.update(&self.filter_backward(timeline, i + 1)?, timeline.draws(i + 1))?;
            (later, timeline.time(i + 1) - timeline.time(i))
        } else {
            (self.prior(), 0.0)
        };
        let q_left = dw_log_survival(&self.dual_spec(left.rate_offset), dt_left)?;
        let q_right = dw_log_survival(&self.dual_spec(right.rate_offset), dt_right)?;
        let b_past = self.dual_spec(left.rate_offset).c_at(dt_left);
        let b_future = self.dual_spec(right.rate_offset).c_at(dt_right);
        let now = timeline.draws(i);
        let n_now = timeline.counts(i);
        let c = now.len() as f64;
        let mut acc: BTreeMap<(MultiIndex, MultiIndex), Vec<LimitLog>> = BTreeMap::new();
        for h in left.components.iter() {
            for k in h.index.below() {
                let pk = dw_log_typed(&h.index, &k, q_left)?;
                if pk == f64::NEG_INFINITY {
                    continue;
                }
                for l in right.components.iter() {
                    for kf in l.index.below() {
                        let pl = dw_log_typed(&l.index, &kf, q_right)?;
                        if pl == f64::NEG_INFINITY {
                            continue;
                        }
                        let f = self.pair_factor(&k, n_now, &kf, b_past, c, b_future)?;
                        acc.entry((k.clone(), kf)).or_default().push(f + (h.log_weight + l.log_weight + pk + pl));
                    }
                }
            }
        }
        let terms = acc
            .into_iter()
            .map(|(key, ws)| {
                let order = ws[0].order;
                let logs: Vec<f64> = ws.iter().map(|w| w.log).collect();
                (key, LimitLog { order, log: log_sum_exp(&logs) })
            })
            .collect();
        let pairs = DwSmoothingPairs {
            pairs: Self::normalize_pairs(terms)?,
            rate_offset: b_past + c + b_future,
        };
        self.pairs_to_law(&pairs, n_now)
    }

    /// Success probability of the negative binomial count of one further
    /// draw under `law`.
    fn count_success_prob(law: &GammaMixtureLaw) -> f64 {
        1.0 / (1.0 + law.rate())
    }

    /// Pmf of the size of one further draw: a mixture of negative binomials
    /// with `θ + |s|` failures, truncated once a certified bound on the
    /// remaining mass and on its contribution to the mean both fall below
    /// [`COUNT_TAIL`].
    pub fn predict_count_pmf(&self, law: &GammaMixtureLaw) -> Result<CountPmf> {
        let p = Self::count_success_prob(law);
        let comps: Vec<(f64, f64)> = law
            .components
            .iter()
            .map(|c| (c.weight(), self.theta() + c.index.total() as f64))
            .collect();
        let mut probs = Vec::new();
        let mut n: u64 = 0;
        loop {
            let mut pn = 0.0;
            let mut mass_tail = 0.0;
            let mut mean_tail = 0.0;
            for &(w, r) in &comps {
                let pmf = log_neg_bin_pmf(n, r, p)?.exp();
                pn += w * pmf;
                // Beyond n, consecutive pmf ratios stay below rho, so both
                // tails are dominated by geometric series.
                let rho = if r >= 1.0 { p * (r + n as f64) / (n as f64 + 1.0) } else { p };
                if rho < 1.0 {
                    let g = rho / (1.0 - rho);
                    mass_tail += w * pmf * g;
                    mean_tail += w * pmf * (n as f64 * g + g / (1.0 - rho));
                } else {
                    mass_tail += w;
                    mean_tail = f64::INFINITY;
                }
            }
            probs.push(pn);
            n += 1;
            if mass_tail < COUNT_TAIL && mean_tail < COUNT_TAIL {
                return Ok(CountPmf { probs, tail_bound: mass_tail });
            }
            if n > 10_000_000 {
                return Err(Error::Normalization {
                    component: 0,
                    detail: "count pmf tail does not decay".into(),
                });
            }
        }
    }

    /// Exact mean of the size of one further draw.
    pub fn predict_count_mean(&self, law: &GammaMixtureLaw) -> f64 {
        law.components
            .iter()
            .map(|c| c.weight() * (self.theta() + c.index.total() as f64))
            .sum::<f64>()
            / law.rate()
    }

    /// Component weights given that the further draw has `m` elements.
    fn count_posterior(&self, law: &GammaMixtureLaw, m: u64) -> Result<Vec<(MultiIndex, f64)>> {
        let p = Self::count_success_prob(law);
        let mut out = Vec::with_capacity(law.len());
        for c in law.components.iter() {
            let lp = log_neg_bin_pmf(m, self.theta() + c.index.total() as f64, p)?;
            out.push((c.index.clone(), c.log_weight + lp));
        }
        let total = log_sum_exp(&out.iter().map(|c| c.1).collect::<Vec<_>>());
        for c in &mut out {
            c.1 -= total;
        }
        Ok(out)
    }

    /// Law of the next label of a further draw of size `m`, given its
    /// labels drawn so far.
    pub fn label_pmf<S: AsRef<str>>(&self, law: &GammaMixtureLaw, m: u64, history: &[S]) -> Result<NextDrawPmf> {
        let comps = self.count_posterior(law, m)?;
        let history = UrnHistory::from_labels(&self.registry, history);
        Ok(urn::mixture_next_pmf(&self.params, &comps, &history))
    }

    /// Law of the first label of a further draw, given that it is nonempty.
    pub fn first_label_pmf(&self, law: &GammaMixtureLaw) -> Result<NextDrawPmf> {
        let p = Self::count_success_prob(law);
        let mut comps = Vec::with_capacity(law.len());
        for c in law.components.iter() {
            let empty = log_neg_bin_pmf(0, self.theta() + c.index.total() as f64, p)?;
            let nonempty = crate::special::ln_one_minus_exp(empty);
            comps.push((c.index.clone(), c.log_weight + nonempty));
        }
        let total = log_sum_exp(&comps.iter().map(|c| c.1).collect::<Vec<_>>());
        for c in &mut comps {
            c.1 -= total;
        }
        Ok(urn::mixture_next_pmf(&self.params, &comps, &UrnHistory::new(self.dim())))
    }

    /// Samples one further draw: its size `m`, then `m` labels from the urn
    /// of a component drawn given `m`.
    pub fn predict_draw<R: Rng + ?Sized>(&self, law: &GammaMixtureLaw, rng: &mut R) -> Result<(u64, Vec<String>)> {
        // Component first, then its negative binomial count: same joint law
        // as drawing the count from the mixture and the component given it.
        let weights: Vec<f64> = law.components.iter().map(|c| c.log_weight).collect();
        let s = &law.components.as_slice()[urn::sample_log_weights(&weights, rng)].index;
        let m = sample_neg_bin(self.theta() + s.total() as f64, Self::count_success_prob(law), rng);
        let mut history = UrnHistory::new(self.dim());
        let mut labels = Vec::with_capacity(m as usize);
        for _ in 0..m {
            let draw = urn::sample_next(&self.params, s, &history, rng);
            labels.push(urn::draw_label(&self.registry, &history, draw));
            history.record(draw);
        }
        Ok((m, labels))
    }
}

/// Gamma-Poisson draw of a negative binomial count.
fn sample_neg_bin<R: Rng + ?Sized>(failures: f64, success_prob: f64, rng: &mut R) -> u64 {
    use rand_distr::{Distribution, Gamma, Poisson};
    let scale = success_prob / (1.0 - success_prob);
    let lambda = Gamma::new(failures, scale).expect("valid gamma parameters").sample(rng);
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("valid Poisson mean").sample(rng) as u64
}

fn sum_draws(draws: &[MultiIndex], dim: usize) -> MultiIndex {
    draws.iter().fold(MultiIndex::zeros(dim), |acc, d| acc.add(d))
}

/// `c` draws carrying the counts `n`: all counts in the first draw. Only
/// the total and the cardinality enter the weights.
fn split_draws(n: &MultiIndex, c: usize) -> Vec<MultiIndex> {
    let mut draws = vec![MultiIndex::zeros(n.dim()); c];
    if let Some(first) = draws.first_mut() {
        *first = n.clone();
    }
    draws
}
