//! Fleming-Viot engine: filtering, smoothing and prediction with finite
//! mixtures of Dirichlet random measures.
//!
//! Observations at time `t_i` are the multiplicities `n_i` of the
//! registered types. Every law handled here is
//! `Σ_m w_m Π_{α + Σ_j m_j δ_{y_j}}`, stored as a [`DirichletMixtureLaw`].

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::dual::FvDual;
use crate::error::{Error, Result};
use crate::model::{BaseMeasure, Components, DirichletMixtureLaw, MultiIndex, ObservationTimeline, TypeRegistry};
use crate::ode::Tolerance;
use crate::special::{leading_order, DirichletParams, LimitLog};
use crate::urn::{self, NextDrawPmf, UrnHistory};

/// Pair of past and future multiplicities retained by a smoothing
/// component, keyed as `(k_past, k_future)`.
pub type SmoothingPairs = BTreeMap<(MultiIndex, MultiIndex), f64>;

/// Types that the past (resp. future) sample shares with the present or
/// the other side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SharedAtomSets {
    pub past: BTreeSet<usize>,
    pub future: BTreeSet<usize>,
}

impl SharedAtomSets {
    pub fn new(n_past: &MultiIndex, n_now: &MultiIndex, n_future: &MultiIndex) -> Self {
        let dim = n_now.dim();
        let past = (0..dim)
            .filter(|&j| n_past.get(j) > 0 && (n_now.get(j) > 0 || n_future.get(j) > 0))
            .collect();
        let future = (0..dim)
            .filter(|&j| n_future.get(j) > 0 && (n_now.get(j) > 0 || n_past.get(j) > 0))
            .collect();
        Self { past, future }
    }

    pub fn is_empty(&self) -> bool {
        self.past.is_empty() && self.future.is_empty()
    }

    /// Whether `(k_past, k_future)` keeps every shared atom alive.
    pub fn contains(&self, k_past: &MultiIndex, k_future: &MultiIndex) -> bool {
        self.past.iter().all(|&j| k_past.get(j) > 0) && self.future.iter().all(|&j| k_future.get(j) > 0)
    }
}

/// Filtering, smoothing and prediction for one registry of observed types.
#[derive(Debug)]
pub struct FvEngine {
    registry: TypeRegistry,
    params: DirichletParams,
    dual: FvDual,
    pruning_epsilon: f64,
}

impl FvEngine {
    pub fn new(base: &BaseMeasure, registry: TypeRegistry) -> Result<Self> {
        Self::with_options(base, registry, Tolerance::default(), 0.0)
    }

    pub fn with_options(base: &BaseMeasure, registry: TypeRegistry, tol: Tolerance, pruning_epsilon: f64) -> Result<Self> {
        if !(0.0..=1e-3).contains(&pruning_epsilon) {
            return Err(Error::Domain(format!(
                "pruning threshold must lie in [0, 1e-3], got {pruning_epsilon}"
            )));
        }
        let params = base.resolve(&registry)?;
        Ok(Self {
            registry,
            dual: FvDual::with_tolerance(base.theta(), tol),
            params,
            pruning_epsilon,
        })
    }

    pub fn registry(&self) -> &TypeRegistry {
        &self.registry
    }

    pub fn params(&self) -> &DirichletParams {
        &self.params
    }

    pub fn dual(&self) -> &FvDual {
        &self.dual
    }

    pub fn dim(&self) -> usize {
        self.registry.len()
    }

    pub fn prior(&self) -> DirichletMixtureLaw {
        DirichletMixtureLaw::prior(self.dim())
    }

    fn finish(&self, terms: Vec<(MultiIndex, LimitLog)>) -> Result<DirichletMixtureLaw> {
        let graded: Vec<LimitLog> = terms.iter().map(|t| t.1).collect();
        let lead = leading_order(&graded);
        let comps = Components::from_terms(terms.into_iter().map(|t| t.0).zip(lead));
        DirichletMixtureLaw::new(comps.prune(self.pruning_epsilon)?)
    }

    fn check_dim(&self, n: &MultiIndex) -> Result<()> {
        if n.dim() == self.dim() {
            Ok(())
        } else {
            Err(Error::Index(format!(
                "multiplicities {n} do not match the {} registered types",
                self.dim()
            )))
        }
    }

    /// Conditions on multiplicities `n`: component `m` moves to `m + n` and
    /// is reweighted by the probability of `n` under `Π_{α+m}`.
    pub fn update(&self, law: &DirichletMixtureLaw, n: &MultiIndex) -> Result<DirichletMixtureLaw> {
        self.check_dim(n)?;
        if n.is_zero() {
            return Ok(law.clone());
        }
        let terms = law
            .components
            .iter()
            .map(|c| (c.index.add(n), self.params.log_predictive(&c.index, n) + c.log_weight))
            .collect();
        self.finish(terms)
    }

    /// Propagates forward in time by `dt` through the dual: component `m`
    /// spreads over `k ≤ m` with the typed death-chain transition.
    pub fn propagate_forward(&self, law: &DirichletMixtureLaw, dt: f64) -> Result<DirichletMixtureLaw> {
        if !(dt >= 0.0) {
            return Err(Error::Domain(format!("elapsed time must be nonnegative, got {dt}")));
        }
        if dt == 0.0 {
            return Ok(law.clone());
        }
        let mut terms = Vec::new();
        for c in law.components.iter() {
            for k in c.index.below() {
                let lp = self.dual.log_typed(&c.index, &k, dt)?;
                terms.push((k, LimitLog::finite(c.log_weight + lp)));
            }
        }
        self.finish(terms)
    }

    /// Backward propagation. The signal is reversible with respect to its
    /// stationary law, so this coincides with [`FvEngine::propagate_forward`].
    pub fn propagate_backward(&self, law: &DirichletMixtureLaw, dt: f64) -> Result<DirichletMixtureLaw> {
        self.propagate_forward(law, dt)
    }

    /// Law of the signal at `t_i` given the observations at `t_0..t_{i-1}`.
    pub fn filter_forward(&self, timeline: &ObservationTimeline, i: usize) -> Result<DirichletMixtureLaw> {
        timeline.check_index(i)?;
        let mut law = self.prior();
        for j in 0..i {
            law = self.update(&law, timeline.counts(j))?;
            law = self.propagate_forward(&law, timeline.time(j + 1) - timeline.time(j))?;
        }
        Ok(law)
    }

    /// Law of the signal at `t_i` given the observations at
    /// `t_{i+1}..t_N`, built from the last time backwards.
    pub fn filter_backward(&self, timeline: &ObservationTimeline, i: usize) -> Result<DirichletMixtureLaw> {
        timeline.check_index(i)?;
        let mut law = self.prior();
        for j in (i + 1..timeline.len()).rev() {
            law = self.update(&law, timeline.counts(j))?;
            law = self.propagate_backward(&law, timeline.time(j) - timeline.time(j - 1))?;
        }
        Ok(law)
    }

    /// Law of the signal at `t_i` given the observations up to and
    /// including `t_i`.
    pub fn filter(&self, timeline: &ObservationTimeline, i: usize) -> Result<DirichletMixtureLaw> {
        self.update(&self.filter_forward(timeline, i)?, timeline.counts(i))
    }

    /// Log-coupling `m(k+n+l)/(m(k)m(n)m(l))` of a smoothing pair.
    fn coupling(&self, k: &MultiIndex, n: &MultiIndex, l: &MultiIndex) -> LimitLog {
        self.params.log_coupling(k, n, l)
    }

    fn normalize_pairs(terms: Vec<((MultiIndex, MultiIndex), LimitLog)>) -> Result<SmoothingPairs> {
        let graded: Vec<LimitLog> = terms.iter().map(|t| t.1).collect();
        let lead = leading_order(&graded);
        let keys: Vec<(MultiIndex, MultiIndex)> = terms.into_iter().map(|t| t.0).collect();
        let total = crate::special::log_sum_exp(&lead);
        if total == f64::NEG_INFINITY {
            return Err(Error::AllWeightsZero);
        }
        Ok(keys
            .into_iter()
            .zip(lead)
            .filter(|(_, lw)| *lw > f64::NEG_INFINITY)
            .map(|(key, lw)| (key, lw - total))
            .collect())
    }

    /// One-step smoothing weights of the pairs `(k_past, k_future)` given
    /// one sample before and one after the present, at lags `dt_past` and
    /// `dt_future`.
    pub fn one_step_smoothing_weights(
        &self,
        n_past: &MultiIndex,
        n_now: &MultiIndex,
        n_future: &MultiIndex,
        dt_past: f64,
        dt_future: f64,
    ) -> Result<SmoothingPairs> {
        for n in [n_past, n_now, n_future] {
            self.check_dim(n)?;
        }
        let mut terms = Vec::new();
        for k in n_past.below() {
            let lp = self.dual.log_typed(n_past, &k, dt_past)?;
            for l in n_future.below() {
                let lf = self.dual.log_typed(n_future, &l, dt_future)?;
                let w = self.coupling(&k, n_now, &l) + (lp + lf);
                terms.push(((k.clone(), l), w));
            }
        }
        Self::normalize_pairs(terms)
    }

    /// Weights of the smoothing pairs at `t_i` given all observations.
    pub fn smoothing_pairs(&self, timeline: &ObservationTimeline, i: usize) -> Result<SmoothingPairs> {
        let past = self.filter_forward(timeline, i)?;
        let future = self.filter_backward(timeline, i)?;
        let n_now = timeline.counts(i);
        let mut terms = Vec::with_capacity(past.len() * future.len());
        for a in past.components.iter() {
            for b in future.components.iter() {
                let w = self.coupling(&a.index, n_now, &b.index) + (a.log_weight + b.log_weight);
                terms.push(((a.index.clone(), b.index.clone()), w));
            }
        }
        Self::normalize_pairs(terms)
    }

    /// Law of the signal at `t_i` given every observation. Component
    /// `k_past + n_i + k_future` collects the weight of its pairs.
    pub fn smooth(&self, timeline: &ObservationTimeline, i: usize) -> Result<DirichletMixtureLaw> {
        let pairs = self.smoothing_pairs(timeline, i)?;
        Self::pairs_to_law(&pairs, timeline.counts(i), self.pruning_epsilon)
    }

    fn pairs_to_law(pairs: &SmoothingPairs, n_now: &MultiIndex, eps: f64) -> Result<DirichletMixtureLaw> {
        let comps = Components::from_terms(pairs.iter().map(|((k, l), &w)| (k.add(n_now).add(l), w)));
        DirichletMixtureLaw::new(comps.prune(eps)?)
    }

    /// Smoothing law by the explicit double sum over the components `h` of
    /// the filter at `t_{i-1}` and `l` of the backward filter at `t_{i+1}`,
    /// each pushed through its own dual transition before coupling.
    pub fn smooth_by_double_sum(&self, timeline: &ObservationTimeline, i: usize) -> Result<DirichletMixtureLaw> {
        timeline.check_index(i)?;
        let dim = self.dim();
        let (left, dt_left) = if i > 0 {
            (self.filter(timeline, i - 1)?, timeline.time(i) - timeline.time(i - 1))
        } else {
            (DirichletMixtureLaw::prior(dim), 0.0)
        };
        let (right, dt_right) = if i < timeline.last() {
            let later = self.update(&self.filter_backward(timeline, i + 1)?, timeline.counts(i + 1))?;
            (later, timeline.time(i + 1) - timeline.time(i))
        } else {
            (DirichletMixtureLaw::prior(dim), 0.0)
        };
        let n_now = timeline.counts(i);
        let mut acc: BTreeMap<(MultiIndex, MultiIndex), Vec<LimitLog>> = BTreeMap::new();
        for h in left.components.iter() {
            for k in h.index.below() {
                let pk = self.dual.log_typed(&h.index, &k, dt_left)?;
                if pk == f64::NEG_INFINITY {
                    continue;
                }
                for l in right.components.iter() {
                    for kf in l.index.below() {
                        let pl = self.dual.log_typed(&l.index, &kf, dt_right)?;
                        if pl == f64::NEG_INFINITY {
                            continue;
                        }
                        let w = self.coupling(&k, n_now, &kf) + (h.log_weight + l.log_weight + pk + pl);
                        acc.entry((k.clone(), kf)).or_default().push(w);
                    }
                }
            }
        }
        // Terms sharing a pair have the same order; add their coefficients.
        let terms = acc
            .into_iter()
            .map(|(key, ws)| {
                let order = ws[0].order;
                let logs: Vec<f64> = ws.iter().map(|w| w.log).collect();
                (key, LimitLog { order, log: crate::special::log_sum_exp(&logs) })
            })
            .collect();
        let pairs = Self::normalize_pairs(terms)?;
        Self::pairs_to_law(&pairs, n_now, self.pruning_epsilon)
    }

    fn weighted_components(law: &DirichletMixtureLaw) -> Vec<(MultiIndex, f64)> {
        law.components.iter().map(|c| (c.index.clone(), c.log_weight)).collect()
    }

    /// Law of the next draw from the signal given `law` and the labels
    /// already drawn from it.
    pub fn predictive_pmf<S: AsRef<str>>(&self, law: &DirichletMixtureLaw, history: &[S]) -> NextDrawPmf {
        let history = UrnHistory::from_labels(&self.registry, history);
        urn::mixture_next_pmf(&self.params, &Self::weighted_components(law), &history)
    }

    /// Draws `count` further labels. The component is drawn once from the
    /// mixture weights; the urn then runs sequentially, which gives the
    /// same joint law as reweighting the components after every draw.
    pub fn predictive_sample<R: Rng + ?Sized>(&self, law: &DirichletMixtureLaw, count: usize, rng: &mut R) -> Vec<String> {
        let comps = Self::weighted_components(law);
        let weights: Vec<f64> = comps.iter().map(|c| c.1).collect();
        let s = &comps[urn::sample_log_weights(&weights, rng)].0;
        let mut history = UrnHistory::new(self.dim());
        let mut labels = Vec::with_capacity(count);
        for _ in 0..count {
            let draw = urn::sample_next(&self.params, s, &history, rng);
            labels.push(urn::draw_label(&self.registry, &history, draw));
            history.record(draw);
        }
        labels
    }
}
