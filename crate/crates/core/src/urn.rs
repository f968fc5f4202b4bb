//! Generalized Pólya urns shared by both predictive laws.
//!
//! Given a mixture component with multiplicities `s` over the registered
//! types, further draws follow the Blackwell-MacQueen urn with parameter
//! `α + Σ s_j δ_{y_j}`. Draws of values never observed before are kept as
//! fresh labels `<new-1>`, `<new-2>`, ... so later draws can repeat them.

use rand::Rng;

use crate::model::{MultiIndex, TypeRegistry};
use crate::special::{leading_order, ln_gamma, ln_rising, log_sum_exp, DirichletParams, LimitLog};

/// Labels drawn so far, split into registered types and fresh values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct UrnHistory {
    pub registered: Vec<u32>,
    pub fresh: Vec<u32>,
}

impl UrnHistory {
    pub fn new(dim: usize) -> Self {
        Self {
            registered: vec![0; dim],
            fresh: Vec::new(),
        }
    }

    pub fn len(&self) -> u64 {
        self.registered.iter().chain(&self.fresh).map(|&c| c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn record(&mut self, draw: Draw) {
        match draw {
            Draw::Registered(j) => self.registered[j] += 1,
            Draw::Fresh(f) => self.fresh[f] += 1,
            Draw::New => self.fresh.push(1),
        }
    }

    /// Builds a history from labels; labels outside `registry` become
    /// fresh values in order of first appearance.
    pub fn from_labels<S: AsRef<str>>(registry: &TypeRegistry, labels: &[S]) -> Self {
        let mut out = Self::new(registry.len());
        let mut fresh_names: Vec<&str> = Vec::new();
        for label in labels {
            let label = label.as_ref();
            match registry.position(label) {
                Some(j) => out.registered[j] += 1,
                None => match fresh_names.iter().position(|&n| n == label) {
                    Some(f) => out.fresh[f] += 1,
                    None => {
                        fresh_names.push(label);
                        out.fresh.push(1);
                    }
                },
            }
        }
        out
    }
}

/// Outcome of one urn draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Draw {
    Registered(usize),
    Fresh(usize),
    New,
}

pub fn fresh_label(f: usize) -> String {
    format!("<new-{}>", f + 1)
}

/// Name of a draw outcome; `New` becomes the next fresh label.
pub fn draw_label(registry: &TypeRegistry, history: &UrnHistory, draw: Draw) -> String {
    match draw {
        Draw::Registered(j) => registry.label(j).to_string(),
        Draw::Fresh(f) => fresh_label(f),
        Draw::New => fresh_label(history.fresh.len()),
    }
}

/// Probability of the next draw over registered types, fresh values and a
/// brand-new value.
#[derive(Clone, Debug, PartialEq)]
pub struct NextDrawPmf {
    pub registered: Vec<f64>,
    pub fresh: Vec<f64>,
    pub new: f64,
}

impl NextDrawPmf {
    pub fn total(&self) -> f64 {
        self.registered.iter().chain(&self.fresh).sum::<f64>() + self.new
    }

    /// `(label, probability)` pairs in registry order, then fresh values,
    /// then the next fresh label for a new value.
    pub fn labelled(&self, registry: &TypeRegistry) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = self
            .registered
            .iter()
            .enumerate()
            .map(|(j, &p)| (registry.label(j).to_string(), p))
            .collect();
        out.extend(self.fresh.iter().enumerate().map(|(f, &p)| (fresh_label(f), p)));
        out.push((fresh_label(self.fresh.len()), self.new));
        out
    }

    fn accumulate(&mut self, other: &NextDrawPmf, weight: f64) {
        for (a, b) in self.registered.iter_mut().zip(&other.registered) {
            *a += weight * b;
        }
        for (a, b) in self.fresh.iter_mut().zip(&other.fresh) {
            *a += weight * b;
        }
        self.new += weight * other.new;
    }
}

/// Urn law of the next draw for one component.
pub fn component_next_pmf(params: &DirichletParams, s: &MultiIndex, history: &UrnHistory) -> NextDrawPmf {
    let denom = params.theta() + s.total() as f64 + history.len() as f64;
    NextDrawPmf {
        registered: (0..s.dim())
            .map(|j| (params.atom(j) + s.get(j) as f64 + history.registered[j] as f64) / denom)
            .collect(),
        fresh: history.fresh.iter().map(|&c| c as f64 / denom).collect(),
        new: params.unseen_mass() / denom,
    }
}

/// Log probability of `history` (as an ordered sequence) under the urn of
/// component `s`, up to factors common to all components.
pub fn log_history_likelihood(params: &DirichletParams, s: &MultiIndex, history: &UrnHistory) -> LimitLog {
    let theta = params.theta();
    let mut out = LimitLog::finite(-ln_rising(theta + s.total() as f64, history.len() as f64));
    for (j, &h) in history.registered.iter().enumerate() {
        if h == 0 {
            continue;
        }
        let a = params.atom(j) + s.get(j) as f64;
        out = if a > 0.0 {
            out + ln_rising(a, h as f64)
        } else {
            out + LimitLog {
                order: 1,
                log: theta.ln() + ln_gamma(h as f64),
            }
        };
    }
    out
}

/// Mixes the component urns with weights `log_weights`, reweighted by the
/// likelihood of the history under each component.
pub fn mixture_next_pmf(
    params: &DirichletParams,
    components: &[(MultiIndex, f64)],
    history: &UrnHistory,
) -> NextDrawPmf {
    let posterior = history_posterior(params, components, history);
    let dim = components.first().map_or(0, |c| c.0.dim());
    let mut pmf = NextDrawPmf {
        registered: vec![0.0; dim],
        fresh: vec![0.0; history.fresh.len()],
        new: 0.0,
    };
    for ((s, _), lw) in components.iter().zip(&posterior) {
        if *lw == f64::NEG_INFINITY {
            continue;
        }
        pmf.accumulate(&component_next_pmf(params, s, history), lw.exp());
    }
    pmf
}

/// Normalized log-weights of the components given the history.
pub fn history_posterior(params: &DirichletParams, components: &[(MultiIndex, f64)], history: &UrnHistory) -> Vec<f64> {
    let graded: Vec<LimitLog> = components
        .iter()
        .map(|(s, lw)| log_history_likelihood(params, s, history) + *lw)
        .collect();
    let lead = leading_order(&graded);
    let total = log_sum_exp(&lead);
    lead.iter().map(|l| l - total).collect()
}

/// Draws the next value from component `s` in three steps: choose the
/// source with probabilities proportional to `(θ, |s|, |history|)`, then
/// draw from the base measure, from the component's atoms, or from the
/// history.
pub fn sample_next<R: Rng + ?Sized>(params: &DirichletParams, s: &MultiIndex, history: &UrnHistory, rng: &mut R) -> Draw {
    let theta = params.theta();
    let atoms = s.total() as f64;
    let past = history.len() as f64;
    let u = rng.random::<f64>() * (theta + atoms + past);
    if u < theta {
        // Base measure.
        let mut v = rng.random::<f64>() * theta;
        for j in 0..s.dim() {
            let a = params.atom(j);
            if v < a {
                return Draw::Registered(j);
            }
            v -= a;
        }
        Draw::New
    } else if u < theta + atoms {
        pick_weighted(s.counts(), rng.random_range(0..s.total())).map_or(Draw::New, Draw::Registered)
    } else {
        let mut pick = rng.random_range(0..history.len());
        for (j, &c) in history.registered.iter().enumerate() {
            if pick < c as u64 {
                return Draw::Registered(j);
            }
            pick -= c as u64;
        }
        pick_weighted(&history.fresh, pick).map_or(Draw::New, Draw::Fresh)
    }
}

fn pick_weighted(counts: &[u32], mut pick: u64) -> Option<usize> {
    for (j, &c) in counts.iter().enumerate() {
        if pick < c as u64 {
            return Some(j);
        }
        pick -= c as u64;
    }
    None
}

/// Index drawn with probabilities `exp(log_weights)` (already normalized).
pub fn sample_log_weights<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    let mut u = rng.random::<f64>();
    let mut last = 0;
    for (i, lw) in log_weights.iter().enumerate() {
        if *lw == f64::NEG_INFINITY {
            continue;
        }
        let w = lw.exp();
        if u < w {
            return i;
        }
        u -= w;
        last = i;
    }
    last
}
