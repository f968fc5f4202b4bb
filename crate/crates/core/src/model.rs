//! Domain types shared by the engines: type registries, multi-indices,
//! observation timelines and finite mixture laws.
//!
//! Mixture weights are stored in log domain. Components with equal
//! multi-index are merged on construction and kept in lexicographic order,
//! so two mixtures describing the same law compare equal component-wise.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::error::{Error, Result};
use crate::special::{log_sum_exp, DirichletParams};

/// Ordered set of distinct observation labels.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TypeRegistry {
    labels: Vec<String>,
    positions: HashMap<String, usize>,
}

/// Result of [`TypeRegistry::merge`]: the union registry and the position of
/// every label of each input inside it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MergedRegistry {
    pub registry: TypeRegistry,
    pub reindex_a: Vec<usize>,
    pub reindex_b: Vec<usize>,
}

impl TypeRegistry {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut registry = Self::default();
        for label in labels {
            let label = label.into();
            if registry.positions.contains_key(&label) {
                return Err(Error::Registry(format!("duplicate label {label:?}")));
            }
            registry.intern(&label);
        }
        Ok(registry)
    }

    /// Returns the position of `label`, registering it if unseen.
    pub fn intern(&mut self, label: &str) -> usize {
        if let Some(&pos) = self.positions.get(label) {
            return pos;
        }
        let pos = self.labels.len();
        self.labels.push(label.to_string());
        self.positions.insert(label.to_string(), pos);
        pos
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, pos: usize) -> &str {
        &self.labels[pos]
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.positions.get(label).copied()
    }

    /// Union of two registries: `a`'s labels in order, then `b`'s new labels.
    pub fn merge(a: &TypeRegistry, b: &TypeRegistry) -> MergedRegistry {
        let mut registry = a.clone();
        let reindex_a = (0..a.len()).collect();
        let reindex_b = b.labels.iter().map(|l| registry.intern(l)).collect();
        MergedRegistry {
            registry,
            reindex_a,
            reindex_b,
        }
    }
}

/// Nonnegative integer counts over the registered types.
///
/// The derived ordering is lexicographic on the counts, which is the
/// canonical component order of every mixture.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex {
    counts: Vec<u32>,
    total: u64,
}

impl MultiIndex {
    pub fn new(counts: Vec<u32>) -> Self {
        let total = counts.iter().map(|&c| c as u64).sum();
        Self { counts, total }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            counts: vec![0; dim],
            total: 0,
        }
    }

    /// Unit vector in direction `j` scaled by `count`.
    pub fn unit(dim: usize, j: usize, count: u32) -> Self {
        let mut counts = vec![0; dim];
        counts[j] = count;
        Self::new(counts)
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn get(&self, j: usize) -> u32 {
        self.counts[j]
    }

    pub fn is_zero(&self) -> bool {
        self.total == 0
    }

    /// Componentwise partial order.
    pub fn le(&self, other: &MultiIndex) -> bool {
        self.counts.len() == other.counts.len()
            && self.counts.iter().zip(&other.counts).all(|(a, b)| a <= b)
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        assert_eq!(self.dim(), other.dim(), "multi-index dimension mismatch");
        MultiIndex {
            counts: self
                .counts
                .iter()
                .zip(&other.counts)
                .map(|(a, b)| a + b)
                .collect(),
            total: self.total + other.total,
        }
    }

    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        if !other.le(self) {
            return None;
        }
        Some(MultiIndex {
            counts: self
                .counts
                .iter()
                .zip(&other.counts)
                .map(|(a, b)| a - b)
                .collect(),
            total: self.total - other.total,
        })
    }

    /// Re-expresses the counts in a larger registry: entry `j` moves to
    /// position `map[j]`.
    pub fn reindex(&self, map: &[usize], dim: usize) -> MultiIndex {
        let mut counts = vec![0; dim];
        for (j, &c) in self.counts.iter().enumerate() {
            counts[map[j]] += c;
        }
        MultiIndex::new(counts)
    }

    /// Every multi-index `k` with `0 <= k <= self`, in lexicographic order.
    pub fn below(&self) -> SubLattice {
        SubLattice {
            upper: self.counts.clone(),
            next: Some(vec![0; self.counts.len()]),
        }
    }

    /// Number of multi-indices below `self`, i.e. `prod_j (1 + n_j)`.
    pub fn lattice_size(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64 + 1).product()
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (j, c) in self.counts.iter().enumerate() {
            if j > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "]")
    }
}

/// Odometer over a box `{k : 0 <= k <= upper}`.
pub struct SubLattice {
    upper: Vec<u32>,
    next: Option<Vec<u32>>,
}

impl Iterator for SubLattice {
    type Item = MultiIndex;

    fn next(&mut self) -> Option<MultiIndex> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut advanced = false;
        for j in (0..succ.len()).rev() {
            if succ[j] < self.upper[j] {
                succ[j] += 1;
                advanced = true;
                break;
            }
            succ[j] = 0;
        }
        if advanced {
            self.next = Some(succ);
        }
        Some(MultiIndex::new(current))
    }
}

/// The base measure `alpha = theta * P0`.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseMeasure {
    theta: f64,
    kind: BaseKind,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BaseKind {
    Nonatomic,
    /// `P0` masses of the registered labels. Whatever is left to one is the
    /// mass of atoms never observed.
    Discrete(BTreeMap<String, f64>),
}

impl BaseMeasure {
    pub fn nonatomic(theta: f64) -> Result<Self> {
        check_theta(theta)?;
        Ok(Self {
            theta,
            kind: BaseKind::Nonatomic,
        })
    }

    pub fn discrete(theta: f64, atom_probs: BTreeMap<String, f64>) -> Result<Self> {
        check_theta(theta)?;
        let mut sum = 0.0;
        for (label, &p) in &atom_probs {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Domain(format!(
                    "P0 mass of {label:?} must lie in (0, 1], got {p}"
                )));
            }
            sum += p;
        }
        if sum > 1.0 + 1e-12 {
            return Err(Error::Domain(format!("P0 masses sum to {sum} > 1")));
        }
        Ok(Self {
            theta,
            kind: BaseKind::Discrete(atom_probs),
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn kind(&self) -> &BaseKind {
        &self.kind
    }

    pub fn is_nonatomic(&self) -> bool {
        matches!(self.kind, BaseKind::Nonatomic)
    }

    /// `P0` mass outside the registered labels.
    pub fn unseen_mass(&self, registry: &TypeRegistry) -> f64 {
        match &self.kind {
            BaseKind::Nonatomic => 1.0,
            BaseKind::Discrete(probs) => {
                let seen: f64 = registry
                    .labels()
                    .iter()
                    .filter_map(|l| probs.get(l))
                    .sum();
                (1.0 - seen).max(0.0)
            }
        }
    }

    /// Per-type parameters over `registry`. A discrete `P0` must put
    /// positive mass on every registered label.
    pub fn resolve(&self, registry: &TypeRegistry) -> Result<DirichletParams> {
        match &self.kind {
            BaseKind::Nonatomic => Ok(DirichletParams::nonatomic(self.theta)),
            BaseKind::Discrete(probs) => {
                let atoms = registry
                    .labels()
                    .iter()
                    .map(|label| {
                        probs.get(label).map(|p| self.theta * p).ok_or_else(|| {
                            Error::Domain(format!(
                                "discrete P0 has no mass at observed label {label:?}"
                            ))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                DirichletParams::discrete(self.theta, atoms)
            }
        }
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("theta must be positive, got {theta}")))
    }
}

/// Collection times with the draws observed at each of them.
///
/// The Fleming-Viot model only uses the per-time totals
/// ([`ObservationTimeline::counts`]); the Dawson-Watanabe model also needs
/// the number of draws per time (its cardinality).
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationTimeline {
    times: Vec<f64>,
    draws: Vec<Vec<MultiIndex>>,
    counts: Vec<MultiIndex>,
}

impl ObservationTimeline {
    pub fn new(times: Vec<f64>, draws: Vec<Vec<MultiIndex>>, dim: usize) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Timeline("at least one time required".into()));
        }
        if times.len() != draws.len() {
            return Err(Error::Timeline(format!(
                "{} times but {} observation groups",
                times.len(),
                draws.len()
            )));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Timeline("times must be finite".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Timeline("times must be strictly increasing".into()));
        }
        let mut counts = Vec::with_capacity(draws.len());
        for group in &draws {
            let mut total = MultiIndex::zeros(dim);
            for d in group {
                if d.dim() != dim {
                    return Err(Error::Timeline(format!(
                        "draw {d} has dimension {} but registry has {dim} labels",
                        d.dim()
                    )));
                }
                total = total.add(d);
            }
            counts.push(total);
        }
        Ok(Self {
            times,
            draws,
            counts,
        })
    }

    /// One aggregated count vector per time (Fleming-Viot data).
    pub fn from_counts(times: Vec<f64>, counts: Vec<MultiIndex>) -> Result<Self> {
        let dim = counts.first().map_or(0, MultiIndex::dim);
        let draws = counts.into_iter().map(|c| vec![c]).collect();
        Self::new(times, draws, dim)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the last collection time.
    pub fn last(&self) -> usize {
        self.times.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.counts.first().map_or(0, MultiIndex::dim)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn counts(&self, i: usize) -> &MultiIndex {
        &self.counts[i]
    }

    pub fn draws(&self, i: usize) -> &[MultiIndex] {
        &self.draws[i]
    }

    pub fn cardinality(&self, i: usize) -> usize {
        self.draws[i].len()
    }

    /// Total multiplicities over times `range`.
    pub fn total_counts(&self, range: std::ops::Range<usize>) -> MultiIndex {
        self.counts[range]
            .iter()
            .fold(MultiIndex::zeros(self.dim()), |acc, c| acc.add(c))
    }

    pub fn check_index(&self, i: usize) -> Result<()> {
        if i < self.len() {
            Ok(())
        } else {
            Err(Error::Index(format!(
                "time index {i} out of range for {} collection times",
                self.len()
            )))
        }
    }
}

/// One mixture component: a multi-index and its log-weight.
#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub index: MultiIndex,
    pub log_weight: f64,
}

impl Component {
    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }
}

/// Canonical list of weighted multi-indices: sorted, pairwise distinct.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Components(Vec<Component>);

impl Components {
    /// Builds the canonical form, merging equal indices by adding weights.
    pub fn from_terms<I>(terms: I) -> Self
    where
        I: IntoIterator<Item = (MultiIndex, f64)>,
    {
        let mut grouped: BTreeMap<MultiIndex, Vec<f64>> = BTreeMap::new();
        for (index, lw) in terms {
            grouped.entry(index).or_default().push(lw);
        }
        Components(
            grouped
                .into_iter()
                .map(|(index, lws)| Component {
                    index,
                    log_weight: log_sum_exp(&lws),
                })
                .collect(),
        )
    }

    pub fn single(index: MultiIndex) -> Self {
        Components(vec![Component {
            index,
            log_weight: 0.0,
        }])
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Component> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Component] {
        &self.0
    }

    pub fn log_total(&self) -> f64 {
        log_sum_exp(&self.0.iter().map(|c| c.log_weight).collect::<Vec<_>>())
    }

    /// Shifts log-weights so they sum to one in linear scale and drops
    /// zero-weight components.
    pub fn normalize(&self) -> Result<Self> {
        let log_total = self.log_total();
        if log_total == f64::NEG_INFINITY {
            return Err(Error::AllWeightsZero);
        }
        if !log_total.is_finite() {
            let bad = self
                .0
                .iter()
                .position(|c| !(c.log_weight < f64::INFINITY))
                .unwrap_or(0);
            return Err(Error::Normalization {
                component: bad,
                detail: format!("log-weight total is {log_total}"),
            });
        }
        Ok(Components(
            self.0
                .iter()
                .filter(|c| c.log_weight > f64::NEG_INFINITY)
                .map(|c| Component {
                    index: c.index.clone(),
                    log_weight: c.log_weight - log_total,
                })
                .collect(),
        ))
    }

    /// Drops components of normalized weight below `epsilon`, then
    /// renormalizes. `epsilon = 0` keeps everything.
    pub fn prune(&self, epsilon: f64) -> Result<Self> {
        if epsilon <= 0.0 {
            return Ok(self.clone());
        }
        let normalized = self.normalize()?;
        let log_eps = epsilon.ln();
        let kept: Vec<Component> = normalized
            .0
            .into_iter()
            .filter(|c| c.log_weight >= log_eps)
            .collect();
        Components(kept).normalize()
    }

    pub fn weight_sum(&self) -> f64 {
        self.0.iter().map(Component::weight).sum()
    }

    pub fn log_weight_of(&self, index: &MultiIndex) -> f64 {
        self.0
            .binary_search_by(|c| c.index.cmp(index))
            .map_or(f64::NEG_INFINITY, |pos| self.0[pos].log_weight)
    }
}

/// `sum_m w_m Pi_{alpha + sum_j m_j delta_{y_j}}`: a finite mixture of
/// Dirichlet random measure laws.
#[derive(Clone, Debug, PartialEq)]
pub struct DirichletMixtureLaw {
    pub components: Components,
}

impl DirichletMixtureLaw {
    /// The stationary law `Pi_alpha`.
    pub fn prior(dim: usize) -> Self {
        Self {
            components: Components::single(MultiIndex::zeros(dim)),
        }
    }

    pub fn new(components: Components) -> Result<Self> {
        Ok(Self {
            components: components.normalize()?,
        })
    }

    pub fn normalize(&self) -> Result<Self> {
        Self::new(self.components.clone())
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Posterior mean of `X(y_j)` for every registered type, given the
    /// per-type parameters and total mass.
    pub fn mean(&self, params: &DirichletParams) -> Vec<f64> {
        let dim = self.components.iter().next().map_or(0, |c| c.index.dim());
        let mut mean = vec![0.0; dim];
        for c in self.components.iter() {
            let w = c.weight();
            let denom = params.theta() + c.index.total() as f64;
            for (j, m) in mean.iter_mut().enumerate() {
                *m += w * (params.atom(j) + c.index.get(j) as f64) / denom;
            }
        }
        mean
    }
}

/// `sum_m w_m Gamma^{beta + b}_{alpha + sum_j m_j delta_{y_j}}`: a finite
/// mixture of gamma random measure laws sharing the rate offset `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaMixtureLaw {
    pub components: Components,
    pub beta: f64,
    pub rate_offset: f64,
}

impl GammaMixtureLaw {
    /// The stationary law `Gamma^beta_alpha`.
    pub fn prior(dim: usize, beta: f64) -> Self {
        Self {
            components: Components::single(MultiIndex::zeros(dim)),
            beta,
            rate_offset: 0.0,
        }
    }

    pub fn new(components: Components, beta: f64, rate_offset: f64) -> Result<Self> {
        if !(rate_offset >= 0.0) {
            return Err(Error::Domain(format!(
                "rate offset must be nonnegative, got {rate_offset}"
            )));
        }
        Ok(Self {
            components: components.normalize()?,
            beta,
            rate_offset,
        })
    }

    pub fn normalize(&self) -> Result<Self> {
        Self::new(self.components.clone(), self.beta, self.rate_offset)
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Total rate `beta + b` of every component.
    pub fn rate(&self) -> f64 {
        self.beta + self.rate_offset
    }

    /// Posterior mean of `Z(y_j)` for every registered type.
    pub fn mean(&self, params: &DirichletParams) -> Vec<f64> {
        let dim = self.components.iter().next().map_or(0, |c| c.index.dim());
        let mut mean = vec![0.0; dim];
        for c in self.components.iter() {
            let w = c.weight();
            for (j, m) in mean.iter_mut().enumerate() {
                *m += w * (params.atom(j) + c.index.get(j) as f64) / self.rate();
            }
        }
        mean
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mi(c: &[u32]) -> MultiIndex {
        MultiIndex::new(c.to_vec())
    }

    #[test]
    fn normalize_single_component() {
        let c = Components::from_terms([(mi(&[1, 0]), -3.2)]).normalize().unwrap();
        assert_eq!(c.len(), 1);
        assert!(c.as_slice()[0].log_weight.abs() < 1e-15);
    }

    #[test]
    fn normalize_equal_weights() {
        let c = Components::from_terms([(mi(&[1]), -5.0), (mi(&[0]), -5.0)])
            .normalize()
            .unwrap();
        for comp in c.iter() {
            assert!((comp.weight() - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn normalize_scaled_weights() {
        let shift = (-7.0f64).exp();
        let terms = [(mi(&[0]), 0.2), (mi(&[1]), 0.3), (mi(&[2]), 0.5)]
            .map(|(m, w)| (m, (w * shift).ln()));
        let c = Components::from_terms(terms).normalize().unwrap();
        let w: Vec<f64> = c.iter().map(Component::weight).collect();
        for (got, want) in w.iter().zip([0.2, 0.3, 0.5]) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn normalize_all_zero_fails() {
        let c = Components::from_terms([(mi(&[0]), f64::NEG_INFINITY)]);
        assert_eq!(c.normalize(), Err(Error::AllWeightsZero));
    }

    #[test]
    fn equal_indices_are_merged_in_order() {
        let c = Components::from_terms([
            (mi(&[1, 0]), 0.25f64.ln()),
            (mi(&[0, 1]), 0.5f64.ln()),
            (mi(&[1, 0]), 0.25f64.ln()),
        ]);
        assert_eq!(c.len(), 2);
        assert_eq!(c.as_slice()[0].index, mi(&[0, 1]));
        assert!((c.as_slice()[1].weight() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn merge_registries() {
        let a = TypeRegistry::new(["x", "y"]).unwrap();
        let b = TypeRegistry::new(["y", "z"]).unwrap();
        let m = TypeRegistry::merge(&a, &b);
        assert_eq!(m.registry.labels(), ["x", "y", "z"]);
        assert_eq!(m.reindex_b, vec![1, 2]);
        assert_eq!(m.reindex_a, vec![0, 1]);

        let empty = TypeRegistry::default();
        let x = TypeRegistry::new(["x"]).unwrap();
        assert_eq!(TypeRegistry::merge(&empty, &x).registry.labels(), ["x"]);

        let abc = TypeRegistry::new(["a", "b", "c"]).unwrap();
        let m = TypeRegistry::merge(&abc, &abc);
        assert_eq!(m.registry, abc);
        assert_eq!(m.reindex_b, vec![0, 1, 2]);
    }

    #[test]
    fn duplicate_labels_rejected() {
        assert!(TypeRegistry::new(["a", "a"]).is_err());
    }

    #[test]
    fn sub_lattice_enumeration() {
        let n = mi(&[1, 2]);
        let all: Vec<_> = n.below().collect();
        assert_eq!(all.len() as u64, n.lattice_size());
        assert_eq!(all.first().unwrap(), &mi(&[0, 0]));
        assert_eq!(all.last().unwrap(), &n);
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        assert!(all.iter().all(|k| k.le(&n)));
        assert_eq!(MultiIndex::zeros(0).below().count(), 1);
    }

    #[test]
    fn partial_order() {
        assert!(mi(&[0, 1]).le(&mi(&[1, 1])));
        assert!(!mi(&[2, 0]).le(&mi(&[1, 1])));
        assert_eq!(mi(&[2, 1]).checked_sub(&mi(&[1, 1])), Some(mi(&[1, 0])));
        assert_eq!(mi(&[0, 1]).checked_sub(&mi(&[1, 1])), None);
    }

    #[test]
    fn timeline_rejects_unsorted_times() {
        let c = vec![mi(&[1]), mi(&[0])];
        assert!(ObservationTimeline::from_counts(vec![1.0, 0.5], c.clone()).is_err());
        assert!(ObservationTimeline::from_counts(vec![], vec![]).is_err());
        let tl = ObservationTimeline::from_counts(vec![0.0, 0.5], c).unwrap();
        assert_eq!(tl.total_counts(0..2), mi(&[1]));
    }

    #[test]
    fn discrete_base_requires_mass_at_observed_labels() {
        let reg = TypeRegistry::new(["a", "b"]).unwrap();
        let base = BaseMeasure::discrete(1.0, [("a".to_string(), 0.5)].into()).unwrap();
        assert!(matches!(base.resolve(&reg), Err(Error::Domain(_))));
        assert!(BaseMeasure::discrete(1.0, [("a".to_string(), 1.5)].into()).is_err());
        assert!(BaseMeasure::nonatomic(0.0).is_err());
    }
}
