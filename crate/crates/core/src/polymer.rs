//! Abstract polymer models on a bounded-degree host graph, with the hard-core
//! (low fugacity) and Ising (external field) instances.

use std::fmt;
use std::sync::Arc;

use serde_json::{json, Value};

use crate::cluster::PolymerSystem;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::scalar::{Coeff, Rational};
use crate::series::TruncatedSeries;

/// A connected support in the host graph with a spin on each vertex.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Polymer {
    /// Sorted host vertices.
    pub support: Vec<usize>,
    pub spins: Vec<i8>,
}

impl Polymer {
    pub fn new(mut support: Vec<usize>, spin: i8) -> Self {
        support.sort_unstable();
        let spins = vec![spin; support.len()];
        Polymer { support, spins }
    }

    pub fn size(&self) -> usize {
        self.support.len()
    }

    /// Canonical key: sorted support, then spins.
    pub fn id(&self) -> String {
        let s: Vec<String> = self.support.iter().map(usize::to_string).collect();
        let o: Vec<String> = self.spins.iter().map(|x| format!("{x:+}")).collect();
        format!("{}:{}", s.join(","), o.join(","))
    }

    pub fn to_json(&self) -> Value {
        json!({"support": self.support, "spins": self.spins})
    }

    fn sort_key(&self) -> (usize, &[usize], &[i8]) {
        (self.size(), &self.support, &self.spins)
    }
}

impl fmt::Debug for Polymer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Polymer({})", self.id())
    }
}

/// Compatible iff graph distance between supports exceeds 1. A polymer is
/// never compatible with itself.
pub fn compatible(host: &Graph, a: &Polymer, b: &Polymer) -> bool {
    !host.within_distance_one(&a.support, &b.support)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PolymerKind {
    /// Single occupied vertices with weight z.
    HardCore,
    /// Connected sets of +1 spins with weight z^{2|γ|} e^{−2β|∂_e γ|}.
    Ising { beta: f64 },
}

type WeightFn<S> = dyn Fn(&Graph, &Polymer, usize) -> TruncatedSeries<S> + Send + Sync;
type Filter = dyn Fn(&Polymer) -> bool + Send + Sync;

/// A polymer model: host graph, polymer family, weights and regime constants.
#[derive(Clone)]
pub struct PolymerModel<S: Coeff> {
    host: Graph,
    kind: PolymerKind,
    weight: Arc<WeightFn<S>>,
    filter: Option<Arc<Filter>>,
    /// Weights vanish below order ⌈ρ|γ̄|⌉.
    pub rho: f64,
    /// Z(G, z) has degree at most `degree_bound · |G|`.
    pub degree_bound: usize,
    /// Assumed zero-free radius.
    pub delta: f64,
}

impl<S: Coeff> fmt::Debug for PolymerModel<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PolymerModel")
            .field("kind", &self.kind)
            .field("host_size", &self.host.len())
            .field("filtered", &self.filter.is_some())
            .field("rho", &self.rho)
            .field("delta", &self.delta)
            .finish()
    }
}

/// Default hard-core radius 1/(e(Δ+1)), the Kotecký–Preiss bound for single vertices.
pub fn hardcore_default_delta(max_degree: usize) -> f64 {
    1.0 / (std::f64::consts::E * (max_degree as f64 + 1.0))
}

impl<S: Coeff> PolymerModel<S> {
    /// Hard-core model at fugacity z: polymers are single vertices of weight z.
    pub fn hardcore(host: Graph, delta: Option<f64>) -> Result<Self> {
        let delta = check_delta(delta.unwrap_or_else(|| hardcore_default_delta(host.max_degree())))?;
        Ok(PolymerModel {
            host,
            kind: PolymerKind::HardCore,
            weight: Arc::new(|_, _, order| TruncatedSeries::monomial(order, 1, S::one())),
            filter: None,
            rho: 1.0,
            degree_bound: 1,
            delta,
        })
    }

    pub fn host(&self) -> &Graph {
        &self.host
    }

    pub fn kind(&self) -> PolymerKind {
        self.kind
    }

    pub fn with_delta(mut self, delta: f64) -> Result<Self> {
        self.delta = check_delta(delta)?;
        Ok(self)
    }

    /// The sub-family of polymers accepted by `keep` (and by any earlier filter).
    pub fn filtered(&self, keep: impl Fn(&Polymer) -> bool + Send + Sync + 'static) -> Self {
        let mut out = self.clone();
        out.filter = Some(match self.filter.clone() {
            None => Arc::new(keep),
            Some(prev) => Arc::new(move |p: &Polymer| prev(p) && keep(p)),
        });
        out
    }

    /// Whether (support, spins) is a polymer of this model (ignoring filters).
    pub fn is_polymer(&self, p: &Polymer) -> bool {
        if p.support.is_empty() || p.spins.len() != p.support.len() {
            return false;
        }
        if p.support.iter().any(|&v| v >= self.host.len()) || p.support.windows(2).any(|w| w[0] >= w[1]) {
            return false;
        }
        match self.kind {
            PolymerKind::HardCore => p.size() == 1 && p.spins[0] == 1,
            PolymerKind::Ising { .. } => p.spins.iter().all(|&s| s == 1) && self.host.is_connected_subset(&p.support),
        }
    }

    fn accepts(&self, p: &Polymer) -> bool {
        self.filter.as_ref().is_none_or(|f| f(p))
    }

    /// Every polymer with at most `max_size` vertices, sorted by (size, id).
    pub fn list_polymers(&self, max_size: usize) -> Vec<Polymer> {
        if max_size == 0 {
            return Vec::new();
        }
        let mut out: Vec<Polymer> = match self.kind {
            PolymerKind::HardCore => (0..self.host.len()).map(|v| Polymer::new(vec![v], 1)).collect(),
            PolymerKind::Ising { .. } => {
                self.host.all_connected_subsets(max_size).into_iter().map(|s| Polymer::new(s, 1)).collect()
            }
        };
        out.retain(|p| self.accepts(p));
        out.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        out
    }

    /// Polymers of size ≤ `max_size` incompatible with `gamma`, including itself.
    pub fn incompatible_with(&self, gamma: &Polymer, max_size: usize) -> Vec<Polymer> {
        self.list_polymers(max_size)
            .into_iter()
            .filter(|p| !compatible(&self.host, gamma, p))
            .collect()
    }

    pub fn compatible(&self, a: &Polymer, b: &Polymer) -> bool {
        compatible(&self.host, a, b)
    }

    /// Weight series of `p` truncated at `order`.
    pub fn weight(&self, p: &Polymer, order: usize) -> TruncatedSeries<S> {
        (self.weight)(&self.host, p, order)
    }

    /// Lowest order at which a weight can be non-zero.
    pub fn min_order(&self, p: &Polymer) -> usize {
        (self.rho * p.size() as f64).ceil() as usize
    }

    /// Largest polymer that can contribute at order `m`.
    pub fn max_relevant_size(&self, m: usize) -> usize {
        (m as f64 / self.rho).floor() as usize
    }

    /// Numeric weight at real z (weights are polynomials of degree ≤ C|γ̄|).
    pub fn weight_value(&self, p: &Polymer, z: f64) -> f64 {
        self.weight(p, self.degree_bound * p.size()).evaluate_real(z)
    }

    /// N = C·|G|, the degree bound used by the truncation lemma.
    pub fn degree(&self) -> usize {
        self.degree_bound * self.host.len()
    }

    /// The polymers relevant at order `m` and their cluster system.
    pub fn system(&self, m: usize) -> Result<(Vec<Polymer>, PolymerSystem<S>)> {
        let polymers = self.list_polymers(self.max_relevant_size(m));
        let weights: Vec<TruncatedSeries<S>> = polymers.iter().map(|p| self.weight(p, m)).collect();
        let words = self.host.len().div_ceil(64);
        let closed: Vec<Vec<u64>> = polymers
            .iter()
            .map(|p| {
                let mut bits = vec![0u64; words];
                for &v in &p.support {
                    bits[v / 64] |= 1 << (v % 64);
                    for &u in self.host.neighbors(v) {
                        bits[u / 64] |= 1 << (u % 64);
                    }
                }
                bits
            })
            .collect();
        let system = PolymerSystem::new(m, &weights, |a, b| {
            polymers[b].support.iter().any(|&v| closed[a][v / 64] >> (v % 64) & 1 == 1)
        })?;
        Ok((polymers, system))
    }

    /// Truncated Kotecký–Preiss check at real `z` over polymers of size ≤ `max_size`.
    ///
    /// This is a heuristic certificate: polymers beyond `max_size` are ignored.
    pub fn kp_certificate(&self, z: f64, max_size: usize) -> KpCertificate {
        let polymers = self.list_polymers(max_size);
        let terms: Vec<f64> = polymers
            .iter()
            .map(|p| self.weight_value(p, z).abs() * (p.size() as f64).exp())
            .collect();
        let margins: Vec<f64> = polymers
            .iter()
            .map(|g| {
                let sum: f64 = polymers
                    .iter()
                    .zip(&terms)
                    .filter(|(p, _)| !self.compatible(g, p))
                    .map(|(_, t)| t)
                    .sum();
                g.size() as f64 - sum
            })
            .collect();
        let worst = margins.iter().copied().fold(f64::INFINITY, f64::min);
        KpCertificate {
            holds_truncated: margins.iter().all(|&m| m >= -KP_TOLERANCE),
            worst_margin: if margins.is_empty() { 0.0 } else { worst },
            margins: polymers.into_iter().zip(margins).collect(),
        }
    }
}

impl PolymerModel<f64> {
    /// Ising model with external field: polymers are connected sets of +1 spins
    /// with weight z^{2|γ̄|} e^{−2β|∂_e γ̄|}. Default radius 1 (Lee–Yang).
    pub fn ising(host: Graph, beta: f64, delta: Option<f64>) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::validation(format!("beta must be positive, got {beta}")));
        }
        let delta = check_delta(delta.unwrap_or(1.0))?;
        Ok(PolymerModel {
            host,
            kind: PolymerKind::Ising { beta },
            weight: Arc::new(move |g: &Graph, p: &Polymer, order| {
                let boundary = g.edge_boundary_size(&p.support) as f64;
                TruncatedSeries::monomial(order, 2 * p.size(), (-2.0 * beta * boundary).exp())
            }),
            filter: None,
            rho: 2.0,
            degree_bound: 2,
            delta,
        })
    }
}

/// Hard-core model with exact weights.
pub fn hardcore_polymer_model(host: Graph, delta: Option<f64>) -> Result<PolymerModel<Rational>> {
    PolymerModel::hardcore(host, delta)
}

pub fn ising_polymer_model(host: Graph, beta: f64, delta: Option<f64>) -> Result<PolymerModel<f64>> {
    PolymerModel::ising(host, beta, delta)
}

fn check_delta(delta: f64) -> Result<f64> {
    if delta > 0.0 && delta.is_finite() {
        Ok(delta)
    } else {
        Err(Error::validation(format!("delta must be a positive real, got {delta}")))
    }
}

/// Slack for floating-point equality cases (e.g. hard-core singletons at the KP radius).
pub const KP_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct KpCertificate {
    pub holds_truncated: bool,
    pub worst_margin: f64,
    /// |γ̄| − Σ_{γ' ≁ γ} |w(γ')| e^{|γ̄'|} for each listed polymer.
    pub margins: Vec<(Polymer, f64)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Region;

    #[test]
    fn hardcore_polymers_are_vertices() {
        let g = Region::cube(2, 3).nn_graph();
        let model = hardcore_polymer_model(g, None).unwrap();
        assert_eq!(model.list_polymers(3).len(), 9);
        assert!(model.list_polymers(0).is_empty());
        let w = model.weight(&Polymer::new(vec![4], 1), 3);
        assert_eq!(w.coeffs(), &[0, 1, 0, 0].map(Rational::from));
        // center of 3×3 has degree 4
        assert_eq!(model.incompatible_with(&Polymer::new(vec![4], 1), 1).len(), 5);
        assert!((model.delta - 1.0 / (5.0 * std::f64::consts::E)).abs() < 1e-15);
    }

    #[test]
    fn ising_polymers_on_a_path() {
        let model = ising_polymer_model(Graph::path(3), 1.0, None).unwrap();
        let ps = model.list_polymers(2);
        assert_eq!(ps.len(), 5);
        assert!(ps.iter().all(|p| p.spins.iter().all(|&s| s == 1)));
        let grid = Region::cube(2, 2).nn_graph();
        let m = ising_polymer_model(grid, 1.0, None).unwrap();
        assert_eq!(m.incompatible_with(&Polymer::new(vec![0], 1), 1).len(), 3);
    }

    #[test]
    fn ising_singleton_weight() {
        // a vertex of degree 4 has four boundary edges
        let g = Region::cube(2, 3).nn_graph();
        let model = ising_polymer_model(g, 1.0, None).unwrap();
        let w = model.weight(&Polymer::new(vec![4], 1), 2);
        assert_eq!(w.coeff(0), 0.0);
        assert_eq!(w.coeff(1), 0.0);
        assert!((w.coeff(2) - (-8.0f64).exp()).abs() < 1e-18);
    }

    #[test]
    fn compatibility_rules() {
        let g = Graph::path(4);
        let a = Polymer::new(vec![0], 1);
        assert!(!compatible(&g, &a, &a));
        assert!(!compatible(&g, &a, &Polymer::new(vec![1], 1)));
        assert!(compatible(&g, &a, &Polymer::new(vec![3], 1)));
    }

    #[test]
    fn kp_boundary_cases() {
        let c4 = Graph::cycle(4);
        let model = hardcore_polymer_model(c4, None).unwrap();
        let z = model.delta;
        let at = model.kp_certificate(z, 1);
        assert!(at.holds_truncated);
        assert!(at.worst_margin.abs() <= 1e-12);
        assert!(!model.kp_certificate(0.2, 1).holds_truncated);
        let zero = model.kp_certificate(0.0, 1);
        assert!(zero.holds_truncated && zero.worst_margin == 1.0);
    }

    #[test]
    fn filters_compose() {
        let model = hardcore_polymer_model(Graph::path(3), None).unwrap();
        let f = model.filtered(|p| p.support[0] != 0).filtered(|p| p.support[0] != 2);
        assert_eq!(f.list_polymers(1), vec![Polymer::new(vec![1], 1)]);
    }
}
