//! Exhaustive ground truth: partition polynomials, Gibbs and polymer measures,
//! and total-variation estimates. Everything here is exact integer or rational
//! arithmetic.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cache;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::lattice::Region;
use crate::polymer::{Polymer, PolymerModel};
use crate::scalar::{Coeff, Rational};
use crate::series::TruncatedSeries;
use crate::spin::SpinSystem;

/// Default cap on the number of enumerated states.
pub const DEFAULT_STATE_CAP: u128 = 1 << 24;

/// Padding width: spins within this d∞ distance of the complement are fixed.
pub const PADDING: u32 = 2;

/// Polynomial with integer coefficients, lowest degree first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "Vec<String>", try_from = "Vec<String>")]
pub struct IntPoly(pub Vec<i128>);

impl From<IntPoly> for Vec<String> {
    fn from(p: IntPoly) -> Self {
        p.0.iter().map(i128::to_string).collect()
    }
}

impl TryFrom<Vec<String>> for IntPoly {
    type Error = std::num::ParseIntError;
    fn try_from(v: Vec<String>) -> std::result::Result<Self, Self::Error> {
        v.iter().map(|s| s.parse()).collect::<std::result::Result<Vec<i128>, _>>().map(IntPoly)
    }
}

impl IntPoly {
    fn from_histogram(h: &BTreeMap<i64, i128>) -> Result<Self> {
        if h.keys().next().is_some_and(|&k| k < 0) {
            return Err(Error::Internal("negative exponent in a partition polynomial".into()));
        }
        let deg = h.keys().next_back().copied().unwrap_or(0) as usize;
        let mut c = vec![0i128; deg + 1];
        for (&k, &v) in h {
            c[k as usize] += v;
        }
        Ok(IntPoly(c))
    }

    pub fn degree(&self) -> usize {
        self.0.iter().rposition(|&c| c != 0).unwrap_or(0)
    }

    pub fn coeffs(&self) -> &[i128] {
        &self.0
    }

    /// The polynomial as a series of the given order (higher terms dropped).
    pub fn to_series<S: Coeff>(&self, order: usize) -> TruncatedSeries<S> {
        TruncatedSeries::from_coeffs(order, self.0.iter().map(|&c| S::from_i128(c)).collect())
    }

    pub fn eval_f64(&self, z: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * z + c as f64)
    }

    pub fn eval_exact(&self, z: &Rational) -> Rational {
        self.0.iter().rev().fold(Rational::from(0), |acc, &c| acc * z.clone() + Rational::from_i128(c))
    }
}

fn check_cap(states: u128, cap: u128, what: &str) -> Result<()> {
    if states > cap {
        return Err(Error::CapExceeded { what: what.into(), needed: states, cap });
    }
    Ok(())
}

/// Independence polynomial Σ_I z^{|I|} of `g`.
pub fn brute_z_hardcore(g: &Graph) -> Result<IntPoly> {
    let n = g.len();
    check_cap(1u128 << n.min(127), DEFAULT_STATE_CAP, "hard-core enumeration")?;
    let nbr: Vec<u64> = (0..n).map(|v| g.neighbors(v).iter().fold(0, |m, &u| m | 1 << u)).collect();
    let mut counts = vec![0i128; n + 1];
    fn rec(v: usize, n: usize, blocked: u64, size: usize, nbr: &[u64], counts: &mut [i128]) {
        if v == n {
            counts[size] += 1;
            return;
        }
        rec(v + 1, n, blocked, size, nbr, counts);
        if blocked >> v & 1 == 0 {
            rec(v + 1, n, blocked | nbr[v], size + 1, nbr, counts);
        }
    }
    rec(0, n, 0, 0, &nbr, &mut counts);
    let deg = counts.iter().rposition(|&c| c != 0).unwrap_or(0);
    counts.truncate(deg + 1);
    Ok(IntPoly(counts))
}

/// Counts N[a][b] of +1 sets with |S| = a and |∂_e S| = b, so that
/// z^{|G|} e^{−β|E|} Z_G(β, z) = Σ N[a][b] z^{2a} e^{−2βb}.
#[derive(Clone, Debug, PartialEq)]
pub struct IsingTable {
    pub counts: Vec<Vec<u64>>,
}

impl IsingTable {
    /// Coefficients in z of the polymer partition function at inverse temperature β.
    pub fn polynomial(&self, beta: f64) -> Vec<f64> {
        let mut out = vec![0.0; 2 * (self.counts.len() - 1) + 1];
        for (a, row) in self.counts.iter().enumerate() {
            out[2 * a] = row.iter().enumerate().map(|(b, &n)| n as f64 * (-2.0 * beta * b as f64).exp()).sum();
        }
        out
    }
}

pub fn brute_z_ising(g: &Graph) -> Result<IsingTable> {
    let n = g.len();
    check_cap(1u128 << n.min(127), DEFAULT_STATE_CAP, "Ising enumeration")?;
    let edges = g.edges();
    let mut counts = vec![vec![0u64; edges.len() + 1]; n + 1];
    for mask in 0u64..1 << n {
        let boundary = edges.iter().filter(|&&(u, v)| (mask >> u ^ mask >> v) & 1 == 1).count();
        counts[mask.count_ones() as usize][boundary] += 1;
    }
    Ok(IsingTable { counts })
}

/// The configurations of a spin system on a region with padded boundary
/// condition φ: sites within d∞ distance [`PADDING`] of the complement are
/// fixed to the ground state, the rest are free. With no boundary every site
/// is free.
#[derive(Clone, Debug)]
pub struct PaddedSpace {
    pub system: SpinSystem,
    pub region: Region,
    pub boundary: Option<u8>,
    pub edges: Vec<(usize, usize)>,
    pub free: Vec<usize>,
    pub base: Vec<u8>,
}

impl PaddedSpace {
    pub fn new(system: SpinSystem, region: &Region, boundary: Option<u8>) -> Self {
        let dist = region.distances_to_complement();
        let mut base = vec![0u8; region.len()];
        let mut free = Vec::new();
        for (i, p) in region.vertices().iter().enumerate() {
            match boundary {
                Some(phi) if dist[i] <= PADDING => base[i] = system.ground_spin(phi, p),
                _ => free.push(i),
            }
        }
        PaddedSpace { system, region: region.clone(), boundary, edges: region.edges(), free, base }
    }

    /// Number of raw assignments of the free sites (before admissibility).
    pub fn raw_len(&self) -> u128 {
        (self.system.alphabet() as u128).checked_pow(self.free.len() as u32).unwrap_or(u128::MAX)
    }

    /// The assignment with index `idx` (mixed-radix digits over the free sites).
    pub fn config(&self, mut idx: u128) -> Vec<u8> {
        let q = self.system.alphabet() as u128;
        let mut s = self.base.clone();
        for &f in &self.free {
            s[f] = (idx % q) as u8;
            idx /= q;
        }
        s
    }

    pub fn admissible(&self, spins: &[u8]) -> bool {
        self.system.admissible(&self.edges, spins)
    }

    /// Exponent of z for a configuration; hard-core without a boundary uses
    /// |V|/2 − |I| (the torus convention).
    pub fn energy(&self, spins: &[u8]) -> i64 {
        match (self.system, self.boundary) {
            (SpinSystem::HardCore, None) => {
                self.region.len() as i64 / 2 - spins.iter().filter(|&&s| s == 1).count() as i64
            }
            (_, b) => self.system.energy(&self.region, &self.edges, b.unwrap_or(0), spins),
        }
    }

    /// Calls `f` on every admissible configuration, in parallel blocks; the
    /// per-block results are folded in index order.
    pub fn fold<T: Send>(
        &self,
        cap: u128,
        init: impl Fn() -> T + Sync,
        step: impl Fn(&mut T, &[u8]) + Sync,
        merge: impl Fn(T, T) -> T,
    ) -> Result<T> {
        let total = self.raw_len();
        check_cap(total, cap, "configuration enumeration")?;
        let block = 4096u128;
        let blocks = total.div_ceil(block) as u64;
        let parts: Vec<T> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut acc = init();
                let lo = b as u128 * block;
                for idx in lo..(lo + block).min(total) {
                    let s = self.config(idx);
                    if self.admissible(&s) {
                        step(&mut acc, &s);
                    }
                }
                acc
            })
            .collect();
        Ok(parts.into_iter().fold(init(), merge))
    }

    pub fn configs(&self, cap: u128) -> Result<Vec<Vec<u8>>> {
        self.fold(cap, Vec::new, |acc, s| acc.push(s.to_vec()), |mut a, b| {
            a.extend(b);
            a
        })
    }
}

/// Σ over configurations of z^{energy}.
pub fn brute_z_spin(system: SpinSystem, region: &Region, boundary: Option<u8>) -> Result<IntPoly> {
    if system == SpinSystem::HardCore && boundary.is_none() && !region.is_full_torus() {
        return Err(Error::validation("hard-core partition polynomial needs a boundary ground state"));
    }
    let key = json!({"oracle": "spin", "system": system.to_string(), "region": region.to_json(), "boundary": boundary});
    cache::cached("spin", &key, || {
        let space = PaddedSpace::new(system, region, boundary);
        let hist = space.fold(
            DEFAULT_STATE_CAP,
            BTreeMap::new,
            |h: &mut BTreeMap<i64, i128>, s| *h.entry(space.energy(s)).or_insert(0) += 1,
            |mut a, b| {
                for (k, v) in b {
                    *a.entry(k).or_insert(0) += v;
                }
                a
            },
        )?;
        IntPoly::from_histogram(&hist)
    })
}

/// z^{|E(Λ)|} Z^φ_{q,Λ}(β) as a polynomial in z = e^{−β}: Σ_σ z^{#bichromatic edges}.
pub fn brute_z_potts(region: &Region, q: u8, boundary: Option<u8>) -> Result<IntPoly> {
    brute_z_spin(SpinSystem::potts(q)?, region, boundary)
}

/// z^{|Λ^φ|} Z^φ_Λ(λ) as a polynomial in z = 1/λ: Σ_I z^{|Λ^φ| − |I|}.
pub fn brute_z_hardcore_region(region: &Region, boundary: u8) -> Result<IntPoly> {
    brute_z_spin(SpinSystem::HardCore, region, Some(boundary))
}

/// A probability distribution with exact rational masses.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactDistribution {
    pub outcomes: Vec<(String, Rational)>,
}

impl ExactDistribution {
    /// Normalises non-negative weights; keys must be distinct.
    pub fn from_weights(weights: Vec<(String, Rational)>) -> Result<Self> {
        let total: Rational = weights.iter().map(|(_, w)| w.clone()).sum();
        if total.is_zero() || total.is_negative() {
            return Err(Error::validation("distribution weights must have a positive sum"));
        }
        let mut outcomes: Vec<(String, Rational)> =
            weights.into_iter().map(|(k, w)| (k, w / total.clone())).collect();
        outcomes.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(ExactDistribution { outcomes })
    }

    pub fn total(&self) -> Rational {
        self.outcomes.iter().map(|(_, p)| p.clone()).sum()
    }

    pub fn get(&self, key: &str) -> Rational {
        self.outcomes
            .binary_search_by(|(k, _)| k.as_str().cmp(key))
            .map(|i| self.outcomes[i].1.clone())
            .unwrap_or_else(|_| Rational::from(0))
    }
}

/// Key for a spin configuration: one digit per vertex in region order.
pub fn config_key(spins: &[u8]) -> String {
    spins.iter().map(|&s| char::from(b'0' + s)).collect()
}

/// Gibbs law ∝ z^{energy} over the padded configurations.
pub fn gibbs_distribution(
    system: SpinSystem,
    region: &Region,
    boundary: Option<u8>,
    z: &Rational,
) -> Result<ExactDistribution> {
    let space = PaddedSpace::new(system, region, boundary);
    let configs = space.configs(DEFAULT_STATE_CAP)?;
    let min_e = configs.iter().map(|s| space.energy(s)).min().unwrap_or(0);
    let weights = configs
        .iter()
        .map(|s| (config_key(s), pow(z, space.energy(s) - min_e)))
        .collect();
    ExactDistribution::from_weights(weights)
}

fn pow(z: &Rational, k: i64) -> Rational {
    (0..k).fold(Rational::from(1), |acc, _| acc * z.clone())
}

/// Key for a set of polymers: sorted ids joined by `|`, empty for ∅.
pub fn family_key(family: &[Polymer]) -> String {
    let mut ids: Vec<String> = family.iter().map(Polymer::id).collect();
    ids.sort();
    ids.join("|")
}

/// Every pairwise-compatible set of the model's polymers.
pub fn compatible_families<S: Coeff>(model: &PolymerModel<S>) -> Result<Vec<Vec<Polymer>>> {
    let polymers = model.list_polymers(model.host().len());
    check_cap(1u128 << polymers.len().min(127), DEFAULT_STATE_CAP, "polymer family enumeration")?;
    let mut out = Vec::new();
    let mut cur: Vec<usize> = Vec::new();
    fn rec<S: Coeff>(
        i: usize,
        polymers: &[Polymer],
        model: &PolymerModel<S>,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<Polymer>>,
    ) {
        if i == polymers.len() {
            out.push(cur.iter().map(|&j| polymers[j].clone()).collect());
            return;
        }
        rec(i + 1, polymers, model, cur, out);
        if cur.iter().all(|&j| model.compatible(&polymers[j], &polymers[i])) {
            cur.push(i);
            rec(i + 1, polymers, model, cur, out);
            cur.pop();
        }
    }
    rec(0, &polymers, model, &mut cur, &mut out);
    Ok(out)
}

/// μ_G(Γ) ∝ ∏ w(γ, z) at a rational point z.
pub fn polymer_measure(model: &PolymerModel<Rational>, z: &Rational) -> Result<ExactDistribution> {
    let families = compatible_families(model)?;
    let weights = families
        .iter()
        .map(|fam| {
            let w = fam.iter().fold(Rational::from(1), |acc, p| {
                acc * model.weight(p, model.degree_bound * p.size()).evaluate_exact(z)
            });
            (family_key(fam), w)
        })
        .collect();
    ExactDistribution::from_weights(weights)
}

/// Z(G, z) of a polymer model by summing over compatible families, exactly.
pub fn brute_polymer_z(model: &PolymerModel<Rational>) -> Result<TruncatedSeries<Rational>> {
    let order = model.degree();
    let mut z = TruncatedSeries::zero(order);
    for fam in compatible_families(model)? {
        let w = fam.iter().fold(TruncatedSeries::one(order), |acc, p| acc.mul_unchecked(&model.weight(p, order)));
        z = z.add(&w)?;
    }
    Ok(z)
}

/// Empirical total variation against an exact law, with a noise radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TvEstimate {
    pub tv: f64,
    /// σ = ½ Σ_i sqrt(p_i(1 − p_i)/N), the standard deviation scale of the
    /// empirical TV under the exact law.
    pub sigma: f64,
    pub samples: u64,
}

pub fn tv_distance(p: &ExactDistribution, counts: &HashMap<String, u64>) -> TvEstimate {
    let n: u64 = counts.values().sum();
    if n == 0 {
        return TvEstimate { tv: f64::NAN, sigma: f64::NAN, samples: 0 };
    }
    let nf = n as f64;
    let mut tv = 0.0;
    let mut sigma = 0.0;
    for (k, prob) in &p.outcomes {
        let pi = prob.to_f64();
        let qi = counts.get(k).copied().unwrap_or(0) as f64 / nf;
        tv += (pi - qi).abs();
        sigma += (pi * (1.0 - pi) / nf).sqrt();
    }
    for (k, &c) in counts {
        if p.get(k).is_zero() {
            tv += c as f64 / nf;
        }
    }
    TvEstimate { tv: tv / 2.0, sigma: sigma / 2.0, samples: n }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independence_polynomials() {
        assert_eq!(brute_z_hardcore(&Graph::complete(2)).unwrap(), IntPoly(vec![1, 2]));
        assert_eq!(brute_z_hardcore(&Graph::cycle(4)).unwrap(), IntPoly(vec![1, 4, 2]));
    }

    #[test]
    fn potts_pair_without_boundary() {
        let r = Region::free_box(&[(0, 0), (0, 1)]).unwrap();
        assert_eq!(brute_z_potts(&r, 2, None).unwrap(), IntPoly(vec![2, 2]));
    }

    #[test]
    fn padded_box_has_free_center() {
        let r = Region::cube(2, 7);
        let space = PaddedSpace::new(SpinSystem::potts(2).unwrap(), &r, Some(0));
        assert_eq!(space.free.len(), 9);
        let z = brute_z_potts(&r, 2, Some(0)).unwrap();
        assert_eq!(z.0.iter().sum::<i128>(), 512);
        assert_eq!(z.0[0], 1);
        // a single flipped centre site has four bichromatic edges
        assert_eq!(z.0[4], 9);
    }

    #[test]
    fn ising_table_matches_definition() {
        let t = brute_z_ising(&Graph::path(2)).unwrap();
        // ∅, {0}, {1}, {0,1}
        assert_eq!(t.counts[0][0], 1);
        assert_eq!(t.counts[1][1], 2);
        assert_eq!(t.counts[2][0], 1);
        let p = t.polynomial(1.0);
        assert!((p[2] - 2.0 * (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn tv_examples() {
        let p = ExactDistribution::from_weights(vec![("a".into(), Rational::from(1)), ("b".into(), Rational::from(1))])
            .unwrap();
        let counts: HashMap<String, u64> = [("a".to_string(), 600), ("b".to_string(), 400)].into();
        let tv = tv_distance(&p, &counts);
        assert!((tv.tv - 0.1).abs() < 1e-12);
        assert!(tv.sigma > 0.0);
        let same: HashMap<String, u64> = [("a".to_string(), 1), ("b".to_string(), 1)].into();
        assert_eq!(tv_distance(&p, &same).tv, 0.0);
        let disjoint: HashMap<String, u64> = [("c".to_string(), 5)].into();
        assert_eq!(tv_distance(&p, &disjoint).tv, 1.0);
    }

    #[test]
    fn polymer_measure_on_an_edge() {
        let model = PolymerModel::<Rational>::hardcore(Graph::complete(2), None).unwrap();
        let mu = polymer_measure(&model, &Rational::from(1)).unwrap();
        assert_eq!(mu.outcomes.len(), 3);
        assert!(mu.outcomes.iter().all(|(_, p)| *p == Rational::new(1, 3)));
        assert_eq!(mu.total(), Rational::from(1));
    }
}
