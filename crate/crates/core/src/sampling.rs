//! Self-reducible samplers for polymer and contour models.
//!
//! Vertices are processed in a fixed order. At step t the sampler either
//! adds one polymer (or outer contour) whose support (or cov) contains the
//! t-th vertex and avoids every earlier one, or adds nothing; the choice is
//! drawn with probability proportional to the weight times the partition
//! function of what remains compatible. The exact sampler uses brute-force
//! partition functions; the efficient ones use truncated cluster expansions.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::cluster::{truncation_order, PolymerSystem, DIRECT_CAP};
use crate::contour::{contours_of_config, Contour, ContourEngine, ContourModel, OuterModel};
use crate::error::{Error, Result};
use crate::lattice::{Point, Region};
use crate::polymer::{Polymer, PolymerModel};
use crate::scalar::{Coeff, Rational};

/// Random stream for one step, derived from the run seed and a path of
/// indices (draw, call, step). Adding diagnostics never shifts other draws.
pub fn substream(seed: u64, path: &[u64]) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(b"pirogov/substream");
    h.update(seed.to_le_bytes());
    for p in path {
        h.update(p.to_le_bytes());
    }
    let digest: [u8; 32] = h.finalize().into();
    ChaCha20Rng::from_seed(digest)
}

/// Index drawn with probability proportional to `w`.
pub(crate) fn categorical(w: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &x) in w.iter().enumerate() {
        if u < x {
            return i;
        }
        u -= x;
    }
    w.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

/// Per-step TV budget ε′ = ε²/(9n²) for n steps with total budget ε.
pub fn step_budget(epsilon: f64, steps: usize) -> f64 {
    epsilon * epsilon / (9.0 * (steps.max(1) as f64).powi(2))
}

/// Largest polymer size kept: ⌈log(2C|G|/ε) / (ρ(1 − |z|/δ))⌉.
pub fn size_cutoff(degree: usize, rho: f64, z: f64, delta: f64, epsilon: f64) -> usize {
    let v = (2.0 * degree.max(1) as f64 / epsilon).ln().max(0.0) / (rho * (1.0 - z.abs() / delta));
    (v.ceil() as usize).max(1)
}

fn check_activity(z: f64, delta: f64, epsilon: f64) -> Result<()> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::validation(format!("sampling needs z > 0, got {z}")));
    }
    if z >= delta {
        return Err(Error::Regime { z, delta });
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::validation(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    Ok(())
}

fn bit(bits: &[u64], i: usize) -> bool {
    bits[i / 64] >> (i % 64) & 1 == 1
}

fn set_bit(bits: &mut [u64], i: usize) {
    bits[i / 64] |= 1 << (i % 64);
}

fn disjoint(a: &[u64], b: &[u64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x & y == 0)
}

/// Host-vertex bitsets of a polymer's support and its closed neighbourhood.
fn polymer_masks<S: Coeff>(model: &PolymerModel<S>, polymers: &[Polymer]) -> (Vec<Vec<u64>>, Vec<Vec<u64>>) {
    let words = model.host().len().div_ceil(64).max(1);
    let mut support = Vec::with_capacity(polymers.len());
    let mut closed = Vec::with_capacity(polymers.len());
    for p in polymers {
        let mut s = vec![0u64; words];
        let mut c = vec![0u64; words];
        for &v in &p.support {
            set_bit(&mut s, v);
            set_bit(&mut c, v);
            for &u in model.host().neighbors(v) {
                set_bit(&mut c, u);
            }
        }
        support.push(s);
        closed.push(c);
    }
    (support, closed)
}

/// Oracle-grade sampler with exact conditional probabilities from
/// brute-force partition functions of the remaining families.
pub struct ExactPolymerSampler {
    polymers: Vec<Polymer>,
    weights: Vec<Rational>,
    /// conflicts[p]: polymers incompatible with p, including p
    conflicts: Vec<Vec<u64>>,
    /// smallest support vertex of each polymer
    first: Vec<usize>,
    n: usize,
    memo: Mutex<HashMap<Vec<u64>, Rational>>,
}

/// Largest polymer list the exact sampler accepts.
pub const EXACT_POLYMER_CAP: usize = 4096;

impl ExactPolymerSampler {
    pub fn new(model: &PolymerModel<Rational>, z: &Rational) -> Result<Self> {
        if z.is_negative() {
            return Err(Error::validation("exact sampling needs z ≥ 0"));
        }
        let n = model.host().len();
        let polymers = model.list_polymers(n);
        if polymers.len() > EXACT_POLYMER_CAP {
            return Err(Error::CapExceeded {
                what: "polymers for exact sampling".into(),
                needed: polymers.len() as u128,
                cap: EXACT_POLYMER_CAP as u128,
            });
        }
        let weights: Vec<Rational> = polymers
            .iter()
            .map(|p| model.weight(p, model.degree_bound * p.size()).evaluate_exact(z))
            .collect();
        if weights.iter().any(Rational::is_negative) {
            return Err(Error::validation("exact sampling needs non-negative weights"));
        }
        let words = polymers.len().div_ceil(64).max(1);
        let conflicts = polymers
            .iter()
            .map(|a| {
                let mut row = vec![0u64; words];
                for (j, b) in polymers.iter().enumerate() {
                    if !model.compatible(a, b) {
                        set_bit(&mut row, j);
                    }
                }
                row
            })
            .collect();
        let first = polymers.iter().map(|p| p.support[0]).collect();
        Ok(ExactPolymerSampler { polymers, weights, conflicts, first, n, memo: Mutex::new(HashMap::new()) })
    }

    pub fn polymers(&self) -> &[Polymer] {
        &self.polymers
    }

    /// C_{Γ,S} with S = {0, …, t−1}: polymers avoiding S and compatible with Γ.
    fn family(&self, gamma: &[usize], t: usize) -> Vec<u64> {
        let mut mask = vec![0u64; self.conflicts.first().map_or(1, Vec::len)];
        for (p, &f) in self.first.iter().enumerate() {
            if f >= t && gamma.iter().all(|&g| !bit(&self.conflicts[g], p)) {
                set_bit(&mut mask, p);
            }
        }
        mask
    }

    /// Z of the family `mask`, by removing its least polymer.
    fn family_z(&self, mask: &[u64]) -> Rational {
        let Some(p) = (0..self.polymers.len()).find(|&p| bit(mask, p)) else {
            return Rational::from(1);
        };
        if let Some(v) = self.memo.lock().expect("memo lock").get(mask) {
            return v.clone();
        }
        let mut without = mask.to_vec();
        without[p / 64] &= !(1 << (p % 64));
        let mut apart = without.clone();
        for (a, c) in apart.iter_mut().zip(&self.conflicts[p]) {
            *a &= !c;
        }
        let v = self.family_z(&without) + self.weights[p].clone() * self.family_z(&apart);
        self.memo.lock().expect("memo lock").insert(mask.to_vec(), v.clone());
        v
    }

    /// The exact law μ_{Γ,S,x} at step t: (choice, probability), with `None`
    /// for the empty polymer first.
    pub fn step_law(&self, gamma: &[usize], t: usize) -> Vec<(Option<usize>, Rational)> {
        let total = self.family_z(&self.family(gamma, t));
        let mut out = vec![(None, self.family_z(&self.family(gamma, t + 1)) / total.clone())];
        let here = self.family(gamma, t);
        for p in 0..self.polymers.len() {
            if bit(&here, p) && self.first[p] == t {
                let mut g = gamma.to_vec();
                g.push(p);
                let w = self.weights[p].clone() * self.family_z(&self.family(&g, t + 1));
                out.push((Some(p), w / total.clone()));
            }
        }
        out
    }

    pub fn sample(&self, seed: u64, draw: u64) -> Vec<Polymer> {
        let mut gamma = Vec::new();
        for t in 0..self.n {
            let law = self.step_law(&gamma, t);
            if law.len() == 1 {
                continue;
            }
            let w: Vec<f64> = law.iter().map(|(_, p)| p.to_f64()).collect();
            let k = categorical(&w, &mut substream(seed, &[draw, 0, t as u64]));
            if let Some(p) = law[k].0 {
                gamma.push(p);
            }
        }
        self.collect(&gamma)
    }

    /// Product of the step probabilities along the unique run producing
    /// `family`; zero if no run produces it.
    pub fn path_probability(&self, family: &[Polymer]) -> Rational {
        let mut idx = Vec::new();
        for f in family {
            match self.polymers.iter().position(|p| p == f) {
                Some(i) => idx.push(i),
                None => return Rational::from(0),
            }
        }
        let mut gamma = Vec::new();
        let mut prob = Rational::from(1);
        for t in 0..self.n {
            let want = idx.iter().copied().find(|&i| self.first[i] == t);
            let law = self.step_law(&gamma, t);
            match law.iter().find(|(c, _)| *c == want) {
                Some((_, p)) => prob = prob * p.clone(),
                None => return Rational::from(0),
            }
            if let Some(p) = want {
                gamma.push(p);
            }
        }
        prob
    }

    fn collect(&self, gamma: &[usize]) -> Vec<Polymer> {
        let mut out: Vec<Polymer> = gamma.iter().map(|&i| self.polymers[i].clone()).collect();
        out.sort_by(|a, b| (a.size(), &a.support, &a.spins).cmp(&(b.size(), &b.support, &b.spins)));
        out
    }
}

/// One exact draw from μ_G.
pub fn sample_polymers_exact(model: &PolymerModel<Rational>, z: &Rational, seed: u64) -> Result<Vec<Polymer>> {
    Ok(ExactPolymerSampler::new(model, z)?.sample(seed, 0))
}

/// The efficient polymer sampler: polymers of size ≤ m, and each step's
/// scores from ε′-relative truncated expansions of the remaining families.
pub struct PolymerSampler<S: Coeff> {
    z: f64,
    pub epsilon: f64,
    /// Size cutoff m.
    pub max_size: usize,
    /// Per-step relative accuracy ε′.
    pub step_epsilon: f64,
    /// Truncation order of the expansions.
    pub order: usize,
    polymers: Vec<Polymer>,
    weights: Vec<f64>,
    support: Vec<Vec<u64>>,
    closed: Vec<Vec<u64>>,
    by_vertex: Vec<Vec<usize>>,
    system: PolymerSystem<S>,
    n: usize,
    cache: Mutex<HashMap<Vec<u64>, f64>>,
}

impl<S: Coeff> PolymerSampler<S> {
    pub fn new(model: &PolymerModel<S>, z: f64, epsilon: f64) -> Result<Self> {
        check_activity(z, model.delta, epsilon)?;
        let n = model.host().len();
        let max_size = size_cutoff(model.degree(), model.rho, z, model.delta, epsilon).min(n.max(1));
        let step_epsilon = step_budget(epsilon, n);
        let order = truncation_order(model.degree(), z, model.delta, step_epsilon)?;
        let polymers = model.list_polymers(max_size);
        let (support, closed) = polymer_masks(model, &polymers);
        let series: Vec<_> = polymers.iter().map(|p| model.weight(p, order)).collect();
        let system = PolymerSystem::new(order, &series, |a, b| !disjoint(&closed[a], &support[b]))?;
        let weights = polymers.iter().map(|p| model.weight_value(p, z)).collect();
        let mut by_vertex = vec![Vec::new(); n];
        for (i, p) in polymers.iter().enumerate() {
            for &v in &p.support {
                by_vertex[v].push(i);
            }
        }
        Ok(PolymerSampler {
            z,
            epsilon,
            max_size,
            step_epsilon,
            order,
            polymers,
            weights,
            support,
            closed,
            by_vertex,
            system,
            n,
            cache: Mutex::new(HashMap::new()),
        })
    }

    /// T_m of the family given by a polymer-index mask, at z.
    fn log_family(&self, mask: &[u64]) -> Result<f64> {
        if let Some(v) = self.cache.lock().expect("cache lock").get(mask) {
            return Ok(*v);
        }
        let v = self.system.restrict(|i| bit(mask, i)).log_z_adaptive(DIRECT_CAP)?.evaluate_real(self.z);
        self.cache.lock().expect("cache lock").insert(mask.to_vec(), v);
        Ok(v)
    }

    fn family(&self, taken: &[u64], near: &[u64]) -> Vec<u64> {
        let mut mask = vec![0u64; self.polymers.len().div_ceil(64).max(1)];
        for (i, s) in self.support.iter().enumerate() {
            if disjoint(s, taken) && disjoint(s, near) {
                set_bit(&mut mask, i);
            }
        }
        mask
    }

    pub fn sample(&self, seed: u64, draw: u64) -> Result<Vec<Polymer>> {
        let words = self.n.div_ceil(64).max(1);
        let mut taken = vec![0u64; words];
        let mut near = vec![0u64; words];
        let mut gamma: Vec<usize> = Vec::new();
        for x in 0..self.n {
            let cands: Vec<usize> = self.by_vertex[x]
                .iter()
                .copied()
                .filter(|&i| disjoint(&self.support[i], &taken) && disjoint(&self.support[i], &near))
                .collect();
            set_bit(&mut taken, x);
            if cands.is_empty() {
                continue;
            }
            let mut logs = vec![self.log_family(&self.family(&taken, &near))?];
            for &i in &cands {
                assert_eq!(self.polymers[i].support[0], x, "polymer proposed after its first vertex");
                let mut near_i = near.clone();
                for (a, b) in near_i.iter_mut().zip(&self.closed[i]) {
                    *a |= b;
                }
                logs.push(self.weights[i].ln() + self.log_family(&self.family(&taken, &near_i))?);
            }
            let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
            let k = categorical(&w, &mut substream(seed, &[draw, 0, x as u64]));
            if k > 0 {
                let i = cands[k - 1];
                gamma.push(i);
                for (a, b) in near.iter_mut().zip(&self.closed[i]) {
                    *a |= b;
                }
            }
        }
        let mut out: Vec<Polymer> = gamma.iter().map(|&i| self.polymers[i].clone()).collect();
        out.sort_by(|a, b| (a.size(), &a.support, &a.spins).cmp(&(b.size(), &b.support, &b.spins)));
        Ok(out)
    }
}

/// One ε-approximate draw from μ_G.
pub fn sample_polymers<S: Coeff>(model: &PolymerModel<S>, z: f64, epsilon: f64, seed: u64) -> Result<Vec<Polymer>> {
    PolymerSampler::new(model, z, epsilon)?.sample(seed, 0)
}

/// Sampling tables of one memoised outer-contour model (stored coordinates).
pub(crate) struct RegionTable {
    pub(crate) outer: Arc<OuterModel>,
    /// log w^ext(γ, z) per contour; −∞ when left out by the size cutoff.
    log_weight: Vec<f64>,
    /// cov and its d∞ dilation as bitsets over region vertices
    cov: Vec<Vec<u64>>,
    near: Vec<Vec<u64>>,
    /// contours whose cov has the vertex as its first point
    by_vertex: Vec<Vec<usize>>,
    cache: Mutex<HashMap<Vec<u64>, f64>>,
}

/// Contours drawn by one call of the outer-contour sampler.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Level {
    pub phi: u8,
    pub contours: Vec<Contour>,
}

/// A spin configuration on Λ (in region vertex order) with the outer
/// contours drawn at every level of the recursion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpinSample {
    pub spins: Vec<u8>,
    pub provenance: Vec<Level>,
}

impl SpinSample {
    /// Every contour of every level, canonically ordered.
    pub fn contours(&self) -> Vec<Contour> {
        let mut all: Vec<Contour> = self.provenance.iter().flat_map(|l| l.contours.iter().cloned()).collect();
        all.sort_by(|a, b| a.canonical_cmp(b));
        all
    }

    /// Whether re-extracting the contours of the configuration reproduces the provenance.
    pub fn consistent(&self, model: &ContourModel, region: &Region, phi: u8) -> Result<bool> {
        Ok(contours_of_config(model, region, phi, &self.spins)? == self.contours())
    }

    /// Short hash of the provenance, for output lines.
    pub fn provenance_digest(&self, model: &ContourModel) -> String {
        let levels: Vec<Value> = self
            .provenance
            .iter()
            .map(|l| json!({"phi": l.phi, "contours": l.contours.iter().map(|c| c.to_json(model.system)).collect::<Vec<_>>()}))
            .collect();
        crate::cache::content_hash(&json!(levels))[..16].to_string()
    }
}

/// Outer-contour and spin sampler for one volume, boundary and activity.
///
/// Every recursive call gets TV budget ε/|Λ|; the shared expansion order is
/// set by the strictest per-step budget, ε′ = (ε/|Λ|)²/(9|Λ|²).
pub struct ContourSampler {
    model: ContourModel,
    region: Region,
    phi: u8,
    z: f64,
    pub epsilon: f64,
    pub order: usize,
    /// Support-size cutoff for the top-level call.
    pub max_size: usize,
    engine: ContourEngine,
    tables: Mutex<HashMap<(Vec<Point>, u8), Arc<RegionTable>>>,
}

impl ContourSampler {
    pub fn new(model: &ContourModel, region: &Region, phi: u8, z: f64, epsilon: f64) -> Result<Self> {
        let s = Self::unchecked(model, region, phi, z, epsilon)?;
        s.check_volume()?;
        Ok(s)
    }

    /// Budgets from `region` (free or a full torus) without the volume check.
    pub(crate) fn unchecked(model: &ContourModel, region: &Region, phi: u8, z: f64, epsilon: f64) -> Result<Self> {
        check_activity(z, model.delta, epsilon)?;
        if !model.ground_states().contains(&phi) {
            return Err(Error::validation(format!("{phi} is not a ground state of {}", model.system)));
        }
        let n = region.len();
        let degree = model.degree(region);
        let call = epsilon / n as f64;
        let order = truncation_order(degree, z, model.delta, step_budget(call, n))?;
        let rho = 1.0 / (2.0 * 3f64.powi(model.dim as i32));
        let max_size = size_cutoff(degree, rho, z, model.delta, epsilon);
        Ok(ContourSampler {
            model: *model,
            region: region.clone(),
            phi,
            z,
            epsilon,
            order,
            max_size,
            engine: ContourEngine::new(*model, order),
            tables: Mutex::new(HashMap::new()),
        })
    }

    fn check_volume(&self) -> Result<()> {
        if self.region.geometry() != crate::lattice::Geometry::Free
            || self.region.is_empty()
            || !self.region.is_c_connected()
        {
            return Err(Error::validation("sampling volume must be a non-empty free region with connected complement"));
        }
        Ok(())
    }

    pub fn engine(&self) -> &ContourEngine {
        &self.engine
    }

    fn table(&self, cells: &[Point], phi: u8) -> Result<(Arc<RegionTable>, Point)> {
        let (outer, shift) = self.engine.solve_shape(cells, phi)?;
        let key = (outer.region.vertices().to_vec(), phi);
        if let Some(t) = self.tables.lock().expect("table lock").get(&key) {
            return Ok((t.clone(), shift));
        }
        let table = Arc::new(self.build_table(outer)?);
        let mut tables = self.tables.lock().expect("table lock");
        Ok((tables.entry(key).or_insert(table).clone(), shift))
    }

    /// Sampling tables of an outer model. Contour points are wrapped into
    /// the model's region, so a torus model with lifted contours works too.
    pub(crate) fn build_table(&self, outer: Arc<OuterModel>) -> Result<RegionTable> {
        let region = &outer.region;
        let words = region.len().div_ceil(64).max(1);
        let offsets = crate::lattice::king_offsets(self.model.dim);
        let index = |p: &Point| region.index_of(&region.wrap(p));
        let cutoff = size_cutoff(
            self.model.degree(region),
            1.0 / (2.0 * 3f64.powi(self.model.dim as i32)),
            self.z,
            self.model.delta,
            self.epsilon / self.region.len() as f64,
        );
        let mut log_weight = Vec::new();
        let mut cov = Vec::new();
        let mut near = Vec::new();
        let mut by_vertex = vec![Vec::new(); region.len()];
        for (i, c) in outer.contours.iter().enumerate() {
            let mut lw = if c.size() <= cutoff { c.energy as f64 * self.z.ln() } else { f64::NEG_INFINITY };
            if lw.is_finite() {
                for a in &c.interiors {
                    let (sub, _) = self.engine.solve_shape(&a.cells, a.label)?;
                    lw += sub.log_z.evaluate_real(self.z);
                }
            }
            log_weight.push(lw);
            let mut cb = vec![0u64; words];
            let mut nb = vec![0u64; words];
            let mut first = usize::MAX;
            for p in &c.cov() {
                let i = index(p).ok_or_else(|| Error::Internal("cov outside the region".into()))?;
                first = first.min(i);
                set_bit(&mut cb, i);
                for d in &offsets {
                    if let Some(j) = index(&p.offset(d)) {
                        set_bit(&mut nb, j);
                    }
                }
            }
            by_vertex[first].push(i);
            cov.push(cb);
            near.push(nb);
        }
        Ok(RegionTable { outer, log_weight, cov, near, by_vertex, cache: Mutex::new(HashMap::new()) })
    }

    fn log_family(&self, t: &RegionTable, mask: &[u64]) -> Result<f64> {
        if let Some(v) = t.cache.lock().expect("cache lock").get(mask) {
            return Ok(*v);
        }
        let v = t.outer.system.restrict(|i| bit(mask, i)).log_z_adaptive(DIRECT_CAP)?.evaluate_real(self.z);
        t.cache.lock().expect("cache lock").insert(mask.to_vec(), v);
        Ok(v)
    }

    /// Contours mutually external to the chosen ones, avoiding processed vertices.
    fn family(&self, t: &RegionTable, taken: &[u64], near: &[u64]) -> Vec<u64> {
        let mut mask = vec![0u64; t.cov.len().div_ceil(64).max(1)];
        for (i, c) in t.cov.iter().enumerate() {
            if t.log_weight[i].is_finite() && disjoint(c, taken) && disjoint(c, near) {
                set_bit(&mut mask, i);
            }
        }
        mask
    }

    /// Outer contours of one call, as indices into the table's contours.
    pub(crate) fn draw_outer(&self, t: &RegionTable, seed: u64, path: &[u64]) -> Result<Vec<usize>> {
        let n = t.outer.region.len();
        let words = n.div_ceil(64).max(1);
        let mut taken = vec![0u64; words];
        let mut near = vec![0u64; words];
        let mut chosen = Vec::new();
        for x in 0..n {
            let cands: Vec<usize> = t.by_vertex[x]
                .iter()
                .copied()
                .filter(|&i| t.log_weight[i].is_finite() && disjoint(&t.cov[i], &taken) && disjoint(&t.cov[i], &near))
                .collect();
            set_bit(&mut taken, x);
            if cands.is_empty() {
                continue;
            }
            let mut logs = vec![self.log_family(t, &self.family(t, &taken, &near))?];
            for &i in &cands {
                let mut near_i = near.clone();
                for (a, b) in near_i.iter_mut().zip(&t.near[i]) {
                    *a |= b;
                }
                logs.push(t.log_weight[i] + self.log_family(t, &self.family(t, &taken, &near_i))?);
            }
            let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
            let mut p = path.to_vec();
            p.push(x as u64);
            let k = categorical(&w, &mut substream(seed, &p));
            if k > 0 {
                let i = cands[k - 1];
                chosen.push(i);
                for (a, b) in near.iter_mut().zip(&t.near[i]) {
                    *a |= b;
                }
            }
        }
        Ok(chosen)
    }

    /// An outer contour set of type φ in Λ, ε-close to μ^φ_Λ.
    pub fn sample_contours(&self, seed: u64, draw: u64) -> Result<Vec<Contour>> {
        let (t, shift) = self.table(self.region.vertices(), self.phi)?;
        let mut out: Vec<Contour> =
            self.draw_outer(&t, seed, &[draw, 0])?.into_iter().map(|i| t.outer.contours[i].translate(&shift)).collect();
        out.sort_by(|a, b| a.canonical_cmp(b));
        Ok(out)
    }

    /// A configuration in Ω^φ_Λ: outer contours, then recursively the
    /// contours of every labelled interior.
    pub fn sample_spins(&self, seed: u64, draw: u64) -> Result<SpinSample> {
        let mut spins = vec![u8::MAX; self.region.len()];
        let mut provenance = Vec::new();
        let mut calls = 0u64;
        let region = &self.region;
        let mut set = |p: &Point, s: u8| spins[region.index_of(p).expect("sampled point inside the volume")] = s;
        self.fill(self.region.vertices(), self.phi, seed, draw, &mut calls, &mut set, &mut provenance)?;
        if spins.contains(&u8::MAX) {
            return Err(Error::Internal("spin reconstruction left a vertex unset".into()));
        }
        Ok(SpinSample { spins, provenance })
    }

    /// Ground spins on `cells`, then outer contours, then every interior.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn fill(
        &self,
        cells: &[Point],
        phi: u8,
        seed: u64,
        draw: u64,
        calls: &mut u64,
        set: &mut dyn FnMut(&Point, u8),
        provenance: &mut Vec<Level>,
    ) -> Result<()> {
        let call = *calls;
        *calls += 1;
        let (t, shift) = self.table(cells, phi)?;
        let chosen: Vec<Contour> = self
            .draw_outer(&t, seed, &[draw, call + 1])?
            .into_iter()
            .map(|i| t.outer.contours[i].translate(&shift))
            .collect();
        for p in cells {
            set(p, self.model.system.ground_spin(phi, p));
        }
        self.descend(chosen, phi, seed, draw, calls, set, provenance)
    }

    /// Writes the supports of `chosen`, records the level and recurses.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn descend(
        &self,
        chosen: Vec<Contour>,
        phi: u8,
        seed: u64,
        draw: u64,
        calls: &mut u64,
        set: &mut dyn FnMut(&Point, u8),
        provenance: &mut Vec<Level>,
    ) -> Result<()> {
        for c in &chosen {
            for (p, &s) in c.support.iter().zip(&c.spins) {
                set(p, s);
            }
        }
        let mut sorted = chosen.clone();
        sorted.sort_by(|a, b| a.canonical_cmp(b));
        provenance.push(Level { phi, contours: sorted });
        for c in &chosen {
            for a in &c.interiors {
                self.fill(&a.cells, a.label, seed, draw, calls, set, provenance)?;
            }
        }
        Ok(())
    }
}

/// One outer contour set, ε-close to μ^φ_Λ.
pub fn sample_contours(
    model: &ContourModel,
    region: &Region,
    phi: u8,
    z: f64,
    epsilon: f64,
    seed: u64,
) -> Result<Vec<Contour>> {
    ContourSampler::new(model, region, phi, z, epsilon)?.sample_contours(seed, 0)
}

/// One spin configuration, ε-close to the Gibbs law on Ω^φ_Λ; `param` is β
/// (Potts) or λ (hard-core).
pub fn sample_spins(
    model: &ContourModel,
    region: &Region,
    phi: u8,
    param: f64,
    epsilon: f64,
    seed: u64,
) -> Result<SpinSample> {
    let z = model.activity(param)?;
    ContourSampler::new(model, region, phi, z, epsilon)?.sample_spins(seed, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::oracle::{config_key, gibbs_distribution, polymer_measure, tv_distance};
    use crate::polymer::hardcore_polymer_model;

    #[test]
    fn single_vertex_exact_law() {
        let m = hardcore_polymer_model(Graph::empty(1), None).unwrap();
        let s = ExactPolymerSampler::new(&m, &Rational::from(1)).unwrap();
        let law = s.step_law(&[], 0);
        assert_eq!(law.len(), 2);
        assert_eq!(law[0].1, Rational::new(1, 2));
        let zero = ExactPolymerSampler::new(&m, &Rational::from(0)).unwrap();
        assert!((0..20).all(|k| zero.sample(7, k).is_empty()));
    }

    #[test]
    fn path_products_equal_measure() {
        for g in [Graph::path(2), Graph::cycle(4), Graph::complete(3)] {
            let m = hardcore_polymer_model(g, None).unwrap();
            let z = Rational::new(2, 7);
            let s = ExactPolymerSampler::new(&m, &z).unwrap();
            let mu = polymer_measure(&m, &z).unwrap();
            let mut total = Rational::from(0);
            for fam in crate::oracle::compatible_families(&m).unwrap() {
                let p = s.path_probability(&fam);
                assert_eq!(p, mu.get(&crate::oracle::family_key(&fam)));
                total = total + p;
            }
            assert_eq!(total, Rational::from(1));
        }
        let edge = hardcore_polymer_model(Graph::path(2), None).unwrap();
        let s = ExactPolymerSampler::new(&edge, &Rational::from(1)).unwrap();
        assert_eq!(s.path_probability(&[]), Rational::new(1, 3));
    }

    #[test]
    fn approximate_sampler_replays() {
        let m = hardcore_polymer_model(Graph::cycle(5), None).unwrap();
        let s = PolymerSampler::new(&m, 0.05, 0.1).unwrap();
        assert_eq!(s.sample(11, 3).unwrap(), s.sample(11, 3).unwrap());
        assert!(PolymerSampler::new(&m, 0.5, 0.1).is_err());
    }

    #[test]
    fn single_contour_region() {
        // 5×5 Potts box: only the centre is free
        let model = ContourModel::potts(2, 2).unwrap().with_delta(1.0).unwrap();
        let r = Region::cube(2, 5);
        let z = 0.5;
        let s = ContourSampler::new(&model, &r, 0, z, 0.05).unwrap();
        let draws = 20_000u64;
        let hits = (0..draws).filter(|&k| !s.sample_contours(5, k).unwrap().is_empty()).count() as f64;
        let p = 1.0 / 17.0;
        let sigma = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((hits / draws as f64 - p).abs() < 4.0 * sigma);
    }

    #[test]
    fn spin_samples_reextract() {
        let model = ContourModel::potts(2, 2).unwrap();
        let r = Region::cube(2, 6);
        let s = ContourSampler::new(&model, &r, 1, 0.02, 0.05).unwrap();
        let exact = gibbs_distribution(model.system, &r, Some(1), &Rational::new(1, 50)).unwrap();
        let mut counts = HashMap::new();
        for k in 0..2000 {
            let x = s.sample_spins(1, k).unwrap();
            assert!(x.consistent(&model, &r, 1).unwrap());
            *counts.entry(config_key(&x.spins)).or_insert(0u64) += 1;
        }
        let tv = tv_distance(&exact, &counts);
        assert!(tv.tv <= 0.05 + 4.0 * tv.sigma, "{tv:?}");
    }

    #[test]
    fn hardcore_huge_fugacity_is_ground_state() {
        let model = ContourModel::hardcore(2).unwrap();
        let r = Region::cube(2, 6);
        let x = sample_spins(&model, &r, 0, 1e12, 0.1, 3).unwrap();
        let ground: Vec<u8> = r.vertices().iter().map(|p| model.system.ground_spin(0, p)).collect();
        assert_eq!(x.spins, ground);
    }
}
