//! Contour models on regions of Z^d for the low-temperature Potts model and
//! the high-fugacity hard-core gas.
//!
//! A vertex is correct when its closed d∞ neighbourhood agrees with a single
//! ground state; contours are the d∞ components of the incorrect vertices
//! together with their spins. Each complement component of a support gets
//! the ground state its collar agrees with as a label. Partition functions
//! are built from outer contours, whose weights carry the partition
//! functions of their interiors, computed recursively and memoised.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::cluster::{truncation_order, Approximation, PolymerSystem, DIRECT_CAP};
use crate::error::{Error, Result};
use crate::lattice::{Geometry, Point, Region, Window, MAX_DIM};
use crate::oracle::{PaddedSpace, PADDING};
use crate::scalar::Rational;
use crate::series::ExactSeries;
use crate::spin::SpinSystem;

/// Largest number of padded configurations the scanning lister will walk.
pub const SCAN_CAP: u128 = 1 << 22;

/// Largest number of candidate supports the support lister will visit.
pub const SUPPORT_CAP: u64 = 20_000_000;

/// Zero-free radius from the truncated Kotecký–Preiss condition on the
/// single-flip contours: each is a 3^d block of energy 2d, and those not
/// mutually external with one sit at 7^d positions with q − 1 colours.
pub fn potts_default_delta(q: u8, dim: usize) -> f64 {
    let d = dim as i32;
    let block = 3f64.powi(d);
    (block / (7f64.powi(d) * (q as f64 - 1.0) * block.exp())).powf(1.0 / (2.0 * dim as f64))
}

/// Same certificate for the hard-core gas: a single vacancy has energy 1 and
/// the conflicting positions are the same-parity points of a 7^d box.
pub fn hardcore_default_delta(dim: usize) -> f64 {
    let d = dim as i32;
    let block = 3f64.powi(d);
    let positions = (7f64.powi(d) + 1.0) / 2.0;
    block / (positions * block.exp())
}

/// A contour model: the spin system, the lattice dimension and the radius
/// inside which the contour partition functions are assumed zero-free.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContourModel {
    pub system: SpinSystem,
    pub dim: usize,
    pub delta: f64,
}

impl ContourModel {
    pub fn potts(q: u8, dim: usize) -> Result<Self> {
        let system = SpinSystem::potts(q)?;
        check_dim(dim)?;
        Ok(ContourModel { system, dim, delta: potts_default_delta(q, dim) })
    }

    pub fn hardcore(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(ContourModel { system: SpinSystem::HardCore, dim, delta: hardcore_default_delta(dim) })
    }

    pub fn with_delta(mut self, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::validation(format!("delta must be positive and finite, got {delta}")));
        }
        self.delta = delta;
        Ok(self)
    }

    pub fn ground_states(&self) -> Vec<u8> {
        self.system.ground_states()
    }

    /// Upper surface constant C with ‖γ‖ ≤ C|γ̄|.
    pub fn surface_constant(&self) -> usize {
        match self.system {
            SpinSystem::Potts { .. } => 2 * self.dim,
            SpinSystem::HardCore => 1,
        }
    }

    /// Lower Peierls bound ⌈|γ̄| / (2·3^d)⌉ on the energy of a contour.
    pub fn peierls_lower(&self, support_len: usize) -> usize {
        support_len.div_ceil(2 * 3usize.pow(self.dim as u32))
    }

    /// Largest support that can carry energy at most `m`.
    pub fn max_support_for_energy(&self, m: usize) -> usize {
        2 * 3usize.pow(self.dim as u32) * m
    }

    /// N = C|Λ|, the degree bound used to pick the truncation order.
    pub fn degree(&self, region: &Region) -> usize {
        self.surface_constant() * region.len()
    }

    /// Contour activity z for the physical parameter: e^{−β} (Potts) or 1/λ.
    pub fn activity(&self, param: f64) -> Result<f64> {
        if !(param > 0.0 && param.is_finite()) {
            return Err(Error::validation(format!("parameter must be positive and finite, got {param}")));
        }
        Ok(match self.system {
            SpinSystem::Potts { .. } => (-param).exp(),
            SpinSystem::HardCore => 1.0 / param,
        })
    }

    /// log of the factor turning Z^φ(Λ, z) into the spin partition function:
    /// β|E(Λ)| for Potts, |Λ^φ| log λ for hard-core.
    pub fn log_prefactor(&self, region: &Region, phi: u8, param: f64) -> f64 {
        match self.system {
            SpinSystem::Potts { .. } => param * region.edges().len() as f64,
            SpinSystem::HardCore => ground_occupied(self.system, region, phi) as f64 * param.ln(),
        }
    }

    /// Exponent e with Z^φ(Λ, z) = z^e · (spin partition function): |E(Λ)| or |Λ^φ|.
    pub fn prefactor_exponent(&self, region: &Region, phi: u8) -> usize {
        match self.system {
            SpinSystem::Potts { .. } => region.edges().len(),
            SpinSystem::HardCore => ground_occupied(self.system, region, phi),
        }
    }

    pub(crate) fn check_ground(&self, phi: u8) -> Result<()> {
        if !self.ground_states().contains(&phi) {
            return Err(Error::validation(format!("{phi} is not a ground state of {}", self.system)));
        }
        Ok(())
    }

    fn check_volume(&self, region: &Region) -> Result<()> {
        if region.dim() != self.dim {
            return Err(Error::validation(format!(
                "region has dimension {}, model has {}",
                region.dim(),
                self.dim
            )));
        }
        if region.geometry() != Geometry::Free {
            return Err(Error::validation("contour volumes must use free geometry; see the torus module"));
        }
        if region.is_empty() || !region.is_c_connected() {
            return Err(Error::validation("contour volume must be non-empty with a d∞-connected complement"));
        }
        Ok(())
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::validation(format!("dimension must be in 1..={MAX_DIM}, got {dim}")));
    }
    Ok(())
}

fn ground_occupied(system: SpinSystem, region: &Region, phi: u8) -> usize {
    region.vertices().iter().filter(|p| system.ground_spin(phi, p) == 1).count()
}

/// A bounded complement component of a contour support, with its label.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Interior {
    pub cells: Vec<Point>,
    pub label: u8,
}

/// A contour: a d∞-connected support with spins, the label of the unbounded
/// complement component (its type), the labelled bounded components and the
/// surface energy ‖γ‖.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Contour {
    pub dim: usize,
    /// Sorted support points.
    pub support: Vec<Point>,
    pub spins: Vec<u8>,
    pub phi: u8,
    pub interiors: Vec<Interior>,
    pub energy: usize,
}

impl Contour {
    /// Validates a candidate (support, spins) in Z^d and computes its labels
    /// and energy. Returns `None` when the candidate is not a contour.
    pub fn from_parts(system: SpinSystem, dim: usize, support: &[Point], spins: &[u8]) -> Option<Contour> {
        if support.is_empty() || support.len() != spins.len() || spins.iter().any(|&s| s >= system.alphabet()) {
            return None;
        }
        let mut pairs: Vec<(Point, u8)> = support.iter().copied().zip(spins.iter().copied()).collect();
        pairs.sort_unstable();
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) || !king_connected(pairs.iter().map(|p| p.0)) {
            return None;
        }
        let support: Vec<Point> = pairs.iter().map(|p| p.0).collect();
        let spins: Vec<u8> = pairs.iter().map(|p| p.1).collect();

        let w = Window::around(dim, &support, 2);
        let mut blocked = vec![false; w.len()];
        let mut cell = vec![u8::MAX; w.len()];
        let cells: Vec<usize> = support.iter().map(|p| w.index(p).expect("support in window")).collect();
        for (&c, &s) in cells.iter().zip(&spins) {
            blocked[c] = true;
            cell[c] = s;
        }
        let (comp, count) = w.label_components(&blocked);
        debug_assert!(comp.iter().any(|c| *c == Some(0)));

        // candidate labels per component, narrowed by its collar
        let grounds = system.ground_states();
        let mut fits = vec![vec![true; grounds.len()]; count];
        let mut nbrs = Vec::new();
        for (&c, &s) in cells.iter().zip(&spins) {
            let p = w.point(c);
            w.king_neighbors(c, &mut nbrs);
            for &j in &nbrs {
                if let Some(k) = comp[j] {
                    for (g, &phi) in grounds.iter().enumerate() {
                        if system.ground_spin(phi, &p) != s {
                            fits[k][g] = false;
                        }
                    }
                }
            }
        }
        let mut labels = Vec::with_capacity(count);
        for f in &fits {
            labels.push(grounds[f.iter().position(|&ok| ok)?]);
        }

        // realise the single-contour configuration
        for i in 0..w.len() {
            if let Some(k) = comp[i] {
                cell[i] = system.ground_spin(labels[k], &w.point(i));
            }
        }
        for &c in &cells {
            if is_correct(system, &w, &cell, c, &grounds, &mut nbrs) {
                return None;
            }
        }
        if system == SpinSystem::HardCore {
            for &c in &cells {
                if cell[c] == 1 {
                    w.lattice_neighbors(c, &mut nbrs);
                    if nbrs.iter().any(|&j| cell[j] == 1) {
                        return None;
                    }
                }
            }
        }
        let energy = surface_energy(system, dim, &w, &cell, &blocked, &cells, &mut nbrs);

        let mut interiors: Vec<Interior> = (1..count)
            .map(|k| Interior { cells: Vec::new(), label: labels[k] })
            .collect();
        for i in 0..w.len() {
            if let Some(k) = comp[i] {
                if k > 0 {
                    interiors[k - 1].cells.push(w.point(i));
                }
            }
        }
        for a in &mut interiors {
            a.cells.sort_unstable();
        }
        interiors.sort_by(|a, b| a.cells.cmp(&b.cells));
        Some(Contour { dim, support, spins, phi: labels[0], interiors, energy })
    }

    pub fn size(&self) -> usize {
        self.support.len()
    }

    /// |cov(γ)| = |γ̄| + Σ |interiors|.
    pub fn cov_len(&self) -> usize {
        self.support.len() + self.interiors.iter().map(|a| a.cells.len()).sum::<usize>()
    }

    /// cov(γ): the support together with every interior, sorted.
    pub fn cov(&self) -> Vec<Point> {
        let mut c = self.support.clone();
        for a in &self.interiors {
            c.extend_from_slice(&a.cells);
        }
        c.sort_unstable();
        c
    }

    /// int_φ(γ): union of the interiors labelled `label`.
    pub fn interior(&self, label: u8) -> Vec<Point> {
        let mut c: Vec<Point> =
            self.interiors.iter().filter(|a| a.label == label).flat_map(|a| a.cells.iter().copied()).collect();
        c.sort_unstable();
        c
    }

    pub fn spin_at(&self, p: &Point) -> Option<u8> {
        self.support.binary_search(p).ok().map(|i| self.spins[i])
    }

    /// The contour moved by `v`. For hard-core, `v` must have even coordinate
    /// sum, otherwise the labels would swap.
    pub fn translate(&self, v: &Point) -> Contour {
        let shift = |ps: &[Point]| ps.iter().map(|p| p.offset(v)).collect::<Vec<_>>();
        Contour {
            dim: self.dim,
            support: shift(&self.support),
            spins: self.spins.clone(),
            phi: self.phi,
            interiors: self.interiors.iter().map(|a| Interior { cells: shift(&a.cells), label: a.label }).collect(),
            energy: self.energy,
        }
    }

    /// Canonical key "x,y=s;..." of support and spins.
    pub fn id(&self) -> String {
        let parts: Vec<String> = self
            .support
            .iter()
            .zip(&self.spins)
            .map(|(p, s)| {
                let c: Vec<String> = p.coords(self.dim).iter().map(i32::to_string).collect();
                format!("{}={s}", c.join(","))
            })
            .collect();
        parts.join(";")
    }

    pub fn to_json(&self, system: SpinSystem) -> Value {
        json!({
            "support": self.support.iter().map(|p| p.to_json(self.dim)).collect::<Vec<_>>(),
            "spins": self.spins,
            "type": system.ground_name(self.phi),
            "energy": self.energy,
            "interiors": self.interiors.iter().map(|a| json!({
                "label": system.ground_name(a.label),
                "cells": a.cells.iter().map(|p| p.to_json(self.dim)).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
        })
    }

    /// Order used everywhere contours are listed: |cov|, then support, then spins.
    pub fn canonical_cmp(&self, other: &Contour) -> Ordering {
        self.cov_len()
            .cmp(&other.cov_len())
            .then_with(|| self.support.cmp(&other.support))
            .then_with(|| self.spins.cmp(&other.spins))
    }
}

fn king_connected(points: impl Iterator<Item = Point>) -> bool {
    let set: Vec<Point> = points.collect();
    if set.is_empty() {
        return false;
    }
    let lookup: HashSet<Point> = set.iter().copied().collect();
    let mut seen = HashSet::from([set[0]]);
    let mut queue = VecDeque::from([set[0]]);
    while let Some(p) = queue.pop_front() {
        for q in &set {
            if !seen.contains(q) && p.dinf(q) == 1 && lookup.contains(q) {
                seen.insert(*q);
                queue.push_back(*q);
            }
        }
    }
    seen.len() == set.len()
}

/// Whether the closed d∞ neighbourhood of `c` agrees with a single ground state.
fn is_correct(system: SpinSystem, w: &Window, cell: &[u8], c: usize, grounds: &[u8], nbrs: &mut Vec<usize>) -> bool {
    w.king_neighbors(c, nbrs);
    grounds.iter().any(|&g| {
        system.ground_spin(g, &w.point(c)) == cell[c]
            && nbrs.iter().all(|&j| system.ground_spin(g, &w.point(j)) == cell[j])
    })
}

fn surface_energy(
    system: SpinSystem,
    dim: usize,
    w: &Window,
    cell: &[u8],
    blocked: &[bool],
    cells: &[usize],
    nbrs: &mut Vec<usize>,
) -> usize {
    match system {
        SpinSystem::Potts { .. } => {
            let mut e = 0;
            for &c in cells {
                w.lattice_neighbors(c, nbrs);
                e += nbrs.iter().filter(|&&j| j > c && blocked[j] && cell[j] != cell[c]).count();
            }
            e
        }
        SpinSystem::HardCore => {
            let mut num = 0;
            for &c in cells {
                if cell[c] == 0 {
                    w.lattice_neighbors(c, nbrs);
                    num += 2 * dim - nbrs.iter().filter(|&&j| cell[j] == 1).count();
                }
            }
            assert_eq!(num % (4 * dim), 0, "hard-core surface energy must be an integer");
            num / (4 * dim)
        }
    }
}

/// Whether `support` lies in Λ at d∞ distance > 1 from Λ^c.
fn inside_with_clearance(dist: &HashMap<Point, u32>, support: &[Point]) -> bool {
    support.iter().all(|p| dist.get(p).is_some_and(|&d| d >= 2))
}

fn distance_map(region: &Region) -> HashMap<Point, u32> {
    region.vertices().iter().copied().zip(region.distances_to_complement()).collect()
}

/// Validity of a candidate contour of type φ in Λ.
pub fn is_valid_contour(
    model: &ContourModel,
    region: &Region,
    phi: u8,
    support: &[Point],
    spins: &[u8],
) -> Option<Contour> {
    let dist = distance_map(region);
    if !inside_with_clearance(&dist, support) {
        return None;
    }
    Contour::from_parts(model.system, model.dim, support, spins).filter(|c| c.phi == phi)
}

/// Mutually external: covs at d∞ distance > 1. Never true of a contour and itself.
pub fn mutually_external(a: &Contour, b: &Contour) -> bool {
    let cb: HashSet<Point> = b.cov().into_iter().collect();
    let offsets = crate::lattice::king_offsets(a.dim);
    !a.cov().iter().any(|p| offsets.iter().any(|d| cb.contains(&p.offset(d))))
}

/// Precomputed closed neighbourhoods of a region, for extracting contours
/// from many configurations.
struct Scanner {
    closed: Vec<Vec<usize>>,
    /// ground[g][i]: spin of ground state g at vertex i
    ground: Vec<Vec<u8>>,
}

impl Scanner {
    fn new(system: SpinSystem, region: &Region) -> Scanner {
        let closed = region
            .vertices()
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut n: Vec<usize> =
                    region.king_neighbors(p).iter().filter_map(|q| region.index_of(q)).collect();
                n.push(i);
                n
            })
            .collect();
        let ground = system
            .ground_states()
            .iter()
            .map(|&g| region.vertices().iter().map(|p| system.ground_spin(g, p)).collect())
            .collect();
        Scanner { closed, ground }
    }

    fn incorrect(&self, spins: &[u8]) -> Vec<usize> {
        (0..spins.len())
            .filter(|&i| {
                !self.ground.iter().any(|g| self.closed[i].iter().all(|&j| spins[j] == g[j]))
            })
            .collect()
    }

    /// d∞ components of a vertex set, each sorted, in order of smallest vertex.
    fn components(&self, set: &[usize]) -> Vec<Vec<usize>> {
        let mut comp = HashMap::new();
        for &i in set {
            comp.insert(i, usize::MAX);
        }
        let mut out = Vec::new();
        for &i in set {
            if comp[&i] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![i];
            comp.insert(i, id);
            let mut k = 0;
            while k < members.len() {
                let v = members[k];
                for &j in &self.closed[v] {
                    if comp.get(&j) == Some(&usize::MAX) {
                        comp.insert(j, id);
                        members.push(j);
                    }
                }
                k += 1;
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }
}

/// Checks that `spins` lies in Ω_Λ^φ: ground spins within the padding and,
/// for hard-core, an independent set.
pub fn check_padded(model: &ContourModel, region: &Region, phi: u8, spins: &[u8]) -> Result<()> {
    if spins.len() != region.len() {
        return Err(Error::validation(format!(
            "configuration has {} spins for a region of {} vertices",
            spins.len(),
            region.len()
        )));
    }
    if spins.iter().any(|&s| s >= model.system.alphabet()) {
        return Err(Error::validation("spin value outside the alphabet"));
    }
    for ((p, &s), d) in region.vertices().iter().zip(spins).zip(region.distances_to_complement()) {
        if d <= PADDING && s != model.system.ground_spin(phi, p) {
            return Err(Error::validation(format!("vertex {p:?} violates the padded boundary condition")));
        }
    }
    if !model.system.admissible(&region.edges(), spins) {
        return Err(Error::validation("configuration is not an independent set"));
    }
    Ok(())
}

/// The matching contour set of a configuration in Ω_Λ^φ, in canonical order.
pub fn contours_of_config(model: &ContourModel, region: &Region, phi: u8, spins: &[u8]) -> Result<Vec<Contour>> {
    model.check_ground(phi)?;
    check_padded(model, region, phi, spins)?;
    let scanner = Scanner::new(model.system, region);
    extract(model, region, &scanner, spins)
}

fn extract(model: &ContourModel, region: &Region, scanner: &Scanner, spins: &[u8]) -> Result<Vec<Contour>> {
    let bad = scanner.incorrect(spins);
    let mut out = Vec::new();
    for comp in scanner.components(&bad) {
        let support: Vec<Point> = comp.iter().map(|&i| region.vertices()[i]).collect();
        let s: Vec<u8> = comp.iter().map(|&i| spins[i]).collect();
        let c = Contour::from_parts(model.system, model.dim, &support, &s)
            .ok_or_else(|| Error::Internal(format!("extracted component {support:?} is not a valid contour")))?;
        out.push(c);
    }
    out.sort_by(|a, b| a.canonical_cmp(b));
    Ok(out)
}

/// Rebuilds the configuration whose matching contour set is `contours`:
/// ground state φ outside, then each contour's interiors and support, from
/// the largest cov inwards.
pub fn config_from_contours(model: &ContourModel, region: &Region, phi: u8, contours: &[Contour]) -> Result<Vec<u8>> {
    let mut spins: Vec<u8> = region.vertices().iter().map(|p| model.system.ground_spin(phi, p)).collect();
    let mut order: Vec<&Contour> = contours.iter().collect();
    order.sort_by_key(|c| std::cmp::Reverse(c.cov_len()));
    let mut set = |p: &Point, s: u8| -> Result<()> {
        let i = region
            .index_of(p)
            .ok_or_else(|| Error::validation(format!("contour point {p:?} outside the region")))?;
        spins[i] = s;
        Ok(())
    };
    for c in order {
        for a in &c.interiors {
            for p in &a.cells {
                set(p, model.system.ground_spin(a.label, p))?;
            }
        }
        for (p, &s) in c.support.iter().zip(&c.spins) {
            set(p, s)?;
        }
    }
    Ok(spins)
}

/// How [`list_contours_with`] enumerates candidates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Lister {
    /// Scan when the padded configuration space is at most [`SCAN_CAP`].
    #[default]
    Auto,
    /// Every padded configuration with exactly one contour realises that
    /// contour, and each contour arises this way exactly once.
    Scan,
    /// Grow d∞-connected supports, then fill spins compatible with the labels.
    Supports,
}

/// All valid type-φ contours in Λ with |γ̄| ≤ `max_size`, canonically ordered.
pub fn list_contours(model: &ContourModel, region: &Region, phi: u8, max_size: usize) -> Result<Vec<Contour>> {
    list_contours_with(model, region, phi, max_size, Lister::Auto)
}

pub fn list_contours_with(
    model: &ContourModel,
    region: &Region,
    phi: u8,
    max_size: usize,
    lister: Lister,
) -> Result<Vec<Contour>> {
    model.check_ground(phi)?;
    model.check_volume(region)?;
    let space = PaddedSpace::new(model.system, region, Some(phi));
    let scan = match lister {
        Lister::Auto => space.raw_len() <= SCAN_CAP,
        Lister::Scan => true,
        Lister::Supports => false,
    };
    let mut out = if scan {
        scan_contours(model, region, &space)?.into_iter().filter(|c| c.size() <= max_size).collect()
    } else {
        grow_contours(model, region, phi, max_size)?
    };
    out.sort_by(|a, b| a.canonical_cmp(b));
    Ok(out)
}

/// Contours of the list that are not mutually external with `gamma`.
pub fn list_not_mutually_external(
    model: &ContourModel,
    region: &Region,
    phi: u8,
    gamma: &Contour,
    max_size: usize,
) -> Result<Vec<Contour>> {
    Ok(list_contours(model, region, phi, max_size)?
        .into_iter()
        .filter(|c| !mutually_external(gamma, c))
        .collect())
}

fn scan_contours(model: &ContourModel, region: &Region, space: &PaddedSpace) -> Result<Vec<Contour>> {
    let scanner = Scanner::new(model.system, region);
    let found = space.fold(
        SCAN_CAP.max(space.raw_len().min(crate::oracle::DEFAULT_STATE_CAP)),
        Vec::new,
        |acc: &mut Vec<Result<Contour>>, s| {
            let bad = scanner.incorrect(s);
            if bad.is_empty() {
                return;
            }
            let comps = scanner.components(&bad);
            if comps.len() == 1 {
                let mut cs = match extract(model, region, &scanner, s) {
                    Ok(cs) => cs,
                    Err(e) => return acc.push(Err(e)),
                };
                acc.push(Ok(cs.remove(0)));
            }
        },
        |mut a, b| {
            a.extend(b);
            a
        },
    )?;
    found.into_iter().collect()
}

fn grow_contours(model: &ContourModel, region: &Region, phi: u8, max_size: usize) -> Result<Vec<Contour>> {
    let dist = region.distances_to_complement();
    let cand: Vec<usize> = (0..region.len()).filter(|&i| dist[i] >= 2).collect();
    let sub = Region::new(model.dim, Geometry::Free, cand.iter().map(|&i| region.vertices()[i]))?;
    let g = sub.king_graph();
    let system = model.system;
    let grounds = system.ground_states();
    let alphabet = system.alphabet();
    let per_root: Vec<Result<Vec<Contour>>> = (0..sub.len())
        .into_par_iter()
        .map(|root| {
            let mut found = Vec::new();
            let mut visited = 0u64;
            let mut failure = None;
            g.for_each_connected_subset(root, max_size, |u| u > root, |set| {
                if failure.is_some() {
                    return;
                }
                visited += 1;
                if visited > SUPPORT_CAP {
                    failure = Some(Error::CapExceeded {
                        what: "contour supports per root".into(),
                        needed: visited as u128,
                        cap: SUPPORT_CAP as u128,
                    });
                    return;
                }
                let mut support: Vec<Point> = set.iter().map(|&i| sub.vertices()[i]).collect();
                support.sort_unstable();
                fill_spins(system, model.dim, &support, phi, &grounds, alphabet, &mut found);
            });
            match failure {
                Some(e) => Err(e),
                None => Ok(found),
            }
        })
        .collect();
    let mut out = Vec::new();
    for r in per_root {
        out.extend(r?);
    }
    Ok(out)
}

/// Every valid spin filling of a support with exterior label φ.
fn fill_spins(
    system: SpinSystem,
    dim: usize,
    support: &[Point],
    phi: u8,
    grounds: &[u8],
    alphabet: u8,
    found: &mut Vec<Contour>,
) {
    let w = Window::around(dim, support, 2);
    let mut blocked = vec![false; w.len()];
    let cells: Vec<usize> = support.iter().map(|p| w.index(p).expect("support in window")).collect();
    for &c in &cells {
        blocked[c] = true;
    }
    let (comp, count) = w.label_components(&blocked);
    let mut nbrs = Vec::new();
    let touching: Vec<Vec<usize>> = cells
        .iter()
        .map(|&c| {
            w.king_neighbors(c, &mut nbrs);
            let mut ks: Vec<usize> = nbrs.iter().filter_map(|&j| comp[j]).collect();
            ks.sort_unstable();
            ks.dedup();
            ks
        })
        .collect();
    let free: Vec<usize> = (0..cells.len()).filter(|&i| touching[i].is_empty()).collect();
    let interiors = count - 1;
    let label_choices = (grounds.len() as u64).pow(interiors as u32);
    let mut labels = vec![phi; count];
    let mut spins = vec![0u8; cells.len()];
    for code in 0..label_choices {
        let mut x = code;
        for l in labels.iter_mut().skip(1) {
            *l = grounds[(x % grounds.len() as u64) as usize];
            x /= grounds.len() as u64;
        }
        let mut consistent = true;
        for (i, ks) in touching.iter().enumerate() {
            let mut forced = None;
            for &k in ks {
                let s = system.ground_spin(labels[k], &support[i]);
                if forced.is_some_and(|f| f != s) {
                    consistent = false;
                }
                forced = Some(s);
            }
            if let Some(s) = forced {
                spins[i] = s;
            }
        }
        if !consistent {
            continue;
        }
        let fills = (alphabet as u64).pow(free.len() as u32);
        for f in 0..fills {
            let mut y = f;
            for &i in &free {
                spins[i] = (y % alphabet as u64) as u8;
                y /= alphabet as u64;
            }
            if let Some(c) = Contour::from_parts(system, dim, support, &spins) {
                if c.phi == phi {
                    found.push(c);
                }
            }
        }
    }
}

/// The outer-contour model of one region and ground state, solved to the
/// engine's order.
#[derive(Debug)]
pub struct OuterModel {
    pub region: Region,
    pub phi: u8,
    /// Outer contours with |γ̄| ≤ 2·3^d·order, canonically ordered. Those of
    /// energy above the order have zero weight and are absent from `system`.
    pub contours: Vec<Contour>,
    /// w^ext(γ) = z^‖γ‖ ∏ Z^{label}(interior) truncated to the order.
    pub weights: Vec<ExactSeries>,
    /// Mutual externality as compatibility; indices refer to `contours`.
    pub system: PolymerSystem<Rational>,
    pub log_z: ExactSeries,
    pub z: ExactSeries,
}

type MemoKey = (Vec<Point>, u8);

/// Memoised recursive solver for Z^φ(Λ, z) up to a fixed order.
pub struct ContourEngine {
    model: ContourModel,
    order: usize,
    lister: Lister,
    direct_cap: usize,
    memo: Mutex<HashMap<MemoKey, Arc<OuterModel>>>,
}

impl ContourEngine {
    pub fn new(model: ContourModel, order: usize) -> Self {
        ContourEngine { model, order, lister: Lister::Auto, direct_cap: DIRECT_CAP, memo: Mutex::new(HashMap::new()) }
    }

    pub fn with_lister(mut self, lister: Lister) -> Self {
        self.lister = lister;
        self
    }

    /// Always evaluate log Z by the cluster expansion, never by the direct
    /// family sum.
    pub fn cluster_only(mut self) -> Self {
        self.direct_cap = 0;
        self
    }

    pub fn model(&self) -> &ContourModel {
        &self.model
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn memo_len(&self) -> usize {
        self.memo.lock().expect("memo lock").len()
    }

    /// Solves a region as given, without translating it.
    pub fn solve(&self, region: &Region, phi: u8) -> Result<OuterModel> {
        self.model.check_ground(phi)?;
        self.model.check_volume(region)?;
        self.build(region, phi)
    }

    /// Z^φ(A, z) for a bounded set of cells (an interior), memoised by shape.
    pub fn region_z(&self, cells: &[Point], phi: u8) -> Result<ExactSeries> {
        Ok(self.solve_shape(cells, phi)?.0.z.clone())
    }

    /// The memoised solution of a shape, together with the translation taking
    /// the stored coordinates to the given ones.
    pub fn solve_shape(&self, cells: &[Point], phi: u8) -> Result<(Arc<OuterModel>, Point)> {
        let (key, shift) = self.normalise(cells, phi);
        if let Some(hit) = self.memo.lock().expect("memo lock").get(&key) {
            return Ok((hit.clone(), shift));
        }
        let region = Region::new(self.model.dim, Geometry::Free, key.0.iter().copied())?;
        let solved = Arc::new(self.build(&region, phi)?);
        let mut memo = self.memo.lock().expect("memo lock");
        let entry = memo.entry(key).or_insert(solved);
        Ok((entry.clone(), shift))
    }

    /// w^ext(γ) to the engine order.
    pub fn outer_weight(&self, gamma: &Contour) -> Result<ExactSeries> {
        let m = self.order;
        if gamma.energy > m {
            return Ok(ExactSeries::zero(m));
        }
        let mut w = ExactSeries::monomial(m, gamma.energy, Rational::from(1));
        for a in &gamma.interiors {
            w = w.mul(&self.region_z(&a.cells, a.label)?)?;
        }
        Ok(w)
    }

    /// Translates cells so the bounding box starts at the origin (moved by
    /// one more step along the first axis for hard-core when the shift is odd,
    /// so parity and labels survive).
    fn normalise(&self, cells: &[Point], phi: u8) -> (MemoKey, Point) {
        let mut lo = [i32::MAX; MAX_DIM];
        for p in cells {
            for a in 0..self.model.dim {
                lo[a] = lo[a].min(p.0[a]);
            }
        }
        for l in lo.iter_mut().skip(self.model.dim) {
            *l = 0;
        }
        let mut shift = Point(lo);
        if self.model.system == SpinSystem::HardCore && !shift.is_even() {
            shift.0[0] -= 1;
        }
        let mut pts: Vec<Point> = cells.iter().map(|p| p.sub(&shift)).collect();
        pts.sort_unstable();
        ((pts, phi), shift)
    }

    fn build(&self, region: &Region, phi: u8) -> Result<OuterModel> {
        let m = self.order;
        let max_size = self.model.max_support_for_energy(m).min(region.len());
        let contours = list_contours_with(&self.model, region, phi, max_size, self.lister)?;
        let weights: Vec<ExactSeries> =
            contours.par_iter().map(|c| self.outer_weight(c)).collect::<Result<_>>()?;
        let w = Window::around(self.model.dim, region.vertices(), 1);
        let words = w.len().div_ceil(64);
        let offsets = crate::lattice::king_offsets(self.model.dim);
        let masks: Vec<(Vec<u64>, Vec<u64>)> = contours
            .par_iter()
            .map(|c| {
                let mut cov = vec![0u64; words];
                let mut near = vec![0u64; words];
                for p in c.cov() {
                    let i = w.index(&p).expect("cov inside the region window");
                    cov[i / 64] |= 1 << (i % 64);
                    for d in &offsets {
                        if let Some(j) = w.index(&p.offset(d)) {
                            near[j / 64] |= 1 << (j % 64);
                        }
                    }
                }
                (cov, near)
            })
            .collect();
        let system = PolymerSystem::new(m, &weights, |a, b| {
            masks[a].1.iter().zip(&masks[b].0).any(|(x, y)| x & y != 0)
        })?;
        let log_z = system.log_z_adaptive(self.direct_cap)?;
        let z = log_z.poly_from_log()?;
        Ok(OuterModel { region: region.clone(), phi, contours, weights, system, log_z, z })
    }
}

/// Z^φ(Λ, z) as a series to order m.
pub fn contour_z(model: &ContourModel, region: &Region, phi: u8, m: usize) -> Result<ExactSeries> {
    Ok(ContourEngine::new(*model, m).solve(region, phi)?.z)
}

/// log Z^φ(Λ, z) as a series to order m.
pub fn contour_log_z(model: &ContourModel, region: &Region, phi: u8, m: usize) -> Result<ExactSeries> {
    Ok(ContourEngine::new(*model, m).solve(region, phi)?.log_z)
}

/// Degree of the polynomial Z^φ(Λ, z): edges touching a free site (Potts) or
/// free sites occupied in the ground state (hard-core). Beyond it every
/// coefficient vanishes.
pub fn contour_degree(model: &ContourModel, region: &Region, phi: u8) -> usize {
    let space = PaddedSpace::new(model.system, region, Some(phi));
    let free: HashSet<usize> = space.free.iter().copied().collect();
    match model.system {
        SpinSystem::Potts { .. } => {
            space.edges.iter().filter(|(a, b)| free.contains(a) || free.contains(b)).count()
        }
        SpinSystem::HardCore => {
            space.free.iter().filter(|&&i| model.system.ground_spin(phi, &region.vertices()[i]) == 1).count()
        }
    }
}

/// exp(T_m(z)) ≈ Z^φ(Λ, z) with m chosen for relative error ε, N = C|Λ|.
/// Refuses |z| ≥ δ unless `force`, which treats the radius as 2|z|.
pub fn approx_contour_z(
    model: &ContourModel,
    region: &Region,
    phi: u8,
    z: f64,
    epsilon: f64,
    force: bool,
) -> Result<Approximation> {
    let forced = z.abs() >= model.delta;
    if forced && !force {
        return Err(Error::Regime { z: z.abs(), delta: model.delta });
    }
    let delta = if forced { 2.0 * z.abs() } else { model.delta };
    let m = truncation_order(model.degree(region), z, delta, epsilon)?;
    approx_contour_z_at_order(model, region, phi, z, m).map(|mut a| {
        a.forced = forced;
        a
    })
}

pub fn approx_contour_z_at_order(
    model: &ContourModel,
    region: &Region,
    phi: u8,
    z: f64,
    m: usize,
) -> Result<Approximation> {
    let log_value = contour_log_z(model, region, phi, m)?.evaluate_real(z);
    Ok(Approximation { value: log_value.exp(), log_value, m_used: m, forced: false })
}

/// Spin partition function from the contour approximation.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinApproximation {
    pub z: f64,
    /// log of the spin partition function.
    pub log_value: f64,
    /// log of the prefactor applied to the contour partition function.
    pub log_prefactor: f64,
    pub contour: Approximation,
}

/// Z^φ_{q,Λ}(β) = z^{−|E|} Z^φ(Λ, z) with z = e^{−β}, or
/// Z^φ_Λ(λ) = z^{−|Λ^φ|} Z^φ(Λ, z) with z = 1/λ.
pub fn spin_z_from_contours(
    model: &ContourModel,
    region: &Region,
    phi: u8,
    param: f64,
    epsilon: f64,
    force: bool,
) -> Result<SpinApproximation> {
    let z = model.activity(param)?;
    let contour = approx_contour_z(model, region, phi, z, epsilon, force)?;
    let log_prefactor = model.log_prefactor(region, phi, param);
    Ok(SpinApproximation { z, log_value: log_prefactor + contour.log_value, log_prefactor, contour })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{brute_z_hardcore_region, brute_z_potts};

    fn p(c: &[i32]) -> Point {
        Point::new(c)
    }

    fn block(cx: i32, cy: i32) -> Vec<Point> {
        let mut v = Vec::new();
        for x in cx - 1..=cx + 1 {
            for y in cy - 1..=cy + 1 {
                v.push(p(&[x, y]));
            }
        }
        v
    }

    fn flip(model: &ContourModel, side: i32, phi: u8, at: Point, s: u8) -> (Region, Vec<u8>) {
        let r = Region::cube(2, side);
        let mut spins: Vec<u8> = r.vertices().iter().map(|q| model.system.ground_spin(phi, q)).collect();
        spins[r.index_of(&at).unwrap()] = s;
        (r, spins)
    }

    #[test]
    fn single_potts_flip() {
        let m = ContourModel::potts(2, 2).unwrap();
        let (r, s) = flip(&m, 9, 0, p(&[4, 4]), 1);
        let cs = contours_of_config(&m, &r, 0, &s).unwrap();
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].support, block(4, 4));
        assert_eq!(cs[0].energy, 4);
        assert_eq!(cs[0].interiors.len(), 0);
        let all_red = vec![0u8; r.len()];
        assert!(contours_of_config(&m, &r, 0, &all_red).unwrap().is_empty());
    }

    #[test]
    fn single_hardcore_vacancy() {
        let m = ContourModel::hardcore(2).unwrap();
        let (r, s) = flip(&m, 9, 0, p(&[4, 4]), 0);
        let cs = contours_of_config(&m, &r, 0, &s).unwrap();
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].support, block(4, 4));
        assert_eq!(cs[0].energy, 1);
        let occupied = s.iter().filter(|&&x| x == 1).count();
        assert_eq!(occupied, ground_occupied(m.system, &r, 0) - 1);
    }

    #[test]
    fn validity_examples() {
        let m = ContourModel::potts(3, 2).unwrap();
        let r = Region::cube(2, 9);
        let sup = block(4, 4);
        let mut spins = vec![0u8; 9];
        spins[4] = 1;
        assert_eq!(is_valid_contour(&m, &r, 0, &sup, &spins).unwrap().energy, 4);
        assert!(is_valid_contour(&m, &r, 1, &sup, &spins).is_none());
        assert!(is_valid_contour(&m, &r, 0, &sup, &[0u8; 9]).is_none());
        // too close to the boundary
        assert!(is_valid_contour(&m, &r, 0, &block(1, 1), &spins).is_none());
        let h = ContourModel::hardcore(2).unwrap();
        let mut hs: Vec<u8> = sup.iter().map(|q| h.system.ground_spin(0, q)).collect();
        hs[1] = 1; // (3,4) is odd; next to the even centre
        assert!(is_valid_contour(&h, &r, 0, &sup, &hs).is_none());
    }

    #[test]
    fn smallest_contours() {
        let m = ContourModel::potts(2, 2).unwrap();
        let r = Region::cube(2, 7);
        assert!(list_contours_with(&m, &r, 0, 8, Lister::Supports).unwrap().is_empty());
        let nine = list_contours_with(&m, &r, 0, 9, Lister::Supports).unwrap();
        // one flip pattern per centre at distance ≥ 3 from the complement
        assert_eq!(nine.len(), 9);
        assert!(nine.iter().all(|c| c.size() == 9 && c.energy == 4));
        let h = ContourModel::hardcore(2).unwrap();
        assert!(list_contours_with(&h, &r, 0, 1, Lister::Supports).unwrap().is_empty());
        let hs = list_contours_with(&h, &r, 0, 9, Lister::Supports).unwrap();
        assert!(hs.iter().all(|c| c.size() == 9 && c.energy == 1));
        assert_eq!(hs.len(), 5);
    }

    #[test]
    fn listers_agree() {
        for (model, side, max) in [
            (ContourModel::potts(2, 2).unwrap(), 6, 16),
            (ContourModel::potts(3, 2).unwrap(), 6, 16),
            (ContourModel::hardcore(2).unwrap(), 6, 16),
        ] {
            let r = Region::cube(2, side);
            for phi in model.ground_states() {
                let a = list_contours_with(&model, &r, phi, max, Lister::Scan).unwrap();
                let b = list_contours_with(&model, &r, phi, max, Lister::Supports).unwrap();
                assert!(!a.is_empty());
                assert_eq!(a, b, "{} side {side} phi {phi}", model.system);
            }
        }
    }

    #[test]
    fn thin_interior_weight() {
        let m = ContourModel::potts(2, 2).unwrap();
        let (r, s) = flip(&m, 9, 0, p(&[4, 4]), 1);
        let c = contours_of_config(&m, &r, 0, &s).unwrap().remove(0);
        let e = ContourEngine::new(m, 6);
        assert_eq!(e.outer_weight(&c).unwrap(), ExactSeries::monomial(6, 4, Rational::from(1)));
        assert!(ContourEngine::new(m, 3).outer_weight(&c).unwrap().is_zero());
        let thin = Region::cube(2, 4);
        assert_eq!(contour_z(&m, &thin, 0, 5).unwrap(), ExactSeries::one(5));
    }

    #[test]
    fn potts_box_matches_brute_force() {
        for q in [2u8, 3] {
            let m = ContourModel::potts(q, 2).unwrap();
            let r = Region::cube(2, 6);
            let brute = brute_z_potts(&r, q, Some(1)).unwrap();
            let deg = contour_degree(&m, &r, 1);
            assert!(brute.degree() <= deg);
            assert_eq!(contour_z(&m, &r, 1, deg).unwrap(), brute.to_series(deg));
        }
    }

    #[test]
    fn hardcore_box_matches_brute_force() {
        let m = ContourModel::hardcore(2).unwrap();
        let r = Region::cube(2, 7);
        for phi in [0, 1] {
            let brute = brute_z_hardcore_region(&r, phi).unwrap();
            let deg = contour_degree(&m, &r, phi);
            assert_eq!(contour_z(&m, &r, phi, deg).unwrap(), brute.to_series(deg));
        }
    }

    #[test]
    fn round_trip_through_contours() {
        let m = ContourModel::potts(2, 2).unwrap();
        let r = Region::cube(2, 7);
        let space = PaddedSpace::new(m.system, &r, Some(0));
        for s in space.configs(1 << 12).unwrap() {
            let cs = contours_of_config(&m, &r, 0, &s).unwrap();
            assert_eq!(config_from_contours(&m, &r, 0, &cs).unwrap(), s);
        }
    }

    #[test]
    fn default_deltas() {
        assert!((potts_default_delta(2, 2) - 0.0690).abs() < 1e-3);
        assert!((hardcore_default_delta(2) - 9.0 / (25.0 * 9f64.exp())).abs() < 1e-15);
    }
}
