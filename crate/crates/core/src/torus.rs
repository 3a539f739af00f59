//! Contours on the torus T^d_n.
//!
//! A contour is small when its support is d∞-connected with diameter below
//! n/2. Such a contour lifts to Z^d, where labels, energy and interiors are
//! computed exactly as for planar regions. The components of diameter at
//! least n/2 together form the single large contour of a configuration.
//! Z^φ(T_n) sums over families of mutually external small contours of type
//! φ; Z^big collects the configurations with a large contour and is only
//! available by brute force.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::sync::Arc;

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::cluster::{truncation_order, PolymerSystem, DIRECT_CAP};
use crate::contour::{list_contours_with, Contour, ContourEngine, ContourModel, Interior, Lister, OuterModel};
use crate::error::{Error, Result};
use crate::lattice::{box_points, king_offsets, wrap_in, Geometry, Point, Region, Window};
use crate::oracle::{IntPoly, PaddedSpace, DEFAULT_STATE_CAP};
use crate::sampling::{categorical, substream, ContourSampler, Level, RegionTable};
use crate::series::ExactSeries;
use crate::spin::SpinSystem;

/// Default constant c of the accuracy floor ε ≥ e^{−cn}.
pub const DEFAULT_FLOOR_CONSTANT: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ContourKind {
    Small,
    Large,
}

/// A contour on T_n, with points wrapped into [0, n)^d.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TorusContour {
    pub n: u32,
    pub kind: ContourKind,
    /// Sorted support points.
    pub support: Vec<Point>,
    pub spins: Vec<u8>,
    pub energy: usize,
    /// Type of a small contour. Large contours have no exterior and no type.
    pub phi: Option<u8>,
    /// Labelled complement components other than the exterior.
    pub interiors: Vec<Interior>,
    /// Z^d lift of a small contour, its lowest corner inside [0, n)^d.
    pub lift: Option<Contour>,
}

impl TorusContour {
    /// The small contour of a Z^d lift whose support spans less than n/2.
    pub fn small(lift: Contour, n: u32) -> TorusContour {
        let lift = canonical_lift(lift, n);
        let dim = lift.dim;
        let geometry = Geometry::Torus(n);
        let wrap = |p: &Point| wrap_in(geometry, dim, p);
        let mut pairs: Vec<(Point, u8)> = lift.support.iter().map(wrap).zip(lift.spins.iter().copied()).collect();
        pairs.sort_unstable();
        let mut interiors: Vec<Interior> = lift
            .interiors
            .iter()
            .map(|a| {
                let mut cells: Vec<Point> = a.cells.iter().map(wrap).collect();
                cells.sort_unstable();
                Interior { cells, label: a.label }
            })
            .collect();
        interiors.sort_by(|a, b| a.cells.cmp(&b.cells));
        TorusContour {
            n,
            kind: ContourKind::Small,
            support: pairs.iter().map(|p| p.0).collect(),
            spins: pairs.iter().map(|p| p.1).collect(),
            energy: lift.energy,
            phi: Some(lift.phi),
            interiors,
            lift: Some(lift),
        }
    }

    pub fn size(&self) -> usize {
        self.support.len()
    }

    /// Support and interiors, wrapped and sorted.
    pub fn cov(&self) -> Vec<Point> {
        let mut c = self.support.clone();
        for a in &self.interiors {
            c.extend_from_slice(&a.cells);
        }
        c.sort_unstable();
        c
    }

    pub fn to_json(&self, system: SpinSystem, dim: usize) -> Value {
        json!({
            "kind": match self.kind { ContourKind::Small => "small", ContourKind::Large => "large" },
            "support": self.support.iter().map(|p| p.to_json(dim)).collect::<Vec<_>>(),
            "spins": self.spins,
            "energy": self.energy,
            "type": self.phi.map(|p| system.ground_name(p)),
            "interiors": self.interiors.iter().map(|a| json!({
                "label": system.ground_name(a.label),
                "cells": a.cells.iter().map(|p| p.to_json(dim)).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
        })
    }

    fn sort_key(&self) -> (ContourKind, &[Point], &[u8]) {
        (self.kind, &self.support, &self.spins)
    }
}

/// Shifts a lift by a multiple of n so its lowest corner lies in [0, n)^d.
fn canonical_lift(lift: Contour, n: u32) -> Contour {
    let mut shift = Point::default();
    for a in 0..lift.dim {
        let lo = lift.support.iter().map(|p| p.0[a]).min().unwrap_or(0);
        shift.0[a] = -lo.div_euclid(n as i32) * n as i32;
    }
    if shift == Point::default() {
        lift
    } else {
        lift.translate(&shift)
    }
}

/// Largest d∞ distance between two points of `points` on T_n. The d∞
/// diameter is the largest per-axis circular spread, so only the occupied
/// coordinate values of each axis matter.
pub fn torus_diameter(points: &[Point], n: u32) -> u32 {
    let mut d = 0;
    for a in 0..crate::lattice::MAX_DIM {
        let mut seen = vec![false; n as usize];
        for p in points {
            seen[p.0[a].rem_euclid(n as i32) as usize] = true;
        }
        let values: Vec<u32> = (0..n).filter(|&v| seen[v as usize]).collect();
        for (i, &x) in values.iter().enumerate() {
            for &y in &values[i + 1..] {
                d = d.max((y - x).min(n - (y - x)));
            }
        }
    }
    d
}

/// Whether a d∞-connected set of this diameter counts as small on T_n.
pub fn is_small_diameter(diameter: u32, n: u32) -> bool {
    2 * diameter < n
}

fn check_torus(model: &ContourModel, n: u32) -> Result<()> {
    if n < 4 {
        return Err(Error::validation(format!(
            "torus side {n} leaves no room for the small/large contour split; use the brute-force oracle instead"
        )));
    }
    if model.system == SpinSystem::HardCore && n % 2 == 1 {
        return Err(Error::validation(format!("hard-core ground states need an even torus side, got {n}")));
    }
    let cells = (n as u128).checked_pow(model.dim as u32).unwrap_or(u128::MAX);
    if cells > 1 << 20 {
        return Err(Error::CapExceeded { what: "torus cells".into(), needed: cells, cap: 1 << 20 });
    }
    Ok(())
}

/// Degree of the polynomial Z(T_n, z): d·n^d edges (Potts) or n^d/2 (hard-core).
pub fn torus_full_degree(model: &ContourModel, n: u32) -> usize {
    let cells = (n as usize).pow(model.dim as u32);
    match model.system {
        SpinSystem::Potts { .. } => model.dim * cells,
        SpinSystem::HardCore => cells / 2,
    }
}

/// Z^d lifts of every small contour whose support has its lowest corner at
/// the origin, of every type, canonically ordered.
pub fn small_contour_shapes(model: &ContourModel, n: u32) -> Result<Vec<Contour>> {
    check_torus(model, n)?;
    let k = n.div_ceil(2) as i32;
    // the cells of [0, k)^d are exactly those at distance ≥ 2 from the complement
    let vehicle = Region::free_box(&vec![(-1, k); model.dim])?;
    let max_size = (k as usize).pow(model.dim as u32);
    let mut out = Vec::new();
    for phi in model.ground_states() {
        for c in list_contours_with(model, &vehicle, phi, max_size, Lister::Supports)? {
            if (0..model.dim).all(|a| c.support.iter().map(|p| p.0[a]).min() == Some(0)) {
                out.push(c);
            }
        }
    }
    out.sort_by(|a, b| a.canonical_cmp(b));
    Ok(out)
}

/// Every small contour of type φ on T_n, each once, ordered by support.
pub fn small_torus_contours(model: &ContourModel, n: u32, phi: u8) -> Result<Vec<TorusContour>> {
    model.check_ground(phi)?;
    let shapes = small_contour_shapes(model, n)?;
    let shifts = box_points(&vec![(0, n as i32 - 1); model.dim]);
    let found: Vec<Vec<TorusContour>> = shapes
        .par_iter()
        .map(|shape| {
            let mut out = Vec::new();
            for t in &shifts {
                let moved = if model.system == SpinSystem::HardCore && !t.is_even() {
                    // an odd shift swaps the two hard-core ground states
                    let support: Vec<Point> = shape.support.iter().map(|p| p.offset(t)).collect();
                    Contour::from_parts(model.system, model.dim, &support, &shape.spins)
                        .ok_or_else(|| Error::Internal("translated contour is no longer valid".into()))?
                } else {
                    shape.translate(t)
                };
                if moved.phi == phi {
                    out.push(TorusContour::small(moved, n));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut all: Vec<TorusContour> = found.into_iter().flatten().collect();
    all.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    if all.windows(2).any(|w| w[0].sort_key() == w[1].sort_key()) {
        return Err(Error::Internal("a small torus contour was listed twice".into()));
    }
    Ok(all)
}

/// The outer-contour model of Z^φ(T_n): small contours of type φ (as lifts)
/// with mutual externality on the torus as compatibility, solved to `engine`'s
/// order. Interior partition functions come from the planar engine.
pub fn torus_outer_model(engine: &ContourEngine, n: u32, phi: u8) -> Result<OuterModel> {
    let model = engine.model();
    let m = engine.order();
    let region = Region::torus(model.dim, n)?;
    let lifts: Vec<Contour> = small_torus_contours(model, n, phi)?
        .into_iter()
        .map(|c| c.lift.expect("small contours carry a lift"))
        .collect();
    let weights: Vec<ExactSeries> = lifts.par_iter().map(|c| engine.outer_weight(c)).collect::<Result<_>>()?;
    let w = Window::torus(model.dim, n);
    let words = w.len().div_ceil(64);
    let offsets = king_offsets(model.dim);
    let masks: Vec<(Vec<u64>, Vec<u64>)> = lifts
        .par_iter()
        .map(|c| {
            let mut cov = vec![0u64; words];
            let mut near = vec![0u64; words];
            for p in c.cov() {
                let i = w.index(&p).expect("torus windows wrap");
                cov[i / 64] |= 1 << (i % 64);
                near[i / 64] |= 1 << (i % 64);
                for d in &offsets {
                    let j = w.index(&p.offset(d)).expect("torus windows wrap");
                    near[j / 64] |= 1 << (j % 64);
                }
            }
            (cov, near)
        })
        .collect();
    let system = PolymerSystem::new(m, &weights, |a, b| {
        masks[a].1.iter().zip(&masks[b].0).any(|(x, y)| x & y != 0)
    })?;
    let log_z = system.log_z_adaptive(DIRECT_CAP)?;
    let z = log_z.poly_from_log()?;
    Ok(OuterModel { region, phi, contours: lifts, weights, system, log_z, z })
}

/// log Z^φ(T_n, z) to order m.
pub fn torus_log_z_small(model: &ContourModel, n: u32, phi: u8, m: usize) -> Result<ExactSeries> {
    Ok(torus_outer_model(&ContourEngine::new(*model, m), n, phi)?.log_z)
}

/// Z^φ(T_n, z) to order m. With m at least [`torus_full_degree`] this is
/// the whole polynomial.
pub fn torus_z_small(model: &ContourModel, n: u32, phi: u8, m: usize) -> Result<ExactSeries> {
    Ok(torus_outer_model(&ContourEngine::new(*model, m), n, phi)?.z)
}

/// Closed neighbourhoods and ground spins of T_n, for contour extraction.
struct TorusScanner {
    system: SpinSystem,
    dim: usize,
    n: u32,
    window: Window,
    closed: Vec<Vec<usize>>,
    lattice: Vec<Vec<usize>>,
    /// ground[g][i]: spin of ground state g at cell i
    ground: Vec<Vec<u8>>,
    grounds: Vec<u8>,
}

impl TorusScanner {
    fn new(model: &ContourModel, n: u32) -> TorusScanner {
        let window = Window::torus(model.dim, n);
        let mut nbrs = Vec::new();
        let closed = (0..window.len())
            .map(|i| {
                window.king_neighbors(i, &mut nbrs);
                let mut c = nbrs.clone();
                c.push(i);
                c
            })
            .collect();
        let lattice = (0..window.len())
            .map(|i| {
                window.lattice_neighbors(i, &mut nbrs);
                nbrs.clone()
            })
            .collect();
        let grounds = model.ground_states();
        let ground = grounds
            .iter()
            .map(|&g| (0..window.len()).map(|i| model.system.ground_spin(g, &window.point(i))).collect())
            .collect();
        TorusScanner { system: model.system, dim: model.dim, n, window, closed, lattice, ground, grounds }
    }

    /// Ground state index whose closed neighbourhood of `i` agrees with `spins`.
    fn phase_at(&self, spins: &[u8], i: usize) -> Option<usize> {
        self.ground.iter().position(|g| self.closed[i].iter().all(|&j| spins[j] == g[j]))
    }

    fn check(&self, spins: &[u8]) -> Result<()> {
        if spins.len() != self.window.len() {
            return Err(Error::validation(format!(
                "configuration has {} spins for a torus of {} cells",
                spins.len(),
                self.window.len()
            )));
        }
        if spins.iter().any(|&s| s >= self.system.alphabet()) {
            return Err(Error::validation("spin value outside the alphabet"));
        }
        if self.system == SpinSystem::HardCore
            && (0..spins.len()).any(|i| spins[i] == 1 && self.lattice[i].iter().any(|&j| spins[j] == 1))
        {
            return Err(Error::validation("configuration is not an independent set"));
        }
        Ok(())
    }

    /// Exponent of z for the whole configuration.
    fn config_energy(&self, spins: &[u8]) -> usize {
        match self.system {
            SpinSystem::Potts { .. } => (0..spins.len())
                .map(|i| self.lattice[i].iter().filter(|&&j| j > i && spins[j] != spins[i]).count())
                .sum(),
            SpinSystem::HardCore => spins.len() / 2 - spins.iter().filter(|&&s| s == 1).count(),
        }
    }

    /// Surface energy of a support given as cell indices.
    fn energy(&self, cells: &[usize], in_support: &[bool], spins: &[u8]) -> Result<usize> {
        match self.system {
            SpinSystem::Potts { .. } => Ok(cells
                .iter()
                .map(|&i| self.lattice[i].iter().filter(|&&j| j > i && in_support[j] && spins[j] != spins[i]).count())
                .sum()),
            SpinSystem::HardCore => {
                let mut num = 0;
                for &i in cells {
                    if spins[i] == 0 {
                        num += 2 * self.dim - self.lattice[i].iter().filter(|&&j| spins[j] == 1).count();
                    }
                }
                if num % (4 * self.dim) != 0 {
                    return Err(Error::Internal("hard-core surface energy is not an integer".into()));
                }
                Ok(num / (4 * self.dim))
            }
        }
    }

    /// Small contours and the large contour (if any) of a configuration,
    /// with the number of components of diameter ≥ n/2.
    fn extract(&self, spins: &[u8]) -> Result<(Vec<TorusContour>, usize)> {
        let len = self.window.len();
        let correct: Vec<bool> = (0..len).map(|i| self.phase_at(spins, i).is_some()).collect();
        let (comp, count) = self.window.label_components(&correct);
        let mut members = vec![Vec::new(); count];
        for i in 0..len {
            if let Some(k) = comp[i] {
                members[k].push(i);
            }
        }
        let mut out = Vec::new();
        let mut large: Vec<usize> = Vec::new();
        let mut large_components = 0;
        for cells in &members {
            let pts: Vec<Point> = cells.iter().map(|&i| self.window.point(i)).collect();
            if is_small_diameter(torus_diameter(&pts, self.n), self.n) {
                out.push(self.small_from_cells(cells, spins)?);
            } else {
                large_components += 1;
                large.extend_from_slice(cells);
            }
        }
        if !large.is_empty() {
            large.sort_unstable();
            out.push(self.large_from_cells(&large, spins)?);
        }
        out.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        Ok((out, large_components))
    }

    fn small_from_cells(&self, cells: &[usize], spins: &[u8]) -> Result<TorusContour> {
        // unwrap along king steps; the diameter bound makes this consistent
        let mut lifted: BTreeMap<usize, Point> = BTreeMap::new();
        lifted.insert(cells[0], self.window.point(cells[0]));
        let mut stack = vec![cells[0]];
        let offsets = king_offsets(self.dim);
        while let Some(i) = stack.pop() {
            let p = lifted[&i];
            for d in &offsets {
                let q = p.offset(d);
                let j = self.window.index(&q).expect("torus windows wrap");
                if cells.binary_search(&j).is_ok() && !lifted.contains_key(&j) {
                    lifted.insert(j, q);
                    stack.push(j);
                }
            }
        }
        let support: Vec<Point> = cells.iter().map(|i| lifted[i]).collect();
        let s: Vec<u8> = cells.iter().map(|&i| spins[i]).collect();
        let lift = Contour::from_parts(self.system, self.dim, &support, &s)
            .ok_or_else(|| Error::Internal(format!("small component {support:?} does not lift to a contour")))?;
        let mut in_support = vec![false; self.window.len()];
        for &i in cells {
            in_support[i] = true;
        }
        if self.energy(cells, &in_support, spins)? != lift.energy {
            return Err(Error::Internal("lifted energy differs from the torus energy".into()));
        }
        Ok(TorusContour::small(lift, self.n))
    }

    fn large_from_cells(&self, cells: &[usize], spins: &[u8]) -> Result<TorusContour> {
        let mut in_support = vec![false; self.window.len()];
        for &i in cells {
            in_support[i] = true;
        }
        let energy = self.energy(cells, &in_support, spins)?;
        let (comp, count) = self.window.label_components(&in_support);
        let mut fits = vec![vec![true; self.grounds.len()]; count];
        for &i in cells {
            for &j in &self.closed[i] {
                if let Some(k) = comp[j] {
                    for (g, ground) in self.ground.iter().enumerate() {
                        if ground[i] != spins[i] {
                            fits[k][g] = false;
                        }
                    }
                }
            }
        }
        let mut interiors: Vec<Interior> = Vec::with_capacity(count);
        for f in &fits {
            let g = f
                .iter()
                .position(|&ok| ok)
                .ok_or_else(|| Error::Internal("large contour collar matches no ground state".into()))?;
            interiors.push(Interior { cells: Vec::new(), label: self.grounds[g] });
        }
        for i in 0..self.window.len() {
            if let Some(k) = comp[i] {
                interiors[k].cells.push(self.window.point(i));
            }
        }
        interiors.sort_by(|a, b| a.cells.cmp(&b.cells));
        Ok(TorusContour {
            n: self.n,
            kind: ContourKind::Large,
            support: cells.iter().map(|&i| self.window.point(i)).collect(),
            spins: cells.iter().map(|&i| spins[i]).collect(),
            energy,
            phi: None,
            interiors,
            lift: None,
        })
    }

    /// Ground state of the exterior of an all-small configuration: the phase
    /// of any cell outside every cov.
    fn exterior_phase(&self, spins: &[u8], contours: &[TorusContour]) -> Result<u8> {
        let mut covered = vec![false; self.window.len()];
        for c in contours {
            for p in c.cov() {
                covered[self.window.index(&p).expect("torus windows wrap")] = true;
            }
        }
        let i = covered
            .iter()
            .position(|&c| !c)
            .ok_or_else(|| Error::Internal("small contours cover the whole torus".into()))?;
        let g = self.phase_at(spins, i).ok_or_else(|| Error::Internal("uncovered cell is incorrect".into()))?;
        Ok(self.grounds[g])
    }

    fn rebuild(&self, phi: u8, contours: &[TorusContour]) -> Result<Vec<u8>> {
        let g = self.grounds.iter().position(|&x| x == phi).expect("phi is a ground state");
        let mut spins = self.ground[g].clone();
        let mut small: Vec<&TorusContour> = Vec::with_capacity(contours.len());
        let mut large = 0;
        for c in contours {
            match c.kind {
                ContourKind::Small => small.push(c),
                ContourKind::Large => {
                    large += 1;
                    for a in &c.interiors {
                        self.paint(&mut spins, &a.cells, a.label);
                    }
                    self.set_support(&mut spins, c);
                }
            }
        }
        if large > 1 {
            return Err(Error::validation("a configuration has at most one large contour"));
        }
        small.sort_by_key(|c| std::cmp::Reverse(c.support.len() + c.interiors.iter().map(|a| a.cells.len()).sum::<usize>()));
        for c in small {
            for a in &c.interiors {
                self.paint(&mut spins, &a.cells, a.label);
            }
            self.set_support(&mut spins, c);
        }
        Ok(spins)
    }

    fn set_support(&self, spins: &mut [u8], c: &TorusContour) {
        for (p, &s) in c.support.iter().zip(&c.spins) {
            spins[self.window.index(p).expect("torus windows wrap")] = s;
        }
    }

    fn paint(&self, spins: &mut [u8], cells: &[Point], label: u8) {
        let g = self.grounds.iter().position(|&x| x == label).expect("label is a ground state");
        for p in cells {
            let i = self.window.index(p).expect("torus windows wrap");
            spins[i] = self.ground[g][i];
        }
    }
}

/// The contours of a torus configuration (cells in lexicographic order):
/// small ones and at most one large one, sorted by kind then support.
pub fn torus_contours_of_config(model: &ContourModel, n: u32, spins: &[u8]) -> Result<Vec<TorusContour>> {
    check_torus(model, n)?;
    let scanner = TorusScanner::new(model, n);
    scanner.check(spins)?;
    Ok(scanner.extract(spins)?.0)
}

/// Rebuilds a configuration from its contours. `phi` is the exterior ground
/// state when every contour is small and is ignored otherwise.
pub fn config_from_torus_contours(model: &ContourModel, n: u32, phi: u8, contours: &[TorusContour]) -> Result<Vec<u8>> {
    check_torus(model, n)?;
    model.check_ground(phi)?;
    TorusScanner::new(model, n).rebuild(phi, contours)
}

/// Brute-force classification of every configuration on T_n.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusCensus {
    pub n: u32,
    pub configurations: u128,
    /// Σ_σ z^{E(σ)} over all configurations.
    pub total: IntPoly,
    /// Configurations with a large contour: Z^big(T_n, z).
    pub big: IntPoly,
    /// Per ground state: configurations whose contours are all small and
    /// whose exterior is in that ground state.
    pub small: Vec<(u8, IntPoly)>,
    /// Σ over the contour sets of all configurations, the empty set once.
    pub matching: IntPoly,
    /// Whether each configuration is rebuilt from its contour set, so that
    /// distinct non-ground configurations have distinct contour sets.
    pub injective: bool,
    /// Whether every external small contour has the type of its exterior.
    pub externals_match: bool,
    /// Most components of diameter ≥ n/2 seen in one configuration.
    pub max_large_components: usize,
}

impl TorusCensus {
    /// (|Ξ| − 1) + Σ_{Γ matching} z^{‖Γ‖}.
    pub fn matching_form(&self) -> IntPoly {
        let mut c = self.matching.0.clone();
        c[0] += self.small.len() as i128 - 1;
        IntPoly(c)
    }
}

#[derive(Default)]
struct Tally {
    configurations: u128,
    total: BTreeMap<usize, i128>,
    big: BTreeMap<usize, i128>,
    small: BTreeMap<(u8, usize), i128>,
    matching: BTreeMap<usize, i128>,
    injective: bool,
    externals_match: bool,
    max_large: usize,
    error: Option<Error>,
}

impl Tally {
    fn new() -> Self {
        Tally { injective: true, externals_match: true, ..Default::default() }
    }

    fn merge(mut self, other: Tally) -> Tally {
        self.configurations += other.configurations;
        for (dst, src) in [(&mut self.total, other.total), (&mut self.big, other.big), (&mut self.matching, other.matching)] {
            for (k, v) in src {
                *dst.entry(k).or_insert(0) += v;
            }
        }
        for (k, v) in other.small {
            *self.small.entry(k).or_insert(0) += v;
        }
        self.injective &= other.injective;
        self.externals_match &= other.externals_match;
        self.max_large = self.max_large.max(other.max_large);
        self.error = self.error.or(other.error);
        self
    }
}

fn poly(h: &BTreeMap<usize, i128>) -> IntPoly {
    let deg = h.keys().next_back().copied().unwrap_or(0);
    let mut c = vec![0i128; deg + 1];
    for (&k, &v) in h {
        c[k] += v;
    }
    IntPoly(c)
}

fn classify(model: &ContourModel, scanner: &TorusScanner, tally: &mut Tally, spins: &[u8]) -> Result<()> {
    let (contours, large_components) = scanner.extract(spins)?;
    let e = scanner.config_energy(spins);
    if contours.iter().map(|c| c.energy).sum::<usize>() != e {
        return Err(Error::Internal("contour energies do not add up to the configuration energy".into()));
    }
    tally.configurations += 1;
    tally.max_large = tally.max_large.max(large_components);
    *tally.total.entry(e).or_insert(0) += 1;
    if !contours.is_empty() {
        *tally.matching.entry(e).or_insert(0) += 1;
    }
    let phi = if contours.iter().any(|c| c.kind == ContourKind::Large) {
        *tally.big.entry(e).or_insert(0) += 1;
        model.ground_states()[0]
    } else {
        let phi = scanner.exterior_phase(spins, &contours)?;
        *tally.small.entry((phi, e)).or_insert(0) += 1;
        let covs: Vec<Vec<Point>> = contours.iter().map(|c| c.cov()).collect();
        for (i, c) in contours.iter().enumerate() {
            let inside = covs
                .iter()
                .enumerate()
                .any(|(j, cov)| j != i && c.support.iter().all(|p| cov.binary_search(p).is_ok()));
            if !inside && c.phi != Some(phi) {
                tally.externals_match = false;
            }
        }
        phi
    };
    if scanner.rebuild(phi, &contours)? != spins {
        tally.injective = false;
    }
    Ok(())
}

/// Runs `visit` on every admissible configuration of T_n in parallel blocks.
fn fold_configs(model: &ContourModel, n: u32, cap: u128, visit: impl Fn(&mut Tally, &[u8]) + Sync) -> Result<Tally> {
    let region = Region::torus(model.dim, n)?;
    match model.system {
        SpinSystem::Potts { .. } => {
            let space = PaddedSpace::new(model.system, &region, None);
            space.fold(cap, Tally::new, |t, s| visit(t, s), Tally::merge)
        }
        SpinSystem::HardCore => {
            let scanner = TorusScanner::new(model, n);
            let len = scanner.window.len();
            let lower: Vec<Vec<usize>> =
                (0..len).map(|i| scanner.lattice[i].iter().copied().filter(|&j| j < i).collect()).collect();
            // independent prefixes, then one depth-first search per prefix
            let depth = len.min(14);
            let mut prefixes = vec![Vec::new()];
            for i in 0..depth {
                let mut next = Vec::new();
                for p in prefixes {
                    let mut a: Vec<u8> = p;
                    a.push(0);
                    let ok = !lower[i].iter().any(|&j| a[j] == 1);
                    if ok {
                        let mut b = a.clone();
                        b[i] = 1;
                        next.push(b);
                    }
                    next.push(a);
                }
                prefixes = next;
            }
            let seen = AtomicU64::new(0);
            let capped = cap.min(u64::MAX as u128) as u64;
            let parts: Vec<Result<Tally>> = prefixes
                .into_par_iter()
                .map(|prefix| {
                    let mut tally = Tally::new();
                    let mut spins = prefix.clone();
                    spins.resize(len, 0);
                    let mut overflow = false;
                    dfs(&mut spins, prefix.len(), &lower, &mut |s| {
                        if seen.fetch_add(1, AtomicOrdering::Relaxed) >= capped {
                            overflow = true;
                            return false;
                        }
                        visit(&mut tally, s);
                        true
                    });
                    if overflow {
                        return Err(Error::CapExceeded {
                            what: "torus configurations".into(),
                            needed: cap + 1,
                            cap,
                        });
                    }
                    Ok(tally)
                })
                .collect();
            let mut out = Tally::new();
            for p in parts {
                out = out.merge(p?);
            }
            Ok(out)
        }
    }
}

/// Depth-first enumeration of independent sets extending `spins[..i]`.
/// Stops early when `visit` returns false.
fn dfs(spins: &mut [u8], i: usize, lower: &[Vec<usize>], visit: &mut dyn FnMut(&[u8]) -> bool) -> bool {
    if i == spins.len() {
        return visit(spins);
    }
    spins[i] = 0;
    if !dfs(spins, i + 1, lower, visit) {
        return false;
    }
    if !lower[i].iter().any(|&j| spins[j] == 1) {
        spins[i] = 1;
        let go = dfs(spins, i + 1, lower, visit);
        spins[i] = 0;
        return go;
    }
    true
}

/// Classifies every configuration of T_n (at most `cap` of them).
pub fn torus_census_with_cap(model: &ContourModel, n: u32, cap: u128) -> Result<TorusCensus> {
    check_torus(model, n)?;
    let scanner = TorusScanner::new(model, n);
    let tally = fold_configs(model, n, cap, |t, s| {
        if t.error.is_none() {
            if let Err(e) = classify(model, &scanner, t, s) {
                t.error = Some(e);
            }
        }
    })?;
    if let Some(e) = tally.error {
        return Err(e);
    }
    let mut matching = tally.matching.clone();
    *matching.entry(0).or_insert(0) += 1;
    let small = model
        .ground_states()
        .into_iter()
        .map(|phi| {
            let h: BTreeMap<usize, i128> =
                tally.small.iter().filter(|((p, _), _)| *p == phi).map(|((_, e), v)| (*e, *v)).collect();
            (phi, poly(&h))
        })
        .collect();
    Ok(TorusCensus {
        n,
        configurations: tally.configurations,
        total: poly(&tally.total),
        big: poly(&tally.big),
        small,
        matching: poly(&matching),
        injective: tally.injective,
        externals_match: tally.externals_match,
        max_large_components: tally.max_large,
    })
}

pub fn torus_census(model: &ContourModel, n: u32) -> Result<TorusCensus> {
    torus_census_with_cap(model, n, DEFAULT_STATE_CAP)
}

/// Z^big(T_n, z) by brute force.
pub fn torus_z_big_exact(model: &ContourModel, n: u32) -> Result<IntPoly> {
    Ok(torus_census(model, n)?.big)
}

/// Accuracy floor and regime overrides for the torus algorithms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorusOptions {
    /// c in the floor ε ≥ e^{−cn}.
    pub floor_constant: f64,
    /// Compute even below the floor or outside the zero-free disc, flagging the result.
    pub force: bool,
}

impl Default for TorusOptions {
    fn default() -> Self {
        TorusOptions { floor_constant: DEFAULT_FLOOR_CONSTANT, force: false }
    }
}

impl TorusOptions {
    pub fn floor(&self, n: u32) -> f64 {
        (-self.floor_constant * n as f64).exp()
    }

    /// Whether ε is below the floor; an error unless forced.
    fn check_floor(&self, n: u32, epsilon: f64) -> Result<bool> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::validation(format!("epsilon must be in (0, 1), got {epsilon}")));
        }
        let below = epsilon < self.floor(n);
        if below && !self.force {
            return Err(Error::validation(format!(
                "epsilon {epsilon} is below the torus floor e^(-{}·{n}) = {:.4}; pass --force to compute anyway",
                self.floor_constant,
                self.floor(n)
            )));
        }
        Ok(below)
    }
}

/// Σ_φ exp(T_m) over the ground states. The large-contour term is left out.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusApproximation {
    pub value: f64,
    pub log_value: f64,
    /// log of the approximation of each Z^φ(T_n, z).
    pub phases: Vec<(u8, f64)>,
    pub m_used: usize,
    /// z was outside the zero-free disc.
    pub forced: bool,
    /// ε was below the floor e^{−cn}.
    pub below_floor: bool,
    pub floor: f64,
    /// Always true: Z^big is dropped, which is only justified when every
    /// ground state is stable and n is large.
    pub dropped_big_term: bool,
}

pub fn torus_approx_z(
    model: &ContourModel,
    n: u32,
    z: f64,
    epsilon: f64,
    options: TorusOptions,
) -> Result<TorusApproximation> {
    check_torus(model, n)?;
    if !(z >= 0.0 && z.is_finite()) {
        return Err(Error::validation(format!("torus counting needs a real z ≥ 0, got {z}")));
    }
    let below_floor = options.check_floor(n, epsilon)?;
    let forced = z >= model.delta;
    if forced && !options.force {
        return Err(Error::Regime { z, delta: model.delta });
    }
    let delta = if forced { 2.0 * z } else { model.delta };
    let region = Region::torus(model.dim, n)?;
    let m = truncation_order(model.degree(&region), z, delta, epsilon)?;
    let engine = ContourEngine::new(*model, m);
    let phases: Vec<(u8, f64)> = model
        .ground_states()
        .into_iter()
        .map(|phi| Ok((phi, torus_outer_model(&engine, n, phi)?.log_z.evaluate_real(z))))
        .collect::<Result<_>>()?;
    let top = phases.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let log_value = top + phases.iter().map(|p| (p.1 - top).exp()).sum::<f64>().ln();
    Ok(TorusApproximation {
        value: log_value.exp(),
        log_value,
        phases,
        m_used: m,
        forced,
        below_floor,
        floor: options.floor(n),
        dropped_big_term: true,
    })
}

/// A configuration on T_n drawn through its matching contour set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TorusSample {
    pub phi: u8,
    /// Spins in lexicographic cell order.
    pub spins: Vec<u8>,
    /// Every sampled contour, sorted.
    pub contours: Vec<TorusContour>,
    pub provenance: Vec<Level>,
}

impl TorusSample {
    /// Whether re-extracting the configuration gives back the sampled contours.
    pub fn consistent(&self, model: &ContourModel, n: u32) -> Result<bool> {
        Ok(torus_contours_of_config(model, n, &self.spins)? == self.contours)
    }
}

/// Ground state chosen in proportion to approximate Z^φ(T_n), then outer
/// small contours, then every interior by the planar sampler.
pub struct TorusSampler {
    model: ContourModel,
    n: u32,
    inner: ContourSampler,
    phases: Vec<(u8, f64, Arc<RegionTable>)>,
    pub below_floor: bool,
}

impl TorusSampler {
    pub fn new(model: &ContourModel, n: u32, z: f64, epsilon: f64, options: TorusOptions) -> Result<Self> {
        check_torus(model, n)?;
        let below_floor = options.check_floor(n, epsilon)?;
        let region = Region::torus(model.dim, n)?;
        let inner = ContourSampler::unchecked(model, &region, model.ground_states()[0], z, epsilon)?;
        let phases = model
            .ground_states()
            .into_iter()
            .map(|phi| {
                let outer = Arc::new(torus_outer_model(inner.engine(), n, phi)?);
                let log_z = outer.log_z.evaluate_real(z);
                Ok((phi, log_z, Arc::new(inner.build_table(outer)?)))
            })
            .collect::<Result<_>>()?;
        Ok(TorusSampler { model: *model, n, inner, phases, below_floor })
    }

    pub fn order(&self) -> usize {
        self.inner.order
    }

    /// Probability of each ground state.
    pub fn phase_law(&self) -> Vec<(u8, f64)> {
        let top = self.phases.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = self.phases.iter().map(|p| (p.1 - top).exp()).sum();
        self.phases.iter().map(|p| (p.0, (p.1 - top).exp() / total)).collect()
    }

    pub fn sample(&self, seed: u64, draw: u64) -> Result<TorusSample> {
        let law: Vec<f64> = self.phase_law().iter().map(|p| p.1).collect();
        let k = categorical(&law, &mut substream(seed, &[draw, u64::MAX]));
        let (phi, _, table) = &self.phases[k];
        let chosen: Vec<Contour> = self
            .inner
            .draw_outer(table, seed, &[draw, 1])?
            .into_iter()
            .map(|i| table.outer.contours[i].clone())
            .collect();
        let window = Window::torus(self.model.dim, self.n);
        let mut spins = vec![u8::MAX; window.len()];
        for (i, s) in spins.iter_mut().enumerate() {
            *s = self.model.system.ground_spin(*phi, &window.point(i));
        }
        let mut provenance = Vec::new();
        let mut calls = 1u64;
        let mut set = |p: &Point, s: u8| spins[window.index(p).expect("torus windows wrap")] = s;
        self.inner.descend(chosen, *phi, seed, draw, &mut calls, &mut set, &mut provenance)?;
        let mut contours: Vec<TorusContour> = provenance
            .iter()
            .flat_map(|l| l.contours.iter().map(|c| TorusContour::small(c.clone(), self.n)))
            .collect();
        contours.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        Ok(TorusSample { phi: *phi, spins, contours, provenance })
    }
}

/// One draw from the matching-contour law on T_n.
pub fn torus_sample(
    model: &ContourModel,
    n: u32,
    z: f64,
    epsilon: f64,
    options: TorusOptions,
    seed: u64,
) -> Result<TorusSample> {
    TorusSampler::new(model, n, z, epsilon, options)?.sample(seed, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::brute_z_spin;
    use crate::scalar::{Coeff, Rational};

    fn series_poly(s: &ExactSeries) -> Vec<Rational> {
        let mut c = s.coeffs().to_vec();
        while c.last().is_some_and(|x| *x == Rational::from(0)) {
            c.pop();
        }
        c
    }

    fn int_poly(p: &IntPoly) -> Vec<Rational> {
        let mut c: Vec<Rational> = p.0.iter().map(|&x| Rational::from_i128(x)).collect();
        while c.last().is_some_and(|x| *x == Rational::from(0)) {
            c.pop();
        }
        c
    }

    #[test]
    fn small_shapes_at_six() {
        let potts = ContourModel::potts(2, 2).unwrap();
        let shapes = small_contour_shapes(&potts, 6).unwrap();
        // a single flipped spin per type
        assert_eq!(shapes.len(), 2);
        assert!(shapes.iter().all(|c| c.size() == 9 && c.energy == 4));
        assert_eq!(small_torus_contours(&potts, 6, 0).unwrap().len(), 36);
        let hc = ContourModel::hardcore(2).unwrap();
        assert_eq!(small_torus_contours(&hc, 6, 0).unwrap().len(), 18);
        assert_eq!(small_torus_contours(&hc, 6, 1).unwrap().len(), 18);
        assert!(small_contour_shapes(&potts, 4).unwrap().is_empty());
        assert!(small_contour_shapes(&potts, 3).is_err());
        assert!(small_contour_shapes(&hc, 5).is_err());
    }

    #[test]
    fn decomposition_at_four() {
        for model in [ContourModel::potts(2, 2).unwrap(), ContourModel::hardcore(2).unwrap()] {
            let census = torus_census(&model, 4).unwrap();
            assert!(census.injective && census.externals_match);
            assert_eq!(census.total, census.matching_form());
            let region = Region::torus(2, 4).unwrap();
            assert_eq!(census.total, brute_z_spin(model.system, &region, None).unwrap());
            let d = torus_full_degree(&model, 4);
            let mut sum = int_poly(&census.big);
            sum.resize(d + 1, Rational::from(0));
            for phi in model.ground_states() {
                let zs = torus_z_small(&model, 4, phi, d).unwrap();
                for (k, c) in zs.coeffs().iter().enumerate() {
                    sum[k] = sum[k].clone() + c.clone();
                }
            }
            while sum.last().is_some_and(|x| *x == Rational::from(0)) {
                sum.pop();
            }
            assert_eq!(sum, int_poly(&census.total), "{}", model.system);
            assert_eq!(census.big.0[0], 0);
        }
    }

    #[test]
    fn hardcore_six_small_part_matches_census() {
        // the small part has degree 1 here, so order 8 already shows every
        // non-zero coefficient and a run of zeros beyond it
        let model = ContourModel::hardcore(2).unwrap();
        let census = torus_census(&model, 6).unwrap();
        assert_eq!(census.configurations, 2_406_862);
        assert!(census.injective && census.externals_match);
        assert_eq!(census.total, census.matching_form());
        for (phi, brute) in &census.small {
            assert_eq!(brute.0, vec![1, 18]);
            let zs = torus_z_small(&model, 6, *phi, 8).unwrap();
            assert_eq!(series_poly(&zs), int_poly(brute));
        }
    }

    #[test]
    fn z_zero_gives_ground_state_count() {
        let model = ContourModel::potts(3, 2).unwrap();
        let a = torus_approx_z(&model, 6, 0.0, 0.6, TorusOptions::default()).unwrap();
        assert!((a.value - 3.0).abs() < 1e-12);
        assert!(a.dropped_big_term);
        let small = torus_z_small(&model, 6, 0, 3).unwrap();
        assert_eq!(small.coeff(0), Rational::from(1));
        assert_eq!(small.coeff(3), Rational::from(0));
    }

    #[test]
    fn floor_is_enforced() {
        let model = ContourModel::potts(2, 2).unwrap();
        assert!(matches!(
            torus_approx_z(&model, 6, 0.01, 0.05, TorusOptions::default()),
            Err(Error::Validation(_))
        ));
        let forced = torus_approx_z(&model, 6, 0.01, 0.05, TorusOptions { force: true, ..Default::default() }).unwrap();
        assert!(forced.below_floor && !forced.forced);
        let p = &forced.phases;
        assert!((p[0].1 - p[1].1).abs() < 1e-12);
    }

    #[test]
    fn sampler_matches_single_flip_law() {
        // Z^φ(T_6) = 1 + 36 z^4. A raised δ keeps the expansion order low;
        // z = 0.3 is inside the true radius (36 z^4 < 1).
        let model = ContourModel::potts(2, 2).unwrap().with_delta(10.0).unwrap();
        let z = 0.3;
        let s = TorusSampler::new(&model, 6, z, 0.9, TorusOptions::default()).unwrap();
        let draws = 4000;
        let mut flips = 0;
        let mut reds = 0;
        for draw in 0..draws {
            let x = s.sample(7, draw).unwrap();
            assert!(x.consistent(&model, 6).unwrap());
            assert!(x.contours.len() <= 1);
            flips += x.contours.len();
            reds += usize::from(x.phi == 0);
        }
        let p = 36.0 * z.powi(4) / (1.0 + 36.0 * z.powi(4));
        let f = flips as f64 / draws as f64;
        assert!((f - p).abs() < 4.0 * (p * (1.0 - p) / draws as f64).sqrt(), "{f} vs {p}");
        let r = reds as f64 / draws as f64;
        assert!((r - 0.5).abs() < 4.0 * (0.25 / draws as f64).sqrt());
        assert_eq!(s.sample(7, 3).unwrap(), s.sample(7, 3).unwrap());
    }

    #[test]
    fn tiny_z_picks_uniform_ground_state() {
        let model = ContourModel::potts(3, 2).unwrap();
        let s = TorusSampler::new(&model, 4, 1e-6, 0.9, TorusOptions::default()).unwrap();
        for (_, p) in s.phase_law() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        let x = s.sample(1, 0).unwrap();
        assert!(x.contours.is_empty());
        assert!(x.spins.iter().all(|&c| c == x.phi));
    }
}
