//! Truncated cluster expansion of log Z for an abstract polymer system.
//!
//! A [`PolymerSystem`] holds the weight series of finitely many polymers, truncated
//! at order `m`, and their incompatibility relation. Its log-partition function is
//!
//! ```text
//! log Z = Σ_{clusters X} φ(H(X)) / ∏_γ mult_γ(X)! · ∏_{γ ∈ X} w(γ)
//! ```
//!
//! Clusters are grouped by their set of distinct polymers D (a connected set in
//! the incompatibility graph). For each D the multiplicity vectors are either
//! summed one by one ([`Evaluation::Explicit`]), or the whole group is evaluated
//! at once from logarithms of small partition functions ([`Evaluation::Regrouped`]):
//! by Möbius inversion over subsets of D,
//!
//! ```text
//! S_D = Σ_{C ⊆ D connected, N[C] ⊇ D} (−1)^{|D∖C|} log Z_C .
//! ```
//!
//! Summing S_D over all D and swapping the order collapses the expansion to one
//! term per connected set C ([`Evaluation::Supports`]):
//!
//! ```text
//! log Z = Σ_{C connected} a(C) log Z_C,   a(C) = Σ_{B ⊆ N(C)∖C, val(C ∪ B) ≤ m} (−1)^{|B|} ,
//! ```
//!
//! since every D between C and N[C] is connected. All evaluations give the same
//! coefficients exactly. `Auto` uses the collapsed form on exact backends when
//! the supports are small enough, and otherwise picks the cheaper of the two
//! per-group evaluations.
//!
//! [`Evaluation::Direct`] bypasses clusters: it sums the weights of compatible
//! families within the order budget and takes the formal logarithm. It is only
//! cheap when incompatibility is dense, as for contours in a small region, and
//! [`PolymerSystem::log_z_adaptive`] uses it there.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::polymer::{Polymer, PolymerModel};
use crate::scalar::{Coeff, Rational};
use crate::series::TruncatedSeries;
use crate::trees;
use crate::ursell::ursell_typed;

/// How the multiplicity sum over each distinct-polymer set is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Evaluation {
    #[default]
    Auto,
    Explicit,
    Regrouped,
    Supports,
    Direct,
}

/// How clusters are listed by [`PolymerSystem::clusters`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Enumeration {
    /// Label rooted unlabelled trees with polymers, then deduplicate multisets.
    Trees,
    /// Grow connected sets of distinct polymers, then add multiplicities.
    Growth,
}

/// A cluster: a multiset of polymers whose incompatibility graph is connected.
#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    /// (polymer index, multiplicity), sorted by index.
    pub members: Vec<(usize, u32)>,
    /// Incompatibility graph with one vertex per occurrence.
    pub h: Graph,
    pub ursell: i128,
    /// 1/∏ mult!
    pub mult_factor: Rational,
}

impl Cluster {
    pub fn size(&self) -> usize {
        self.members.iter().map(|&(_, n)| n as usize).sum()
    }
}

/// Largest group size handled by the regrouped evaluator.
const REGROUP_MAX: usize = 24;

/// Largest support handled by the collapsed evaluator (u32 masks).
const SUPPORT_MAX: usize = 32;

/// Family count up to which [`PolymerSystem::log_z_adaptive`] sums directly.
pub const DIRECT_CAP: usize = 1 << 16;

/// Polymers sorted by valuation, with incompatibility rows stored as bitsets
/// truncated to the partners that fit in the order budget.
#[derive(Clone, Debug)]
pub struct PolymerSystem<S: Coeff> {
    order: usize,
    origin: Vec<usize>,
    val: Vec<usize>,
    weights: Vec<Vec<(usize, S)>>,
    /// bound[r] = number of polymers with valuation ≤ r
    bound: Vec<usize>,
    rows: Vec<Vec<u64>>,
}

impl<S: Coeff> PolymerSystem<S> {
    /// Builds the system from weights (each of order ≥ `order`) and a symmetric
    /// incompatibility predicate on distinct indices. Polymers whose weight
    /// vanishes up to `order` are dropped.
    pub fn new(
        order: usize,
        weights: &[TruncatedSeries<S>],
        incompatible: impl Fn(usize, usize) -> bool + Sync,
    ) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, w) in weights.iter().enumerate() {
            if w.order() < order {
                return Err(Error::validation(format!(
                    "weight {i} has order {} below the requested order {order}",
                    w.order()
                )));
            }
            let terms: Vec<(usize, S)> = (0..=order)
                .filter_map(|k| {
                    let c = w.coeff(k);
                    (!c.is_zero()).then_some((k, c))
                })
                .collect();
            match terms.first() {
                None => continue,
                Some(&(0, _)) => {
                    return Err(Error::validation(format!("weight {i} has a non-zero constant term")));
                }
                Some(&(v, _)) => entries.push((v, i, terms)),
            }
        }
        entries.sort_by_key(|e| (e.0, e.1));
        let val: Vec<usize> = entries.iter().map(|e| e.0).collect();
        let origin: Vec<usize> = entries.iter().map(|e| e.1).collect();
        let weights: Vec<Vec<(usize, S)>> = entries.into_iter().map(|e| e.2).collect();
        let bound = bounds(&val, order);
        let rows = (0..val.len())
            .into_par_iter()
            .map(|i| {
                let lim = bound[order - val[i]];
                let mut row = vec![0u64; lim.div_ceil(64)];
                for j in 0..lim {
                    if j != i && incompatible(origin[i], origin[j]) {
                        row[j / 64] |= 1 << (j % 64);
                    }
                }
                row
            })
            .collect();
        Ok(PolymerSystem { order, origin, val, weights, bound, rows })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of polymers with a non-zero weight up to the order.
    pub fn len(&self) -> usize {
        self.val.len()
    }

    pub fn is_empty(&self) -> bool {
        self.val.is_empty()
    }

    /// Original indices of the retained polymers, in internal order.
    pub fn indices(&self) -> &[usize] {
        &self.origin
    }

    /// Sub-system on the polymers whose original index passes `keep`.
    pub fn restrict(&self, keep: impl Fn(usize) -> bool) -> Self {
        let kept: Vec<usize> = (0..self.len()).filter(|&p| keep(self.origin[p])).collect();
        let mut new_pos = vec![usize::MAX; self.len()];
        for (q, &p) in kept.iter().enumerate() {
            new_pos[p] = q;
        }
        let val: Vec<usize> = kept.iter().map(|&p| self.val[p]).collect();
        let bound = bounds(&val, self.order);
        let rows = kept
            .iter()
            .map(|&p| {
                let lim = bound[self.order - self.val[p]];
                let mut row = vec![0u64; lim.div_ceil(64)];
                for j in set_bits(&self.rows[p]) {
                    let q = new_pos[j];
                    if q != usize::MAX {
                        row[q / 64] |= 1 << (q % 64);
                    }
                }
                row
            })
            .collect();
        PolymerSystem {
            order: self.order,
            origin: kept.iter().map(|&p| self.origin[p]).collect(),
            weights: kept.iter().map(|&p| self.weights[p].clone()).collect(),
            val,
            bound,
            rows,
        }
    }

    fn incompatible_pos(&self, i: usize, j: usize) -> bool {
        i == j || self.rows[i].get(j / 64).is_some_and(|w| w >> (j % 64) & 1 == 1)
    }

    fn max_cluster_size(&self) -> usize {
        match self.val.first() {
            Some(&v) => self.order / v,
            None => 0,
        }
    }

    /// Calls `f(members, remaining_budget, product_of_weights)` on every connected
    /// set of distinct polymers whose valuations sum to at most the order, once
    /// per set, with `root` as its least internal index.
    fn grow_from(&self, root: usize, f: &mut impl FnMut(&[usize], usize, &[S])) {
        let m = self.order;
        let r0 = m - self.val[root];
        let words = self.bound[r0].div_ceil(64).max(1);
        let depth = m / self.val[root] + 1;
        let mut g = Grower {
            sys: self,
            sub: vec![root],
            prods: vec![vec![S::zero(); m + 1]; depth + 1],
            exts: vec![vec![0u64; words]; depth + 1],
            covs: vec![vec![0u64; words]; depth + 1],
        };
        let mut unit = vec![S::zero(); m + 1];
        unit[0] = S::one();
        mul_sparse(&unit, &self.weights[root], &mut g.prods[0]);
        // everything up to and including root is out of bounds for extension
        for t in 0..=root.min(words * 64 - 1) {
            g.covs[0][t / 64] |= 1 << (t % 64);
        }
        let row = &self.rows[root];
        for t in 0..words {
            let r = row.get(t).copied().unwrap_or(0);
            g.exts[0][t] = r & !g.covs[0][t];
            g.covs[0][t] |= r;
        }
        g.node(0, r0, f);
    }

    /// Every budgeted connected set of distinct polymers, as sorted original indices.
    pub fn supports(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for root in 0..self.len() {
            self.grow_from(root, &mut |d, _, _| {
                let mut s: Vec<usize> = d.iter().map(|&p| self.origin[p]).collect();
                s.sort_unstable();
                out.push(s);
            });
        }
        out.sort();
        out
    }

    /// Coefficients 0..=m of log Z (the constant term is zero).
    pub fn log_z(&self) -> Result<TruncatedSeries<S>> {
        self.log_z_with(Evaluation::Auto)
    }

    pub fn log_z_with(&self, how: Evaluation) -> Result<TruncatedSeries<S>> {
        let m = self.order;
        if self.max_cluster_size() > 64 {
            return Err(Error::CapExceeded {
                what: "cluster size".into(),
                needed: self.max_cluster_size() as u128,
                cap: 64,
            });
        }
        let supports_fit = self.max_cluster_size().min(self.len()) <= SUPPORT_MAX;
        match how {
            Evaluation::Supports if !supports_fit => {
                return Err(Error::CapExceeded {
                    what: "collapsed cluster support".into(),
                    needed: self.max_cluster_size().min(self.len()) as u128,
                    cap: SUPPORT_MAX as u128,
                });
            }
            Evaluation::Supports => return self.log_z_by_supports(),
            Evaluation::Direct => {
                return self.log_z_direct(usize::MAX)?.ok_or_else(|| Error::Internal("uncapped sum stopped".into()));
            }
            Evaluation::Auto if S::EXACT && supports_fit => return self.log_z_by_supports(),
            _ => {}
        }
        let logs = LogCache::default();
        let roots: Vec<usize> = (0..self.len()).collect();
        let blocks: Vec<Result<Vec<S>>> = roots
            .par_chunks(16)
            .map(|chunk| {
                let mut acc = vec![S::zero(); m + 1];
                let mut err = None;
                for &root in chunk {
                    self.grow_from(root, &mut |d, r, prod| {
                        if err.is_some() {
                            return;
                        }
                        if let Err(e) = self.evaluate_group(d, r, prod, how, &logs, &mut acc) {
                            err = Some(e);
                        }
                    });
                }
                match err {
                    Some(e) => Err(e),
                    None => Ok(acc),
                }
            })
            .collect();
        let mut total = vec![S::zero(); m + 1];
        for b in blocks {
            for (t, c) in total.iter_mut().zip(b?) {
                t.add_assign(&c);
            }
        }
        Ok(TruncatedSeries::from_coeffs(m, total))
    }

    /// log Z by the direct family sum when it has at most `cap` families,
    /// otherwise by the cluster expansion.
    pub fn log_z_adaptive(&self, cap: usize) -> Result<TruncatedSeries<S>> {
        match self.log_z_direct(cap)? {
            Some(t) => Ok(t),
            None => self.log_z(),
        }
    }

    /// None once more than `cap` families have been visited.
    fn log_z_direct(&self, cap: usize) -> Result<Option<TruncatedSeries<S>>> {
        let m = self.order;
        let words = self.len().div_ceil(64).max(1);
        let mut z = vec![S::zero(); m + 1];
        let mut prod = vec![S::one()];
        prod.resize(m + 1, S::zero());
        let mut visited = 0usize;
        let blocked = vec![0u64; words];
        if !self.families(0, m, &prod, &blocked, &mut z, &mut visited, cap) {
            return Ok(None);
        }
        TruncatedSeries::from_coeffs(m, z).log_from_poly().map(Some)
    }

    /// Adds every family extending the current one with indices ≥ `from`.
    #[allow(clippy::too_many_arguments)]
    fn families(
        &self,
        from: usize,
        r: usize,
        prod: &[S],
        blocked: &[u64],
        z: &mut [S],
        visited: &mut usize,
        cap: usize,
    ) -> bool {
        *visited += 1;
        if *visited > cap {
            return false;
        }
        for (a, x) in z.iter_mut().zip(prod) {
            if !x.is_zero() {
                a.add_assign(x);
            }
        }
        let mut next = vec![S::zero(); self.order + 1];
        for i in from..self.bound[r] {
            if blocked[i / 64] >> (i % 64) & 1 == 1 {
                continue;
            }
            let mut b = blocked.to_vec();
            for (t, w) in self.rows[i].iter().enumerate() {
                b[t] |= w;
            }
            mul_sparse(prod, &self.weights[i], &mut next);
            if !self.families(i + 1, r - self.val[i], &next, &b, z, visited, cap) {
                return false;
            }
        }
        true
    }

    fn log_z_by_supports(&self) -> Result<TruncatedSeries<S>> {
        let m = self.order;
        let roots: Vec<usize> = (0..self.len()).collect();
        let blocks: Vec<Result<Vec<S>>> = roots
            .par_chunks(16)
            .map(|chunk| {
                let mut acc = vec![S::zero(); m + 1];
                let mut err = None;
                for &root in chunk {
                    self.grow_from(root, &mut |d, r, _| {
                        if err.is_some() {
                            return;
                        }
                        let a = self.boundary_sign_sum(d, r);
                        if a.is_zero() {
                            return;
                        }
                        let mut members = d.to_vec();
                        members.sort_unstable();
                        match self.log_z_of(&members) {
                            Ok(log) => {
                                for (x, y) in acc.iter_mut().zip(log.coeffs()) {
                                    if !y.is_zero() {
                                        x.add_assign(&y.mul(&a));
                                    }
                                }
                            }
                            Err(e) => err = Some(e),
                        }
                    });
                }
                match err {
                    Some(e) => Err(e),
                    None => Ok(acc),
                }
            })
            .collect();
        let mut total = vec![S::zero(); m + 1];
        for b in blocks {
            for (t, c) in total.iter_mut().zip(b?) {
                t.add_assign(&c);
            }
        }
        Ok(TruncatedSeries::from_coeffs(m, total))
    }

    /// Σ over subsets B of the outer boundary of `d` with val(B) ≤ r of (−1)^{|B|}.
    fn boundary_sign_sum(&self, d: &[usize], r: usize) -> S {
        let mut boundary: Vec<usize> = d
            .iter()
            .flat_map(|&p| set_bits(&self.rows[p]).take_while(|&q| q < self.bound[r]).collect::<Vec<_>>())
            .filter(|q| !d.contains(q))
            .collect();
        boundary.sort_unstable();
        boundary.dedup();
        // coefficients of ∏ (1 − x^{val}) up to x^r
        let mut c = vec![S::zero(); r + 1];
        c[0] = S::one();
        for q in boundary {
            let v = self.val[q];
            for t in (v..=r).rev() {
                let prev = c[t - v].clone();
                if !prev.is_zero() {
                    c[t] = c[t].sub(&prev);
                }
            }
        }
        c.iter().fold(S::zero(), |a, x| a.add(x))
    }

    /// Z up to order m, as exp of the cluster series.
    pub fn partition_function(&self) -> Result<TruncatedSeries<S>> {
        self.log_z()?.poly_from_log()
    }

    fn evaluate_group(
        &self,
        d: &[usize],
        r: usize,
        prod: &[S],
        how: Evaluation,
        logs: &LogCache<S>,
        acc: &mut [S],
    ) -> Result<()> {
        let k = d.len();
        let regroup = match how {
            Evaluation::Explicit => false,
            Evaluation::Regrouped => {
                if k > REGROUP_MAX {
                    return Err(Error::CapExceeded {
                        what: "regrouped cluster support".into(),
                        needed: k as u128,
                        cap: REGROUP_MAX as u128,
                    });
                }
                true
            }
            _ => k <= 20 && multiplicity_count(d.iter().map(|&p| self.val[p]), r, 1 << k) > 1 << k,
        };
        if regroup {
            self.regrouped(d, logs, acc)
        } else {
            let adj: Vec<u64> = (0..k)
                .map(|a| (0..k).filter(|&b| b != a && self.incompatible_pos(d[a], d[b])).fold(0, |m, b| m | 1 << b))
                .collect();
            let mut mult = vec![1u32; k];
            self.multiplicities(0, d, &adj, r, prod.to_vec(), &mut mult, acc)
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn multiplicities(
        &self,
        i: usize,
        d: &[usize],
        adj: &[u64],
        r: usize,
        cur: Vec<S>,
        mult: &mut [u32],
        acc: &mut [S],
    ) -> Result<()> {
        if i == d.len() {
            let phi = ursell_typed(adj, mult)?;
            if phi == 0 {
                return Ok(());
            }
            let mut c = S::from_i128(phi);
            for &n in mult.iter() {
                c = c.div_i64(factorial(n));
            }
            for (a, x) in acc.iter_mut().zip(&cur) {
                if !x.is_zero() {
                    a.add_assign(&x.mul(&c));
                }
            }
            return Ok(());
        }
        let v = self.val[d[i]];
        let mut rr = r;
        let mut s = cur.clone();
        self.multiplicities(i + 1, d, adj, r, cur, mult, acc)?;
        while rr >= v {
            rr -= v;
            let mut next = vec![S::zero(); self.order + 1];
            mul_sparse(&s, &self.weights[d[i]], &mut next);
            s = next;
            mult[i] += 1;
            self.multiplicities(i + 1, d, adj, rr, s.clone(), mult, acc)?;
        }
        mult[i] = 1;
        Ok(())
    }

    fn regrouped(&self, d: &[usize], logs: &LogCache<S>, acc: &mut [S]) -> Result<()> {
        let k = d.len();
        let full: u32 = if k == 32 { u32::MAX } else { (1u32 << k) - 1 };
        let adj: Vec<u32> = (0..k)
            .map(|a| (0..k).filter(|&b| b != a && self.incompatible_pos(d[a], d[b])).fold(0, |m, b| m | 1 << b))
            .collect();
        for c in 1..=full {
            let mut closed = c;
            let mut bits = c;
            while bits != 0 {
                closed |= adj[bits.trailing_zeros() as usize];
                bits &= bits - 1;
            }
            if closed != full || !mask_connected(c, &adj) {
                continue;
            }
            let mut members: Vec<usize> = (0..k).filter(|&a| c >> a & 1 == 1).map(|a| d[a]).collect();
            members.sort_unstable();
            let log = logs.get_or_compute(&members, || self.log_z_of(&members))?;
            let negative = (k - c.count_ones() as usize) % 2 == 1;
            for (a, x) in acc.iter_mut().zip(log.coeffs()) {
                if !x.is_zero() {
                    a.add_assign(&if negative { x.neg() } else { x.clone() });
                }
            }
        }
        Ok(())
    }

    /// log of the partition function of the polymers `members` (internal indices).
    fn log_z_of(&self, members: &[usize]) -> Result<TruncatedSeries<S>> {
        let k = members.len();
        let adj: Vec<u32> = (0..k)
            .map(|a| {
                (0..k)
                    .filter(|&b| b != a && self.incompatible_pos(members[a], members[b]))
                    .fold(0, |m, b| m | 1 << b)
            })
            .collect();
        let mut memo = HashMap::new();
        let full: u32 = if k == 32 { u32::MAX } else { (1u32 << k) - 1 };
        let z = self.independence(full, members, &adj, &mut memo);
        TruncatedSeries::from_coeffs(self.order, z).log_from_poly()
    }

    fn independence(&self, mask: u32, members: &[usize], adj: &[u32], memo: &mut HashMap<u32, Vec<S>>) -> Vec<S> {
        if mask == 0 {
            let mut one = vec![S::zero(); self.order + 1];
            one[0] = S::one();
            return one;
        }
        if let Some(v) = memo.get(&mask) {
            return v.clone();
        }
        let v = mask.trailing_zeros() as usize;
        let rest = mask & !(1 << v);
        let mut out = self.independence(rest, members, adj, memo);
        let with = self.independence(rest & !adj[v], members, adj, memo);
        let mut term = vec![S::zero(); self.order + 1];
        mul_sparse(&with, &self.weights[members[v]], &mut term);
        for (o, t) in out.iter_mut().zip(&term) {
            o.add_assign(t);
        }
        memo.insert(mask, out.clone());
        out
    }

    /// Lists every cluster whose valuations sum to at most the order.
    pub fn clusters(&self, how: Enumeration) -> Result<Vec<Cluster>> {
        let mut multisets: Vec<Vec<usize>> = match how {
            Enumeration::Trees => self.tree_multisets(),
            Enumeration::Growth => {
                let mut out = Vec::new();
                for root in 0..self.len() {
                    self.grow_from(root, &mut |d, r, _| {
                        let mut extra = vec![0usize; d.len()];
                        self.extra_copies(0, d, r, &mut extra, &mut out);
                    });
                }
                out
            }
        };
        multisets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        multisets.into_iter().map(|ms| self.make_cluster(&ms)).collect()
    }

    fn extra_copies(&self, i: usize, d: &[usize], r: usize, extra: &mut [usize], out: &mut Vec<Vec<usize>>) {
        if i == d.len() {
            let mut ms: Vec<usize> = Vec::new();
            for (a, &p) in d.iter().enumerate() {
                ms.extend(std::iter::repeat_n(p, extra[a] + 1));
            }
            ms.sort_unstable();
            out.push(ms);
            return;
        }
        let v = self.val[d[i]];
        let mut rr = r;
        extra[i] = 0;
        self.extra_copies(i + 1, d, r, extra, out);
        while rr >= v {
            rr -= v;
            extra[i] += 1;
            self.extra_copies(i + 1, d, rr, extra, out);
        }
        extra[i] = 0;
    }

    /// Labels rooted unlabelled trees on up to `order / min valuation` vertices so
    /// that adjacent vertices carry incompatible (or equal) polymers.
    fn tree_multisets(&self) -> Vec<Vec<usize>> {
        let mut seen: HashSet<Vec<usize>> = HashSet::new();
        for k in 1..=self.max_cluster_size() {
            trees::for_each_rooted_tree(k, |levels| {
                let parents = trees::parents(levels);
                let mut labels = vec![0usize; k];
                self.label_tree(0, &parents, self.order, &mut labels, &mut seen);
            });
        }
        seen.into_iter().collect()
    }

    fn label_tree(
        &self,
        i: usize,
        parents: &[usize],
        budget: usize,
        labels: &mut [usize],
        seen: &mut HashSet<Vec<usize>>,
    ) {
        if i == parents.len() {
            let mut ms = labels.to_vec();
            ms.sort_unstable();
            seen.insert(ms);
            return;
        }
        let lim = self.bound[budget];
        let candidates: Vec<usize> = if i == 0 {
            (0..lim).collect()
        } else {
            let p = labels[parents[i]];
            (0..lim).filter(|&q| self.incompatible_pos(p, q)).collect()
        };
        for q in candidates {
            labels[i] = q;
            self.label_tree(i + 1, parents, budget - self.val[q], labels, seen);
        }
    }

    /// Builds the cluster for a sorted multiset of internal indices.
    fn make_cluster(&self, ms: &[usize]) -> Result<Cluster> {
        let mut members: Vec<(usize, u32)> = Vec::new();
        for &p in ms {
            match members.last_mut() {
                Some((q, n)) if *q == p => *n += 1,
                _ => members.push((p, 1)),
            }
        }
        let k = members.len();
        let adj: Vec<u64> = (0..k)
            .map(|a| {
                (0..k)
                    .filter(|&b| b != a && self.incompatible_pos(members[a].0, members[b].0))
                    .fold(0, |m, b| m | 1 << b)
            })
            .collect();
        let mult: Vec<u32> = members.iter().map(|&(_, n)| n).collect();
        let ursell = ursell_typed(&adj, &mult)?;
        let mut h = Graph::empty(ms.len());
        for a in 0..ms.len() {
            for b in a + 1..ms.len() {
                if self.incompatible_pos(ms[a], ms[b]) {
                    h.add_edge(a, b);
                }
            }
        }
        let denom: i64 = mult.iter().map(|&n| factorial(n)).product();
        let mut members: Vec<(usize, u32)> = members.into_iter().map(|(p, n)| (self.origin[p], n)).collect();
        members.sort_unstable();
        Ok(Cluster { members, h, ursell, mult_factor: Rational::new(1, denom) })
    }

    /// Σ over the given clusters of φ·mult_factor·∏ w, the literal cluster formula.
    pub fn log_z_from_clusters(&self, clusters: &[Cluster]) -> TruncatedSeries<S> {
        let mut pos = HashMap::new();
        for (p, &o) in self.origin.iter().enumerate() {
            pos.insert(o, p);
        }
        let m = self.order;
        let mut acc = vec![S::zero(); m + 1];
        for c in clusters {
            let mut prod = vec![S::zero(); m + 1];
            prod[0] = S::one();
            let mut coef = S::from_i128(c.ursell);
            for &(o, n) in &c.members {
                let w = &self.weights[pos[&o]];
                for _ in 0..n {
                    let mut next = vec![S::zero(); m + 1];
                    mul_sparse(&prod, w, &mut next);
                    prod = next;
                }
                coef = coef.div_i64(factorial(n));
            }
            for (a, x) in acc.iter_mut().zip(&prod) {
                a.add_assign(&x.mul(&coef));
            }
        }
        TruncatedSeries::from_coeffs(m, acc)
    }
}

fn bounds(val: &[usize], order: usize) -> Vec<usize> {
    (0..=order).map(|r| val.partition_point(|&v| v <= r)).collect()
}

fn set_bits(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    words.iter().enumerate().flat_map(|(t, &w)| {
        let mut w = w;
        std::iter::from_fn(move || {
            if w == 0 {
                return None;
            }
            let b = w.trailing_zeros() as usize;
            w &= w - 1;
            Some(t * 64 + b)
        })
    })
}

fn mask_connected(c: u32, adj: &[u32]) -> bool {
    let start = c & c.wrapping_neg();
    let mut seen = start;
    let mut frontier = start;
    while frontier != 0 {
        let v = frontier.trailing_zeros() as usize;
        frontier &= frontier - 1;
        let new = adj[v] & c & !seen;
        seen |= new;
        frontier |= new;
    }
    seen == c
}

pub(crate) fn factorial(n: u32) -> i64 {
    (1..=n as i64).product()
}

/// Number of vectors e ≥ 0 with Σ val_i e_i ≤ r, saturating at `cap`.
fn multiplicity_count(vals: impl Iterator<Item = usize>, r: usize, cap: u64) -> u64 {
    let mut dp = vec![0u64; r + 1];
    dp[0] = 1;
    for v in vals {
        for t in v..=r {
            dp[t] = (dp[t] + dp[t - v]).min(cap + 1);
        }
    }
    dp.iter().fold(0u64, |a, &b| (a + b).min(cap + 1))
}

/// `out = dense · sparse`, truncated to `out.len()`.
pub(crate) fn mul_sparse<S: Coeff>(dense: &[S], sparse: &[(usize, S)], out: &mut [S]) {
    let m = out.len() - 1;
    out.iter_mut().for_each(|x| *x = S::zero());
    for (i, a) in dense.iter().enumerate() {
        if a.is_zero() {
            continue;
        }
        for (k, c) in sparse {
            if i + k > m {
                break;
            }
            out[i + k].add_assign(&a.mul(c));
        }
    }
}

struct Grower<'a, S: Coeff> {
    sys: &'a PolymerSystem<S>,
    sub: Vec<usize>,
    prods: Vec<Vec<S>>,
    exts: Vec<Vec<u64>>,
    covs: Vec<Vec<u64>>,
}

impl<S: Coeff> Grower<'_, S> {
    /// ESU-style extension: children take one candidate from the current
    /// extension set, which then stays excluded for later siblings.
    fn node(&mut self, depth: usize, r: usize, f: &mut impl FnMut(&[usize], usize, &[S])) {
        f(&self.sub, r, &self.prods[depth]);
        let sys = self.sys;
        let lim = sys.bound[r];
        loop {
            let Some(w) = highest_below(&self.exts[depth], lim) else {
                break;
            };
            self.exts[depth][w / 64] &= !(1 << (w % 64));
            let r2 = r - sys.val[w];
            let lim2 = sys.bound[r2];
            let words = lim2.div_ceil(64);
            let row = &sys.rows[w];
            let (lo, hi) = self.exts.split_at_mut(depth + 1);
            let (clo, chi) = self.covs.split_at_mut(depth + 1);
            for t in 0..words {
                let rw = row.get(t).copied().unwrap_or(0);
                hi[0][t] = lo[depth][t] | (rw & !clo[depth][t]);
                chi[0][t] = clo[depth][t] | rw;
            }
            if lim2 % 64 != 0 && words > 0 {
                hi[0][words - 1] &= (1u64 << (lim2 % 64)) - 1;
            }
            let (plo, phi) = self.prods.split_at_mut(depth + 1);
            mul_sparse(&plo[depth], &sys.weights[w], &mut phi[0]);
            self.sub.push(w);
            self.node(depth + 1, r2, f);
            self.sub.pop();
        }
    }
}

fn highest_below(words: &[u64], lim: usize) -> Option<usize> {
    let top = lim.div_ceil(64).min(words.len());
    for t in (0..top).rev() {
        let mut w = words[t];
        if t == lim / 64 && lim % 64 != 0 {
            w &= (1u64 << (lim % 64)) - 1;
        } else if t * 64 >= lim {
            continue;
        }
        if w != 0 {
            return Some(t * 64 + 63 - w.leading_zeros() as usize);
        }
    }
    None
}

/// Shared cache of log Z_C for the regrouped evaluator.
struct LogCache<S: Coeff> {
    map: Mutex<HashMap<Vec<usize>, Arc<TruncatedSeries<S>>>>,
}

impl<S: Coeff> Default for LogCache<S> {
    fn default() -> Self {
        LogCache { map: Mutex::new(HashMap::new()) }
    }
}

impl<S: Coeff> LogCache<S> {
    fn get_or_compute(
        &self,
        key: &[usize],
        f: impl FnOnce() -> Result<TruncatedSeries<S>>,
    ) -> Result<Arc<TruncatedSeries<S>>> {
        if let Some(v) = self.map.lock().expect("log cache poisoned").get(key) {
            return Ok(v.clone());
        }
        let v = Arc::new(f()?);
        self.map.lock().expect("log cache poisoned").insert(key.to_vec(), v.clone());
        Ok(v)
    }
}

/// Clusters of a model together with the polymer list their indices refer to.
#[derive(Clone, Debug)]
pub struct ClusterListing {
    pub polymers: Vec<Polymer>,
    pub clusters: Vec<Cluster>,
}

/// Every cluster of `model` with total valuation ≤ m.
pub fn enumerate_clusters<S: Coeff>(model: &PolymerModel<S>, m: usize, how: Enumeration) -> Result<ClusterListing> {
    let (polymers, system) = model.system(m)?;
    let clusters = system.clusters(how)?;
    Ok(ClusterListing { polymers, clusters })
}

/// Coefficients of log Z(G, z) up to order m.
pub fn log_z_coefficients<S: Coeff>(model: &PolymerModel<S>, m: usize) -> Result<TruncatedSeries<S>> {
    model.system(m)?.1.log_z()
}

/// Coefficients of log Z(S, z) for the sub-family S of polymers accepted by `keep`.
pub fn log_z_subfamily<S: Coeff>(
    model: &PolymerModel<S>,
    keep: impl Fn(&Polymer) -> bool + Send + Sync + 'static,
    m: usize,
) -> Result<TruncatedSeries<S>> {
    log_z_coefficients(&model.filtered(keep), m)
}

/// Smallest m with m ≥ log(N/ε) / (1 − |z|/δ).
pub fn truncation_order(degree: usize, z: f64, delta: f64, epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::validation(format!("epsilon must be positive, got {epsilon}")));
    }
    if z.abs() >= delta {
        return Err(Error::Regime { z: z.abs(), delta });
    }
    let n = degree.max(1) as f64;
    let m = ((n / epsilon).ln().max(0.0) / (1.0 - z.abs() / delta)).ceil();
    Ok((m as usize).max(1))
}

/// Result of a truncated-Taylor approximation.
#[derive(Clone, Debug, PartialEq)]
pub struct Approximation {
    pub value: f64,
    pub log_value: f64,
    pub m_used: usize,
    /// Set when the point was outside the assumed zero-free disc and `force` was used.
    pub forced: bool,
}

/// exp(T_m(z)) with m from [`truncation_order`]. Refuses |z| ≥ δ unless `force`,
/// in which case the radius is treated as 2|z| (no error bound applies).
pub fn approx_z<S: Coeff>(model: &PolymerModel<S>, z: f64, epsilon: f64, force: bool) -> Result<Approximation> {
    let forced = z.abs() >= model.delta;
    if forced && !force {
        return Err(Error::Regime { z: z.abs(), delta: model.delta });
    }
    let delta = if forced { 2.0 * z.abs() } else { model.delta };
    let m = truncation_order(model.degree(), z, delta, epsilon)?;
    let mut a = approx_z_at_order(model, z, m)?;
    a.forced = forced;
    Ok(a)
}

/// exp(T_m(z)) for an explicit truncation order.
pub fn approx_z_at_order<S: Coeff>(model: &PolymerModel<S>, z: f64, m: usize) -> Result<Approximation> {
    if z == 0.0 {
        return Ok(Approximation { value: 1.0, log_value: 0.0, m_used: m, forced: false });
    }
    let t = log_z_coefficients(model, m)?;
    let log_value = t.evaluate_real(z);
    Ok(Approximation { value: log_value.exp(), log_value, m_used: m, forced: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::ExactSeries;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    /// Hard-core polymers on `g`: one polymer z per vertex, incompatible when adjacent.
    fn hardcore(g: &Graph, m: usize) -> PolymerSystem<Rational> {
        let w = vec![ExactSeries::monomial(m, 1, Rational::from(1)); g.len()];
        PolymerSystem::new(m, &w, |a, b| g.has_edge(a, b)).unwrap()
    }

    fn independence_polynomial(g: &Graph, m: usize) -> ExactSeries {
        let mut c = vec![Rational::from(0); m + 1];
        for mask in 0u32..1 << g.len() {
            let vs: Vec<usize> = (0..g.len()).filter(|&v| mask >> v & 1 == 1).collect();
            if g.edges().iter().all(|&(a, b)| !(vs.contains(&a) && vs.contains(&b))) && vs.len() <= m {
                c[vs.len()] = c[vs.len()].clone() + Rational::from(1);
            }
        }
        ExactSeries::from_coeffs(m, c)
    }

    #[test]
    fn single_vertex_pins_multiplicity_factor() {
        let sys = hardcore(&Graph::empty(1), 3);
        let expect = ExactSeries::from_coeffs(3, vec![q(0, 1), q(1, 1), q(-1, 2), q(1, 3)]);
        for how in [Evaluation::Explicit, Evaluation::Regrouped, Evaluation::Supports, Evaluation::Direct, Evaluation::Auto] {
            assert_eq!(sys.log_z_with(how).unwrap(), expect);
        }
    }

    #[test]
    fn edge_gives_log_one_plus_two_z() {
        let sys = hardcore(&Graph::complete(2), 3);
        let expect = ExactSeries::from_coeffs(3, vec![q(0, 1), q(2, 1), q(-2, 1), q(8, 3)]);
        assert_eq!(sys.log_z().unwrap(), expect);
    }

    #[test]
    fn compatible_pair_never_clusters() {
        let sys = hardcore(&Graph::empty(2), 2);
        let cl = sys.clusters(Enumeration::Trees).unwrap();
        let ms: Vec<Vec<(usize, u32)>> = cl.iter().map(|c| c.members.clone()).collect();
        assert_eq!(ms, vec![vec![(0, 1)], vec![(1, 1)], vec![(0, 2)], vec![(1, 2)]]);
        assert_eq!(cl[2].ursell, -1);
        assert_eq!(cl[2].mult_factor, q(1, 2));
    }

    #[test]
    fn order_one_has_only_singletons() {
        let sys = hardcore(&Graph::cycle(5), 1);
        let cl = sys.clusters(Enumeration::Growth).unwrap();
        assert_eq!(cl.len(), 5);
        assert!(cl.iter().all(|c| c.size() == 1));
    }

    #[test]
    fn tree_and_growth_listings_agree() {
        let g = Graph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 0), (2, 4)]);
        let sys = hardcore(&g, 4);
        let a = sys.clusters(Enumeration::Trees).unwrap();
        let b = sys.clusters(Enumeration::Growth).unwrap();
        assert_eq!(a, b);
        assert_eq!(sys.log_z_from_clusters(&a), sys.log_z_with(Evaluation::Explicit).unwrap());
    }

    #[test]
    fn evaluations_agree_and_match_oracle() {
        let mut g = Graph::empty(9);
        for r in 0..3 {
            for c in 0..3 {
                let v = r * 3 + c;
                if c < 2 {
                    g.add_edge(v, v + 1);
                }
                if r < 2 {
                    g.add_edge(v, v + 3);
                }
            }
        }
        let m = 8;
        let sys = hardcore(&g, m);
        let explicit = sys.log_z_with(Evaluation::Explicit).unwrap();
        assert_eq!(sys.log_z_with(Evaluation::Regrouped).unwrap(), explicit);
        assert_eq!(sys.log_z_with(Evaluation::Supports).unwrap(), explicit);
        assert_eq!(sys.log_z_with(Evaluation::Auto).unwrap(), explicit);
        assert_eq!(explicit.poly_from_log().unwrap(), independence_polynomial(&g, m));
    }

    #[test]
    fn mixed_valuations_agree() {
        let g = Graph::from_edges(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)]);
        let m = 7;
        let w: Vec<ExactSeries> = (0..6)
            .map(|i| ExactSeries::monomial(m, 1 + i % 3, Rational::new(i as i64 + 1, 2)))
            .collect();
        let sys = PolymerSystem::new(m, &w, |a, b| g.has_edge(a, b)).unwrap();
        let explicit = sys.log_z_with(Evaluation::Explicit).unwrap();
        assert_eq!(sys.log_z_with(Evaluation::Supports).unwrap(), explicit);
        assert_eq!(sys.log_z_with(Evaluation::Regrouped).unwrap(), explicit);
        assert_eq!(sys.log_z_with(Evaluation::Direct).unwrap(), explicit);
        assert_eq!(sys.log_z_adaptive(3).unwrap(), explicit);
    }

    #[test]
    fn restriction_is_a_subfamily() {
        let sys = hardcore(&Graph::complete(2), 3);
        let only_first = sys.restrict(|i| i == 0);
        let expect = ExactSeries::from_coeffs(3, vec![q(0, 1), q(1, 1), q(-1, 2), q(1, 3)]);
        assert_eq!(only_first.log_z().unwrap(), expect);
        assert!(sys.restrict(|_| false).log_z().unwrap().is_zero());
    }

    #[test]
    fn supports_are_budgeted_connected_sets() {
        let g = Graph::path(4);
        let sys = hardcore(&g, 3);
        let sets = sys.supports();
        let expect: Vec<Vec<usize>> = g.all_connected_subsets(3).into_iter().collect();
        let mut expect = expect;
        expect.sort();
        assert_eq!(sets, expect);
    }
}
