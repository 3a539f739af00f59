//! The Ursell function φ(H) = Σ_{spanning connected A ⊆ E(H)} (−1)^{|A|}.
//!
//! Three independent routes:
//! * [`ursell_edge_subsets`]: direct enumeration of edge subsets;
//! * [`ursell_deletion_contraction`]: (−1)^{k−1} T_H(1,0) by deletion–contraction;
//! * [`ursell_typed`]: a recursion over vertex subsets that works directly on
//!   clusters with repeated polymers. Cluster sums use this one.
//!
//! [`ursell`] picks between the first two by edge count.

use std::cell::RefCell;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Default cap on |H| for the plain-graph entry points.
pub const DEFAULT_URSELL_CAP: usize = 24;

/// Graphs with at most this many edges go through edge-subset enumeration.
const DIRECT_EDGE_LIMIT: usize = 16;

/// φ(H) for a connected graph with at most [`DEFAULT_URSELL_CAP`] vertices.
pub fn ursell(h: &Graph) -> Result<i128> {
    ursell_capped(h, DEFAULT_URSELL_CAP)
}

pub fn ursell_capped(h: &Graph, cap: usize) -> Result<i128> {
    check_input(h, cap)?;
    if h.edge_count() <= DIRECT_EDGE_LIMIT {
        ursell_edge_subsets(h)
    } else {
        ursell_deletion_contraction(h)
    }
}

/// φ(H) through the subset recursion of [`ursell_typed`].
pub fn ursell_recursive(h: &Graph) -> Result<i128> {
    check_input(h, DEFAULT_URSELL_CAP)?;
    ursell_typed(&adjacency_rows(h), &vec![1; h.len()])
}

fn check_input(h: &Graph, cap: usize) -> Result<()> {
    if h.len() > cap {
        return Err(Error::CapExceeded { what: "Ursell graph size".into(), needed: h.len() as u128, cap: cap as u128 });
    }
    if !h.is_connected() {
        return Err(Error::validation("Ursell function requested for a disconnected graph"));
    }
    Ok(())
}

fn adjacency_rows(h: &Graph) -> Vec<u64> {
    assert!(h.len() <= 64);
    (0..h.len()).map(|v| h.neighbors(v).iter().fold(0u64, |acc, &u| acc | 1 << u)).collect()
}

thread_local! {
    static TYPED_MEMO: RefCell<HashMap<(u8, u64, u64), i128>> = RefCell::new(HashMap::new());
}

/// φ of the graph with `mult[i]` copies of vertex type `i`, where copies of one
/// type form a clique and copies of adjacent types are fully joined.
///
/// `adj[i]` is the neighbour bitmask of type `i` (no self bit). This is the
/// incompatibility graph of a cluster whose distinct polymers have incompatibility
/// graph `adj` and multiplicities `mult`.
pub fn ursell_typed(adj: &[u64], mult: &[u32]) -> Result<i128> {
    let k = adj.len();
    assert_eq!(k, mult.len());
    if mult.iter().all(|&n| n == 0) {
        return Err(Error::validation("Ursell function of the empty graph"));
    }
    let total: u32 = mult.iter().sum();
    let support: u64 = (0..k).filter(|&i| mult[i] > 0).fold(0, |acc, i| acc | 1 << i);
    let complete = (0..k).filter(|&i| mult[i] > 0).all(|i| adj[i] & support == support & !(1u64 << i));
    if complete {
        // K_N: (−1)^{N−1} (N−1)!
        let mut f: i128 = 1;
        for j in 1..total as i128 {
            f = f.checked_mul(j).ok_or_else(overflow)?;
        }
        return Ok(if total % 2 == 1 { f } else { -f });
    }
    let packable = k <= 8 && mult.iter().all(|&n| n < 256);
    if packable {
        let key = (k as u8, pack_adj(adj), pack_mult(mult));
        if let Some(v) = TYPED_MEMO.with(|m| m.borrow().get(&key).copied()) {
            return Ok(v);
        }
        let v = TypedSolver::new(adj).solve(mult)?;
        TYPED_MEMO.with(|m| {
            let mut m = m.borrow_mut();
            if m.len() > 1 << 20 {
                m.clear();
            }
            m.insert(key, v);
        });
        return Ok(v);
    }
    TypedSolver::new(adj).solve(mult)
}

fn overflow() -> Error {
    Error::CapExceeded { what: "Ursell value exceeds i128".into(), needed: 0, cap: i128::MAX as u128 }
}

fn pack_adj(adj: &[u64]) -> u64 {
    let mut bits = 0u64;
    let mut pos = 0;
    for i in 0..adj.len() {
        for j in i + 1..adj.len() {
            if adj[i] >> j & 1 == 1 {
                bits |= 1 << pos;
            }
            pos += 1;
        }
    }
    bits
}

fn pack_mult(mult: &[u32]) -> u64 {
    mult.iter().enumerate().fold(0, |acc, (i, &n)| acc | (n as u64) << (8 * i))
}

/// Recursion C(V) = [V edgeless] − Σ_{T ∋ v0, T ≠ V} C(T)·[V∖T edgeless],
/// written over multiplicity vectors. V∖T is then a set of pairwise
/// non-adjacent types with one copy each.
struct TypedSolver<'a> {
    adj: &'a [u64],
    memo: HashMap<Vec<u32>, i128>,
}

impl<'a> TypedSolver<'a> {
    fn new(adj: &'a [u64]) -> Self {
        TypedSolver { adj, memo: HashMap::new() }
    }

    fn solve(&mut self, mult: &[u32]) -> Result<i128> {
        if let Some(&v) = self.memo.get(mult) {
            return Ok(v);
        }
        let k = mult.len();
        let total: u32 = mult.iter().sum();
        let support: u64 = (0..k).filter(|&i| mult[i] > 0).fold(0, |acc, i| acc | 1 << i);
        let value = if total == 1 {
            1
        } else {
            let edgeless = mult.iter().all(|&n| n <= 1) && (0..k).all(|i| mult[i] == 0 || self.adj[i] & support == 0);
            let mut acc: i128 = if edgeless { 1 } else { 0 };
            let i0 = support.trailing_zeros() as usize;
            // removable types: any in the support, but i0 only if another copy stays
            let removable: Vec<usize> = (0..k).filter(|&i| mult[i] > 0 && (i != i0 || mult[i0] >= 2)).collect();
            let mut chosen = Vec::new();
            let mut sub = mult.to_vec();
            self.independent_subsets(&removable, 0, 0, &mut chosen, &mut sub, i0, &mut acc)?;
            acc
        };
        self.memo.insert(mult.to_vec(), value);
        Ok(value)
    }

    #[allow(clippy::too_many_arguments)]
    fn independent_subsets(
        &mut self,
        removable: &[usize],
        start: usize,
        used: u64,
        chosen: &mut Vec<usize>,
        sub: &mut Vec<u32>,
        i0: usize,
        acc: &mut i128,
    ) -> Result<()> {
        for idx in start..removable.len() {
            let t = removable[idx];
            if used & (1 << t) != 0 || self.adj[t] & used != 0 {
                continue;
            }
            sub[t] -= 1;
            chosen.push(t);
            let c = self.solve(sub)?;
            let coef = self.ways(chosen, sub, i0);
            *acc = acc.checked_sub(coef.checked_mul(c).ok_or_else(overflow)?).ok_or_else(overflow)?;
            self.independent_subsets(removable, idx + 1, used | 1 << t, chosen, sub, i0, acc)?;
            chosen.pop();
            sub[t] += 1;
        }
        Ok(())
    }

    /// Number of ways to choose the removed copies: each removed type `t`
    /// contributes its multiplicity before removal, minus one for `i0`
    /// (the designated copy stays in T).
    fn ways(&self, chosen: &[usize], sub: &[u32], i0: usize) -> i128 {
        chosen
            .iter()
            .map(|&t| {
                let before = sub[t] as i128 + 1;
                if t == i0 {
                    before - 1
                } else {
                    before
                }
            })
            .product()
    }
}

/// (−1)^{k−1} T_H(1,0) by deletion–contraction on multigraphs, memoised on
/// the normalised edge list.
pub fn ursell_deletion_contraction(h: &Graph) -> Result<i128> {
    check_input(h, DEFAULT_URSELL_CAP)?;
    let edges: Vec<(usize, usize)> = h.edges();
    let mut memo = HashMap::new();
    let t = tutte_x1_y0(h.len(), edges, &mut memo);
    Ok(if h.len() % 2 == 1 { t } else { -t })
}

fn normalise(n: usize, edges: &[(usize, usize)]) -> (usize, Vec<(usize, usize)>) {
    let mut relabel = vec![usize::MAX; n];
    let mut next = 0;
    let mut out = Vec::with_capacity(edges.len());
    for &(u, v) in edges {
        for w in [u, v] {
            if relabel[w] == usize::MAX {
                relabel[w] = next;
                next += 1;
            }
        }
        let (a, b) = (relabel[u], relabel[v]);
        out.push((a.min(b), a.max(b)));
    }
    out.sort_unstable();
    // isolated vertices contribute a factor 1 and can be dropped
    (next, out)
}

/// T_G(1, 0) for a connected multigraph given by an edge list.
fn tutte_x1_y0(n: usize, edges: Vec<(usize, usize)>, memo: &mut HashMap<(usize, Vec<(usize, usize)>), i128>) -> i128 {
    if edges.is_empty() {
        return 1;
    }
    if edges.iter().any(|&(u, v)| u == v) {
        return 0; // a loop carries the factor y = 0
    }
    let key = normalise(n, &edges);
    if let Some(&v) = memo.get(&key) {
        return v;
    }
    let (n, edges) = key.clone();
    let e = edges[edges.len() - 1];
    let rest: Vec<(usize, usize)> = edges[..edges.len() - 1].to_vec();
    let contracted: Vec<(usize, usize)> = rest
        .iter()
        .map(|&(a, b)| {
            let f = |x: usize| if x == e.1 { e.0 } else { x };
            (f(a), f(b))
        })
        .collect();
    let value = if is_bridge(n, &rest, e) {
        tutte_x1_y0(n, contracted, memo)
    } else {
        tutte_x1_y0(n, rest, memo) + tutte_x1_y0(n, contracted, memo)
    };
    memo.insert(key, value);
    value
}

fn is_bridge(n: usize, rest: &[(usize, usize)], e: (usize, usize)) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in rest {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![e.0];
    seen[e.0] = true;
    while let Some(v) = stack.pop() {
        if v == e.1 {
            return false;
        }
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    true
}

/// Direct sum over all 2^{|E|} edge subsets. Limited to 30 edges.
pub fn ursell_edge_subsets(h: &Graph) -> Result<i128> {
    check_input(h, DEFAULT_URSELL_CAP)?;
    let edges = h.edges();
    if edges.len() > 30 {
        return Err(Error::CapExceeded { what: "edge-subset enumeration".into(), needed: edges.len() as u128, cap: 30 });
    }
    let n = h.len();
    let full: u32 = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    let mut total: i128 = 0;
    let mut nbr = vec![0u32; n];
    for mask in 0u64..(1u64 << edges.len()) {
        nbr.iter_mut().for_each(|x| *x = 0);
        for (i, &(u, v)) in edges.iter().enumerate() {
            if mask >> i & 1 == 1 {
                nbr[u] |= 1 << v;
                nbr[v] |= 1 << u;
            }
        }
        let mut seen = 1u32;
        let mut frontier = 1u32;
        while frontier != 0 {
            let mut next = 0;
            let mut f = frontier;
            while f != 0 {
                let v = f.trailing_zeros() as usize;
                f &= f - 1;
                next |= nbr[v];
            }
            frontier = next & !seen;
            seen |= next;
        }
        if seen == full {
            total += if mask.count_ones() % 2 == 0 { 1 } else { -1 };
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_values() {
        for f in [ursell, ursell_recursive, ursell_deletion_contraction, ursell_edge_subsets] {
            assert_eq!(f(&Graph::complete(1)).unwrap(), 1);
            assert_eq!(f(&Graph::complete(2)).unwrap(), -1);
            assert_eq!(f(&Graph::path(3)).unwrap(), 1);
            assert_eq!(f(&Graph::complete(3)).unwrap(), 2);
        }
    }

    #[test]
    fn complete_graph_closed_form() {
        // (−1)^{n−1}(n−1)! for K_n
        assert_eq!(ursell_edge_subsets(&Graph::complete(5)).unwrap(), 24);
        assert_eq!(ursell(&Graph::complete(5)).unwrap(), 24);
        assert_eq!(ursell_deletion_contraction(&Graph::complete(5)).unwrap(), 24);
    }

    #[test]
    fn trees_and_cycles() {
        // a tree on k vertices has φ = (−1)^{k−1}; the k-cycle has (−1)^{k−1}(k−1)
        assert_eq!(ursell_recursive(&Graph::path(6)).unwrap(), -1);
        assert_eq!(ursell_recursive(&Graph::cycle(5)).unwrap(), 4);
        assert_eq!(ursell(&Graph::complete(7)).unwrap(), 720);
        assert_eq!(ursell_deletion_contraction(&Graph::cycle(6)).unwrap(), -5);
    }

    #[test]
    fn typed_matches_blown_up_graph() {
        // types 0–1 adjacent, 1–2 adjacent, multiplicities (2,1,2)
        let adj = [0b010u64, 0b101, 0b010];
        let mult = [2u32, 1, 2];
        let mut g = Graph::empty(5);
        let ty = [0, 0, 1, 2, 2];
        for a in 0..5 {
            for b in a + 1..5 {
                if ty[a] == ty[b] || adj[ty[a]] >> ty[b] & 1 == 1 {
                    g.add_edge(a, b);
                }
            }
        }
        let direct = ursell_edge_subsets(&g).unwrap();
        assert_eq!(ursell_typed(&adj, &mult).unwrap(), direct);
        assert_eq!(TypedSolver::new(&adj).solve(&mult).unwrap(), direct);
    }

    #[test]
    fn rejects_disconnected() {
        assert!(ursell(&Graph::empty(2)).is_err());
        assert!(ursell_deletion_contraction(&Graph::empty(2)).is_err());
    }
}
