//! Simple undirected graphs on `0..n` with connected-subset enumeration.

use rand::Rng;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<Vec<usize>>,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Graph { adj: vec![Vec::new(); n] }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = Graph::empty(n);
        for &(u, v) in edges {
            g.add_edge(u, v);
        }
        g
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Graph::empty(n);
        for u in 0..n {
            for v in u + 1..n {
                g.add_edge(u, v);
            }
        }
        g
    }

    pub fn path(n: usize) -> Self {
        Graph::from_edges(n, &(1..n).map(|i| (i - 1, i)).collect::<Vec<_>>())
    }

    pub fn cycle(n: usize) -> Self {
        let mut g = Graph::path(n);
        if n > 2 {
            g.add_edge(n - 1, 0);
        }
        g
    }

    /// Adds `{u, v}`; self-loops and repeated edges are ignored.
    pub fn add_edge(&mut self, u: usize, v: usize) {
        if u == v || self.adj[u].contains(&v) {
            return;
        }
        self.adj[u].push(v);
        self.adj[v].push(u);
        self.adj[u].sort_unstable();
        self.adj[v].sort_unstable();
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].binary_search(&v).is_ok()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (u, ns) in self.adj.iter().enumerate() {
            out.extend(ns.iter().filter(|&&v| v > u).map(|&v| (u, v)));
        }
        out
    }

    /// Induced subgraph on `vs`, relabelled `0..vs.len()` in the given order.
    pub fn induced(&self, vs: &[usize]) -> Graph {
        let mut pos = vec![usize::MAX; self.len()];
        for (i, &v) in vs.iter().enumerate() {
            pos[v] = i;
        }
        let mut g = Graph::empty(vs.len());
        for (i, &v) in vs.iter().enumerate() {
            for &u in &self.adj[v] {
                if pos[u] != usize::MAX && pos[u] > i {
                    g.add_edge(i, pos[u]);
                }
            }
        }
        g
    }

    pub fn is_connected(&self) -> bool {
        let all: Vec<usize> = (0..self.len()).collect();
        self.is_connected_subset(&all)
    }

    /// Whether `vs` induces a connected subgraph. The empty set is not connected.
    pub fn is_connected_subset(&self, vs: &[usize]) -> bool {
        if vs.is_empty() {
            return false;
        }
        let mut inside = vec![false; self.len()];
        for &v in vs {
            inside[v] = true;
        }
        let mut seen = vec![false; self.len()];
        let mut stack = vec![vs[0]];
        seen[vs[0]] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &u in &self.adj[v] {
                if inside[u] && !seen[u] {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == vs.len()
    }

    /// Graph distance between two vertex sets is at most one.
    pub fn within_distance_one(&self, a: &[usize], b: &[usize]) -> bool {
        a.iter().any(|&u| b.iter().any(|&v| u == v || self.has_edge(u, v)))
    }

    /// Number of edges with exactly one endpoint in `vs`.
    pub fn edge_boundary_size(&self, vs: &[usize]) -> usize {
        let mut inside = vec![false; self.len()];
        for &v in vs {
            inside[v] = true;
        }
        vs.iter().map(|&v| self.adj[v].iter().filter(|&&u| !inside[u]).count()).sum()
    }

    /// Calls `f` on every connected vertex set of size `1..=max_size` that
    /// contains `root` and otherwise only vertices accepted by `eligible`.
    ///
    /// Uses the ESU extension scheme, so each set is visited exactly once.
    /// The slice handed to `f` is in discovery order, not sorted.
    pub fn for_each_connected_subset(
        &self,
        root: usize,
        max_size: usize,
        eligible: impl Fn(usize) -> bool,
        mut f: impl FnMut(&[usize]),
    ) {
        if max_size == 0 {
            return;
        }
        let mut near = vec![0u32; self.len()];
        let mut sub = vec![root];
        self.mark(root, &mut near, 1);
        let ext: Vec<usize> = self.adj[root].iter().copied().filter(|&u| u != root && eligible(u)).collect();
        self.esu(&mut sub, ext, max_size, &eligible, &mut near, &mut f);
    }

    fn mark(&self, w: usize, near: &mut [u32], delta: i32) {
        near[w] = (near[w] as i32 + delta) as u32;
        for &u in &self.adj[w] {
            near[u] = (near[u] as i32 + delta) as u32;
        }
    }

    fn esu(
        &self,
        sub: &mut Vec<usize>,
        mut ext: Vec<usize>,
        max_size: usize,
        eligible: &impl Fn(usize) -> bool,
        near: &mut Vec<u32>,
        f: &mut impl FnMut(&[usize]),
    ) {
        f(sub);
        if sub.len() == max_size {
            return;
        }
        while let Some(w) = ext.pop() {
            let mut next = ext.clone();
            for &u in &self.adj[w] {
                if near[u] == 0 && eligible(u) {
                    next.push(u);
                }
            }
            sub.push(w);
            self.mark(w, near, 1);
            self.esu(sub, next, max_size, eligible, near, f);
            self.mark(w, near, -1);
            sub.pop();
        }
    }

    /// All connected sets of size `1..=max_size` containing `root`, each sorted,
    /// in lexicographic order.
    pub fn connected_subsets(&self, root: usize, max_size: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        self.for_each_connected_subset(root, max_size, |u| u != root, |s| {
            let mut s = s.to_vec();
            s.sort_unstable();
            out.push(s);
        });
        out.sort();
        out
    }

    /// Every connected set of size `1..=max_size` exactly once, each sorted.
    pub fn all_connected_subsets(&self, max_size: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for root in 0..self.len() {
            self.for_each_connected_subset(root, max_size, |u| u > root, |s| {
                let mut s = s.to_vec();
                s.sort_unstable();
                out.push(s);
            });
        }
        out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        out
    }

    /// A random connected graph on `n` vertices with maximum degree `max_degree`:
    /// a random spanning tree plus `extra` attempted chords.
    pub fn random_connected<R: Rng>(n: usize, max_degree: usize, extra: usize, rng: &mut R) -> Graph {
        assert!(max_degree >= 2 || n <= 2);
        let mut g = Graph::empty(n);
        for v in 1..n {
            loop {
                let u = rng.random_range(0..v);
                if g.degree(u) < max_degree {
                    g.add_edge(u, v);
                    break;
                }
            }
        }
        for _ in 0..extra {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            if u != v && g.degree(u) < max_degree && g.degree(v) < max_degree {
                g.add_edge(u, v);
            }
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_connected_count(g: &Graph, root: usize, max: usize) -> usize {
        (1u32..1 << g.len())
            .filter(|mask| mask & (1 << root) != 0 && mask.count_ones() as usize <= max)
            .filter(|mask| {
                let vs: Vec<usize> = (0..g.len()).filter(|i| mask & (1 << i) != 0).collect();
                g.is_connected_subset(&vs)
            })
            .count()
    }

    #[test]
    fn esu_matches_subset_filter() {
        let grid = {
            let mut g = Graph::empty(12);
            for r in 0..3 {
                for c in 0..4 {
                    let v = r * 4 + c;
                    if c + 1 < 4 {
                        g.add_edge(v, v + 1);
                    }
                    if r + 1 < 3 {
                        g.add_edge(v, v + 4);
                    }
                }
            }
            g
        };
        for root in [0, 5] {
            for max in 1..=6 {
                let sets = grid.connected_subsets(root, max);
                assert_eq!(sets.len(), brute_connected_count(&grid, root, max));
                let mut dedup = sets.clone();
                dedup.dedup();
                assert_eq!(dedup.len(), sets.len());
                assert!(sets.iter().all(|s| grid.is_connected_subset(s)));
            }
        }
    }

    #[test]
    fn all_connected_subsets_of_path() {
        // a path on n vertices has n(n+1)/2 intervals
        assert_eq!(Graph::path(5).all_connected_subsets(5).len(), 15);
        assert_eq!(Graph::path(5).all_connected_subsets(2).len(), 9);
    }

    #[test]
    fn boundary_and_distance() {
        let c4 = Graph::cycle(4);
        assert_eq!(c4.edge_boundary_size(&[0]), 2);
        assert_eq!(c4.edge_boundary_size(&[0, 1]), 2);
        assert!(c4.within_distance_one(&[0], &[1]));
        assert!(!c4.within_distance_one(&[0], &[2]));
    }
}
