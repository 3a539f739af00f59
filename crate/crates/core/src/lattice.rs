//! Finite regions of Z^d and the torus T^d_n with d∞ geometry.

use std::collections::{HashMap, VecDeque};

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 4;

/// A lattice point; coordinates past the region's dimension are zero.
#[derive(Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Point(pub [i32; MAX_DIM]);

impl Point {
    pub fn new(coords: &[i32]) -> Point {
        assert!(coords.len() <= MAX_DIM, "dimension above {MAX_DIM}");
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Point(c)
    }

    pub fn coords(&self, dim: usize) -> &[i32] {
        &self.0[..dim]
    }

    pub fn offset(&self, delta: &Point) -> Point {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(delta.0) {
            *a += b;
        }
        Point(c)
    }

    pub fn sub(&self, other: &Point) -> Point {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(other.0) {
            *a -= b;
        }
        Point(c)
    }

    /// Parity of the coordinate sum; `true` for even sites.
    pub fn is_even(&self) -> bool {
        self.0.iter().sum::<i32>().rem_euclid(2) == 0
    }

    pub fn dinf(&self, other: &Point) -> u32 {
        self.0.iter().zip(other.0).map(|(a, b)| a.abs_diff(b)).max().unwrap_or(0)
    }

    pub fn to_json(&self, dim: usize) -> Value {
        json!(self.coords(dim))
    }
}

impl std::fmt::Debug for Point {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let last = self.0.iter().rposition(|&c| c != 0).map_or(1, |i| i + 1).max(2);
        f.debug_tuple("").field(&&self.0[..last]).finish()
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Geometry {
    Free,
    Torus(u32),
}

/// A finite vertex set in Z^d or T^d_n, kept in lexicographic order.
#[derive(Clone, Debug)]
pub struct Region {
    dim: usize,
    geometry: Geometry,
    vertices: Vec<Point>,
    index: HashMap<Point, usize>,
}

impl PartialEq for Region {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.geometry == other.geometry && self.vertices == other.vertices
    }
}

impl Region {
    pub fn new(dim: usize, geometry: Geometry, points: impl IntoIterator<Item = Point>) -> Result<Region> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::validation(format!("dimension must be in 1..={MAX_DIM}, got {dim}")));
        }
        let mut vertices: Vec<Point> = points.into_iter().collect();
        for p in &vertices {
            if p.0[dim..].iter().any(|&c| c != 0) {
                return Err(Error::validation(format!("point {p:?} has more than {dim} coordinates")));
            }
            if let Geometry::Torus(n) = geometry {
                if n == 0 {
                    return Err(Error::validation("torus side must be positive"));
                }
                if p.coords(dim).iter().any(|&c| c < 0 || c >= n as i32) {
                    return Err(Error::validation(format!("point {p:?} outside torus of side {n}")));
                }
            }
        }
        vertices.sort_unstable();
        vertices.dedup();
        let index = vertices.iter().enumerate().map(|(i, p)| (*p, i)).collect();
        Ok(Region { dim, geometry, vertices, index })
    }

    /// The integer box `∏ [lo_i, hi_i]` with free geometry.
    pub fn free_box(bounds: &[(i32, i32)]) -> Result<Region> {
        let dim = bounds.len();
        Region::new(dim, Geometry::Free, box_points(bounds))
    }

    /// A `side^d` box anchored at the origin.
    pub fn cube(dim: usize, side: i32) -> Region {
        Region::free_box(&vec![(0, side - 1); dim]).expect("valid box")
    }

    /// The full torus T^d_n.
    pub fn torus(dim: usize, n: u32) -> Result<Region> {
        let bounds = vec![(0, n as i32 - 1); dim];
        Region::new(dim, Geometry::Torus(n), box_points(&bounds))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.index.contains_key(p)
    }

    pub fn index_of(&self, p: &Point) -> Option<usize> {
        self.index.get(p).copied()
    }

    pub fn is_full_torus(&self) -> bool {
        match self.geometry {
            Geometry::Torus(n) => self.len() == (n as usize).pow(self.dim as u32),
            Geometry::Free => false,
        }
    }

    fn check_point(&self, p: &Point) -> Result<()> {
        if let Geometry::Torus(n) = self.geometry {
            if p.coords(self.dim).iter().any(|&c| c < 0 || c >= n as i32) {
                return Err(Error::validation(format!("point {p:?} outside torus of side {n}")));
            }
        }
        Ok(())
    }

    /// Chebyshev distance, wrapped per coordinate on the torus.
    pub fn dinf(&self, x: &Point, y: &Point) -> Result<u32> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(self.dinf_unchecked(x, y))
    }

    pub(crate) fn dinf_unchecked(&self, x: &Point, y: &Point) -> u32 {
        dinf_in(self.geometry, x, y)
    }

    /// Reduces coordinates modulo `n` on the torus; identity on free geometry.
    pub fn wrap(&self, p: &Point) -> Point {
        wrap_in(self.geometry, self.dim, p)
    }

    /// Ambient points at d∞ distance exactly one.
    pub fn king_neighbors(&self, p: &Point) -> Vec<Point> {
        let mut out = Vec::new();
        for delta in king_offsets(self.dim) {
            let q = self.wrap(&p.offset(&delta));
            if q != *p && !out.contains(&q) {
                out.push(q);
            }
        }
        out
    }

    /// Ambient nearest neighbours `p ± e_i`.
    pub fn lattice_neighbors(&self, p: &Point) -> Vec<Point> {
        let mut out = Vec::new();
        for i in 0..self.dim {
            for s in [-1, 1] {
                let mut q = *p;
                q.0[i] += s;
                let q = self.wrap(&q);
                if q != *p && !out.contains(&q) {
                    out.push(q);
                }
            }
        }
        out
    }

    /// Nearest-neighbour edges with both endpoints in the region, as index pairs.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, p) in self.vertices.iter().enumerate() {
            for q in self.lattice_neighbors(p) {
                if let Some(j) = self.index_of(&q) {
                    if j > i {
                        out.push((i, j));
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// The region as a graph under nearest-neighbour adjacency.
    pub fn nn_graph(&self) -> Graph {
        Graph::from_edges(self.len(), &self.edges())
    }

    /// The region as a graph under d∞ adjacency.
    pub fn king_graph(&self) -> Graph {
        let mut g = Graph::empty(self.len());
        for (i, p) in self.vertices.iter().enumerate() {
            for q in self.king_neighbors(p) {
                if let Some(j) = self.index_of(&q) {
                    g.add_edge(i, j);
                }
            }
        }
        g
    }

    /// Maximal d∞-connected components of the ambient space minus `excluded`.
    ///
    /// Under free geometry the ambient space is Z^d, searched inside the bounding
    /// box of `excluded` inflated by 2; the first component is the infinite one,
    /// listed only by its cells inside that box. Under torus geometry the ambient
    /// space is the torus and components are ordered by their smallest point.
    pub fn components(&self, excluded: &[Point]) -> Vec<Vec<Point>> {
        let window = match self.geometry {
            Geometry::Free => {
                if excluded.is_empty() {
                    return vec![Vec::new()];
                }
                Window::around(self.dim, excluded, 2)
            }
            Geometry::Torus(n) => Window::torus(self.dim, n),
        };
        let mut blocked = vec![false; window.len()];
        for p in excluded {
            if let Some(i) = window.index(&self.wrap(p)) {
                blocked[i] = true;
            }
        }
        let (labels, count) = window.label_components(&blocked);
        let mut comps: Vec<Vec<Point>> = vec![Vec::new(); count];
        for (i, l) in labels.iter().enumerate() {
            if let Some(l) = l {
                comps[*l].push(window.point(i));
            }
        }
        for c in &mut comps {
            c.sort_unstable();
        }
        match self.geometry {
            // label 0 is the component touching the window edge
            Geometry::Free => {}
            Geometry::Torus(_) => comps.sort(),
        }
        comps
    }

    /// d∞(p, complement) for every vertex, in vertex order; `u32::MAX` when the
    /// complement is empty.
    pub fn distances_to_complement(&self) -> Vec<u32> {
        if self.is_empty() {
            return Vec::new();
        }
        let window = match self.geometry {
            Geometry::Free => Window::around(self.dim, &self.vertices, 1),
            Geometry::Torus(n) => Window::torus(self.dim, n),
        };
        let mut dist = vec![u32::MAX; window.len()];
        let mut queue = VecDeque::new();
        let mut inside = vec![false; window.len()];
        for p in &self.vertices {
            inside[window.index(p).expect("vertex in window")] = true;
        }
        for i in 0..window.len() {
            if !inside[i] {
                dist[i] = 0;
                queue.push_back(i);
            }
        }
        let mut nbrs = Vec::new();
        while let Some(i) = queue.pop_front() {
            window.king_neighbors(i, &mut nbrs);
            for &j in &nbrs {
                if dist[j] == u32::MAX {
                    dist[j] = dist[i] + 1;
                    queue.push_back(j);
                }
            }
        }
        self.vertices.iter().map(|p| dist[window.index(p).unwrap()]).collect()
    }

    /// `{i ∈ A : d∞(i, A^c) = 1}`.
    pub fn interior_boundary(&self) -> Vec<Point> {
        self.vertices
            .iter()
            .zip(self.distances_to_complement())
            .filter(|(_, d)| *d == 1)
            .map(|(p, _)| *p)
            .collect()
    }

    /// Whether the complement of the region is d∞-connected.
    pub fn is_c_connected(&self) -> bool {
        match self.geometry {
            Geometry::Free => self.components(&self.vertices).len() == 1,
            Geometry::Torus(_) => self.is_full_torus() || self.components(&self.vertices).len() == 1,
        }
    }

    /// Every d∞-connected subset of the region containing `root` with at most
    /// `max_size` points, each sorted, in lexicographic order.
    pub fn connected_subsets(&self, root: &Point, max_size: usize) -> Result<Vec<Vec<Point>>> {
        let r = self
            .index_of(root)
            .ok_or_else(|| Error::validation(format!("root {root:?} not in region")))?;
        let g = self.king_graph();
        Ok(g.connected_subsets(r, max_size)
            .into_iter()
            .map(|s| s.into_iter().map(|i| self.vertices[i]).collect())
            .collect())
    }

    /// Region JSON: `{"dim", "geometry": "free" | {"torus": n}, "vertices": [[..]] | {"box": [[lo,hi],..]}}`.
    pub fn from_json(v: &Value) -> Result<Region> {
        let dim = v["dim"].as_u64().ok_or_else(|| Error::validation("region needs integer \"dim\""))? as usize;
        let geometry = match &v["geometry"] {
            Value::Null => Geometry::Free,
            Value::String(s) if s == "free" => Geometry::Free,
            Value::Object(o) if o.contains_key("torus") => {
                let n = o["torus"].as_u64().ok_or_else(|| Error::validation("torus side must be an integer"))?;
                Geometry::Torus(n as u32)
            }
            other => return Err(Error::validation(format!("unknown geometry {other}"))),
        };
        let points = match &v["vertices"] {
            Value::Array(list) => list
                .iter()
                .map(|p| parse_point(p, dim))
                .collect::<Result<Vec<_>>>()?,
            Value::Object(o) if o.contains_key("box") => {
                let bounds = o["box"]
                    .as_array()
                    .ok_or_else(|| Error::validation("box must be a list of [lo, hi]"))?
                    .iter()
                    .map(|b| {
                        let lo = b[0].as_i64().ok_or_else(|| Error::validation("box bound"))?;
                        let hi = b[1].as_i64().ok_or_else(|| Error::validation("box bound"))?;
                        if lo > hi {
                            return Err(Error::validation("box lo > hi"));
                        }
                        Ok((lo as i32, hi as i32))
                    })
                    .collect::<Result<Vec<_>>>()?;
                if bounds.len() != dim {
                    return Err(Error::validation("box needs one [lo, hi] per dimension"));
                }
                box_points(&bounds)
            }
            Value::Null => match geometry {
                Geometry::Torus(n) => box_points(&vec![(0, n as i32 - 1); dim]),
                Geometry::Free => return Err(Error::validation("free region needs \"vertices\"")),
            },
            other => return Err(Error::validation(format!("bad vertices {other}"))),
        };
        Region::new(dim, geometry, points)
    }

    pub fn to_json(&self) -> Value {
        let geometry = match self.geometry {
            Geometry::Free => json!("free"),
            Geometry::Torus(n) => json!({ "torus": n }),
        };
        json!({
            "dim": self.dim,
            "geometry": geometry,
            "vertices": self.vertices.iter().map(|p| p.to_json(self.dim)).collect::<Vec<_>>(),
        })
    }
}

fn parse_point(v: &Value, dim: usize) -> Result<Point> {
    let arr = v.as_array().ok_or_else(|| Error::validation("vertex must be a coordinate list"))?;
    if arr.len() != dim {
        return Err(Error::validation(format!("vertex {v} does not have {dim} coordinates")));
    }
    let coords = arr
        .iter()
        .map(|c| c.as_i64().map(|c| c as i32).ok_or_else(|| Error::validation("non-integer coordinate")))
        .collect::<Result<Vec<_>>>()?;
    Ok(Point::new(&coords))
}

pub(crate) fn box_points(bounds: &[(i32, i32)]) -> Vec<Point> {
    let mut out = vec![Point::default()];
    for (axis, &(lo, hi)) in bounds.iter().enumerate() {
        let mut next = Vec::with_capacity(out.len() * (hi - lo + 1).max(0) as usize);
        for p in &out {
            for c in lo..=hi {
                let mut q = *p;
                q.0[axis] = c;
                next.push(q);
            }
        }
        out = next;
    }
    out.sort_unstable();
    out
}

pub(crate) fn dinf_in(geometry: Geometry, x: &Point, y: &Point) -> u32 {
    match geometry {
        Geometry::Free => x.dinf(y),
        Geometry::Torus(n) => x
            .0
            .iter()
            .zip(y.0)
            .map(|(a, b)| {
                let d = (a - b).rem_euclid(n as i32) as u32;
                d.min(n - d)
            })
            .max()
            .unwrap_or(0),
    }
}

pub(crate) fn wrap_in(geometry: Geometry, dim: usize, p: &Point) -> Point {
    match geometry {
        Geometry::Free => *p,
        Geometry::Torus(n) => {
            let mut q = *p;
            for c in &mut q.0[..dim] {
                *c = c.rem_euclid(n as i32);
            }
            q
        }
    }
}

/// All offsets in `{-1,0,1}^dim` except zero.
pub(crate) fn king_offsets(dim: usize) -> Vec<Point> {
    box_points(&vec![(-1, 1); dim]).into_iter().filter(|p| *p != Point::default()).collect()
}

/// A box of cells (free) or the whole torus, with dense cell indexing.
#[derive(Clone, Debug)]
pub(crate) struct Window {
    pub dim: usize,
    pub lo: [i32; MAX_DIM],
    pub size: [i32; MAX_DIM],
    pub torus: Option<i32>,
    strides: [usize; MAX_DIM],
    len: usize,
    offsets: Vec<Point>,
}

impl Window {
    pub fn new(dim: usize, lo: [i32; MAX_DIM], size: [i32; MAX_DIM], torus: Option<i32>) -> Window {
        let mut strides = [0; MAX_DIM];
        let mut len = 1usize;
        for axis in (0..dim).rev() {
            strides[axis] = len;
            len *= size[axis] as usize;
        }
        Window { dim, lo, size, torus, strides, len, offsets: king_offsets(dim) }
    }

    /// Bounding box of `points` inflated by `margin`.
    pub fn around(dim: usize, points: &[Point], margin: i32) -> Window {
        let mut lo = [i32::MAX; MAX_DIM];
        let mut hi = [i32::MIN; MAX_DIM];
        for p in points {
            for a in 0..dim {
                lo[a] = lo[a].min(p.0[a]);
                hi[a] = hi[a].max(p.0[a]);
            }
        }
        let mut size = [1; MAX_DIM];
        for a in 0..dim {
            lo[a] -= margin;
            size[a] = hi[a] + margin - lo[a] + 1;
        }
        for a in dim..MAX_DIM {
            lo[a] = 0;
        }
        Window::new(dim, lo, size, None)
    }

    pub fn torus(dim: usize, n: u32) -> Window {
        let mut size = [1; MAX_DIM];
        for s in &mut size[..dim] {
            *s = n as i32;
        }
        Window::new(dim, [0; MAX_DIM], size, Some(n as i32))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn index(&self, p: &Point) -> Option<usize> {
        let mut idx = 0;
        for a in 0..self.dim {
            let mut c = p.0[a] - self.lo[a];
            if let Some(n) = self.torus {
                c = c.rem_euclid(n);
            } else if c < 0 || c >= self.size[a] {
                return None;
            }
            idx += c as usize * self.strides[a];
        }
        Some(idx)
    }

    pub fn point(&self, mut idx: usize) -> Point {
        let mut p = Point::default();
        for a in 0..self.dim {
            let c = idx / self.strides[a];
            idx %= self.strides[a];
            p.0[a] = self.lo[a] + c as i32;
        }
        p
    }

    /// Whether a free-window cell lies on the outer face of the box.
    pub fn on_edge(&self, idx: usize) -> bool {
        if self.torus.is_some() {
            return false;
        }
        let p = self.point(idx);
        (0..self.dim).any(|a| p.0[a] == self.lo[a] || p.0[a] == self.lo[a] + self.size[a] - 1)
    }

    /// d∞-neighbours of a cell that lie inside the window (wrapped on the torus).
    pub fn king_neighbors(&self, idx: usize, out: &mut Vec<usize>) {
        out.clear();
        let p = self.point(idx);
        for d in &self.offsets {
            if let Some(j) = self.index(&p.offset(d)) {
                if j != idx && !out.contains(&j) {
                    out.push(j);
                }
            }
        }
    }

    /// Lattice neighbours `p ± e_i` inside the window.
    pub fn lattice_neighbors(&self, idx: usize, out: &mut Vec<usize>) {
        out.clear();
        let p = self.point(idx);
        for a in 0..self.dim {
            for s in [-1, 1] {
                let mut q = p;
                q.0[a] += s;
                if let Some(j) = self.index(&q) {
                    if j != idx && !out.contains(&j) {
                        out.push(j);
                    }
                }
            }
        }
    }

    /// Labels the d∞ components of unblocked cells. On a free window every
    /// component touching the edge is merged into label 0 (the unbounded one);
    /// when none touches the edge, labels simply start at 0.
    pub fn label_components(&self, blocked: &[bool]) -> (Vec<Option<usize>>, usize) {
        let mut labels: Vec<Option<usize>> = vec![None; self.len];
        let mut count = 0;
        let mut nbrs = Vec::new();
        let mut stack = Vec::new();
        let mut flood = |seeds: Vec<usize>, label: usize, labels: &mut Vec<Option<usize>>| {
            for s in seeds {
                if labels[s].is_none() && !blocked[s] {
                    labels[s] = Some(label);
                    stack.push(s);
                }
            }
            while let Some(i) = stack.pop() {
                self.king_neighbors(i, &mut nbrs);
                for &j in &nbrs {
                    if !blocked[j] && labels[j].is_none() {
                        labels[j] = Some(label);
                        stack.push(j);
                    }
                }
            }
        };
        if self.torus.is_none() {
            let edge: Vec<usize> = (0..self.len).filter(|&i| self.on_edge(i) && !blocked[i]).collect();
            if !edge.is_empty() {
                flood(edge, 0, &mut labels);
                count = 1;
            }
        }
        for i in 0..self.len {
            if !blocked[i] && labels[i].is_none() {
                flood(vec![i], count, &mut labels);
                count += 1;
            }
        }
        (labels, count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[i32]) -> Point {
        Point::new(c)
    }

    #[test]
    fn distances() {
        let free = Region::cube(2, 3);
        assert_eq!(free.dinf(&p(&[0, 0]), &p(&[2, 1])).unwrap(), 2);
        let t = Region::torus(2, 6).unwrap();
        assert_eq!(t.dinf(&p(&[0, 0]), &p(&[5, 0])).unwrap(), 1);
        assert_eq!(t.dinf(&p(&[0, 0]), &p(&[3, 3])).unwrap(), 3);
        assert!(t.dinf(&p(&[0, 0]), &p(&[6, 0])).is_err());
    }

    #[test]
    fn components_of_blocks_and_rings() {
        let r = Region::cube(2, 5);
        let block = box_points(&[(1, 3), (1, 3)]);
        assert_eq!(r.components(&block).len(), 1);
        let ring: Vec<Point> = block.iter().copied().filter(|q| *q != p(&[2, 2])).collect();
        let comps = r.components(&ring);
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[1], vec![p(&[2, 2])]);
        let t = Region::torus(2, 4).unwrap();
        let row = box_points(&[(0, 0), (0, 3)]);
        let comps = t.components(&row);
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].len(), 12);
    }

    #[test]
    fn interior_boundary_examples() {
        assert_eq!(Region::cube(2, 1).interior_boundary(), vec![p(&[0, 0])]);
        assert_eq!(Region::cube(2, 4).interior_boundary().len(), 12);
        assert!(Region::torus(2, 4).unwrap().interior_boundary().is_empty());
    }

    #[test]
    fn connected_subsets_examples() {
        let r = Region::cube(2, 3);
        let c = p(&[1, 1]);
        assert_eq!(r.connected_subsets(&c, 1).unwrap(), vec![vec![c]]);
        assert_eq!(r.connected_subsets(&c, 2).unwrap().len(), 9);
    }

    #[test]
    fn c_connectedness() {
        assert!(Region::cube(2, 4).is_c_connected());
        let ring: Vec<Point> = box_points(&[(0, 2), (0, 2)]).into_iter().filter(|q| *q != p(&[1, 1])).collect();
        assert!(!Region::new(2, Geometry::Free, ring).unwrap().is_c_connected());
    }

    #[test]
    fn json_forms() {
        let v: Value = serde_json::from_str(r#"{"dim":2,"geometry":"free","vertices":{"box":[[0,3],[0,3]]}}"#).unwrap();
        assert_eq!(Region::from_json(&v).unwrap().len(), 16);
        let v: Value = serde_json::from_str(r#"{"dim":2,"geometry":{"torus":4}}"#).unwrap();
        assert!(Region::from_json(&v).unwrap().is_full_torus());
        let r = Region::cube(2, 2);
        assert_eq!(Region::from_json(&r.to_json()).unwrap(), r);
    }
}
