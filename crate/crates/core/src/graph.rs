//! Weighted graphs, lattice boxes, wired-boundary restriction and bounded
//! path enumeration.
//!
//! Vertices are dense indices `0..n`. Lattice boxes are indexed row-major
//! (last coordinate fastest) so runs are reproducible across platforms.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on enumerated path length.
pub const DEFAULT_PATH_CAP: usize = 12;

/// Default upper bound on the number of vertices a lattice box may have.
pub const DEFAULT_VERTEX_LIMIT: usize = 5_000_000;

/// One entry of a vertex's adjacency list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub vertex: usize,
    pub weight: f64,
    /// Index into [`WeightedGraph::edges`].
    pub edge: usize,
}

/// Undirected edge with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

/// Finite undirected graph with positive symmetric conductances.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<Edge>,
    adj: Vec<Vec<Neighbor>>,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl WeightedGraph {
    /// Builds a graph, rejecting self-loops, duplicate pairs and
    /// non-positive or non-finite weights.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut seen = BTreeMap::new();
        for (i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::Graph(format!("edge ({i}, {j}) out of range for n = {n}")));
            }
            if i == j {
                return Err(Error::Graph(format!("self-loop at vertex {i}")));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::Graph(format!("edge ({i}, {j}) has non-positive weight {w}")));
            }
            let key = (i.min(j), i.max(j));
            if seen.insert(key, w).is_some() {
                return Err(Error::Graph(format!("duplicate edge ({}, {})", key.0, key.1)));
            }
        }
        Ok(Self::from_sorted(n, seen))
    }

    fn from_sorted(n: usize, pairs: BTreeMap<(usize, usize), f64>) -> Self {
        let edges: Vec<Edge> = pairs.into_iter().map(|((i, j), w)| Edge { i, j, w }).collect();
        let mut adj = vec![Vec::new(); n];
        for (k, e) in edges.iter().enumerate() {
            adj[e.i].push(Neighbor { vertex: e.j, weight: e.w, edge: k });
            adj[e.j].push(Neighbor { vertex: e.i, weight: e.w, edge: k });
        }
        for list in &mut adj {
            list.sort_by_key(|nb| nb.vertex);
        }
        Self { n, edges, adj }
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.adj[i]
    }

    /// Conductance of `{i, j}`, if the edge exists.
    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.adj
            .get(i)?
            .binary_search_by_key(&j, |nb| nb.vertex)
            .ok()
            .map(|k| self.adj[i][k].weight)
    }

    /// `W_i`, the total conductance at `i`.
    pub fn total_weight(&self, i: usize) -> f64 {
        self.adj[i].iter().map(|nb| nb.weight).sum()
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        self.distances_from(0).iter().all(|d| d.is_some())
    }

    pub fn require_connected(&self) -> Result<()> {
        if self.is_connected() {
            Ok(())
        } else {
            Err(Error::Graph("graph is not connected".into()))
        }
    }

    /// Breadth-first graph distances from `source`.
    pub fn distances_from(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        let mut queue = VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(v) = queue.pop_front() {
            let d = dist[v].unwrap_or(0);
            for nb in &self.adj[v] {
                if dist[nb.vertex].is_none() {
                    dist[nb.vertex] = Some(d + 1);
                    queue.push_back(nb.vertex);
                }
            }
        }
        dist
    }

    /// Dense weight matrix `P` (zero diagonal).
    pub fn weight_matrix(&self) -> nalgebra::DMatrix<f64> {
        let mut p = nalgebra::DMatrix::zeros(self.n, self.n);
        for e in &self.edges {
            p[(e.i, e.j)] = e.w;
            p[(e.j, e.i)] = e.w;
        }
        p
    }

    /// Parses the `{"n": .., "edges": [[i, j, w], ..]}` graph format.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text)?;
        Self::new(file.n, file.edges)
    }

    pub fn to_json(&self) -> String {
        let file = GraphFile {
            n: self.n,
            edges: self.edges.iter().map(|e| (e.i, e.j, e.w)).collect(),
        };
        serde_json::to_string(&file).expect("graph serializes")
    }

    /// Same graph with every conductance replaced by `f(edge_index, w)`.
    pub fn reweighted(&self, mut f: impl FnMut(usize, f64) -> f64) -> Result<Self> {
        Self::new(
            self.n,
            self.edges.iter().enumerate().map(|(k, e)| (e.i, e.j, f(k, e.w))),
        )
    }
}

/// Geometry of a box `{x : |x - center|_inf <= radius}` in `Z^dim`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeBox {
    dim: usize,
    radius: usize,
    center: Vec<i64>,
    side: usize,
}

impl LatticeBox {
    pub fn new(dim: usize, radius: usize, center: &[i64]) -> Result<Self> {
        Self::with_limit(dim, radius, center, DEFAULT_VERTEX_LIMIT)
    }

    pub fn with_limit(dim: usize, radius: usize, center: &[i64], limit: usize) -> Result<Self> {
        if !(1..=4).contains(&dim) {
            return Err(Error::Domain(format!("lattice dimension {dim} not in 1..=4")));
        }
        if center.len() != dim {
            return Err(Error::Domain(format!(
                "center has {} coordinates, expected {dim}",
                center.len()
            )));
        }
        let side = 2 * radius + 1;
        let requested = (0..dim).try_fold(1usize, |acc, _| acc.checked_mul(side));
        match requested {
            Some(count) if count <= limit => {}
            Some(count) => return Err(Error::Size { requested: count, limit }),
            None => return Err(Error::Size { requested: usize::MAX, limit }),
        }
        Ok(Self { dim, radius, center: center.to_vec(), side })
    }

    /// Box centered at the origin.
    pub fn centered(dim: usize, radius: usize) -> Result<Self> {
        Self::new(dim, radius, &vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn center(&self) -> &[i64] {
        &self.center
    }

    pub fn len(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Lattice point of vertex `v`.
    pub fn coords(&self, mut v: usize) -> Vec<i64> {
        let mut x = vec![0; self.dim];
        for k in (0..self.dim).rev() {
            x[k] = (v % self.side) as i64 - self.radius as i64 + self.center[k];
            v /= self.side;
        }
        x
    }

    /// Vertex index of lattice point `x`, if it lies in the box.
    pub fn index(&self, x: &[i64]) -> Option<usize> {
        let mut v = 0usize;
        for k in 0..self.dim {
            let off = x[k] - self.center[k] + self.radius as i64;
            if off < 0 || off >= self.side as i64 {
                return None;
            }
            v = v * self.side + off as usize;
        }
        Some(v)
    }

    pub fn center_vertex(&self) -> usize {
        self.index(&self.center).expect("center lies in its box")
    }

    /// True when `v` lies on the outer face of the box.
    pub fn on_boundary(&self, v: usize) -> bool {
        self.coords(v)
            .iter()
            .zip(&self.center)
            .any(|(x, c)| (x - c).unsigned_abs() as usize == self.radius)
    }

    /// Nearest-neighbor graph on the box with constant conductance `w`.
    pub fn graph(&self, w: f64) -> Result<WeightedGraph> {
        let n = self.len();
        let mut edges = Vec::with_capacity(n * self.dim);
        let mut stride = 1;
        let mut strides = vec![0; self.dim];
        for k in (0..self.dim).rev() {
            strides[k] = stride;
            stride *= self.side;
        }
        for v in 0..n {
            let x = self.coords(v);
            for k in 0..self.dim {
                let off = x[k] - self.center[k] + self.radius as i64;
                if (off as usize) + 1 < self.side {
                    edges.push((v, v + strides[k], w));
                }
            }
        }
        WeightedGraph::new(n, edges)
    }

    /// Vertices of the sub-box of radius `r` sharing this box's center.
    pub fn inner_box(&self, r: usize) -> Result<Vec<usize>> {
        self.sub_box(&self.center.clone(), r)
    }

    /// Vertices of the box of radius `r` around `center`, which must fit inside.
    pub fn sub_box(&self, center: &[i64], r: usize) -> Result<Vec<usize>> {
        let inner = LatticeBox::new(self.dim, r, center)?;
        (0..inner.len())
            .map(|v| {
                self.index(&inner.coords(v)).ok_or_else(|| {
                    Error::Domain(format!("sub-box of radius {r} does not fit in radius {}", self.radius))
                })
            })
            .collect()
    }
}

/// Nearest-neighbor box with conductance `w`.
pub fn build_lattice_box(dim: usize, radius: usize, w: f64, center: &[i64]) -> Result<WeightedGraph> {
    LatticeBox::new(dim, radius, center)?.graph(w)
}

/// Restriction of a graph to a vertex subset with all outside vertices
/// identified to one boundary point `delta`, which is always the last index.
#[derive(Debug, Clone, PartialEq)]
pub struct WiredGraph {
    pub base: WeightedGraph,
    pub delta: usize,
    /// `origin[k]` is the parent vertex of retained vertex `k`.
    pub origin: Vec<usize>,
}

impl WiredGraph {
    /// Number of retained vertices (excluding `delta`).
    pub fn interior_count(&self) -> usize {
        self.delta
    }

    /// Conductance between retained vertex `k` and `delta` (0 if none).
    pub fn boundary_weight(&self, k: usize) -> f64 {
        self.base.weight(k, self.delta).unwrap_or(0.0)
    }

    /// The vector `eta = P_{V1, V1^c} 1` of boundary conductances.
    pub fn boundary_weights(&self) -> Vec<f64> {
        (0..self.delta).map(|k| self.boundary_weight(k)).collect()
    }

    /// Local index of parent vertex `v`, if retained.
    pub fn local(&self, v: usize) -> Option<usize> {
        self.origin.binary_search(&v).ok()
    }
}

/// Restriction of `g` to `subset` with wired boundary condition.
pub fn wire_restrict(g: &WeightedGraph, subset: &[usize]) -> Result<WiredGraph> {
    let mut origin = subset.to_vec();
    origin.sort_unstable();
    origin.dedup();
    if origin.is_empty() {
        return Err(Error::Restriction("subset is empty".into()));
    }
    if let Some(&v) = origin.iter().find(|&&v| v >= g.vertex_count()) {
        return Err(Error::Restriction(format!("vertex {v} out of range")));
    }
    if origin.len() == g.vertex_count() {
        return Err(Error::Restriction("subset is the full vertex set; no boundary".into()));
    }
    let mut local = vec![None; g.vertex_count()];
    for (k, &v) in origin.iter().enumerate() {
        local[v] = Some(k);
    }
    let delta = origin.len();
    let mut pairs = BTreeMap::new();
    let mut to_delta = vec![0.0; delta];
    for e in g.edges() {
        match (local[e.i], local[e.j]) {
            (Some(a), Some(b)) => {
                pairs.insert((a.min(b), a.max(b)), e.w);
            }
            (Some(a), None) => to_delta[a] += e.w,
            (None, Some(b)) => to_delta[b] += e.w,
            (None, None) => {}
        }
    }
    for (k, &w) in to_delta.iter().enumerate() {
        if w > 0.0 {
            pairs.insert((k, delta), w);
        }
    }
    let base = WeightedGraph::from_sorted(delta + 1, pairs);
    if !base.is_connected() {
        return Err(Error::Restriction(
            "subset together with the boundary point is not connected".into(),
        ));
    }
    Ok(WiredGraph { base, delta, origin })
}

/// Wired restriction of the `Z^dim` box of radius `radius` (conductance `w`).
/// The returned geometry indexes the retained vertices.
pub fn wired_lattice_box(dim: usize, radius: usize, w: f64) -> Result<(LatticeBox, WiredGraph)> {
    let outer = LatticeBox::centered(dim, radius + 1)?;
    let g = outer.graph(w)?;
    let inner = outer.inner_box(radius)?;
    let wired = wire_restrict(&g, &inner)?;
    Ok((LatticeBox::centered(dim, radius)?, wired))
}

/// Nearest-neighbor vertex sequence `sigma_0, .., sigma_m`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Path(pub Vec<usize>);

impl Path {
    /// Number of steps `|sigma|`.
    pub fn len(&self) -> usize {
        self.0.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.0.len() <= 1
    }

    pub fn start(&self) -> usize {
        self.0[0]
    }

    pub fn end(&self) -> usize {
        *self.0.last().expect("paths are nonempty")
    }

    /// `W_sigma`, product of conductances along the path.
    pub fn conductance(&self, g: &WeightedGraph) -> f64 {
        self.0
            .windows(2)
            .map(|s| g.weight(s[0], s[1]).expect("path steps follow edges"))
            .product()
    }

    /// `(2 beta)_sigma`, product over all visited vertices.
    pub fn potential(&self, beta: &[f64]) -> f64 {
        self.0.iter().map(|&v| 2.0 * beta[v]).product()
    }

    /// `(2 beta)^-_sigma`, product over all but the last vertex.
    pub fn potential_minus(&self, beta: &[f64]) -> f64 {
        self.0[..self.0.len() - 1].iter().map(|&v| 2.0 * beta[v]).product()
    }
}

/// Output of [`enumerate_paths`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PathEnumeration {
    /// Paths that end at their first visit to the stop set.
    pub hitting: Vec<Path>,
    /// Paths that never visit the stop set.
    pub avoiding: Vec<Path>,
}

/// Enumerates every nearest-neighbor path from `start` with at most
/// `max_len` steps, split by whether it reaches `stop`. Hitting paths are
/// cut at the first visit to `stop`.
pub fn enumerate_paths(
    g: &WeightedGraph,
    start: usize,
    stop: &[usize],
    max_len: usize,
) -> Result<PathEnumeration> {
    enumerate_paths_with_cap(g, start, stop, max_len, DEFAULT_PATH_CAP)
}

pub fn enumerate_paths_with_cap(
    g: &WeightedGraph,
    start: usize,
    stop: &[usize],
    max_len: usize,
    cap: usize,
) -> Result<PathEnumeration> {
    if max_len > cap {
        return Err(Error::Enumeration { requested: max_len, cap });
    }
    if start >= g.vertex_count() {
        return Err(Error::Graph(format!("start vertex {start} out of range")));
    }
    let mut in_stop = vec![false; g.vertex_count()];
    for &v in stop {
        *in_stop
            .get_mut(v)
            .ok_or_else(|| Error::Graph(format!("stop vertex {v} out of range")))? = true;
    }
    let mut out = PathEnumeration::default();
    let mut current = vec![start];
    extend_paths(g, &in_stop, max_len, &mut current, &mut out);
    Ok(out)
}

fn extend_paths(
    g: &WeightedGraph,
    in_stop: &[bool],
    max_len: usize,
    current: &mut Vec<usize>,
    out: &mut PathEnumeration,
) {
    let last = *current.last().expect("nonempty");
    if in_stop[last] {
        out.hitting.push(Path(current.clone()));
        return;
    }
    out.avoiding.push(Path(current.clone()));
    if current.len() > max_len {
        return;
    }
    for nb in g.neighbors(last) {
        current.push(nb.vertex);
        extend_paths(g, in_stop, max_len, current, out);
        current.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> WeightedGraph {
        WeightedGraph::new(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(WeightedGraph::new(2, [(0, 0, 1.0)]).is_err());
        assert!(WeightedGraph::new(2, [(0, 1, 0.0)]).is_err());
        assert!(WeightedGraph::new(2, [(0, 1, 1.0), (1, 0, 2.0)]).is_err());
        assert!(WeightedGraph::new(2, [(0, 2, 1.0)]).is_err());
    }

    #[test]
    fn weights_are_symmetric() {
        let g = WeightedGraph::new(3, [(2, 0, 1.5), (1, 2, 0.5)]).unwrap();
        assert_eq!(g.weight(0, 2), Some(1.5));
        assert_eq!(g.weight(2, 0), Some(1.5));
        assert_eq!(g.weight(0, 1), None);
        assert_eq!(g.total_weight(2), 2.0);
    }

    #[test]
    fn lattice_counts() {
        let g = build_lattice_box(1, 0, 1.0, &[0]).unwrap();
        assert_eq!((g.vertex_count(), g.edge_count()), (1, 0));

        let g = build_lattice_box(1, 1, 1.0, &[0]).unwrap();
        assert_eq!((g.vertex_count(), g.edge_count()), (3, 2));
        assert!(g.edges().iter().all(|e| e.w == 1.0));

        let g = build_lattice_box(2, 1, 2.0, &[0, 0]).unwrap();
        assert_eq!(g.vertex_count(), 9);
        // brute-force count of unit-distance pairs in the 3x3 grid
        let lb = LatticeBox::centered(2, 1).unwrap();
        let mut count = 0;
        for a in 0..9 {
            for b in (a + 1)..9 {
                let (xa, xb) = (lb.coords(a), lb.coords(b));
                let d: i64 = xa.iter().zip(&xb).map(|(p, q)| (p - q).abs()).sum();
                if d == 1 {
                    count += 1;
                }
            }
        }
        assert_eq!(count, 12);
        assert_eq!(g.edge_count(), 12);
        assert!(g.edges().iter().all(|e| e.w == 2.0));
    }

    #[test]
    fn lattice_indexing_is_row_major() {
        let lb = LatticeBox::new(2, 1, &[5, -3]).unwrap();
        assert_eq!(lb.coords(0), vec![4, -4]);
        assert_eq!(lb.coords(1), vec![4, -3]);
        assert_eq!(lb.coords(3), vec![5, -4]);
        for v in 0..lb.len() {
            assert_eq!(lb.index(&lb.coords(v)), Some(v));
        }
        assert_eq!(lb.center_vertex(), 4);
        assert_eq!(lb.index(&[7, 0]), None);
    }

    #[test]
    fn lattice_size_limit() {
        assert!(matches!(
            LatticeBox::with_limit(3, 10, &[0, 0, 0], 1000),
            Err(Error::Size { .. })
        ));
        assert!(LatticeBox::centered(5, 1).is_err());
    }

    #[test]
    fn wire_path_middle() {
        let w = wire_restrict(&path3(), &[1]).unwrap();
        assert_eq!(w.base.vertex_count(), 2);
        assert_eq!(w.delta, 1);
        assert_eq!(w.base.weight(0, 1), Some(2.0));
        assert_eq!(w.origin, vec![1]);
    }

    #[test]
    fn wire_grid_center() {
        let lb = LatticeBox::centered(2, 1).unwrap();
        let g = lb.graph(1.0).unwrap();
        let w = wire_restrict(&g, &[lb.center_vertex()]).unwrap();
        assert_eq!(w.base.weight(0, w.delta), Some(4.0));
    }

    #[test]
    fn wire_rejects_full_set_and_empty() {
        let g = path3();
        assert!(matches!(wire_restrict(&g, &[0, 1, 2]), Err(Error::Restriction(_))));
        assert!(matches!(wire_restrict(&g, &[]), Err(Error::Restriction(_))));
    }

    #[test]
    fn wired_lattice_box_boundary_weights() {
        let (lb, w) = wired_lattice_box(2, 1, 1.0).unwrap();
        assert_eq!(w.interior_count(), 9);
        let c = lb.center_vertex();
        assert_eq!(w.boundary_weight(c), 0.0);
        // corners lose two edges, edge midpoints one
        assert_eq!(w.boundary_weight(lb.index(&[1, 1]).unwrap()), 2.0);
        assert_eq!(w.boundary_weight(lb.index(&[1, 0]).unwrap()), 1.0);
        let lb_c = lb.coords(c);
        assert_eq!(lb_c, vec![0, 0]);
    }

    #[test]
    fn trivial_path() {
        let g = WeightedGraph::new(1, []).unwrap();
        let out = enumerate_paths(&g, 0, &[], 0).unwrap();
        assert_eq!(out.avoiding, vec![Path(vec![0])]);
        assert!(out.hitting.is_empty());
        let p = &out.avoiding[0];
        assert_eq!(p.conductance(&g), 1.0);
        assert_eq!(p.potential_minus(&[0.3]), 1.0);
        assert_eq!(p.potential(&[0.3]), 0.6);
    }

    #[test]
    fn two_path_hits_once() {
        let g = WeightedGraph::new(2, [(0, 1, 1.0)]).unwrap();
        let out = enumerate_paths(&g, 0, &[1], 1).unwrap();
        assert_eq!(out.hitting, vec![Path(vec![0, 1])]);
    }

    #[test]
    fn triangle_hitting_paths() {
        let g = WeightedGraph::new(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let mut hits = enumerate_paths(&g, 0, &[2], 2).unwrap().hitting;
        hits.sort();
        assert_eq!(hits, vec![Path(vec![0, 1, 2]), Path(vec![0, 2])]);
    }

    #[test]
    fn enumeration_cap() {
        let g = path3();
        assert!(matches!(
            enumerate_paths(&g, 0, &[], 13),
            Err(Error::Enumeration { requested: 13, cap: 12 })
        ));
        assert!(enumerate_paths_with_cap(&g, 0, &[], 13, 20).is_ok());
    }

    #[test]
    fn json_round_trip() {
        let g = WeightedGraph::new(3, [(0, 1, 0.5), (1, 2, 2.0)]).unwrap();
        let back = WeightedGraph::from_json(&g.to_json()).unwrap();
        assert_eq!(g, back);
        assert!(WeightedGraph::from_json(r#"{"n": 2, "edges": [[0, 1, -1.0]]}"#).is_err());
    }

    #[test]
    fn connectivity() {
        assert!(path3().is_connected());
        let g = WeightedGraph::new(3, [(0, 1, 1.0)]).unwrap();
        assert!(!g.is_connected());
        assert_eq!(path3().distances_from(0), vec![Some(0), Some(1), Some(2)]);
    }
}
