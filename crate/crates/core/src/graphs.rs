//! Finite simple graphs: builders for the lattices and small test graphs the
//! engines run on, plus the simple-cycle list used by the cycle-insertion move.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Coordinates metadata for graphs built on a cubic grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lattice {
    pub side: usize,
    pub dim: usize,
    pub periodic: bool,
}

/// A finite, simple, undirected graph with dense vertex and edge ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n_vertices: usize,
    /// Endpoints of every edge, stored with `u < v`.
    edges: Vec<(usize, usize)>,
    /// Per vertex: `(neighbor, edge id)` pairs.
    adjacency: Vec<Vec<(usize, usize)>>,
    /// Two-coloring (0/1 per vertex) when the graph is bipartite.
    coloring: Option<Vec<u8>>,
    max_degree: usize,
    lattice: Option<Lattice>,
}

/// The small named graphs used as exact oracles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NamedGraph {
    SingleEdge,
    /// Path on `n` vertices.
    Path(usize),
    /// Cycle on `n` vertices, `n >= 3`.
    Cycle(usize),
    /// Open (non-periodic) box of side `L` in dimension `d`.
    Box { side: usize, dim: usize },
}

impl Graph {
    /// Builds a graph from an edge list, rejecting self-loops, duplicate
    /// edges and out-of-range endpoints.
    pub fn from_edges(n_vertices: usize, edge_list: &[(usize, usize)]) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut edges = Vec::with_capacity(edge_list.len());
        let mut adjacency = vec![Vec::new(); n_vertices];
        for &(a, b) in edge_list {
            if a >= n_vertices || b >= n_vertices {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) out of range for {n_vertices} vertices"
                )));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at vertex {a}")));
            }
            let (u, v) = if a < b { (a, b) } else { (b, a) };
            if !seen.insert((u, v)) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({u}, {v})")));
            }
            let id = edges.len();
            edges.push((u, v));
            adjacency[u].push((v, id));
            adjacency[v].push((u, id));
        }
        let max_degree = adjacency.iter().map(Vec::len).max().unwrap_or(0);
        let mut g = Graph {
            n_vertices,
            edges,
            adjacency,
            coloring: None,
            max_degree,
            lattice: None,
        };
        g.coloring = g.two_color();
        Ok(g)
    }

    /// The `d`-dimensional torus of side `L` with nearest-neighbor edges.
    pub fn torus(side: usize, dim: usize) -> Result<Self> {
        if side < 3 {
            return Err(Error::InvalidGraph(format!(
                "torus side must be at least 3 (got {side}); smaller sides create multi-edges"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidGraph("torus dimension must be positive".into()));
        }
        let n = side.checked_pow(dim as u32).ok_or_else(|| {
            Error::InvalidGraph(format!("torus {side}^{dim} is too large"))
        })?;
        let mut edge_list = Vec::with_capacity(n * dim);
        let mut coords = vec![0usize; dim];
        for x in 0..n {
            decode(x, side, &mut coords);
            for axis in 0..dim {
                let mut c = coords.clone();
                c[axis] = (c[axis] + 1) % side;
                edge_list.push((x, encode(&c, side)));
            }
        }
        let mut g = Graph::from_edges(n, &edge_list)?;
        g.lattice = Some(Lattice { side, dim, periodic: true });
        Ok(g)
    }

    pub fn named(kind: NamedGraph) -> Result<Self> {
        match kind {
            NamedGraph::SingleEdge => Graph::from_edges(2, &[(0, 1)]),
            NamedGraph::Path(n) => {
                if n == 0 {
                    return Err(Error::InvalidGraph("path needs at least one vertex".into()));
                }
                let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
                Graph::from_edges(n, &edges)
            }
            NamedGraph::Cycle(n) => {
                if n < 3 {
                    return Err(Error::InvalidGraph(format!("cycle needs n >= 3 (got {n})")));
                }
                let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
                Graph::from_edges(n, &edges)
            }
            NamedGraph::Box { side, dim } => {
                if side == 0 || dim == 0 {
                    return Err(Error::InvalidGraph("box side and dimension must be positive".into()));
                }
                let n = side.checked_pow(dim as u32).ok_or_else(|| {
                    Error::InvalidGraph(format!("box {side}^{dim} is too large"))
                })?;
                let mut edge_list = Vec::new();
                let mut coords = vec![0usize; dim];
                for x in 0..n {
                    decode(x, side, &mut coords);
                    for axis in 0..dim {
                        if coords[axis] + 1 < side {
                            let mut c = coords.clone();
                            c[axis] += 1;
                            edge_list.push((x, encode(&c, side)));
                        }
                    }
                }
                let mut g = Graph::from_edges(n, &edge_list)?;
                g.lattice = Some(Lattice { side, dim, periodic: false });
                Ok(g)
            }
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> (usize, usize) {
        self.edges[id]
    }

    pub fn neighbors(&self, x: usize) -> &[(usize, usize)] {
        &self.adjacency[x]
    }

    pub fn degree(&self, x: usize) -> usize {
        self.adjacency[x].len()
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn lattice(&self) -> Option<Lattice> {
        self.lattice
    }

    pub fn is_bipartite(&self) -> bool {
        self.coloring.is_some()
    }

    /// Color (0 or 1) of `x` in the bipartition, if one exists.
    pub fn color(&self, x: usize) -> Option<u8> {
        self.coloring.as_ref().map(|c| c[x])
    }

    /// The two color classes `(V1, V2)`, with vertex 0 in `V1`.
    pub fn bipartition(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        let c = self.coloring.as_ref()?;
        let (a, b): (Vec<usize>, Vec<usize>) = (0..self.n_vertices).partition(|&x| c[x] == 0);
        Some((a, b))
    }

    pub fn edge_between(&self, x: usize, y: usize) -> Option<usize> {
        self.adjacency
            .get(x)?
            .iter()
            .find(|&&(n, _)| n == y)
            .map(|&(_, e)| e)
    }

    /// The endpoint of `edge` opposite to `x`.
    #[inline]
    pub fn other_end(&self, edge: usize, x: usize) -> usize {
        let (u, v) = self.edges[edge];
        if u == x {
            v
        } else {
            u
        }
    }

    /// Lattice coordinates of `x`, if the graph carries lattice metadata.
    pub fn coords(&self, x: usize) -> Option<Vec<usize>> {
        let lat = self.lattice?;
        let mut c = vec![0; lat.dim];
        decode(x, lat.side, &mut c);
        Some(c)
    }

    /// Translates `x` by `offset` on a torus. `None` for non-periodic graphs.
    pub fn translate(&self, x: usize, offset: &[i64]) -> Option<usize> {
        let lat = self.lattice?;
        if !lat.periodic || offset.len() != lat.dim {
            return None;
        }
        let mut c = vec![0; lat.dim];
        decode(x, lat.side, &mut c);
        let side = lat.side as i64;
        for (ci, &o) in c.iter_mut().zip(offset) {
            *ci = (*ci as i64 + o).rem_euclid(side) as usize;
        }
        Some(encode(&c, lat.side))
    }

    /// Vertex at the given lattice coordinates.
    pub fn vertex_at(&self, coords: &[usize]) -> Option<usize> {
        let lat = self.lattice?;
        if coords.len() != lat.dim || coords.iter().any(|&c| c >= lat.side) {
            return None;
        }
        Some(encode(coords, lat.side))
    }

    /// Graph distance by breadth-first search.
    pub fn distance(&self, x: usize, y: usize) -> Option<usize> {
        let mut dist = vec![usize::MAX; self.n_vertices];
        let mut queue = VecDeque::from([x]);
        dist[x] = 0;
        while let Some(z) = queue.pop_front() {
            if z == y {
                return Some(dist[z]);
            }
            for &(w, _) in &self.adjacency[z] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[z] + 1;
                    queue.push_back(w);
                }
            }
        }
        None
    }

    /// Full edge scan confirming that the stored coloring is proper.
    pub fn verify_bipartition(&self) -> bool {
        match &self.coloring {
            None => false,
            Some(c) => self.edges.iter().all(|&(u, v)| c[u] != c[v]),
        }
    }

    fn two_color(&self) -> Option<Vec<u8>> {
        let mut color = vec![u8::MAX; self.n_vertices];
        for start in 0..self.n_vertices {
            if color[start] != u8::MAX {
                continue;
            }
            color[start] = 0;
            let mut queue = VecDeque::from([start]);
            while let Some(z) = queue.pop_front() {
                for &(w, _) in &self.adjacency[z] {
                    if color[w] == u8::MAX {
                        color[w] = 1 - color[z];
                        queue.push_back(w);
                    } else if color[w] == color[z] {
                        return None;
                    }
                }
            }
        }
        Some(color)
    }

    /// Edge-list dump: a `#vertices N` header, then one `u v` pair per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("#vertices {}\n", self.n_vertices);
        for &(u, v) in &self.edges {
            let _ = writeln!(out, "{u} {v}");
        }
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut n_vertices = None;
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("#vertices") {
                let n = rest.trim().parse::<usize>().map_err(|_| {
                    Error::InvalidGraph(format!("line {}: bad vertex count", lineno + 1))
                })?;
                n_vertices = Some(n);
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace().map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(u)), Some(Ok(v)), None) => edges.push((u, v)),
                _ => {
                    return Err(Error::InvalidGraph(format!(
                        "line {}: expected `u v`",
                        lineno + 1
                    )))
                }
            }
        }
        let n = n_vertices
            .ok_or_else(|| Error::InvalidGraph("missing `#vertices N` header".into()))?;
        Graph::from_edges(n, &edges)
    }

    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_edge_list()).map_err(Error::from)
    }

    pub fn read_edge_list(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Graph::from_edge_list(&text)
    }
}

fn decode(mut x: usize, side: usize, coords: &mut [usize]) {
    for c in coords.iter_mut() {
        *c = x % side;
        x /= side;
    }
}

fn encode(coords: &[usize], side: usize) -> usize {
    coords.iter().rev().fold(0, |acc, &c| acc * side + c)
}

/// A simple cycle: its cyclic vertex sequence and the edges between
/// consecutive vertices (`edges[i]` joins `vertices[i]` and `vertices[i+1]`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SimpleCycle {
    pub vertices: Vec<usize>,
    pub edges: Vec<usize>,
}

impl SimpleCycle {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleList {
    pub cycles: Vec<SimpleCycle>,
    pub max_len: usize,
}

impl CycleList {
    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }

    /// Whether the listed cycles span the cycle space of the graph
    /// (rank over GF(2) equals `|E| - |V| + #components`).
    pub fn spans_cycle_space(&self, g: &Graph) -> bool {
        let target = g.n_edges() + components(g) - g.n_vertices();
        let words = g.n_edges().div_ceil(64);
        let mut basis: Vec<Vec<u64>> = Vec::new();
        for c in &self.cycles {
            let mut row = vec![0u64; words];
            for &e in &c.edges {
                row[e / 64] ^= 1 << (e % 64);
            }
            for b in &basis {
                let pivot = leading_bit(b);
                if row[pivot / 64] >> (pivot % 64) & 1 == 1 {
                    for (r, bb) in row.iter_mut().zip(b) {
                        *r ^= bb;
                    }
                }
            }
            if row.iter().any(|&w| w != 0) {
                basis.push(row);
                basis.sort_by_key(|b| std::cmp::Reverse(leading_bit(b)));
            }
        }
        basis.len() == target
    }
}

fn leading_bit(row: &[u64]) -> usize {
    for (i, &w) in row.iter().enumerate().rev() {
        if w != 0 {
            return i * 64 + 63 - w.leading_zeros() as usize;
        }
    }
    0
}

fn components(g: &Graph) -> usize {
    let mut seen = vec![false; g.n_vertices()];
    let mut count = 0;
    for s in 0..g.n_vertices() {
        if seen[s] {
            continue;
        }
        count += 1;
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(z) = stack.pop() {
            for &(w, _) in g.neighbors(z) {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
    }
    count
}

/// Canonical form of a cyclic vertex sequence: the lexicographically minimal
/// rotation among both orientations.
pub fn canonical_cycle(vertices: &[usize]) -> Vec<usize> {
    let fwd = min_rotation(vertices);
    let rev: Vec<usize> = vertices.iter().rev().copied().collect();
    let bwd = min_rotation(&rev);
    fwd.min(bwd)
}

pub(crate) fn min_rotation(seq: &[usize]) -> Vec<usize> {
    let n = seq.len();
    (0..n)
        .map(|r| seq[r..].iter().chain(&seq[..r]).copied().collect::<Vec<_>>())
        .min()
        .unwrap_or_default()
}

/// All simple cycles of length `3..=max_len`, each listed once up to rotation
/// and reflection, in canonical vertex order.
pub fn enumerate_cycles(g: &Graph, max_len: usize) -> CycleList {
    let mut cycles = Vec::new();
    let mut on_path = vec![false; g.n_vertices()];
    for start in 0..g.n_vertices() {
        let mut path = vec![start];
        let mut edge_path = Vec::new();
        on_path[start] = true;
        extend_cycles(g, start, max_len, &mut path, &mut edge_path, &mut on_path, &mut cycles);
        on_path[start] = false;
    }
    cycles.sort_by(|a: &SimpleCycle, b| (a.len(), &a.vertices).cmp(&(b.len(), &b.vertices)));
    CycleList { cycles, max_len }
}

/// Straight non-contractible cycles of a periodic lattice, one per line
/// parallel to each axis.
pub fn winding_cycles(g: &Graph) -> Vec<SimpleCycle> {
    let Some(lat) = g.lattice() else { return Vec::new() };
    if !lat.periodic {
        return Vec::new();
    }
    let mut out = Vec::new();
    for axis in 0..lat.dim {
        for x in 0..g.n_vertices() {
            if g.coords(x).expect("lattice vertex")[axis] != 0 {
                continue;
            }
            let mut step = vec![0i64; lat.dim];
            step[axis] = 1;
            let mut vertices = vec![x];
            let mut edges = Vec::new();
            let mut cur = x;
            for _ in 0..lat.side {
                let next = g.translate(cur, &step).expect("torus");
                edges.push(g.edge_between(cur, next).expect("lattice edge"));
                if next != x {
                    vertices.push(next);
                }
                cur = next;
            }
            out.push(SimpleCycle { vertices, edges });
        }
    }
    out
}

/// Short cycles up to `max_len` plus, on a torus, the straight winding
/// cycles, so that the list spans the cycle space.
pub fn move_cycles(g: &Graph, max_len: usize) -> CycleList {
    let mut list = enumerate_cycles(g, max_len);
    let have: HashSet<Vec<usize>> = list.cycles.iter().map(|c| canonical_cycle(&c.vertices)).collect();
    for c in winding_cycles(g) {
        if !have.contains(&canonical_cycle(&c.vertices)) {
            list.cycles.push(c);
        }
    }
    list
}

fn extend_cycles(
    g: &Graph,
    start: usize,
    max_len: usize,
    path: &mut Vec<usize>,
    edge_path: &mut Vec<usize>,
    on_path: &mut [bool],
    out: &mut Vec<SimpleCycle>,
) {
    let last = *path.last().unwrap();
    for &(w, e) in g.neighbors(last) {
        if w == start {
            // Each cycle is reached in both directions; keep the one whose
            // second vertex is smaller than its last.
            if path.len() >= 3 && path[1] < last {
                let mut edges = edge_path.clone();
                edges.push(e);
                out.push(SimpleCycle { vertices: path.clone(), edges });
            }
            continue;
        }
        if w < start || on_path[w] || path.len() >= max_len {
            continue;
        }
        on_path[w] = true;
        path.push(w);
        edge_path.push(e);
        extend_cycles(g, start, max_len, path, edge_path, on_path, out);
        edge_path.pop();
        path.pop();
        on_path[w] = false;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_sizes_and_bipartition() {
        let g = Graph::torus(3, 2).unwrap();
        assert_eq!((g.n_vertices(), g.n_edges(), g.is_bipartite()), (9, 18, false));
        let g = Graph::torus(4, 2).unwrap();
        assert_eq!((g.n_vertices(), g.n_edges(), g.is_bipartite()), (16, 32, true));
        assert!(g.verify_bipartition());
        assert!((0..16).all(|x| g.degree(x) == 4));
        assert!(Graph::torus(2, 2).is_err());
    }

    #[test]
    fn winding_cycles_complete_the_basis() {
        for side in [4, 5, 6] {
            let g = Graph::torus(side, 2).unwrap();
            let list = move_cycles(&g, 4);
            assert_eq!(list.len(), side * side + 2 * side);
            assert!(list.spans_cycle_space(&g));
            for c in &list.cycles {
                for i in 0..c.len() {
                    let (a, b) = (c.vertices[i], c.vertices[(i + 1) % c.len()]);
                    assert_eq!(g.edge_between(a, b), Some(c.edges[i]));
                }
            }
        }
    }

    #[test]
    fn named_graphs() {
        let g = Graph::named(NamedGraph::SingleEdge).unwrap();
        assert_eq!((g.n_vertices(), g.n_edges(), g.max_degree()), (2, 1, 1));
        let g = Graph::named(NamedGraph::Path(3)).unwrap();
        assert_eq!((g.n_vertices(), g.n_edges(), g.is_bipartite()), (3, 2, true));
        let g = Graph::named(NamedGraph::Cycle(4)).unwrap();
        assert_eq!((g.n_vertices(), g.n_edges(), g.is_bipartite()), (4, 4, true));
        assert!(!Graph::named(NamedGraph::Cycle(5)).unwrap().is_bipartite());
        assert!(Graph::named(NamedGraph::Cycle(2)).is_err());
        let g = Graph::named(NamedGraph::Box { side: 3, dim: 2 }).unwrap();
        assert_eq!((g.n_vertices(), g.n_edges()), (9, 12));
    }

    #[test]
    fn rejects_multi_edges_and_loops() {
        assert!(Graph::from_edges(2, &[(0, 1), (1, 0)]).is_err());
        assert!(Graph::from_edges(2, &[(1, 1)]).is_err());
        assert!(Graph::from_edges(2, &[(0, 2)]).is_err());
    }

    #[test]
    fn cycle_counts() {
        let c4 = Graph::named(NamedGraph::Cycle(4)).unwrap();
        assert_eq!(enumerate_cycles(&c4, 4).len(), 1);
        let p3 = Graph::named(NamedGraph::Path(3)).unwrap();
        assert!(enumerate_cycles(&p3, 6).is_empty());
        let t = Graph::torus(4, 2).unwrap();
        let list = enumerate_cycles(&t, 4);
        assert_eq!(list.len(), 24);
        for c in &list.cycles {
            assert_eq!(canonical_cycle(&c.vertices), c.vertices);
            for (i, &e) in c.edges.iter().enumerate() {
                let (a, b) = (c.vertices[i], c.vertices[(i + 1) % c.len()]);
                assert_eq!(g_edge(&t, a, b), e);
            }
        }
        assert!(list.spans_cycle_space(&t));
    }

    fn g_edge(g: &Graph, a: usize, b: usize) -> usize {
        g.edge_between(a, b).unwrap()
    }

    #[test]
    fn plaquettes_span_open_box_cycle_space() {
        let g = Graph::named(NamedGraph::Box { side: 4, dim: 2 }).unwrap();
        assert!(enumerate_cycles(&g, 4).spans_cycle_space(&g));
        // Plaquettes alone miss the two winding classes of a torus.
        let t = Graph::torus(5, 2).unwrap();
        assert!(!enumerate_cycles(&t, 4).spans_cycle_space(&t));
    }

    #[test]
    fn edge_list_round_trip() {
        let g = Graph::torus(3, 2).unwrap();
        let text = g.to_edge_list();
        assert!(text.starts_with("#vertices 9\n"));
        let h = Graph::from_edge_list(&text).unwrap();
        assert_eq!(h.edges(), g.edges());
        assert!(Graph::from_edge_list("0 1\n").is_err());
    }

    #[test]
    fn translation_wraps() {
        let g = Graph::torus(4, 2).unwrap();
        let x = g.vertex_at(&[3, 0]).unwrap();
        assert_eq!(g.translate(x, &[1, -1]), g.vertex_at(&[0, 3]));
        assert_eq!(g.distance(g.vertex_at(&[0, 0]).unwrap(), g.vertex_at(&[2, 3]).unwrap()), Some(3));
    }
}
