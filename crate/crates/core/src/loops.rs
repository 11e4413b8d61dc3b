//! Rooted oriented loops and their equivalence classes under re-rooting and
//! time reversal.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{min_rotation, Graph};

/// A closed nearest-neighbour walk `l(0), ..., l(k)` with `l(0) = l(k)`.
/// Stored without the repeated endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RootedLoop {
    steps: Vec<usize>,
}

impl RootedLoop {
    /// Builds a loop from a closed vertex sequence such as `[0, 1, 0]`.
    pub fn new(g: &Graph, closed: &[usize]) -> Result<Self> {
        if closed.len() < 3 {
            return Err(Error::InvalidLoop(format!("need at least two steps, got {closed:?}")));
        }
        if closed.first() != closed.last() {
            return Err(Error::InvalidLoop(format!("sequence {closed:?} is not closed")));
        }
        for w in closed.windows(2) {
            if w[0] >= g.n_vertices() || w[1] >= g.n_vertices() {
                return Err(Error::InvalidLoop(format!("vertex out of range in {closed:?}")));
            }
            if g.edge_between(w[0], w[1]).is_none() {
                return Err(Error::InvalidLoop(format!("{} -> {} is not an edge", w[0], w[1])));
            }
        }
        Ok(RootedLoop { steps: closed[..closed.len() - 1].to_vec() })
    }

    /// Builds a loop from the cyclic sequence `l(0..k)` without the closing vertex.
    pub fn from_cyclic(g: &Graph, cyclic: &[usize]) -> Result<Self> {
        let mut closed = cyclic.to_vec();
        if let Some(&first) = cyclic.first() {
            closed.push(first);
        }
        Self::new(g, &closed)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `l(0), ..., l(k-1)`.
    pub fn cyclic(&self) -> &[usize] {
        &self.steps
    }

    /// Number of times `i in 0..k` with `l(i) = x`.
    pub fn local_time(&self, x: usize) -> u32 {
        self.steps.iter().filter(|&&v| v == x).count() as u32
    }

    pub fn rotated(&self, r: usize) -> RootedLoop {
        let mut s = self.steps.clone();
        let n = s.len().max(1);
        s.rotate_left(r % n);
        RootedLoop { steps: s }
    }

    pub fn reversed(&self) -> RootedLoop {
        RootedLoop { steps: reverse_cyclic(&self.steps) }
    }
}

/// An equivalence class of rooted oriented loops, represented by its
/// lexicographically least rotation over both orientations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoopClass {
    rep: Vec<usize>,
    step_edges: Vec<usize>,
    multiplicity: u32,
    delta: u32,
    visits: Vec<(usize, u32)>,
    edge_use: Vec<(usize, u32)>,
    even_steps: Vec<(usize, u32)>,
}

impl PartialEq for LoopClass {
    fn eq(&self, other: &Self) -> bool {
        self.rep == other.rep
    }
}

impl Eq for LoopClass {}

impl std::hash::Hash for LoopClass {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.rep.hash(state)
    }
}

impl PartialOrd for LoopClass {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for LoopClass {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.rep.len(), &self.rep).cmp(&(other.rep.len(), &other.rep))
    }
}

impl fmt::Display for LoopClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for v in &self.rep {
            write!(f, "{v},")?;
        }
        write!(f, "{}]", self.rep[0])
    }
}

/// Summary statistics of a class, mirroring the accessors on [`LoopClass`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassStats {
    pub alpha: usize,
    pub multiplicity: u32,
    pub delta: u32,
    pub size: usize,
    pub visits: Vec<(usize, u32)>,
    pub edge_use: Vec<(usize, u32)>,
    pub even_steps: Vec<(usize, u32)>,
    pub support: Vec<usize>,
}

pub fn canonicalize(g: &Graph, l: &RootedLoop) -> LoopClass {
    let fwd = min_rotation(&l.steps);
    let bwd = min_rotation(&reverse_cyclic(&l.steps));
    let rep = if bwd < fwd { bwd.clone() } else { fwd.clone() };
    let delta = if fwd == bwd { 1 } else { 2 };
    let alpha = rep.len();
    let period = (1..=alpha)
        .find(|&p| alpha % p == 0 && (0..alpha).all(|i| rep[i] == rep[(i + p) % alpha]))
        .unwrap_or(alpha);
    let step_edges: Vec<usize> = (0..alpha)
        .map(|i| g.edge_between(rep[i], rep[(i + 1) % alpha]).expect("validated loop"))
        .collect();
    let mut visits = BTreeMap::new();
    for &v in &rep {
        *visits.entry(v).or_insert(0u32) += 1;
    }
    let mut edge_use = BTreeMap::new();
    for &e in &step_edges {
        *edge_use.entry(e).or_insert(0u32) += 1;
    }
    let mut even = BTreeMap::new();
    for j in 0..alpha / 2 {
        *even.entry(step_edges[2 * j]).or_insert(0u32) += 1;
    }
    LoopClass {
        rep,
        step_edges,
        multiplicity: (alpha / period) as u32,
        delta,
        visits: visits.into_iter().collect(),
        edge_use: edge_use.into_iter().collect(),
        even_steps: even.into_iter().collect(),
    }
}

/// Parses a closed vertex sequence literal and canonicalizes it.
pub fn class_from_sequence(g: &Graph, closed: &[usize]) -> Result<LoopClass> {
    Ok(canonicalize(g, &RootedLoop::new(g, closed)?))
}

impl LoopClass {
    /// Canonical representative as a rooted loop.
    pub fn representative(&self) -> RootedLoop {
        RootedLoop { steps: self.rep.clone() }
    }

    /// Canonical cyclic sequence, without the closing vertex.
    pub fn sequence(&self) -> &[usize] {
        &self.rep
    }

    /// Edge ids of the steps of the canonical representative.
    pub fn step_edges(&self) -> &[usize] {
        &self.step_edges
    }

    pub fn alpha(&self) -> usize {
        self.rep.len()
    }

    /// `J`: the loop is the `J`-fold repeat of a primitive loop.
    pub fn multiplicity(&self) -> u32 {
        self.multiplicity
    }

    /// `1` if the reversal is a rotation of the loop, `2` otherwise.
    pub fn delta(&self) -> u32 {
        self.delta
    }

    /// Number of rooted oriented loops in the class, `alpha * delta / J`.
    pub fn size(&self) -> usize {
        self.alpha() * self.delta as usize / self.multiplicity as usize
    }

    /// `(x, n_x)` for every visited vertex, sorted by vertex.
    pub fn visits(&self) -> &[(usize, u32)] {
        &self.visits
    }

    pub fn visit_count(&self, x: usize) -> u32 {
        lookup(&self.visits, x)
    }

    /// `(e, m_e)`: number of steps across each edge.
    pub fn edge_use(&self) -> &[(usize, u32)] {
        &self.edge_use
    }

    /// `(e, q_e)`: number of `j < alpha/2` with `(l(2j), l(2j+1))` across `e`.
    pub fn even_steps(&self) -> &[(usize, u32)] {
        &self.even_steps
    }

    pub fn even_step_count(&self, e: usize) -> u32 {
        lookup(&self.even_steps, e)
    }

    pub fn support(&self) -> Vec<usize> {
        self.visits.iter().map(|&(x, _)| x).collect()
    }

    pub fn stats(&self) -> ClassStats {
        ClassStats {
            alpha: self.alpha(),
            multiplicity: self.multiplicity,
            delta: self.delta,
            size: self.size(),
            visits: self.visits.clone(),
            edge_use: self.edge_use.clone(),
            even_steps: self.even_steps.clone(),
            support: self.support(),
        }
    }

    /// A length-two loop `x, y, x`.
    pub fn is_bounce(&self) -> bool {
        self.rep.len() == 2
    }
}

fn lookup(pairs: &[(usize, u32)], key: usize) -> u32 {
    pairs
        .binary_search_by_key(&key, |&(k, _)| k)
        .map(|i| pairs[i].1)
        .unwrap_or(0)
}

fn reverse_cyclic(s: &[usize]) -> Vec<usize> {
    if s.is_empty() {
        return Vec::new();
    }
    let mut r = Vec::with_capacity(s.len());
    r.push(s[0]);
    r.extend(s[1..].iter().rev());
    r
}

/// Every loop class with `alpha <= max_len`, sorted by length then sequence.
pub fn enumerate_classes(g: &Graph, max_len: usize) -> Vec<LoopClass> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut path = Vec::with_capacity(max_len);
    for root in 0..g.n_vertices() {
        let dist = bfs_distances(g, root);
        path.clear();
        path.push(root);
        rooted_dfs(g, root, max_len, &dist, &mut path, &mut |seq| {
            // Only sequences already at their least rotation need a look.
            if seq.iter().any(|&v| v < root) {
                return;
            }
            let fwd = min_rotation(seq);
            if fwd != seq {
                return;
            }
            if reverse_min(seq) < fwd {
                return;
            }
            if seen.insert(fwd.clone()) {
                out.push(canonicalize(g, &RootedLoop { steps: fwd }));
            }
        });
    }
    out.sort();
    out
}

fn reverse_min(seq: &[usize]) -> Vec<usize> {
    min_rotation(&reverse_cyclic(seq))
}

fn bfs_distances(g: &Graph, root: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX / 2; g.n_vertices()];
    let mut queue = std::collections::VecDeque::from([root]);
    dist[root] = 0;
    while let Some(x) = queue.pop_front() {
        for &(y, _) in g.neighbors(x) {
            if dist[y] > dist[x] + 1 {
                dist[y] = dist[x] + 1;
                queue.push_back(y);
            }
        }
    }
    dist
}

fn rooted_dfs(
    g: &Graph,
    root: usize,
    max_len: usize,
    dist: &[usize],
    path: &mut Vec<usize>,
    visit: &mut dyn FnMut(&[usize]),
) {
    let cur = *path.last().unwrap();
    let len = path.len();
    for &(nb, _) in g.neighbors(cur) {
        if nb < root {
            continue;
        }
        if nb == root && len >= 2 {
            visit(path);
        }
        if len < max_len {
            if len + dist[nb] > max_len {
                continue;
            }
            path.push(nb);
            rooted_dfs(g, root, max_len, dist, path, visit);
            path.pop();
        }
    }
}
