//! The random path model: link counts per edge, perfect pairings of link
//! endpoints at every vertex, the induced cycle decomposition, exact
//! enumeration and the comparison with the loop soup.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::graphs::Graph;
use crate::loops::{canonicalize, LoopClass, RootedLoop};
use crate::numeric::CompensatedSum;
use crate::rwls_exact::ExactEngine;
use crate::weights::WeightFunction;

/// Configurations beyond this count are refused by [`RpmStructure::enumerate`].
pub const MAX_CONFIGS: u128 = 50_000_000;

/// The link with label `label` on edge `edge`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LinkRef {
    pub edge: u32,
    pub label: u32,
}

impl LinkRef {
    pub fn new(edge: usize, label: u32) -> Self {
        LinkRef { edge: edge as u32, label }
    }
}

/// Placeholder partner of a link whose endpoint is not paired yet.
pub const UNPAIRED: LinkRef = LinkRef { edge: u32::MAX, label: u32::MAX };

/// A link configuration with all endpoints paired. `partner[e][l][s]` is
/// the link paired with `(e, l)` at the endpoint of `e` on side `s`
/// (side 0 is the smaller endpoint).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RpmConfig {
    m: Vec<u32>,
    partner: Vec<Vec<[LinkRef; 2]>>,
}

/// One cycle of the decomposition: the vertices visited and the links
/// crossed, started from the least link and projected to a loop class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleRecord {
    pub vertices: Vec<usize>,
    pub links: Vec<LinkRef>,
    pub class: LoopClass,
}

impl CycleRecord {
    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }
}

/// JSON form of a configuration: `m` by edge id and, for every vertex, the
/// list of paired link endpoints as `[[edge, label], [edge, label]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpmSnapshot {
    pub m: Vec<u32>,
    pub pairings: Vec<Vec<[(u32, u32); 2]>>,
}

#[inline]
pub fn side_of(g: &Graph, edge: usize, x: usize) -> usize {
    if g.edge(edge).0 == x {
        0
    } else {
        1
    }
}

#[inline]
pub fn endpoint(g: &Graph, edge: usize, side: usize) -> usize {
    let (u, v) = g.edge(edge);
    if side == 0 {
        u
    } else {
        v
    }
}

impl RpmConfig {
    pub fn empty(g: &Graph) -> Self {
        RpmConfig { m: vec![0; g.n_edges()], partner: vec![Vec::new(); g.n_edges()] }
    }

    pub fn m(&self) -> &[u32] {
        &self.m
    }

    pub fn total_links(&self) -> u64 {
        self.m.iter().map(|&m| m as u64).sum()
    }

    /// Half the number of link endpoints at `x`.
    pub fn local_time(&self, g: &Graph, x: usize) -> u32 {
        g.neighbors(x).iter().map(|&(_, e)| self.m[e]).sum::<u32>() / 2
    }

    pub fn local_times(&self, g: &Graph) -> Vec<u32> {
        (0..g.n_vertices()).map(|x| self.local_time(g, x)).collect()
    }

    #[inline]
    pub fn partner(&self, link: LinkRef, side: usize) -> LinkRef {
        self.partner[link.edge as usize][link.label as usize][side]
    }

    /// Pairs `a` and `b` at vertex `x`; both must touch `x`.
    #[inline]
    pub fn set_pair(&mut self, g: &Graph, x: usize, a: LinkRef, b: LinkRef) {
        let sa = side_of(g, a.edge as usize, x);
        let sb = side_of(g, b.edge as usize, x);
        self.partner[a.edge as usize][a.label as usize][sa] = b;
        self.partner[b.edge as usize][b.label as usize][sb] = a;
    }

    /// Appends an unpaired link with the next free label on `e`.
    pub fn push_link(&mut self, e: usize) -> LinkRef {
        let label = self.m[e];
        self.m[e] += 1;
        self.partner[e].push([UNPAIRED; 2]);
        LinkRef::new(e, label)
    }

    /// Removes the link with the largest label on `e`. Its partners are
    /// left pointing at it; callers repair them.
    pub fn pop_link(&mut self, e: usize) -> Option<LinkRef> {
        if self.m[e] == 0 {
            return None;
        }
        self.m[e] -= 1;
        self.partner[e].pop();
        Some(LinkRef::new(e, self.m[e]))
    }

    /// Every endpoint at every vertex paired, with consistent partners.
    pub fn validate(&self, g: &Graph) -> Result<()> {
        if self.m.len() != g.n_edges() {
            return Err(Error::InvalidConfig("link vector length differs from |E|".into()));
        }
        for x in 0..g.n_vertices() {
            let deg: u32 = g.neighbors(x).iter().map(|&(_, e)| self.m[e]).sum();
            if deg % 2 == 1 {
                return Err(Error::InvalidConfig(format!("odd number of link endpoints at {x}")));
            }
        }
        for e in 0..g.n_edges() {
            if self.partner[e].len() != self.m[e] as usize {
                return Err(Error::InvalidConfig(format!("partner table of edge {e} out of sync")));
            }
            for l in 0..self.m[e] {
                for s in 0..2 {
                    let me = LinkRef::new(e, l);
                    let p = self.partner(me, s);
                    let x = endpoint(g, e, s);
                    if p == UNPAIRED || p.edge as usize >= g.n_edges() || p.label >= self.m[p.edge as usize] {
                        return Err(Error::InvalidConfig(format!("unpaired link {me:?} at {x}")));
                    }
                    let (pu, pv) = g.edge(p.edge as usize);
                    if pu != x && pv != x {
                        return Err(Error::InvalidConfig(format!("{me:?} paired off-vertex at {x}")));
                    }
                    if p == me || self.partner(p, side_of(g, p.edge as usize, x)) != me {
                        return Err(Error::InvalidConfig(format!("asymmetric pairing at {x}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Follows the cycle through `start`, leaving from its side-0 endpoint.
    /// Calls `visit(vertex, link)` for every crossed link.
    fn trace(&self, g: &Graph, start: LinkRef, mut visit: impl FnMut(usize, LinkRef)) {
        let mut link = start;
        let mut from = 0usize;
        loop {
            let e = link.edge as usize;
            visit(endpoint(g, e, from), link);
            let to = 1 - from;
            let x = endpoint(g, e, to);
            let next = self.partner(link, to);
            from = side_of(g, next.edge as usize, x);
            link = next;
            if link == start {
                return;
            }
        }
    }

    /// Vertex sequences of all cycles, each traced from its least link.
    pub fn cycle_sequences(&self, g: &Graph) -> Vec<Vec<usize>> {
        let mut seen: Vec<Vec<bool>> = self.m.iter().map(|&m| vec![false; m as usize]).collect();
        let mut out = Vec::new();
        for e in 0..self.m.len() {
            for l in 0..self.m[e] {
                if seen[e][l as usize] {
                    continue;
                }
                let mut seq = Vec::new();
                self.trace(g, LinkRef::new(e, l), |x, link| {
                    seen[link.edge as usize][link.label as usize] = true;
                    seq.push(x);
                });
                out.push(seq);
            }
        }
        out
    }

    pub fn cycle_count(&self, g: &Graph) -> usize {
        self.cycle_sequences(g).len()
    }

    /// The cycle decomposition, sorted by projected class then links.
    pub fn extract_cycles(&self, g: &Graph) -> Vec<CycleRecord> {
        let mut seen: Vec<Vec<bool>> = self.m.iter().map(|&m| vec![false; m as usize]).collect();
        let mut out = Vec::new();
        for e in 0..self.m.len() {
            for l in 0..self.m[e] {
                if seen[e][l as usize] {
                    continue;
                }
                let mut vertices = Vec::new();
                let mut links = Vec::new();
                self.trace(g, LinkRef::new(e, l), |x, link| {
                    seen[link.edge as usize][link.label as usize] = true;
                    vertices.push(x);
                    links.push(link);
                });
                let rooted = RootedLoop::from_cyclic(g, &vertices).expect("cycle is a closed walk");
                out.push(CycleRecord { class: canonicalize(g, &rooted), vertices, links });
            }
        }
        out.sort_by(|a, b| (&a.class, &a.links).cmp(&(&b.class, &b.links)));
        out
    }

    /// Number of double links on `e`: pairs of links on `e` paired together
    /// at both endpoints.
    pub fn double_links(&self, e: usize) -> u32 {
        let mut k = 0;
        for l in 0..self.m[e] {
            let me = LinkRef::new(e, l);
            let p = self.partner(me, 0);
            if p.edge as usize == e && p.label > l && self.partner(me, 1) == p {
                k += 1;
            }
        }
        k
    }

    pub fn to_snapshot(&self, g: &Graph) -> RpmSnapshot {
        let mut pairings = vec![Vec::new(); g.n_vertices()];
        for e in 0..self.m.len() {
            for l in 0..self.m[e] {
                for s in 0..2 {
                    let me = LinkRef::new(e, l);
                    let p = self.partner(me, s);
                    if me < p {
                        pairings[endpoint(g, e, s)].push([(me.edge, me.label), (p.edge, p.label)]);
                    }
                }
            }
        }
        for p in &mut pairings {
            p.sort_unstable();
        }
        RpmSnapshot { m: self.m.clone(), pairings }
    }

    pub fn from_snapshot(g: &Graph, snap: &RpmSnapshot) -> Result<Self> {
        if snap.m.len() != g.n_edges() || snap.pairings.len() != g.n_vertices() {
            return Err(Error::InvalidConfig("snapshot dimensions do not match the graph".into()));
        }
        let mut c = RpmConfig {
            m: snap.m.clone(),
            partner: snap.m.iter().map(|&m| vec![[UNPAIRED; 2]; m as usize]).collect(),
        };
        for (x, pairs) in snap.pairings.iter().enumerate() {
            for &[(ea, la), (eb, lb)] in pairs {
                for (e, l) in [(ea, la), (eb, lb)] {
                    let ok = (e as usize) < g.n_edges() && l < c.m[e as usize] && {
                        let (u, v) = g.edge(e as usize);
                        u == x || v == x
                    };
                    if !ok {
                        return Err(Error::InvalidConfig(format!("bad link ({e}, {l}) at vertex {x}")));
                    }
                }
                c.set_pair(g, x, LinkRef { edge: ea, label: la }, LinkRef { edge: eb, label: lb });
            }
        }
        c.validate(g)?;
        Ok(c)
    }
}

/// `ln( N^cycles prod_e beta^m_e / m_e! prod_x U(n_x) )`.
pub fn ln_rpm_weight_parts(m: &[u32], cycles: usize, local_times: &[u32], u: &WeightFunction, n: f64, beta: f64) -> f64 {
    let mut s = cycles as f64 * n.ln();
    for &me in m {
        if me > 0 {
            s += me as f64 * beta.ln() - ln_gamma(me as f64 + 1.0);
        }
    }
    for &t in local_times {
        s += u.ln_value(t);
    }
    s
}

/// The unnormalised weight `N^alpha(w) prod_e beta^m_e / m_e! prod_x U(n_x)`.
pub fn rpm_weight(g: &Graph, w: &RpmConfig, u: &WeightFunction, n: f64, beta: f64) -> Result<f64> {
    w.validate(g)?;
    Ok(ln_rpm_weight_parts(w.m(), w.cycle_count(g), &w.local_times(g), u, n, beta).exp())
}

/// Truncation of the link space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RpmCaps {
    /// `m_e <= per_edge` for every edge.
    pub per_edge: Option<u32>,
    /// `sum_e m_e <= total`; equal to a loop soup length cap.
    pub total: Option<u32>,
}

impl RpmCaps {
    pub fn total(t: u32) -> Self {
        RpmCaps { per_edge: None, total: Some(t) }
    }

    pub fn per_edge(m: u32) -> Self {
        RpmCaps { per_edge: Some(m), total: None }
    }
}

/// All configurations sharing a link vector and a projected class multiset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RpmGroup {
    pub m: Vec<u32>,
    pub local_times: Vec<u32>,
    /// `(class index, multiplicity)`, indices into [`RpmStructure::classes`].
    pub classes: Vec<(usize, u32)>,
    pub cycles: usize,
    /// Number of pairings in the group.
    pub count: u64,
}

/// The parameter-free part of an exact enumeration: every configuration
/// within the caps, grouped by the data the weight depends on.
#[derive(Debug, Clone)]
pub struct RpmStructure {
    graph: Graph,
    caps: RpmCaps,
    classes: Vec<LoopClass>,
    groups: Vec<RpmGroup>,
    n_configs: u64,
}

fn double_factorial_odd(n: u32) -> u128 {
    // (2n - 1)!!
    (1..=n as u128).map(|i| 2 * i - 1).product()
}

fn link_vectors(g: &Graph, caps: RpmCaps) -> Vec<Vec<u32>> {
    let per = caps.per_edge.unwrap_or(u32::MAX);
    let total = caps.total.unwrap_or(u32::MAX);
    let mut out = Vec::new();
    let mut cur = vec![0u32; g.n_edges()];
    fn rec(g: &Graph, e: usize, left: u32, per: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if e == cur.len() {
            let even = (0..g.n_vertices())
                .all(|x| g.neighbors(x).iter().map(|&(_, f)| cur[f]).sum::<u32>() % 2 == 0);
            if even {
                out.push(cur.clone());
            }
            return;
        }
        for m in 0..=per.min(left) {
            cur[e] = m;
            rec(g, e + 1, left - m, per, cur, out);
        }
        cur[e] = 0;
    }
    rec(g, 0, total, per, &mut cur, &mut out);
    out
}

impl RpmStructure {
    pub fn enumerate(g: &Graph, caps: RpmCaps) -> Result<Self> {
        if caps.per_edge.is_none() && caps.total.is_none() {
            return Err(invalid("caps", "need a per-edge or a total link cap"));
        }
        let vectors = link_vectors(g, caps);
        let mut size: u128 = 0;
        for m in &vectors {
            let c: u128 = (0..g.n_vertices())
                .map(|x| {
                    let d: u32 = g.neighbors(x).iter().map(|&(_, e)| m[e]).sum();
                    double_factorial_odd(d / 2)
                })
                .product();
            size += c;
            if size > MAX_CONFIGS {
                return Err(Error::BudgetExceeded(format!(
                    "more than {MAX_CONFIGS} random path configurations within {caps:?}"
                )));
            }
        }
        let per_vector: Vec<(Vec<u32>, HashMap<Vec<Vec<usize>>, u64>)> = vectors
            .into_par_iter()
            .map(|m| {
                let groups = pairings_by_classes(g, &m);
                (m, groups)
            })
            .collect();
        let mut class_ids: BTreeMap<Vec<usize>, LoopClass> = BTreeMap::new();
        let mut raw = Vec::new();
        for (m, groups) in per_vector {
            let mut keyed: Vec<_> = groups.into_iter().collect();
            keyed.sort();
            for (reps, count) in keyed {
                for r in &reps {
                    if !class_ids.contains_key(r) {
                        let c = canonicalize(g, &RootedLoop::from_cyclic(g, r).expect("cycle"));
                        class_ids.insert(r.clone(), c);
                    }
                }
                raw.push((m.clone(), reps, count));
            }
        }
        let mut classes: Vec<LoopClass> = class_ids.into_values().collect();
        classes.sort();
        let index: HashMap<Vec<usize>, usize> =
            classes.iter().enumerate().map(|(i, c)| (c.sequence().to_vec(), i)).collect();
        let mut n_configs = 0;
        let groups = raw
            .into_iter()
            .map(|(m, reps, count)| {
                let mut cl: BTreeMap<usize, u32> = BTreeMap::new();
                for r in &reps {
                    *cl.entry(index[r]).or_insert(0) += 1;
                }
                n_configs += count;
                let local_times = (0..g.n_vertices())
                    .map(|x| g.neighbors(x).iter().map(|&(_, e)| m[e]).sum::<u32>() / 2)
                    .collect();
                RpmGroup { m, local_times, cycles: reps.len(), classes: cl.into_iter().collect(), count }
            })
            .collect();
        Ok(RpmStructure { graph: g.clone(), caps, classes, groups, n_configs })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn caps(&self) -> RpmCaps {
        self.caps
    }

    pub fn classes(&self) -> &[LoopClass] {
        &self.classes
    }

    pub fn groups(&self) -> &[RpmGroup] {
        &self.groups
    }

    /// Number of configurations enumerated.
    pub fn n_configs(&self) -> u64 {
        self.n_configs
    }

    /// Total weight of each group at the given parameters.
    pub fn group_weights(&self, u: &WeightFunction, n: f64, beta: f64) -> Vec<f64> {
        self.groups
            .iter()
            .map(|gr| {
                if beta == 0.0 {
                    return if gr.cycles == 0 { gr.count as f64 } else { 0.0 };
                }
                gr.count as f64 * ln_rpm_weight_parts(&gr.m, gr.cycles, &gr.local_times, u, n, beta).exp()
            })
            .collect()
    }

    /// Sums `weight * f(group)` over every group, returning `(Z, sums)`.
    pub fn fold(
        &self,
        u: &WeightFunction,
        n: f64,
        beta: f64,
        n_out: usize,
        f: impl Fn(&RpmGroup, &mut [f64]),
    ) -> (f64, Vec<f64>) {
        let w = self.group_weights(u, n, beta);
        let mut z = CompensatedSum::new();
        let mut sums = vec![CompensatedSum::new(); n_out];
        let mut buf = vec![0.0; n_out];
        for (gr, &wt) in self.groups.iter().zip(&w) {
            if wt == 0.0 {
                continue;
            }
            z += wt;
            buf.iter_mut().for_each(|b| *b = 0.0);
            f(gr, &mut buf);
            for (s, b) in sums.iter_mut().zip(&buf) {
                *s += wt * b;
            }
        }
        (z.value(), sums.iter().map(|s| s.value()).collect())
    }

    /// Double links on `e` in a group: its length-two cycles on `e`.
    pub fn double_links(&self, gr: &RpmGroup, e: usize) -> u32 {
        gr.classes
            .iter()
            .filter(|(c, _)| self.classes[*c].is_bounce() && self.classes[*c].step_edges()[0] == e)
            .map(|&(_, k)| k)
            .sum()
    }

    pub fn evaluate(&self, u: &WeightFunction, n: f64, beta: f64) -> RpmExact {
        let nc = self.classes.len();
        let ne = self.graph.n_edges();
        let nv = self.graph.n_vertices();
        let (z, s) = self.fold(u, n, beta, nc + ne + nv, |gr, out| {
            for &(c, k) in &gr.classes {
                out[c] = k as f64;
            }
            for e in 0..ne {
                out[nc + e] = self.double_links(gr, e) as f64;
            }
            for x in 0..nv {
                out[nc + ne + x] = gr.local_times[x] as f64;
            }
        });
        RpmExact {
            z,
            class_means: self.classes.iter().cloned().zip(s[..nc].iter().map(|v| v / z)).collect(),
            double_link_means: s[nc..nc + ne].iter().map(|v| v / z).collect(),
            local_time_means: s[nc + ne..].iter().map(|v| v / z).collect(),
        }
    }
}

/// Enumerates all pairings for the link vector `m`, returning the number of
/// pairings per sorted list of canonical cycle sequences.
fn pairings_by_classes(g: &Graph, m: &[u32]) -> HashMap<Vec<Vec<usize>>, u64> {
    let mut out = HashMap::new();
    for_each_pairing(g, m, &mut |cfg| {
        let mut key: Vec<Vec<usize>> = cfg
            .cycle_sequences(g)
            .iter()
            .map(|s| canonicalize(g, &RootedLoop::from_cyclic(g, s).expect("cycle")).sequence().to_vec())
            .collect();
        key.sort();
        *out.entry(key).or_insert(0) += 1;
    });
    out
}

/// Calls `f` on every full pairing of the links `m` (assumed even at every
/// vertex), in a fixed order.
pub fn for_each_pairing(g: &Graph, m: &[u32], f: &mut dyn FnMut(&RpmConfig)) {
    let mut cfg = RpmConfig {
        m: m.to_vec(),
        partner: m.iter().map(|&k| vec![[UNPAIRED; 2]; k as usize]).collect(),
    };
    let slots: Vec<Vec<LinkRef>> = (0..g.n_vertices())
        .map(|x| {
            g.neighbors(x)
                .iter()
                .flat_map(|&(_, e)| (0..m[e]).map(move |l| LinkRef::new(e, l)))
                .collect()
        })
        .collect();
    fn match_vertex(
        g: &Graph,
        x: usize,
        slots: &[Vec<LinkRef>],
        free: &mut Vec<LinkRef>,
        cfg: &mut RpmConfig,
        f: &mut dyn FnMut(&RpmConfig),
    ) {
        if free.is_empty() {
            if x + 1 == slots.len() {
                f(cfg);
            } else {
                let mut next = slots[x + 1].clone();
                match_vertex(g, x + 1, slots, &mut next, cfg, f);
            }
            return;
        }
        let a = free.remove(0);
        for i in 0..free.len() {
            let b = free.remove(i);
            cfg.set_pair(g, x, a, b);
            match_vertex(g, x, slots, free, cfg, f);
            free.insert(i, b);
        }
        free.insert(0, a);
    }
    let mut first = slots[0].clone();
    match_vertex(g, 0, &slots, &mut first, &mut cfg, f);
}

/// Every configuration within the caps, listed explicitly.
pub fn enumerate_configs(g: &Graph, caps: RpmCaps, limit: usize) -> Result<Vec<RpmConfig>> {
    if caps.per_edge.is_none() && caps.total.is_none() {
        return Err(invalid("caps", "need a per-edge or a total link cap"));
    }
    let mut out = Vec::new();
    for m in link_vectors(g, caps) {
        let c: u128 = (0..g.n_vertices())
            .map(|x| double_factorial_odd(g.neighbors(x).iter().map(|&(_, e)| m[e]).sum::<u32>() / 2))
            .product();
        if out.len() as u128 + c > limit as u128 {
            return Err(Error::BudgetExceeded(format!("more than {limit} configurations within {caps:?}")));
        }
        for_each_pairing(g, &m, &mut |cfg| out.push(cfg.clone()));
    }
    Ok(out)
}

/// Exact expectations of the random path model within caps.
#[derive(Debug, Clone)]
pub struct RpmExact {
    pub z: f64,
    pub class_means: Vec<(LoopClass, f64)>,
    /// `E[k~_e]` by edge id.
    pub double_link_means: Vec<f64>,
    /// `E[n_x]` by vertex.
    pub local_time_means: Vec<f64>,
}

pub fn enumerate_rpm(g: &Graph, u: &WeightFunction, n: f64, beta: f64, caps: RpmCaps) -> Result<RpmExact> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(invalid("beta", format!("must be finite and >= 0 (got {beta})")));
    }
    if !(n.is_finite() && n > 0.0) {
        return Err(invalid("N", format!("must be > 0 (got {n})")));
    }
    Ok(RpmStructure::enumerate(g, caps)?.evaluate(u, n, beta))
}

/// A product observable `prod_(e, f) f(k_e)` over length-two loop counts.
pub type EdgeProduct = Vec<(usize, fn(u32) -> f64)>;

#[derive(Debug, Clone, Serialize)]
pub struct ClassGap {
    pub class: String,
    pub alpha: usize,
    pub rwls: f64,
    pub rpm: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub t_max: usize,
    pub class_gaps: Vec<ClassGap>,
    pub edge_gaps: Vec<f64>,
    /// Largest pointwise gap between the two laws of the class multiset.
    pub distribution_gap: f64,
    pub z_rwls: f64,
    pub z_rpm: f64,
    pub max_gap: f64,
}

/// Compares the loop soup and the random path model at the same total
/// length cap `t_max`, where both sums range over the same class multisets.
pub fn crosscheck_equivalence(
    engine: &ExactEngine,
    rpm: &RpmStructure,
    u: &WeightFunction,
    n: f64,
    beta: f64,
    max_alpha: usize,
    edge_products: &[EdgeProduct],
) -> Result<EquivalenceReport> {
    let t_max = engine.t_max();
    if rpm.caps().total != Some(t_max as u32) || rpm.caps().per_edge.is_some_and(|p| (p as usize) < t_max) {
        return Err(invalid("caps", "random path caps must match the loop soup length cap"));
    }
    // Map structure classes onto engine classes.
    let to_engine: Vec<usize> = rpm
        .classes()
        .iter()
        .map(|c| engine.class_index(c).ok_or_else(|| Error::Degenerate(format!("class {c} missing"))))
        .collect::<Result<_>>()?;

    let edge_count_rwls = |v: &crate::rwls_exact::MultisetView, e: usize| {
        engine.bounce_class(e).map_or(0, |b| v.count(b))
    };

    let mut law_rwls: HashMap<Vec<(usize, u32)>, f64> = HashMap::new();
    let mut z_r = CompensatedSum::new();
    let mut prod_r = vec![CompensatedSum::new(); edge_products.len()];
    engine.for_each_multiset(None, t_max, |v| {
        if v.weight == 0.0 {
            return;
        }
        z_r += v.weight;
        *law_rwls.entry(v.entries.to_vec()).or_insert(0.0) += v.weight;
        for (p, acc) in edge_products.iter().zip(prod_r.iter_mut()) {
            let val: f64 = p.iter().map(|&(e, f)| f(edge_count_rwls(v, e))).product();
            *acc += v.weight * val;
        }
    });
    let z_rwls = z_r.value();

    let weights = rpm.group_weights(u, n, beta);
    let mut law_rpm: HashMap<Vec<(usize, u32)>, CompensatedSum> = HashMap::new();
    let mut z_p = CompensatedSum::new();
    let mut prod_p = vec![CompensatedSum::new(); edge_products.len()];
    for (gr, &w) in rpm.groups().iter().zip(&weights) {
        if w == 0.0 {
            continue;
        }
        z_p += w;
        let mut key: Vec<(usize, u32)> = gr.classes.iter().map(|&(c, k)| (to_engine[c], k)).collect();
        key.sort_unstable();
        *law_rpm.entry(key).or_default() += w;
        for (p, acc) in edge_products.iter().zip(prod_p.iter_mut()) {
            let val: f64 = p.iter().map(|&(e, f)| f(rpm.double_links(gr, e))).product();
            *acc += w * val;
        }
    }
    let z_rpm = z_p.value();

    let mut distribution_gap: f64 = 0.0;
    let mut means_rwls = vec![0.0; engine.classes().len()];
    let mut means_rpm = vec![0.0; engine.classes().len()];
    for (key, w) in &law_rwls {
        let pr = w / z_rwls;
        let pp = law_rpm.get(key).map_or(0.0, |s| s.value() / z_rpm);
        distribution_gap = distribution_gap.max((pr - pp).abs());
        for &(c, k) in key {
            means_rwls[c] += k as f64 * pr;
        }
    }
    for (key, s) in &law_rpm {
        let pp = s.value() / z_rpm;
        if !law_rwls.contains_key(key) {
            distribution_gap = distribution_gap.max(pp);
        }
        for &(c, k) in key {
            means_rpm[c] += k as f64 * pp;
        }
    }

    let class_gaps: Vec<ClassGap> = engine
        .classes()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.alpha() <= max_alpha)
        .map(|(i, c)| ClassGap {
            class: c.to_string(),
            alpha: c.alpha(),
            rwls: means_rwls[i],
            rpm: means_rpm[i],
            gap: (means_rwls[i] - means_rpm[i]).abs(),
        })
        .collect();
    let edge_gaps: Vec<f64> = prod_r
        .iter()
        .zip(&prod_p)
        .map(|(a, b)| (a.value() / z_rwls - b.value() / z_rpm).abs())
        .collect();
    let max_gap = class_gaps
        .iter()
        .map(|g| g.gap)
        .chain(edge_gaps.iter().copied())
        .chain(std::iter::once(distribution_gap))
        .fold(0.0, f64::max);
    Ok(EquivalenceReport { t_max, class_gaps, edge_gaps, distribution_gap, z_rwls, z_rpm, max_gap })
}
