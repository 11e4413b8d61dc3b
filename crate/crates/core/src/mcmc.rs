//! Markov chain on truncated random path configurations.
//!
//! A sweep resamples the pairing at every vertex from its exact conditional
//! law (Ewens repair), then makes one double-link proposal per edge and one
//! cycle proposal per listed simple cycle. Insertions always use the top
//! labels and deletions only remove the top labels, so every Metropolis
//! move is a deterministic involution given its edge or cycle.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::ewens::{cycle_count, ewens_normalizer, permutations, sample_ewens};
use crate::estimators::stats::integrated_autocorrelation;
use crate::graphs::{move_cycles, CycleList, Graph, SimpleCycle};
use crate::rpm::{enumerate_configs, ln_rpm_weight_parts, side_of, LinkRef, RpmCaps, RpmConfig, RpmSnapshot};
use crate::weights::WeightFunction;

/// Default per-edge link cap.
pub const DEFAULT_M_CAP: u32 = 64;
/// Default burn-in in sweeps.
pub const DEFAULT_BURN_IN: u64 = 1000;

/// Everything a chain needs that does not change while it runs.
#[derive(Debug, Clone)]
pub struct Model {
    graph: Graph,
    weight: WeightFunction,
    n: f64,
    beta: f64,
    m_cap: u32,
    cycles: CycleList,
}

impl Model {
    pub fn new(graph: Graph, weight: WeightFunction, n: f64, beta: f64, m_cap: u32, cycles: CycleList) -> Result<Self> {
        if !weight.is_positive() {
            return Err(invalid("weight", "the chain needs U(n) > 0 for every n"));
        }
        if !(n.is_finite() && n > 0.0) {
            return Err(invalid("N", format!("must be > 0 (got {n})")));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(invalid("beta", format!("must be finite and >= 0 (got {beta})")));
        }
        if m_cap < 2 {
            return Err(invalid("m_cap", "must be at least 2"));
        }
        for c in &cycles.cycles {
            let ok = c.len() >= 3
                && c.edges.len() == c.len()
                && (0..c.len()).all(|i| {
                    let (a, b) = (c.vertices[i], c.vertices[(i + 1) % c.len()]);
                    c.edges[i] < graph.n_edges() && graph.edge_between(a, b) == Some(c.edges[i])
                });
            if !ok {
                return Err(invalid("cycles", format!("{:?} is not a simple cycle of the graph", c.vertices)));
            }
        }
        Ok(Model { graph, weight, n, beta, m_cap, cycles })
    }

    /// Uses the short cycles up to `max_len` plus winding cycles on a torus.
    pub fn with_cycle_len(graph: Graph, weight: WeightFunction, n: f64, beta: f64, m_cap: u32, max_len: usize) -> Result<Self> {
        let cycles = move_cycles(&graph, max_len);
        Model::new(graph, weight, n, beta, m_cap, cycles)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn weight(&self) -> &WeightFunction {
        &self.weight
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn m_cap(&self) -> u32 {
        self.m_cap
    }

    pub fn cycles(&self) -> &CycleList {
        &self.cycles
    }

    /// Whether the cycle proposals span the cycle space of the graph.
    pub fn cycle_coverage(&self) -> bool {
        self.cycles.spans_cycle_space(&self.graph)
    }

    /// `ln mu(w)` for a valid configuration.
    pub fn ln_weight(&self, cfg: &RpmConfig) -> f64 {
        ln_rpm_weight_parts(
            cfg.m(),
            cfg.cycle_count(&self.graph),
            &cfg.local_times(&self.graph),
            &self.weight,
            self.n,
            self.beta,
        )
    }

    /// The half loops at `x`: for each excursion leaving `x`, its departure
    /// link and the link it returns by. Links are listed by the slot order
    /// of `x` (neighbours, then labels).
    pub fn half_loops(&self, cfg: &RpmConfig, x: usize) -> Vec<(LinkRef, LinkRef)> {
        let g = &self.graph;
        let nbrs = g.neighbors(x);
        let mut offset = Vec::with_capacity(nbrs.len() + 1);
        offset.push(0usize);
        for &(_, e) in nbrs {
            offset.push(offset.last().unwrap() + cfg.m()[e] as usize);
        }
        let slot = |l: LinkRef| -> usize {
            let pos = nbrs.iter().position(|&(_, e)| e == l.edge as usize).expect("link touches x");
            offset[pos] + l.label as usize
        };
        let mut used = vec![false; *offset.last().unwrap()];
        let mut out = Vec::with_capacity(used.len() / 2);
        for &(_, e) in nbrs {
            for l in 0..cfg.m()[e] {
                let s = LinkRef::new(e, l);
                if used[slot(s)] {
                    continue;
                }
                let mut link = s;
                let mut at = x;
                let t = loop {
                    let le = link.edge as usize;
                    let y = g.other_end(le, at);
                    if y == x {
                        break link;
                    }
                    link = cfg.partner(link, side_of(g, le, y));
                    at = y;
                };
                used[slot(s)] = true;
                used[slot(t)] = true;
                out.push((s, t));
            }
        }
        out
    }

    /// Repairs `x`: half loop `i` is walked forwards unless `flip[i]`, and
    /// its outgoing end is joined to the incoming end of half loop `sigma[i]`.
    pub fn rewire(&self, cfg: &mut RpmConfig, x: usize, halves: &[(LinkRef, LinkRef)], flip: &[bool], sigma: &[usize]) {
        // Forward walk of (s, t): departs via s, returns via t, so t is the
        // end that leads on and s the end that is arrived at.
        let ends: Vec<(LinkRef, LinkRef)> =
            halves.iter().zip(flip).map(|(&(s, t), &f)| if f { (t, s) } else { (s, t) }).collect();
        for (i, &(_, out)) in ends.iter().enumerate() {
            cfg.set_pair(&self.graph, x, out, ends[sigma[i]].0);
        }
    }

    /// Metropolis ratio of inserting (`insert`) or deleting a double link on
    /// `e`, or `None` when the move is not available.
    pub fn double_link_ratio(&self, cfg: &RpmConfig, lt: &[u32], e: usize, insert: bool) -> Option<f64> {
        let (x, y) = self.graph.edge(e);
        let m = cfg.m()[e];
        let u = &self.weight;
        if insert {
            if m + 2 > self.m_cap {
                return None;
            }
            let w = self.n * self.beta * self.beta / ((m + 1) as f64 * (m + 2) as f64);
            Some(w * u.ratio(lt[x], lt[x] + 1) * u.ratio(lt[y], lt[y] + 1))
        } else {
            if !self.top_double_link(cfg, e) {
                return None;
            }
            let w = (m as f64 * (m - 1) as f64) / (self.n * self.beta * self.beta);
            Some(w * u.ratio(lt[x], lt[x] - 1) * u.ratio(lt[y], lt[y] - 1))
        }
    }

    fn top_double_link(&self, cfg: &RpmConfig, e: usize) -> bool {
        let m = cfg.m()[e];
        if m < 2 {
            return false;
        }
        let a = LinkRef::new(e, m - 1);
        let b = LinkRef::new(e, m - 2);
        cfg.partner(a, 0) == b && cfg.partner(a, 1) == b
    }

    pub fn apply_double_link(&self, cfg: &mut RpmConfig, lt: &mut [u32], e: usize, insert: bool) {
        let g = &self.graph;
        let (x, y) = g.edge(e);
        if insert {
            let a = cfg.push_link(e);
            let b = cfg.push_link(e);
            cfg.set_pair(g, x, a, b);
            cfg.set_pair(g, y, a, b);
            lt[x] += 1;
            lt[y] += 1;
        } else {
            cfg.pop_link(e);
            cfg.pop_link(e);
            lt[x] -= 1;
            lt[y] -= 1;
        }
    }

    /// Metropolis ratio of inserting or deleting one loop around cycle `c`.
    pub fn cycle_ratio(&self, cfg: &RpmConfig, lt: &[u32], c: &SimpleCycle, insert: bool) -> Option<f64> {
        let u = &self.weight;
        let m = cfg.m();
        if insert {
            if c.edges.iter().any(|&e| m[e] + 1 > self.m_cap) {
                return None;
            }
            let mut r = self.n;
            for &e in &c.edges {
                r *= self.beta / (m[e] + 1) as f64;
            }
            for &x in &c.vertices {
                r *= u.ratio(lt[x], lt[x] + 1);
            }
            Some(r)
        } else {
            if !self.top_cycle(cfg, c) {
                return None;
            }
            let mut r = 1.0 / self.n;
            for &e in &c.edges {
                r *= m[e] as f64 / self.beta;
            }
            for &x in &c.vertices {
                r *= u.ratio(lt[x], lt[x] - 1);
            }
            Some(r)
        }
    }

    fn top_cycle(&self, cfg: &RpmConfig, c: &SimpleCycle) -> bool {
        let m = cfg.m();
        if c.edges.iter().any(|&e| m[e] == 0) {
            return false;
        }
        let k = c.len();
        (0..k).all(|i| {
            let e = c.edges[i];
            let f = c.edges[(i + 1) % k];
            let v = c.vertices[(i + 1) % k];
            cfg.partner(LinkRef::new(e, m[e] - 1), side_of(&self.graph, e, v)) == LinkRef::new(f, m[f] - 1)
        })
    }

    pub fn apply_cycle(&self, cfg: &mut RpmConfig, lt: &mut [u32], c: &SimpleCycle, insert: bool) {
        let k = c.len();
        if insert {
            let links: Vec<LinkRef> = c.edges.iter().map(|&e| cfg.push_link(e)).collect();
            for i in 0..k {
                cfg.set_pair(&self.graph, c.vertices[(i + 1) % k], links[i], links[(i + 1) % k]);
            }
            for &x in &c.vertices {
                lt[x] += 1;
            }
        } else {
            for &e in &c.edges {
                cfg.pop_link(e);
            }
            for &x in &c.vertices {
                lt[x] -= 1;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counter {
    pub proposed: u64,
    pub accepted: u64,
}

impl Counter {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        if accepted {
            self.accepted += 1;
        }
    }
}

/// Proposal and acceptance counts per move type.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveStats {
    pub repairs: u64,
    pub double_insert: Counter,
    pub double_delete: Counter,
    pub cycle_insert: Counter,
    pub cycle_delete: Counter,
    /// Insertions refused because a link count would exceed the cap.
    pub cap_rejections: u64,
    /// Deletions refused because the top links did not form the loop.
    pub pattern_rejections: u64,
}

impl MoveStats {
    /// Fraction of insertion proposals refused at the cap.
    pub fn cap_hit_rate(&self) -> f64 {
        let p = self.double_insert.proposed + self.cycle_insert.proposed;
        if p == 0 {
            0.0
        } else {
            self.cap_rejections as f64 / p as f64
        }
    }
}

/// Serializable chain state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: RpmSnapshot,
    pub seed: u64,
    /// ChaCha word position, as a decimal string.
    pub word_pos: String,
    pub stats: MoveStats,
    pub sweeps: u64,
}

pub struct Chain {
    model: Arc<Model>,
    cfg: RpmConfig,
    lt: Vec<u32>,
    rng: ChaCha8Rng,
    seed: u64,
    stats: MoveStats,
    sweeps: u64,
}

impl Chain {
    /// Starts from the empty configuration.
    pub fn new(model: Arc<Model>, seed: u64) -> Self {
        let cfg = RpmConfig::empty(model.graph());
        let lt = vec![0; model.graph().n_vertices()];
        Chain { model, cfg, lt, rng: ChaCha8Rng::seed_from_u64(seed), seed, stats: MoveStats::default(), sweeps: 0 }
    }

    /// Starts from a given configuration, which must respect the cap.
    pub fn from_config(model: Arc<Model>, cfg: RpmConfig, seed: u64) -> Result<Self> {
        cfg.validate(model.graph())?;
        if cfg.m().iter().any(|&m| m > model.m_cap) {
            return Err(Error::InvalidConfig("configuration exceeds the link cap".into()));
        }
        let lt = cfg.local_times(model.graph());
        Ok(Chain { model, cfg, lt, rng: ChaCha8Rng::seed_from_u64(seed), seed, stats: MoveStats::default(), sweeps: 0 })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn config(&self) -> &RpmConfig {
        &self.cfg
    }

    pub fn local_times(&self) -> &[u32] {
        &self.lt
    }

    pub fn stats(&self) -> &MoveStats {
        &self.stats
    }

    pub fn sweeps(&self) -> u64 {
        self.sweeps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Heat-bath resampling of the pairing at `x`.
    pub fn ewens_repair(&mut self, x: usize) {
        self.stats.repairs += 1;
        if self.lt[x] == 0 {
            return;
        }
        let halves = self.model.half_loops(&self.cfg, x);
        let n = halves.len();
        let flip: Vec<bool> = (0..n).map(|_| self.rng.random::<bool>()).collect();
        let sigma = sample_ewens(self.model.n / 2.0, n, &mut self.rng);
        self.model.rewire(&mut self.cfg, x, &halves, &flip, &sigma);
    }

    fn metropolis(&mut self, ratio: f64) -> bool {
        ratio >= 1.0 || self.rng.random::<f64>() < ratio
    }

    pub fn double_link_move(&mut self, e: usize) -> bool {
        let insert = self.rng.random::<bool>();
        let ratio = self.model.double_link_ratio(&self.cfg, &self.lt, e, insert);
        let accepted = match ratio {
            None => {
                if insert {
                    self.stats.cap_rejections += 1;
                } else {
                    self.stats.pattern_rejections += 1;
                }
                false
            }
            Some(r) => self.metropolis(r),
        };
        if accepted {
            self.model.clone().apply_double_link(&mut self.cfg, &mut self.lt, e, insert);
        }
        if insert { &mut self.stats.double_insert } else { &mut self.stats.double_delete }.record(accepted);
        accepted
    }

    pub fn cycle_move(&mut self, index: usize) -> bool {
        let model = self.model.clone();
        let c = &model.cycles.cycles[index];
        let insert = self.rng.random::<bool>();
        let accepted = match model.cycle_ratio(&self.cfg, &self.lt, c, insert) {
            None => {
                if insert {
                    self.stats.cap_rejections += 1;
                } else {
                    self.stats.pattern_rejections += 1;
                }
                false
            }
            Some(r) => self.metropolis(r),
        };
        if accepted {
            model.apply_cycle(&mut self.cfg, &mut self.lt, c, insert);
        }
        if insert { &mut self.stats.cycle_insert } else { &mut self.stats.cycle_delete }.record(accepted);
        accepted
    }

    /// Repairs at every vertex, then one proposal per edge and per cycle.
    pub fn sweep(&mut self) {
        for x in 0..self.model.graph.n_vertices() {
            self.ewens_repair(x);
        }
        for e in 0..self.model.graph.n_edges() {
            self.double_link_move(e);
        }
        for c in 0..self.model.cycles.len() {
            self.cycle_move(c);
        }
        self.sweeps += 1;
        debug_assert_eq!(self.lt, self.cfg.local_times(&self.model.graph));
    }

    /// Full recomputation of the cached local times and pairing validity.
    pub fn check_consistency(&self) -> Result<()> {
        self.cfg.validate(&self.model.graph)?;
        if self.lt != self.cfg.local_times(&self.model.graph) {
            return Err(Error::InvalidConfig("cached local times out of sync".into()));
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.cfg.to_snapshot(&self.model.graph),
            seed: self.seed,
            word_pos: self.rng.get_word_pos().to_string(),
            stats: self.stats.clone(),
            sweeps: self.sweeps,
        }
    }

    pub fn resume(model: Arc<Model>, cp: &Checkpoint) -> Result<Self> {
        let cfg = RpmConfig::from_snapshot(model.graph(), &cp.config)?;
        if cfg.m().iter().any(|&m| m > model.m_cap) {
            return Err(Error::InvalidConfig("checkpoint exceeds the link cap".into()));
        }
        let pos: u128 = cp.word_pos.parse().map_err(|_| Error::InvalidConfig("bad rng word position".into()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(cp.seed);
        rng.set_word_pos(pos);
        let lt = cfg.local_times(model.graph());
        Ok(Chain { model, cfg, lt, rng, seed: cp.seed, stats: cp.stats.clone(), sweeps: cp.sweeps })
    }
}

/// Quantities recorded at every kept sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Observable {
    /// Number of cycles of length `k` per vertex.
    Rho { k: usize },
    /// `n_x^p` for `p = 1..=max_moment`.
    LocalTime { vertex: usize, max_moment: u32 },
    /// Indicator that one cycle visits both `x` and `y`.
    Connection { x: usize, y: usize },
    /// Connection indicator averaged over all pairs at lattice distance `d`
    /// along a coordinate axis (torus only).
    ConnectionByDistance { distances: Vec<usize> },
    /// Fraction of edges carrying at least `a` double links.
    DoubleLinkTail { a: Vec<u32> },
    /// Double links on one edge.
    DoubleLinks { edge: usize },
    /// The loop functional behind the spin correlation, with the
    /// `2^m`-th moments of the shifted local times at `x` and `y`.
    SpinMiddle { x: usize, y: usize, m: u32 },
    TotalLinks,
}

/// Column names shared by the chain output and the estimators.
pub mod column {
    pub fn rho(k: usize) -> String {
        format!("rho_{k}")
    }
    pub fn local_time(x: usize, p: u32) -> String {
        format!("n_{x}^{p}")
    }
    pub fn connection(x: usize, y: usize) -> String {
        format!("connect_{x}_{y}")
    }
    pub fn connection_at(d: usize) -> String {
        format!("connect_d{d}")
    }
    pub fn double_link_tail(a: u32) -> String {
        format!("dl_tail_{a}")
    }
    pub fn double_links(e: usize) -> String {
        format!("dl_{e}")
    }
    pub fn middle(x: usize, y: usize) -> String {
        format!("middle_{x}_{y}")
    }
    pub fn shifted_moment(x: usize, p: u64) -> String {
        format!("ntilde_{x}^{p}")
    }
    pub const TOTAL_LINKS: &str = "links";
}

impl Observable {
    pub fn columns(&self) -> Vec<String> {
        match self {
            Observable::Rho { k } => vec![column::rho(*k)],
            Observable::LocalTime { vertex, max_moment } => {
                (1..=*max_moment).map(|p| column::local_time(*vertex, p)).collect()
            }
            Observable::Connection { x, y } => vec![column::connection(*x, *y)],
            Observable::ConnectionByDistance { distances } => {
                distances.iter().map(|&d| column::connection_at(d)).collect()
            }
            Observable::DoubleLinkTail { a } => a.iter().map(|&a| column::double_link_tail(a)).collect(),
            Observable::DoubleLinks { edge } => vec![column::double_links(*edge)],
            Observable::SpinMiddle { x, y, m } => vec![
                column::middle(*x, *y),
                column::connection(*x, *y),
                column::shifted_moment(*x, 1u64 << m),
                column::shifted_moment(*y, 1u64 << m),
            ],
            Observable::TotalLinks => vec![column::TOTAL_LINKS.to_string()],
        }
    }

    fn check(&self, g: &Graph) -> Result<()> {
        let nv = g.n_vertices();
        let vertex = |v: usize| {
            if v < nv {
                Ok(())
            } else {
                Err(invalid("observables", format!("vertex {v} out of range")))
            }
        };
        match self {
            Observable::Rho { k } if *k < 2 => Err(invalid("observables", "rho needs k >= 2")),
            Observable::LocalTime { vertex: v, max_moment } => {
                vertex(*v)?;
                if *max_moment == 0 || *max_moment > 8 {
                    return Err(invalid("observables", "max_moment must be in 1..=8"));
                }
                Ok(())
            }
            Observable::Connection { x, y } | Observable::SpinMiddle { x, y, .. } => {
                vertex(*x)?;
                vertex(*y)?;
                if x == y {
                    return Err(invalid("observables", "x and y must differ"));
                }
                if let Observable::SpinMiddle { m, .. } = self {
                    if *m == 0 || *m > 5 {
                        return Err(invalid("observables", "m must be in 1..=5"));
                    }
                }
                Ok(())
            }
            Observable::ConnectionByDistance { distances } => match g.lattice() {
                Some(l) if l.periodic => {
                    if distances.iter().any(|&d| d == 0 || d >= l.side) {
                        return Err(invalid("observables", "distances must lie in 1..side"));
                    }
                    Ok(())
                }
                _ => Err(invalid("observables", "connection_by_distance needs a torus")),
            },
            Observable::DoubleLinks { edge } if *edge >= g.n_edges() => {
                Err(invalid("observables", format!("edge {edge} out of range")))
            }
            _ => Ok(()),
        }
    }
}

/// Rejects observables that do not fit the graph.
pub fn check_observable(g: &Graph, o: &Observable) -> Result<()> {
    o.check(g)
}

/// Samples of named observables from one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub seed: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub sweeps: u64,
    pub stats: MoveStats,
    pub cycle_coverage: bool,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl ChainOutput {
    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn n_samples(&self) -> usize {
        self.columns.first().map_or(0, |(_, v)| v.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub burn_in: u64,
    pub samples: u64,
    /// Sweeps between kept samples; `None` picks `ceil(tau_int)` of the total
    /// link count measured over the second half of burn-in.
    pub thin: Option<u64>,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings { burn_in: DEFAULT_BURN_IN, samples: 10_000, thin: None }
    }
}

struct Recorder {
    observables: Vec<Observable>,
    columns: Vec<(String, Vec<f64>)>,
    index: HashMap<String, usize>,
    axis_pairs: Vec<(usize, Vec<(usize, usize)>)>,
}

impl Recorder {
    fn new(g: &Graph, observables: &[Observable]) -> Result<Self> {
        let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
        let mut index = HashMap::new();
        for o in observables {
            o.check(g)?;
            for name in o.columns() {
                if !index.contains_key(&name) {
                    index.insert(name.clone(), columns.len());
                    columns.push((name, Vec::new()));
                }
            }
        }
        if !index.contains_key(column::TOTAL_LINKS) {
            index.insert(column::TOTAL_LINKS.to_string(), columns.len());
            columns.push((column::TOTAL_LINKS.to_string(), Vec::new()));
        }
        let mut axis_pairs = Vec::new();
        for o in observables {
            if let Observable::ConnectionByDistance { distances } = o {
                let dim = g.lattice().expect("checked").dim;
                for &d in distances {
                    let mut pairs = Vec::new();
                    for x in 0..g.n_vertices() {
                        for a in 0..dim {
                            let mut off = vec![0i64; dim];
                            off[a] = d as i64;
                            pairs.push((x, g.translate(x, &off).expect("torus")));
                        }
                    }
                    axis_pairs.push((d, pairs));
                }
            }
        }
        Ok(Recorder { observables: observables.to_vec(), columns, index, axis_pairs })
    }

    fn push(&mut self, name: &str, v: f64) {
        let i = self.index[name];
        self.columns[i].1.push(v);
    }

    fn record(&mut self, chain: &Chain) {
        let model = chain.model.clone();
        let g = &model.graph;
        let cfg = &chain.cfg;
        let lt = &chain.lt;
        let cycles = cfg.cycle_sequences(g);
        let mut pushed: HashSet<String> = HashSet::new();
        // Cycle ids through each vertex, deduplicated.
        let needs_membership = self.observables.iter().any(|o| {
            matches!(o, Observable::Connection { .. } | Observable::ConnectionByDistance { .. } | Observable::SpinMiddle { .. })
        });
        let membership: Vec<Vec<u32>> = if needs_membership {
            let mut mem = vec![Vec::new(); g.n_vertices()];
            for (j, c) in cycles.iter().enumerate() {
                for &v in c {
                    if mem[v].last() != Some(&(j as u32)) {
                        mem[v].push(j as u32);
                    }
                }
            }
            for m in &mut mem {
                m.sort_unstable();
                m.dedup();
            }
            mem
        } else {
            Vec::new()
        };
        let shares = |x: usize, y: usize| -> bool {
            let (a, b) = (&membership[x], &membership[y]);
            let (mut i, mut j) = (0, 0);
            while i < a.len() && j < b.len() {
                match a[i].cmp(&b[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => return true,
                }
            }
            false
        };
        let observables = self.observables.clone();
        for o in &observables {
            match o {
                Observable::Rho { k } => {
                    let name = column::rho(*k);
                    if pushed.insert(name.clone()) {
                        let count = cycles.iter().filter(|c| c.len() == *k).count();
                        self.push(&name, count as f64 / g.n_vertices() as f64);
                    }
                }
                Observable::LocalTime { vertex, max_moment } => {
                    for p in 1..=*max_moment {
                        let name = column::local_time(*vertex, p);
                        if pushed.insert(name.clone()) {
                            self.push(&name, (lt[*vertex] as f64).powi(p as i32));
                        }
                    }
                }
                Observable::Connection { x, y } => {
                    let name = column::connection(*x, *y);
                    if pushed.insert(name.clone()) {
                        self.push(&name, shares(*x, *y) as u8 as f64);
                    }
                }
                Observable::ConnectionByDistance { distances } => {
                    for d in distances {
                        let name = column::connection_at(*d);
                        if pushed.insert(name.clone()) {
                            let pairs = &self.axis_pairs.iter().find(|(dd, _)| dd == d).expect("prepared").1;
                            let hits = pairs.iter().filter(|&&(x, y)| shares(x, y)).count();
                            let v = hits as f64 / pairs.len() as f64;
                            self.push(&name, v);
                        }
                    }
                }
                Observable::DoubleLinkTail { a } => {
                    let dl: Vec<u32> = (0..g.n_edges()).map(|e| cfg.double_links(e)).collect();
                    for &a in a {
                        let name = column::double_link_tail(a);
                        if pushed.insert(name.clone()) {
                            let v = dl.iter().filter(|&&k| k >= a).count() as f64 / g.n_edges() as f64;
                            self.push(&name, v);
                        }
                    }
                }
                Observable::DoubleLinks { edge } => {
                    let name = column::double_links(*edge);
                    if pushed.insert(name.clone()) {
                        self.push(&name, cfg.double_links(*edge) as f64);
                    }
                }
                Observable::SpinMiddle { x, y, m } => {
                    let (x, y) = (*x, *y);
                    let half = model.n / 2.0;
                    let tx = lt[x] as f64 + half;
                    let ty = lt[y] as f64 + half;
                    let mut s = 0.0;
                    for c in &cycles {
                        let vx = c.iter().filter(|&&v| v == x).count();
                        if vx > 0 {
                            let vy = c.iter().filter(|&&v| v == y).count();
                            s += (vx * vy) as f64;
                        }
                    }
                    let names = o.columns();
                    let values = [
                        s / (tx * ty) / (2.0 * model.n),
                        shares(x, y) as u8 as f64,
                        tx.powi(1 << m),
                        ty.powi(1 << m),
                    ];
                    for (name, v) in names.iter().zip(values) {
                        if pushed.insert(name.clone()) {
                            self.push(name, v);
                        }
                    }
                }
                Observable::TotalLinks => {}
            }
        }
        self.push(column::TOTAL_LINKS, cfg.total_links() as f64);
    }
}

/// Runs one chain from the empty configuration.
pub fn run_chain(model: Arc<Model>, seed: u64, settings: RunSettings, observables: &[Observable]) -> Result<ChainOutput> {
    let mut rec = Recorder::new(model.graph(), observables)?;
    let mut chain = Chain::new(model.clone(), seed);
    let mut pilot = Vec::with_capacity(settings.burn_in as usize / 2 + 1);
    for s in 0..settings.burn_in {
        chain.sweep();
        if 2 * s >= settings.burn_in {
            pilot.push(chain.cfg.total_links() as f64);
        }
    }
    let thin = match settings.thin {
        Some(t) => t.max(1),
        None => (integrated_autocorrelation(&pilot).ceil() as u64).clamp(1, 1000),
    };
    for _ in 0..settings.samples {
        for _ in 0..thin {
            chain.sweep();
        }
        rec.record(&chain);
    }
    chain.check_consistency()?;
    Ok(ChainOutput {
        seed,
        burn_in: settings.burn_in,
        thin,
        sweeps: chain.sweeps,
        stats: chain.stats.clone(),
        cycle_coverage: model.cycle_coverage(),
        columns: rec.columns,
    })
}

/// Independent chains, one per seed, each on its own thread. Results are in
/// seed order.
pub fn run_chains(model: Arc<Model>, seeds: &[u64], settings: RunSettings, observables: &[Observable]) -> Result<Vec<ChainOutput>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let model = model.clone();
                s.spawn(move || run_chain(model, seed, settings, observables))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    })
}

/// Result of the exact kernel check on a small space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub states: usize,
    /// `max |mu K - mu|` for the normalised weights and the sweep kernel.
    pub deviation: f64,
    /// Largest `|mu_i K_ij - mu_j K_ji|` over single moves.
    pub balance_gap: f64,
    /// Largest `|sum_j K_ij - 1|` over single moves.
    pub row_sum_gap: f64,
    /// Every state reaches every other under repeated sweeps.
    pub irreducible: bool,
}

/// Largest state space [`validate_stationarity`] accepts.
pub const MAX_KERNEL_STATES: usize = 20_000;

type SparseRow = Vec<(usize, f64)>;

enum Move {
    Repair(usize),
    Double(usize),
    Cycle(usize),
}

/// Builds the exact transition kernel of every move on all configurations
/// within the per-edge cap and checks that the model weights are stationary
/// for a sweep, that each move is reversible, and that sweeps connect the
/// space.
pub fn validate_stationarity(model: &Model) -> Result<StationarityReport> {
    let g = model.graph();
    let states = enumerate_configs(g, RpmCaps::per_edge(model.m_cap), MAX_KERNEL_STATES)?;
    let index: HashMap<RpmConfig, usize> = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    let ln_w: Vec<f64> = states.iter().map(|s| model.ln_weight(s)).collect();
    let top = ln_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut mu: Vec<f64> = ln_w.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = mu.iter().sum();
    for m in &mut mu {
        *m /= z;
    }
    let moves: Vec<Move> = (0..g.n_vertices())
        .map(Move::Repair)
        .chain((0..g.n_edges()).map(Move::Double))
        .chain((0..model.cycles.len()).map(Move::Cycle))
        .collect();
    let theta = model.n / 2.0;
    let lookup = |c: &RpmConfig| -> Result<usize> {
        index.get(c).copied().ok_or_else(|| Error::Degenerate("a move left the enumerated space".into()))
    };
    let mut kernels: Vec<Vec<SparseRow>> = Vec::with_capacity(moves.len());
    for mv in &moves {
        let mut rows = Vec::with_capacity(states.len());
        for (i, s) in states.iter().enumerate() {
            let lt = s.local_times(g);
            let mut row: HashMap<usize, f64> = HashMap::new();
            match *mv {
                Move::Repair(x) => {
                    let halves = model.half_loops(s, x);
                    let n = halves.len();
                    if n > 6 {
                        return Err(Error::BudgetExceeded(format!("{n} half loops at {x}")));
                    }
                    let z = ewens_normalizer(theta, n)?;
                    let perms = permutations(n);
                    for bits in 0..(1u32 << n) {
                        let flip: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
                        for p in &perms {
                            let mut t = s.clone();
                            model.rewire(&mut t, x, &halves, &flip, p);
                            let pr = theta.powi(cycle_count(p) as i32) / z / (1u64 << n) as f64;
                            *row.entry(lookup(&t)?).or_default() += pr;
                        }
                    }
                }
                Move::Double(e) => {
                    let mut stay = 1.0;
                    for insert in [true, false] {
                        if let Some(r) = model.double_link_ratio(s, &lt, e, insert) {
                            let p = 0.5 * r.min(1.0);
                            let mut t = s.clone();
                            let mut tl = lt.clone();
                            model.apply_double_link(&mut t, &mut tl, e, insert);
                            *row.entry(lookup(&t)?).or_default() += p;
                            stay -= p;
                        }
                    }
                    *row.entry(i).or_default() += stay;
                }
                Move::Cycle(c) => {
                    let c = &model.cycles.cycles[c];
                    let mut stay = 1.0;
                    for insert in [true, false] {
                        if let Some(r) = model.cycle_ratio(s, &lt, c, insert) {
                            let p = 0.5 * r.min(1.0);
                            let mut t = s.clone();
                            let mut tl = lt.clone();
                            model.apply_cycle(&mut t, &mut tl, c, insert);
                            *row.entry(lookup(&t)?).or_default() += p;
                            stay -= p;
                        }
                    }
                    *row.entry(i).or_default() += stay;
                }
            }
            let mut row: SparseRow = row.into_iter().filter(|&(_, p)| p > 0.0).collect();
            row.sort_by_key(|&(j, _)| j);
            rows.push(row);
        }
        kernels.push(rows);
    }

    let mut balance_gap: f64 = 0.0;
    let mut row_sum_gap: f64 = 0.0;
    for k in &kernels {
        let dense: HashMap<(usize, usize), f64> =
            k.iter().enumerate().flat_map(|(i, r)| r.iter().map(move |&(j, p)| ((i, j), p))).collect();
        for (&(i, j), &p) in &dense {
            let back = dense.get(&(j, i)).copied().unwrap_or(0.0);
            balance_gap = balance_gap.max((mu[i] * p - mu[j] * back).abs());
        }
        for r in k {
            row_sum_gap = row_sum_gap.max((r.iter().map(|&(_, p)| p).sum::<f64>() - 1.0).abs());
        }
    }

    let mut v = mu.clone();
    for k in &kernels {
        let mut next = vec![0.0; v.len()];
        for (i, r) in k.iter().enumerate() {
            for &(j, p) in r {
                next[j] += v[i] * p;
            }
        }
        v = next;
    }
    let deviation = v.iter().zip(&mu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    // One-sweep support, then forward and backward reachability from 0.
    let mut sweep_succ: Vec<Vec<usize>> = Vec::with_capacity(states.len());
    for i in 0..states.len() {
        let mut frontier: HashSet<usize> = HashSet::from([i]);
        for k in &kernels {
            frontier = frontier.iter().flat_map(|&a| k[a].iter().map(|&(j, _)| j)).collect();
        }
        let mut f: Vec<usize> = frontier.into_iter().collect();
        f.sort_unstable();
        sweep_succ.push(f);
    }
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); states.len()];
    for (i, s) in sweep_succ.iter().enumerate() {
        for &j in s {
            pred[j].push(i);
        }
    }
    let reach = |adj: &Vec<Vec<usize>>| -> usize {
        let mut seen = vec![false; adj.len()];
        let mut q = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(a) = q.pop_front() {
            for &b in &adj[a] {
                if !seen[b] {
                    seen[b] = true;
                    count += 1;
                    q.push_back(b);
                }
            }
        }
        count
    };
    let irreducible = reach(&sweep_succ) == states.len() && reach(&pred) == states.len();
    Ok(StationarityReport { states: states.len(), deviation, balance_gap, row_sum_gap, irreducible })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::NamedGraph;

    fn model(g: NamedGraph, u: WeightFunction, n: f64, beta: f64, cap: u32) -> Arc<Model> {
        Arc::new(Model::with_cycle_len(Graph::named(g).unwrap(), u, n, beta, cap, 4).unwrap())
    }

    #[test]
    fn insertion_ratios() {
        let m = model(NamedGraph::SingleEdge, WeightFunction::constant(), 2.0, 1.0, 4);
        let cfg = RpmConfig::empty(m.graph());
        assert_eq!(m.double_link_ratio(&cfg, &[0, 0], 0, true), Some(1.0));
        assert_eq!(m.double_link_ratio(&cfg, &[0, 0], 0, false), None);
        let mut c = cfg.clone();
        let mut lt = vec![0, 0];
        m.apply_double_link(&mut c, &mut lt, 0, true);
        assert_eq!(m.double_link_ratio(&c, &lt, 0, false), Some(1.0));
        m.apply_double_link(&mut c, &mut lt, 0, true);
        assert_eq!(m.double_link_ratio(&c, &lt, 0, true), None);

        let sq = model(NamedGraph::Cycle(4), WeightFunction::constant(), 2.0, 1.0, 4);
        let c = &sq.cycles().cycles[0];
        let e = RpmConfig::empty(sq.graph());
        assert_eq!(sq.cycle_ratio(&e, &[0; 4], c, true), Some(2.0));
        let zero = model(NamedGraph::Cycle(4), WeightFunction::constant(), 2.0, 0.0, 4);
        assert_eq!(zero.cycle_ratio(&e, &[0; 4], c, true), Some(0.0));
    }

    #[test]
    fn cycle_insert_delete_roundtrip() {
        let m = model(NamedGraph::Cycle(4), WeightFunction::factorial(), 2.0, 0.7, 6);
        let mut chain = Chain::new(m.clone(), 5);
        for _ in 0..50 {
            chain.sweep();
        }
        let c = m.cycles().cycles[0].clone();
        let before = chain.config().clone();
        let mut cfg = before.clone();
        let mut lt = cfg.local_times(m.graph());
        if m.cycle_ratio(&cfg, &lt, &c, true).is_some() {
            let cycles = cfg.cycle_count(m.graph());
            m.apply_cycle(&mut cfg, &mut lt, &c, true);
            cfg.validate(m.graph()).unwrap();
            assert_eq!(cfg.cycle_count(m.graph()), cycles + 1);
            assert!(m.cycle_ratio(&cfg, &lt, &c, false).is_some());
            m.apply_cycle(&mut cfg, &mut lt, &c, false);
            assert_eq!(cfg, before);
        }
    }

    #[test]
    fn half_loops_partition_slots() {
        let m = model(NamedGraph::Box { side: 3, dim: 2 }, WeightFunction::spin(2).unwrap(), 2.0, 1.0, 8);
        let mut chain = Chain::new(m.clone(), 1);
        for _ in 0..200 {
            chain.sweep();
        }
        chain.check_consistency().unwrap();
        for x in 0..9 {
            let h = m.half_loops(chain.config(), x);
            assert_eq!(h.len() as u32, chain.local_times()[x]);
            let mut all: Vec<LinkRef> = h.iter().flat_map(|&(s, t)| [s, t]).collect();
            all.sort();
            all.dedup();
            assert_eq!(all.len(), 2 * h.len());
        }
    }

    #[test]
    fn stationarity_on_tiny_spaces() {
        for u in [WeightFunction::constant(), WeightFunction::factorial()] {
            for beta in [0.5, 1.0] {
                for (g, cap) in [(NamedGraph::SingleEdge, 4), (NamedGraph::Path(3), 2)] {
                    let m = model(g, u.clone(), 2.0, beta, cap);
                    let r = validate_stationarity(&m).unwrap();
                    assert!(r.deviation <= 1e-10, "{r:?}");
                    assert!(r.balance_gap <= 1e-12 && r.row_sum_gap <= 1e-12, "{r:?}");
                    assert!(r.irreducible);
                }
            }
        }
        let m = model(NamedGraph::SingleEdge, WeightFunction::constant(), 2.0, 0.0, 4);
        let r = validate_stationarity(&m).unwrap();
        assert_eq!(r.deviation, 0.0);
    }

    #[test]
    fn stationarity_with_cycle_moves() {
        let m = model(NamedGraph::Cycle(3), WeightFunction::factorial(), 1.5, 0.8, 2);
        let r = validate_stationarity(&m).unwrap();
        assert!(r.deviation <= 1e-10 && r.irreducible, "{r:?}");
    }

    #[test]
    fn checkpoint_resumes_identically() {
        let m = model(NamedGraph::Cycle(4), WeightFunction::spin(2).unwrap(), 2.0, 0.9, 8);
        let mut a = Chain::new(m.clone(), 11);
        for _ in 0..30 {
            a.sweep();
        }
        let cp = a.checkpoint();
        let text = serde_json::to_string(&cp).unwrap();
        let mut b = Chain::resume(m.clone(), &serde_json::from_str(&text).unwrap()).unwrap();
        for _ in 0..30 {
            a.sweep();
            b.sweep();
        }
        assert_eq!(a.config(), b.config());
        assert_eq!(a.stats(), b.stats());
    }

    #[test]
    fn zero_beta_stays_empty() {
        let m = model(NamedGraph::Cycle(4), WeightFunction::constant(), 2.0, 0.0, 8);
        let mut c = Chain::new(m, 2);
        for _ in 0..100 {
            c.sweep();
        }
        assert_eq!(c.config().total_links(), 0);
    }

    #[test]
    fn rejects_hard_core_weights() {
        let g = Graph::named(NamedGraph::SingleEdge).unwrap();
        let u = WeightFunction::table(vec![1.0, 0.5]).unwrap();
        assert!(Model::with_cycle_len(g, u, 2.0, 1.0, 4, 4).is_err());
    }
}
