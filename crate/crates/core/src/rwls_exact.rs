//! Truncated exact evaluation of loop soup quantities by enumerating
//! multisets of loop classes.
//!
//! A multiset `rho = {gamma -> k_gamma}` carries weight
//! `prod_gamma (c_gamma^k / k!) prod_x U(n_x(rho))` with
//! `c_gamma = N beta^alpha delta / (2 J)`, which equals the total weight of
//! all ordered loop configurations it represents. Everything is truncated at
//! total length `T_max`.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::graphs::Graph;
use crate::loops::{enumerate_classes, LoopClass};
use crate::numeric::{falling, CompensatedSum};
use crate::weights::WeightFunction;

/// Upper bound on the number of classes an engine will hold.
pub const MAX_CLASSES: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExactResult {
    pub value: f64,
    pub t_max: usize,
    /// Magnitude of the change contributed by the last length shell.
    pub tail_estimate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

impl IdentityCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        IdentityCheck { lhs, rhs, gap: (lhs - rhs).abs() }
    }
}

/// One class multiset, as seen by enumeration callbacks.
#[derive(Debug)]
pub struct MultisetView<'a> {
    /// `(class index, k)` with `k >= 1`, class indices increasing.
    pub entries: &'a [(usize, u32)],
    /// Local times, including any fixed offset.
    pub local_times: &'a [u32],
    pub length: usize,
    /// Full weight including the on-site factors.
    pub weight: f64,
}

impl MultisetView<'_> {
    pub fn count(&self, class: usize) -> u32 {
        self.entries
            .binary_search_by_key(&class, |e| e.0)
            .map(|i| self.entries[i].1)
            .unwrap_or(0)
    }
}

/// Per-length-shell sums of the weight and of weighted observables.
#[derive(Debug, Clone)]
pub struct ShellSums {
    z: Vec<CompensatedSum>,
    obs: Vec<Vec<CompensatedSum>>,
}

impl ShellSums {
    fn new(t_max: usize, n_out: usize) -> Self {
        ShellSums {
            z: vec![CompensatedSum::new(); t_max + 1],
            obs: vec![vec![CompensatedSum::new(); n_out]; t_max + 1],
        }
    }

    fn merge(&mut self, other: &ShellSums) {
        for (a, b) in self.z.iter_mut().zip(&other.z) {
            a.merge(b);
        }
        for (ra, rb) in self.obs.iter_mut().zip(&other.obs) {
            for (a, b) in ra.iter_mut().zip(rb) {
                a.merge(b);
            }
        }
    }

    pub fn t_max(&self) -> usize {
        self.z.len() - 1
    }

    /// Total weight of multisets of length `<= t`.
    pub fn z_upto(&self, t: usize) -> f64 {
        let mut s = CompensatedSum::new();
        for z in self.z.iter().take(t + 1) {
            s.merge(z);
        }
        s.value()
    }

    pub fn obs_upto(&self, i: usize, t: usize) -> f64 {
        let mut s = CompensatedSum::new();
        for row in self.obs.iter().take(t + 1) {
            s.merge(&row[i]);
        }
        s.value()
    }

    pub fn z_shell(&self, len: usize) -> f64 {
        self.z.get(len).map_or(0.0, |z| z.value())
    }

    pub fn expectation(&self, i: usize, t: usize) -> f64 {
        self.obs_upto(i, t) / self.z_upto(t)
    }
}

/// Exact truncated engine for one parameter set.
#[derive(Debug, Clone)]
pub struct ExactEngine {
    graph: Graph,
    weight: WeightFunction,
    n: f64,
    beta: f64,
    t_max: usize,
    classes: Vec<LoopClass>,
    coef: Vec<f64>,
    class_index: HashMap<Vec<usize>, usize>,
    bounce_of_edge: Vec<Option<usize>>,
}

impl ExactEngine {
    pub fn new(g: &Graph, weight: &WeightFunction, n: f64, beta: f64, t_max: usize) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(invalid("beta", format!("must be finite and >= 0 (got {beta})")));
        }
        if !(n.is_finite() && n > 0.0) {
            return Err(invalid("N", format!("must be > 0 (got {n})")));
        }
        if g.is_bipartite() && t_max % 2 == 1 {
            return Err(invalid("T_max", format!("must be even on bipartite graphs (got {t_max})")));
        }
        let classes = if t_max >= 2 { enumerate_classes(g, t_max) } else { Vec::new() };
        if classes.len() > MAX_CLASSES {
            return Err(Error::BudgetExceeded(format!(
                "{} loop classes up to length {t_max}",
                classes.len()
            )));
        }
        let coef = classes
            .iter()
            .map(|c| {
                n * beta.powi(c.alpha() as i32) * c.delta() as f64 / (2.0 * c.multiplicity() as f64)
            })
            .collect();
        let class_index = classes.iter().enumerate().map(|(i, c)| (c.sequence().to_vec(), i)).collect();
        let mut bounce_of_edge = vec![None; g.n_edges()];
        for (i, c) in classes.iter().enumerate() {
            if c.is_bounce() {
                bounce_of_edge[c.step_edges()[0]] = Some(i);
            }
        }
        Ok(ExactEngine {
            graph: g.clone(),
            weight: weight.clone(),
            n,
            beta,
            t_max,
            classes,
            coef,
            class_index,
            bounce_of_edge,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn classes(&self) -> &[LoopClass] {
        &self.classes
    }

    pub fn class_index(&self, c: &LoopClass) -> Option<usize> {
        self.class_index.get(c.sequence()).copied()
    }

    /// `N beta^alpha delta / (2 J)` for class `i`.
    pub fn class_intensity(&self, i: usize) -> f64 {
        self.coef[i]
    }

    /// Index of the length-two class on edge `e`.
    pub fn bounce_class(&self, e: usize) -> Option<usize> {
        self.bounce_of_edge[e]
    }

    /// Calls `f` on every multiset of total length `<= budget`, in a fixed order.
    pub fn for_each_multiset<F>(&self, offset: Option<&[u32]>, budget: usize, mut f: F)
    where
        F: FnMut(&MultisetView),
    {
        let budget = budget.min(self.t_max);
        let mut w = Walker::new(self, offset);
        w.visit(&mut f);
        for first in 0..self.classes.len() {
            w.shard(first, budget, &mut f);
        }
    }

    /// Accumulates `weight * f(rho)` into per-shell sums, in parallel over
    /// the smallest class present. The reduction order is fixed, so results
    /// are reproducible.
    pub fn fold<F>(&self, n_out: usize, offset: Option<&[u32]>, budget: usize, f: F) -> ShellSums
    where
        F: Fn(&MultisetView, &mut [f64]) + Sync,
    {
        let budget = budget.min(self.t_max);
        let accumulate = |acc: &mut ShellSums, buf: &mut Vec<f64>, v: &MultisetView| {
            if v.weight == 0.0 {
                return;
            }
            acc.z[v.length] += v.weight;
            buf.iter_mut().for_each(|b| *b = 0.0);
            f(v, buf);
            for (o, b) in acc.obs[v.length].iter_mut().zip(buf.iter()) {
                *o += v.weight * b;
            }
        };
        let mut total = ShellSums::new(self.t_max, n_out);
        {
            let mut buf = vec![0.0; n_out];
            let w = Walker::new(self, offset);
            w.visit(&mut |v: &MultisetView| accumulate(&mut total, &mut buf, v));
        }
        let parts: Vec<ShellSums> = (0..self.classes.len())
            .into_par_iter()
            .map(|first| {
                let mut acc = ShellSums::new(self.t_max, n_out);
                let mut buf = vec![0.0; n_out];
                let mut w = Walker::new(self, offset);
                w.shard(first, budget, &mut |v: &MultisetView| accumulate(&mut acc, &mut buf, v));
                acc
            })
            .collect();
        for p in &parts {
            total.merge(p);
        }
        total
    }

    fn top_shells(&self) -> (usize, usize) {
        let step = if self.graph.is_bipartite() { 2 } else { 1 };
        (self.t_max, self.t_max.saturating_sub(step))
    }

    fn expectation_result(&self, sums: &ShellSums, i: usize) -> ExactResult {
        let (t, prev) = self.top_shells();
        let value = sums.expectation(i, t);
        let tail = (value - sums.expectation(i, prev)).abs();
        ExactResult { value, t_max: t, tail_estimate: tail }
    }

    pub fn partition_function(&self) -> ExactResult {
        let sums = self.fold(0, None, self.t_max, |_, _| {});
        let (t, prev) = self.top_shells();
        let value = sums.z_upto(t);
        ExactResult { value, t_max: t, tail_estimate: (value - sums.z_upto(prev)).abs() }
    }

    fn require_class(&self, c: &LoopClass) -> Result<Option<usize>> {
        if c.alpha() > self.t_max {
            return Ok(None);
        }
        self.class_index(c)
            .map(Some)
            .ok_or_else(|| Error::InvalidLoop(format!("class {c} does not live on this graph")))
    }

    /// `mu_a(gamma) = E[k_gamma (k_gamma - 1) ... (k_gamma - a + 1)]`.
    pub fn class_moment(&self, c: &LoopClass, a: u32) -> Result<ExactResult> {
        if a == 0 {
            return Err(invalid("a", "moment order must be >= 1"));
        }
        let Some(idx) = self.require_class(c)? else {
            return Ok(ExactResult { value: 0.0, t_max: self.t_max, tail_estimate: 0.0 });
        };
        let sums = self.fold(1, None, self.t_max, |v, out| out[0] = falling(v.count(idx), a));
        Ok(self.expectation_result(&sums, 0))
    }

    /// `E[k_gamma]` for every class with `alpha <= max_alpha`.
    pub fn class_means(&self, max_alpha: usize) -> Vec<(LoopClass, f64)> {
        let idx: Vec<usize> = (0..self.classes.len())
            .filter(|&i| self.classes[i].alpha() <= max_alpha)
            .collect();
        let pos: HashMap<usize, usize> = idx.iter().enumerate().map(|(p, &i)| (i, p)).collect();
        let sums = self.fold(idx.len(), None, self.t_max, |v, out| {
            for &(c, k) in v.entries {
                if let Some(&p) = pos.get(&c) {
                    out[p] = k as f64;
                }
            }
        });
        let t = self.t_max;
        idx.iter()
            .enumerate()
            .map(|(p, &i)| (self.classes[i].clone(), sums.expectation(p, t)))
            .collect()
    }

    /// `rho(k) = (1/|V|) sum_{alpha(gamma) = k} E[k_gamma]`.
    pub fn density_rho(&self, k: usize) -> Result<ExactResult> {
        if k < 2 {
            return Err(invalid("k", "loop length must be >= 2"));
        }
        let members: Vec<bool> = self.classes.iter().map(|c| c.alpha() == k).collect();
        let nv = self.graph.n_vertices() as f64;
        let sums = self.fold(1, None, self.t_max, |v, out| {
            out[0] = v
                .entries
                .iter()
                .filter(|e| members[e.0])
                .map(|e| e.1 as f64)
                .sum::<f64>()
                / nv
        });
        Ok(self.expectation_result(&sums, 0))
    }

    /// Open walks from `x` to `y` of length `<= max_len`, grouped by key.
    fn walks<K, F>(&self, x: usize, y: usize, max_len: usize, key: F) -> BTreeMap<K, f64>
    where
        K: Ord,
        F: Fn(&[usize]) -> K,
    {
        let dist = bfs(&self.graph, y);
        let mut out = BTreeMap::new();
        let mut path = vec![x];
        fn rec<K: Ord, F: Fn(&[usize]) -> K>(
            g: &Graph,
            y: usize,
            max_len: usize,
            dist: &[usize],
            path: &mut Vec<usize>,
            key: &F,
            out: &mut BTreeMap<K, f64>,
        ) {
            let cur = *path.last().unwrap();
            if cur == y && path.len() > 1 {
                *out.entry(key(path)).or_insert(0.0) += 1.0;
            }
            let steps = path.len() - 1;
            for &(nb, _) in g.neighbors(cur) {
                if steps + 1 + dist[nb] <= max_len {
                    path.push(nb);
                    rec(g, y, max_len, dist, path, key, out);
                    path.pop();
                }
            }
        }
        if dist[x] <= max_len {
            rec(&self.graph, y, max_len, &dist, &mut path, &key, &mut out);
        }
        out
    }

    fn walk_local_times(&self, path: &[usize]) -> Vec<u32> {
        let mut lt = vec![0u32; self.graph.n_vertices()];
        for &v in path {
            lt[v] += 1;
        }
        lt
    }

    /// `Z(x, y) / Z`, with walk plus loops of total length `<= T_max`.
    /// Walk local times count both endpoints.
    pub fn two_point(&self, x: usize, y: usize) -> Result<ExactResult> {
        self.check_pair(x, y)?;
        let (t, prev) = self.top_shells();
        let z = self.fold(0, None, t, |_, _| {});
        if self.beta == 0.0 {
            return Ok(ExactResult { value: 0.0, t_max: t, tail_estimate: 0.0 });
        }
        let groups = self.walks(x, y, t, |p| (p.len() - 1, self.walk_local_times(p)));
        let mut num_t = CompensatedSum::new();
        let mut num_prev = CompensatedSum::new();
        for ((len, lt), count) in &groups {
            let soup = self.fold(0, Some(lt), t - len, |_, _| {});
            let w = count * self.beta.powi(*len as i32);
            num_t += w * soup.z_upto(t - len);
            if *len <= prev {
                num_prev += w * soup.z_upto(prev - len);
            }
        }
        let value = num_t.value() / z.z_upto(t);
        let before = num_prev.value() / z.z_upto(prev);
        Ok(ExactResult { value, t_max: t, tail_estimate: (value - before).abs() })
    }

    fn check_pair(&self, x: usize, y: usize) -> Result<()> {
        let n = self.graph.n_vertices();
        if x >= n || y >= n {
            return Err(invalid("x", format!("vertex out of range (|V| = {n})")));
        }
        if x == y {
            return Err(invalid("y", "two-point function needs x != y"));
        }
        Ok(())
    }

    /// Compares `mu_a(gamma)` with
    /// `psi^a E[prod_e (k_e)_(a q_e)]`, `psi = (delta/J) (2/N)^(alpha/2 - 1)`,
    /// `k_e` counting length-two loops on `e`. Replacing `a` copies of `gamma`
    /// by length-two loops preserves length and local times, so both sides
    /// are compared at the same truncation.
    pub fn verify_decomposition(&self, c: &LoopClass, a: u32) -> Result<IdentityCheck> {
        if c.alpha() % 2 == 1 {
            return Err(Error::InvalidLoop(format!("class {c} has odd length")));
        }
        if a == 0 {
            return Err(invalid("a", "moment order must be >= 1"));
        }
        let half = (c.alpha() / 2) as i32;
        let psi = c.delta() as f64 / c.multiplicity() as f64 * (2.0 / self.n).powi(half - 1);
        let idx = self.require_class(c)?;
        let needs: Vec<(Option<usize>, u32)> = c
            .even_steps()
            .iter()
            .map(|&(e, q)| (self.bounce_of_edge[e], a * q))
            .collect();
        let sums = self.fold(2, None, self.t_max, |v, out| {
            out[0] = idx.map_or(0.0, |i| falling(v.count(i), a));
            out[1] = needs
                .iter()
                .map(|&(b, m)| b.map_or(if m == 0 { 1.0 } else { 0.0 }, |b| falling(v.count(b), m)))
                .product();
        });
        let t = self.t_max;
        let lhs = sums.expectation(0, t);
        let rhs = psi.powi(a as i32) * sums.expectation(1, t);
        Ok(IdentityCheck::new(lhs, rhs))
    }

    /// Compares `Z(x, y)/Z` with
    /// `(1/beta) sum_walks (2/N)^((|w|+1)/2) E[prod_e (k_e)_(q_e(w))]`, `q_e`
    /// counting steps `(w(2j), w(2j+1))` across `e`. The walk plus loops on
    /// the left is capped at `T_max - 1`, matching multisets of length
    /// `<= T_max` on the right.
    pub fn verify_open_decomposition(&self, x: usize, y: usize) -> Result<IdentityCheck> {
        self.check_pair(x, y)?;
        let (c1, c2) = (self.graph.color(x), self.graph.color(y));
        if c1.is_none() {
            return Err(Error::InvalidGraph("open-path decomposition needs a bipartite graph".into()));
        }
        if c1 == c2 {
            return Err(invalid("y", "x and y must lie on opposite sides of the bipartition"));
        }
        if self.beta == 0.0 {
            return Ok(IdentityCheck::new(0.0, 0.0));
        }
        let lhs = self.two_point(x, y)?.value;
        let g = &self.graph;
        let groups = self.walks(x, y, self.t_max, |p| {
            let mut q: Vec<(usize, u32)> = Vec::new();
            for j in 0..p.len() / 2 {
                let e = g.edge_between(p[2 * j], p[2 * j + 1]).expect("walk step");
                match q.iter_mut().find(|(f, _)| *f == e) {
                    Some(slot) => slot.1 += 1,
                    None => q.push((e, 1)),
                }
            }
            q.sort_unstable();
            (p.len() - 1, q)
        });
        let groups: Vec<(f64, Vec<(Option<usize>, u32)>)> = groups
            .into_iter()
            .map(|((len, q), count)| {
                let pref = count * (2.0 / self.n).powi(((len + 1) / 2) as i32);
                (pref, q.into_iter().map(|(e, m)| (self.bounce_of_edge[e], m)).collect())
            })
            .collect();
        let sums = self.fold(1, None, self.t_max, |v, out| {
            out[0] = groups
                .iter()
                .map(|(pref, needs)| {
                    pref * needs
                        .iter()
                        .map(|&(b, m)| b.map_or(0.0, |b| falling(v.count(b), m)))
                        .product::<f64>()
                })
                .sum();
        });
        let rhs = sums.expectation(0, self.t_max) / self.beta;
        Ok(IdentityCheck::new(lhs, rhs))
    }
}

/// `lambda(gamma) = (delta/J)(N/2) max{e^(N/2), 2e/N}^(alpha/2)`, an upper
/// bound on the `a`-th root of the factorial moments of `k_gamma`.
pub fn lambda_bound(c: &LoopClass, n: f64) -> f64 {
    let base = (n / 2.0).exp().max(2.0 * std::f64::consts::E / n);
    c.delta() as f64 / c.multiplicity() as f64 * (n / 2.0) * base.powf(c.alpha() as f64 / 2.0)
}

/// Uniform-in-beta upper bound `N [Delta^2 max{e^(N/2), 2e/N}]^(k/2)` on
/// the density of loops of length `k`.
pub fn density_upper_bound(n: f64, max_degree: usize, k: usize) -> f64 {
    let base = (n / 2.0).exp().max(2.0 * std::f64::consts::E / n);
    n * ((max_degree * max_degree) as f64 * base).powf(k as f64 / 2.0)
}

fn bfs(g: &Graph, root: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX / 4; g.n_vertices()];
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

/// Depth-first enumeration state.
struct Walker<'a> {
    eng: &'a ExactEngine,
    entries: Vec<(usize, u32)>,
    local_times: Vec<u32>,
    prefactor: Vec<f64>,
    length: usize,
    zero_from: u32,
}

impl<'a> Walker<'a> {
    fn new(eng: &'a ExactEngine, offset: Option<&[u32]>) -> Self {
        let nv = eng.graph.n_vertices();
        Walker {
            eng,
            entries: Vec::new(),
            local_times: offset.map_or_else(|| vec![0; nv], |o| o.to_vec()),
            prefactor: vec![1.0],
            length: 0,
            zero_from: eng.weight.zero_from().unwrap_or(u32::MAX),
        }
    }

    fn visit(&self, f: &mut dyn FnMut(&MultisetView)) {
        let u: f64 = self.local_times.iter().map(|&n| self.eng.weight.value(n)).product();
        f(&MultisetView {
            entries: &self.entries,
            local_times: &self.local_times,
            length: self.length,
            weight: self.prefactor.last().unwrap() * u,
        });
    }

    fn shift(&mut self, class: usize, up: bool) -> bool {
        let mut dead = false;
        for &(x, m) in self.eng.classes[class].visits() {
            if up {
                self.local_times[x] += m;
                dead |= self.local_times[x] >= self.zero_from;
            } else {
                self.local_times[x] -= m;
            }
        }
        dead
    }

    /// All multisets whose smallest class is `first`.
    fn shard(&mut self, first: usize, budget: usize, f: &mut dyn FnMut(&MultisetView)) {
        if self.eng.coef[first] == 0.0 {
            return;
        }
        self.grow(first, budget, f);
    }

    /// Adds `k >= 1` copies of class `i` and recurses on larger classes.
    fn grow(&mut self, i: usize, budget: usize, f: &mut dyn FnMut(&MultisetView)) {
        let alpha = self.eng.classes[i].alpha();
        let c = self.eng.coef[i];
        let base = *self.prefactor.last().unwrap();
        let mut k = 0u32;
        let mut pw = 1.0;
        let mut dead = false;
        while self.length + alpha <= budget && !dead {
            k += 1;
            pw *= c / k as f64;
            dead = self.shift(i, true);
            self.length += alpha;
            if k == 1 {
                self.entries.push((i, 1));
                self.prefactor.push(base * pw);
            } else {
                self.entries.last_mut().unwrap().1 = k;
                *self.prefactor.last_mut().unwrap() = base * pw;
            }
            if !dead {
                self.visit(f);
                for j in i + 1..self.eng.classes.len() {
                    let aj = self.eng.classes[j].alpha();
                    if self.length + aj > budget {
                        break;
                    }
                    if self.eng.coef[j] != 0.0 {
                        self.grow(j, budget, f);
                    }
                }
            }
        }
        for _ in 0..k {
            self.shift(i, false);
        }
        self.length -= k as usize * alpha;
        if k > 0 {
            self.entries.pop();
            self.prefactor.pop();
        }
    }
}
