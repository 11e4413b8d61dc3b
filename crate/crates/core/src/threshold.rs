//! The weakly self-avoiding walk functional
//! `chi_U(k) = E[ prod_x U(n_x) ]` over `k`-step simple random walks on
//! `Z^d` (visits counted at steps `1..=k`), and the inverse-temperature
//! surrogate `beta~ = e^(-f) / (2d)` built from its exponential rate `f`.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::stats::{batch_means, linear_fit, MIN_BATCHES};
use crate::weights::WeightFunction;

/// Largest number of walks [`chi_exact`] will enumerate.
pub const WALK_BUDGET: f64 = 1e9;
/// Fewest walks accepted by [`chi_mc`].
pub const MIN_MC_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChiMethod {
    Exact,
    Mc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiEstimate {
    pub k: usize,
    pub d: usize,
    pub value: f64,
    pub se: f64,
    pub method: ChiMethod,
    /// The exact value as `p/q` when the weight has rational values.
    pub exact: Option<String>,
}

/// Walk counts keyed by how many sites were visited once, twice, ...
type Signatures = HashMap<Vec<u32>, u64>;

struct Enumerator<'a> {
    d: usize,
    width: usize,
    counts: Vec<u8>,
    cc: Vec<u32>,
    zero_from: Option<u32>,
    out: &'a mut Signatures,
}

impl Enumerator<'_> {
    fn stride(&self, axis: usize) -> usize {
        self.width.pow(axis as u32)
    }

    fn step(&mut self, pos: usize, left: usize) {
        if left == 0 {
            if let Some(c) = self.out.get_mut(&self.cc[..]) {
                *c += 1;
            } else {
                self.out.insert(self.cc.clone(), 1);
            }
            return;
        }
        for axis in 0..self.d {
            let s = self.stride(axis);
            for next in [pos + s, pos - s] {
                if self.enter(next) {
                    self.step(next, left - 1);
                }
                self.leave(next);
            }
        }
    }

    /// Adds a visit at `p`; `false` when the walk's product is exactly zero.
    fn enter(&mut self, p: usize) -> bool {
        let c = self.counts[p] as usize;
        if c > 0 {
            self.cc[c] -= 1;
        }
        self.counts[p] += 1;
        self.cc[c + 1] += 1;
        self.zero_from.is_none_or(|z| (c + 1) < z as usize)
    }

    fn leave(&mut self, p: usize) {
        let c = self.counts[p] as usize;
        self.cc[c] -= 1;
        self.counts[p] -= 1;
        if c > 1 {
            self.cc[c - 1] += 1;
        }
    }
}

fn signatures(d: usize, k: usize, zero_from: Option<u32>) -> Signatures {
    let width = 2 * k + 3;
    let centre: usize = (0..d).map(|a| (k + 1) * width.pow(a as u32)).sum();
    let fresh = || (vec![0u8; width.pow(d as u32)], vec![0u32; k + 2]);
    // Split on the first two steps for parallelism.
    let dirs: Vec<(usize, bool)> = (0..d).flat_map(|a| [(a, true), (a, false)]).collect();
    let prefixes: Vec<Vec<(usize, bool)>> = if k >= 2 {
        dirs.iter().flat_map(|&a| dirs.iter().map(move |&b| vec![a, b])).collect()
    } else if k == 1 {
        dirs.iter().map(|&a| vec![a]).collect()
    } else {
        vec![vec![]]
    };
    let parts: Vec<Signatures> = prefixes
        .par_iter()
        .map(|prefix| {
            let (counts, cc) = fresh();
            let mut out = Signatures::new();
            let mut en = Enumerator { d, width, counts, cc, zero_from, out: &mut out };
            let mut pos = centre;
            for &(axis, up) in prefix {
                let s = en.stride(axis);
                pos = if up { pos + s } else { pos - s };
                if !en.enter(pos) {
                    return Signatures::new();
                }
            }
            en.step(pos, k - prefix.len());
            out
        })
        .collect();
    let mut total = Signatures::new();
    for p in parts {
        for (sig, c) in p {
            *total.entry(sig).or_default() += c;
        }
    }
    total
}

/// Exact `chi_U(k)` on `Z^d` by enumerating all `(2d)^k` walks.
pub fn chi_exact(u: &WeightFunction, d: usize, k: usize) -> Result<ChiEstimate> {
    if d == 0 {
        return Err(invalid("d", "dimension must be >= 1"));
    }
    let walks = (2.0 * d as f64).powi(k as i32);
    if walks > WALK_BUDGET {
        return Err(Error::BudgetExceeded(format!("(2d)^k = {walks:.3e} walks exceeds {WALK_BUDGET:.0e}")));
    }
    if k > 250 {
        return Err(invalid("k", "too many steps"));
    }
    let sigs = signatures(d, k, u.zero_from());
    let mut keys: Vec<&Vec<u32>> = sigs.keys().collect();
    keys.sort();
    let mut value = 0.0;
    for sig in &keys {
        let w: f64 = sig.iter().enumerate().skip(1).map(|(c, &m)| u.value(c as u32).powi(m as i32)).product();
        value += sigs[*sig] as f64 * w;
    }
    value /= walks;
    let exact = (|| {
        let mut acc = BigRational::zero();
        for sig in &keys {
            let mut w = BigRational::from_integer(BigInt::from(sigs[*sig]));
            for (c, &m) in sig.iter().enumerate().skip(1) {
                if m > 0 {
                    w *= num_traits::pow(u.exact(c as u32)?, m as usize);
                }
            }
            acc += w;
        }
        let denom = num_traits::pow(BigInt::from(2 * d), k);
        Some(acc / BigRational::from_integer(denom))
    })();
    if let Some(q) = &exact {
        if let (Some(n), Some(dd)) = (num_traits::ToPrimitive::to_f64(q.numer()), num_traits::ToPrimitive::to_f64(q.denom())) {
            if n.is_finite() && dd.is_finite() && dd > 0.0 {
                value = n / dd;
            }
        }
    }
    let exact = exact.map(|q| q.to_string());
    Ok(ChiEstimate { k, d, value, se: 0.0, method: ChiMethod::Exact, exact })
}

/// Monte Carlo `chi_U(k)` from independent walks, with batch-means error.
pub fn chi_mc<R: Rng + ?Sized>(u: &WeightFunction, d: usize, k: usize, samples: usize, rng: &mut R) -> Result<ChiEstimate> {
    if d == 0 {
        return Err(invalid("d", "dimension must be >= 1"));
    }
    if samples < MIN_MC_SAMPLES {
        return Err(invalid("samples", format!("need at least {MIN_MC_SAMPLES}")));
    }
    let mut pos = vec![0i64; d];
    let mut path: Vec<Vec<i64>> = Vec::with_capacity(k);
    let mut xs = Vec::with_capacity(samples);
    for _ in 0..samples {
        pos.iter_mut().for_each(|p| *p = 0);
        path.clear();
        for _ in 0..k {
            let dir = rng.random_range(0..2 * d);
            pos[dir / 2] += if dir % 2 == 0 { 1 } else { -1 };
            path.push(pos.clone());
        }
        path.sort_unstable();
        let mut w = 1.0;
        let mut i = 0;
        while i < path.len() {
            let mut j = i;
            while j < path.len() && path[j] == path[i] {
                j += 1;
            }
            w *= u.value((j - i) as u32);
            i = j;
        }
        xs.push(w);
    }
    let bm = batch_means(&xs, MIN_BATCHES)?;
    Ok(ChiEstimate { k, d, value: bm.mean, se: bm.se, method: ChiMethod::Mc, exact: None })
}

/// Finite-`k` surrogate of the inverse-temperature bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaBound {
    pub d: usize,
    /// Smallest and largest `k` in the fit window.
    pub window: (usize, usize),
    /// Slope of `ln chi` against `k` over the window.
    pub rate: f64,
    pub beta_tilde: f64,
    /// Largest one-step increment of `ln chi` in the window, the
    /// conservative variant.
    pub rate_single: f64,
    pub beta_single: f64,
    /// `(1/k) ln chi(k)` at the largest `k`.
    pub rate_last: f64,
}

/// Fits the rate over the last `window` points of a series sorted by `k`.
pub fn beta_lower_bound(series: &[(usize, f64)], d: usize, window: usize) -> Result<BetaBound> {
    if series.len() < 4 {
        return Err(Error::Degenerate("need chi at 4 or more values of k".into()));
    }
    if d == 0 {
        return Err(invalid("d", "dimension must be >= 1"));
    }
    if series.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(invalid("series", "k values must increase"));
    }
    if series.iter().any(|&(_, c)| !(c > 0.0)) {
        return Err(Error::Degenerate("chi must be positive".into()));
    }
    let w = window.clamp(2, series.len());
    let tail = &series[series.len() - w..];
    let ks: Vec<f64> = tail.iter().map(|p| p.0 as f64).collect();
    let ls: Vec<f64> = tail.iter().map(|p| p.1.ln()).collect();
    let (_, rate, _, _) = linear_fit(&ks, &ls)?;
    let rate_single = tail
        .windows(2)
        .map(|p| (p[1].1.ln() - p[0].1.ln()) / (p[1].0 - p[0].0) as f64)
        .fold(f64::NEG_INFINITY, f64::max);
    let last = tail.last().unwrap();
    let two_d = 2.0 * d as f64;
    Ok(BetaBound {
        d,
        window: (tail[0].0, last.0),
        rate,
        beta_tilde: (-rate).exp() / two_d,
        rate_single,
        beta_single: (-rate_single).exp() / two_d,
        rate_last: last.1.ln() / last.0 as f64,
    })
}
