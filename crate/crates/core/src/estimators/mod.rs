//! Observables, error bars and bound checks on chain output.

pub mod green;
pub mod stats;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mcmc::{column, ChainOutput, Observable};
use crate::rwls_exact::ExactEngine;
use crate::weights::{WeightFunction, WeightSpec};

use stats::{linear_fit, normal_quantile, t_quantile, MIN_BATCHES};

/// Standard errors used by the `+ 3 se` style checks.
pub const CHECK_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub n: usize,
    pub n_eff: f64,
    pub seeds: Vec<u64>,
    pub params: BTreeMap<String, f64>,
}

impl EstimateReport {
    /// `estimate - z se` for a two-sided normal interval at `level`.
    pub fn lower_limit(&self, level: f64) -> f64 {
        self.estimate - normal_quantile(level) * self.se
    }

    pub fn upper_limit(&self, level: f64) -> f64 {
        self.estimate + normal_quantile(level) * self.se
    }

    pub fn with_params(mut self, params: &[(&str, f64)]) -> Self {
        for &(k, v) in params {
            self.params.insert(k.to_string(), v);
        }
        self
    }
}

/// A measured quantity against a computed bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub quantity: String,
    pub estimate: f64,
    pub se: f64,
    pub bound: f64,
    /// `true` when the bound is an upper bound.
    pub upper: bool,
    pub satisfied: bool,
    /// Distance from the estimate to the bound, positive when on the right side.
    pub margin: f64,
}

impl BoundCheck {
    /// `estimate <= bound + 3 se`.
    pub fn upper(quantity: impl Into<String>, estimate: f64, se: f64, bound: f64) -> Self {
        BoundCheck {
            quantity: quantity.into(),
            estimate,
            se,
            bound,
            upper: true,
            satisfied: estimate <= bound + CHECK_SIGMAS * se,
            margin: bound - estimate,
        }
    }

    /// `estimate >= bound - 3 se`.
    pub fn lower(quantity: impl Into<String>, estimate: f64, se: f64, bound: f64) -> Self {
        BoundCheck {
            quantity: quantity.into(),
            estimate,
            se,
            bound,
            upper: false,
            satisfied: estimate >= bound - CHECK_SIGMAS * se,
            margin: estimate - bound,
        }
    }
}

fn series<'a>(out: &'a ChainOutput, name: &str) -> Result<&'a [f64]> {
    out.series(name).ok_or_else(|| Error::MissingObservable(name.to_string()))
}

/// Pools batch means across chains: every chain is cut into the same number
/// of batches and all batch means are treated as independent.
pub fn estimate_series(name: &str, chains: &[Vec<f64>], seeds: &[u64]) -> Result<EstimateReport> {
    if chains.is_empty() {
        return Err(Error::Degenerate(format!("no samples for {name}")));
    }
    let mut batch = Vec::new();
    let mut all = Vec::new();
    for xs in chains {
        if xs.len() < MIN_BATCHES {
            return Err(Error::Degenerate(format!("{name}: {} samples, need {MIN_BATCHES}", xs.len())));
        }
        let b = xs.len() / MIN_BATCHES;
        batch.extend(xs.chunks_exact(b).take(MIN_BATCHES).map(stats::mean));
        all.extend_from_slice(xs);
    }
    let mean = stats::mean(&all);
    let se = (stats::variance(&batch) / batch.len() as f64).sqrt();
    let var = stats::variance(&all);
    let n_eff = if se > 0.0 { (var / (se * se)).min(all.len() as f64) } else { all.len() as f64 };
    Ok(EstimateReport {
        name: name.to_string(),
        estimate: mean,
        se,
        n: all.len(),
        n_eff,
        seeds: seeds.to_vec(),
        params: BTreeMap::new(),
    })
}

/// Pooled estimate of one recorded column.
pub fn estimate(outputs: &[ChainOutput], name: &str) -> Result<EstimateReport> {
    let chains: Vec<Vec<f64>> = outputs.iter().map(|o| series(o, name).map(<[f64]>::to_vec)).collect::<Result<_>>()?;
    let seeds: Vec<u64> = outputs.iter().map(|o| o.seed).collect();
    estimate_series(name, &chains, &seeds)
}

/// Pooled estimate of a per-sample combination of columns.
pub fn estimate_combined(
    outputs: &[ChainOutput],
    name: &str,
    columns: &[String],
    f: impl Fn(&[f64]) -> f64,
) -> Result<EstimateReport> {
    let mut chains = Vec::new();
    for o in outputs {
        let cols: Vec<&[f64]> = columns.iter().map(|c| series(o, c)).collect::<Result<_>>()?;
        let n = o.n_samples();
        let mut row = vec![0.0; cols.len()];
        chains.push(
            (0..n)
                .map(|i| {
                    for (r, c) in row.iter_mut().zip(&cols) {
                        *r = c[i];
                    }
                    f(&row)
                })
                .collect(),
        );
    }
    let seeds: Vec<u64> = outputs.iter().map(|o| o.seed).collect();
    estimate_series(name, &chains, &seeds)
}

pub fn estimate_rho(outputs: &[ChainOutput], k: usize) -> Result<EstimateReport> {
    estimate(outputs, &column::rho(k))
}

/// `sum_{k=2}^{K} k rho(k)` over the recorded lengths. Lengths that were not
/// recorded are skipped, which is exact for odd lengths on bipartite graphs.
pub fn micro_localtime_partial(outputs: &[ChainOutput], big_k: usize) -> Result<EstimateReport> {
    if big_k < 2 {
        return Err(invalid("K", "must be >= 2"));
    }
    let first = outputs.first().ok_or_else(|| Error::Degenerate("no chains".into()))?;
    let ks: Vec<usize> = (2..=big_k).filter(|&k| first.series(&column::rho(k)).is_some()).collect();
    if !ks.contains(&2) {
        return Err(Error::MissingObservable(column::rho(2)));
    }
    let names: Vec<String> = ks.iter().map(|&k| column::rho(k)).collect();
    estimate_combined(outputs, &format!("micro_localtime_{big_k}"), &names, |row| {
        row.iter().zip(&ks).map(|(r, &k)| k as f64 * r).sum()
    })
}

pub fn estimate_localtime_moments(outputs: &[ChainOutput], o: usize, m: u32) -> Result<EstimateReport> {
    if m == 0 || m > 8 {
        return Err(invalid("m", "moment order must be in 1..=8"));
    }
    estimate(outputs, &column::local_time(o, m))
}

pub fn estimate_connection(outputs: &[ChainOutput], x: usize, y: usize) -> Result<EstimateReport> {
    if x == y {
        return Err(invalid("y", "must differ from x"));
    }
    estimate(outputs, &column::connection(x, y))
}

pub fn estimate_connection_by_distance(outputs: &[ChainOutput], distances: &[usize]) -> Result<Vec<(usize, EstimateReport)>> {
    distances.iter().map(|&d| Ok((d, estimate(outputs, &column::connection_at(d))?))).collect()
}

/// Power-law fit `P(d) ~ A d^(-c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub exponent: f64,
    /// Combined standard error: regression scatter and propagated
    /// statistical errors of the points, added in quadrature.
    pub se: f64,
    pub ci: (f64, f64),
    pub level: f64,
    pub prefactor: f64,
    pub distances: Vec<f64>,
    pub residuals: Vec<f64>,
}

/// Least-squares slope of `ln P` against `ln d` over `(d, P, se)` points.
pub fn fit_decay(points: &[(f64, f64, f64)], level: f64) -> Result<DecayFit> {
    if points.len() < 4 {
        return Err(Error::Degenerate("decay fit needs at least 4 distances".into()));
    }
    if points.iter().any(|&(d, p, _)| !(p > 0.0) || !(d > 0.0)) {
        return Err(Error::Degenerate("decay fit needs positive distances and probabilities".into()));
    }
    let x: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (a, b, se_fit, residuals) = linear_fit(&x, &y)?;
    let mx = stats::mean(&x);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let se_stat = points
        .iter()
        .zip(&x)
        .map(|(&(_, p, se), xi)| {
            let w = (xi - mx) / sxx;
            (w * se / p).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    let se = (se_fit * se_fit + se_stat * se_stat).sqrt();
    let q = t_quantile(level, (points.len() - 2) as f64);
    let c = -b;
    Ok(DecayFit {
        exponent: c,
        se,
        ci: (c - q * se, c + q * se),
        level,
        prefactor: a.exp(),
        distances: points.iter().map(|p| p.0).collect(),
        residuals,
    })
}

/// The loop form of the two-point spin correlation and its bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    pub middle: EstimateReport,
    pub connection: EstimateReport,
    /// `(1/2N) P(x <-> y)`.
    pub upper: f64,
    /// `c1 P(x <-> y)^(1 + 1/2^(m-1))` with the plug-in `c1`.
    pub lower: f64,
    pub c1: f64,
    pub b_hat: f64,
    /// `upper - middle`, estimated sample by sample.
    pub upper_gap: EstimateReport,
    pub upper_check: BoundCheck,
    pub lower_check: BoundCheck,
}

/// Evaluates the sandwich from columns recorded by a `SpinMiddle`
/// observable. `c1 = (1/2N) b^(-1/2^(m-1))` with `b` the larger empirical
/// `2^m`-th moment of the shifted local times.
pub fn spin_correlation_sandwich(
    outputs: &[ChainOutput],
    weight: &WeightFunction,
    x: usize,
    y: usize,
    m: u32,
) -> Result<Sandwich> {
    let WeightSpec::Spin { n } = *weight.spec() else {
        return Err(invalid("weight", "the spin correlation sandwich needs a spin weight"));
    };
    if m == 0 {
        return Err(invalid("m", "must be >= 1"));
    }
    let n = n as f64;
    let middle = estimate(outputs, &column::middle(x, y))?;
    let connection = estimate(outputs, &column::connection(x, y))?;
    let p = 1u64 << m;
    let bx = estimate(outputs, &column::shifted_moment(x, p))?.estimate;
    let by = estimate(outputs, &column::shifted_moment(y, p))?.estimate;
    let b_hat = bx.max(by);
    let c1 = b_hat.powf(-1.0 / (1u64 << (m - 1)) as f64) / (2.0 * n);
    let upper = connection.estimate / (2.0 * n);
    let lower = c1 * connection.estimate.powf(1.0 + 1.0 / (1u64 << (m - 1)) as f64);
    let upper_gap = estimate_combined(
        outputs,
        "sandwich_upper_gap",
        &[column::connection(x, y), column::middle(x, y)],
        |r| r[0] / (2.0 * n) - r[1],
    )?;
    let upper_check = BoundCheck::lower("upper - middle", upper_gap.estimate, upper_gap.se, 0.0);
    let lower_check = BoundCheck::lower("middle vs lower", middle.estimate, middle.se, lower);
    Ok(Sandwich { middle, connection, upper, lower, c1, b_hat, upper_gap, upper_check, lower_check })
}

enum ExactColumn {
    Rho(usize),
    LocalTime(usize, u32),
    Connection(usize, usize),
    Middle(usize, usize),
    Shifted(usize, u64),
    DoubleLinks(Option<usize>),
    Links,
}

/// Exact truncated-soup expectations of the chain's columns, keyed by the
/// same names the chain records. Columns that only exist for lattices or
/// for whole-graph edge statistics are rejected.
pub fn exact_expectations(engine: &ExactEngine, n: f64, observables: &[Observable]) -> Result<Vec<(String, f64)>> {
    let g = engine.graph();
    let mut names: Vec<String> = Vec::new();
    let mut cols = Vec::new();
    let mut add = |name: String, c: ExactColumn| {
        if !names.contains(&name) {
            names.push(name);
            cols.push(c);
        }
    };
    for o in observables {
        crate::mcmc::check_observable(g, o)?;
        match o {
            Observable::Rho { k } => add(column::rho(*k), ExactColumn::Rho(*k)),
            Observable::LocalTime { vertex, max_moment } => {
                for p in 1..=*max_moment {
                    add(column::local_time(*vertex, p), ExactColumn::LocalTime(*vertex, p));
                }
            }
            Observable::Connection { x, y } => add(column::connection(*x, *y), ExactColumn::Connection(*x, *y)),
            Observable::SpinMiddle { x, y, m } => {
                let p = 1u64 << m;
                add(column::middle(*x, *y), ExactColumn::Middle(*x, *y));
                add(column::connection(*x, *y), ExactColumn::Connection(*x, *y));
                add(column::shifted_moment(*x, p), ExactColumn::Shifted(*x, p));
                add(column::shifted_moment(*y, p), ExactColumn::Shifted(*y, p));
            }
            Observable::DoubleLinks { edge } => {
                add(column::double_links(*edge), ExactColumn::DoubleLinks(engine.bounce_class(*edge)))
            }
            Observable::TotalLinks => add(column::TOTAL_LINKS.to_string(), ExactColumn::Links),
            other => return Err(invalid("observables", format!("{other:?} has no exact evaluation"))),
        }
    }
    let classes = engine.classes();
    let nv = g.n_vertices() as f64;
    let sums = engine.fold(cols.len(), None, engine.t_max(), |v, out| {
        for (o, c) in out.iter_mut().zip(&cols) {
            *o = match *c {
                ExactColumn::Rho(k) => {
                    v.entries.iter().filter(|e| classes[e.0].alpha() == k).map(|e| e.1 as f64).sum::<f64>() / nv
                }
                ExactColumn::LocalTime(x, p) => (v.local_times[x] as f64).powi(p as i32),
                ExactColumn::Connection(x, y) => v
                    .entries
                    .iter()
                    .any(|e| classes[e.0].visit_count(x) > 0 && classes[e.0].visit_count(y) > 0)
                    as u8 as f64,
                ExactColumn::Middle(x, y) => {
                    let s: f64 = v
                        .entries
                        .iter()
                        .map(|e| e.1 as f64 * (classes[e.0].visit_count(x) * classes[e.0].visit_count(y)) as f64)
                        .sum();
                    let tx = v.local_times[x] as f64 + n / 2.0;
                    let ty = v.local_times[y] as f64 + n / 2.0;
                    s / (tx * ty) / (2.0 * n)
                }
                ExactColumn::Shifted(x, p) => (v.local_times[x] as f64 + n / 2.0).powi(p as i32),
                ExactColumn::DoubleLinks(c) => c.map_or(0.0, |c| v.count(c) as f64),
                ExactColumn::Links => v.length as f64,
            };
        }
    });
    Ok(names.into_iter().enumerate().map(|(i, name)| (name, sums.expectation(i, engine.t_max()))).collect())
}

/// Empirical `P(k~_e >= a)` against `lambda^a / a!`.
pub fn poisson_tail_check(outputs: &[ChainOutput], lambda: f64, a_values: &[u32]) -> Result<Vec<BoundCheck>> {
    a_values
        .iter()
        .map(|&a| {
            let r = estimate(outputs, &column::double_link_tail(a))?;
            let bound = lambda.powi(a as i32) / (1..=a).map(|i| i as f64).product::<f64>();
            Ok(BoundCheck::upper(format!("P(k_e >= {a})"), r.estimate, r.se, bound))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_fit_on_exact_laws() {
        let pts: Vec<(f64, f64, f64)> = [1.0, 2.0, 4.0, 8.0].iter().map(|&d: &f64| (d, d.powi(-2), 0.0)).collect();
        let f = fit_decay(&pts, 0.95).unwrap();
        assert!((f.exponent - 2.0).abs() < 1e-12 && f.se < 1e-12);
        let flat: Vec<(f64, f64, f64)> = [1.0, 2.0, 4.0, 8.0].iter().map(|&d| (d, 0.3, 0.0)).collect();
        assert!(fit_decay(&flat, 0.95).unwrap().exponent.abs() < 1e-12);
        let zero: Vec<(f64, f64, f64)> = [1.0, 2.0, 4.0, 8.0].iter().map(|&d| (d, 0.0, 0.0)).collect();
        assert!(fit_decay(&zero, 0.95).is_err());
        assert!(fit_decay(&pts[..3], 0.95).is_err());
    }

    #[test]
    fn pooled_batches() {
        let a: Vec<f64> = (0..64).map(|i| (i % 2) as f64).collect();
        let r = estimate_series("x", &[a.clone(), a], &[1, 2]).unwrap();
        assert_eq!(r.estimate, 0.5);
        assert_eq!(r.n, 128);
        assert!(estimate_series("x", &[vec![1.0; 10]], &[1]).is_err());
    }

    #[test]
    fn bound_checks() {
        assert!(BoundCheck::upper("q", 1.1, 0.05, 1.0).satisfied);
        assert!(!BoundCheck::upper("q", 1.2, 0.01, 1.0).satisfied);
        assert!(BoundCheck::lower("q", 0.0, 0.0, 0.0).satisfied);
    }
}
