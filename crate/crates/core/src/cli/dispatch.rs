//! Runs the configured engine over the beta grid and collects records.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ChiMethodSpec, Engine, RunConfig};
use super::emit::config_hash;
use super::CliError;
use crate::estimators::{self, green};
use crate::graphs::move_cycles;
use crate::mcmc::{run_chains, ChainOutput, Model, RunSettings};
use crate::rpm::{enumerate_rpm, RpmCaps};
use crate::rwls_exact::ExactEngine;
use crate::threshold::{beta_lower_bound, chi_exact, chi_mc};
use crate::weights::WeightFunction;

/// One output row. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub engine: Engine,
    pub observable: String,
    pub beta: Option<f64>,
    pub value: f64,
    pub se: Option<f64>,
    pub n_eff: Option<f64>,
    /// Chain seeds joined by `;`.
    pub seeds: String,
    /// Exact rational value, when known.
    pub exact: Option<String>,
    pub config_hash: String,
}

#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub records: Vec<Record>,
    /// `(file name, chain)` for every chain run.
    pub chains: Vec<(String, ChainOutput)>,
}

struct Sink<'a> {
    engine: Engine,
    hash: &'a str,
    out: Vec<Record>,
}

impl Sink<'_> {
    fn push(&mut self, observable: impl Into<String>, beta: Option<f64>, value: f64) -> &mut Record {
        self.out.push(Record {
            engine: self.engine,
            observable: observable.into(),
            beta,
            value,
            se: None,
            n_eff: None,
            seeds: String::new(),
            exact: None,
            config_hash: self.hash.to_string(),
        });
        self.out.last_mut().unwrap()
    }
}

fn join_seeds(seeds: &[u64]) -> String {
    seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";")
}

/// Runs the engine; deterministic given the configuration.
pub fn dispatch(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    cfg.validate()?;
    let hash = config_hash(cfg);
    let mut sink = Sink { engine: cfg.engine, hash: &hash, out: Vec::new() };
    let mut chains = Vec::new();
    let weight = WeightFunction::new(cfg.weight.clone())?;
    let graph = cfg.graph.as_ref().map(|g| g.build()).transpose()?;
    match cfg.engine {
        Engine::Exact => {
            let g = graph.expect("validated");
            for beta in cfg.beta.values() {
                let e = ExactEngine::new(&g, &weight, cfg.n, beta, cfg.exact.t_max)?;
                let z = e.partition_function();
                sink.push("partition_function", Some(beta), z.value);
                for (name, v) in estimators::exact_expectations(&e, cfg.n, &cfg.observables)? {
                    sink.push(name, Some(beta), v);
                }
                for o in &cfg.observables {
                    if let crate::mcmc::Observable::Connection { x, y } = o {
                        sink.push(format!("two_point_{x}_{y}"), Some(beta), e.two_point(*x, *y)?.value);
                    }
                }
            }
        }
        Engine::RpmExact => {
            let g = graph.expect("validated");
            for beta in cfg.beta.values() {
                let r = enumerate_rpm(&g, &weight, cfg.n, beta, RpmCaps::total(cfg.exact.t_max as u32))?;
                sink.push("partition_function", Some(beta), r.z);
                for (e, v) in r.double_link_means.iter().enumerate() {
                    sink.push(crate::mcmc::column::double_links(e), Some(beta), *v);
                }
                for (x, v) in r.local_time_means.iter().enumerate() {
                    sink.push(crate::mcmc::column::local_time(x, 1), Some(beta), *v);
                }
            }
        }
        Engine::Mcmc => {
            let g = graph.expect("validated");
            let seeds = cfg.seeds();
            let settings = RunSettings { burn_in: cfg.mcmc.burn_in, samples: cfg.mcmc.samples, thin: cfg.mcmc.thin };
            let cycles = move_cycles(&g, cfg.mcmc.cycle_max_len);
            for (bi, beta) in cfg.beta.values().into_iter().enumerate() {
                let model = Arc::new(Model::new(g.clone(), weight.clone(), cfg.n, beta, cfg.mcmc.m_cap, cycles.clone())?);
                let outs = run_chains(model, &seeds, settings, &cfg.observables)?;
                for (name, _) in &outs[0].columns {
                    let r = estimators::estimate(&outs, name)?;
                    let rec = sink.push(name.clone(), Some(beta), r.estimate);
                    rec.se = Some(r.se);
                    rec.n_eff = Some(r.n_eff);
                    rec.seeds = join_seeds(&seeds);
                }
                let cap = outs.iter().map(|o| o.stats.cap_hit_rate()).sum::<f64>() / outs.len() as f64;
                sink.push("cap_hit_rate", Some(beta), cap).seeds = join_seeds(&seeds);
                if cfg.mcmc.write_chains {
                    for o in outs {
                        chains.push((format!("chain_b{bi}_s{}.json", o.seed), o));
                    }
                }
            }
        }
        Engine::Threshold => {
            let t = &cfg.threshold;
            let mut series = Vec::new();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            for k in 1..=t.k_max {
                let c = match t.method {
                    ChiMethodSpec::Exact => chi_exact(&weight, t.d, k)?,
                    ChiMethodSpec::Mc => chi_mc(&weight, t.d, k, t.samples, &mut rng)?,
                };
                let rec = sink.push(format!("chi_{k}"), None, c.value);
                if t.method == ChiMethodSpec::Mc {
                    rec.se = Some(c.se);
                    rec.seeds = cfg.seed.to_string();
                }
                rec.exact = c.exact.clone();
                series.push((k, c.value));
            }
            let b = beta_lower_bound(&series, t.d, t.window)?;
            sink.push("rate", None, b.rate);
            sink.push("beta_tilde", None, b.beta_tilde);
            sink.push("rate_single", None, b.rate_single);
            sink.push("beta_tilde_single", None, b.beta_single);
            sink.push("rate_last", None, b.rate_last);
        }
        Engine::Green => {
            let p = &cfg.green;
            let c = p.l / 2;
            let gf = green::killed_green(p.l, (c, c))?;
            sink.push("g_xx", None, gf.at((c, c)));
            for &r in &p.radii {
                sink.push(format!("gap_r{r}"), None, gf.at((c, c)) - gf.at((c + r, c)));
            }
            let fit_radii: Vec<usize> = p.radii.iter().copied().filter(|&r| r >= 2).collect();
            if !fit_radii.is_empty() {
                let fit = green::green_log_fit(p.l, &fit_radii)?;
                sink.push("log_fit_constant", None, fit.constant);
                sink.push("log_fit_max_residual", None, fit.max_residual);
            }
        }
    }
    Ok(Artifacts { records: sink.out, chains })
}
