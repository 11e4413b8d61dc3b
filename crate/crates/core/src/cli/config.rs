//! Run configuration, read from a TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::graphs::{Graph, NamedGraph};
use crate::mcmc::{check_observable, Observable, DEFAULT_BURN_IN, DEFAULT_M_CAP};
use crate::weights::{WeightFunction, WeightSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Exact,
    RpmExact,
    Mcmc,
    Threshold,
    Green,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    SingleEdge,
    Path { n: usize },
    Cycle { n: usize },
    Box { side: usize, dim: usize },
    Torus { side: usize, dim: usize },
    EdgeList { path: PathBuf },
}

impl GraphSpec {
    pub fn build(&self) -> crate::Result<Graph> {
        match self {
            GraphSpec::SingleEdge => Graph::named(NamedGraph::SingleEdge),
            GraphSpec::Path { n } => Graph::named(NamedGraph::Path(*n)),
            GraphSpec::Cycle { n } => Graph::named(NamedGraph::Cycle(*n)),
            GraphSpec::Box { side, dim } => Graph::named(NamedGraph::Box { side: *side, dim: *dim }),
            GraphSpec::Torus { side, dim } => Graph::torus(*side, *dim),
            GraphSpec::EdgeList { path } => Graph::read_edge_list(path),
        }
    }
}

/// A single value or a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    One(f64),
    Many(Vec<f64>),
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::One(v) => vec![*v],
            Grid::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Jsonl,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputParams {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputParams {
    fn default() -> Self {
        OutputParams { dir: PathBuf::from("loopsoup-out"), formats: vec![Format::Jsonl, Format::Csv] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExactParams {
    pub t_max: usize,
}

impl Default for ExactParams {
    fn default() -> Self {
        ExactParams { t_max: 12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcParams {
    pub m_cap: u32,
    pub burn_in: u64,
    pub samples: u64,
    pub thin: Option<u64>,
    /// Empty means one chain with the top-level seed.
    pub seeds: Vec<u64>,
    pub cycle_max_len: usize,
    pub write_chains: bool,
}

impl Default for McmcParams {
    fn default() -> Self {
        McmcParams {
            m_cap: DEFAULT_M_CAP,
            burn_in: DEFAULT_BURN_IN,
            samples: 10_000,
            thin: None,
            seeds: Vec::new(),
            cycle_max_len: 4,
            write_chains: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChiMethodSpec {
    Exact,
    Mc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdParams {
    pub d: usize,
    pub k_max: usize,
    pub method: ChiMethodSpec,
    pub samples: usize,
    pub window: usize,
}

impl Default for ThresholdParams {
    fn default() -> Self {
        ThresholdParams { d: 2, k_max: 12, method: ChiMethodSpec::Exact, samples: 100_000, window: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreenParams {
    #[serde(rename = "L")]
    pub l: usize,
    pub radii: Vec<usize>,
}

impl Default for GreenParams {
    fn default() -> Self {
        GreenParams { l: 128, radii: (1..=16).collect() }
    }
}

fn default_weight() -> WeightSpec {
    WeightSpec::Constant
}

fn default_n() -> f64 {
    2.0
}

fn default_beta() -> Grid {
    Grid::One(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub engine: Engine,
    #[serde(default)]
    pub graph: Option<GraphSpec>,
    #[serde(default = "default_weight")]
    pub weight: WeightSpec,
    #[serde(rename = "N", default = "default_n")]
    pub n: f64,
    #[serde(default = "default_beta")]
    pub beta: Grid,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputParams,
    #[serde(default)]
    pub exact: ExactParams,
    #[serde(default)]
    pub mcmc: McmcParams,
    #[serde(default)]
    pub threshold: ThresholdParams,
    #[serde(default)]
    pub green: GreenParams,
    #[serde(default)]
    pub observables: Vec<Observable>,
}

fn bad(key: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Invalid(format!("`{key}`: {reason}"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks values and fills the seed list.
    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.n.is_finite() && self.n > 0.0) {
            return Err(bad("N", "must be a positive number"));
        }
        let betas = self.beta.values();
        if betas.is_empty() {
            return Err(bad("beta", "grid is empty"));
        }
        if let Some(b) = betas.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
            return Err(bad("beta", format!("must be finite and >= 0 (got {b})")));
        }
        WeightFunction::new(self.weight.clone()).map_err(|e| bad("weight", e))?;
        if self.output.formats.is_empty() {
            return Err(bad("output.formats", "list at least one format"));
        }
        match self.engine {
            Engine::Exact | Engine::RpmExact | Engine::Mcmc => {
                let g = self.graph.as_ref().ok_or_else(|| bad("graph", "required by this engine"))?;
                let graph = g.build().map_err(|e| bad("graph", e))?;
                for o in &self.observables {
                    check_observable(&graph, o).map_err(|e| bad("observables", e))?;
                }
                match self.engine {
                    Engine::Exact | Engine::RpmExact => {
                        if self.exact.t_max == 0 {
                            return Err(bad("exact.t_max", "must be positive"));
                        }
                        if graph.is_bipartite() && self.exact.t_max % 2 == 1 {
                            return Err(bad("exact.t_max", "must be even on a bipartite graph"));
                        }
                        if self.engine == Engine::Exact {
                            if let Some(o) = self.observables.iter().find(|o| {
                                matches!(o, Observable::ConnectionByDistance { .. } | Observable::DoubleLinkTail { .. })
                            }) {
                                return Err(bad("observables", format!("{o:?} is not available for the exact engine")));
                            }
                        }
                    }
                    _ => {
                        if self.mcmc.m_cap < 2 {
                            return Err(bad("mcmc.m_cap", "must be >= 2"));
                        }
                        if self.mcmc.samples < crate::estimators::stats::MIN_BATCHES as u64 {
                            return Err(bad("mcmc.samples", "need at least 32 samples for batch errors"));
                        }
                        if !WeightFunction::new(self.weight.clone()).map(|w| w.is_positive()).unwrap_or(false) {
                            return Err(bad("weight", "the chain needs U(n) > 0 for all n"));
                        }
                    }
                }
            }
            Engine::Threshold => {
                let t = &self.threshold;
                if t.d == 0 {
                    return Err(bad("threshold.d", "must be >= 1"));
                }
                if t.k_max < 4 {
                    return Err(bad("threshold.k_max", "need k_max >= 4 for a rate fit"));
                }
                if t.method == ChiMethodSpec::Mc && t.samples < crate::threshold::MIN_MC_SAMPLES {
                    return Err(bad("threshold.samples", "need at least 10000 walks"));
                }
            }
            Engine::Green => {
                if self.green.l < 5 {
                    return Err(bad("green.L", "box side must be >= 5"));
                }
                if self.green.radii.iter().any(|&r| r == 0 || self.green.l / 2 + r >= self.green.l) {
                    return Err(bad("green.radii", "radii must be >= 1 and stay inside the box"));
                }
            }
        }
        Ok(())
    }

    /// Chain seeds after defaults.
    pub fn seeds(&self) -> Vec<u64> {
        if self.mcmc.seeds.is_empty() {
            vec![self.seed]
        } else {
            self.mcmc.seeds.clone()
        }
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Missing(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::parse(&text)
}
