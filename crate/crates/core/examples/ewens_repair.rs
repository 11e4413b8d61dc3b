// The Ewens law, its fixed-point probabilities, and one repair step used
// as a sampler of the pairing at a vertex.

use std::collections::BTreeMap;
use std::sync::Arc;

use loopsoup::ewens::{domination_tail, ewens_probability, fixed_point_prob, fixed_point_tail, sample_ewens};
use loopsoup::graphs::{enumerate_cycles, Graph, NamedGraph};
use loopsoup::mcmc::{Chain, Model};
use loopsoup::rpm::{RpmConfig, RpmSnapshot};
use loopsoup::weights::WeightFunction;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> loopsoup::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let theta = 1.5;
    let mut counts: BTreeMap<Vec<usize>, u32> = BTreeMap::new();
    let draws = 20_000;
    for _ in 0..draws {
        *counts.entry(sample_ewens(theta, 3, &mut rng)).or_default() += 1;
    }
    for (p, c) in &counts {
        println!("{p:?}  empirical {:.4}  exact {:.4}", *c as f64 / draws as f64, ewens_probability(theta, p)?);
    }
    println!("P(exactly one fixed point, n = 4) = {:.4}", fixed_point_prob(1.0, 4, &[4], &[1])?);
    println!("q(1, 4, 4, 1) = {:.4}, 15/24 = {:.4}", fixed_point_tail(1.0, 4, 4, 1)?, 15.0 / 24.0);
    for k in 1..=4 {
        println!("P(at least {k} fixed among 6 of 8) = {:.4} <= {:.4}", fixed_point_tail(1.0, 8, 6, k)?, domination_tail(2.0, k));
    }

    // Four links on one edge, paired as two double links; repair at vertex 0.
    let g = Graph::named(NamedGraph::SingleEdge)?;
    let snap = RpmSnapshot { m: vec![4], pairings: vec![vec![[(0, 0), (0, 1)], [(0, 2), (0, 3)]]; 2] };
    let cfg = RpmConfig::from_snapshot(&g, &snap)?;
    let model = Arc::new(Model::new(g.clone(), WeightFunction::constant(), 2.0, 1.0, 4, enumerate_cycles(&g, 4))?);
    let mut chain = Chain::from_config(model, cfg, 3)?;
    let mut two = 0;
    let repairs = 20_000;
    for _ in 0..repairs {
        chain.ewens_repair(0);
        two += (chain.config().cycle_count(&g) == 2) as u32;
    }
    println!("P(two cycles) = {:.4}, exact 1/2", two as f64 / repairs as f64);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
