// The four-point spin correlation as a loop functional, bracketed by the
// connection probability, on a single edge where it is also exact.

use std::sync::Arc;

use loopsoup::estimators::{exact_expectations, spin_correlation_sandwich};
use loopsoup::graphs::{Graph, NamedGraph};
use loopsoup::mcmc::{column, run_chains, Model, Observable, RunSettings};
use loopsoup::rwls_exact::ExactEngine;
use loopsoup::weights::WeightFunction;

pub fn run_example() -> loopsoup::Result<()> {
    let g = Graph::named(NamedGraph::SingleEdge)?;
    let u = WeightFunction::spin(2)?;
    let obs = [Observable::SpinMiddle { x: 0, y: 1, m: 1 }];
    let beta = 1.0;
    let model = Arc::new(Model::with_cycle_len(g.clone(), u.clone(), 2.0, beta, 64, 4)?);
    let outs = run_chains(model, &[1, 2], RunSettings { burn_in: 500, samples: 20_000, thin: Some(1) }, &obs)?;
    let s = spin_correlation_sandwich(&outs, &u, 0, 1, 1)?;
    println!("lower {:.5} <= middle {:.5} +- {:.5} <= upper {:.5}", s.lower, s.middle.estimate, s.middle.se, s.upper);

    let exact = exact_expectations(&ExactEngine::new(&g, &u, 2.0, beta, 40)?, 2.0, &obs)?;
    let m = exact.iter().find(|(n, _)| *n == column::middle(0, 1)).unwrap().1;
    println!("exact middle {m:.5}");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
