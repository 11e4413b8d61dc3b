// Connection probability against distance on a torus, fitted to a power law.

use std::sync::Arc;

use loopsoup::estimators::{estimate_connection_by_distance, fit_decay};
use loopsoup::graphs::Graph;
use loopsoup::mcmc::{run_chains, Model, Observable, RunSettings};
use loopsoup::weights::WeightFunction;

pub fn run_example() -> loopsoup::Result<()> {
    let g = Graph::torus(12, 2)?;
    let model = Arc::new(Model::with_cycle_len(g, WeightFunction::spin(2)?, 2.0, 1.0, 64, 4)?);
    let d = vec![1, 2, 3, 4, 6];
    let obs = [Observable::ConnectionByDistance { distances: d.clone() }];
    let outs = run_chains(model, &[1, 2], RunSettings { burn_in: 300, samples: 1_000, thin: Some(1) }, &obs)?;
    let pts: Vec<(f64, f64, f64)> = estimate_connection_by_distance(&outs, &d)?
        .into_iter()
        .map(|(d, r)| {
            println!("d = {d}: P = {:.4} +- {:.4}", r.estimate, r.se);
            (d as f64, r.estimate, r.se)
        })
        .collect();
    let fit = fit_decay(&pts, 0.95)?;
    println!("c = {:.3}, 95% interval [{:.3}, {:.3}]", fit.exponent, fit.ci.0, fit.ci.1);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
