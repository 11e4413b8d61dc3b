// Exact stationarity of the sweep on a tiny space, then loop densities on
// a small torus against the uniform upper bound.

use std::sync::Arc;

use loopsoup::estimators::{estimate_rho, poisson_tail_check};
use loopsoup::graphs::{Graph, NamedGraph};
use loopsoup::mcmc::{run_chains, validate_stationarity, Model, Observable, RunSettings};
use loopsoup::rwls_exact::density_upper_bound;
use loopsoup::weights::WeightFunction;

pub fn run_example() -> loopsoup::Result<()> {
    let tiny = Model::with_cycle_len(Graph::named(NamedGraph::Path(3))?, WeightFunction::factorial(), 2.0, 1.0, 2, 4)?;
    let r = validate_stationarity(&tiny)?;
    println!("path(3), cap 2: {} states, |mu K - mu| = {:.1e}, irreducible {}", r.states, r.deviation, r.irreducible);

    let g = Graph::torus(4, 2)?;
    let u = WeightFunction::spin(2)?;
    let obs = [Observable::Rho { k: 2 }, Observable::Rho { k: 4 }, Observable::DoubleLinkTail { a: vec![1, 2, 3] }];
    for beta in [0.3, 1.0] {
        let model = Arc::new(Model::with_cycle_len(g.clone(), u.clone(), 2.0, beta, 64, 4)?);
        let settings = RunSettings { burn_in: 200, samples: 2_000, thin: Some(1) };
        let outs = run_chains(model, &[1, 2], settings, &obs)?;
        for k in [2, 4] {
            let r = estimate_rho(&outs, k)?;
            println!(
                "beta {beta}: rho({k}) = {:.5} +- {:.5}  (bound {:.1})",
                r.estimate,
                r.se,
                density_upper_bound(2.0, 4, k)
            );
        }
        for c in poisson_tail_check(&outs, std::f64::consts::E, &[1, 2, 3])? {
            println!("    {} = {:.4} <= {:.3}: {}", c.quantity, c.estimate, c.bound, c.satisfied);
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
