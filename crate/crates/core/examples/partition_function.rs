// Exact truncated partition function of the loop soup on a single edge,
// compared with the closed form `1/(1 - beta^2)^(N/2)` and with the random
// path model enumerated at the same link budget.

use loopsoup::graphs::{Graph, NamedGraph};
use loopsoup::rpm::{enumerate_rpm, RpmCaps};
use loopsoup::rwls_exact::ExactEngine;
use loopsoup::weights::WeightFunction;

pub fn run_example() -> loopsoup::Result<()> {
    let g = Graph::named(NamedGraph::SingleEdge)?;
    let u = WeightFunction::constant();
    let (n, beta) = (2.0, 0.5);

    for t in [4, 8, 16, 40] {
        let e = ExactEngine::new(&g, &u, n, beta, t)?;
        let z = e.partition_function();
        println!("T = {t:>2}  Z = {:.12}  last shell {:.2e}", z.value, z.tail_estimate);
    }
    let closed = (1.0 - beta * beta as f64).powf(-n / 2.0);
    println!("closed form     {closed:.12}");

    let e = ExactEngine::new(&g, &u, n, beta, 40)?;
    println!("rho(2)          {:.12}", e.density_rho(2)?.value);
    println!("<S_0 S_1>       {:.12}", e.two_point(0, 1)?.value);

    // Both models cut at the same total length give the same number.
    let t = 10;
    let rpm = enumerate_rpm(&g, &u, n, beta, RpmCaps::total(t as u32))?;
    let z_t = ExactEngine::new(&g, &u, n, beta, t)?.partition_function().value;
    println!("T = {t}: RPM Z = {:.12}, soup Z = {z_t:.12}", rpm.z);
    assert!((rpm.z - z_t).abs() < 1e-12);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
