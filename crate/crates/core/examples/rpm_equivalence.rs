// Loop-class multiplicities of the soup and of the random path model
// agree once both are truncated at the same total length.

use loopsoup::graphs::{Graph, NamedGraph};
use loopsoup::rpm::{crosscheck_equivalence, RpmCaps, RpmStructure};
use loopsoup::rwls_exact::ExactEngine;
use loopsoup::weights::WeightFunction;

pub fn run_example() -> loopsoup::Result<()> {
    let g = Graph::named(NamedGraph::Cycle(4))?;
    let t = 8;
    let rpm = RpmStructure::enumerate(&g, RpmCaps::total(t as u32))?;
    println!("{} path configurations with at most {t} links", rpm.n_configs());

    for (name, u) in [("U = 1", WeightFunction::constant()), ("spin(2)", WeightFunction::spin(2)?)] {
        let e = ExactEngine::new(&g, &u, 2.0, 0.5, t)?;
        let rep = crosscheck_equivalence(&e, &rpm, &u, 2.0, 0.5, 4, &[])?;
        println!("{name:>8}: {} classes, largest gap {:.1e}", rep.class_gaps.len(), rep.max_gap);
        for c in rep.class_gaps.iter().take(3) {
            println!("          {:?}", c);
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
