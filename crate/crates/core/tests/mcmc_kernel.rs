use std::sync::Arc;

use loopsoup::estimators::estimate;
use loopsoup::graphs::{enumerate_cycles, Graph, NamedGraph};
use loopsoup::mcmc::{column, run_chains, validate_stationarity, Chain, Checkpoint, Model, Observable, RunSettings};
use loopsoup::rpm::{enumerate_configs, LinkRef, RpmCaps, RpmConfig};
use loopsoup::weights::WeightFunction;

fn edge() -> Graph {
    Graph::named(NamedGraph::SingleEdge).unwrap()
}

/// Cycles of a single-edge configuration: components of the union of the
/// two matchings.
fn single_edge_cycles(cfg: &RpmConfig) -> usize {
    let m = cfg.m()[0];
    let mut seen = vec![false; m as usize];
    let mut c = 0;
    for start in 0..m {
        if seen[start as usize] {
            continue;
        }
        c += 1;
        let (mut cur, mut side) = (start, 0);
        while !seen[cur as usize] {
            seen[cur as usize] = true;
            cur = cfg.partner(LinkRef::new(0, cur), side).label;
            side = 1 - side;
            seen[cur as usize] = true;
            cur = cfg.partner(LinkRef::new(0, cur), side).label;
            side = 1 - side;
        }
    }
    c
}

#[test]
fn model_weight_by_hand_on_single_edge() {
    let g = edge();
    let u = WeightFunction::factorial();
    let (n, beta) = (3.0, 0.7);
    let model = Model::new(g.clone(), u.clone(), n, beta, 6, enumerate_cycles(&g, 4)).unwrap();
    let configs = enumerate_configs(&g, RpmCaps::per_edge(6), 10_000).unwrap();
    // 1 + 1*1 + 3*3 + 15*15 matchings for m = 0, 2, 4, 6.
    assert_eq!(configs.len(), 1 + 1 + 9 + 225);
    for cfg in configs {
        let m = cfg.m()[0];
        let fact: f64 = (1..=m).map(f64::from).product();
        let half: f64 = (1..=m / 2).map(f64::from).product();
        let want = n.powi(single_edge_cycles(&cfg) as i32) * beta.powi(m as i32) / fact / (half * half);
        assert!((model.ln_weight(&cfg) - want.ln()).abs() < 1e-12);
    }
}

#[test]
fn move_ratios() {
    let g = edge();
    let model = Model::new(g.clone(), WeightFunction::constant(), 2.0, 1.0, 64, enumerate_cycles(&g, 4)).unwrap();
    let mut cfg = RpmConfig::empty(&g);
    let mut lt = vec![0, 0];
    assert_eq!(model.double_link_ratio(&cfg, &lt, 0, true), Some(1.0));
    assert_eq!(model.double_link_ratio(&cfg, &lt, 0, false), None);
    model.apply_double_link(&mut cfg, &mut lt, 0, true);
    assert_eq!(model.double_link_ratio(&cfg, &lt, 0, false), Some(1.0));

    let sq = Graph::named(NamedGraph::Cycle(4)).unwrap();
    let model = Model::with_cycle_len(sq.clone(), WeightFunction::constant(), 2.0, 1.0, 64, 4).unwrap();
    let square = model.cycles().cycles.iter().find(|c| c.len() == 4).unwrap().clone();
    let empty = RpmConfig::empty(&sq);
    assert_eq!(model.cycle_ratio(&empty, &[0; 4], &square, true), Some(2.0));

    let cold = Model::with_cycle_len(sq.clone(), WeightFunction::constant(), 2.0, 0.0, 64, 4).unwrap();
    assert_eq!(cold.cycle_ratio(&empty, &[0; 4], &square, true), Some(0.0));

    let capped = Model::new(g.clone(), WeightFunction::constant(), 2.0, 1.0, 2, enumerate_cycles(&g, 4)).unwrap();
    let mut cfg = RpmConfig::empty(&g);
    let mut lt = vec![0, 0];
    capped.apply_double_link(&mut cfg, &mut lt, 0, true);
    assert_eq!(capped.double_link_ratio(&cfg, &lt, 0, true), None);
}

#[test]
fn kernel_checks_on_tiny_spaces() {
    let cases = [
        (edge(), 4),
        (Graph::named(NamedGraph::Path(3)).unwrap(), 2),
        (Graph::named(NamedGraph::Cycle(3)).unwrap(), 2),
    ];
    for (g, cap) in cases {
        for u in [WeightFunction::constant(), WeightFunction::spin(2).unwrap(), WeightFunction::pairwise(0.7).unwrap()] {
            for (n, beta) in [(1.0, 0.8), (3.0, 1.3)] {
                let model = Model::with_cycle_len(g.clone(), u.clone(), n, beta, cap, 4).unwrap();
                let r = validate_stationarity(&model).unwrap();
                assert!(r.deviation <= 1e-10, "{r:?}");
                assert!(r.balance_gap <= 1e-12 && r.row_sum_gap <= 1e-12, "{r:?}");
                assert!(r.irreducible);
            }
        }
    }
}

#[test]
fn poisson_mean_of_double_links() {
    let model = Arc::new(Model::with_cycle_len(edge(), WeightFunction::constant(), 2.0, 0.5, 20, 4).unwrap());
    let obs = [Observable::DoubleLinks { edge: 0 }];
    let outs = run_chains(model, &[11, 12], RunSettings { burn_in: 1000, samples: 100_000, thin: Some(1) }, &obs).unwrap();
    let r = estimate(&outs, &column::double_links(0)).unwrap();
    assert!((r.estimate - 0.25).abs() <= 3.0 * r.se, "{r:?}");
    assert_eq!(outs[0].stats.cap_rejections, 0);
}

#[test]
fn long_runs_stay_consistent_and_resume() {
    let model = Arc::new(Model::with_cycle_len(Graph::torus(4, 2).unwrap(), WeightFunction::factorial(), 2.0, 1.5, 8, 4).unwrap());
    let mut chain = Chain::new(model.clone(), 5);
    for _ in 0..300 {
        chain.sweep();
    }
    chain.check_consistency().unwrap();
    let cp: Checkpoint = serde_json::from_str(&serde_json::to_string(&chain.checkpoint()).unwrap()).unwrap();
    let mut other = Chain::resume(model, &cp).unwrap();
    for _ in 0..50 {
        chain.sweep();
        other.sweep();
    }
    assert_eq!(chain.config(), other.config());
    assert_eq!(chain.stats(), other.stats());
}
