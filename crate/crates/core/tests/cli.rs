use std::fs;
use std::path::{Path, PathBuf};

use loopsoup::cli::{load_config, main_with_args, Record};

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(cfg: &Path, out: &Path) -> i32 {
    main_with_args(["loopsoup", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn records(out: &Path) -> Vec<Record> {
    fs::read_to_string(out.join("records.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&tmp.path().join("nope.toml"), tmp.path()), 2);

    let bad = write(tmp.path(), "bad.toml", "engine = \"exact\"\ngraph = { kind = \"single_edge\" }\nbeta = -1\n");
    assert_eq!(run(&bad, tmp.path()), 3);
    let err = load_config(&bad).unwrap_err().to_string();
    assert!(err.contains("beta"), "{err}");

    let typo = write(tmp.path(), "typo.toml", "engine = \"exact\"\ngraph = { kind = \"single_edge\" }\nbeta_ = 1\n");
    assert_eq!(run(&typo, tmp.path()), 3);

    let nograph = write(tmp.path(), "nograph.toml", "engine = \"mcmc\"\n");
    assert_eq!(run(&nograph, tmp.path()), 3);

    let ok = write(tmp.path(), "ok.toml", "engine = \"exact\"\ngraph = { kind = \"single_edge\" }\n");
    let blocker = write(tmp.path(), "blocker", "");
    assert_eq!(run(&ok, &blocker), 4);
}

#[test]
fn defaults_are_filled() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write(tmp.path(), "min.toml", "engine = \"mcmc\"\ngraph = { kind = \"torus\", side = 4, dim = 2 }\n");
    let cfg = load_config(&p).unwrap();
    assert_eq!(cfg.n, 2.0);
    assert_eq!(cfg.mcmc.m_cap, 64);
    assert_eq!(cfg.mcmc.burn_in, 1000);
    assert_eq!(cfg.exact.t_max, 12);
}

#[test]
fn exact_partition_function_record() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write(
        tmp.path(),
        "e.toml",
        "engine = \"exact\"\ngraph = { kind = \"single_edge\" }\nbeta = 0.5\nexact = { t_max = 40 }\nobservables = [{ kind = \"connection\", x = 0, y = 1 }]\n",
    );
    let out = tmp.path().join("out");
    assert_eq!(run(&p, &out), 0);
    let recs = records(&out);
    let z = recs.iter().find(|r| r.observable == "partition_function").unwrap();
    assert!((z.value - 4.0 / 3.0).abs() < 1e-10);
    let c = recs.iter().find(|r| r.observable == "connect_0_1").unwrap();
    assert!((c.value - 0.25).abs() < 1e-10);
    let csv = fs::read_to_string(out.join("records.csv")).unwrap();
    assert_eq!(csv.lines().count(), recs.len() + 1);
    assert!(csv.starts_with("engine,observable,beta,value,se,n_eff,seeds,exact,config_hash"));
    assert!(out.join("run.json").exists());
}

#[test]
fn mcmc_writes_one_chain_per_seed_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "engine = \"mcmc\"\ngraph = { kind = \"torus\", side = 4, dim = 2 }\nweight = { kind = \"spin\", N = 2 }\nbeta = 0.8\n\
                mcmc = { burn_in = 50, samples = 200, thin = 1, seeds = [3, 9] }\n\
                observables = [{ kind = \"rho\", k = 2 }]\n";
    let p = write(tmp.path(), "m.toml", text);
    let a = tmp.path().join("a");
    let files = ["records.jsonl", "records.csv", "chain_b0_s3.json", "chain_b0_s9.json", "run.json"];
    assert_eq!(run(&p, &a), 0);
    let first: Vec<Vec<u8>> = files.iter().map(|f| fs::read(a.join(f)).unwrap()).collect();
    assert_eq!(run(&p, &a), 0);
    for (f, bytes) in files.iter().zip(&first) {
        assert_eq!(&fs::read(a.join(f)).unwrap(), bytes, "{f}");
    }
    let recs = records(&a);
    let rho = recs.iter().find(|r| r.observable == "rho_2").unwrap();
    assert_eq!(rho.seeds, "3;9");
    assert!(rho.se.unwrap() > 0.0);
}

#[test]
fn threshold_for_non_interacting_walk() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write(tmp.path(), "t.toml", "engine = \"threshold\"\nthreshold = { d = 2, k_max = 6 }\n");
    let out = tmp.path().join("out");
    assert_eq!(run(&p, &out), 0);
    let recs = records(&out);
    let b = recs.iter().find(|r| r.observable == "beta_tilde").unwrap();
    assert_eq!(b.value, 0.25);
    assert!(recs.iter().filter(|r| r.observable.starts_with("chi_")).all(|r| r.exact.as_deref() == Some("1")));
}

#[test]
fn green_engine() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write(tmp.path(), "g.toml", "engine = \"green\"\ngreen = { L = 32, radii = [1, 2, 4] }\noutput = { formats = [\"csv\"] }\n");
    let out = tmp.path().join("out");
    assert_eq!(run(&p, &out), 0);
    assert!(!out.join("records.jsonl").exists());
    let csv = fs::read_to_string(out.join("records.csv")).unwrap();
    assert!(csv.contains("gap_r1"));
}
