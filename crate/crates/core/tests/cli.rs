use std::path::Path;
use std::process::{Command, Output};

use disclab::matrix::{sample_goe, write_fixture};
use disclab::rng::RngStream;
use serde_json::Value;

fn disclab(args: &[&str], workers: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_disclab"));
    cmd.args(args).env_remove("DISCLAB_WORKERS");
    if let Some(w) = workers {
        cmd.env("DISCLAB_WORKERS", w);
    }
    cmd.output().expect("binary runs")
}

fn metadata(csv: &str) -> Value {
    let line = csv.lines().next().unwrap();
    serde_json::from_str(line.strip_prefix("# ").unwrap()).unwrap()
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(2).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn phase_default_grid() {
    let out = disclab(&["phase"], None);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "kappa,tau1,bartau,tau2,tau_f,eta_star,delta_star,marker");
    let table = rows(&text);
    assert_eq!(table.len(), 195);
    let tau2_last: f64 = table.last().unwrap()[3].parse().unwrap();
    assert!((tau2_last - 5.67).abs() < 0.1, "{tau2_last}");
    let marked: Vec<f64> =
        table.iter().filter(|r| r[7] == "tau1_tauf_crossing").map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(marked.len(), 2);
    assert!((marked[0] - 0.718).abs() < 0.006 && (marked[1] - 1.652).abs() < 0.006, "{marked:?}");
    let meta = metadata(&text);
    let c = meta["meta"]["crossings_tau1_tauf"].as_array().unwrap();
    assert!((c[0].as_f64().unwrap() - 0.718).abs() < 0.005);
}

#[test]
fn rho_semicircle_centre() {
    let out = disclab(&["rho", "--kappa", "2", "--points", "101"], None);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let centre = &rows(&text)[50];
    assert_eq!(centre[0].parse::<f64>().unwrap(), 0.0);
    let v: f64 = centre[1].parse().unwrap();
    assert!((v - 1.0 / std::f64::consts::PI).abs() < 1e-12);
}

#[test]
fn reproducible_and_worker_independent() {
    let dir = tempfile::tempdir().unwrap();
    let args = |name: &str| -> Vec<String> {
        ["disc", "--n", "9", "--d", "4", "--instances", "6", "--seed", "11", "--grid", "0.5:2:0.25", "--out"]
            .iter()
            .map(|s| s.to_string())
            .chain([dir.path().join(name).display().to_string()])
            .collect()
    };
    let run = |name: &str, workers: &str| {
        let a = args(name);
        let refs: Vec<&str> = a.iter().map(String::as_str).collect();
        let out = disclab(&refs, Some(workers));
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(dir.path().join(name)).unwrap()
    };
    let a = run("a.csv", "1");
    let b = run("b.csv", "1");
    let c = run("c.csv", "4");
    assert_eq!(a, b);
    assert_eq!(a, c);

    let flag =
        disclab(&["prob", "--kappa", "1.8", "--d", "6", "--samples", "7000", "--seed", "3", "--workers", "3"], None);
    let env = disclab(&["prob", "--kappa", "1.8", "--d", "6", "--samples", "7000", "--seed", "3"], Some("1"));
    assert_eq!(flag.stdout, env.stdout);

    let manifest: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["artifacts"][0]["sha256"], disclab::cli::sha256_hex(&a));
    assert!(manifest["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn chain_output_reproducible() {
    let args = ["esd", "--kappa", "1", "--d", "8", "--seed", "5", "--samples", "600", "--burn-in", "300"];
    let a = disclab(&args, Some("1"));
    let b = disclab(&args, Some("3"));
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let meta = metadata(&String::from_utf8(a.stdout).unwrap());
    assert!(meta["meta"]["l1_to_rho"].as_f64().is_some());
    assert_eq!(meta["config"]["esd"]["seed"], 5);
}

fn write_duplicated_fixture(path: &Path) {
    let w = sample_goe(4, RngStream::new(2, 0)).unwrap();
    let file = std::fs::File::create(path).unwrap();
    write_fixture(file, &[w.clone(), w]).unwrap();
}

#[test]
fn disc_duplicated_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dup.bin");
    write_duplicated_fixture(&path);
    let out = disclab(&["disc", "--fixture", path.to_str().unwrap(), "--grid", "0.1:1:0.3"], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    for r in rows(&text) {
        assert_eq!(r[5].parse::<f64>().unwrap(), 0.0);
        assert_eq!(r[4], "2");
    }
}

#[test]
fn exit_codes() {
    let budget = disclab(&["disc", "--n", "30", "--d", "2", "--seed", "1"], None);
    assert_eq!(budget.status.code(), Some(3));
    let zero = disclab(&["prob", "--kappa", "0.2", "--d", "30", "--samples", "200", "--seed", "1"], None);
    assert_eq!(zero.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&zero.stderr).contains("rare"));
    let gd = disclab(
        &["gd", "--q", "0.5", "--kappa", "0.2", "--n", "4", "--d", "30", "--samples", "200", "--seed", "1"],
        None,
    );
    assert_eq!(gd.status.code(), Some(4));
    // a frozen, far too large proposal leaves the acceptance band
    let chain = disclab(
        &[
            "esd",
            "--kappa",
            "1",
            "--d",
            "20",
            "--seed",
            "1",
            "--samples",
            "200",
            "--burn-in",
            "0",
            "--proposal-sd",
            "50",
        ],
        None,
    );
    assert_eq!(chain.status.code(), Some(5), "{}", String::from_utf8_lossy(&chain.stderr));
    let usage = disclab(&["prob", "--kappa", "1"], None);
    assert_eq!(usage.status.code(), Some(2));
    let missing_seed = disclab(&["esd", "--kappa", "1", "--d", "10"], None);
    assert_eq!(missing_seed.status.code(), Some(2));
    let bad_workers = disclab(&["laplace", "--n", "5"], Some("zero"));
    assert_eq!(bad_workers.status.code(), Some(2));
}

#[test]
fn checks_drive_exit_code() {
    // a short chain at small d misses the 0.05 target; only --check enforces it
    let args = ["esd", "--kappa", "1", "--d", "6", "--seed", "9", "--samples", "300", "--burn-in", "300"];
    assert_eq!(disclab(&args, None).status.code(), Some(0));
    let mut strict = args.to_vec();
    strict.push("--check");
    let out = disclab(&strict, None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("check failed"));
}

#[test]
fn json_format_and_reports() {
    let out = disclab(&["classify", "--kappa", "1.2", "--tau", "10", "--format", "json"], None);
    assert_eq!(out.status.code(), Some(0));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["data"]["region"], "SAT");
    assert_eq!(doc["metadata"]["schema_version"], disclab::cli::SCHEMA_VERSION);

    let out = disclab(&["laplace", "--c", "0.5", "--n", "4000", "--format", "json"], None);
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    let v = doc["data"][0]["value"].as_f64().unwrap();
    assert!((v / 2f64.sqrt() - 1.0).abs() < 0.02);

    let out = disclab(
        &["empirics", "--kappa", "3", "--tau", "0.5", "--dims", "2,3", "--instances", "3", "--seed", "1"],
        None,
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout).unwrap().contains("rows.1.sat_fraction,1"));
}
