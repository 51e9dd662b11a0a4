// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::E;
use std::path::Path;
use std::process::{Command, Output};

use budgetmech::market::MarketInstance;

fn budgetmech(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_budgetmech")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

/// Rows of a CSV file as string maps keyed by header.
fn read_csv(path: &Path) -> Vec<std::collections::HashMap<String, String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.deserialize().map(|r| r.unwrap()).collect()
}

fn num(row: &std::collections::HashMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap_or_else(|_| panic!("{key} = {:?}", row[key]))
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    assert!(f(lo) * f(hi) <= 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (f(hi) > 0.0) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Unit-rate payment for f(x) = ln(e - x), in closed form.
fn log_unit_payment(c: f64) -> f64 {
    if c >= E - 1.0 {
        0.0
    } else {
        E * (E - c).ln() - E + c + 1.0
    }
}

fn log_alloc(c: f64) -> f64 {
    (E - c).ln().clamp(0.0, 1.0)
}

const BUDGET: f64 = 13.0 / 3.0;
const COSTS: [f64; 2] = [2.0, 4.0];

/// Runs one trial on the two-seller market with per-seller output and returns (allocation, payment) pairs.
fn golden_run(mechanism: &str, rule: &str) -> Vec<(f64, f64)> {
    let dir = tempfile::tempdir().unwrap();
    let market = MarketInstance::from_parts(BUDGET, &COSTS, &[1.0, 1.0]).unwrap();
    let mpath = write(dir.path(), "market.json", &market.to_json());
    let cfg = format!("trials = 1\nper_seller = true\n[instance]\nsource = \"file\"\npath = {mpath:?}\n");
    let cpath = write(dir.path(), "exp.toml", &cfg);
    let out = dir.path().join("out");
    let o = budgetmech(&[
        "run",
        "--config",
        &cpath,
        "--mechanism",
        mechanism,
        "--rule",
        rule,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    read_csv(&out.join("run_sellers.csv")).iter().map(|r| (num(r, "allocation"), num(r, "payment"))).collect()
}

#[test]
fn linear_envy_free_matches_hand_computation() {
    let s = golden_run("envy-free", "linear");
    // Rate 6 exhausts the budget: x = 1 - c/6, payment 6(1 - x^2)/2.
    assert!((s[0].0 - 2.0 / 3.0).abs() < 1e-9 && (s[1].0 - 1.0 / 3.0).abs() < 1e-9);
    assert!((s[0].1 - 8.0 / 3.0).abs() < 1e-9 && (s[1].1 - 5.0 / 3.0).abs() < 1e-9);
}

#[test]
fn linear_truthful_matches_scalar_equations() {
    let s = golden_run("truthful", "linear");
    let r1 = bisect(|r| r - 8.0 / r - BUDGET, 1.0, 10.0);
    let r2 = bisect(|r| r - 2.0 / r - BUDGET, 1.0, 10.0);
    let p1 = r1 * (1.0 - (2.0 / r1).powi(2)) / 2.0;
    let p2 = r2 * (1.0 - (4.0 / r2).powi(2)) / 2.0;
    assert!((s[0].1 - p1).abs() < 1e-8 && (s[1].1 - p2).abs() < 1e-8, "{s:?}");
    assert!((s[0].0 - (1.0 - 2.0 / r1)).abs() < 1e-8);
    assert!((s[1].0 - (1.0 - 4.0 / r2)).abs() < 1e-8);
}

#[test]
fn log_rule_matches_closed_form_payments() {
    // Envy-free: one rate r with sum r Q(c/r) = B.
    let total = |r: f64| COSTS.iter().map(|&c| r * log_unit_payment(c / r)).sum::<f64>() - BUDGET;
    let r = bisect(total, 1.0, 50.0);
    let ef = golden_run("envy-free", "log");
    for (k, &c) in COSTS.iter().enumerate() {
        assert!((ef[k].0 - log_alloc(c / r)).abs() < 1e-8, "{ef:?}");
        assert!((ef[k].1 - r * log_unit_payment(c / r)).abs() < 1e-8, "{ef:?}");
    }

    // Truthful: seller i's rate solves the same equation with its own cost set to zero.
    let tr = golden_run("truthful", "log");
    for (i, &ci) in COSTS.iter().enumerate() {
        let eq = |r: f64| {
            COSTS.iter().enumerate().map(|(j, &c)| r * log_unit_payment(if j == i { 0.0 } else { c } / r)).sum::<f64>()
                - BUDGET
        };
        let ri = bisect(eq, 0.1, 50.0);
        assert!((tr[i].0 - log_alloc(ci / ri)).abs() < 1e-8, "{tr:?}");
        assert!((tr[i].1 - ri * log_unit_payment(ci / ri)).abs() < 1e-8, "{tr:?}");
    }
}

#[test]
fn same_seed_gives_identical_bytes() {
    let args = ["run", "--trials", "6", "--seed", "31", "--rule", "log"];
    let a = budgetmech(&args);
    let b = budgetmech(&args);
    assert!(a.status.success());
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
    let c = budgetmech(&["run", "--trials", "6", "--seed", "32", "--rule", "log"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn rounded_runs_are_deterministic() {
    let args = ["run", "--trials", "3", "--mechanism", "truthful-rounded", "--seed", "5"];
    assert_eq!(budgetmech(&args).stdout, budgetmech(&args).stdout);
}

#[test]
fn exit_codes() {
    assert_eq!(budgetmech(&["run", "--trials", "1"]).status.code(), Some(0));
    assert_eq!(budgetmech(&["--help"]).status.code(), Some(0));
    assert_eq!(budgetmech(&["frobnicate"]).status.code(), Some(1));
    let bad_rule = budgetmech(&["run", "--rule", "bogus"]);
    assert_eq!(bad_rule.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad_rule.stderr).starts_with("error:"));
    assert_eq!(budgetmech(&["run", "--config", "/nonexistent/exp.toml"]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let typo = write(dir.path(), "typo.toml", "trails = 3\n");
    assert_eq!(budgetmech(&["run", "--config", &typo]).status.code(), Some(1));

    // A negative tolerance demands strict slack that no check has, so every check fails.
    let harsh = write(dir.path(), "harsh.toml", "trials = 1\n[audit]\ntol = -1.0\n");
    assert_eq!(budgetmech(&["audit", "--config", &harsh]).status.code(), Some(0));
    assert_eq!(budgetmech(&["audit", "--config", &harsh, "--strict"]).status.code(), Some(2));

    // Expected envy-free violations do not count as failures.
    let ef = budgetmech(&["audit", "--trials", "2", "--mechanism", "envy-free", "--rule", "step:0.55", "--strict"]);
    assert_eq!(ef.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ef.stdout).contains("expected-fail"));
}

#[test]
fn zero_trials_give_header_only_table() {
    let o = budgetmech(&["run", "--trials", "0"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("trial,seed,mechanism"));
    let j = budgetmech(&["run", "--trials", "0", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&j.stdout).unwrap();
    assert_eq!(v.as_array().map(|a| a.len()), Some(0));
}

#[test]
fn single_cell_sweep_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg =
        "trials = 8\nseed = 99\n[instance]\nsource = \"generator\"\nn = 60\ntheta = 0.05\n[sweep]\nthetas = [0.05]\n";
    let cpath = write(dir.path(), "exp.toml", cfg);
    let run_dir = dir.path().join("run");
    let sweep_dir = dir.path().join("sweep");
    assert!(budgetmech(&["run", "--config", &cpath, "--out", run_dir.to_str().unwrap()]).status.success());
    assert!(budgetmech(&["sweep", "--config", &cpath, "--out", sweep_dir.to_str().unwrap()]).status.success());
    let worst = read_csv(&run_dir.join("run.csv")).iter().map(|r| num(r, "ratio")).fold(f64::INFINITY, f64::min);
    let cells = read_csv(&sweep_dir.join("sweep.csv"));
    assert_eq!(cells.len(), 1);
    assert_eq!(num(&cells[0], "worst_ratio"), worst);
    assert!(num(&cells[0], "worst_ratio") >= num(&cells[0], "floor") - 1e-9);
}

#[test]
fn out_directory_gets_tables_summary_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("probe");
    let o = budgetmech(&["probe", "--rule", "uniform", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    for f in ["probe.csv", "probe_summary.json", "probe_market.json", "probe_market.provenance.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let market = MarketInstance::from_json(&std::fs::read_to_string(out.join("probe_market.json")).unwrap()).unwrap();
    assert_eq!(market.len(), 10_000);
    let row = &read_csv(&out.join("probe.csv"))[0];
    assert_eq!(row["found"], "true");
    assert!(num(row, "envy_free_ratio") <= num(row, "bound"));

    // The emitted market feeds straight back in as a file source.
    let cfg = format!(
        "trials = 1\n[mechanism]\nname = \"envy-free\"\nrule = \"uniform\"\n[instance]\nsource = \"file\"\npath = {:?}\n",
        out.join("probe_market.json").to_str().unwrap()
    );
    let cpath = write(dir.path(), "replay.toml", &cfg);
    let replay = budgetmech(&["run", "--config", &cpath, "--out", dir.path().join("replay").to_str().unwrap()]);
    assert!(replay.status.success());
    let r = &read_csv(&dir.path().join("replay/run.csv"))[0];
    assert!((num(r, "ratio") - num(row, "envy_free_ratio")).abs() < 1e-9);
}

#[test]
fn summary_records_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h");
    let o = budgetmech(&["hardness", "--trials", "2", "--seed", "4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let s: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("hardness_summary.json")).unwrap()).unwrap();
    assert_eq!(s["config"]["seed"], 4);
    assert_eq!(s["config"]["trials"], 2);
    assert_eq!(read_csv(&out.join("hardness.csv")).len(), 2);
}

#[test]
fn submodular_config_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "trials = 3\n[mechanism]\nname = \"oracle\"\n[instance]\nsource = \"submodular-random\"\nn = 10\nbudget_fraction = 0.3\nfamily = { kind = \"coverage\", universe = 15, set_size = 3 }\n";
    let cpath = write(dir.path(), "sub.toml", cfg);
    let o = budgetmech(&["audit", "--config", &cpath, "--strict"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mismatched = budgetmech(&["run", "--config", &cpath, "--mechanism", "envy-free"]);
    assert_eq!(mismatched.status.code(), Some(1));
}
