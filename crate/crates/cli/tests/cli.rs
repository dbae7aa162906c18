use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbs-mcast")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = bin(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: [&str; 10] =
    ["--core", "8", "--core-edge", "16", "--secondary-edge", "6", "--user-access", "24", "--devices", "120"];

#[test]
fn gen_topo_is_deterministic() {
    let dir = tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let out = ok(&[&["gen-topo", "--seed", "5", "--out", p(&a)][..], &SMALL].concat());
    assert!(out.contains("174 nodes"), "{out}");
    ok(&[&["gen-topo", "--seed", "5", "--out", p(&b)][..], &SMALL].concat());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn run_then_compare() {
    let dir = tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let json = dir.path().join("r.json");
    let args = [
        &["run", "--gen", "--trials", "3", "--densities", "0.2,1.0", "--budgets", "256", "--course-sample"][..],
        &["--seed", "9", "--out", p(&csv), "--json", p(&json)],
        &SMALL,
    ]
    .concat();
    let out = ok(&args);
    assert!(out.contains("wrote 12 rows"), "{out}");
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("seed,density,budget,algorithm,members,j,total_bits,utilization,flow_entries,dup_link_traversals\n"));
    assert_eq!(text.lines().count(), 13);
    let rows: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 12);

    let first = fs::read(&csv).unwrap();
    ok(&args);
    assert_eq!(fs::read(&csv).unwrap(), first);

    let table = ok(&["compare", "--in", p(&csv)]);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].contains("reduction_%"));
}

#[test]
fn run_with_saved_topology_and_fixed_count() {
    let dir = tempdir().unwrap();
    let topo = dir.path().join("t.json");
    let csv = dir.path().join("r.csv");
    ok(&[&["gen-topo", "--seed", "2", "--out", p(&topo)][..], &SMALL].concat());
    ok(&["run", "--topo", p(&topo), "--trials", "2", "--densities", "0.5", "--budgets", "512", "--members", "25", "--out", p(&csv)]);
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(4) == Some("25")));
}

#[test]
fn bad_inputs_fail_with_diagnostics() {
    let dir = tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let cases: [&[&str]; 4] = [
        &["run", "--gen", "--trials", "1", "--densities", "1.5", "--out", p(&csv)],
        &["run", "--gen", "--trials", "0", "--out", p(&csv)],
        &["compare", "--in", "/nonexistent/results.csv"],
        &["run", "--topo", "/nonexistent/t.json", "--out", p(&csv)],
    ];
    for args in cases {
        let out = bin(args);
        assert!(!out.status.success(), "{args:?} should fail");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn keydemo_recovers_and_rekeys() {
    let out = ok(&["keydemo", "--members", "6", "--p-bits", "64", "--seed", "3", "--depart", "2"]);
    assert!(out.contains("all 6 members recovered"), "{out}");
    assert!(out.contains("knots: 13"), "{out}");
    assert!(out.contains("after 2 departures"), "{out}");
}

#[test]
fn savi_checks_against_rules() {
    let dir = tempdir().unwrap();
    let rules = dir.path().join("rules.jsonl");
    fs::write(&rules, "{\"src\":\"2001:db8::1\",\"dst\":\"ff3e::8000:1\",\"sport\":5004,\"dport\":5004}\n").unwrap();
    let out = ok(&[
        "savi",
        "--rules",
        p(&rules),
        "--check",
        "2001:db8::1,ff3e::8000:1,5004,5004",
        "--check",
        "2001:db8::2,ff3e::8000:1,5004,5004",
    ]);
    let lines: Vec<&str> = out.lines().collect();
    assert!(lines[0].starts_with("ALLOW"));
    assert!(lines[1].starts_with("DENY"));

    let bad = bin(&["savi", "--rules", p(&rules), "--check", "2001:db8::1,ff3e::1,5004,70000"]);
    assert!(!bad.status.success());
    fs::write(&rules, "{\"src\":\"not an address\",\"dst\":\"ff3e::1\",\"sport\":1,\"dport\":1}\n").unwrap();
    let bad = bin(&["savi", "--rules", p(&rules), "--check", "2001:db8::1,ff3e::1,1,1"]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line 1"));
}
