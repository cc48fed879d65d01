use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn evolv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evolv")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn lines(o: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&o.stdout).lines().map(|l| serde_json::from_str(l).expect("json line")).collect()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

const SCALAR: &str = r#"{
    "grid": {"t0": 0, "h": 0.1, "n": 5},
    "nu": 1,
    "state_dim": 1,
    "material": {"kind": "autonomous", "m_kernel": MK, "n_kernel": NK},
    "spatial": {"matrix": 0},
    "source": {"expr": ["1"]}
}"#;

fn scalar(m: &str, n: &str) -> String {
    SCALAR.replace("MK", m).replace("NK", n)
}

#[test]
fn examples_list_and_expand() {
    let o = evolv(&["examples"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for name in ["heat1d", "wave_memory", "tdide"] {
        assert!(text.contains(name));
        let o = evolv(&["examples", name]);
        assert_eq!(code(&o), 0);
        let dumped = evolv(&["solve", "--example", name, "--dump-scenario"]);
        assert_eq!(o.stdout, dumped.stdout, "{name}");
    }
    assert_eq!(code(&evolv(&["examples", "nope"])), 2);
}

#[test]
fn heat_solve_writes_reproducible_artifacts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let o = evolv(&["solve", "--example", "heat1d", "--out", dir.path().to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let csv_a = fs::read(a.path().join("heat1d.csv")).unwrap();
    assert_eq!(csv_a, fs::read(b.path().join("heat1d.csv")).unwrap());
    let header = String::from_utf8_lossy(&csv_a).lines().next().unwrap().to_string();
    assert!(header.starts_with("k,t,re_u1,im_u1,re_u2"));

    let report = |d: &Path| {
        let mut v: Value = serde_json::from_str(&fs::read_to_string(d.join("heat1d.report.json")).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("wallclock_s");
        v
    };
    let r = report(a.path());
    assert_eq!(r, report(b.path()));
    assert_eq!(r["format"], 1);
    // min(ν, 1/k) with ν = 1, k = 1.
    let c = r["certificate"]["c"].as_f64().unwrap();
    assert!((c - 1.0).abs() < 0.05, "c = {c}");
    assert_eq!(r["norm_bound_ok"], true);
}

#[test]
fn tdide_solves() {
    let o = evolv(&["solve", "--example", "tdide"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(lines(&o)[0]["law"]["kind"], "block");
}

#[test]
fn weight_sweep_reports_each_weight() {
    let o = evolv(&["solve", "--example", "heat1d", "--nu", "1,2,4"]);
    assert_eq!(code(&o), 0);
    let nus: Vec<f64> = lines(&o).iter().map(|r| r["nu"].as_f64().unwrap()).collect();
    assert_eq!(nus, vec![1.0, 2.0, 4.0]);
}

#[test]
fn certify_maria_is_near_the_pointwise_value() {
    let o = evolv(&["certify", "--example", "maria"]);
    assert_eq!(code(&o), 0);
    let r = &lines(&o)[0]["certificate"];
    let c = r["c"].as_f64().unwrap();
    let pointwise = r["maria_pointwise_c"].as_f64().unwrap();
    assert!((pointwise - 0.8820).abs() < 1e-3, "{pointwise}");
    let h = std::f64::consts::TAU / 128.0;
    assert!(c >= pointwise && c - pointwise < h.sqrt(), "c = {c}");
}

#[test]
fn certify_minus_identity_is_uncertified() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "neg.json", &scalar("{}", r#"{"delta": -1}"#));
    let o = evolv(&["certify", "--scenario", &path]);
    assert_eq!(code(&o), 1);
    assert!(lines(&o)[0]["certificate"]["c"].as_f64().unwrap() < 0.0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("uncertified"));
}

#[test]
fn input_errors_exit_two_with_field_paths() {
    let dir = tempfile::tempdir().unwrap();
    let one_point = scalar("{\"delta\": 1}", "{}").replace("\"n\": 5", "\"n\": 1");
    let path = write(dir.path(), "one.json", &one_point);
    assert_eq!(code(&evolv(&["solve", "--scenario", &path])), 2);

    let path = write(dir.path(), "extra.json", &scalar("{\"delta\": 1, \"extra\": 0}", "{}"));
    let o = evolv(&["solve", "--scenario", &path]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("material") && err.contains("extra"), "{err}");

    assert_eq!(code(&evolv(&["solve", "--scenario", "/nonexistent/x.json"])), 2);
    assert_eq!(code(&evolv(&["solve", "--example", "heat1d", "--nu", "-1"])), 2);
}

#[test]
fn degenerate_step_exits_three_naming_the_index() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "deg.json", &scalar("{}", "{}"));
    let o = evolv(&["solve", "--scenario", &path]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("k = 0"));
}

#[test]
fn scenario_outputs_resolve_next_to_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let text = scalar("{\"delta\": 1}", "{}").replace(
        "\"source\"",
        "\"outputs\": {\"csv\": \"out/u.csv\", \"report\": \"out/r.json\"}, \"source\"",
    );
    let path = write(dir.path(), "s.json", &text);
    assert_eq!(code(&evolv(&["solve", "--scenario", &path])), 0);
    assert!(dir.path().join("out/u.csv").exists() && dir.path().join("out/r.json").exists());
}

#[test]
fn verify_suites() {
    let o = evolv(&["verify", "commutator", "--seed", "7"]);
    assert_eq!(code(&o), 0);
    assert_eq!(lines(&o).len(), 3);

    let o = evolv(&["verify", "nu-independence", "--example", "heat1d", "--nus", "1,2,4"]);
    assert_eq!(code(&o), 0);

    assert_eq!(code(&evolv(&["verify", "causality", "--seed", "3"])), 0);
    let o = evolv(&["verify", "causality", "--inject-anticausal"]);
    assert_eq!(code(&o), 1);
    assert_eq!(lines(&o)[0]["pass"], false);

    for suite in ["adjoint", "spectral", "oracle"] {
        let o = evolv(&["verify", suite, "--seed", "5"]);
        assert_eq!(code(&o), 0, "{suite}");
    }
    let o = evolv(&["verify", "corpus", "--seed", "10", "--count", "5"]);
    assert_eq!(code(&o), 0);
    assert!(lines(&o).len() >= 5);
}

#[test]
fn convergence_of_the_zero_problem_is_exact() {
    let o = evolv(&["convergence", "--amplitude", "0", "--halvings", "2"]);
    assert_eq!(code(&o), 0);
    let r = &lines(&o)[0];
    for study in ["temporal", "spatial"] {
        assert!(r[study]["errors"].as_array().unwrap().iter().all(|e| e.as_f64() == Some(0.0)));
    }
}
