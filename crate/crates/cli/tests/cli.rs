//! Black-box tests of the installed binary: every check spawns the real
//! executable and inspects its files, stdout, and stderr.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fairsel"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_err(args: &[&str]) -> Value {
    let out = bin().args(args).output().expect("binary runs");
    assert!(!out.status.success(), "command {args:?} unexpectedly passed");
    serde_json::from_slice(&out.stderr).expect("stderr is one JSON object")
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn string_set(value: &Value) -> BTreeSet<String> {
    value
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect()
}

fn gen_fixture(dir: &Path, extra: &[&str]) {
    let out = dir.to_str().unwrap();
    let mut args = vec![
        "gen",
        "--n-features",
        "12",
        "--p",
        "0.25",
        "--rows",
        "5000",
        "--seed",
        "7",
        "--out",
        out,
    ];
    args.extend_from_slice(extra);
    run_ok(&args);
}

#[test]
fn gen_is_deterministic_and_validates_arguments() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    gen_fixture(&a, &[]);
    gen_fixture(&b, &[]);
    for name in ["spec.json", "data.csv", "roles.json", "fair_set.json"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }

    let err = run_err(&[
        "gen",
        "--n-features",
        "4",
        "--p",
        "0.2",
        "--rows",
        "0",
        "--out",
        tmp.path().join("bad").to_str().unwrap(),
    ]);
    assert_eq!(err["kind"], "argument");
    assert!(err["error"].as_str().unwrap().contains("rows"));

    // Unbiased generation marks every candidate fair.
    let c = tmp.path().join("c");
    run_ok(&[
        "gen",
        "--n-features",
        "6",
        "--p",
        "0",
        "--rows",
        "100",
        "--seed",
        "1",
        "--out",
        c.to_str().unwrap(),
    ]);
    let truth = json_file(&c.join("fair_set.json"));
    assert_eq!(string_set(&truth["fair_set"]).len(), 6);
    assert!(string_set(&truth["biased"]).is_empty());
}

#[test]
fn oracle_selection_matches_generated_ground_truth() {
    let tmp = TempDir::new().unwrap();
    let gen = tmp.path().join("gen");
    gen_fixture(&gen, &[]);
    let spec = gen.join("spec.json");

    let seq_out = tmp.path().join("seq");
    run_ok(&[
        "select",
        "--backend",
        "oracle",
        "--spec",
        spec.to_str().unwrap(),
        "--algo",
        "seqsel",
        "--out",
        seq_out.to_str().unwrap(),
    ]);
    let selection = json_file(&seq_out.join("selection.json"));
    let truth = json_file(&gen.join("fair_set.json"));
    assert_eq!(
        string_set(&selection["selected"]),
        string_set(&truth["fair_set"])
    );
    let union: BTreeSet<String> = string_set(&selection["c1"])
        .union(&string_set(&selection["c2"]))
        .cloned()
        .collect();
    assert_eq!(union, string_set(&selection["selected"]));

    let summary = json_file(&seq_out.join("summary.json"));
    assert_eq!(summary["test_count"], 16);
    assert_eq!(summary["phase1_tests"], 12);

    // The group algorithm lands on the same sets, so the file matches byte
    // for byte.
    let grp_out = tmp.path().join("grp");
    run_ok(&[
        "select",
        "--backend",
        "oracle",
        "--spec",
        spec.to_str().unwrap(),
        "--algo",
        "grpsel",
        "--seed",
        "5",
        "--out",
        grp_out.to_str().unwrap(),
    ]);
    assert_eq!(
        fs::read(seq_out.join("selection.json")).unwrap(),
        fs::read(grp_out.join("selection.json")).unwrap()
    );
}

#[test]
fn data_backend_recovers_truth_and_reruns_identically() {
    let tmp = TempDir::new().unwrap();
    let gen = tmp.path().join("gen");
    gen_fixture(&gen, &[]);

    let mut outs = Vec::new();
    for name in ["r1", "r2"] {
        let out = tmp.path().join(name);
        run_ok(&[
            "select",
            "--backend",
            "fisher_z",
            "--data",
            gen.join("data.csv").to_str().unwrap(),
            "--roles",
            gen.join("roles.json").to_str().unwrap(),
            "--alpha",
            "0.01",
            "--algo",
            "grpsel",
            "--seed",
            "3",
            "--out",
            out.to_str().unwrap(),
        ]);
        outs.push(out);
    }
    let selection = json_file(&outs[0].join("selection.json"));
    let truth = json_file(&gen.join("fair_set.json"));
    assert_eq!(
        string_set(&selection["selected"]),
        string_set(&truth["fair_set"])
    );
    for name in ["selection.json", "trace.jsonl", "summary.json"] {
        assert_eq!(
            fs::read(outs[0].join(name)).unwrap(),
            fs::read(outs[1].join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
}

#[test]
fn eval_reports_the_fairness_pattern() {
    let tmp = TempDir::new().unwrap();
    let gen = tmp.path().join("gen");
    gen_fixture(&gen, &[]);
    let sel = tmp.path().join("sel");
    run_ok(&[
        "select",
        "--backend",
        "oracle",
        "--spec",
        gen.join("spec.json").to_str().unwrap(),
        "--out",
        sel.to_str().unwrap(),
    ]);
    let eval = tmp.path().join("eval");
    run_ok(&[
        "eval",
        "--spec",
        gen.join("spec.json").to_str().unwrap(),
        "--data",
        gen.join("data.csv").to_str().unwrap(),
        "--roles",
        gen.join("roles.json").to_str().unwrap(),
        "--selection",
        sel.join("selection.json").to_str().unwrap(),
        "--n-mc",
        "5000",
        "--out",
        eval.to_str().unwrap(),
    ]);
    let report = json_file(&eval.join("eval.json"));
    let gap = |m: &str| report[m]["interventional_gap"].as_f64().unwrap();
    let cmi = |m: &str| report[m]["cmi_nats"].as_f64().unwrap();
    let acc = |m: &str| report[m]["accuracy"].as_f64().unwrap();

    // Fixing the admissible input by intervention freezes that model.
    assert_eq!(gap("a_only"), 0.0);
    assert!(gap("selected") <= 0.02, "selected gap {}", gap("selected"));
    assert!(gap("all") >= 0.1, "unrestricted gap {}", gap("all"));
    assert!(cmi("selected") < cmi("all"));
    assert!(acc("selected") >= acc("a_only"));

    let err = run_err(&[
        "eval",
        "--spec",
        gen.join("spec.json").to_str().unwrap(),
        "--data",
        gen.join("data.csv").to_str().unwrap(),
        "--roles",
        gen.join("roles.json").to_str().unwrap(),
        "--selection",
        tmp.path().join("missing.json").to_str().unwrap(),
        "--out",
        eval.to_str().unwrap(),
    ]);
    assert_eq!(err["kind"], "io");
}

#[test]
fn bench_writes_expected_rows_and_rejects_empty_grids() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("bench");
    run_ok(&[
        "bench",
        "--n-grid",
        "32,64",
        "--k",
        "4",
        "--seeds",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(out.join("bench.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "algorithm,n,p,seed,test_count");
    assert_eq!(lines.count(), 2 * 2 * 3);

    let err = run_err(&[
        "bench",
        "--n-grid",
        "32",
        "--seeds",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(err["kind"], "argument");

    // Conflicting sweep definitions surface through the same JSON channel.
    let err = run_err(&[
        "bench",
        "--n-grid",
        "32",
        "--k",
        "4",
        "--p-grid",
        "0.1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(err["kind"], "argument");
}

#[test]
fn dsep_answers_match_the_library() {
    let tmp = TempDir::new().unwrap();
    let gen = tmp.path().join("gen");
    gen_fixture(&gen, &[]);
    let spec = gen.join("spec.json");

    let file: fairsel_core::graph::DagFile =
        serde_json::from_str(&fs::read_to_string(&spec).unwrap()).unwrap();
    let dag = fairsel_core::graph::Dag::from_file(&file).unwrap();

    for x in ["X1", "X2", "X3", "X4"] {
        for (y, z) in [("Y", vec![]), ("S", vec!["A"])] {
            let mut args = vec![
                "dsep".to_string(),
                "--spec".to_string(),
                spec.to_str().unwrap().to_string(),
                "--x".to_string(),
                x.to_string(),
                "--y".to_string(),
                y.to_string(),
            ];
            if !z.is_empty() {
                args.push("--z".to_string());
                args.push(z.join(","));
            }
            let arg_refs: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
            let out = run_ok(&arg_refs);
            let answer: Value = serde_json::from_slice(&out.stdout).unwrap();
            let expected = dag.d_separated(&[x], &[y], &z).unwrap();
            assert_eq!(answer["d_separated"], expected, "query {x} vs {y} given {z:?}");
            assert_eq!(answer["path"].is_null(), expected);
        }
    }

    let err = run_err(&[
        "dsep",
        "--spec",
        spec.to_str().unwrap(),
        "--x",
        "NOPE",
        "--y",
        "Y",
    ]);
    assert_eq!(err["kind"], "graph");
}

#[test]
fn select_reports_missing_roles_by_name() {
    let tmp = TempDir::new().unwrap();
    let csv = tmp.path().join("d.csv");
    let mut body = String::from("A,X1,Y\n");
    for i in 0..12 {
        body.push_str(&format!("{},{},{}\n", i % 2, (i / 2) % 2, (i / 3) % 2));
    }
    fs::write(&csv, body).unwrap();
    let roles = tmp.path().join("roles.json");
    fs::write(
        &roles,
        r#"{"sensitive":[],"admissible":["A"],"target":"Y","candidates":["X1"]}"#,
    )
    .unwrap();
    let err = run_err(&[
        "select",
        "--backend",
        "fisher_z",
        "--data",
        csv.to_str().unwrap(),
        "--roles",
        roles.to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert!(
        err["error"].as_str().unwrap().contains("sensitive"),
        "error should name the missing role: {err}"
    );

    let err = run_err(&[
        "select",
        "--backend",
        "oracle",
        "--out",
        tmp.path().join("out2").to_str().unwrap(),
    ]);
    assert_eq!(err["kind"], "argument");
    assert!(err["error"].as_str().unwrap().contains("--spec"));

    let err = run_err(&[
        "select",
        "--backend",
        "oracle",
        "--spec",
        "nope.json",
        "--alpha",
        "1.5",
        "--out",
        tmp.path().join("out3").to_str().unwrap(),
    ]);
    assert_eq!(err["kind"], "argument");
    assert!(err["error"].as_str().unwrap().contains("alpha"));
}
