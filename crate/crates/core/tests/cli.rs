use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use graphgp::cli::{Manifest, MANIFEST_NAME};
use graphgp::datasets::{self, Molecule, SyntheticConfig};
use graphgp::experiment::ExperimentReport;
use graphgp::kernels::{KernelSpec, LaplacianVariant};

fn graphgp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphgp")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = graphgp(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn heat() -> KernelSpec {
    KernelSpec::heat(1.4).with_laplacian(LaplacianVariant::Plain)
}

fn write_molecules(dir: &Path) -> PathBuf {
    let molecules = datasets::synthetic_molecules(&SyntheticConfig {
        count: 30,
        type_slots: vec![("C".into(), 3), ("O".into(), 2)],
        extra_bond_probability: 0.2,
        kernel: heat(),
        noise: 0.01,
        seed: 4,
    })
    .unwrap();
    let file = dir.join("molecules.jsonl");
    std::fs::write(&file, datasets::molecules_to_jsonl(&molecules)).unwrap();
    file
}

const LAYOUT_A: &str = r#"{"strategy":"graph_a","type_slots":[["C",3],["O",2]]}"#;

#[test]
fn exit_codes() {
    assert_eq!(graphgp(&["table", "dump", "--d", "4"]).status.code(), Some(0));
    assert_eq!(graphgp(&["table", "dump", "--d", "0"]).status.code(), Some(2));
    assert_eq!(graphgp(&["kernel", "frobnicate"]).status.code(), Some(2));
    let bad_space = graphgp(&["quotient", "build", "--space", r#"{"kind":"Q","n":4}"#, "--blocks", "0,1"]);
    assert_eq!(bad_space.status.code(), Some(2));
    let missing = graphgp(&["predict", "--model", "/nonexistent/m.json", "--graphs", "/nonexistent/g.txt"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/nonexistent/m.json"));
    assert_eq!(graphgp(&["--help"]).status.code(), Some(0));
}

#[test]
fn table_and_kernel_commands() {
    let table = ok(&["table", "dump", "--d", "2"]);
    assert_eq!(table.lines().next(), Some("j,m0,m1,m2"));
    let k: f64 = ok(&["kernel", "eval", "--spec", r#"{"family":"heat","kappa":1.0,"laplacian":"plain"}"#, "--d", "6", "--m", "3"])
        .trim()
        .parse()
        .unwrap();
    assert!((k - 0.5f64.tanh().powi(3)).abs() < 1e-12);
    let profile = ok(&["kernel", "profile", "--spec", r#"{"family":"matern","nu_base":2.5,"kappa":1.0}"#, "--d", "36"]);
    assert_eq!(profile.lines().count(), 38);
    assert!(profile.starts_with("m,k,component_0,"));
}

#[test]
fn profile_svg_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("plot.svg");
    let csv = dir.path().join("profile.csv");
    ok(&[
        "kernel", "profile", "--spec", r#"{"family":"heat","kappa":1.0}"#, "--d", "10", "--svg", path(&svg), "--out",
        path(&csv),
    ]);
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
    let manifest: Manifest =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(format!("profile.csv.{MANIFEST_NAME}"))).unwrap())
            .unwrap();
    assert_eq!(manifest.outputs.len(), 2);
    assert_eq!(manifest.args[..2], ["kernel".to_string(), "profile".to_string()]);
}

#[test]
fn quotient_and_invariant_commands() {
    let q: serde_json::Value =
        serde_json::from_str(&ok(&["quotient", "build", "--space", r#"{"kind":"U","n":4}"#, "--blocks", "0,1,2|3"])).unwrap();
    assert_eq!(q["classes"].as_array().unwrap().len(), 20);
    let dir = tempfile::tempdir().unwrap();
    let graphs = dir.path().join("graphs.txt");
    std::fs::write(&graphs, "100000\n000001\n{\"kind\":\"U\",\"n\":4,\"edges\":[[2,3]]}\n").unwrap();
    let spec = r#"{"family":"matern","nu":2.5,"kappa":1.0}"#;
    let space = r#"{"kind":"U","n":4}"#;
    let exact = ok(&["kernel", "invariant", "--spec", spec, "--space", space, "--blocks", "0,1,2,3", "--graphs", path(&graphs)]);
    let rows: Vec<Vec<f64>> = exact
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    // all three graphs are single edges, hence isomorphic
    assert!(rows.iter().flatten().all(|v| (v - rows[0][0]).abs() < 1e-12));
    let mc = |seed: &str| {
        ok(&[
            "kernel", "invariant", "--spec", spec, "--space", space, "--blocks", "0,1,2,3", "--mode", "mc", "--samples", "5",
            "--mc-seed", seed, "--x", "110000", "--y", "000011",
        ])
    };
    assert_eq!(mc("1"), mc("1"));
}

#[test]
fn encode_fit_predict_sample_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let molecules = write_molecules(dir.path());
    let codes = dir.path().join("codes.jsonl");
    ok(&["data", "encode", "--layout", LAYOUT_A, "--in", path(&molecules), "--out", path(&codes)]);
    let first: serde_json::Value =
        serde_json::from_str(std::fs::read_to_string(&codes).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(first["n"], 5);
    assert_eq!(first["code"].as_str().unwrap().len(), 10);

    let split: serde_json::Value = serde_json::from_str(&ok(&["--seed", "9", "data", "split", "--in", path(&codes)])).unwrap();
    assert_eq!(split["train"].as_array().unwrap().len(), 24);
    assert_eq!(split["test"].as_array().unwrap().len(), 6);

    let model = dir.path().join("model.json");
    let kernel = format!(
        r#"{{"type":"invariant","spec":{},"blocks":"0,1,2|3,4","averaging":{{"mode":"exact"}}}}"#,
        serde_json::to_string(&heat()).unwrap()
    );
    let fit = graphgp(&["fit", "--dataset", path(&codes), "--kernel", &kernel, "--optimize", "--budget", "30", "--out", path(&model)]);
    assert!(fit.status.success(), "{}", String::from_utf8_lossy(&fit.stderr));
    assert!(String::from_utf8_lossy(&fit.stderr).contains("log marginal likelihood"));

    let predictions = ok(&["predict", "--model", path(&model), "--graphs", path(&codes)]);
    assert_eq!(predictions.lines().count(), 31);
    let posterior = ok(&["--seed", "2", "sample", "--model", path(&model), "--graphs", path(&codes), "--count", "3"]);
    assert_eq!(posterior.lines().count(), 4);
    assert_eq!(posterior, ok(&["--seed", "2", "sample", "--model", path(&model), "--graphs", path(&codes), "--count", "3"]));

    // molecules fitted directly with a layout give the same model
    let direct = dir.path().join("direct.json");
    ok(&[
        "fit", "--dataset", path(&molecules), "--layout", LAYOUT_A, "--kernel", &kernel, "--optimize", "--budget", "30",
        "--out", path(&direct),
    ]);
    assert_eq!(std::fs::read_to_string(&model).unwrap(), std::fs::read_to_string(&direct).unwrap());
}

#[test]
fn prior_sampling_methods() {
    let space = r#"{"kind":"U","n":3}"#;
    let spec = r#"{"family":"heat","kappa":1.0}"#;
    for method in ["exact", "walsh", "random"] {
        let out = ok(&["sample", "--kernel", spec, "--space", space, "--count", "4", "--method", method]);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines.len(), 5, "{method}");
        let mut header: Vec<&str> = lines[0].split(',').collect();
        header.sort();
        assert_eq!(header, ["000", "001", "010", "011", "100", "101", "110", "111"]);
        assert!(lines[1..].iter().all(|l| l.split(',').all(|v| v.parse::<f64>().is_ok())));
    }
}

#[test]
fn encoding_errors_name_the_molecule() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.jsonl");
    let m = Molecule {
        id: "tetracarbon".into(),
        atoms: vec!["C".into(); 4],
        bonds: vec![[0, 1]],
        target: 0.0,
    };
    std::fs::write(&file, datasets::molecules_to_jsonl(&[m])).unwrap();
    let out = graphgp(&["data", "encode", "--layout", LAYOUT_A, "--in", path(&file)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("tetracarbon") && err.contains("'C'"), "{err}");
}

/// Small hand-written molecules in the dataset format, hydrogens included.
const TOY_DATASET: &str = r#"{"id":"methanol","atoms":["C","O","H","H","H","H"],"bonds":[[0,1],[0,2],[0,3],[0,4],[1,5]],"target":-5.1}
{"id":"ethanol","atoms":["C","C","O"],"bonds":[[0,1],[1,2]],"target":-5.0}
{"id":"dimethyl ether","atoms":["C","O","C"],"bonds":[[0,1],[1,2]],"target":-1.9}
{"id":"chloromethane","atoms":["C","Cl"],"bonds":[[0,1]],"target":-0.6}
{"id":"dichloromethane","atoms":["C","Cl","Cl"],"bonds":[[0,1],[0,2]],"target":-1.4}
{"id":"methylamine","atoms":["C","N"],"bonds":[[0,1]],"target":-4.6}
{"id":"acetonitrile","atoms":["C","C","N"],"bonds":[[0,1],[1,2],[1,2],[1,2]],"target":-3.9}
{"id":"propane","atoms":["C","C","C"],"bonds":[[0,1],[1,2]],"target":2.0}
{"id":"propanol","atoms":["C","C","C","O"],"bonds":[[0,1],[1,2],[2,3]],"target":-4.8}
{"id":"ethylamine","atoms":["C","C","N"],"bonds":[[0,1],[1,2]],"target":-4.5}
{"id":"chloroethane","atoms":["C","C","Cl"],"bonds":[[0,1],[1,2]],"target":-0.6}
{"id":"urea","atoms":["C","O","N","N"],"bonds":[[0,1],[0,2],[0,3]],"target":-10.0}
{"id":"benzene","atoms":["C","C","C","C","C","C"],"bonds":[[0,1],[1,2],[2,3],[3,4],[4,5],[5,0]],"target":-0.9}
{"id":"acetic acid","atoms":["C","C","O","O"],"bonds":[[0,1],[1,2],[1,3]],"target":-6.7}
{"id":"glycine-like","atoms":["N","C","C","O","O"],"bonds":[[0,1],[1,2],[2,3],[2,4]],"target":-9.0}
{"id":"trichloromethane","atoms":["C","Cl","Cl","Cl"],"bonds":[[0,1],[0,2],[0,3]],"target":-1.1}
"#;

fn experiment_config(dir: &Path) -> PathBuf {
    std::fs::write(dir.join("toy.jsonl"), TOY_DATASET).unwrap();
    let config = serde_json::json!({
        "seed": 5,
        "dataset": "toy.jsonl",
        "type_slots": [["C", 3], ["N", 3], ["O", 3], ["Cl", 3]],
        "splits": 3,
        "kernels": [
            {"name": "Heat", "spec": {"family": "heat", "kappa": 1.0}},
            {"name": "Matern", "spec": {"family": "matern", "nu_base": 2.5, "kappa": 1.0}}
        ],
        "budget": 20
    });
    let file = dir.join("experiment.json");
    std::fs::write(&file, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    file
}

#[test]
fn experiment_reports_every_row() {
    let dir = tempfile::tempdir().unwrap();
    let config = experiment_config(dir.path());
    let out = dir.path().join("out");
    ok(&["--out-dir", path(&out), "experiment", "--config", path(&config)]);
    let report: ExperimentReport = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.data.molecules, 16);
    assert_eq!(report.data.retained, 15);
    assert_eq!(report.data.group_order, 1296.0);
    let names: Vec<&str> = report.rows.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(
        names,
        [
            "Naive",
            "Linear",
            "Graph-B / Heat",
            "Graph-B / Matern",
            "Graph-A / Heat",
            "Graph-A / Matern",
            "Projected / Heat",
            "Projected / Matern"
        ]
    );
    for row in &report.rows {
        assert_eq!(row.splits.len(), 3);
        assert!(row.rmse_mean.is_finite() && row.rmse_std.is_finite());
        assert!(row.log_lik_mean.is_finite() && row.log_lik_std.is_finite());
    }
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(out.join(MANIFEST_NAME)).unwrap()).unwrap();
    assert_eq!(manifest.inputs.len(), 2);
}

#[test]
fn manifest_replay_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = experiment_config(dir.path());
    let first = dir.path().join("first");
    ok(&["--out-dir", path(&first), "--threads", "3", "experiment", "--config", path(&config)]);
    let second = dir.path().join("second");
    let report = ok(&["--out-dir", path(&second), "replay", "--manifest", path(&first.join(MANIFEST_NAME))]);
    assert!(report.contains("identical"), "{report}");
    assert_eq!(
        std::fs::read(first.join("report.json")).unwrap(),
        std::fs::read(second.join("report.json")).unwrap()
    );

    let sampled = dir.path().join("sampled");
    ok(&[
        "--out-dir", path(&sampled), "--seed", "77", "sample", "--kernel", r#"{"family":"heat","kappa":0.7}"#, "--space",
        r#"{"kind":"D","n":3}"#, "--count", "5",
    ]);
    let again = dir.path().join("again");
    ok(&["--out-dir", path(&again), "replay", "--manifest", path(&sampled.join(MANIFEST_NAME))]);
    assert_eq!(
        std::fs::read(sampled.join("samples.csv")).unwrap(),
        std::fs::read(again.join("samples.csv")).unwrap()
    );
}

#[test]
fn replay_detects_changed_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    ok(&["--out-dir", path(&first), "table", "dump", "--d", "5"]);
    let manifest_path = first.join(MANIFEST_NAME);
    let mut manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(&manifest_path).unwrap()).unwrap();
    manifest.outputs[0].fnv1a = "0000000000000000".into();
    std::fs::write(&manifest_path, serde_json::to_string(&manifest).unwrap()).unwrap();
    let out = graphgp(&["--out-dir", path(&dir.path().join("second")), "replay", "--manifest", path(&manifest_path)]);
    assert_eq!(out.status.code(), Some(1));
}
