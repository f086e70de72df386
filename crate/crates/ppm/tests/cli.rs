use std::path::Path;
use std::process::{Command, Output};

use ppm::cli::{parse_families, parse_label, CliError};
use ppm::io::write_csv;
use ppm_core::declare::Family;
use ppm_core::dtree::{ClassWeight, Criterion, Hyperparameters, MinSplit};
use ppm_core::encoder::TopH;
use ppm_core::log::LabelKind;
use ppm_core::sample::{synthetic_log, SyntheticConfig};
use serde_json::{json, Value};

fn ppm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppm")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_log(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("synthetic.csv");
    let log = synthetic_log(&SyntheticConfig { traces: 160, ..Default::default() });
    write_csv(&log, std::fs::File::create(&path).unwrap()).unwrap();
    path
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let grid: Vec<Hyperparameters> = [Some(4), None]
        .into_iter()
        .map(|max_depth| Hyperparameters {
            criterion: Criterion::Gini,
            max_depth,
            class_weight: ClassWeight::None,
            min_samples_split: MinSplit::Count(2),
            min_samples_leaf: 1,
            top_h: TopH::Half,
        })
        .collect();
    let path = dir.join("config.json");
    let cfg = json!({ "label": "attribute:label", "families": "E,C", "folds": 3, "grid": grid });
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn train_evaluate_recommend() {
    let dir = tempfile::tempdir().unwrap();
    let log = write_log(dir.path());
    let cfg = write_config(dir.path());
    let model = dir.path().join("model.json");
    let export = dir.path().join("export");

    let out = ppm(&[
        "--config",
        s(&cfg),
        "train",
        "--log",
        s(&log),
        "--out",
        s(&model),
        "--export-dir",
        s(&export),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let bundle: Value = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(bundle["families"], json!(["E", "C"]));
    assert_eq!(bundle["metadata"]["dataset"], "synthetic");
    for f in ["universe.json", "tree_universe.json", "train_encoded.csv", "train_encoded.bin"] {
        assert!(export.join(f).is_file(), "{f}");
    }

    let report = dir.path().join("report");
    let out =
        ppm(&["evaluate", "--model", s(&model), "--log", s(&log), "--report", s(&report), "--sequential"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["metrics.json", "cumulative_fscore.csv", "timings.csv", "summary.txt"] {
        assert!(report.join(f).is_file(), "{f}");
    }
    let metrics: Value =
        serde_json::from_str(&std::fs::read_to_string(report.join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["n_prefixes"].as_u64().unwrap() > 0);

    let out = ppm(&["recommend", "--model", s(&model), "--prefix", "ER Registration,ER Triage"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let result: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(result["recommendations"].is_array());
    assert!(result["chosen_path"]["steps"].is_array());
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let log = write_log(dir.path());
    let model = dir.path().join("model.json");
    let cases: Vec<Vec<&str>> = vec![
        vec!["train", "--log", s(&log), "--out", s(&model), "--label", "colour:red"],
        vec!["train", "--log", s(&log), "--out", s(&model)],
        vec![
            "train",
            "--log",
            s(&log),
            "--out",
            s(&model),
            "--label",
            "attribute:label",
            "--families",
            "E,XX",
        ],
        vec!["train", "--log", "missing.csv", "--out", s(&model), "--label", "attribute:label"],
        vec!["recommend", "--model", s(&model), "--prefix", "a"],
        vec!["evaluate", "--model", s(&model)],
        vec!["frobnicate"],
    ];
    for args in cases {
        let out = ppm(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let bad_cfg = dir.path().join("bad.json");
    std::fs::write(&bad_cfg, r#"{"labell": "x"}"#).unwrap();
    assert_eq!(ppm(&["--config", s(&bad_cfg), "recommend"]).status.code(), Some(2));
}

#[test]
fn label_forms() {
    let a = parse_label("attribute:label=deviant").unwrap();
    assert_eq!(a.positive_value.as_deref(), Some("deviant"));
    assert_eq!(parse_label("ltlf_violation:G(a -> F b)").unwrap().kind, LabelKind::LtlfViolation);
    assert_eq!(parse_label("ltlf_satisfaction:F x").unwrap().kind, LabelKind::LtlfSatisfaction);
    let inline = serde_json::to_string(&a).unwrap();
    assert_eq!(parse_label(&inline).unwrap(), a);
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("label.json");
    std::fs::write(&f, &inline).unwrap();
    assert_eq!(parse_label(s(&f)).unwrap(), a);
    assert!(matches!(parse_label("ltlf_violation:G(a ->"), Err(CliError::Validation(_))));
    assert!(matches!(parse_label("nonsense"), Err(CliError::Validation(_))));
}

#[test]
fn family_forms() {
    assert_eq!(parse_families("A").unwrap().len(), 4);
    assert_eq!(parse_families("e|pr").unwrap().into_iter().collect::<Vec<_>>(), vec![Family::E, Family::PR]);
    assert!(parse_families(" , ").is_err());
}
