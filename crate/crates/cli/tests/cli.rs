//! End-to-end tests of the command-line interface: stage wiring, artifact
//! layout, exit codes, and determinism of repeated runs.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn csal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csal"))
        .args(args)
        .output()
        .expect("spawning csal")
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Small dataset and model so the full pipeline stays fast.
const TINY: &str = "\
data.height = 32
data.width = 32
data.frames_min = 3
data.frames_max = 5
data.n_trainval = 12
data.n_test = 6
data.n_pool = 10
pipeline.patch_size = 16
pipeline.stride = 16
pipeline.train.patch_size = 16
pipeline.train.epochs = 6
pipeline.agg_patch_size = 8
rounds = 1
replicate_seeds = [0]
";

fn write_tiny_config(dir: &Path) -> String {
    let path = dir.join("tiny.txt");
    fs::write(&path, TINY).unwrap();
    path.to_str().unwrap().to_string()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    entries
}

#[test]
fn gen_twice_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(tmp.path());
    for out in ["a", "b"] {
        let out = tmp.path().join(out);
        let r = csal(&[
            "--config", &cfg, "--seed", "7", "--quiet", "--out",
            out.to_str().unwrap(), "gen",
        ]);
        assert_ok(&r, "gen");
    }
    let a = dir_bytes(&tmp.path().join("a"));
    let b = dir_bytes(&tmp.path().join("b"));
    assert!(!a.is_empty());
    assert_eq!(a, b, "repeated gen runs differ");
}

#[test]
fn seed_flag_overrides_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("seeded.txt");
    fs::write(&cfg_path, format!("{TINY}seed = 1\ndata.master_seed = 1\n")).unwrap();
    let out = tmp.path().join("o");
    let r = csal(&[
        "--config", cfg_path.to_str().unwrap(), "--seed", "9", "--quiet",
        "--out", out.to_str().unwrap(), "gen",
    ]);
    assert_ok(&r, "gen");
    let resolved: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("config.resolved.json")).unwrap())
            .unwrap();
    assert_eq!(resolved["seed"], 9);
    assert_eq!(resolved["data"]["master_seed"], 9);
}

#[test]
fn select_with_zero_budget_returns_empty_selection() {
    let tmp = tempfile::tempdir().unwrap();
    let items = tmp.path().join("items.csv");
    fs::write(&items, "stack_id,value,time_s\ns1,2.0,100\ns2,1.0,50\n").unwrap();
    let out = tmp.path().join("sel");
    let r = csal(&[
        "--quiet", "--out", out.to_str().unwrap(), "select",
        "--items", items.to_str().unwrap(), "--budget-s", "0",
    ]);
    assert_ok(&r, "select");
    let sel: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("selection.json")).unwrap()).unwrap();
    assert_eq!(sel["stack_ids"].as_array().unwrap().len(), 0);
    assert_eq!(sel["total_value"], 0.0);
}

#[test]
fn unknown_subcommand_exits_with_usage_error() {
    let r = csal(&["frobnicate"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn stage_error_exits_nonzero_with_message() {
    let tmp = tempfile::tempdir().unwrap();
    let r = csal(&[
        "--quiet", "--out", tmp.path().to_str().unwrap(), "train",
        "--manifest", "/nonexistent/manifest.csv",
    ]);
    assert_eq!(r.status.code(), Some(1));
    assert!(!r.stderr.is_empty());
}

#[test]
fn simulate_records_the_mode_in_the_resolved_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(tmp.path());
    let out = tmp.path().join("sim");
    let r = csal(&[
        "--config", &cfg, "--quiet", "--out", out.to_str().unwrap(),
        "simulate", "--mode", "cost-sensitive",
    ]);
    assert_ok(&r, "simulate");
    let resolved: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("config.resolved.json")).unwrap())
            .unwrap();
    assert_eq!(resolved["mode"], "cost-sensitive");
    assert!(out.join("rounds.jsonl").exists());
    assert!(out.join("curves.csv").exists());
}

#[test]
fn full_pipeline_produces_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(tmp.path());
    let base: Vec<String> = vec!["--config".into(), cfg, "--seed".into(), "7".into(), "--quiet".into()];
    let run = |out: &Path, args: &[&str]| {
        let mut all: Vec<&str> = base.iter().map(String::as_str).collect();
        all.push("--out");
        all.push(out.to_str().unwrap());
        all.extend_from_slice(args);
        let r = csal(&all);
        assert_ok(&r, args[0]);
    };

    let data = tmp.path().join("data");
    run(&data, &["gen"]);
    let manifest = data.join("manifest.csv");
    assert!(manifest.exists());
    let manifest_s = manifest.to_str().unwrap();

    let model = tmp.path().join("model");
    run(&model, &["train", "--manifest", manifest_s, "--split", "seed_trainval"]);
    assert!(model.join("member0.alpr").exists());
    let model_s = model.to_str().unwrap();

    let preds = tmp.path().join("preds");
    run(&preds, &["predict", "--manifest", manifest_s, "--model", model_s, "--split", "seed_test"]);
    assert!(fs::read_dir(&preds).unwrap().any(|e| {
        e.unwrap().file_name().to_string_lossy().ends_with(".heat.alst")
    }));

    let unc = tmp.path().join("unc");
    run(&unc, &["uncertainty", "--manifest", manifest_s, "--model", model_s, "--split", "pool"]);
    let unc_csv = fs::read_to_string(unc.join("uncertainty.csv")).unwrap();
    assert!(unc_csv.starts_with("stack_id,value"));

    let feats = tmp.path().join("feats");
    run(&feats, &["features", "--manifest", manifest_s, "--model", model_s, "--split", "seed_trainval"]);
    let feats_csv = fs::read_to_string(feats.join("features.csv")).unwrap();
    assert!(feats_csv.starts_with("stack_id,b,m"));

    // join predicted-mask features with the manifest's labeling times to
    // build the cost-fit input
    let times: std::collections::HashMap<String, String> = fs::read_to_string(&manifest)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[3].to_string())
        })
        .collect();
    let mut cost_csv = String::from("stack_id,b,m,t_seconds\n");
    for line in feats_csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        // featureless stacks (empty predicted mask) carry no cost signal
        let (b, m): (f64, f64) = (f[1].parse().unwrap(), f[2].parse().unwrap());
        if b <= 0.0 || m <= 0.0 {
            continue;
        }
        if let Some(t) = times.get(f[0]) {
            cost_csv.push_str(&format!("{},{},{},{}\n", f[0], f[1], f[2], t));
        }
    }
    let cost_input = tmp.path().join("cost.csv");
    fs::write(&cost_input, cost_csv).unwrap();
    let costs = tmp.path().join("costs");
    run(&costs, &["fit-cost", "--input", cost_input.to_str().unwrap()]);
    let params: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(costs.join("cost_params.json")).unwrap()).unwrap();
    assert!(params["n"].as_u64().unwrap() >= 3);

    // selection items: committee disagreement as value, a nominal uniform
    // predicted time (the exact times are exercised elsewhere)
    let mut items = String::from("stack_id,value,time_s\n");
    for line in unc_csv.lines().skip(1) {
        items.push_str(&format!("{line},100\n"));
    }
    let items_path = tmp.path().join("items.csv");
    fs::write(&items_path, items).unwrap();
    let sel = tmp.path().join("sel");
    run(&sel, &["select", "--items", items_path.to_str().unwrap(), "--budget-s", "250"]);
    let sel_json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(sel.join("selection.json")).unwrap()).unwrap();
    assert_eq!(sel_json["stack_ids"].as_array().unwrap().len(), 2);

    let eval = tmp.path().join("eval");
    run(&eval, &["eval", "--manifest", manifest_s, "--pred", preds.to_str().unwrap(), "--split", "seed_test"]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(eval.join("eval.json")).unwrap()).unwrap();
    for key in ["pixel", "region", "frame", "stack"] {
        let v = report[key]["ap"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{key} = {v}");
    }
}
