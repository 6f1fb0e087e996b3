use std::path::Path;
use std::process::{Command, Output};

use nnk_core::{classify, FeatureMatrix};
use nnkm::dataio::{load_csv_auto, make_synthetic, SynthSpec};
use nnkm::format::{load_model, Model};

fn nnkm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nnkm")).args(args).current_dir(cwd).output().unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = nnkm(args, cwd);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#')).map(String::from).collect()
}

#[test]
fn synth_defaults_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--out", "a", "--seed", "5"], d);
    ok(&["synth", "--out", "b", "--seed", "5"], d);
    let train = load_csv_auto(&d.join("a/train.csv")).unwrap();
    let test = load_csv_auto(&d.join("a/test.csv")).unwrap();
    assert_eq!((train.len(), test.len()), (600, 200));
    for c in 0..4 {
        assert_eq!(train.labels().unwrap().iter().filter(|&&l| l == c).count(), 150);
    }
    for f in ["train.csv", "test.csv"] {
        assert_eq!(std::fs::read(d.join("a").join(f)).unwrap(), std::fs::read(d.join("b").join(f)).unwrap());
    }
    let spec = SynthSpec { seed: 5, ..Default::default() };
    assert_eq!(make_synthetic(&spec).unwrap().0, train);
    let first = std::fs::read_to_string(d.join("a/train.csv")).unwrap();
    assert!(first.starts_with("# {") && first.contains("\"seed\":5"));
}

#[test]
fn noiseless_synth_lies_on_arcs() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--noise", "0", "--out", "s"], dir.path());
    let train = load_csv_auto(&dir.path().join("s/train.csv")).unwrap();
    let spec = SynthSpec { noise_sigma: 0.0, ..Default::default() };
    for i in 0..train.len() {
        let p = train.sample(i);
        let c = train.labels().unwrap()[i] as usize;
        assert!(nnkm::dataio::distance_to_arc(&spec, c, [p[0], p[1]]) < 1e-12);
    }
}

#[test]
fn fit_classify_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--out", "data"], d);
    let log = ok(&["--threads", "1", "fit", "--data", "data/train.csv", "--atoms", "10", "--sparsity", "5", "--per-class", "--model", "m1.bin"], d);
    assert!(log.contains("objective"));
    ok(&["--threads", "1", "fit", "--data", "data/train.csv", "--atoms", "10", "--sparsity", "5", "--per-class", "--model", "m2.bin"], d);
    assert_eq!(std::fs::read(d.join("m1.bin")).unwrap(), std::fs::read(d.join("m2.bin")).unwrap());

    let out = ok(&["--json", "classify", "--model", "m1.bin", "--data", "data/test.csv", "--labels", "--out", "pred.csv"], d);
    let summary: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    let acc = summary["accuracy"].as_f64().unwrap();
    assert!((0.95..=1.0).contains(&acc), "accuracy {acc}");

    // in-memory classification of the reloaded model writes the same predictions
    let bundle = load_model(&d.join("m1.bin")).unwrap();
    let Model::Classifier(model) = bundle.model else { panic!() };
    let test = load_csv_auto(&d.join("data/test.csv")).unwrap();
    let mem = classify(&test, &model, &model.coding()).unwrap();
    let lines = rows(&d.join("pred.csv"));
    assert_eq!(lines[0], "sample_index,predicted_label,e_0,e_1,e_2,e_3");
    for (q, line) in lines[1..].iter().enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[1].parse::<u32>().unwrap(), mem.labels[q]);
        for c in 0..4 {
            assert_eq!(cells[2 + c].parse::<f64>().unwrap().to_bits(), mem.errors[(q, c)].to_bits());
        }
    }
    let acc_mem = nnk_core::accuracy(&mem.labels, test.labels().unwrap()).unwrap();
    assert_eq!(acc, acc_mem);

    ok(&["code", "--model", "m1.bin", "--data", "data/test.csv", "--class", "0", "--out", "codes.csv"], d);
    let codes = rows(&d.join("codes.csv"));
    assert_eq!(codes[0], "sample,atom,weight");
    assert!(codes.len() > 200);
    ok(&["code", "--model", "m1.bin", "--data", "data/test.csv", "--class", "0", "--dense", "--out", "dense.csv"], d);
    assert_eq!(rows(&d.join("dense.csv")).len(), 201);
    let e = nnkm(&["code", "--model", "m1.bin", "--data", "data/test.csv", "--out", "x.csv"], d);
    assert_eq!(e.status.code(), Some(2));
}

#[test]
fn kmeans_mode_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--out", "data", "--classes", "2", "--train", "100", "--test", "20"], d);
    ok(&["--kernel", "linear", "fit", "--data", "data/train.csv", "--atoms", "3", "--sparsity", "1", "--iters", "50", "--model", "km.bin"], d);
    ok(&["export-atoms", "--model", "km.bin", "--out", "atoms.csv"], d);
    let atoms = load_csv_auto(&d.join("atoms.csv")).unwrap();
    assert_eq!((atoms.dim(), atoms.len()), (2, 3));
    // each exported atom is the mean of the samples assigned to it
    let bundle = load_model(&d.join("km.bin")).unwrap();
    let Model::Dictionary(dict) = bundle.model else { panic!() };
    let train = load_csv_auto(&d.join("data/train.csv")).unwrap();
    let cfg = nnk_core::CodingConfig::new(1);
    let assign: Vec<usize> = (0..train.len()).map(|i| nnk_core::code_one(train.sample(i), &dict, &cfg).unwrap().entries()[0].0).collect();
    for m in 0..3 {
        let members: Vec<usize> = (0..train.len()).filter(|&i| assign[i] == m).collect();
        for t in 0..2 {
            let mean = members.iter().map(|&i| train.sample(i)[t]).sum::<f64>() / members.len() as f64;
            assert!((atoms.sample(m)[t] - mean).abs() < 1e-10);
        }
    }
    // bit-exact against the library export
    let lib = nnk_core::export_atoms(&dict);
    for m in 0..3 {
        for t in 0..2 {
            assert_eq!(atoms.sample(m)[t].to_bits(), lib[(t, m)].to_bits());
        }
    }
}

#[test]
fn single_class_model_predicts_that_class() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("one.csv"), "x0,x1,label\n0,0,4\n1,0,4\n0,1,4\n1,1,4\n").unwrap();
    std::fs::write(d.join("q.csv"), "x0,x1\n5,5\n-1,0.5\n").unwrap();
    ok(&["fit", "--data", "one.csv", "--atoms", "2", "--sparsity", "2", "--per-class", "--model", "m.bin"], d);
    ok(&["classify", "--model", "m.bin", "--data", "q.csv", "--out", "p.csv"], d);
    let lines = rows(&d.join("p.csv"));
    assert!(lines[1..].iter().all(|l| l.split(',').nth(1) == Some("4")));
}

#[test]
fn standardized_model_applies_training_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--out", "data", "--classes", "2", "--train", "80", "--test", "20"], d);
    ok(&["fit", "--data", "data/train.csv", "--atoms", "5", "--per-class", "--standardize", "--model", "m.bin"], d);
    let bundle = load_model(&d.join("m.bin")).unwrap();
    let st = bundle.standardizer.clone().expect("standardizer stored");
    let out = ok(&["--json", "classify", "--model", "m.bin", "--data", "data/test.csv", "--labels", "--out", "p.csv"], d);
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    let Model::Classifier(model) = bundle.model else { panic!() };
    let test: FeatureMatrix = st.apply(&load_csv_auto(&d.join("data/test.csv")).unwrap()).unwrap();
    let mem = classify(&test, &model, &model.coding()).unwrap();
    let acc = nnk_core::accuracy(&mem.labels, test.labels().unwrap()).unwrap();
    assert_eq!(v["accuracy"].as_f64().unwrap(), acc);
}

#[test]
fn bench_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--out", "data", "--classes", "2", "--train", "60", "--test", "20"], d);
    ok(&["--seed", "3", "bench", "--data", "data/train.csv", "--test", "data/test.csv", "--atoms-grid", "4",
         "--sparsity", "3", "--iters", "3", "--repeats", "2", "--out", "b"], d);
    let csv = rows(&d.join("b/bench.csv"));
    assert_eq!(csv[0], "method,atoms,repeat,seed,accuracy,train_s,test_s,coding_s,update_s");
    assert_eq!(csv.len(), 5);
    let seeds: Vec<&str> = csv[1..].iter().map(|l| l.split(',').nth(3).unwrap()).collect();
    assert_eq!(seeds, vec!["3", "3", "4", "4"]);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("b/summary.json")).unwrap()).unwrap();
    let rows = summary["summary"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["method"], "nnk");
    assert!(rows[0]["accuracy"]["mean"].as_f64().is_some() && rows[0]["accuracy"]["std"].as_f64().is_some());
    assert_eq!(summary["config"]["bench"]["repeats"], 2);

    ok(&["bench", "--data", "data/train.csv", "--atoms-grid", "4", "--sparsity", "3", "--iters", "2",
         "--repeats", "1", "--no-baseline", "--out", "c"], d);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("c/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["summary"].as_array().unwrap().len(), 1);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(nnkm(&["fit", "--data", "x.csv"], d).status.code(), Some(2));
    assert_eq!(nnkm(&["--kernel", "rbf", "synth", "--out", "s"], d).status.code(), Some(2));
    assert_eq!(nnkm(&["fit", "--data", "missing.csv", "--atoms", "2", "--model", "m"], d).status.code(), Some(3));
    std::fs::write(d.join("bad.csv"), "x0,x1\n1,2\n3,nan\n").unwrap();
    let out = nnkm(&["fit", "--data", "bad.csv", "--atoms", "1", "--model", "m"], d);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    std::fs::write(d.join("ok.csv"), "x0,x1\n1,2\n3,4\n").unwrap();
    assert_eq!(nnkm(&["fit", "--data", "ok.csv", "--atoms", "5", "--model", "m"], d).status.code(), Some(3));
    assert_eq!(nnkm(&["bench", "--out", "b"], d).status.code(), Some(2));
    assert_eq!(nnkm(&["--help"], d).status.code(), Some(0));
}
