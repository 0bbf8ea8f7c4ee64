use std::path::Path;

use plane2depth::synth::read_dataset;
use plane2depth_toolkit::checkpoint;
use plane2depth_toolkit::cli::main_with_args;
use plane2depth_toolkit::config::RunConfig;
use plane2depth_toolkit::eval::{evaluate_samples, predict_depth, EvalOptions};
use plane2depth_toolkit::infer::OUTPUT_FILES;
use plane2depth_toolkit::train::{read_log, train, TrainingSet, LOG_FILE};

fn run(args: &[&str]) -> i32 {
    let mut full = vec!["plane2depth"];
    full.extend_from_slice(args);
    main_with_args(full)
}

fn tiny_config(dataset: &Path, out: &Path, iterations: u64) -> RunConfig {
    let mut c = RunConfig {
        dataset: dataset.to_path_buf(),
        output_dir: out.to_path_buf(),
        width: 32,
        height: 32,
        batch_size: 2,
        iterations,
        seed: Some(3),
        checkpoint_every: 0,
        ..RunConfig::default()
    };
    c.model.num_queries = 4;
    c.model.channels = 16;
    c.model.query_dim = 16;
    c.model.backbone_width = 16;
    c.optimizer.learning_rate = 1e-3;
    c
}

fn write_config(path: &Path, c: &RunConfig) {
    std::fs::write(path, serde_json::to_string_pretty(c).unwrap()).unwrap();
}

fn gen(dir: &Path, count: usize, seed: u64) {
    let code = run(&[
        "gen-data",
        "--out",
        dir.to_str().unwrap(),
        "--count",
        &count.to_string(),
        "--seed",
        &seed.to_string(),
        "--size",
        "32x32",
    ]);
    assert_eq!(code, 0);
}

#[test]
fn end_to_end_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run_dir = tmp.path().join("run");
    gen(&data, 4, 10);
    assert_eq!(read_dataset(&data).unwrap().len(), 4);

    let cfg_path = tmp.path().join("cfg.json");
    write_config(&cfg_path, &tiny_config(&data, &run_dir, 3));
    assert_eq!(run(&["train", "--config", cfg_path.to_str().unwrap(), "--quiet"]), 0);
    let log = read_log(&run_dir.join(LOG_FILE)).unwrap();
    assert_eq!(log.len(), 3);
    assert!(log.iter().all(|e| e.loss.is_finite()));

    let ckpt = run_dir.join("checkpoint");
    let report = tmp.path().join("report");
    let code = run(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--dataset",
        data.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
        "--config",
        cfg_path.to_str().unwrap(),
        "--export-maps",
    ]);
    assert_eq!(code, 0);
    for f in ["per_image.json", "aggregate.json", "table.txt"] {
        assert!(report.join(f).exists(), "{f}");
    }
    assert!(report.join("maps").read_dir().unwrap().count() >= 8);

    // Oracle planes need no checkpoint.
    let oracle = tmp.path().join("oracle");
    let code = run(&[
        "eval",
        "--oracle-gt-planes",
        "--dataset",
        data.to_str().unwrap(),
        "--out",
        oracle.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);

    let sample = data.join("sample_00000010");
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(sample.join("meta.json")).unwrap()).unwrap();
    let k_path = tmp.path().join("k.json");
    std::fs::write(&k_path, meta["intrinsics"].to_string()).unwrap();
    let infer_out = tmp.path().join("infer");
    let code = run(&[
        "infer",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--image",
        sample.join("rgb.png").to_str().unwrap(),
        "--intrinsics",
        k_path.to_str().unwrap(),
        "--out",
        infer_out.to_str().unwrap(),
        "--gt-depth",
        sample.join("depth.pfm").to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    for f in OUTPUT_FILES.iter().chain(["error.png"].iter()) {
        assert!(infer_out.join(f).exists(), "{f}");
    }
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("d");
    assert_eq!(run(&["gen-data", "--out", out.to_str().unwrap(), "--count", "0"]), 2);
    assert_eq!(run(&["train", "--no-such-flag"]), 2);
    assert_eq!(run(&["gen-data", "--out", out.to_str().unwrap(), "--count", "1", "--size", "64"]), 2);
    assert_eq!(run(&["ablate", "--matrix", "bogus", "--test-dataset", "x"]), 2);
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"batch_size": 0}"#).unwrap();
    assert_eq!(run(&["train", "--config", bad.to_str().unwrap()]), 2);
    // Missing dataset is a runtime failure, not a usage error.
    let cfg = tmp.path().join("cfg.json");
    write_config(&cfg, &tiny_config(&tmp.path().join("missing"), &tmp.path().join("r"), 1));
    assert_eq!(run(&["train", "--config", cfg.to_str().unwrap()]), 1);
}

#[test]
fn eval_rejects_mismatched_config() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen(&data, 2, 0);
    let cfg = tiny_config(&data, &tmp.path().join("run"), 1);
    let set = TrainingSet::load(&data, 32, 32).unwrap();
    train(&cfg, &set, None, |_| {}).unwrap();
    let mut other = cfg.clone();
    other.model.num_queries = 8;
    let other_path = tmp.path().join("other.json");
    write_config(&other_path, &other);
    let code = run(&[
        "eval",
        "--checkpoint",
        tmp.path().join("run/checkpoint").to_str().unwrap(),
        "--dataset",
        data.to_str().unwrap(),
        "--out",
        tmp.path().join("rep").to_str().unwrap(),
        "--config",
        other_path.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen(&data, 3, 5);
    let cfg = tiny_config(&data, &tmp.path().join("run"), 2);
    let set = TrainingSet::load(&data, 32, 32).unwrap();
    let outcome = train(&cfg, &set, None, |_| {}).unwrap();
    let loaded = checkpoint::load(&outcome.checkpoint_dir).unwrap().network().unwrap();
    let samples = read_dataset(&data).unwrap();
    let opts = EvalOptions::default();
    let a = evaluate_samples(&samples, &opts, |s| predict_depth(&outcome.net, s)).unwrap();
    let b = evaluate_samples(&samples, &opts, |s| predict_depth(&loaded, s)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn training_is_deterministic_and_resume_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen(&data, 4, 20);
    let set = TrainingSet::load(&data, 32, 32).unwrap();

    let straight = train(&tiny_config(&data, &tmp.path().join("a"), 4), &set, None, |_| {}).unwrap();
    let again = train(&tiny_config(&data, &tmp.path().join("b"), 4), &set, None, |_| {}).unwrap();
    assert_eq!(straight.net.params, again.net.params);
    assert_eq!(straight.log.iter().map(|e| e.loss).collect::<Vec<_>>(), again.log.iter().map(|e| e.loss).collect::<Vec<_>>());

    let split_dir = tmp.path().join("c");
    let first = train(&tiny_config(&data, &split_dir, 2), &set, None, |_| {}).unwrap();
    assert_eq!(first.final_iteration, 2);
    let resumed = train(&tiny_config(&data, &split_dir, 4), &set, Some(&first.checkpoint_dir), |_| {}).unwrap();
    assert_eq!(resumed.start_iteration, 2);
    assert_eq!(resumed.net.params, straight.net.params);
    let log = read_log(&split_dir.join(LOG_FILE)).unwrap();
    assert_eq!(log.iter().map(|e| e.iteration).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
    assert_eq!(
        log.iter().map(|e| e.loss).collect::<Vec<_>>(),
        straight.log.iter().map(|e| e.loss).collect::<Vec<_>>()
    );

    let mut changed = tiny_config(&data, &split_dir, 6);
    changed.model.channels = 32;
    assert!(train(&changed, &set, Some(&first.checkpoint_dir), |_| {}).is_err());
}

#[test]
fn gen_data_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    gen(&a, 3, 42);
    gen(&b, 3, 42);
    for name in ["rgb.png", "depth.pfm", "normal_x.pfm", "distance.pfm", "plane_id.png", "meta.json"] {
        let pa = std::fs::read(a.join("sample_00000042").join(name)).unwrap();
        let pb = std::fs::read(b.join("sample_00000042").join(name)).unwrap();
        assert_eq!(pa, pb, "{name}");
    }
}
