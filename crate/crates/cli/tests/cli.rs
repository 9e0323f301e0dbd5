use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const TINY: &[&str] = &[
    "--threads=1",
    "--set=synth.width=16",
    "--set=synth.height=16",
    "--set=synth.frames=4",
    "--set=synth.quadrature_steps=256",
    "--set=planes.resolutions=[4,8]",
    "--set=render.steps=16",
    "--set=render.eval_steps=16",
    "--set=grid.dims=[8,8,8,2]",
    "--set=grid.warmup=2",
    "--set=grid.update_every=2",
    "--set=train.iterations=6",
    "--set=train.batch_rays=32",
    "--set=train.log_every=3",
    "--set=train.eval_every=3",
    "--set=train.checkpoint_every=3",
];

fn dynplane(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynplane"))
        .args(args)
        .env_remove("FORPLANE_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn with_tiny<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend_from_slice(TINY);
    v
}

fn manifest_files(dir: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(dir.join("manifest.json")).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    v["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f.as_str().unwrap().to_string())
        .collect()
}

#[test]
fn synth_train_render_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    let out = tmp.path().join("out");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let (data_s, run_s, out_s) = (s(&data), s(&run), s(&out));

    let o = dynplane(&with_tiny(&["synth", "--out", &data_s]));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(data.join("meta.json").exists());
    assert!(manifest_files(&data).iter().any(|f| f == "images/000.png"));

    let o = dynplane(&with_tiny(&["train", "--data", &data_s, "--out", &run_s]));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let files = manifest_files(&run);
    for want in ["config.json", "log.csv", "checkpoint.fpln", "checkpoint_000003.fpln"] {
        assert!(files.iter().any(|f| f == want), "{want} missing from {files:?}");
        assert!(run.join(want).exists());
    }
    let log = std::fs::read_to_string(run.join("log.csv")).unwrap();
    let mut lines = log.lines();
    assert!(lines.next().unwrap().starts_with("iteration,rgb,depth"));
    assert_eq!(lines.count(), 2);

    // the effective config is dumped flat and reflects the overrides
    let cfg: Value = serde_json::from_str(&std::fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["train.iterations"], 6);

    let ckpt = s(&run.join("checkpoint.fpln"));
    let o = dynplane(&["eval", "--checkpoint", &ckpt, "--data", &data_s, "--out", &out_s, "--frames", "0,1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let metrics: Value = serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["frames"].as_array().unwrap().len(), 2);
    assert!(metrics["psnr"].as_f64().unwrap().is_finite());

    let o = dynplane(&["render", "--checkpoint", &ckpt, "--data", &data_s, "--out", &out_s, "--frames", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(manifest_files(&out).iter().any(|f| f.ends_with(".png")));

    let o = dynplane(&["bench-march", "--checkpoint", &ckpt, "--data", &data_s, "--out", &out_s]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let bench = std::fs::read_to_string(out.join("bench_march.csv")).unwrap();
    assert_eq!(bench.lines().count(), 3);

    let o = dynplane(&["decompose", "--checkpoint", &ckpt, "--data", &data_s, "--out", &out_s, "--frame", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["full_002.png", "static_002.png", "dynamic_002.png"] {
        assert!(out.join(name).exists(), "{name}");
    }

    // out-of-range frames and --config on a checkpoint command are usage errors
    let o = dynplane(&["eval", "--checkpoint", &ckpt, "--data", &data_s, "--out", &out_s, "--frames", "9"]);
    assert_eq!(code(&o), 1);
    let cfg_path = s(&run.join("config.json"));
    let o = dynplane(&["eval", "--config", &cfg_path, "--checkpoint", &ckpt, "--data", &data_s, "--out", &out_s]);
    assert_eq!(code(&o), 1);
}

#[test]
fn sweep_writes_one_row_per_point() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("sweep");
    let (data_s, out_s) = (data.to_str().unwrap(), out.to_str().unwrap());
    assert_eq!(code(&dynplane(&with_tiny(&["synth", "--out", data_s]))), 0);
    let mut args = with_tiny(&["sweep", "--data", data_s, "--out", out_s, "--lambda-tv", "1e-4,1e-2"]);
    args.push("--set=train.iterations=2");
    let o = dynplane(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn malformed_sweep_grid_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = dynplane(&["sweep", "--data", out, "--out", out, "--lambda-ts", "0.1,oops"]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_dataset_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope");
    let out = tmp.path().join("out");
    let o = dynplane(&["train", "--data", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bad_overrides_and_arguments_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert_eq!(code(&dynplane(&["synth", "--out", out, "--set", "synth.nonsense=3"])), 1);
    assert_eq!(code(&dynplane(&["synth", "--out", out, "--set", "no-equals-sign"])), 1);
    assert_eq!(code(&dynplane(&["frobnicate"])), 1);
    assert_eq!(code(&dynplane(&["--help"])), 0);
}

#[test]
fn gradcheck_passes_and_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dynplane(&["gradcheck", "--out", tmp.path().to_str().unwrap(), "--seeds", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let reports: Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("gradcheck.json")).unwrap()).unwrap();
    assert_eq!(reports.as_array().unwrap().len(), 2);
    assert!(manifest_files(tmp.path()).contains(&"gradcheck.json".to_string()));
}

#[test]
fn impossible_gradcheck_tolerance_is_a_numerical_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dynplane(&["gradcheck", "--out", tmp.path().to_str().unwrap(), "--seeds", "1", "--tolerance", "0"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}
