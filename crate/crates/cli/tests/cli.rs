use std::path::Path;
use std::process::{Command, Output};

use leo_core::navsim::{Dataset, DatasetId, GenSpec};

fn leo(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leo"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env_remove("LEO_SEED")
        .output()
        .expect("binary runs")
}

fn small_dataset(dir: &Path, id: &str) -> String {
    let name = format!("{}.jsonl", id.to_lowercase());
    let out = leo(
        &["dataset-gen", "--id", id, "--seed", "7", "--num-traj", "5", "--train-count", "3", "--steps", "30", "-o", &name],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    name
}

#[test]
fn dataset_gen_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let a = leo(&["dataset-gen", "--id", "N1", "--seed", "7", "--steps", "20", "-o", "a.jsonl"], tmp.path());
    let b = leo(&["dataset-gen", "--id", "N1", "--seed", "7", "--steps", "20", "-o", "b.jsonl"], tmp.path());
    assert!(a.status.success() && b.status.success());
    let read = |n: &str| std::fs::read(tmp.path().join(n)).unwrap();
    assert_eq!(read("a.jsonl"), read("b.jsonl"));
    let spec: GenSpec = serde_json::from_slice(&read("a.spec.json")).unwrap();
    assert_eq!((spec.seed, spec.steps), (7, 20));
}

#[test]
fn missing_id_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = leo(&["dataset-gen", "-o", "x.jsonl"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let out = leo(&["dataset-gen", "--id", "N9", "-o", "x.jsonl"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn conditioned_dataset_has_labels_everywhere() {
    let tmp = tempfile::tempdir().unwrap();
    let name = small_dataset(tmp.path(), "N3");
    let ds = Dataset::load(&tmp.path().join(name)).unwrap();
    assert!(ds.episodes.iter().all(|e| e.light_labels.as_ref().is_some_and(|l| l.len() == e.len())));
}

#[test]
fn seed_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_leo"))
        .args(["dataset-gen", "--id", "N1", "--steps", "10", "-o", "e.jsonl"])
        .current_dir(tmp.path())
        .env("LEO_SEED", "42")
        .output()
        .unwrap();
    assert!(out.status.success());
    let spec: GenSpec = serde_json::from_slice(&std::fs::read(tmp.path().join("e.spec.json")).unwrap()).unwrap();
    assert_eq!(spec.seed, 42);
}

#[test]
fn train_errors_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path(), "N1");
    assert_eq!(leo(&["train", "cmaes", &ds, "-o", "o"], tmp.path()).status.code(), Some(2));
    assert_eq!(leo(&["train", "leo", "nope.jsonl", "-o", "o"], tmp.path()).status.code(), Some(4));
    assert_eq!(leo(&["train", "leo", &ds, "--init", "random:1", "-o", "o"], tmp.path()).status.code(), Some(2));
    std::fs::write(tmp.path().join("bad.jsonl"), "{not json}\n").unwrap();
    assert_eq!(leo(&["train", "leo", "bad.jsonl", "-o", "o"], tmp.path()).status.code(), Some(4));
}

#[test]
fn perceptron_echo_forces_zero_temperature() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path(), "N1");
    let out = leo(&["train", "perceptron", &ds, "--epochs", "2", "--temperature", "3", "-o", "p"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cfg: serde_json::Value = serde_json::from_slice(&std::fs::read(tmp.path().join("p/config.json")).unwrap()).unwrap();
    assert_eq!(cfg["leo"]["temperature"], 0.0);
    assert_eq!(cfg["method"], "perceptron");
    let log = std::fs::read_to_string(tmp.path().join("p/trainlog.jsonl")).unwrap();
    assert!(log.lines().all(|l| l.contains("\"method\":\"perceptron\"")));
}

#[test]
fn surrogate_warns_about_learning_rate() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path(), "N3");
    let out = Command::new(env!("CARGO_BIN_EXE_leo"))
        .args(["train", "surrogate", &ds, "--lr", "0.3", "-o", "s"])
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ignored"));
    let cfg: serde_json::Value = serde_json::from_slice(&std::fs::read(tmp.path().join("s/config.json")).unwrap()).unwrap();
    assert!(cfg.get("leo").is_none());
    assert!(tmp.path().join("s/theta.json").exists());
}

#[test]
fn eval_with_generating_theta_reports_noise_floor() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path(), "N1");
    let spec = GenSpec { num_traj: 5, train_count: 3, steps: 30, ..GenSpec::defaults(DatasetId::N1, 7) };
    spec.theta_star().save_json(&tmp.path().join("star.json")).unwrap();
    leo_core::navsim::model_template(DatasetId::N1, 2.0).save_json(&tmp.path().join("loose.json")).unwrap();

    let run = |theta: &str| {
        let out = leo(&["eval", theta, &ds, "--split", "train"], tmp.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let m: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        (m["trans_rmse_mean"].as_f64().unwrap(), m["episodes"].as_u64().unwrap())
    };
    let (star, n) = run("star.json");
    let (loose, _) = run("loose.json");
    assert_eq!(n, 3);
    assert!(star > 0.0 && star < 0.5 && star <= loose, "{star} vs {loose}");

    let out = leo(&["eval", "star.json", &ds, "-o", "ev"], tmp.path());
    assert!(out.status.success());
    let traj = std::fs::read_to_string(tmp.path().join("ev/trajectories.csv")).unwrap();
    assert_eq!(traj.lines().count(), 1 + 2 * 30);
}

#[test]
fn eval_rejects_mismatched_theta() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = small_dataset(tmp.path(), "N1");
    leo_core::navsim::model_template(DatasetId::N3, 0.0).save_json(&tmp.path().join("n3.json")).unwrap();
    let out = leo(&["eval", "n3.json", &ds], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no covariance for condition"));
}

#[test]
fn toy_surface_has_one_row_per_grid_point() {
    let tmp = tempfile::tempdir().unwrap();
    let out = leo(&["toy1d", "train", "--epochs", "3", "--hidden", "4", "-o", "t"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["weights.json", "trainlog.jsonl", "surface.csv", "data.csv", "summary.json", "config.json"] {
        assert!(tmp.path().join("t").join(f).exists(), "{f}");
    }
    let out = leo(&["toy1d", "surface", "--weights", "t/weights.json", "--nx", "12", "--ny", "5", "-o", "s.csv"], tmp.path());
    assert!(out.status.success());
    let csv = std::fs::read_to_string(tmp.path().join("s.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 12 * 5);
}

#[test]
fn bench_sampler_reports_speedup() {
    let tmp = tempfile::tempdir().unwrap();
    let out = leo(&["dataset-gen", "--id", "N1", "--num-traj", "2", "--train-count", "1", "-o", "b.jsonl"], tmp.path());
    assert!(out.status.success());
    let out = leo(&["bench-sampler", "b.jsonl", "--episode", "1", "--samples", "50", "-o", "bench"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["dim"], 900);
    assert!(report["speedup"].as_f64().unwrap() >= 1.0);
    let out = leo(&["bench-sampler", "b.jsonl", "--episode", "9", "-o", "bench"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}
