use std::fs;
use std::path::Path;
use std::process::Command;

use rankmerge::{singular_values, stable_rank, task_vector, Checkpoint, TaskVector};
use serde_json::Value;

fn rankmerge(dir: &Path, args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_rankmerge"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
        .status
        .code()
        .expect("exit code")
}

fn ok(dir: &Path, args: &str) {
    let args: Vec<&str> = args.split_whitespace().collect();
    assert_eq!(rankmerge(dir, &args), 0, "rankmerge {}", args.join(" "));
}

fn summary(dir: &Path) -> Value {
    serde_json::from_slice(&fs::read(dir.join("summary.json")).unwrap()).unwrap()
}

fn pool(dir: &Path, extra: &str) {
    ok(dir, &format!("synth --out pool --n-experts 3 --rows 10 --cols 8 --layers 2 --expert-rank 3 --bias {extra}"));
}

fn load_tv(dir: &Path, ckpt: &str) -> TaskVector {
    let base = Checkpoint::load(&dir.join("pool/base")).unwrap();
    task_vector(&Checkpoint::load(&dir.join(ckpt)).unwrap(), &base).unwrap()
}

fn mean_stable_rank(tv: &TaskVector) -> f64 {
    let ranks: Vec<f64> = tv
        .mergeable()
        .map(|t| stable_rank(&singular_values(&t.as_matrix()).unwrap()).unwrap())
        .collect();
    ranks.iter().sum::<f64>() / ranks.len() as f64
}

#[test]
fn usage_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    assert_eq!(rankmerge(t, &["merge", "--base", "nowhere", "--expert", "x", "--out", "o"]), 2);
    assert_eq!(rankmerge(t, &["merge", "--no-such-flag"]), 2);
    assert_eq!(rankmerge(t, &["frobnicate"]), 2);
    pool(t, "--noise 1e-3");
    assert_eq!(rankmerge(t, &["select", "--base", "pool/base", "--expert", "pool/expert_000", "--expert", "pool/expert_001", "--out", "s"]), 2);
}

#[test]
fn summary_replays_to_identical_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    pool(t, "--noise 1e-3");
    ok(t, "merge --base pool/base --expert pool/expert_000 --expert pool/expert_001 --expert pool/expert_002 --method ties --beta 0.01 --out first");
    ok(t, "merge --config first/summary.json --out second");
    for file in ["manifest.json", "t00000.f32", "t00003.f32"] {
        assert_eq!(
            fs::read(t.join("first/checkpoint").join(file)).unwrap(),
            fs::read(t.join("second/checkpoint").join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn averaging_identical_experts_returns_the_expert() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    pool(t, "--noise 1e-3");
    let e = "--expert pool/expert_001";
    ok(t, &format!("merge --base pool/base {e} {e} {e} {e} --alpha 0.25 --out avg"));
    let merged = Checkpoint::load(&t.join("avg/checkpoint")).unwrap();
    let expert = Checkpoint::load(&t.join("pool/expert_001")).unwrap();
    for (a, b) in merged.iter().zip(expert.iter()) {
        assert_eq!(a.name(), b.name());
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((x - y).abs() <= 1e-6, "{}: {x} vs {y}", a.name());
        }
    }
}

#[test]
fn full_boost_flattens_spectrum() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    pool(t, "--noise 1e-3");
    ok(t, "boost --base pool/base --expert pool/expert_002 --beta 0 --out b");
    let s = summary(t.join("b").as_path());
    let components = s["result"]["components"].as_array().unwrap();
    assert_eq!(components.len(), 2);
    for c in components {
        let after = c["stable_rank_after"].as_f64().unwrap();
        assert!((after - 8.0).abs() < 1e-6, "{after}");
    }
}

#[test]
fn diagnosing_the_base_is_degenerate_everywhere() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    pool(t, "--noise 1e-3");
    ok(t, "diagnose --base pool/base --expert pool/base --fraction 0.9 --out d");
    let csv = fs::read_to_string(t.join("d/rank_0.9.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2, "one row per weight matrix, biases excluded");
    assert!(rows.iter().all(|r| r.contains(",,,")), "{csv}");
    assert_eq!(summary(&t.join("d"))["result"][0]["degenerate"], 2);
}

#[test]
fn duplicate_experts_align_to_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    pool(t, "--noise 1e-3");
    let e = "--expert pool/expert_000";
    ok(t, &format!("select --base pool/base {e} {e} {e} --k 3 --out s"));
    let s = summary(&t.join("s"));
    for row in s["result"]["scores"].as_array().unwrap() {
        for v in row.as_array().unwrap() {
            assert!(v.as_f64().unwrap().abs() < 1e-9, "{v}");
        }
    }
    assert_eq!(s["result"]["selection"]["indices"], serde_json::json!([0, 1, 2]));
}

#[test]
fn shared_weight_controls_pool_diversity() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();

    let same = t.join("same");
    fs::create_dir(&same).unwrap();
    pool(&same, "--shared-weight 1 --noise 0");
    ok(&same, "merge --base pool/base --expert pool/expert_000 --expert pool/expert_001 --expert pool/expert_002 --out m");
    let merged = load_tv(&same, "m/checkpoint");
    assert!((mean_stable_rank(&merged) - 1.0).abs() < 1e-4);

    let apart = t.join("apart");
    fs::create_dir(&apart).unwrap();
    pool(&apart, "--shared-weight 0 --noise 1e-3");
    ok(&apart, "align --base pool/base --expert pool/expert_000 --expert pool/expert_001 --expert pool/expert_002 --out a");
    let scores = summary(&apart.join("a"))["result"]["scores"].clone();
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                assert!(scores[i][j].as_f64().unwrap() > 0.0);
            }
        }
    }
}

#[test]
fn synth_is_seed_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    for dir in ["a", "b", "c"] {
        fs::create_dir(t.join(dir)).unwrap();
    }
    pool(&t.join("a"), "--seed 5 --noise 1e-3");
    pool(&t.join("b"), "--seed 5 --noise 1e-3");
    pool(&t.join("c"), "--seed 6 --noise 1e-3");
    let blob = |d: &str| fs::read(t.join(d).join("pool/expert_001/t00000.f32")).unwrap();
    assert_eq!(blob("a"), blob("b"));
    assert_ne!(blob("a"), blob("c"));
}
