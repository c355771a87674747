use std::path::Path;
use std::process::{Command, Output};

fn edg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edg-lab"))
        .args(args)
        .env_remove("EDG_CACHE_DIR")
        .output()
        .expect("binary runs")
}

fn stdout_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stdout);
    serde_json::from_str(text.lines().last().expect("summary line")).expect("summary is JSON")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn verify_bounds_happy_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = edg(&[
        "verify-bounds",
        "--instances",
        "200",
        "--decomposition-instances",
        "500",
        "--seed",
        "1",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let v = stdout_json(&o);
    assert_eq!(v["passed"], true);
    assert_eq!(v["selected_constant"], "corrected");
    let constants: Vec<&str> = v["results"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["constant"].as_str().unwrap())
        .collect();
    assert_eq!(constants, ["corrected", "published"]);
    assert!(dir.path().join("bounds.md").exists());
}

#[test]
fn training_twice_gives_identical_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let mut hashes = vec![];
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = edg(&[
            "train",
            "--algo",
            "dpnets",
            "--dataset",
            "evolcircle",
            "--seed",
            "7",
            "--set",
            "steps=200",
            "--quiet",
            "--out",
            p(&out),
        ]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        hashes.push(
            stdout_json(&o)["checkpoint_sha256"]
                .as_str()
                .unwrap()
                .to_string(),
        );
    }
    assert_eq!(hashes[0], hashes[1]);
    // the checkpoint evaluates to the recorded accuracy
    let ckpt = dir.path().join("a/model.ckpt");
    let o = edg(&[
        "eval",
        "--checkpoint",
        p(&ckpt),
        "--seed",
        "7",
        "--quiet",
        "--out",
        p(&dir.path().join("e")),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a/train.json")).unwrap())
            .unwrap();
    assert_eq!(
        stdout_json(&o)["target_accuracy"],
        record["target_accuracy"]
    );
}

#[test]
fn distance_sweep_emits_two_by_six_grid() {
    let dir = tempfile::tempdir().unwrap();
    let o = edg(&[
        "sweep", "--axis", "distance", "--values", "3,5,7,10,15,20", "--algos", "dpnets,erm",
        "--trials", "1", "--seeds", "1", "--samples", "60", "--domains", "5", "--set", "search_space={\"lr_min\":0.01,\"lr_max\":0.01,\"steps\":[50],\"n_b\":[4],\"hidden\":[[]],\"linear_embed_dim\":8}",
        "--quiet", "--out", p(dir.path()),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let v = stdout_json(&o);
    assert_eq!(
        (v["rows"].as_u64(), v["columns"].as_u64()),
        (Some(2), Some(6))
    );
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 12);
    let md = std::fs::read_to_string(dir.path().join("results.md")).unwrap();
    assert!(md.contains("Selection: oracle"));
    assert_eq!(
        std::fs::read_dir(dir.path().join("raw")).unwrap().count(),
        12
    );

    // re-rendering under validation selection names the new scheme
    let again = dir.path().join("tdv");
    let o = edg(&[
        "report",
        "--input",
        p(dir.path()),
        "--selection",
        "validation",
        "--quiet",
        "--out",
        p(&again),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let md = std::fs::read_to_string(again.join("results.md")).unwrap();
    assert!(md.contains("Selection: training-domain validation"));
}

#[test]
fn usage_and_config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path());
    assert_eq!(edg(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(edg(&["train", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(
        edg(&["train", "--set", "nope=1", "--out", out])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(edg(&["train", "--dataset", "cifar"]).status.code(), Some(2));
    assert_eq!(
        edg(&["sweep", "--axis", "distance", "--values", "3", "--out", out])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        edg(&[
            "sweep",
            "--axis",
            "distance",
            "--values",
            "3,5",
            "--dataset",
            "rplate",
            "--out",
            out
        ])
        .status
        .code(),
        Some(2)
    );
    let missing = dir.path().join("missing.json");
    assert_eq!(
        edg(&["train", "--config", p(&missing), "--out", out])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"seed": 3, "steps": 50, "dataset": "rplate"}"#).unwrap();
    let o = edg(&[
        "train",
        "--config",
        p(&cfg),
        "--seed",
        "4",
        "--quiet",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("train.json")).unwrap())
            .unwrap();
    assert_eq!(record["seed"], 4);
    assert_eq!(record["dataset"], "rplate");
    assert_eq!(record["hparams"]["steps"], 50);
}

#[test]
fn logs_are_json_lines_unless_quiet() {
    let dir = tempfile::tempdir().unwrap();
    let o = edg(&["train", "--set", "steps=20", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.lines().count() > 0);
    for line in err.lines() {
        let v: serde_json::Value = serde_json::from_str(line).expect("log line is JSON");
        assert!(v["level"].is_string() && v["msg"].is_string());
    }
    let o = edg(&[
        "train",
        "--set",
        "steps=20",
        "--quiet",
        "--out",
        p(dir.path()),
    ]);
    assert!(o.stderr.is_empty());
}

#[test]
fn every_subcommand_documents_its_flags() {
    for sub in [
        "gen-data",
        "train",
        "eval",
        "sweep",
        "interp-study",
        "verify-bounds",
        "report",
    ] {
        let o = edg(&[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0));
        let help = String::from_utf8_lossy(&o.stdout);
        for flag in [
            "--config",
            "--set",
            "--out",
            "--seed",
            "--workers",
            "--quiet",
            "--cache-dir",
        ] {
            assert!(help.contains(flag), "{sub} --help lacks {flag}");
        }
    }
}

#[test]
fn gen_data_writes_and_caches() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let o = edg(&[
        "gen-data",
        "--dataset",
        "rplate",
        "--domains",
        "4",
        "--samples",
        "20",
        "--cache-dir",
        p(&cache),
        "--quiet",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    assert_eq!(v["domains"], 4);
    let written = std::fs::read_to_string(dir.path().join("rplate.jsonl")).unwrap();
    assert_eq!(written.lines().count(), 1 + 4 * 20);
    assert_eq!(std::fs::read_dir(&cache).unwrap().count(), 1);
}
