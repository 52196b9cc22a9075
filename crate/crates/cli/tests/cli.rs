use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn transvqa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_transvqa"))
        .args(args)
        .args(["--log-level", "warn"])
        .current_dir(dir)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = transvqa(dir.path(), &["frobnicate"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[trian]\nepochs = 2\n").unwrap();
    let out = transvqa(dir.path(), &["--config", "c.toml", "selftest"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn identical_raw_files_score_zero_with_a_neutral_model() {
    let dir = tempfile::tempdir().unwrap();
    // 64x64 4:2:0, 8 frames
    let frame = 64 * 64 * 3 / 2;
    let bytes: Vec<u8> = (0..frame * 8).map(|i| (i * 37 % 251) as u8).collect();
    fs::write(dir.path().join("a.yuv"), &bytes).unwrap();
    let out = transvqa(
        dir.path(),
        &[
            "score", "--ref", "a.yuv", "--dist", "a.yuv", "--pqanet", "neutral", "--patch", "4x32x32", "--width", "64",
            "--height", "64", "--json-out", "out/score.json",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&dir.path().join("out/score.json"));
    assert_eq!(v["sequence_score"].as_f64(), Some(0.0));
    assert_eq!(v["tile_grid"]["shape"], serde_json::json!([2, 2, 2]));
    assert_eq!(v["per_tile_scores"].as_array().unwrap().len(), 8);
    let run = json(&dir.path().join("out/score.json.run.json"));
    assert_eq!(run["command"], "score");
    assert_eq!(run["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn missing_input_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = transvqa(
        dir.path(),
        &["score", "--ref", "x.y4m", "--dist", "x.y4m", "--pqanet", "neutral", "--json-out", "s.json"],
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = transvqa(dir.path(), &["selftest", "--out", "st"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("selftest passed"));
    assert!(dir.path().join("st/run_manifest.json").exists());
    assert!(dir.path().join("st/evaluation/report.json").exists());
}

#[test]
fn stages_rerun_to_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ok = |o: Output| assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    ok(transvqa(d, &["synth-corpus", "--synthetic", "--out", "corpus", "--seed", "5"]));
    for run in ["a", "b"] {
        ok(transvqa(
            d,
            &[
                "label", "--manifest", "corpus/manifest.jsonl", "--patch", "4x16x16", "--seed", "5", "--out",
                &format!("ds_{run}"),
            ],
        ));
        ok(transvqa(
            d,
            &["train-pqanet", "--dataset", &format!("ds_{run}"), "--out", &format!("ck_{run}"), "--epochs", "2", "--seed", "5", "--deterministic"],
        ));
    }
    let same = |f: &str| assert_eq!(fs::read(d.join("ds_a").join(f)).unwrap(), fs::read(d.join("ds_b").join(f)).unwrap(), "{f}");
    same("instances.csv");
    same("patches.bin");
    assert_eq!(fs::read(d.join("ck_a/params.bin")).unwrap(), fs::read(d.join("ck_b/params.bin")).unwrap());
    let (ra, rb) = (json(&d.join("ck_a/run_manifest.json")), json(&d.join("ck_b/run_manifest.json")));
    assert_eq!(ra["config_hash"], rb["config_hash"]);
    assert_eq!(ra["seeds"]["train"], 5);
}

#[test]
fn calibrate_and_evaluate_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ok = |o: Output| {
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        o
    };
    let mut entries = String::from("reference_id,distorted_id,score,qhat\n");
    for i in 0..30 {
        entries.push_str(&format!("r{},d{i},{},{}\n", i % 3, i as f64, 2.0 * i as f64));
    }
    fs::write(d.join("entries.csv"), entries).unwrap();
    let out = ok(transvqa(d, &["calibrate", "--entries", "entries.csv", "--mode", "ds", "--out", "cal"]));
    assert!(String::from_utf8_lossy(&out.stdout).contains("sigma_ds = 0"));
    assert_eq!(json(&d.join("cal/threshold_ds.json"))["sigma"].as_f64(), Some(0.0));
    assert!(d.join("cal/curve_ds.svg").exists());

    ok(transvqa(d, &["synth-corpus", "--synthetic", "--out", "corpus"]));
    fs::write(
        d.join("metrics.toml"),
        "[[metrics]]\ntype = \"psnr\"\n[[metrics]]\ntype = \"ssim\"\n",
    )
    .unwrap();
    let out = ok(transvqa(d, &["evaluate", "--db", "corpus/benchmark.csv", "--metrics", "metrics.toml", "--out", "ev"]));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PSNR"));
    let report = json(&d.join("ev/report.json"));
    assert_eq!(report["metrics"].as_array().unwrap().len(), 2);
    assert!(d.join("ev/table.txt").exists());
}

#[test]
fn calibrate_without_qhat_needs_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("e.csv"), "reference_id,distorted_id,score\nr,a,1\nr,b,2\n").unwrap();
    let out = transvqa(dir.path(), &["calibrate", "--entries", "e.csv", "--mode", "ss"]);
    assert_eq!(code(&out), 2);
}
