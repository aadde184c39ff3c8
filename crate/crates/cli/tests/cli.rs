use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn musefm(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_musefm")).args(args).output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn ok(args: &[&str]) -> String {
    let (code, stdout, stderr) = musefm(args);
    assert_eq!(code, 0, "{args:?} failed: {stderr}");
    stdout
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_dataset(root: &Path) -> PathBuf {
    let ds = root.join("ds");
    ok(&["data-gen", "--profile", "toy", "--scenarios", "10", "--samples", "2", "--seed", "3", "--out", s(&ds)]);
    ds
}

fn table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header = rdr.headers().unwrap().iter().map(str::to_string).collect();
    let rows = rdr.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect();
    (header, rows)
}

fn assert_hashed(path: &Path) {
    let (header, rows) = table(path);
    assert_eq!(header.last().map(String::as_str), Some("config_hash"), "{}", path.display());
    assert!(!rows.is_empty());
    let h = &rows[0][header.len() - 1];
    assert_eq!(h.len(), 16);
    assert!(rows.iter().all(|r| &r[header.len() - 1] == h));
}

#[test]
fn toy_data_gen_uses_the_scaled_split() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("toy");
    let stdout = ok(&["data-gen", "--profile", "toy", "--scenarios", "250", "--seed", "0", "--out", s(&out)]);
    assert!(stdout.contains("200 train / 25 val / 25 test"), "{stdout}");
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["scenarios"], 250);
}

#[test]
fn scene_gen_writes_graphs_and_table() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["scene-gen", "--scenarios", "5", "--seed", "1", "--out", s(dir.path())]);
    assert_eq!(fs::metadata(dir.path().join("scenes.u8")).unwrap().len(), 5 * 32 * 32);
    assert_hashed(&dir.path().join("scenes.csv"));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("scenes.json")).unwrap()).unwrap();
    assert_eq!(doc["scenes"].as_array().unwrap().len(), 5);
}

#[test]
fn precoding_baseline_grid_has_six_points_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(dir.path());
    let out = dir.path().join("base");
    ok(&["baseline", "--task", "precoding", "--snr", "0:25:5", "--dataset", s(&ds), "--out", s(&out)]);
    let (header, rows) = table(&out.join("baseline.csv"));
    assert_eq!(header, ["task", "method", "snr_db", "metric", "value", "samples", "config_hash"]);
    for method in ["zf", "mrt", "wmmse"] {
        let snrs: Vec<&str> = rows.iter().filter(|r| r[1] == method).map(|r| r[2].as_str()).collect();
        assert_eq!(snrs, ["0", "5", "10", "15", "20", "25"], "{method}");
    }
    // sum rate grows with SNR for the ZF baseline
    let zf: Vec<f64> = rows.iter().filter(|r| r[1] == "zf").map(|r| r[4].parse().unwrap()).collect();
    assert!(zf.windows(2).all(|w| w[1] > w[0]));
    assert_hashed(&out.join("baseline.csv"));
}

#[test]
fn baseline_without_dataset_generates_one() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["baseline", "--task", "ce,loc", "--scenarios", "10", "--out", s(dir.path())]);
    let (_, rows) = table(&dir.path().join("baseline.csv"));
    let methods: Vec<&str> = rows.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(methods, ["ls", "random_guess", "center"]);
}

#[test]
fn untrained_model_evaluates_everything() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(dir.path());
    let out = dir.path().join("eval");
    ok(&["eval", "--dataset", s(&ds), "--out", s(&out)]);
    let (_, rows) = table(&out.join("eval.csv"));
    // one point per task plus three decoding points
    assert_eq!(rows.len(), 4 + 3);
    for r in &rows {
        assert!(r[4].parse::<f64>().unwrap().is_finite(), "{r:?}");
    }
    assert_hashed(&out.join("eval.csv"));
    assert_hashed(&out.join("loc_cdf.csv"));

    let dec = dir.path().join("dec");
    ok(&["eval", "--task", "decoding", "--ebn0", "4,5,6", "--dataset", s(&ds), "--out", s(&dec)]);
    let (_, rows) = table(&dec.join("eval.csv"));
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[0] == "dec" && r[3] == "ber"));
    let snrs: Vec<&str> = rows.iter().map(|r| r[2].as_str()).collect();
    assert_eq!(snrs, ["4", "5", "6"]);
}

#[test]
fn train_eval_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(dir.path());
    let cfg = dir.path().join("train.cfg");
    fs::write(&cfg, "batch_size = 8\nlr0 = 0.002\n").unwrap();
    let run = dir.path().join("run");
    ok(&["train", "--dataset", s(&ds), "--epochs", "1", "--alpha", "1,0.1,1,1,1", "--config", s(&cfg), "--out", s(&run)]);
    assert!(run.join("checkpoint/params.bin").is_file());
    assert!(run.join("checkpoint/config.txt").is_file());
    assert_hashed(&run.join("train_log.csv"));
    assert!(fs::read_to_string(run.join("train_config.txt")).unwrap().contains("batch_size = 8"));

    let ev = dir.path().join("ev");
    let ckpt = run.join("checkpoint");
    ok(&["eval", "--task", "ce", "--snr", "0:10:5", "--dataset", s(&ds), "--checkpoint", s(&ckpt), "--out", s(&ev)]);
    let base = dir.path().join("base");
    ok(&["baseline", "--task", "ce", "--snr", "0:10:5", "--dataset", s(&ds), "--out", s(&base)]);
    let rep = dir.path().join("rep");
    ok(&["report", s(&base.join("baseline.csv")), s(&ev.join("eval.csv")), "--out", s(&rep)]);
    let (header, rows) = table(&rep.join("report.csv"));
    assert_eq!(header, ["task", "metric", "snr_db", "ls", "model", "config_hash"]);
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| !r[3].is_empty() && !r[4].is_empty()));
    assert_hashed(&rep.join("report.csv"));
}

#[test]
fn data_gen_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        ok(&["data-gen", "--scenarios", "10", "--samples", "2", "--seed", "5", "--out", s(d)]);
    }
    for f in ["manifest.json", "train/channels.f64", "test/scenes.u8"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(dir.path());
    let out = dir.path().join("x");
    assert_eq!(musefm(&["data-gen", "--bogus", "--out", s(&out)]).0, 1);
    assert_eq!(musefm(&["frobnicate"]).0, 1);
    assert_eq!(musefm(&["data-gen", "--profile", "huge", "--out", s(&out)]).0, 1);
    assert_eq!(musefm(&["data-gen", "--scenarios", "10"]).0, 1);
    assert_eq!(musefm(&["eval", "--dataset", s(&dir.path().join("missing")), "--out", s(&out)]).0, 1);
    assert_eq!(musefm(&["eval", "--profile", "paper", "--dataset", s(&ds), "--out", s(&out)]).0, 1);
    assert_eq!(musefm(&["baseline", "--snr", "5:0:1", "--dataset", s(&ds), "--out", s(&out)]).0, 1);
    assert_eq!(musefm(&["baseline", "--task", "telepathy", "--dataset", s(&ds), "--out", s(&out)]).0, 1);
    assert_eq!(musefm(&["train", "--alpha", "0,0,0,0,0", "--dataset", s(&ds), "--out", s(&out)]).0, 1);
    let bad_cfg = dir.path().join("bad.cfg");
    fs::write(&bad_cfg, "warp_factor = 9\n").unwrap();
    assert_eq!(musefm(&["train", "--config", s(&bad_cfg), "--dataset", s(&ds), "--out", s(&out)]).0, 1);
    assert_eq!(musefm(&["--help"]).0, 0);

    // a corrupted data file is a runtime failure
    let file = ds.join("test/channels.f64");
    let mut bytes = fs::read(&file).unwrap();
    bytes[10] ^= 0xff;
    fs::write(&file, bytes).unwrap();
    let (code, _, stderr) = musefm(&["eval", "--dataset", s(&ds), "--out", s(&out)]);
    assert_eq!(code, 2);
    assert!(stderr.contains("channels.f64"), "{stderr}");
}
