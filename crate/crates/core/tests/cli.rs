use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use stockgan::cli::{run, ErrorKind};
use stockgan::synthetic::{write_csv, SineFixture};

const TINY: &str = r#"
stock = "SINE"
[train]
epochs = 1
batch_size = 32
[arch]
gru_units = [6, 4]
generator_dense = 4
conv_channels = [2, 3, 4]
critic_dense = 4
lstm_units = 4
"#;

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new(bars: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let series = SineFixture { bars, ..Default::default() }.series().unwrap();
        write_csv(&series, fs::File::create(dir.path().join("sine.csv")).unwrap()).unwrap();
        fs::write(dir.path().join("run.toml"), TINY).unwrap();
        Self { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, out: &str, args: &[&str]) -> Result<String, stockgan::cli::CliError> {
        let mut full = vec![
            "stockgan".to_string(),
            "--config".into(),
            self.path("run.toml").display().to_string(),
            "--data".into(),
            self.path("sine.csv").display().to_string(),
            "--out".into(),
            self.path(out).display().to_string(),
        ];
        full.extend(args.iter().map(|s| s.to_string()));
        let mut buf = Vec::new();
        run(full, &mut buf).map(|_| String::from_utf8(buf).unwrap())
    }
}

fn read_tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn ingest_lists_fourteen_features() {
    let ws = Workspace::new(200);
    let text = ws.run("out", &["ingest"]).unwrap();
    assert!(text.contains("feature columns: 14"), "{text}");
    assert!(text.contains("warm-up rows dropped: 25"));
    assert!(text.contains("BollingerLower"));
}

#[test]
fn ingest_too_short_is_data_error() {
    let ws = Workspace::new(10);
    let e = ws.run("out", &["ingest"]).unwrap_err();
    assert_eq!(e.kind, ErrorKind::Data);
    assert!(e.message.contains("insufficient data"), "{}", e.message);
}

#[test]
fn lstm_one_epoch_writes_checkpoint_and_history() {
    let ws = Workspace::new(200);
    ws.run("out", &["train", "--objective", "lstm"]).unwrap();
    assert!(ws.path("out/checkpoints/lstm_N3_H1.ckpt").exists());
    let hist = fs::read_to_string(ws.path("out/history/lstm_N3_H1.csv")).unwrap();
    assert_eq!(hist.lines().count(), 2);
    assert!(!ws.path("out/checkpoints/dragan_fm_N3_H1.ckpt").exists());
}

#[test]
fn full_pipeline_is_deterministic() {
    let ws = Workspace::new(200);
    for out in ["a", "b"] {
        ws.run(out, &["train"]).unwrap();
        ws.run(out, &["evaluate"]).unwrap();
        let table = ws.run(out, &["compare"]).unwrap();
        assert_eq!(table.lines().count(), 5, "{table}");
    }
    let (a, b) = (read_tree(&ws.path("a")), read_tree(&ws.path("b")));
    assert_eq!(a.len(), b.len());
    assert!(a.len() >= 4 + 4 + 8 + 16 + 2);
    for ((na, ca), (nb, cb)) in a.iter().zip(&b) {
        assert_eq!(na, nb);
        assert!(ca == cb, "{na} differs between runs");
    }
    let csv = fs::read_to_string(ws.path("a/comparison.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("model,split,horizon,rmse"));
    assert_eq!(csv.lines().count(), 1 + 4 * 2);
}

#[test]
fn evaluate_with_mismatched_window_names_the_field() {
    let ws = Workspace::new(200);
    ws.run("out", &["train", "--objective", "dragan_fm"]).unwrap();
    let ckpt = ws.path("out/checkpoints/dragan_fm_N3_H1.ckpt").display().to_string();
    let e = ws.run("out", &["evaluate", "--window", "10", "--checkpoint", &ckpt]).unwrap_err();
    assert_eq!(e.kind, ErrorKind::Config);
    assert!(e.message.starts_with("window:"), "{}", e.message);
}

#[test]
fn predict_prints_one_row_per_horizon_step() {
    let ws = Workspace::new(200);
    ws.run("out", &["train", "--objective", "wgan_gp", "--horizon", "2"]).unwrap();
    let ckpt = ws.path("out/checkpoints/wgan_gp_N3_H2.ckpt").display().to_string();
    let text = ws.run("out", &["predict", "--horizon", "2", "--checkpoint", &ckpt]).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "after,step,predicted");
    assert_eq!(lines.len(), 3);
    assert!(lines[2].split(',').nth(2).unwrap().parse::<f64>().unwrap().is_finite());
}

#[test]
fn binary_exit_codes_and_error_lines() {
    let ws = Workspace::new(200);
    let bin = env!("CARGO_BIN_EXE_stockgan");

    let missing = Command::new(bin).args(["ingest", "--data", "/definitely/missing.csv"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(3));
    let err = String::from_utf8(missing.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error[E_DATA]: "), "{err}");

    let bad = Command::new(bin).args(["train", "--objective", "nope"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8(bad.stderr).unwrap().starts_with("error[E_CONFIG]: "));

    fs::write(ws.path("bad.toml"), "[train]\nk = 0.0\n").unwrap();
    let invalid = Command::new(bin)
        .args(["--config", ws.path("bad.toml").to_str().unwrap(), "ingest"])
        .output()
        .unwrap();
    assert_eq!(invalid.status.code(), Some(2));

    let ok = Command::new(bin)
        .args(["--data", ws.path("sine.csv").to_str().unwrap(), "ingest"])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
}
