use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fewbit::checkpoint::{Checkpoint, NetParams};
use fewbit::networks::CeNetParams;
use fewbit::pilot::build_dft_pilot;

fn fewbit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fewbit")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn config(kind: &str, extra_train: &str) -> String {
    format!(
        r#"seed = 3

[system]
N = 4
K = 2
Tt = 6
bits = 2
snr_db = 5.0
constellation = "qpsk"

[train]
epochs = 5
batch = 8
{extra_train}

[net]
kind = "{kind}"
layers = 3
"#
    )
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_writes_checkpoint_loss_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ce_b2.cfg", &config("fbm-cenet", ""));
    let o = fewbit(&["train", "--net", "fbm-cenet", "--config", s(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ckpt = Checkpoint::load(&dir.path().join("ce_b2.ckpt")).unwrap();
    assert!(matches!(ckpt.params, NetParams::CeNet(_)));
    let loss = std::fs::read_to_string(dir.path().join("ce_b2_loss.csv")).unwrap();
    assert_eq!(loss.lines().next(), Some("epoch,lr,loss"));
    assert_eq!(loss.lines().count(), 6);
    let manifest = std::fs::read_to_string(dir.path().join("ce_b2_manifest.toml")).unwrap();
    assert!(manifest.contains("command = \"train\""));
    assert!(manifest.contains("ce_b2.ckpt"));
}

#[test]
fn zero_epochs_keep_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "init.toml", &config("fbm-cenet", ""));
    let o = fewbit(&["train", "--config", s(&cfg), "--epochs", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ckpt = Checkpoint::load(&dir.path().join("init.ckpt")).unwrap();
    let expected = CeNetParams::initial(&ckpt.system, 3, build_dft_pilot(&ckpt.system).unwrap(), false);
    assert_eq!(ckpt.params, NetParams::CeNet(expected));
}

#[test]
fn manifest_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "det.toml", &config("fbm-detnet", ""));
    assert!(fewbit(&["train", "--config", s(&cfg)]).status.success());
    let again = dir.path().join("again");
    std::fs::create_dir(&again).unwrap();
    let manifest = std::fs::read_to_string(dir.path().join("det_manifest.toml")).unwrap();
    let refed = write(&again, "det.toml", &manifest);
    let o = fewbit(&["train", "--config", s(&refed)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = std::fs::read(dir.path().join("det.ckpt")).unwrap();
    let b = std::fs::read(again.join("det.ckpt")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &config("fbm-cenet", "").replace("N = 4\n", ""));
    let o = fewbit(&["train", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("system.N"), "{}", stderr(&o));

    let cfg = write(dir.path(), "bad2.toml", &config("fbm-cenet", "decay = 1.5"));
    let o = fewbit(&["train", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 14: train.decay"), "{}", stderr(&o));
}

#[test]
fn divergence_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = config("fbm-cenet", "lr0 = 1000.0\ndecay = 1.0").replace("epochs = 5", "epochs = 400");
    let cfg = write(dir.path(), "wild.toml", &text);
    let o = fewbit(&["train", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("diverged"));
}

#[test]
fn nmse_sweep_rows_and_repeatability() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ce.toml", &config("fbm-cenet", ""));
    assert!(fewbit(&["train", "--config", s(&cfg)]).status.success());
    let ckpt = dir.path().join("ce.ckpt");
    let run = |out: &str| {
        let out = dir.path().join(out);
        let o = fewbit(&[
            "sweep", "nmse", "--config", s(&cfg), "--methods", "bmmse,bwzf,fbm-cenet", "--checkpoint", s(&ckpt), "--trials", "50",
            "--out", s(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(out).unwrap()
    };
    let a = run("a.csv");
    assert_eq!(String::from_utf8_lossy(&a).lines().count(), 4);
    assert_eq!(a, run("b.csv"));

    let o = fewbit(&["sweep", "nmse", "--config", s(&cfg), "--snrs", "-5,5", "--methods", "bmmse", "--trials", "20", "--out", s(&dir.path().join("c.csv"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(dir.path().join("c.csv")).unwrap().lines().count(), 3);

    // checkpoint exists only at 5 dB
    let o = fewbit(&[
        "sweep", "nmse", "--config", s(&cfg), "--snrs", "0", "--methods", "fbm-cenet", "--checkpoint", s(&ckpt), "--out",
        s(&dir.path().join("d.csv")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("fbm-cenet"), "{}", stderr(&o));
    let o = fewbit(&["sweep", "nmse", "--config", s(&cfg), "--methods", "fbm-cenet", "--out", s(&dir.path().join("e.csv"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing checkpoint for method `fbm-cenet`"), "{}", stderr(&o));
}

#[test]
fn ber_sweep_with_estimated_csi() {
    let dir = tempfile::tempdir().unwrap();
    let ce = write(dir.path(), "ce.toml", &config("fbm-cenet", ""));
    let det = write(dir.path(), "det.toml", &config("b-detnet", ""));
    assert!(fewbit(&["train", "--config", s(&ce)]).status.success());
    assert!(fewbit(&["train", "--config", s(&det)]).status.success());
    let out = dir.path().join("ber.csv");
    let o = fewbit(&[
        "sweep", "ber", "--config", s(&det), "--methods", "bmmse,b-detnet,exhaustive-ml", "--csi", "estimated", "--checkpoint",
        s(&dir.path().join("ce.ckpt")), "--checkpoint", s(&dir.path().join("det.ckpt")), "--channels", "5", "--vectors", "10",
        "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().skip(1).all(|l| l.contains(",ber,") && l.contains(",50,")));
    let o = fewbit(&["sweep", "ber", "--config", s(&det), "--csi", "estimated", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn verify_lists_filters_and_scales() {
    let o = fewbit(&["verify"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let lines: Vec<_> = stdout(&o).lines().filter(|l| l.starts_with("PASS") || l.starts_with("FAIL")).map(str::to_owned).collect();
    assert!(lines.len() >= 10);

    let o = fewbit(&["verify", "--only", "gradients"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let checks: Vec<_> = text.lines().filter(|l| l.starts_with("PASS")).collect();
    assert!(!checks.is_empty() && checks.len() < lines.len());
    assert!(checks.iter().all(|l| l.contains("gradients/")));

    let o = fewbit(&["verify", "--only", "sigmoid", "--tolerance-scale", "0.001"]);
    assert_eq!(o.status.code(), Some(3));
    let text = stdout(&o);
    assert!(text.contains("tolerance scale 0.001"));
    assert!(text.contains("tolerance 9.500e-6"), "{text}");
}
