use std::path::Path;
use std::process::{Command, Output};

fn emodan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emodan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

#[test]
fn gen_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = emodan(&["gen", "--count", "12", "--seed", "3", "--out", path(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let csv_a = std::fs::read(a.join("annotations.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.join("annotations.csv")).unwrap());
    let mut images: Vec<_> = std::fs::read_dir(a.join("images"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    images.sort();
    assert_eq!(images.len(), 12);
    for name in images {
        assert_eq!(
            std::fs::read(a.join("images").join(&name)).unwrap(),
            std::fs::read(b.join("images").join(&name)).unwrap()
        );
    }
}

#[test]
fn gen_honours_config_file_and_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gen.cfg");
    std::fs::write(&cfg, "seed = 1\ncount = 3\n").unwrap();
    let out = dir.path().join("data");
    let o = emodan(&["gen", "--config", path(&cfg), "--out", path(&out)]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(out.join("annotations.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    std::fs::write(&cfg, "seed = 1\ncolour = blue\n").unwrap();
    let o = emodan(&[
        "gen",
        "--config",
        path(&cfg),
        "--out",
        path(&dir.path().join("x")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
    assert!(!dir.path().join("x").exists());
}

#[test]
fn eval_of_missing_checkpoint_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(emodan(&["gen", "--count", "4", "--out", path(&data)])
        .status
        .success());
    let out = dir.path().join("report");
    let o = emodan(&[
        "eval",
        "--checkpoint",
        path(&dir.path().join("nope.ckpt")),
        "--dataset",
        path(&data),
        "--out",
        path(&out),
    ]);
    assert_eq!(
        o.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.ckpt"));
    assert!(!out.exists());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(emodan(&[]).status.code(), Some(1));
    assert_eq!(emodan(&["teach"]).status.code(), Some(1));
    assert_eq!(
        emodan(&["train", "--mode", "both", "--out", "/nonexistent/x"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(emodan(&["--help"]).status.code(), Some(0));
}

#[test]
fn train_eval_compare_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = root.join("data");
    assert!(
        emodan(&["gen", "--count", "24", "--seed", "2", "--out", path(&data)])
            .status
            .success()
    );
    for mode in ["joint", "emotion_only"] {
        let run = root.join(mode);
        let o = emodan(&[
            "train",
            "--dataset",
            path(&data),
            "--mode",
            mode,
            "--out",
            path(&run),
            "--set",
            "epochs_a=1",
            "--set",
            "epochs_b=1",
            "--set",
            "batch_size=8",
            "--set",
            "val_fraction=0.25",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let log = std::fs::read_to_string(run.join("log.csv")).unwrap();
        assert_eq!(log.lines().count(), 1 + 2 * 2);
        let o = emodan(&[
            "eval",
            "--checkpoint",
            path(&run),
            "--dataset",
            path(&data),
            "--out",
            path(&root.join("reports").join(mode)),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        for f in [
            "report.csv",
            "report.txt",
            "confusion7.csv",
            "confusion3.csv",
            "predictions.csv",
        ] {
            assert!(root.join("reports").join(mode).join(f).is_file(), "{f}");
        }
    }
    let o = emodan(&[
        "compare",
        path(&root.join("reports/joint")),
        path(&root.join("reports/emotion_only/report.csv")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("joint") && table.contains("emotion_only") && table.contains("delta"));
}

#[test]
fn gradcheck_single_seed_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = emodan(&["gradcheck", "--seeds", "1", "--out", path(dir.path())]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("worst relative error"));
    assert!(!stdout.contains("FAIL"));
    assert!(dir.path().join("gradcheck.txt").is_file());
}
