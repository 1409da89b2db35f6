use std::path::Path;
use std::process::{Command, Output};

fn acl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acl"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("failed to launch binary")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const QUICK: &[&str] = &[
    "--epochs",
    "3",
    "--warmup-epochs",
    "1",
    "--folds",
    "3",
    "--hidden",
    "8",
];

#[test]
fn generate_then_cross_validate_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let gen = acl(
        dir.path(),
        &[
            "generate",
            "--n-samples",
            "240",
            "--seed",
            "4",
            "--annotated",
            "-o",
            "data.csv",
        ],
    );
    assert!(gen.status.success(), "{gen:?}");
    let text = std::fs::read_to_string(dir.path().join("data.csv")).unwrap();
    assert_eq!(text.lines().count(), 241);

    let mut args = vec!["cv", "--data", "data.csv", "--seeds", "0,1", "-o", "run"];
    args.extend_from_slice(QUICK);
    let cv = acl(dir.path(), &args);
    assert!(cv.status.success(), "{cv:?}");
    assert!(stdout(&cv).contains("acl(L=32)"));
    assert!(stdout(&cv).contains("corrupted share"));
    for f in [
        "metrics.csv",
        "config.toml",
        "discards.csv",
        "trajectories/trajectory_s1_f2.csv",
    ] {
        assert!(dir.path().join("run").join(f).is_file(), "{f}");
    }

    let report = acl(dir.path(), &["report", "run/metrics.csv"]);
    assert_eq!(report.status.code(), Some(0));
    assert!(stdout(&report).contains("AUC"));
}

#[test]
fn train_writes_fold_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "train",
        "--fold",
        "1",
        "--strategy",
        "acl_fixed_alpha(1)",
        "-o",
        "fold",
    ];
    args.extend_from_slice(QUICK);
    let out = acl(dir.path(), &args);
    assert!(out.status.success(), "{out:?}");
    let ckpt = std::fs::read_to_string(dir.path().join("fold/checkpoint.txt")).unwrap();
    assert!(ckpt.starts_with("acl-mlp 1\nlayers 2\ndense 2 8\n"));
    let traj = std::fs::read_to_string(dir.path().join("fold/trajectory.csv")).unwrap();
    assert!(traj.starts_with("epoch,batch,t_ada,theta,hard_queue_len,discard_count,batch_loss\n"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("exp.toml"),
        "strategy = \"cross_entropy\"\nepochs = 2\nfolds = 3\nhidden = [4]\n\n[dataset.synthetic]\nn_samples = 200\n",
    )
    .unwrap();
    let out = acl(
        dir.path(),
        &[
            "cv",
            "--config",
            "exp.toml",
            "--strategy",
            "acl",
            "--warmup-epochs",
            "1",
            "-o",
            "r",
        ],
    );
    assert!(out.status.success(), "{out:?}");
    let saved = std::fs::read_to_string(dir.path().join("r/config.toml")).unwrap();
    assert!(saved.contains("strategy = \"acl\""));
    assert!(saved.contains("epochs = 2"));
    assert!(saved.contains("n_samples = 200"));
}

#[test]
fn ablation_over_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "ablate", "--axis", "alpha", "--values", "0,theta", "-o", "abl",
    ];
    args.extend_from_slice(QUICK);
    let out = acl(dir.path(), &args);
    assert!(out.status.success(), "{out:?}");
    assert!(stdout(&out).starts_with("Hyper-parameter alpha"));
    assert!(dir.path().join("abl/setting_1/metrics.csv").is_file());
    let report = acl(dir.path(), &["report", "abl/ablation.csv"]);
    assert!(stdout(&report).contains("theta"));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["frobnicate"],
        vec!["cv", "--queue-length", "20"],
        vec!["cv", "--strategy", "adam"],
        vec!["ablate", "--axis", "queue_length", "--values", "16,x"],
        vec!["report", "missing.csv"],
        vec!["generate", "--noise-rate", "0.7", "-o", "x.csv"],
    ] {
        let out = acl(dir.path(), &args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {out:?}");
    }
    assert_eq!(acl(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn divergence_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["cv", "--strategy", "ce", "--lr", "1e12"];
    args.extend_from_slice(QUICK);
    let out = acl(dir.path(), &args);
    assert_eq!(out.status.code(), Some(2), "{out:?}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
}
