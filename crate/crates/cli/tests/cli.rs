//! End-to-end runs of the `ctxdepth` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ctxdepth::data::depth_io;
use ctxdepth::geometry::DepthMap;

fn ctxdepth(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctxdepth"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn assert_ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status.code(),
        stdout(o),
        String::from_utf8_lossy(&o.stderr)
    );
}

/// Small synthetic dataset plus a tiny-encoder config pointing at it.
fn fixture(dir: &Path) -> PathBuf {
    assert_ok(&ctxdepth(
        dir,
        &[
            "synth",
            "--out",
            "syn",
            "--set",
            "count=2",
            "--set",
            "width=64",
            "--set",
            "height=32",
        ],
    ));
    let cfg = serde_json::json!({
        "network": {"encoder": "tiny"},
        "train": {"batch_size": 2, "epochs": 3},
        "data": {"kind": "synthetic", "root": "syn"},
        "output_dir": "runs/default"
    });
    let path = dir.join("synth.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn synth_writes_scenes_and_reports_residual() {
    let dir = tempfile::tempdir().unwrap();
    let out = ctxdepth(
        dir.path(),
        &[
            "synth",
            "--out",
            "ten",
            "--set",
            "count=10",
            "--set",
            "width=64",
            "--set",
            "height=32",
        ],
    );
    assert_ok(&out);
    let text = stdout(&out);
    assert!(text.contains("self-check passed"), "{text}");
    assert_eq!(text.matches("self-check scene_").count(), 10);
    for i in 0..10 {
        for f in [
            "prev.png",
            "target.png",
            "next.png",
            "intrinsics.json",
            "depth.f32",
            "poses.json",
        ] {
            assert!(dir.path().join(format!("ten/scene_{i:04}/{f}")).is_file());
        }
    }
    assert!(!dir.path().join("ten/scene_0010").exists());
}

#[test]
fn synth_flags_identical_frames_for_zero_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let out = ctxdepth(
        dir.path(),
        &[
            "synth",
            "--out",
            "b0",
            "--set",
            "baseline=0",
            "--set",
            "count=1",
        ],
    );
    assert_ok(&out);
    assert!(stdout(&out).contains("(identical frames)"));
}

#[test]
fn synth_rejects_invalid_spec() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&ctxdepth(
            dir.path(),
            &["synth", "--out", "x", "--set", "depth=-2"]
        )),
        2
    );
    std::fs::write(dir.path().join("spec.json"), "{\"focal\": \"wide\"}").unwrap();
    assert_eq!(
        code(&ctxdepth(
            dir.path(),
            &["synth", "--out", "x", "--spec", "spec.json"]
        )),
        2
    );
}

#[test]
fn train_one_epoch_smoke() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let out = ctxdepth(
        dir.path(),
        &[
            "train",
            "--config",
            "synth.json",
            "--epochs",
            "1",
            "--out",
            "run",
        ],
    );
    assert_ok(&out);
    let run = dir.path().join("run");
    let ckpts: Vec<_> = std::fs::read_dir(run.join("checkpoints"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert!(ckpts.contains(&"epoch_001.tar".to_string()), "{ckpts:?}");
    assert!(!ckpts.contains(&"epoch_002.tar".to_string()));
    let log = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert!(log.starts_with("step,epoch,lr,total_loss,photometric,smoothness"));
    assert_eq!(log.lines().count(), 2);
    // The snapshot is the resolved config, overrides included.
    let snap: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(snap["train"]["epochs"], 1);
    assert_eq!(snap["train"]["seed"], 0);
    assert_eq!(snap["output_dir"], "run");
}

#[test]
fn same_seed_gives_identical_logs() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    for run in ["a", "b"] {
        assert_ok(&ctxdepth(
            dir.path(),
            &[
                "--seed",
                "5",
                "train",
                "--config",
                "synth.json",
                "--epochs",
                "2",
                "--out",
                run,
            ],
        ));
    }
    let read = |r: &str| std::fs::read_to_string(dir.path().join(r).join("metrics.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_eq!(read("a").lines().count(), 3);
    assert_ok(&ctxdepth(
        dir.path(),
        &[
            "--seed",
            "6",
            "train",
            "--config",
            "synth.json",
            "--epochs",
            "2",
            "--out",
            "c",
        ],
    ));
    assert_ne!(read("a"), read("c"));
}

#[test]
fn config_and_input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let missing = ctxdepth(
        dir.path(),
        &[
            "train",
            "--config",
            "synth.json",
            "--set",
            "data.root=nowhere",
            "--out",
            "r1",
        ],
    );
    assert_eq!(code(&missing), 2);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nowhere"));
    assert_eq!(
        code(&ctxdepth(dir.path(), &["train", "--config", "nope.json"])),
        2
    );
    assert_eq!(
        code(&ctxdepth(
            dir.path(),
            &["train", "--config", "synth.json", "--set", "train.bogus=1"]
        )),
        2
    );
    assert_eq!(
        code(&ctxdepth(
            dir.path(),
            &[
                "train",
                "--config",
                "synth.json",
                "--set",
                "train.batch_size=0"
            ]
        )),
        2
    );
    let kitti = ctxdepth(
        dir.path(),
        &[
            "train",
            "--set",
            "data.kind=kitti",
            "--set",
            "data.root=.",
            "--out",
            "r2",
        ],
    );
    assert_eq!(code(&kitti), 2);
}

#[test]
fn diverging_training_exits_3_with_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let out = ctxdepth(
        dir.path(),
        &[
            "train",
            "--config",
            "synth.json",
            "--set",
            "train.lr_initial=1e30",
            "--set",
            "train.batch_size=1",
            "--out",
            "nan",
        ],
    );
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    let diag: Vec<_> = std::fs::read_dir(dir.path().join("nan/diagnostics"))
        .unwrap()
        .collect();
    assert_eq!(diag.len(), 1);
}

#[test]
fn rerun_into_existing_run_needs_resume() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    assert_ok(&ctxdepth(
        dir.path(),
        &[
            "train",
            "--config",
            "synth.json",
            "--epochs",
            "1",
            "--out",
            "run",
        ],
    ));
    assert_eq!(
        code(&ctxdepth(
            dir.path(),
            &[
                "train",
                "--config",
                "synth.json",
                "--epochs",
                "2",
                "--out",
                "run"
            ]
        )),
        2
    );
    let resumed = ctxdepth(
        dir.path(),
        &["train", "--resume", "--epochs", "2", "--out", "run"],
    );
    assert_ok(&resumed);
    let log = std::fs::read_to_string(dir.path().join("run/metrics.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);
    assert!(dir.path().join("run/checkpoints/epoch_002.tar").is_file());
}

#[test]
fn train_then_eval_and_infer_on_last_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    assert_ok(&ctxdepth(
        dir.path(),
        &[
            "train",
            "--config",
            "synth.json",
            "--epochs",
            "1",
            "--out",
            "run",
        ],
    ));
    let last = "run/checkpoints/last.tar";

    let eval = ctxdepth(
        dir.path(),
        &[
            "eval",
            "--checkpoint",
            last,
            "--synthetic",
            "syn",
            "--crop",
            "none",
        ],
    );
    assert_ok(&eval);
    assert!(stdout(&eval).contains("abs_rel"));
    assert!(dir.path().join("run/eval/per_frame.csv").is_file());
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("run/eval/summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["evaluated"], 2);
    assert_eq!(summary["protocol"]["median_scaling"], true);
    assert_eq!(summary["protocol"]["cap"], 80.0);

    // One 64x32 image gives one 64x32 raster; a directory of three gives three.
    let infer = ctxdepth(
        dir.path(),
        &[
            "infer",
            "--checkpoint",
            last,
            "--input",
            "syn/scene_0000/target.png",
            "--out",
            "one",
        ],
    );
    assert_ok(&infer);
    let depth = depth_io::load_raster(&dir.path().join("one/target.f32")).unwrap();
    assert_eq!((depth.width, depth.height), (64, 32));
    assert!(depth.data.iter().all(|&d| (0.1..=100.0).contains(&d)));
    assert!(dir.path().join("one/target_depth.png").is_file());
    assert_ok(&ctxdepth(
        dir.path(),
        &[
            "infer",
            "--checkpoint",
            last,
            "--input",
            "syn/scene_0001",
            "--out",
            "many",
            "--no-preview",
        ],
    ));
    let rasters = std::fs::read_dir(dir.path().join("many"))
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "f32")
        })
        .count();
    assert_eq!(rasters, 3);
}

#[test]
fn infer_fails_when_every_image_is_unreadable() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    assert_ok(&ctxdepth(
        dir.path(),
        &[
            "train",
            "--config",
            "synth.json",
            "--epochs",
            "1",
            "--out",
            "run",
        ],
    ));
    std::fs::create_dir(dir.path().join("junk")).unwrap();
    std::fs::write(dir.path().join("junk/a.png"), b"not a png").unwrap();
    let out = ctxdepth(
        dir.path(),
        &[
            "infer",
            "--checkpoint",
            "run/checkpoints/last.tar",
            "--input",
            "junk",
            "--out",
            "o",
        ],
    );
    assert_eq!(code(&out), 2);
}

/// GT and prediction trees in KITTI layout plus a two-frame test list.
fn kitti_fixture(dir: &Path, scale: f32) {
    let seq = "2011_09_26/2011_09_26_drive_0002_sync";
    let mut list = String::new();
    for idx in [3usize, 4] {
        let gt = DepthMap::new(
            48,
            96,
            (0..48 * 96)
                .map(|i| 4.0 + ((i * 7) % 61) as f32 * 0.5)
                .collect(),
        )
        .unwrap();
        let pred = DepthMap::new(48, 96, gt.data.iter().map(|d| d * scale).collect()).unwrap();
        for (root, map) in [("gt", &gt), ("pred", &pred)] {
            let path = dir
                .join(root)
                .join(seq)
                .join("image_02")
                .join(format!("{idx:010}.f32"));
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            depth_io::save_raster(&path, map.width, map.height, &map.data, "m").unwrap();
        }
        list.push_str(&format!("{seq} {idx} l\n"));
    }
    std::fs::write(dir.join("test_files.txt"), list).unwrap();
}

fn row(out: &Output) -> Vec<f64> {
    let text = stdout(out);
    let line = text.lines().nth(1).expect("metric row");
    line.split('|').map(|c| c.trim().parse().unwrap()).collect()
}

#[test]
fn eval_predictions_equal_to_ground_truth_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    kitti_fixture(dir.path(), 1.0);
    let out = ctxdepth(
        dir.path(),
        &[
            "eval",
            "--predictions",
            "pred",
            "--split",
            "test_files.txt",
            "--gt-root",
            "gt",
        ],
    );
    assert_ok(&out);
    assert_eq!(row(&out), vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
}

#[test]
fn median_scaling_flag_changes_scale_ambiguous_row() {
    let dir = tempfile::tempdir().unwrap();
    kitti_fixture(dir.path(), 3.0);
    let args = [
        "eval",
        "--predictions",
        "pred",
        "--split",
        "test_files.txt",
        "--gt-root",
        "gt",
    ];
    let scaled = ctxdepth(dir.path(), &args);
    assert_ok(&scaled);
    assert_eq!(row(&scaled), vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    let mut raw_args = args.to_vec();
    raw_args.push("--no-median-scaling");
    let raw = ctxdepth(dir.path(), &raw_args);
    assert_ok(&raw);
    let r = row(&raw);
    assert!(r[0] > 1.0 && r[4] == 0.0, "{r:?}");
}

#[test]
fn eval_fails_when_most_frames_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    kitti_fixture(dir.path(), 1.0);
    let mut list = std::fs::read_to_string(dir.path().join("test_files.txt")).unwrap();
    list.push_str(
        "2011_09_26/2011_09_26_drive_0002_sync 90 l\n2011_09_26/2011_09_26_drive_0002_sync 91 l\n",
    );
    list.push_str("2011_09_26/2011_09_26_drive_0002_sync 92 l\n");
    std::fs::write(dir.path().join("test_files.txt"), list).unwrap();
    let out = ctxdepth(
        dir.path(),
        &[
            "eval",
            "--predictions",
            "pred",
            "--split",
            "test_files.txt",
            "--gt-root",
            "gt",
            "--out",
            "rep",
        ],
    );
    assert_eq!(code(&out), 2);
    assert_eq!(stdout(&out).matches("skipped ").count(), 3);
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("rep/summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["skipped"].as_array().unwrap().len(), 3);
}

#[test]
fn eval_reports_b0_complexity() {
    let dir = tempfile::tempdir().unwrap();
    kitti_fixture(dir.path(), 1.0);
    let out = ctxdepth(
        dir.path(),
        &[
            "eval",
            "--predictions",
            "pred",
            "--split",
            "test_files.txt",
            "--gt-root",
            "gt",
            "--report-complexity",
        ],
    );
    assert_ok(&out);
    let r = row(&out);
    assert_eq!(r.len(), 9);
    assert!((r[7] - 4.15).abs() <= 0.2 * 4.15, "params {}M", r[7]);
}

#[test]
fn complexity_command() {
    let dir = tempfile::tempdir().unwrap();
    let out = ctxdepth(dir.path(), &["complexity", "--json", "b0.json"]);
    assert_ok(&out);
    assert!(stdout(&out).contains("at 640x192"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("b0.json")).unwrap())
            .unwrap();
    let params = report["params"].as_u64().unwrap();
    assert!((3_300_000..=5_000_000).contains(&params));
    let parts: u64 = report["breakdown"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["params"].as_u64().unwrap())
        .sum();
    assert_eq!(parts, params);
    assert_eq!(
        code(&ctxdepth(dir.path(), &["complexity", "--encoder", "vgg"])),
        2
    );
    assert_eq!(
        code(&ctxdepth(dir.path(), &["complexity", "--width", "100"])),
        2
    );
}
