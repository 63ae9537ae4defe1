use std::fs::{self, File};
use std::path::Path;
use std::process::{Command, Output};

use mespot::classifier::read_model;
use mespot::evaluation::{read_curve_csv, read_summary_csv, CurveKind};
use mespot::sampling::read_samples_csv;
use mespot::spotting::read_detections_csv;

fn mespot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mespot")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = mespot(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn gen(dir: &Path) -> String {
    let d = dir.to_str().unwrap();
    ok(&[
        "gen",
        "--out",
        d,
        "--subjects",
        "2",
        "--videos",
        "8",
        "--non-event",
        "1",
        "--frames",
        "100",
        "--noise",
        "1",
        "--amp-min",
        "50",
        "--amp-max",
        "70",
        "--seed",
        "3",
    ]);
    dir.join("manifest.txt").to_str().unwrap().to_string()
}

#[test]
fn sample_counts_windows_of_one_video() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen(dir.path());
    let csv = ok(&[
        "sample",
        "--manifest",
        &manifest,
        "--video",
        "s01_v01",
        "--scales",
        "1.0",
        "--L",
        "9",
        "--stride",
        "1",
    ]);
    assert!(csv.starts_with("video_id,scale,start,end,label,best_iou\n"));
    assert_eq!(csv.lines().count(), 1 + 92);
    let rows = read_samples_csv(csv.as_bytes()).unwrap();
    assert_eq!(rows.len(), 92);
    assert!(rows.iter().any(|r| r.label.is_positive()));
}

#[test]
fn usage_errors_exit_with_two() {
    let out = mespot(&["sample", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(mespot(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(mespot(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = mespot(&["sample", "--manifest", dir.path().join("missing.txt").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("mespot: "));
}

#[test]
fn full_command_chain() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen(&dir.path().join("corpus"));
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let desc = ["--feature", "higo-top", "--bl", "4x4x3", "--ol", "0.2", "--nb", "8"];
    let scales = ["--scales", "0.75,1.0,1.5"];

    let mut args = vec!["extract", "--manifest", &manifest, "--out", "FEATS"];
    let feats = p("feats");
    args[4] = &feats;
    args.extend(desc);
    args.extend(scales);
    ok(&args);
    assert!(dir.path().join("feats/features.fch").exists());

    let model = p("model.lsv");
    ok(&[
        "train",
        "--features",
        &feats,
        "--out",
        &model,
        "--epochs",
        "5",
        "--seed",
        "1",
    ]);
    let m = read_model(File::open(&model).unwrap()).unwrap();
    assert_eq!(m.dim(), 4 * 4 * 3 * 3 * 8);

    let video = dir.path().join("corpus/videos/s01_v01.y8v");
    let dets = p("dets.csv");
    let mut args = vec![
        "spot",
        "--model",
        &model,
        "--video",
        video.to_str().unwrap(),
        "--threshold",
        "-1e9",
        "--out",
        &dets,
    ];
    args.extend(desc);
    args.extend(scales);
    ok(&args);
    let rows = read_detections_csv(File::open(&dets).unwrap()).unwrap();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|(id, d)| id == "s01_v01" && d.interval.offset() < 100));

    let mut wrong = args.clone();
    let pos = wrong.iter().position(|a| *a == "4x4x3").unwrap();
    wrong[pos] = "3x3x3";
    let out = mespot(&wrong);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trained on features"));

    let evals = p("eval");
    let mut args = vec![
        "eval",
        "--manifest",
        &manifest,
        "--out",
        &evals,
        "--protocol",
        "loso",
        "--epochs",
        "5",
    ];
    args.extend(desc);
    args.extend(scales);
    let stdout = ok(&args);
    assert!(stdout.contains("loso-fppv"));
    let stem = "higo-top-bl443-ol02-nb8_loso";
    let fppw = read_curve_csv(File::open(dir.path().join(format!("eval/{stem}_fppw.csv"))).unwrap()).unwrap();
    let fppv = read_curve_csv(File::open(dir.path().join(format!("eval/{stem}_fppv.csv"))).unwrap()).unwrap();
    assert_eq!((fppw.kind, fppv.kind), (CurveKind::PerWindow, CurveKind::PerVideo));
    let summary = dir.path().join(format!("eval/{stem}_summary.csv"));
    let rows = read_summary_csv(File::open(&summary).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].descriptor_name, "higo-top-bl443-ol02-nb8");

    let mut args = vec![
        "eval",
        "--manifest",
        &manifest,
        "--out",
        &evals,
        "--protocol",
        "random",
        "--train-frac",
        "0.5",
        "--reps",
        "2",
        "--epochs",
        "3",
        "--fppw-denominator",
        "all",
    ];
    args.extend(desc);
    args.extend(scales);
    ok(&args);
    assert!(dir
        .path()
        .join("eval/higo-top-bl443-ol02-nb8_random-0.5_summary.csv")
        .exists());

    let svg = p("det.svg");
    let curve = dir.path().join(format!("eval/{stem}_fppv.csv"));
    let table = ok(&[
        "report",
        "--curves",
        curve.to_str().unwrap(),
        "--labels",
        "HIGO",
        "--summary",
        summary.to_str().unwrap(),
        "--out",
        &svg,
    ]);
    assert!(table.contains("loso-fppw"));
    let text = fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg") && text.contains("HIGO ("));
}
