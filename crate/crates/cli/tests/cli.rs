//! End-to-end tests against the compiled binary: exit codes, determinism
//! across worker counts, and the rule that anything the toolkit emits must
//! validate cleanly.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use faceval_core::formats;
use faceval_core::matching::DetectionRecord;
use faceval_core::protocol::Split;

fn faceval(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_faceval"))
        .args(args)
        .current_dir(dir)
        .env_remove("FACEVAL_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn assert_success(output: &Output, what: &str) {
    assert!(
        output.status.success(),
        "{what} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn synth(dir: &Path, seed: &str) {
    let out = faceval(&["synth", "--seed", seed, "--output-dir", "scenario"], dir);
    assert_success(&out, "synth");
}

#[test]
fn emitted_files_always_validate() {
    let dir = tempfile::TempDir::new().unwrap();
    synth(dir.path(), "7");

    let validate = faceval(
        &[
            "validate",
            "--manifest",
            "scenario/eval-manifest.json",
            "--detections",
            "scenario/detections-det-a.csv",
            "--recognitions",
            "scenario/recognitions-rec-a.csv",
        ],
        dir.path(),
    );
    assert_success(&validate, "validate on emitted files");

    for manifest in [
        "scenario/train-manifest.csv",
        "scenario/eval-manifest-masked.csv",
    ] {
        let out = faceval(
            &["validate", "--manifest", manifest, "--split", "train"],
            dir.path(),
        );
        assert_success(&out, manifest);
    }
}

#[test]
fn exit_codes_follow_the_convention() {
    let dir = tempfile::TempDir::new().unwrap();

    // missing file: i/o failure
    let out = faceval(&["validate", "--detections", "nope.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    // malformed row: validation failure, message cites the line
    fs::write(
        dir.path().join("bad.csv"),
        "IMAGE_ID,X,Y,WIDTH,HEIGHT,CONFIDENCE\ni,0,0,0,5,1\n",
    )
    .unwrap();
    let out = faceval(&["validate", "--detections", "bad.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bad.csv:2"), "stderr: {stderr}");

    // detection referencing an image outside the manifest: validation failure
    synth(dir.path(), "7");
    fs::write(
        dir.path().join("foreign.csv"),
        "IMAGE_ID,X,Y,WIDTH,HEIGHT,CONFIDENCE\nno_such_image,0,0,5,5,1\n",
    )
    .unwrap();
    let out = faceval(
        &[
            "eval-detect",
            "--manifest",
            "scenario/eval-manifest.json",
            "--detections",
            "foreign.csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn reports_are_identical_across_workers_and_runs() {
    let dir = tempfile::TempDir::new().unwrap();
    synth(dir.path(), "7");

    let run = |out_dir: &str, workers: &str| {
        let out = faceval(
            &[
                "eval-detect",
                "--manifest",
                "scenario/eval-manifest.json",
                "--detections",
                "scenario/detections-det-b.csv",
                "--workers",
                workers,
                "--output-dir",
                out_dir,
                "--svg",
            ],
            dir.path(),
        );
        assert_success(&out, "eval-detect");
        let rec = faceval(
            &[
                "eval-recognize",
                "--manifest",
                "scenario/eval-manifest.json",
                "--recognitions",
                "scenario/recognitions-rec-b.csv",
                "--workers",
                workers,
                "--output-dir",
                out_dir,
                "--svg",
            ],
            dir.path(),
        );
        assert_success(&rec, "eval-recognize");
    };
    run("w1", "1");
    run("w1-again", "1");
    run("w4", "4");

    for name in ["froc.csv", "froc.svg", "dir.csv", "dir.svg"] {
        let first = fs::read(dir.path().join("w1").join(name)).unwrap();
        let again = fs::read(dir.path().join("w1-again").join(name)).unwrap();
        let parallel = fs::read(dir.path().join("w4").join(name)).unwrap();
        assert_eq!(first, again, "{name} differs between runs");
        assert_eq!(first, parallel, "{name} differs between worker counts");
    }
}

#[test]
fn perfect_and_empty_submissions_hit_the_rate_extremes() {
    let dir = tempfile::TempDir::new().unwrap();
    synth(dir.path(), "7");

    // a detector that returns every ground-truth box exactly
    let manifest =
        formats::load_manifest(dir.path().join("scenario/eval-manifest.json"), Split::Test)
            .unwrap();
    let perfect: Vec<DetectionRecord> = manifest
        .annotations()
        .iter()
        .map(|a| DetectionRecord::new(a.image_id.clone(), a.bbox, 1.0).unwrap())
        .collect();
    formats::write_detection_file(&perfect, dir.path().join("perfect.csv")).unwrap();
    let out = faceval(
        &[
            "eval-detect",
            "--manifest",
            "scenario/eval-manifest.json",
            "--detections",
            "perfect.csv",
            "--output-dir",
            "perfect",
        ],
        dir.path(),
    );
    assert_success(&out, "eval-detect on a perfect submission");
    let curve = formats::parse_curve_csv(dir.path().join("perfect/froc.csv")).unwrap();
    assert_eq!(
        curve.points[0].rate, 1.0,
        "perfect detector reaches rate 1 at the first budget"
    );

    // an empty submission scores zero everywhere
    formats::write_detection_file(&[], dir.path().join("empty.csv")).unwrap();
    let out = faceval(
        &[
            "eval-detect",
            "--manifest",
            "scenario/eval-manifest.json",
            "--detections",
            "empty.csv",
            "--output-dir",
            "empty",
        ],
        dir.path(),
    );
    assert_success(&out, "eval-detect on an empty submission");
    let curve = formats::parse_curve_csv(dir.path().join("empty/froc.csv")).unwrap();
    assert!(curve.points.iter().all(|p| p.rate == 0.0));
}

#[test]
fn analysis_reports_and_summary_round_trip() {
    let dir = tempfile::TempDir::new().unwrap();
    synth(dir.path(), "7");

    let split = faceval(
        &[
            "split-report",
            "--manifest",
            "scenario/eval-manifest.json",
            "--train-manifest",
            "scenario/train-manifest.csv",
            "--recognitions",
            "scenario/recognitions-rec-a.csv",
            "--output-dir",
            "split",
        ],
        dir.path(),
    );
    assert_success(&split, "split-report");
    let same = formats::parse_curve_csv(dir.path().join("split/dir-same-day.csv")).unwrap();
    let different =
        formats::parse_curve_csv(dir.path().join("split/dir-different-day.csv")).unwrap();
    for (a, b) in same.points.iter().zip(&different.points) {
        assert_eq!(a.threshold, b.threshold, "day curves share thresholds");
    }

    let crr = faceval(
        &[
            "crr-report",
            "--manifest",
            "scenario/eval-manifest.json",
            "--recognitions",
            "scenario/recognitions-rec-b.csv",
            "--output-dir",
            "crr",
        ],
        dir.path(),
    );
    assert_success(&crr, "crr-report");
    for name in ["crr-mit.csv", "crr-mnt.csv", "crr-fa.csv"] {
        assert!(dir.path().join("crr").join(name).exists(), "{name} missing");
    }

    let summarize = faceval(
        &[
            "summarize",
            "--curve",
            "same=split/dir-same-day.csv",
            "--curve",
            "different=split/dir-different-day.csv",
            "--output-dir",
            "table",
        ],
        dir.path(),
    );
    assert_success(&summarize, "summarize");
    assert!(dir.path().join("table/summary.csv").exists());
}

#[test]
fn augmentation_emits_a_manifest_that_validates() {
    let dir = tempfile::TempDir::new().unwrap();
    synth(dir.path(), "7");

    let augment = faceval(
        &[
            "augment",
            "--manifest",
            "scenario/eval-manifest.json",
            "--val-manifest",
            "scenario/eval-manifest.json",
            "--detections",
            "a=scenario/detections-det-a.csv",
            "--detections",
            "b=scenario/detections-det-b.csv",
            "--detections",
            "c=scenario/detections-det-c.csv",
            "--val-detections",
            "a=scenario/detections-det-a.csv",
            "--val-detections",
            "b=scenario/detections-det-b.csv",
            "--val-detections",
            "c=scenario/detections-det-c.csv",
            "--recognitions",
            "ra=scenario/recognitions-rec-a.csv",
            "--recognitions",
            "rb=scenario/recognitions-rec-b.csv",
            "--recognitions",
            "rc=scenario/recognitions-rec-c.csv",
            "--calibration-budget",
            "50",
            "--output-dir",
            "aug",
        ],
        dir.path(),
    );
    assert_success(&augment, "augment");
    assert!(dir.path().join("aug/audit.log").exists());

    let validate = faceval(
        &["validate", "--manifest", "aug/augmented-manifest.json"],
        dir.path(),
    );
    assert_success(&validate, "validate on the augmented manifest");
}

/// The emitted reports agree point-for-point with the brute-force reference
/// computed from the same files.
#[test]
fn emitted_reports_match_the_exhaustive_reference() {
    use faceval_core::curves::{CurveKind, DEFAULT_BUDGETS};
    use faceval_core::synth::oracle::{
        oracle_curve, oracle_match_detection, oracle_match_recognition,
    };

    let dir = tempfile::TempDir::new().unwrap();
    synth(dir.path(), "13");
    for (command, submission, flag, report) in [
        (
            "eval-detect",
            "scenario/detections-det-c.csv",
            "--detections",
            "froc",
        ),
        (
            "eval-recognize",
            "scenario/recognitions-rec-c.csv",
            "--recognitions",
            "dir",
        ),
    ] {
        let out = faceval(
            &[
                command,
                "--manifest",
                "scenario/eval-manifest.json",
                flag,
                submission,
                "--output-dir",
                "out",
            ],
            dir.path(),
        );
        assert_success(&out, command);

        let manifest =
            formats::load_manifest(dir.path().join("scenario/eval-manifest.json"), Split::Test)
                .unwrap();
        let (partition, kind) = if command == "eval-detect" {
            let records = formats::parse_detection_file(dir.path().join(submission)).unwrap();
            (
                oracle_match_detection(&manifest, &records).unwrap(),
                CurveKind::Froc,
            )
        } else {
            let file = formats::parse_recognition_file(dir.path().join(submission)).unwrap();
            (
                oracle_match_recognition(&manifest, &file.records).unwrap(),
                CurveKind::Dir,
            )
        };
        let reference = oracle_curve(&partition, &DEFAULT_BUDGETS, kind).unwrap();
        let emitted =
            formats::parse_curve_csv(dir.path().join(format!("out/{report}.csv"))).unwrap();
        assert_eq!(emitted.denominator, reference.denominator);
        for (e, r) in emitted.points.iter().zip(&reference.points) {
            assert_eq!(e.budget, r.budget);
            assert_eq!(e.threshold, r.threshold);
            assert_eq!(e.positive_count, r.positive_count);
            assert_eq!(e.rate, r.rate);
            assert_eq!(e.saturated, r.saturated);
        }
    }
}

#[test]
fn output_dir_env_var_is_honored() {
    let dir = tempfile::TempDir::new().unwrap();
    synth(dir.path(), "7");
    let out = Command::new(env!("CARGO_BIN_EXE_faceval"))
        .args([
            "eval-detect",
            "--manifest",
            "scenario/eval-manifest.json",
            "--detections",
            "scenario/detections-det-a.csv",
        ])
        .current_dir(dir.path())
        .env("FACEVAL_OUTPUT_DIR", "from-env")
        .output()
        .unwrap();
    assert_success(&out, "eval-detect with env output dir");
    assert!(dir.path().join("from-env/froc.csv").exists());
}
