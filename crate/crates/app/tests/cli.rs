use std::path::Path;
use std::process::{Command, Output};

use lvdisc::cardiac::StudyReport;

fn lvdisc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lvdisc"))
        .args(args)
        .output()
        .unwrap()
}

fn phantom(dir: &Path, extra: &[&str]) {
    let out = lvdisc(&[&["phantom", "--out", dir.to_str().unwrap()], extra].concat());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn segment(study: &Path, out: &Path, extra: &[&str]) -> Output {
    let tmpl = study.join("template.pgm");
    let base = [
        "segment",
        "--input",
        study.to_str().unwrap(),
        "--template",
        tmpl.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    lvdisc(&[&base[..], extra].concat())
}

#[test]
fn phantom_fixture_segments_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let (study, out) = (dir.path().join("study"), dir.path().join("out"));
    phantom(&study, &[]);
    let o = segment(&study, &out, &[]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let report =
        StudyReport::from_json(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report.volumes.ef_percent.is_some());
    assert!(String::from_utf8_lossy(&o.stdout).contains("EF "));
    assert!(out.join("overlays/z03_es.png").is_file());
    // the input directory is left as it was
    let mut names: Vec<_> = std::fs::read_dir(&study)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "image.nii.gz",
            "labels.nii.gz",
            "study.toml",
            "template.pgm"
        ]
    );
}

#[test]
fn induced_failure_exits_two_and_lists_slices() {
    let dir = tempfile::tempdir().unwrap();
    let (study, out) = (dir.path().join("study"), dir.path().join("out"));
    phantom(&study, &["--noise-slice", "2,es", "--noise-slice", "5,ed"]);
    let o = segment(&study, &out, &["--no-overlays"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("z=2 es localization_failed"), "{err}");
    assert!(err.contains("z=5 ed localization_failed"), "{err}");
    assert!(out.join("report.json").is_file());
    assert!(!out.join("overlays").exists());
}

#[test]
fn seeded_mode_marks_seeded_slices() {
    let dir = tempfile::tempdir().unwrap();
    let (study, out) = (dir.path().join("study"), dir.path().join("out"));
    phantom(&study, &[]);
    let o = segment(
        &study,
        &out,
        &[
            "--mode",
            "seeded",
            "--seed",
            "63,61",
            "--z",
            "4",
            "--phase",
            "ed",
            "--no-overlays",
        ],
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let report =
        StudyReport::from_json(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let seeded: Vec<_> = report
        .slices
        .iter()
        .filter(|s| s.mode == lvdisc::cardiac::Mode::Seeded)
        .map(|s| (s.z, s.phase))
        .collect();
    assert_eq!(seeded, [(4, lvdisc::imaging::Phase::Ed)]);
}

#[test]
fn fatal_errors_exit_one_and_name_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let study = dir.path().join("study");
    phantom(&study, &[]);
    let s = study.to_str().unwrap();

    let o = lvdisc(&[
        "segment",
        "--input",
        s,
        "--template",
        "/no/such.pgm",
        "--out",
        "o",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--template"));

    let o = lvdisc(&["segment", "--input", s, "--out", "o"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--template"));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "contour_points = 3\n").unwrap();
    let out = dir.path().join("out");
    let o = segment(&study, &out, &["--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--config"));

    assert_eq!(lvdisc(&["bogus"]).status.code(), Some(1));
    assert_eq!(lvdisc(&["--help"]).status.code(), Some(0));
}
