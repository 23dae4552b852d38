use lvdisc::cardiac::*;
use lvdisc::imaging::Phase;
use lvdisc::phantom::{lv_template, phantom_study, PhantomSpec};

fn run(
    spec: &PhantomSpec,
    noise: &[(usize, usize)],
) -> (lvdisc::phantom::PhantomStudy, StudyReport) {
    let ph = phantom_study(spec, noise);
    let report = segment_study(&ph.study, &lv_template(32), &PipelineConfig::default(), &[]);
    (ph, report)
}

#[test]
fn phantom_ef_within_two_points() {
    let (ph, report) = run(&PhantomSpec::default(), &[]);
    assert!(!report.has_failures(), "{:?}", report.failures);
    let ef = report.volumes.ef_percent.unwrap();
    let truth = ph.analytic_ef();
    assert!((ef - truth).abs() <= 2.0, "EF {ef:.2} vs {truth:.2}");
    // both volume variants agree when nothing failed
    assert_eq!(report.volumes, report.volumes_paired_ok);
    let m = report.metrics.unwrap();
    assert!(m.all.pooled.dice > 0.95, "{:?}", m.all.pooled);
}

#[test]
fn ef_is_invariant_under_spacing_scale() {
    let ph = phantom_study(&PhantomSpec::default(), &[]);
    let tmpl = lv_template(32);
    let cfg = PipelineConfig::default();
    let base = segment_study(&ph.study, &tmpl, &cfg, &[]);
    for k in [0.5, 2.0] {
        let scaled = segment_study(&ph.study.scaled_spacing(k), &tmpl, &cfg, &[]);
        assert_eq!(
            scaled.volumes.ef_percent, base.volumes.ef_percent,
            "k = {k}"
        );
        assert_eq!(scaled.volumes.edv_mm3, base.volumes.edv_mm3 * k * k * k);
        assert_eq!(scaled.slices, base.slices);
    }
}

#[test]
fn noise_slice_fails_alone() {
    let (_, report) = run(&PhantomSpec::default(), &[(2, 1)]);
    assert_eq!(report.failures.len(), 1);
    let f = report.failures[0];
    assert_eq!(
        (f.z, f.phase, f.status),
        (2, Phase::Es, SliceStatus::LocalizationFailed)
    );
    for s in &report.slices {
        if (s.z, s.phase) != (2, Phase::Es) {
            assert_eq!(s.status, SliceStatus::Ok, "z={} {}", s.z, s.phase);
        }
    }
    // the paired variant drops z = 2 from both phases
    assert_eq!(
        report.volumes_paired_ok.slices_used[0] + 1,
        report.volumes.slices_used[0]
    );
    assert!(report.volumes.ef_percent.is_some());
}

#[test]
fn pipeline_is_deterministic() {
    let spec = PhantomSpec {
        n_z: 4,
        ..PhantomSpec::default()
    };
    let (_, a) = run(&spec, &[]);
    let (_, b) = run(&spec, &[]);
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn report_json_round_trip() {
    let spec = PhantomSpec {
        n_z: 3,
        ..PhantomSpec::default()
    };
    let (_, report) = run(&spec, &[(0, 0)]);
    assert_eq!(report.schema, REPORT_SCHEMA);
    let text = report.to_json();
    let back = StudyReport::from_json(&text).unwrap();
    assert_eq!(back, report);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["slices"][0]["status"], "localization_failed");
    assert!(
        StudyReport::from_json(&text.replacen("\"schema\"", "\"bogus\": 1, \"schema\"", 1))
            .is_err()
    );
}

#[test]
fn seeds_override_auto_mode() {
    let spec = PhantomSpec {
        n_z: 4,
        ..PhantomSpec::default()
    };
    let ph = phantom_study(&spec, &[]);
    let seeds = [Seed {
        x: 63.0,
        y: 61.0,
        z: Some(1),
        phase: Some(Phase::Ed),
    }];
    let report = segment_study(
        &ph.study,
        &lv_template(32),
        &PipelineConfig::default(),
        &seeds,
    );
    let s = report.slice(1, Phase::Ed).unwrap();
    assert_eq!((s.mode, s.status), (Mode::Seeded, SliceStatus::Ok));
    assert_eq!(s.seed, Some([63.0, 61.0]));
    assert_eq!(report.slice(1, Phase::Es).unwrap().mode, Mode::Auto);
}

#[test]
fn assemble_reports_missing_slices() {
    let spec = PhantomSpec {
        n_z: 3,
        ..PhantomSpec::default()
    };
    let ph = phantom_study(&spec, &[]);
    let cfg = PipelineConfig::default();
    let full = segment_study(&ph.study, &lv_template(32), &cfg, &[]);
    let partial: Vec<_> = full
        .slices
        .iter()
        .filter(|s| !(s.z == 1 && s.phase == Phase::Es) && !(s.z == 2 && s.phase == Phase::Ed))
        .cloned()
        .collect();
    let err = assemble_report(&ph.study, partial, &cfg).unwrap_err();
    assert_eq!(err.missing, vec![(2, Phase::Ed), (1, Phase::Es)]);
    assert!(
        err.to_string().contains("z=1 ES") || err.to_string().contains("z=1 es"),
        "{err}"
    );

    // reversed order gives the same report
    let mut rev = full.slices.clone();
    rev.reverse();
    assert_eq!(assemble_report(&ph.study, rev, &cfg).unwrap(), full);
}
