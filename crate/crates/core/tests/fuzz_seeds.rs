//! The checked-in fuzz seeds are valid inputs, so fuzzing starts from the
//! accepting paths of every decoder. Seeds named `reject_*` must be refused.

use std::fmt::Display;
use std::path::{Path, PathBuf};

use lvdisc::cardiac::{PipelineConfig, StudyReport};
use lvdisc::imaging::nifti::parse_nifti;
use lvdisc::imaging::pgm::parse_pgm;
use lvdisc::imaging::png_io::parse_png;
use lvdisc::imaging::{decode_image, StudyManifest};

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| {
            let bytes = std::fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn check<T, E: Display>(p: &Path, r: Result<T, E>) {
    let reject = p
        .file_name()
        .unwrap()
        .to_string_lossy()
        .starts_with("reject_");
    match (r, reject) {
        (Ok(_), false) | (Err(_), true) => {}
        (Ok(_), true) => panic!("{} was accepted", p.display()),
        (Err(e), false) => panic!("{}: {e}", p.display()),
    }
}

fn text(b: &[u8]) -> &str {
    std::str::from_utf8(b).unwrap()
}

#[test]
fn binary_seeds_decode() {
    for (p, b) in seeds("nifti") {
        check(&p, parse_nifti(&b));
    }
    for (p, b) in seeds("pgm") {
        check(&p, parse_pgm(&b));
    }
    for (p, b) in seeds("png") {
        check(&p, parse_png(&b));
    }
    for (p, b) in seeds("decode_image") {
        check(&p, decode_image(&b));
    }
}

#[test]
fn text_seeds_parse() {
    for (p, b) in seeds("pipeline_config") {
        check(&p, PipelineConfig::from_toml(text(&b)));
    }
    for (p, b) in seeds("study_manifest") {
        check(&p, StudyManifest::parse(text(&b)));
    }
    for (p, b) in seeds("report_json") {
        check(&p, StudyReport::from_json(text(&b)));
    }
}
