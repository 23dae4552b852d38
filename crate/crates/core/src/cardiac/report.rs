use serde::{Deserialize, Serialize};

use super::{
    ejection_fraction, score, slice_volume_stack, PipelineConfig, SliceResult, SliceStatus,
};
use crate::error::Result;
use crate::imaging::{BinaryMask, CineStudy, Phase};
use crate::metrics::{self, Aggregate};

/// Identifier written into every report; bumped on breaking changes.
pub const REPORT_SCHEMA: &str = "lvdisc.report/v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryInfo {
    pub width: usize,
    pub height: usize,
    pub n_z: usize,
    /// Pixel spacing x, y and slice spacing, mm.
    pub spacing_mm: [f64; 3],
    pub ed_phase: usize,
    pub es_phase: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeSummary {
    pub edv_mm3: f64,
    pub esv_mm3: f64,
    /// `None` when EDV is zero.
    pub ef_percent: Option<f64>,
    pub esv_exceeds_edv: bool,
    /// Slices (per phase) that entered the sums.
    pub slices_used: [usize; 2],
}

impl VolumeSummary {
    fn from_stacks(ed: &[BinaryMask], es: &[BinaryMask], spacing: (f64, f64, f64)) -> Self {
        let edv = slice_volume_stack(ed, spacing);
        let esv = slice_volume_stack(es, spacing);
        let ef = ejection_fraction(edv, esv).ok();
        Self {
            edv_mm3: edv,
            esv_mm3: esv,
            ef_percent: ef.map(|e| e.percent),
            esv_exceeds_edv: esv > edv,
            slices_used: [
                ed.iter().filter(|m| m.count() > 0).count(),
                es.iter().filter(|m| m.count() > 0).count(),
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSummary {
    pub edv_mm3: f64,
    pub esv_mm3: f64,
    pub ef_percent: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSummary {
    /// Over annotated slices (nonempty label) of both phases.
    pub all: Aggregate,
    pub ed: Option<Aggregate>,
    pub es: Option<Aggregate>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailedSlice {
    pub z: usize,
    pub phase: Phase,
    pub status: SliceStatus,
}

/// Versioned study report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyReport {
    pub schema: String,
    pub study_id: String,
    pub generator: String,
    pub geometry: GeometryInfo,
    pub config: PipelineConfig,
    /// Headline volumes: every slice counts, failed ones as empty.
    pub volumes: VolumeSummary,
    /// Only z levels where both phases are ok.
    pub volumes_paired_ok: VolumeSummary,
    pub truth: Option<TruthSummary>,
    /// `ef_percent − truth.ef_percent`, percentage points.
    pub ef_error: Option<f64>,
    pub metrics: Option<MetricsSummary>,
    pub failures: Vec<FailedSlice>,
    pub slices: Vec<SliceResult>,
}

impl StudyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| crate::Error::Config(format!("report json: {e}")))
    }

    pub fn has_failures(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn slice(&self, z: usize, phase: Phase) -> Option<&SliceResult> {
        self.slices.iter().find(|s| s.z == z && s.phase == phase)
    }
}

/// `(z, phase)` pairs that have no result yet.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingSlices {
    pub missing: Vec<(usize, Phase)>,
}

impl std::fmt::Display for MissingSlices {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let list: Vec<String> = self
            .missing
            .iter()
            .map(|(z, p)| format!("z={z} {p}"))
            .collect();
        write!(f, "no result for {}", list.join(", "))
    }
}

/// Builds a report from one result per `(z, phase)` of the ED and ES phases.
/// Results may come in any order; duplicates keep the last. Metrics are
/// recomputed from the study's labels.
pub fn assemble_report(
    study: &CineStudy,
    results: Vec<SliceResult>,
    cfg: &PipelineConfig,
) -> std::result::Result<StudyReport, MissingSlices> {
    let n_z = study.n_z();
    let mut grid: Vec<Option<SliceResult>> = vec![None; 2 * n_z];
    let idx = |z: usize, p: Phase| p as usize * n_z + z;
    for r in results {
        if r.z < n_z {
            let i = idx(r.z, r.phase);
            grid[i] = Some(r);
        }
    }
    let missing: Vec<(usize, Phase)> = Phase::BOTH
        .iter()
        .flat_map(|&p| (0..n_z).map(move |z| (z, p)))
        .filter(|&(z, p)| grid[idx(z, p)].is_none())
        .collect();
    if !missing.is_empty() {
        return Err(MissingSlices { missing });
    }
    let mut slices: Vec<SliceResult> = grid.into_iter().flatten().collect();
    for r in &mut slices {
        r.in_volume = r.status == SliceStatus::Ok && r.area_px as f64 >= cfg.area_min;
        r.counts = None;
        r.metrics = None;
        score(study, r);
    }

    let spacing = study.spacing();
    let stack = |p: Phase, paired: bool| -> Vec<BinaryMask> {
        (0..n_z)
            .map(|z| {
                let r = &slices[idx(z, p)];
                let both_ok = Phase::BOTH
                    .iter()
                    .all(|&q| slices[idx(z, q)].status == SliceStatus::Ok);
                if paired && !both_ok {
                    BinaryMask::new(r.mask.width(), r.mask.height())
                } else {
                    r.effective_mask()
                }
            })
            .collect()
    };
    let volumes =
        VolumeSummary::from_stacks(&stack(Phase::Ed, false), &stack(Phase::Es, false), spacing);
    let volumes_paired_ok =
        VolumeSummary::from_stacks(&stack(Phase::Ed, true), &stack(Phase::Es, true), spacing);

    let truth = study.has_labels().then(|| {
        let labels = |p: Phase| -> Vec<BinaryMask> {
            (0..n_z)
                .map(|z| {
                    study
                        .label(z, study.phase_index(p))
                        .expect("labels present")
                        .clone()
                })
                .collect()
        };
        let edv = slice_volume_stack(&labels(Phase::Ed), spacing);
        let esv = slice_volume_stack(&labels(Phase::Es), spacing);
        TruthSummary {
            edv_mm3: edv,
            esv_mm3: esv,
            ef_percent: ejection_fraction(edv, esv).ok().map(|e| e.percent),
        }
    });
    let ef_error = match (&truth, volumes.ef_percent) {
        (
            Some(TruthSummary {
                ef_percent: Some(t),
                ..
            }),
            Some(ef),
        ) => Some(ef - t),
        _ => None,
    };

    let annotated = |phase: Option<Phase>| -> Vec<metrics::ConfusionCounts> {
        slices
            .iter()
            .filter(|r| phase.is_none_or(|p| p == r.phase))
            .filter(|r| {
                study
                    .label(r.z, study.phase_index(r.phase))
                    .is_some_and(|m| m.count() > 0)
            })
            .filter_map(|r| r.counts)
            .collect()
    };
    let metrics = metrics::aggregate(&annotated(None))
        .ok()
        .map(|all| MetricsSummary {
            all,
            ed: metrics::aggregate(&annotated(Some(Phase::Ed))).ok(),
            es: metrics::aggregate(&annotated(Some(Phase::Es))).ok(),
        });

    let failures = slices
        .iter()
        .filter(|r| r.status != SliceStatus::Ok)
        .map(|r| FailedSlice {
            z: r.z,
            phase: r.phase,
            status: r.status,
        })
        .collect();

    Ok(StudyReport {
        schema: REPORT_SCHEMA.to_string(),
        study_id: study.id.clone(),
        generator: format!("lvdisc {}", env!("CARGO_PKG_VERSION")),
        geometry: GeometryInfo {
            width: study.width(),
            height: study.height(),
            n_z,
            spacing_mm: [spacing.0, spacing.1, spacing.2],
            ed_phase: study.ed_phase(),
            es_phase: study.es_phase(),
        },
        config: cfg.clone(),
        volumes,
        volumes_paired_ok,
        truth,
        ef_error,
        metrics,
        failures,
        slices,
    })
}
