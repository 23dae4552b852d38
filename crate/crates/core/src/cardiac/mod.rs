//! Study-level pipeline: per-slice localization and fitting at the two end
//! phases, stacked-disc volumes and the ejection fraction.

mod overlay;
mod report;

pub use overlay::{overlay_png, render_overlay};
pub use report::{
    assemble_report, FailedSlice, GeometryInfo, MetricsSummary, MissingSlices, StudyReport,
    TruthSummary, VolumeSummary, REPORT_SCHEMA,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ead::{self, AxisBounds, DescentConfig, DiscParams, Termination};
use crate::error::{Error, Result};
use crate::imaging::{BinaryMask, CineStudy, GrayImage, Phase};
use crate::locate::{self, MatchConfig, MatchResult, Template};
use crate::metrics::{self, ConfusionCounts, MetricSet};

/// `Σ_z |mask_z| · Δx · Δy · Δz` in mm³.
pub fn slice_volume_stack<'a>(
    masks: impl IntoIterator<Item = &'a BinaryMask>,
    spacing: (f64, f64, f64),
) -> f64 {
    let (sx, sy, sz) = spacing;
    let pixels: usize = masks.into_iter().map(BinaryMask::count).sum();
    pixels as f64 * sx * sy * sz
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EjectionFraction {
    pub percent: f64,
    /// ESV above EDV: not physiological, usually a segmentation failure.
    pub esv_exceeds_edv: bool,
}

/// `(EDV − ESV) / EDV · 100`.
pub fn ejection_fraction(edv: f64, esv: f64) -> Result<EjectionFraction> {
    if !(edv > 0.0 && edv.is_finite()) {
        return Err(Error::UndefinedEf(edv));
    }
    Ok(EjectionFraction {
        percent: (edv - esv) / edv * 100.0,
        esv_exceeds_edv: esv > edv,
    })
}

/// Zeroes masks smaller than `area_min` pixels (disc fits that overshoot past
/// the apex or base).
pub fn apex_base_policy(masks: &[BinaryMask], area_min: f64) -> Vec<BinaryMask> {
    masks
        .iter()
        .map(|m| {
            if (m.count() as f64) < area_min {
                BinaryMask::new(m.width(), m.height())
            } else {
                m.clone()
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Auto,
    Seeded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceStatus {
    Ok,
    LocalizationFailed,
    FitFailed,
}

/// A click in original image coordinates. Without `z`/`phase` it applies to
/// every slice it is not overridden for.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub z: Option<usize>,
    #[serde(default)]
    pub phase: Option<Phase>,
}

impl Seed {
    fn specificity(&self, z: usize, phase: Phase) -> Option<u8> {
        let z_ok = self.z.is_none_or(|s| s == z);
        let p_ok = self.phase.is_none_or(|s| s == phase);
        (z_ok && p_ok).then(|| self.z.is_some() as u8 * 2 + self.phase.is_some() as u8)
    }

    /// Most specific seed covering `(z, phase)`; later entries win ties.
    pub fn pick(seeds: &[Seed], z: usize, phase: Phase) -> Option<&Seed> {
        let mut best: Option<(u8, &Seed)> = None;
        for s in seeds {
            if let Some(k) = s.specificity(z, phase) {
                if best.is_none_or(|(b, _)| k >= b) {
                    best = Some((k, s));
                }
            }
        }
        best.map(|(_, s)| s)
    }
}

/// Settings for [`segment_study`], loadable from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub descent: DescentConfig,
    pub matching: MatchConfig,
    /// Slices whose mask has fewer pixels are left out of the volumes.
    pub area_min: f64,
    /// Fits with `|E|` below this are flagged weak.
    pub weak_energy: f64,
    /// Vertices of the reported contour polyline.
    pub contour_points: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            descent: DescentConfig::default(),
            matching: MatchConfig::default(),
            area_min: 20.0,
            weak_energy: 0.3,
            contour_points: 128,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.descent.validate()?;
        self.matching.scales()?;
        if !(self.area_min >= 0.0 && self.area_min.is_finite()) {
            return Err(Error::Config(format!("area_min {}", self.area_min)));
        }
        if !(self.weak_energy >= 0.0) {
            return Err(Error::Config(format!("weak_energy {}", self.weak_energy)));
        }
        if self.contour_points < 8 {
            return Err(Error::Config(format!(
                "contour_points {} < 8",
                self.contour_points
            )));
        }
        Ok(())
    }
}

/// Outcome for one `(z, phase)` slice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceResult {
    pub z: usize,
    pub phase: Phase,
    pub mode: Mode,
    pub status: SliceStatus,
    #[serde(rename = "match", default, skip_serializing_if = "Option::is_none")]
    pub match_result: Option<MatchResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<DiscParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<DiscParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<Termination>,
    /// `|E|` below the weak threshold: probably not on a bright pool.
    pub weak: bool,
    pub area_px: usize,
    /// Counted in the volumes (ok and at least `area_min` pixels).
    pub in_volume: bool,
    pub mask: BinaryMask,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<ConfusionCounts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl SliceResult {
    /// The mask that enters volumes and metrics.
    pub fn effective_mask(&self) -> BinaryMask {
        if self.in_volume {
            self.mask.clone()
        } else {
            BinaryMask::new(self.mask.width(), self.mask.height())
        }
    }

    /// Inner-ellipse polyline of the fitted disc, closed.
    pub fn contour(&self, n: usize) -> Vec<[f64; 2]> {
        self.params.map(|p| ead::contour(&p, n)).unwrap_or_default()
    }

    fn failed(z: usize, phase: Phase, mode: Mode, status: SliceStatus, w: usize, h: usize) -> Self {
        Self {
            z,
            phase,
            mode,
            status,
            match_result: None,
            seed: None,
            init: None,
            params: None,
            energy: None,
            iterations: 0,
            termination: None,
            weak: false,
            area_px: 0,
            in_volume: false,
            mask: BinaryMask::new(w, h),
            metrics: None,
            counts: None,
            message: None,
        }
    }
}

/// How a slice's disc is initialized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SliceInit {
    Auto,
    Seed { x: f64, y: f64 },
}

/// Localize (or take the seed), fit and rasterize one slice. Never fails:
/// problems are reported through the status.
pub fn segment_slice(
    img: &GrayImage,
    tmpl: &Template,
    cfg: &PipelineConfig,
    z: usize,
    phase: Phase,
    init: SliceInit,
) -> SliceResult {
    let (w, h) = (img.width(), img.height());
    let (mode, start, match_result, seed) = match init {
        SliceInit::Auto => {
            let m = match locate::match_multiscale(img, tmpl, &cfg.matching) {
                Ok(m) => m,
                Err(e) => {
                    let mut r = SliceResult::failed(
                        z,
                        phase,
                        Mode::Auto,
                        SliceStatus::LocalizationFailed,
                        w,
                        h,
                    );
                    r.message = Some(e.to_string());
                    return r;
                }
            };
            if m.low_confidence {
                let mut r = SliceResult::failed(
                    z,
                    phase,
                    Mode::Auto,
                    SliceStatus::LocalizationFailed,
                    w,
                    h,
                );
                r.message = Some(format!(
                    "zeta {:.3} below threshold {}",
                    m.zeta, cfg.matching.threshold
                ));
                r.match_result = Some(m);
                return r;
            }
            let r = tmpl.lv_radius() / m.scale;
            (
                Mode::Auto,
                DiscParams::new(r, r, 0.0, m.center_x, m.center_y),
                Some(m),
                None,
            )
        }
        SliceInit::Seed { x, y } => {
            let (s, _) = locate::scale_at(img, tmpl, &cfg.matching, x, y).unwrap_or((1.0, 0.0));
            let r = tmpl.lv_radius() / s;
            (
                Mode::Seeded,
                DiscParams::new(r, r, 0.0, x, y),
                None,
                Some([x, y]),
            )
        }
    };

    let bounds = cfg
        .descent
        .bounds
        .unwrap_or_else(|| AxisBounds::for_image(w, h));
    let start = bounds.project(start);
    let mut result = SliceResult::failed(z, phase, mode, SliceStatus::FitFailed, w, h);
    result.match_result = match_result;
    result.seed = seed;
    result.init = Some(start);

    match ead::fit(img, start, &cfg.descent) {
        Ok((p, trace)) => {
            let mask = ead::rasterize(&p, w, h);
            let energy = trace.best_energy();
            result.params = Some(p);
            result.energy = Some(energy);
            result.iterations = trace.iterations;
            result.termination = Some(trace.termination);
            result.weak = energy.abs() < cfg.weak_energy;
            result.area_px = mask.count();
            result.mask = mask;
            if trace.termination == Termination::Degenerate {
                result.message = Some("disc collapsed to the minimum axis length".into());
            } else if result.area_px == 0 {
                result.message = Some("fitted disc covers no pixel centers".into());
            } else if bounds.contains(&p) {
                result.status = SliceStatus::Ok;
            }
            result.in_volume =
                result.status == SliceStatus::Ok && result.area_px as f64 >= cfg.area_min;
        }
        Err(e) => result.message = Some(e.to_string()),
    }
    result
}

/// Segments every slice of the ED and ES phases in parallel and assembles
/// the report. Slices get the most specific matching seed, or run in auto
/// mode when none applies.
pub fn segment_study(
    study: &CineStudy,
    tmpl: &Template,
    cfg: &PipelineConfig,
    seeds: &[Seed],
) -> StudyReport {
    let jobs: Vec<(usize, Phase)> = Phase::BOTH
        .iter()
        .flat_map(|&ph| (0..study.n_z()).map(move |z| (z, ph)))
        .collect();
    let results: Vec<SliceResult> = jobs
        .par_iter()
        .map(|&(z, phase)| {
            let img = study
                .slice(z, study.phase_index(phase))
                .expect("index in range");
            let init = match Seed::pick(seeds, z, phase) {
                Some(s) => SliceInit::Seed { x: s.x, y: s.y },
                None => SliceInit::Auto,
            };
            segment_slice(img, tmpl, cfg, z, phase, init)
        })
        .collect();
    assemble_report(study, results, cfg).expect("every slice has a result")
}

/// Attaches overlap metrics against the study's labels, if it has them.
pub(crate) fn score(study: &CineStudy, r: &mut SliceResult) {
    if let Some(truth) = study.label(r.z, study.phase_index(r.phase)) {
        if let Ok(c) = metrics::confusion(&r.effective_mask(), truth) {
            r.counts = Some(c);
            r.metrics = Some(metrics::metric_set(&c));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom;

    #[test]
    fn volume_arithmetic() {
        // areas 100, 200, 100 mm² at 1 mm² pixels, 10 mm slices
        let masks: Vec<BinaryMask> = [100, 200, 100]
            .iter()
            .map(|&n| BinaryMask::from_fn(20, 20, |x, y| y * 20 + x < n))
            .collect();
        assert_eq!(slice_volume_stack(&masks, (1.0, 1.0, 10.0)), 4000.0);
        let empty = vec![BinaryMask::new(4, 4); 3];
        assert_eq!(slice_volume_stack(&empty, (1.0, 1.0, 10.0)), 0.0);
    }

    #[test]
    fn ellipsoid_stack_volume() {
        // semi-axes 20, 20 px in plane, 5 slices of half length, unit spacing
        let (a, c) = (20.0, 5.0);
        let masks: Vec<BinaryMask> = (-6..=6)
            .map(|k: i32| {
                let t = 1.0 - (k as f64 / c).powi(2);
                let r = a * t.max(0.0).sqrt();
                phantom::ellipse_mask(&DiscParams::circle(r, 32.0, 32.0), 64, 64)
            })
            .collect();
        let v = slice_volume_stack(&masks, (1.0, 1.0, 1.0));
        let analytic = 4.0 / 3.0 * std::f64::consts::PI * a * a * c;
        assert!(
            ((v - analytic) / analytic).abs() < 0.05,
            "{v} vs {analytic}"
        );
    }

    #[test]
    fn ef_values() {
        assert_eq!(ejection_fraction(100.0, 40.0).unwrap().percent, 60.0);
        assert_eq!(ejection_fraction(100.0, 100.0).unwrap().percent, 0.0);
        let odd = ejection_fraction(50.0, 80.0).unwrap();
        assert!(odd.esv_exceeds_edv && odd.percent < 0.0);
        assert!(matches!(
            ejection_fraction(0.0, 10.0),
            Err(Error::UndefinedEf(_))
        ));
    }

    #[test]
    fn apex_policy() {
        let big = BinaryMask::from_fn(16, 16, |x, y| x < 8 && y < 8);
        let blob = BinaryMask::from_fn(16, 16, |x, y| x < 5 && y == 0);
        let out = apex_base_policy(&[blob.clone(), big.clone(), blob], 20.0);
        assert_eq!(out[0].count(), 0);
        assert_eq!(out[1], big);
        assert_eq!(out[2].count(), 0);
        let kept = apex_base_policy(std::slice::from_ref(&big), 20.0);
        assert_eq!(kept, vec![big]);
    }

    #[test]
    fn apex_policy_reduces_volume_error() {
        // the ellipsoid ends inside the stack; beyond its tips the "fits" are
        // small spurious blobs
        let spec = phantom::PhantomSpec {
            n_z: 12,
            ..Default::default()
        };
        let ps = phantom::phantom_study(&spec, &[]);
        assert!(ps.ed[0].is_none() && ps.ed[11].is_none());
        let truth: Vec<BinaryMask> = (0..spec.n_z)
            .map(|z| ps.study.label(z, 0).unwrap().clone())
            .collect();
        let fitted: Vec<BinaryMask> = ps
            .ed
            .iter()
            .zip(&truth)
            .map(|(p, t)| match p {
                Some(_) => t.clone(),
                None => BinaryMask::from_fn(spec.width, spec.height, |x, y| {
                    (60..64).contains(&x) && (60..64).contains(&y)
                }),
            })
            .collect();
        let sp = (spec.pixel_mm, spec.pixel_mm, spec.slice_mm);
        let target = slice_volume_stack(&truth, sp);
        let raw = slice_volume_stack(&fitted, sp);
        let filtered = slice_volume_stack(&apex_base_policy(&fitted, 20.0), sp);
        assert!(raw > target);
        assert!((filtered - target).abs() < (raw - target).abs());
    }

    #[test]
    fn seed_selection() {
        let seeds = [
            Seed {
                x: 1.0,
                y: 1.0,
                z: None,
                phase: None,
            },
            Seed {
                x: 2.0,
                y: 2.0,
                z: Some(3),
                phase: None,
            },
            Seed {
                x: 3.0,
                y: 3.0,
                z: Some(3),
                phase: Some(Phase::Es),
            },
        ];
        assert_eq!(Seed::pick(&seeds, 0, Phase::Ed).unwrap().x, 1.0);
        assert_eq!(Seed::pick(&seeds, 3, Phase::Ed).unwrap().x, 2.0);
        assert_eq!(Seed::pick(&seeds, 3, Phase::Es).unwrap().x, 3.0);
        assert!(Seed::pick(&seeds[1..], 0, Phase::Ed).is_none());
    }

    #[test]
    fn config_toml() {
        let cfg = PipelineConfig::from_toml(
            "area_min = 10\n[descent]\nmax_iter = 80\n[matching]\nthreshold = 0.5\n",
        )
        .unwrap();
        assert_eq!(cfg.area_min, 10.0);
        assert_eq!(cfg.descent.max_iter, 80);
        assert_eq!(cfg.matching.threshold, 0.5);
        assert!(PipelineConfig::from_toml("contour_points = 3").is_err());
        assert!(PipelineConfig::from_toml("nope = 1").is_err());
    }

    #[test]
    fn seeded_slice_on_phantom_disc() {
        let truth = DiscParams::new(14.0, 11.0, 0.5, 60.0, 58.0);
        let img = phantom::lv_slice(128, 128, Some(&truth), 1.5, 0.01, 3);
        let tmpl = phantom::lv_template(32);
        let r = segment_slice(
            &img,
            &tmpl,
            &PipelineConfig::default(),
            0,
            Phase::Ed,
            SliceInit::Seed { x: 62.0, y: 60.0 },
        );
        assert_eq!(r.status, SliceStatus::Ok, "{r:?}");
        let p = r.params.unwrap();
        assert!(
            (p.xc - truth.xc).abs() < 1.0 && (p.yc - truth.yc).abs() < 1.0,
            "{p:?}"
        );
        assert!(!r.weak);
    }

    #[test]
    fn seed_on_flat_background_is_weak() {
        let img = GrayImage::filled(96, 96, 0.35);
        let tmpl = phantom::lv_template(32);
        let r = segment_slice(
            &img,
            &tmpl,
            &PipelineConfig::default(),
            0,
            Phase::Ed,
            SliceInit::Seed { x: 40.0, y: 40.0 },
        );
        assert!(r.weak);
    }
}
