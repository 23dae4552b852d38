//! Left-ventricle localization by normalized cross-correlation, swept over
//! downscaled copies of the search image.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::GrayImage;

/// Template image `T` together with the blood-pool radius it depicts.
#[derive(Clone, Debug, PartialEq)]
pub struct Template {
    image: GrayImage,
    energy: f64,
    lv_radius: f64,
    note: Option<String>,
}

impl Template {
    /// Wraps an image; fails when `Σ T² = 0`. The pool radius defaults to a
    /// quarter of the template width.
    pub fn new(image: GrayImage) -> Result<Self> {
        let energy: f64 = image.pixels().iter().map(|v| v * v).sum();
        if !(energy > 0.0) {
            return Err(Error::Size("template has zero energy".into()));
        }
        let lv_radius = 0.25 * image.width() as f64;
        Ok(Self {
            image,
            energy,
            lv_radius,
            note: None,
        })
    }

    /// Loads a template image (any format [`decode_image`] reads) and takes
    /// the pool radius from the area at or above half the peak intensity.
    ///
    /// [`decode_image`]: crate::imaging::decode_image
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let t = Self::new(crate::imaging::load_image(path)?)?;
        let half = 0.5 * t.image.max();
        let bright = t.image.pixels().iter().filter(|&&v| v >= half).count();
        let radius = (bright as f64 / std::f64::consts::PI).sqrt();
        Ok(t.with_lv_radius(radius))
    }

    pub fn with_lv_radius(mut self, radius: f64) -> Self {
        self.lv_radius = radius;
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn image(&self) -> &GrayImage {
        &self.image
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Blood-pool radius in template pixels, used to size the initial disc.
    pub fn lv_radius(&self) -> f64 {
        self.lv_radius
    }

    pub fn note(&self) -> Option<&str> {
        self.note.as_deref()
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }
}

/// Correlation coefficient for every placement of the template's top-left
/// corner, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct NccMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl NccMap {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// First maximum in row-major order (strict `>` keeps the earliest).
    pub fn argmax(&self) -> (usize, usize, f64) {
        let mut best = (0, 0, self.values[0]);
        for (i, &v) in self.values.iter().enumerate() {
            if v > best.2 {
                best = (i % self.width, i / self.width, v);
            }
        }
        best
    }
}

/// `ζ(x, y) = Σ T·I / sqrt(Σ T² · Σ I²)` over every placement where the
/// template fits. Windows with zero energy score 0.
pub fn ncc_map(search: &GrayImage, tmpl: &Template) -> Result<NccMap> {
    let (tw, th) = (tmpl.width(), tmpl.height());
    let (sw, sh) = (search.width(), search.height());
    if tw > sw || th > sh {
        return Err(Error::Size(format!(
            "template {tw}x{th} does not fit search image {sw}x{sh}"
        )));
    }
    let (mw, mh) = (sw - tw + 1, sh - th + 1);
    let t = tmpl.image.pixels();
    let s = search.pixels();
    let t_energy = tmpl.energy;
    let values: Vec<f64> = (0..mh)
        .into_par_iter()
        .flat_map_iter(|y| {
            (0..mw).map(move |x| {
                let mut cross = 0.0;
                let mut energy = 0.0;
                for ty in 0..th {
                    let srow = &s[(y + ty) * sw + x..(y + ty) * sw + x + tw];
                    let trow = &t[ty * tw..(ty + 1) * tw];
                    for (a, b) in trow.iter().zip(srow) {
                        cross += a * b;
                        energy += b * b;
                    }
                }
                if energy > 0.0 {
                    (cross / (t_energy * energy).sqrt()).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
        })
        .collect();
    Ok(NccMap {
        width: mw,
        height: mh,
        values,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    pub scale_min: f64,
    pub scale_step: f64,
    /// Results with `ζ` below this are flagged low-confidence.
    pub threshold: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            scale_min: 0.1,
            scale_step: 0.1,
            threshold: 0.35,
        }
    }
}

impl MatchConfig {
    /// Plain single-scale template matching.
    pub fn single_scale() -> Self {
        Self {
            scale_min: 1.0,
            scale_step: 1.0,
            ..Self::default()
        }
    }

    /// `1.0, 1.0 − step, …` down to `scale_min`, each rounded to 1e-9.
    pub fn scales(&self) -> Result<Vec<f64>> {
        let ok = self.scale_step > 0.0
            && self.scale_min > 0.0
            && self.scale_min <= 1.0
            && self.scale_step.is_finite();
        if !ok {
            return Err(Error::Config(format!(
                "scale sweep needs 0 < scale_min <= 1 and step > 0, got {self:?}"
            )));
        }
        let mut out = Vec::new();
        for k in 0.. {
            let s = ((1.0 - k as f64 * self.scale_step) * 1e9).round() / 1e9;
            if s < self.scale_min - 1e-9 || s <= 0.0 {
                break;
            }
            out.push(s);
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Top-left of the matched region in the original frame, `x_m / s_m`.
    pub x: f64,
    pub y: f64,
    /// Placement in the winning scaled image.
    pub x_scaled: usize,
    pub y_scaled: usize,
    pub scale: f64,
    pub zeta: f64,
    /// Template center mapped back to the original frame.
    pub center_x: f64,
    pub center_y: f64,
    /// Template footprint in the original frame.
    pub footprint_w: f64,
    pub footprint_h: f64,
    pub low_confidence: bool,
}

/// Sweeps the scales of `cfg` over the search image with the template fixed,
/// keeping the first maximum of `ζ` (larger scale first, then row-major).
/// Scales at which the template no longer fits are skipped.
pub fn match_multiscale(
    search: &GrayImage,
    tmpl: &Template,
    cfg: &MatchConfig,
) -> Result<MatchResult> {
    let scales = cfg.scales()?;
    let per_scale: Vec<Option<(f64, usize, usize, f64)>> = scales
        .par_iter()
        .map(|&s| {
            let scaled = if s == 1.0 {
                std::borrow::Cow::Borrowed(search)
            } else {
                match search.rescale(s) {
                    Ok(img) => std::borrow::Cow::Owned(img),
                    Err(_) => return Ok(None),
                }
            };
            if scaled.width() < tmpl.width() || scaled.height() < tmpl.height() {
                return Ok(None);
            }
            let map = ncc_map(&scaled, tmpl)?;
            let (x, y, z) = map.argmax();
            Ok(Some((s, x, y, z)))
        })
        .collect::<Result<_>>()?;

    let mut best: Option<(f64, usize, usize, f64)> = None;
    for cand in per_scale.into_iter().flatten() {
        match best {
            Some(b) if cand.3 <= b.3 => {}
            _ => best = Some(cand),
        }
    }
    let (s, xm, ym, zeta) = best.ok_or_else(|| {
        Error::Size(format!(
            "template {}x{} fits the {}x{} search image at no swept scale",
            tmpl.width(),
            tmpl.height(),
            search.width(),
            search.height()
        ))
    })?;
    let (tw, th) = (tmpl.width() as f64, tmpl.height() as f64);
    Ok(MatchResult {
        x: xm as f64 / s,
        y: ym as f64 / s,
        x_scaled: xm,
        y_scaled: ym,
        scale: s,
        zeta,
        center_x: (xm as f64 + (tw - 1.0) / 2.0) / s,
        center_y: (ym as f64 + (th - 1.0) / 2.0) / s,
        footprint_w: tw / s,
        footprint_h: th / s,
        low_confidence: zeta < cfg.threshold,
    })
}

/// Scale whose template window centered on `(cx, cy)` (original frame)
/// correlates best, with its `ζ`. Used to size the disc for a seed point.
/// Falls back to `(1.0, 0.0)` when the window fits at no scale.
pub fn scale_at(
    search: &GrayImage,
    tmpl: &Template,
    cfg: &MatchConfig,
    cx: f64,
    cy: f64,
) -> Result<(f64, f64)> {
    let (tw, th) = (tmpl.width(), tmpl.height());
    let t = tmpl.image.pixels();
    let mut best = (1.0, 0.0);
    for s in cfg.scales()? {
        let scaled = if s == 1.0 {
            std::borrow::Cow::Borrowed(search)
        } else {
            match search.rescale(s) {
                Ok(img) => std::borrow::Cow::Owned(img),
                Err(_) => continue,
            }
        };
        let x0 = (cx * s - (tw as f64 - 1.0) / 2.0).round();
        let y0 = (cy * s - (th as f64 - 1.0) / 2.0).round();
        if x0 < 0.0 || y0 < 0.0 {
            continue;
        }
        let (x0, y0) = (x0 as usize, y0 as usize);
        if x0 + tw > scaled.width() || y0 + th > scaled.height() {
            continue;
        }
        let (mut cross, mut energy) = (0.0, 0.0);
        for ty in 0..th {
            let srow = &scaled.row(y0 + ty)[x0..x0 + tw];
            for (a, b) in t[ty * tw..(ty + 1) * tw].iter().zip(srow) {
                cross += a * b;
                energy += b * b;
            }
        }
        let zeta = if energy > 0.0 {
            (cross / (tmpl.energy * energy).sqrt()).clamp(0.0, 1.0)
        } else {
            0.0
        };
        if zeta > best.1 {
            best = (s, zeta);
        }
    }
    Ok(best)
}

/// Closed axis-aligned box in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BoundingBox {
    pub fn from_mask(mask: &crate::imaging::BinaryMask) -> Option<Self> {
        mask.bounding_box().map(|(x0, y0, x1, y1)| Self {
            x0: x0 as f64,
            y0: y0 as f64,
            x1: x1 as f64,
            y1: y1 as f64,
        })
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

/// True when the matched template center falls inside the truth box (edges
/// included).
pub fn localization_hit(result: &MatchResult, truth: &BoundingBox) -> bool {
    truth.contains(result.center_x, result.center_y)
}
