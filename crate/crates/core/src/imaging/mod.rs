//! Image and study containers, intensity normalization, subpixel sampling,
//! rescaling and file IO.
//!
//! Pixel `(i, j)` has its center at the real coordinate `(i, j)`: column `i`
//! runs along X, row `j` along Y. Every sampling routine in the crate uses
//! this lattice convention.

mod load;
pub mod nifti;
pub mod pgm;
pub mod png_io;

pub use load::{
    decode_image, load_image, load_study, study_from_volumes, StudyManifest, StudyOptions,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2D scalar field with intensities in `[0, 1]` and physical pixel spacing.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
    spacing_x: f64,
    spacing_y: f64,
}

impl GrayImage {
    /// Builds an image from already-normalized row-major intensities.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "image must be at least 1x1, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "expected {} intensities for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Dimension(format!("intensity {bad} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            data,
            spacing_x: 1.0,
            spacing_y: 1.0,
        })
    }

    /// Evaluates `f(x, y)` at every pixel; values are clamped into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image must be at least 1x1");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                data.push(if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
            }
        }
        Self {
            width,
            height,
            data,
            spacing_x: 1.0,
            spacing_y: 1.0,
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    /// Sets the physical pixel size. Non-positive or non-finite values fall
    /// back to 1 mm.
    pub fn with_spacing(mut self, spacing_x: f64, spacing_y: f64) -> Self {
        self.spacing_x = sanitize_spacing(spacing_x);
        self.spacing_y = sanitize_spacing(spacing_y);
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn spacing_x(&self) -> f64 {
        self.spacing_x
    }

    pub fn spacing_y(&self) -> f64 {
        self.spacing_y
    }

    pub fn pixels(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Pixel value with coordinates clamped to the border.
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64) -> f64 {
        let xi = x.clamp(0, self.width as i64 - 1) as usize;
        let yi = y.clamp(0, self.height as i64 - 1) as usize;
        self.get(xi, yi)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Bilinear interpolation between the four surrounding pixel centers.
    /// Coordinates outside the image are clamped to the border first.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let x = if x.is_nan() {
            0.0
        } else {
            x.clamp(0.0, (self.width - 1) as f64)
        };
        let y = if y.is_nan() {
            0.0
        } else {
            y.clamp(0.0, (self.height - 1) as f64)
        };
        let x0 = (x.floor() as usize).min(self.width - 1);
        let y0 = (y.floor() as usize).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let tx = x - x0 as f64;
        let ty = y - y0 as f64;

        let v00 = self.get(x0, y0);
        let v10 = self.get(x1, y0);
        let v01 = self.get(x0, y1);
        let v11 = self.get(x1, y1);
        let top = v00 + tx * (v10 - v00);
        let bottom = v01 + tx * (v11 - v01);
        let v = top + ty * (bottom - top);
        let lo = v00.min(v10).min(v01).min(v11);
        let hi = v00.max(v10).max(v01).max(v11);
        v.clamp(lo, hi)
    }

    /// Resamples by `factor` in `(0, 1]`; output dimensions are
    /// `round(factor * original)`.
    pub fn rescale(&self, factor: f64) -> Result<GrayImage> {
        if !(factor > 0.0 && factor <= 1.0) {
            return Err(Error::Scale(format!("factor {factor} outside (0, 1]")));
        }
        let w = (self.width as f64 * factor).round() as usize;
        let h = (self.height as f64 * factor).round() as usize;
        if w == 0 || h == 0 {
            return Err(Error::Scale(format!(
                "factor {factor} shrinks {}x{} below 1x1",
                self.width, self.height
            )));
        }
        let mut out = self.resize(w, h)?;
        out.spacing_x = self.spacing_x / factor;
        out.spacing_y = self.spacing_y / factor;
        Ok(out)
    }

    /// Bilinear resampling to an arbitrary size with pixel-center alignment.
    pub fn resize(&self, width: usize, height: usize) -> Result<GrayImage> {
        if width == 0 || height == 0 {
            return Err(Error::Scale(format!("cannot resize to {width}x{height}")));
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let mut data = Vec::with_capacity(width * height);
        for j in 0..height {
            let src_y = (j as f64 + 0.5) * sy - 0.5;
            for i in 0..width {
                let src_x = (i as f64 + 0.5) * sx - 0.5;
                data.push(self.sample_bilinear(src_x, src_y));
            }
        }
        Ok(GrayImage {
            width,
            height,
            data,
            spacing_x: self.spacing_x * sx,
            spacing_y: self.spacing_y * sy,
        })
    }

    /// Quantizes to 8 bits (`round(v * 255)`).
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v * 255.0).round() as u8)
            .collect()
    }
}

fn sanitize_spacing(s: f64) -> f64 {
    if s.is_finite() && s > 0.0 {
        s
    } else {
        1.0
    }
}

/// Maps the 1st..99th percentile range of `raw` affinely onto `[0, 1]`,
/// clamping values outside it.
///
/// Percentiles use nearest-rank on the sorted data (lower rank for the 1st,
/// upper rank for the 99th), which makes the operation exactly idempotent.
/// A degenerate range falls back to min/max; constant input maps to zeros.
pub fn normalize(raw: &[f64], width: usize, height: usize) -> Result<GrayImage> {
    if raw.is_empty() {
        return Err(Error::Dimension("cannot normalize an empty array".into()));
    }
    if raw.len() != width * height {
        return Err(Error::Dimension(format!(
            "expected {} samples for {width}x{height}, got {}",
            width * height,
            raw.len()
        )));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Dimension(
            "non-finite sample in raw intensities".into(),
        ));
    }
    let (mut lo, mut hi) = percentile_range(raw, 0.01, 0.99);
    if hi <= lo {
        lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
        hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    let data = if hi > lo {
        let span = hi - lo;
        raw.iter()
            .map(|v| ((v - lo) / span).clamp(0.0, 1.0))
            .collect()
    } else {
        vec![0.0; raw.len()]
    };
    GrayImage::new(width, height, data)
}

fn percentile_range(raw: &[f64], q_lo: f64, q_hi: f64) -> (f64, f64) {
    let n = raw.len();
    let lo_rank = (q_lo * (n - 1) as f64).floor() as usize;
    let hi_rank = ((q_hi * (n - 1) as f64).ceil() as usize).min(n - 1);
    let mut buf = raw.to_vec();
    let (_, lo, _) = buf.select_nth_unstable_by(lo_rank, f64::total_cmp);
    let lo = *lo;
    let (_, hi, _) = buf.select_nth_unstable_by(hi_rank, f64::total_cmp);
    (lo, *hi)
}

/// One boolean per pixel, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::Dimension(format!(
                "mask of {width}x{height} needs {} bits, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn clear(&mut self) {
        self.bits.iter_mut().for_each(|b| *b = false);
    }

    /// Closed bounding box `(x0, y0, x1, y1)` of the set pixels.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    bbox = Some(match bbox {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        bbox
    }

    /// Run lengths of alternating values, starting with a run of `false`.
    pub fn to_runs(&self) -> Vec<u32> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0u32;
        for &b in &self.bits {
            if b == current {
                len += 1;
            } else {
                runs.push(len);
                current = b;
                len = 1;
            }
        }
        runs.push(len);
        runs
    }

    pub fn from_runs(width: usize, height: usize, runs: &[u32]) -> Result<Self> {
        let total = width
            .checked_mul(height)
            .ok_or_else(|| Error::Dimension("mask dimensions overflow".into()))?;
        let sum: u64 = runs.iter().map(|&r| r as u64).sum();
        if sum != total as u64 {
            return Err(Error::Dimension(format!(
                "runs cover {sum} pixels, mask has {total}"
            )));
        }
        let mut bits = Vec::with_capacity(total);
        let mut value = false;
        for &r in runs {
            bits.extend(std::iter::repeat_n(value, r as usize));
            value = !value;
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct MaskRepr {
    width: usize,
    height: usize,
    runs: Vec<u32>,
}

impl Serialize for BinaryMask {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        MaskRepr {
            width: self.width,
            height: self.height,
            runs: self.to_runs(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BinaryMask {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = MaskRepr::deserialize(deserializer)?;
        BinaryMask::from_runs(repr.width, repr.height, &repr.runs).map_err(serde::de::Error::custom)
    }
}

/// Which end frame of the cardiac cycle a slice belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Ed,
    Es,
}

impl Phase {
    pub const BOTH: [Phase; 2] = [Phase::Ed, Phase::Es];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Ed => "ed",
            Phase::Es => "es",
        }
    }
}

impl std::str::FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ed" | "diastole" => Ok(Phase::Ed),
            "es" | "systole" => Ok(Phase::Es),
            other => Err(Error::Config(format!(
                "unknown phase `{other}` (expected ed|es)"
            ))),
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Short-axis cine stack: one normalized slice per `(z, phase)`.
#[derive(Clone, Debug)]
pub struct CineStudy {
    pub id: String,
    slices: Vec<GrayImage>,
    n_z: usize,
    n_phase: usize,
    slice_spacing: f64,
    ed_phase: usize,
    es_phase: usize,
    labels: Option<Vec<BinaryMask>>,
}

impl CineStudy {
    /// `slices` is indexed `z * n_phase + phase`.
    pub fn new(
        id: impl Into<String>,
        slices: Vec<GrayImage>,
        n_z: usize,
        n_phase: usize,
        slice_spacing: f64,
        ed_phase: usize,
        es_phase: usize,
    ) -> Result<Self> {
        if n_z == 0 || n_phase == 0 || slices.len() != n_z * n_phase {
            return Err(Error::Dimension(format!(
                "{} slices do not fill a {n_z}x{n_phase} (z, phase) grid",
                slices.len()
            )));
        }
        let (w, h) = (slices[0].width(), slices[0].height());
        if slices.iter().any(|s| s.width() != w || s.height() != h) {
            return Err(Error::Dimension("slices differ in size".into()));
        }
        if !(slice_spacing.is_finite() && slice_spacing > 0.0) {
            return Err(Error::Dimension(format!(
                "slice spacing must be positive, got {slice_spacing}"
            )));
        }
        if ed_phase >= n_phase || es_phase >= n_phase {
            return Err(Error::Dimension(format!(
                "ED/ES phases ({ed_phase}, {es_phase}) out of range for {n_phase} phases"
            )));
        }
        Ok(Self {
            id: id.into(),
            slices,
            n_z,
            n_phase,
            slice_spacing,
            ed_phase,
            es_phase,
            labels: None,
        })
    }

    /// Attaches ground-truth LV masks, indexed like the slices.
    pub fn with_labels(mut self, labels: Vec<BinaryMask>) -> Result<Self> {
        if labels.len() != self.slices.len() {
            return Err(Error::Dimension(format!(
                "{} label masks for {} slices",
                labels.len(),
                self.slices.len()
            )));
        }
        if labels
            .iter()
            .any(|m| m.width() != self.width() || m.height() != self.height())
        {
            return Err(Error::Dimension(
                "label mask size differs from slices".into(),
            ));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn n_phase(&self) -> usize {
        self.n_phase
    }

    pub fn width(&self) -> usize {
        self.slices[0].width()
    }

    pub fn height(&self) -> usize {
        self.slices[0].height()
    }

    pub fn slice_spacing(&self) -> f64 {
        self.slice_spacing
    }

    pub fn spacing(&self) -> (f64, f64, f64) {
        let s = &self.slices[0];
        (s.spacing_x(), s.spacing_y(), self.slice_spacing)
    }

    pub fn ed_phase(&self) -> usize {
        self.ed_phase
    }

    pub fn es_phase(&self) -> usize {
        self.es_phase
    }

    pub fn phase_index(&self, phase: Phase) -> usize {
        match phase {
            Phase::Ed => self.ed_phase,
            Phase::Es => self.es_phase,
        }
    }

    pub fn slice(&self, z: usize, phase: usize) -> Option<&GrayImage> {
        (z < self.n_z && phase < self.n_phase).then(|| &self.slices[z * self.n_phase + phase])
    }

    pub fn label(&self, z: usize, phase: usize) -> Option<&BinaryMask> {
        if z >= self.n_z || phase >= self.n_phase {
            return None;
        }
        self.labels.as_ref().map(|l| &l[z * self.n_phase + phase])
    }

    pub fn has_labels(&self) -> bool {
        self.labels.is_some()
    }

    /// Returns a copy with all linear spacings multiplied by `k`.
    pub fn scaled_spacing(&self, k: f64) -> CineStudy {
        let mut out = self.clone();
        for s in &mut out.slices {
            s.spacing_x *= k;
            s.spacing_y *= k;
        }
        out.slice_spacing *= k;
        out
    }
}
