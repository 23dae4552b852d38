//! Synthetic images and studies with analytically known geometry.
//!
//! Used as ground truth by the test suites, and as the default localization
//! template when no template file is supplied.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

use crate::ead::DiscParams;
use crate::error::{Error, Result};
use crate::imaging::nifti::{self, Datatype};
use crate::imaging::{pgm, BinaryMask, CineStudy, GrayImage};
use crate::locate::Template;

/// Separable Gaussian blur with clamp-to-edge borders.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let (w, h) = (img.width(), img.height());
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                acc += k * img.get_clamped(x as i64 + i as i64 - radius, y as i64);
            }
            tmp[y * w + x] = acc / norm;
        }
    }
    let tmp = GrayImage::from_fn(w, h, |x, y| tmp[y * w + x]);
    GrayImage::from_fn(w, h, |x, y| {
        let mut acc = 0.0;
        for (i, k) in kernel.iter().enumerate() {
            acc += k * tmp.get_clamped(x as i64, y as i64 + i as i64 - radius);
        }
        acc / norm
    })
    .with_spacing(img.spacing_x(), img.spacing_y())
}

/// Uniform noise blurred by `sigma`, then stretched to span `[0, 1]`.
pub fn smooth_random(width: usize, height: usize, sigma: f64, seed: u64) -> GrayImage {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let noise = GrayImage::from_fn(width, height, |_, _| rng.random::<f64>());
    let blurred = gaussian_blur(&noise, sigma);
    let (lo, hi) = (blurred.min(), blurred.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    GrayImage::from_fn(width, height, |x, y| (blurred.get(x, y) - lo) / span)
}

/// Fraction of pixel `(x, y)` (unit square around its center) covered by the
/// inner ellipse of `p`, estimated on a `ss × ss` subsample grid.
pub fn ellipse_coverage(p: &DiscParams, x: usize, y: usize, ss: usize) -> f64 {
    let (s, c) = p.theta.sin_cos();
    let mut inside = 0;
    for j in 0..ss {
        for i in 0..ss {
            let px = x as f64 - 0.5 + (i as f64 + 0.5) / ss as f64;
            let py = y as f64 - 0.5 + (j as f64 + 0.5) / ss as f64;
            let dx = px - p.xc;
            let dy = py - p.yc;
            let u = (dx * c - dy * s) / p.a;
            let v = (dx * s + dy * c) / p.b;
            if u * u + v * v <= 1.0 {
                inside += 1;
            }
        }
    }
    inside as f64 / (ss * ss) as f64
}

/// Pixels whose centers lie inside the ellipse `p`, computed directly from
/// the implicit equation.
pub fn ellipse_mask(p: &DiscParams, width: usize, height: usize) -> BinaryMask {
    let (s, c) = p.theta.sin_cos();
    BinaryMask::from_fn(width, height, |x, y| {
        let dx = x as f64 - p.xc;
        let dy = y as f64 - p.yc;
        let u = (dx * c - dy * s) / p.a;
        let v = (dx * s + dy * c) / p.b;
        u * u + v * v <= 1.0
    })
}

/// Anti-aliased bright ellipse on a flat background with additive Gaussian
/// noise, clamped into `[0, 1]`.
pub fn ellipse_phantom(
    width: usize,
    height: usize,
    p: &DiscParams,
    inside: f64,
    outside: f64,
    noise_sigma: f64,
    seed: u64,
) -> GrayImage {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_sigma.max(0.0)).expect("finite sigma");
    GrayImage::from_fn(width, height, |x, y| {
        let cov = ellipse_coverage(p, x, y, 4);
        let v = outside + cov * (inside - outside);
        if noise_sigma > 0.0 {
            v + normal.sample(&mut rng)
        } else {
            v
        }
    })
}

/// Left-ventricle-like slice: bright blood pool (the ellipse `p`), a dark
/// myocardial band out to `wall` times the pool axes, and mid-gray tissue.
/// Without a pool the slice is tissue only.
pub fn lv_slice(
    width: usize,
    height: usize,
    p: Option<&DiscParams>,
    wall: f64,
    noise_sigma: f64,
    seed: u64,
) -> GrayImage {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_sigma.max(0.0)).expect("finite sigma");
    let outer = p.map(|p| DiscParams {
        a: p.a * wall,
        b: p.b * wall,
        ..*p
    });
    let (pool, muscle, tissue) = (0.9, 0.1, 0.35);
    GrayImage::from_fn(width, height, |x, y| {
        let c_pool = p.map_or(0.0, |p| ellipse_coverage(p, x, y, 4));
        let c_wall = outer.as_ref().map_or(0.0, |o| ellipse_coverage(o, x, y, 4));
        let v = tissue + c_wall * (muscle - tissue) + c_pool * (pool - muscle);
        if noise_sigma > 0.0 {
            v + normal.sample(&mut rng)
        } else {
            v
        }
    })
}

/// Default localization template: a bright disc of radius `0.14 · size` on
/// black, in a `size × size` square.
pub fn lv_template(size: usize) -> Template {
    let radius = 0.14 * size as f64;
    let c = (size as f64 - 1.0) / 2.0;
    let disc = DiscParams::circle(radius, c, c);
    let img = GrayImage::from_fn(size, size, |x, y| ellipse_coverage(&disc, x, y, 4));
    Template::new(img)
        .expect("synthetic template has energy")
        .with_lv_radius(radius)
        .with_note(format!(
            "synthetic bright disc r={radius:.1} in {size}x{size}"
        ))
}

/// A cine study of stacked ellipses sampled from two ellipsoids (ED and ES),
/// with ground-truth masks and analytic volumes.
#[derive(Clone, Debug)]
pub struct PhantomStudy {
    pub study: CineStudy,
    /// Pool ellipses per z at ED and ES (`None` beyond the ellipsoid tips).
    pub ed: Vec<Option<DiscParams>>,
    pub es: Vec<Option<DiscParams>>,
    /// `Σ_z π·a_z·b_z·Δx·Δy·Δz` of the continuous cross sections, mm³.
    pub edv_mm3: f64,
    pub esv_mm3: f64,
}

impl PhantomStudy {
    pub fn analytic_ef(&self) -> f64 {
        (self.edv_mm3 - self.esv_mm3) / self.edv_mm3 * 100.0
    }
}

/// Parameters of [`phantom_study`].
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    pub n_z: usize,
    pub pixel_mm: f64,
    pub slice_mm: f64,
    /// In-plane semi-axes (px) and long-axis half length (in slices) at ED.
    pub ed_axes: (f64, f64, f64),
    pub es_axes: (f64, f64, f64),
    pub theta: f64,
    pub center: (f64, f64),
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            n_z: 8,
            pixel_mm: 1.5,
            slice_mm: 8.0,
            ed_axes: (15.0, 13.0, 5.2),
            es_axes: (11.0, 9.5, 4.8),
            theta: 0.4,
            center: (63.0, 61.0),
            noise_sigma: 0.02,
            seed: 11,
        }
    }
}

fn cross_section(
    axes: (f64, f64, f64),
    zc: f64,
    z: usize,
    theta: f64,
    center: (f64, f64),
) -> Option<DiscParams> {
    let dz = (z as f64 - zc) / axes.2;
    let k = 1.0 - dz * dz;
    if k <= 0.0 {
        return None;
    }
    let s = k.sqrt();
    Some(DiscParams::new(
        axes.0 * s,
        axes.1 * s,
        theta,
        center.0,
        center.1,
    ))
}

/// Two-phase study (phase 0 = ED, phase 1 = ES). Slices whose index is in
/// `noise_slices` are replaced by pure noise and carry empty labels.
pub fn phantom_study(spec: &PhantomSpec, noise_slices: &[(usize, usize)]) -> PhantomStudy {
    let zc = (spec.n_z as f64 - 1.0) / 2.0;
    let ed: Vec<_> = (0..spec.n_z)
        .map(|z| cross_section(spec.ed_axes, zc, z, spec.theta, spec.center))
        .collect();
    let es: Vec<_> = (0..spec.n_z)
        .map(|z| cross_section(spec.es_axes, zc, z, spec.theta, spec.center))
        .collect();
    let voxel = spec.pixel_mm * spec.pixel_mm * spec.slice_mm;
    let volume = |stack: &[Option<DiscParams>]| -> f64 {
        stack.iter().flatten().map(|p| p.inner_area()).sum::<f64>() * voxel
    };

    let mut slices = Vec::with_capacity(spec.n_z * 2);
    let mut labels = Vec::with_capacity(spec.n_z * 2);
    let mut rng = rand::rngs::StdRng::seed_from_u64(spec.seed);
    for z in 0..spec.n_z {
        for (phase, stack) in [&ed, &es].into_iter().enumerate() {
            let seed = rng.random::<u64>();
            let (img, label) = if noise_slices.contains(&(z, phase)) {
                let mut r = rand::rngs::StdRng::seed_from_u64(seed);
                let img = GrayImage::from_fn(spec.width, spec.height, |_, _| r.random::<f64>());
                (img, BinaryMask::new(spec.width, spec.height))
            } else {
                let img = lv_slice(
                    spec.width,
                    spec.height,
                    stack[z].as_ref(),
                    1.5,
                    spec.noise_sigma,
                    seed,
                );
                let label = match &stack[z] {
                    Some(p) => ellipse_mask(p, spec.width, spec.height),
                    None => BinaryMask::new(spec.width, spec.height),
                };
                (img, label)
            };
            slices.push(img.with_spacing(spec.pixel_mm, spec.pixel_mm));
            labels.push(label);
        }
    }
    let study = CineStudy::new("phantom", slices, spec.n_z, 2, spec.slice_mm, 0, 1)
        .and_then(|s| s.with_labels(labels))
        .expect("phantom grid is consistent");
    PhantomStudy {
        study,
        edv_mm3: volume(&ed),
        esv_mm3: volume(&es),
        ed,
        es,
    }
}

/// Writes `ph` as a study directory: `study.toml`, `image.nii.gz` (int16,
/// intensities × 1000), `labels.nii.gz` (uint8, LV = 1) and the default
/// template as `template.pgm`.
pub fn write_fixture(ph: &PhantomStudy, dir: &Path) -> Result<()> {
    let s = &ph.study;
    let (nx, ny, nz, nt) = (s.width(), s.height(), s.n_z(), s.n_phase());
    let (sx, sy, sz) = s.spacing();
    let pixdim = [sx as f32, sy as f32, sz as f32, 1.0];
    let mut image = Vec::with_capacity(nx * ny * nz * nt);
    let mut labels = Vec::with_capacity(image.capacity());
    for t in 0..nt {
        for z in 0..nz {
            let img = s.slice(z, t).expect("index in range");
            image.extend(
                img.pixels()
                    .iter()
                    .map(|v| (v * 1000.0).clamp(-32768.0, 32767.0)),
            );
            if let Some(m) = s.label(z, t) {
                labels.extend(m.bits().iter().map(|&b| f64::from(u8::from(b))));
            }
        }
    }
    let dims = [nx, ny, nz, nt];
    let write = |name: &str, bytes: Vec<u8>| {
        let p = dir.join(name);
        std::fs::write(&p, bytes).map_err(|e| Error::io(p, e))
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(
        "image.nii.gz",
        nifti::encode_nifti(dims, pixdim, Datatype::I16, &image, true)?,
    )?;
    let mut manifest = format!(
        "id = \"{}\"\nimage = \"image.nii.gz\"\ned_phase = {}\nes_phase = {}\n",
        s.id,
        s.ed_phase(),
        s.es_phase()
    );
    if s.has_labels() {
        write(
            "labels.nii.gz",
            nifti::encode_nifti(dims, pixdim, Datatype::U8, &labels, true)?,
        )?;
        manifest.push_str("labels = \"labels.nii.gz\"\n");
    }
    write("study.toml", manifest.into_bytes())?;
    let t = lv_template(32);
    write(
        "template.pgm",
        pgm::encode_pgm(t.width(), t.height(), &t.image().to_u8()),
    )
}
