use std::f64::consts::{SQRT_2, TAU};

use super::shape::{map_point, to_unit};
use super::{DiscParams, DiscTemplate, EnergyBreakdown, Gradient, Ring};
use crate::error::{Error, Result};
use crate::imaging::GrayImage;

const MIN_AREA: f64 = 1e-6;

/// An image prepared for repeated energy and gradient evaluation.
///
/// Holds, for every row, the running integral of the row's linear
/// interpolant along X (trapezoidal prefix sums). Together with linear
/// interpolation across rows this is an exact antiderivative in X of the
/// clamped bilinear image, which turns region integrals into boundary
/// integrals: `∬_R f dX dY = ∮_∂R F dY`.
pub struct EnergyField<'a> {
    img: &'a GrayImage,
    prefix: Vec<f64>,
}

impl<'a> EnergyField<'a> {
    pub fn new(img: &'a GrayImage) -> Self {
        let w = img.width();
        let mut prefix = Vec::with_capacity(w * img.height());
        for y in 0..img.height() {
            let row = img.row(y);
            let mut acc = 0.0;
            prefix.push(0.0);
            for i in 1..w {
                acc += 0.5 * (row[i - 1] + row[i]);
                prefix.push(acc);
            }
        }
        Self { img, prefix }
    }

    pub fn image(&self) -> &GrayImage {
        self.img
    }

    /// `∫_0^x row_j(s) ds` for the clamped linear interpolant of row `j`.
    fn row_integral(&self, j: usize, x: f64) -> f64 {
        let w = self.img.width();
        let row = self.img.row(j);
        let prefix = &self.prefix[j * w..(j + 1) * w];
        let last = (w - 1) as f64;
        if x <= 0.0 {
            return x * row[0];
        }
        if x >= last {
            return prefix[w - 1] + (x - last) * row[w - 1];
        }
        let i = x.floor() as usize;
        let u = x - i as f64;
        let (v0, v1) = (row[i], row[i + 1]);
        prefix[i] + u * v0 + 0.5 * u * u * (v1 - v0)
    }

    /// Antiderivative of the bilinear image along X.
    fn antiderivative(&self, x: f64, y: f64) -> f64 {
        let h = self.img.height();
        let y = y.clamp(0.0, (h - 1) as f64);
        let j0 = (y.floor() as usize).min(h.saturating_sub(2));
        let j1 = (j0 + 1).min(h - 1);
        let ty = y - j0 as f64;
        let g0 = self.row_integral(j0, x);
        if ty == 0.0 || j1 == j0 {
            return g0;
        }
        let g1 = self.row_integral(j1, x);
        g0 + ty * (g1 - g0)
    }

    /// Integrals along the straight segment `p → q`, exact for the bilinear
    /// image: `∫ F dY` into `acc[0]` and, when `vel` is given, the fluxes
    /// `∫ f(s) · ((1 − s)·(v0 × d) + s·(v1 × d)) ds` of each linearly
    /// interpolated endpoint velocity into `acc[1..]`.
    ///
    /// The segment is cut wherever it crosses an integer row or column. Inside
    /// a cell both integrands are cubics in `s`, so Simpson's rule is exact on
    /// every piece.
    fn segment(
        &self,
        p: (f64, f64),
        q: (f64, f64),
        vel: Option<(&[(f64, f64); 5], &[(f64, f64); 5])>,
        cuts: &mut Vec<f64>,
        acc: &mut [f64; 6],
    ) {
        let (dx, dy) = (q.0 - p.0, q.1 - p.1);
        if dx == 0.0 && dy == 0.0 {
            return;
        }
        cuts.clear();
        cuts.push(0.0);
        for (start, delta) in [(p.0, dx), (p.1, dy)] {
            if delta == 0.0 {
                continue;
            }
            let end = start + delta;
            let (lo, hi) = if delta > 0.0 {
                (start, end)
            } else {
                (end, start)
            };
            let mut k = lo.floor() + 1.0;
            while k < hi {
                cuts.push((k - start) / delta);
                k += 1.0;
            }
        }
        cuts.push(1.0);
        cuts.sort_unstable_by(f64::total_cmp);

        let point = |s: f64| (p.0 + s * dx, p.1 + s * dy);
        let big_f = |s: f64| {
            let (x, y) = point(s);
            self.antiderivative(x, y)
        };
        let cross = |v: (f64, f64)| v.0 * dy - v.1 * dx;
        let ends = vel.map(|(v0, v1)| {
            let mut c = [(0.0, 0.0); 5];
            for i in 0..5 {
                c[i] = (cross(v0[i]), cross(v1[i]));
            }
            c
        });
        for w in cuts.windows(2) {
            let (s0, s1) = (w[0], w[1]);
            if s1 <= s0 {
                continue;
            }
            let sm = 0.5 * (s0 + s1);
            let len = s1 - s0;
            if dy != 0.0 {
                acc[0] += dy * len * (big_f(s0) + 4.0 * big_f(sm) + big_f(s1)) / 6.0;
            }
            if let Some(c) = &ends {
                let f = |s: f64| {
                    let (x, y) = point(s);
                    self.img.sample_bilinear(x, y)
                };
                let (f0, fm, f1) = (f(s0), f(sm), f(s1));
                for (i, &(c0, c1)) in c.iter().enumerate() {
                    let g = |s: f64| (1.0 - s) * c0 + s * c1;
                    acc[i + 1] += len * (f0 * g(s0) + 4.0 * fm * g(sm) + f1 * g(s1)) / 6.0;
                }
            }
        }
    }

    /// `∮ F dY` over one ring, taken exactly along the `n`-gon inscribed in
    /// the ring after scaling it to the ellipse's area. With `grad`, also the
    /// derivatives of that integral with respect to `(A, B, θ, xc, yc)`.
    fn ring(&self, p: &DiscParams, ring: Ring, n: usize, grad: bool) -> [f64; 6] {
        let step = TAU / n as f64;
        // equal-area n-gon: n/2 · ρ² · sin(2π/n) = π r²
        let rho = ring.radius() * (step / step.sin()).sqrt();
        let (sin_th, cos_th) = p.theta.sin_cos();
        let vertex = |k: usize| {
            let (sin_t, cos_t) = (step * (k % n) as f64).sin_cos();
            let pos = map_point(p, rho, cos_t, sin_t, cos_th, sin_th);
            let (u, v) = (rho * cos_t, rho * sin_t);
            let vel = [
                (cos_th * u, -sin_th * u),
                (sin_th * v, cos_th * v),
                (
                    -p.a * sin_th * u + p.b * cos_th * v,
                    -p.a * cos_th * u - p.b * sin_th * v,
                ),
                (1.0, 0.0),
                (0.0, 1.0),
            ];
            (pos, vel)
        };
        let mut cuts = Vec::new();
        let mut acc = [0.0; 6];
        let mut prev = vertex(0);
        for k in 1..=n {
            let next = vertex(k);
            let vel = grad.then_some((&prev.1, &next.1));
            self.segment(prev.0, next.0, vel, &mut cuts, &mut acc);
            prev = next;
        }
        acc
    }

    fn check(p: &DiscParams) -> Result<()> {
        let ab = p.a * p.b;
        if !(ab.is_finite() && ab >= MIN_AREA && p.a > 0.0 && p.b > 0.0) || !p.is_finite() {
            return Err(Error::DegenerateDisc(ab));
        }
        Ok(())
    }

    /// Contrast energy from boundary line integrals over `n`-vertex rings.
    pub fn energy(&self, p: &DiscParams, n: usize) -> Result<EnergyBreakdown> {
        Self::check(p)?;
        let e1 = self.ring(p, Ring::Outer, n, false)[0];
        let e2 = self.ring(p, Ring::Inner, n, false)[0];
        Ok(EnergyBreakdown::from_parts(e1, e2, p))
    }

    /// Contrast energy by direct summation over lattice points inside each
    /// region. Points outside the image take clamped border values.
    pub fn energy_pixelsum(&self, p: &DiscParams) -> Result<EnergyBreakdown> {
        Self::check(p)?;
        let (sin_th, cos_th) = p.theta.sin_cos();
        let reach = Ring::Outer.radius() * p.a.max(p.b);
        let x0 = (p.xc - reach).floor() as i64;
        let x1 = (p.xc + reach).ceil() as i64;
        let y0 = (p.yc - reach).floor() as i64;
        let y1 = (p.yc + reach).ceil() as i64;
        let outer_sq = Ring::Outer.radius().powi(2);
        let (mut e1, mut e2) = (0.0, 0.0);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (u, v) = to_unit(p, x as f64, y as f64, cos_th, sin_th);
                let d = u * u + v * v;
                if d <= outer_sq {
                    let f = self.img.get_clamped(x, y);
                    e1 += f;
                    if d <= 1.0 {
                        e2 += f;
                    }
                }
            }
        }
        Ok(EnergyBreakdown::from_parts(e1, e2, p))
    }

    /// Energy and its exact partial derivatives.
    ///
    /// Each ring integral is a region integral over a polygon, so its
    /// derivative is the flux of `f` through the moving polygon edges:
    /// `∂/∂q ∬ f = ∮ f (∂P/∂q · n) ds`. These are what the descent uses;
    /// [`EnergyField::gradient_continuum`] gives the smooth-ellipse limit.
    pub fn energy_and_gradient(
        &self,
        p: &DiscParams,
        n: usize,
    ) -> Result<(EnergyBreakdown, Gradient)> {
        Self::check(p)?;
        let outer = self.ring(p, Ring::Outer, n, true);
        let inner = self.ring(p, Ring::Inner, n, true);
        let energy = EnergyBreakdown::from_parts(outer[0], inner[0], p);
        let ab = p.a * p.b;
        let d = |i: usize| (outer[i] - 2.0 * inner[i]) / ab;
        let grad = Gradient {
            d_a: d(1) - energy.e / p.a,
            d_b: d(2) - energy.e / p.b,
            d_theta: d(3),
            d_xc: d(4),
            d_yc: d(5),
        };
        Ok((energy, grad))
    }

    /// Closed-form partial derivatives of the continuous energy, sampled
    /// with the trapezoidal rule at `n` points per ring.
    ///
    /// With `f1`, `f2` the image sampled on the outer and inner boundary at
    /// the same `t`, and `E` from [`EnergyField::energy`]:
    ///
    /// ```text
    /// ∂E/∂A  = (2∫(f1 − f2) cos²t dt − E) / A
    /// ∂E/∂B  = (2∫(f1 − f2) sin²t dt − E) / B
    /// ∂E/∂θ  = (B² − A²)/(AB) ∫(f1 − f2) sin 2t dt
    /// ∂E/∂xc = 1/(AB) ∫(√2 f1 − 2 f2)(B cosθ cos t + A sinθ sin t) dt
    /// ∂E/∂yc = 1/(AB) ∫(√2 f1 − 2 f2)(A cosθ sin t − B sinθ cos t) dt
    /// ```
    pub fn gradient_continuum(&self, p: &DiscParams, n: usize) -> Result<Gradient> {
        let energy = self.energy(p, n)?;
        let (sin_th, cos_th) = p.theta.sin_cos();
        let dt = TAU / n as f64;
        let (r1, r2) = (Ring::Outer.radius(), Ring::Inner.radius());
        let (mut s_cc, mut s_ss, mut s_2t, mut s_c, mut s_s) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for k in 0..n {
            let (sin_t, cos_t) = (TAU * k as f64 / n as f64).sin_cos();
            let (x1, y1) = map_point(p, r1, cos_t, sin_t, cos_th, sin_th);
            let (x2, y2) = map_point(p, r2, cos_t, sin_t, cos_th, sin_th);
            let f1 = self.img.sample_bilinear(x1, y1);
            let f2 = self.img.sample_bilinear(x2, y2);
            let diff = f1 - f2;
            s_cc += diff * cos_t * cos_t;
            s_ss += diff * sin_t * sin_t;
            s_2t += diff * 2.0 * sin_t * cos_t;
            let weighted = SQRT_2 * f1 - 2.0 * f2;
            s_c += weighted * cos_t;
            s_s += weighted * sin_t;
        }
        let (a, b) = (p.a, p.b);
        let e = energy.e;
        let ab = a * b;
        let grad = Gradient {
            d_a: (2.0 * s_cc * dt - e) / a,
            d_b: (2.0 * s_ss * dt - e) / b,
            d_theta: (b * b - a * a) / ab * s_2t * dt,
            d_xc: (b * cos_th * s_c + a * sin_th * s_s) * dt / ab,
            d_yc: (a * cos_th * s_s - b * sin_th * s_c) * dt / ab,
        };
        Ok(grad)
    }

    pub fn gradient(&self, p: &DiscParams, n: usize) -> Result<Gradient> {
        self.energy_and_gradient(p, n).map(|(_, g)| g)
    }
}

/// Line-integral energy with the default sampling policy.
pub fn energy(img: &GrayImage, p: &DiscParams) -> Result<EnergyBreakdown> {
    let n = DiscTemplate::default().n_samples(p);
    EnergyField::new(img).energy(p, n)
}

/// Area-sum energy, the oracle for [`energy`].
pub fn energy_pixelsum(img: &GrayImage, p: &DiscParams) -> Result<EnergyBreakdown> {
    EnergyField::new(img).energy_pixelsum(p)
}

/// Analytic gradient with the default sampling policy.
pub fn gradient(img: &GrayImage, p: &DiscParams) -> Result<Gradient> {
    let n = DiscTemplate::default().n_samples(p);
    EnergyField::new(img).gradient(p, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn row_integral_is_exact_for_linear_rows() {
        let img = GrayImage::from_fn(6, 2, |x, _| x as f64 / 5.0);
        let field = EnergyField::new(&img);
        // ∫_0^x s/5 ds = x²/10 inside; linear extension outside
        for x in [0.0, 0.5, 2.25, 4.999, 5.0] {
            assert!((field.row_integral(0, x) - x * x / 10.0).abs() < 1e-12);
        }
        assert!((field.row_integral(0, 7.0) - (2.5 + 2.0)).abs() < 1e-12);
        assert!((field.row_integral(0, -3.0) - 0.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_image_has_zero_energy_and_gradient() {
        let img = GrayImage::filled(64, 64, 0.6);
        let field = EnergyField::new(&img);
        let p = DiscParams::new(9.0, 6.0, 0.8, 31.0, 29.5);
        let (e, g) = field.energy_and_gradient(&p, 128).unwrap();
        assert!((e.e1 - 2.0 * PI * p.a * p.b * 0.6).abs() < 1e-9);
        assert!((e.e2 - PI * p.a * p.b * 0.6).abs() < 1e-9);
        assert!(e.e.abs() < 1e-12);
        for d in g.to_array() {
            assert!(d.abs() < 1e-12, "{g:?}");
        }
    }

    #[test]
    fn circle_has_zero_theta_derivative() {
        let img = GrayImage::from_fn(48, 48, |x, y| ((x * 13 + y * 7) % 17) as f64 / 16.0);
        let field = EnergyField::new(&img);
        let p = DiscParams::new(8.0, 8.0, 0.4, 22.0, 25.0);
        assert_eq!(field.gradient_continuum(&p, 128).unwrap().d_theta, 0.0);
        // a rotated polygon is not quite the same region
        let g = field.gradient(&p, 128).unwrap();
        assert!(g.d_theta.abs() < 1e-2, "{g:?}");
    }

    #[test]
    fn exact_gradient_approaches_continuum() {
        let img = crate::phantom::smooth_random(96, 96, 3.0, 5);
        let field = EnergyField::new(&img);
        let p = DiscParams::new(14.0, 9.0, 1.1, 47.0, 50.0);
        let exact = field.gradient(&p, 2048).unwrap().to_array();
        let cont = field.gradient_continuum(&p, 2048).unwrap().to_array();
        for (e, c) in exact.iter().zip(cont) {
            assert!(
                (e - c).abs() < 1e-4 + 1e-3 * c.abs(),
                "{exact:?} vs {cont:?}"
            );
        }
    }

    #[test]
    fn degenerate_disc_is_rejected() {
        let img = GrayImage::filled(8, 8, 0.5);
        let p = DiscParams::new(1e-4, 1e-4, 0.0, 4.0, 4.0);
        assert!(matches!(energy(&img, &p), Err(Error::DegenerateDisc(_))));
        assert!(matches!(
            energy_pixelsum(&img, &p),
            Err(Error::DegenerateDisc(_))
        ));
        let p = DiscParams::new(f64::NAN, 3.0, 0.0, 4.0, 4.0);
        assert!(gradient(&img, &p).is_err());
    }

    #[test]
    fn offscreen_disc_uses_border_values() {
        let img = GrayImage::from_fn(16, 16, |x, _| if x < 8 { 0.2 } else { 0.9 });
        let p = DiscParams::circle(5.0, -100.0, 8.0);
        let a = energy(&img, &p).unwrap();
        let b = energy_pixelsum(&img, &p).unwrap();
        assert!(a.e.is_finite() && b.e.is_finite());
        // the clamped field is constant 0.2 out there
        assert!(a.e.abs() < 1e-9);
        assert!((a.e2 - 0.2 * PI * 25.0).abs() < 1e-6);
    }
}
