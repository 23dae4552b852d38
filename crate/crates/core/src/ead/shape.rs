use std::f64::consts::TAU;

use super::{DiscParams, Ring};
use crate::imaging::BinaryMask;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryPoint {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

/// Maps template point `(r cos t, r sin t)` through the disc's affine map.
#[inline]
pub(crate) fn map_point(
    p: &DiscParams,
    r: f64,
    cos_t: f64,
    sin_t: f64,
    cos_th: f64,
    sin_th: f64,
) -> (f64, f64) {
    let u = r * cos_t;
    let v = r * sin_t;
    (
        p.a * cos_th * u + p.b * sin_th * v + p.xc,
        -p.a * sin_th * u + p.b * cos_th * v + p.yc,
    )
}

/// `n` points of a ring at `t_k = 2πk/n`.
pub fn boundary_points(p: &DiscParams, ring: Ring, n: usize) -> Vec<BoundaryPoint> {
    let r = ring.radius();
    let (sin_th, cos_th) = p.theta.sin_cos();
    (0..n)
        .map(|k| {
            let t = TAU * k as f64 / n as f64;
            let (sin_t, cos_t) = t.sin_cos();
            let (x, y) = map_point(p, r, cos_t, sin_t, cos_th, sin_th);
            BoundaryPoint { x, y, t }
        })
        .collect()
}

/// Inner-ellipse coordinates `(u, v)` of image point `(x, y)`, scaled so the
/// inner boundary is `u² + v² = 1`.
#[inline]
pub(crate) fn to_unit(p: &DiscParams, x: f64, y: f64, cos_th: f64, sin_th: f64) -> (f64, f64) {
    let dx = x - p.xc;
    let dy = y - p.yc;
    (
        (dx * cos_th - dy * sin_th) / p.a,
        (dx * sin_th + dy * cos_th) / p.b,
    )
}

/// Pixels whose centers lie inside (or on) the inner ellipse.
pub fn rasterize(p: &DiscParams, width: usize, height: usize) -> BinaryMask {
    let mut mask = BinaryMask::new(width, height);
    if !(p.is_finite() && p.a > 0.0 && p.b > 0.0) {
        return mask;
    }
    let (sin_th, cos_th) = p.theta.sin_cos();
    let reach = p.a.max(p.b);
    let x0 = (p.xc - reach).floor().max(0.0) as usize;
    let y0 = (p.yc - reach).floor().max(0.0) as usize;
    let x1 = ((p.xc + reach).ceil().max(-1.0) as i64).min(width as i64 - 1);
    let y1 = ((p.yc + reach).ceil().max(-1.0) as i64).min(height as i64 - 1);
    if x1 < 0 || y1 < 0 {
        return mask;
    }
    for y in y0..=y1 as usize {
        for x in x0..=x1 as usize {
            let (u, v) = to_unit(p, x as f64, y as f64, cos_th, sin_th);
            if u * u + v * v <= 1.0 {
                mask.set(x, y, true);
            }
        }
    }
    mask
}

/// Closed inner-ellipse polyline: `n` vertices followed by the first vertex
/// again.
pub fn contour(p: &DiscParams, n: usize) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = boundary_points(p, Ring::Inner, n)
        .into_iter()
        .map(|b| [b.x, b.y])
        .collect();
    if let Some(&first) = pts.first() {
        pts.push(first);
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

    #[test]
    fn boundary_examples() {
        let p = DiscParams::circle(1.0, 5.0, 7.0);
        let pts = boundary_points(&p, Ring::Inner, 8);
        assert_eq!((pts[0].x, pts[0].y), (6.0, 7.0));

        let p = DiscParams::new(2.0, 1.0, 0.0, 5.0, 7.0);
        let pts = boundary_points(&p, Ring::Outer, 8);
        assert_eq!(pts[2].t, FRAC_PI_2);
        assert!((pts[2].x - 5.0).abs() < 1e-12);
        assert!((pts[2].y - (7.0 + SQRT_2)).abs() < 1e-12);
    }

    #[test]
    fn antipodal_points_reflect_through_center() {
        let p = DiscParams::new(7.0, 3.0, 1.1, 20.0, -4.0);
        for ring in [Ring::Inner, Ring::Outer] {
            let pts = boundary_points(&p, ring, 64);
            for k in 0..32 {
                let (a, b) = (pts[k], pts[k + 32]);
                assert!((a.x + b.x - 2.0 * p.xc).abs() < 1e-12);
                assert!((a.y + b.y - 2.0 * p.yc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rasterize_radius_two_counts_thirteen() {
        // brute force: lattice points with dx² + dy² ≤ 4
        let brute = (-2i32..=2)
            .flat_map(|dx| (-2i32..=2).map(move |dy| (dx, dy)))
            .filter(|(dx, dy)| dx * dx + dy * dy <= 4)
            .count();
        assert_eq!(brute, 13);
        let m = rasterize(&DiscParams::circle(2.0, 2.0, 2.0), 5, 5);
        assert_eq!(m.count(), brute);
    }

    #[test]
    fn rasterize_degenerate_and_offscreen() {
        let m = rasterize(&DiscParams::circle(0.4, 2.5, 2.5), 5, 5);
        assert_eq!(m.count(), 0);
        let m = rasterize(&DiscParams::circle(3.0, -50.0, -50.0), 5, 5);
        assert_eq!(m.count(), 0);
        let m = rasterize(&DiscParams::circle(3.0, 500.0, 2.0), 5, 5);
        assert_eq!(m.count(), 0);
    }

    #[test]
    fn rotated_circle_mask_is_unchanged() {
        let base = rasterize(&DiscParams::circle(6.3, 10.2, 9.7), 24, 24);
        for th in [0.3, 1.0, 2.5, PI - 1e-9] {
            let m = rasterize(&DiscParams::new(6.3, 6.3, th, 10.2, 9.7), 24, 24);
            assert_eq!(m, base);
        }
    }

    #[test]
    fn contour_vertices_on_ellipse() {
        let p = DiscParams::new(9.0, 4.0, 0.7, 30.0, 20.0);
        let c = contour(&p, 100);
        assert_eq!(c.len(), 101);
        assert_eq!(c[0], c[100]);
        let (s, co) = p.theta.sin_cos();
        for v in &c {
            let (u, w) = to_unit(&p, v[0], v[1], co, s);
            assert!((u * u + w * w - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn contour_four_points() {
        let c = contour(&DiscParams::circle(1.0, 0.0, 0.0), 4);
        let expect = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        for (v, e) in c.iter().zip(expect) {
            assert!((v[0] - e[0]).abs() < 1e-15 && (v[1] - e[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn contour_perimeter_matches_ramanujan() {
        for (a, b) in [(20.0, 10.0), (30.0, 29.0), (12.0, 3.0)] {
            let c = contour(&DiscParams::new(a, b, 0.4, 0.0, 0.0), 256);
            let perim: f64 = c
                .windows(2)
                .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
                .sum();
            let h = ((a - b) / (a + b)).powi(2);
            let ramanujan = PI * (a + b) * (1.0 + 3.0 * h / (10.0 + (4.0 - 3.0 * h).sqrt()));
            assert!(
                (perim - ramanujan).abs() / ramanujan < 0.01,
                "{a} {b}: {perim} vs {ramanujan}"
            );
        }
    }
}
