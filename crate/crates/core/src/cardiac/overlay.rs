use crate::imaging::png_io::encode_rgb8;
use crate::imaging::{BinaryMask, GrayImage};

const FIT: [u8; 3] = [255, 64, 32];
const TRUTH: [u8; 3] = [40, 220, 80];

/// RGB raster of the slice with the label outline (green) and the fitted
/// contour (red) drawn on top.
pub fn render_overlay(
    img: &GrayImage,
    contour: &[[f64; 2]],
    truth: Option<&BinaryMask>,
) -> Vec<u8> {
    let (w, h) = (img.width(), img.height());
    let mut rgb: Vec<u8> = img.to_u8().into_iter().flat_map(|v| [v, v, v]).collect();
    let mut put = |x: i64, y: i64, c: [u8; 3]| {
        if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
            let i = 3 * (y as usize * w + x as usize);
            rgb[i..i + 3].copy_from_slice(&c);
        }
    };
    if let Some(m) = truth {
        for y in 0..h {
            for x in 0..w {
                if m.get(x, y) {
                    let edge = x == 0
                        || y == 0
                        || x + 1 == w
                        || y + 1 == h
                        || !m.get(x - 1, y)
                        || !m.get(x + 1, y)
                        || !m.get(x, y - 1)
                        || !m.get(x, y + 1);
                    if edge {
                        put(x as i64, y as i64, TRUTH);
                    }
                }
            }
        }
    }
    for seg in contour.windows(2) {
        let ([x0, y0], [x1, y1]) = (seg[0], seg[1]);
        let steps = ((x1 - x0).abs().max((y1 - y0).abs()) * 2.0).ceil().max(1.0) as usize;
        for k in 0..=steps {
            let t = k as f64 / steps as f64;
            put(
                (x0 + t * (x1 - x0)).round() as i64,
                (y0 + t * (y1 - y0)).round() as i64,
                FIT,
            );
        }
    }
    rgb
}

pub fn overlay_png(img: &GrayImage, contour: &[[f64; 2]], truth: Option<&BinaryMask>) -> Vec<u8> {
    encode_rgb8(
        img.width(),
        img.height(),
        &render_overlay(img, contour, truth),
    )
}
