//! 8-bit grayscale PNG decoding, plus gray/RGB encoding for rendered slices
//! and overlays.

use std::io::Cursor;

use crate::error::{Error, Result};

/// Decoded grayscale raster, samples divided by 255.
#[derive(Clone, Debug, PartialEq)]
pub struct PngRaster {
    pub width: usize,
    pub height: usize,
    pub samples: Vec<f64>,
}

const DECODE_LIMIT_BYTES: usize = 256 << 20;

pub fn parse_png(bytes: &[u8]) -> Result<PngRaster> {
    let decoder = png::Decoder::new_with_limits(
        Cursor::new(bytes),
        png::Limits {
            bytes: DECODE_LIMIT_BYTES,
        },
    );
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::format(0, format!("png: {e}")))?;
    let info = reader.info();
    let (color, depth) = (info.color_type, info.bit_depth);
    if color != png::ColorType::Grayscale || depth != png::BitDepth::Eight {
        return Err(Error::Unsupported(format!(
            "PNG {color:?} at {depth:?}; only 8-bit grayscale is read"
        )));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Size("PNG frame too large".into()))?;
    let mut buf = vec![0u8; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(bytes.len(), format!("png data: {e}")))?;
    let (width, height) = (frame.width as usize, frame.height as usize);
    let stride = frame.line_size;
    let mut samples = Vec::with_capacity(width * height);
    for row in buf.chunks(stride).take(height) {
        samples.extend(row[..width].iter().map(|&v| v as f64 / 255.0));
    }
    if width == 0 || height == 0 || samples.len() != width * height {
        return Err(Error::format(bytes.len(), "PNG frame size mismatch"));
    }
    Ok(PngRaster {
        width,
        height,
        samples,
    })
}

fn encode(width: usize, height: usize, data: &[u8], color: png::ColorType) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().expect("png header to memory");
        writer.write_image_data(data).expect("png data to memory");
    }
    out
}

pub fn encode_gray8(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height);
    encode(width, height, pixels, png::ColorType::Grayscale)
}

pub fn encode_rgb8(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), 3 * width * height);
    encode(width, height, pixels, png::ColorType::Rgb)
}
