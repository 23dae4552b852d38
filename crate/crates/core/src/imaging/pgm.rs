//! Binary PGM (`P5`) decoding.

use crate::error::{Error, Result};

/// Raw PGM raster: samples divided by `maxval`, so in `[0, 1]` before any
/// percentile normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct PgmRaster {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<f64>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_ws_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_ws_and_comments();
        let start = self.pos;
        let mut value: u32 = 0;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add((self.bytes[self.pos] - b'0') as u32))
                .ok_or_else(|| Error::format(start, format!("{what} overflows")))?;
            self.pos += 1;
        }
        if self.pos == start {
            return Err(Error::format(start, format!("expected {what}")));
        }
        Ok(value)
    }
}

pub fn parse_pgm(bytes: &[u8]) -> Result<PgmRaster> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        if bytes.len() >= 2 && &bytes[..2] == b"P2" {
            return Err(Error::Unsupported("ASCII PGM (P2)".into()));
        }
        return Err(Error::format(0, "missing P5 magic"));
    }
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval_pos = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format(2, format!("zero dimension {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(maxval_pos, format!("maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(Error::format(cur.pos, "expected whitespace after maxval"));
    }
    let data_start = cur.pos + 1;
    let bps = if maxval < 256 { 1 } else { 2 };
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(bps))
        .ok_or_else(|| Error::Size("PGM raster size overflows".into()))?;
    let end = data_start
        .checked_add(need)
        .ok_or_else(|| Error::Size("PGM raster size overflows".into()))?;
    if end > bytes.len() {
        return Err(Error::format(
            bytes.len(),
            format!("raster truncated: need {need} bytes from offset {data_start}"),
        ));
    }
    let raster = &bytes[data_start..end];
    let scale = maxval as f64;
    let samples = if bps == 1 {
        raster
            .iter()
            .map(|&v| (v as f64 / scale).min(1.0))
            .collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| (u16::from_be_bytes([c[0], c[1]]) as f64 / scale).min(1.0))
            .collect()
    };
    Ok(PgmRaster {
        width,
        height,
        maxval: maxval as u16,
        samples,
    })
}

/// Encodes 8-bit samples as binary PGM.
pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_bit_divides_by_maxval() {
        let bytes = b"P5\n# comment\n3 1\n255\n\x00\x33\xff";
        let r = parse_pgm(bytes).unwrap();
        assert_eq!((r.width, r.height, r.maxval), (3, 1, 255));
        assert_eq!(r.samples, vec![0.0, 0.2, 1.0]);
    }

    #[test]
    fn sixteen_bit_big_endian() {
        let bytes = b"P5 2 1 1000 \x00\x00\x01\xf4";
        let r = parse_pgm(bytes).unwrap();
        assert_eq!(r.samples, vec![0.0, 0.5]);
    }

    #[test]
    fn truncated_and_bad_headers() {
        assert!(matches!(
            parse_pgm(b"P5\n4 4\n255\n\x00\x00"),
            Err(Error::Format { .. })
        ));
        assert!(matches!(parse_pgm(b"P5\n4"), Err(Error::Format { .. })));
        assert!(matches!(
            parse_pgm(b"P6\n1 1\n255\n\x00"),
            Err(Error::Format { offset: 0, .. })
        ));
        assert!(matches!(
            parse_pgm(b"P2\n1 1\n255\n0"),
            Err(Error::Unsupported(_))
        ));
        assert!(parse_pgm(b"P5\n99999999999 1\n255\n").is_err());
        assert!(parse_pgm(b"P5\n1 1\n0\n\x00").is_err());
    }

    #[test]
    fn encode_round_trip() {
        let px = [0u8, 128, 255, 7];
        let r = parse_pgm(&encode_pgm(2, 2, &px)).unwrap();
        let back: Vec<u8> = r
            .samples
            .iter()
            .map(|v| (v * 255.0).round() as u8)
            .collect();
        assert_eq!(back, px);
    }
}
