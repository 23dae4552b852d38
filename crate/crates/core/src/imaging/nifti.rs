//! NIfTI-1 subset: single-file `.nii` (optionally gzip-compressed),
//! little-endian, datatypes uint8/int16/uint16/float32, 2D to 4D. The writer
//! exists for fixtures and emits the same subset.

use std::io::Read;

use crate::error::{Error, Result};

pub const HEADER_SIZE: usize = 348;
const MAGIC_OFFSET: usize = 344;
const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];
/// Upper bound on decompressed payload; larger inputs are rejected.
const MAX_DECOMPRESSED: u64 = 1 << 31;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Datatype {
    U8,
    I16,
    U16,
    F32,
}

impl Datatype {
    fn from_code(code: i16) -> Option<Self> {
        match code {
            2 => Some(Datatype::U8),
            4 => Some(Datatype::I16),
            512 => Some(Datatype::U16),
            16 => Some(Datatype::F32),
            _ => None,
        }
    }

    pub fn code(self) -> i16 {
        match self {
            Datatype::U8 => 2,
            Datatype::I16 => 4,
            Datatype::U16 => 512,
            Datatype::F32 => 16,
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            Datatype::U8 => 1,
            Datatype::I16 | Datatype::U16 => 2,
            Datatype::F32 => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NiftiHeader {
    /// `dim[1..=4]`, with absent trailing dimensions set to 1.
    pub dims: [usize; 4],
    pub ndim: usize,
    pub datatype: Datatype,
    /// `pixdim[1..=4]`; non-positive entries are replaced by 1.0.
    pub pixdim: [f64; 4],
    pub vox_offset: usize,
    pub scl_slope: f64,
    pub scl_inter: f64,
}

impl NiftiHeader {
    pub fn voxel_count(&self) -> Option<usize> {
        self.dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
    }
}

/// A decoded volume; `data` is x-fastest, then y, z, t.
#[derive(Clone, Debug)]
pub struct NiftiVolume {
    pub header: NiftiHeader,
    pub data: Vec<f64>,
}

impl NiftiVolume {
    pub fn nx(&self) -> usize {
        self.header.dims[0]
    }
    pub fn ny(&self) -> usize {
        self.header.dims[1]
    }
    pub fn nz(&self) -> usize {
        self.header.dims[2]
    }
    pub fn nt(&self) -> usize {
        self.header.dims[3]
    }

    /// The `nx * ny` plane at `(z, t)`.
    pub fn plane(&self, z: usize, t: usize) -> &[f64] {
        let n = self.nx() * self.ny();
        let start = (t * self.nz() + z) * n;
        &self.data[start..start + n]
    }
}

fn i16_at(b: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([b[off], b[off + 1]])
}

fn i32_at(b: &[u8], off: usize) -> i32 {
    i32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

fn f32_at(b: &[u8], off: usize) -> f32 {
    f32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

/// Decompresses gzip input, passing anything else through.
pub fn maybe_gunzip(bytes: &[u8]) -> Result<std::borrow::Cow<'_, [u8]>> {
    if bytes.len() >= 2 && bytes[..2] == GZIP_MAGIC {
        let mut out = Vec::new();
        flate2::read::MultiGzDecoder::new(bytes)
            .take(MAX_DECOMPRESSED + 1)
            .read_to_end(&mut out)
            .map_err(|e| Error::format(0, format!("gzip stream: {e}")))?;
        if out.len() as u64 > MAX_DECOMPRESSED {
            return Err(Error::Size("decompressed NIfTI exceeds 2 GiB".into()));
        }
        Ok(std::borrow::Cow::Owned(out))
    } else {
        Ok(std::borrow::Cow::Borrowed(bytes))
    }
}

pub fn parse_header(b: &[u8]) -> Result<NiftiHeader> {
    if b.len() < HEADER_SIZE {
        return Err(Error::format(
            b.len(),
            format!("header truncated: {} of {HEADER_SIZE} bytes", b.len()),
        ));
    }
    let sizeof_hdr = i32_at(b, 0);
    if sizeof_hdr != HEADER_SIZE as i32 {
        if sizeof_hdr.swap_bytes() == HEADER_SIZE as i32 {
            return Err(Error::Unsupported("big-endian NIfTI".into()));
        }
        return Err(Error::format(
            0,
            format!("sizeof_hdr is {sizeof_hdr}, expected 348"),
        ));
    }
    if &b[MAGIC_OFFSET..MAGIC_OFFSET + 4] != b"n+1\0" {
        if &b[MAGIC_OFFSET..MAGIC_OFFSET + 4] == b"ni1\0" {
            return Err(Error::Unsupported("two-file NIfTI (.hdr/.img)".into()));
        }
        return Err(Error::format(MAGIC_OFFSET, "missing `n+1` magic"));
    }

    let ndim = i16_at(b, 40);
    if !(2..=4).contains(&ndim) {
        if (5..=7).contains(&ndim) {
            return Err(Error::Unsupported(format!("{ndim}-dimensional NIfTI")));
        }
        return Err(Error::format(40, format!("dim[0] = {ndim}")));
    }
    let ndim = ndim as usize;
    let mut dims = [1usize; 4];
    for (i, d) in dims.iter_mut().enumerate().take(ndim) {
        let off = 42 + 2 * i;
        let v = i16_at(b, off);
        if v < 1 {
            return Err(Error::format(off, format!("dim[{}] = {v}", i + 1)));
        }
        *d = v as usize;
    }

    let code = i16_at(b, 70);
    let datatype = Datatype::from_code(code)
        .ok_or_else(|| Error::Unsupported(format!("NIfTI datatype code {code}")))?;
    let bitpix = i16_at(b, 72);
    if bitpix as usize != datatype.bytes() * 8 {
        return Err(Error::format(
            72,
            format!("bitpix {bitpix} disagrees with datatype {code}"),
        ));
    }

    let mut pixdim = [1.0f64; 4];
    for (i, p) in pixdim.iter_mut().enumerate() {
        let v = f32_at(b, 80 + 4 * i) as f64;
        if v.is_finite() && v > 0.0 {
            *p = v;
        }
    }

    let vox = f32_at(b, 108);
    if !vox.is_finite() || vox < HEADER_SIZE as f32 || vox > (1u64 << 32) as f32 {
        return Err(Error::format(108, format!("vox_offset {vox}")));
    }
    let slope = f32_at(b, 112) as f64;
    let inter = f32_at(b, 116) as f64;
    let (scl_slope, scl_inter) = if slope.is_finite() && slope != 0.0 && inter.is_finite() {
        (slope, inter)
    } else {
        (1.0, 0.0)
    };

    Ok(NiftiHeader {
        dims,
        ndim,
        datatype,
        pixdim,
        vox_offset: vox as usize,
        scl_slope,
        scl_inter,
    })
}

/// Decodes a complete `.nii` or `.nii.gz` byte stream.
pub fn parse_nifti(bytes: &[u8]) -> Result<NiftiVolume> {
    let raw = maybe_gunzip(bytes)?;
    let b: &[u8] = &raw;
    let header = parse_header(b)?;
    let count = header
        .voxel_count()
        .ok_or_else(|| Error::Size("voxel count overflows".into()))?;
    let nbytes = count
        .checked_mul(header.datatype.bytes())
        .ok_or_else(|| Error::Size("payload size overflows".into()))?;
    let start = header.vox_offset;
    let end = start
        .checked_add(nbytes)
        .ok_or_else(|| Error::Size("payload size overflows".into()))?;
    if end > b.len() {
        return Err(Error::format(
            b.len(),
            format!(
                "payload truncated: need bytes {start}..{end}, have {}",
                b.len()
            ),
        ));
    }
    let payload = &b[start..end];
    let (slope, inter) = (header.scl_slope, header.scl_inter);
    let data: Vec<f64> = match header.datatype {
        Datatype::U8 => payload.iter().map(|&v| v as f64).collect(),
        Datatype::I16 => payload
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64)
            .collect(),
        Datatype::U16 => payload
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) as f64)
            .collect(),
        Datatype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
    };
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::format(
            start + pos * header.datatype.bytes(),
            "non-finite voxel value",
        ));
    }
    let data = if slope == 1.0 && inter == 0.0 {
        data
    } else {
        data.into_iter().map(|v| v * slope + inter).collect()
    };
    Ok(NiftiVolume { header, data })
}

/// Encodes `data` (x-fastest) as a `.nii` stream, gzip-compressed if asked.
/// Values are cast to `datatype` with saturation; no intensity scaling.
pub fn encode_nifti(
    dims: [usize; 4],
    pixdim: [f32; 4],
    datatype: Datatype,
    data: &[f64],
    gzip: bool,
) -> Result<Vec<u8>> {
    let ndim = if dims[3] > 1 {
        4
    } else if dims[2] > 1 {
        3
    } else {
        2
    };
    if dims.iter().any(|&d| d == 0 || d > i16::MAX as usize)
        || dims.iter().product::<usize>() != data.len()
    {
        return Err(Error::Dimension(format!(
            "dims {dims:?} for {} samples",
            data.len()
        )));
    }
    let mut b = vec![0u8; HEADER_SIZE + 4];
    b[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
    b[40..42].copy_from_slice(&(ndim as i16).to_le_bytes());
    for (i, &d) in dims.iter().enumerate() {
        b[42 + 2 * i..44 + 2 * i].copy_from_slice(&(d as i16).to_le_bytes());
    }
    b[70..72].copy_from_slice(&datatype.code().to_le_bytes());
    b[72..74].copy_from_slice(&(8 * datatype.bytes() as i16).to_le_bytes());
    b[76..80].copy_from_slice(&1.0f32.to_le_bytes());
    for (i, p) in pixdim.iter().enumerate() {
        b[80 + 4 * i..84 + 4 * i].copy_from_slice(&p.to_le_bytes());
    }
    b[108..112].copy_from_slice(&((HEADER_SIZE + 4) as f32).to_le_bytes());
    b[112..116].copy_from_slice(&1.0f32.to_le_bytes());
    b[MAGIC_OFFSET..MAGIC_OFFSET + 4].copy_from_slice(b"n+1\0");
    b.reserve(data.len() * datatype.bytes());
    for &v in data {
        match datatype {
            Datatype::U8 => b.push(v.round() as u8),
            Datatype::I16 => b.extend_from_slice(&(v.round() as i16).to_le_bytes()),
            Datatype::U16 => b.extend_from_slice(&(v.round() as u16).to_le_bytes()),
            Datatype::F32 => b.extend_from_slice(&(v as f32).to_le_bytes()),
        }
    }
    if !gzip {
        return Ok(b);
    }
    use std::io::Write;
    let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
    enc.write_all(&b)
        .and_then(|_| enc.finish())
        .map_err(|e| Error::io("<gzip>", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Header bytes laid out field by field from the NIfTI-1 definition.
    fn header_bytes(dims: &[i16], datatype: i16, bitpix: i16, pixdim: &[f32]) -> Vec<u8> {
        let mut h = vec![0u8; HEADER_SIZE];
        h[0..4].copy_from_slice(&348i32.to_le_bytes());
        h[40..42].copy_from_slice(&(dims.len() as i16).to_le_bytes());
        for (i, d) in dims.iter().enumerate() {
            h[42 + 2 * i..44 + 2 * i].copy_from_slice(&d.to_le_bytes());
        }
        h[70..72].copy_from_slice(&datatype.to_le_bytes());
        h[72..74].copy_from_slice(&bitpix.to_le_bytes());
        for (i, p) in pixdim.iter().enumerate() {
            h[80 + 4 * i..84 + 4 * i].copy_from_slice(&p.to_le_bytes());
        }
        h[108..112].copy_from_slice(&352.0f32.to_le_bytes());
        h[344..348].copy_from_slice(b"n+1\0");
        h.extend_from_slice(&[0u8; 4]);
        h
    }

    #[test]
    fn writer_round_trips() {
        let data: Vec<f64> = (0..24).map(|v| v as f64 * 3.0 - 20.0).collect();
        for gz in [false, true] {
            let bytes = encode_nifti(
                [4, 3, 1, 2],
                [1.5, 1.25, 8.0, 1.0],
                Datatype::I16,
                &data,
                gz,
            )
            .unwrap();
            let vol = parse_nifti(&bytes).unwrap();
            assert_eq!(vol.header.dims, [4, 3, 1, 2]);
            assert_eq!(vol.header.ndim, 4);
            assert_eq!(vol.header.pixdim, [1.5, 1.25, 8.0, 1.0]);
            assert_eq!(vol.data, data);
        }
        assert!(encode_nifti([2, 2, 1, 1], [1.0; 4], Datatype::U8, &[0.0; 3], false).is_err());
    }

    #[test]
    fn minimal_int16_volume() {
        let mut b = header_bytes(&[3, 2, 2], 4, 16, &[1.25, 1.5, 8.0]);
        for v in 0..12i16 {
            b.extend_from_slice(&(v - 3).to_le_bytes());
        }
        let vol = parse_nifti(&b).unwrap();
        assert_eq!(vol.header.dims, [3, 2, 2, 1]);
        assert_eq!(vol.header.pixdim[..3], [1.25, 1.5, 8.0]);
        assert_eq!(vol.plane(1, 0), &[3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
    }

    #[test]
    fn gzip_and_scaling() {
        use flate2::write::GzEncoder;
        use std::io::Write;
        let mut b = header_bytes(&[2, 1, 1, 2], 2, 8, &[]);
        b[112..116].copy_from_slice(&2.0f32.to_le_bytes());
        b[116..120].copy_from_slice(&1.0f32.to_le_bytes());
        b.extend_from_slice(&[0, 1, 2, 3]);
        let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::fast());
        enc.write_all(&b).unwrap();
        let vol = parse_nifti(&enc.finish().unwrap()).unwrap();
        assert_eq!(vol.nt(), 2);
        assert_eq!(vol.header.pixdim, [1.0; 4]);
        assert_eq!(vol.data, vec![1.0, 3.0, 5.0, 7.0]);
    }

    #[test]
    fn truncated_inputs_are_format_errors() {
        let mut b = header_bytes(&[4, 4, 1], 16, 32, &[]);
        b.extend_from_slice(&[0u8; 10]);
        assert!(matches!(parse_nifti(&b), Err(Error::Format { .. })));
        assert!(matches!(
            parse_nifti(&b[..100]),
            Err(Error::Format { offset: 100, .. })
        ));
        assert!(matches!(parse_nifti(&[]), Err(Error::Format { .. })));
    }

    #[test]
    fn rejects_unsupported() {
        let b = header_bytes(&[2, 2, 1], 64, 64, &[]);
        assert!(matches!(parse_nifti(&b), Err(Error::Unsupported(_))));
        let mut b = header_bytes(&[2, 2, 1], 2, 8, &[]);
        b[0..4].copy_from_slice(&348i32.to_be_bytes());
        assert!(matches!(parse_nifti(&b), Err(Error::Unsupported(_))));
        let mut b = header_bytes(&[2, 2, 1], 2, 8, &[]);
        b[344..348].copy_from_slice(b"abcd");
        assert!(matches!(
            parse_nifti(&b),
            Err(Error::Format { offset: 344, .. })
        ));
    }

    #[test]
    fn huge_dims_do_not_allocate() {
        let b = header_bytes(&[32767, 32767, 32767, 32767], 16, 32, &[]);
        assert!(parse_nifti(&b).is_err());
    }
}
