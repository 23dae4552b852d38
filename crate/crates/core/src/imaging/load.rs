use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{nifti, normalize, pgm, png_io, BinaryMask, CineStudy, GrayImage};
use crate::error::{Error, Result};

const PNG_SIGNATURE: &[u8; 8] = b"\x89PNG\r\n\x1a\n";

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Decodes a PGM, PNG or single-plane NIfTI byte stream and normalizes it.
pub fn decode_image(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.starts_with(b"P5") || bytes.starts_with(b"P2") {
        let r = pgm::parse_pgm(bytes)?;
        return normalize(&r.samples, r.width, r.height);
    }
    if bytes.starts_with(PNG_SIGNATURE) {
        let r = png_io::parse_png(bytes)?;
        return normalize(&r.samples, r.width, r.height);
    }
    let vol = nifti::parse_nifti(bytes)?;
    if vol.nz() != 1 || vol.nt() != 1 {
        return Err(Error::Unsupported(format!(
            "expected a single image plane, NIfTI has {} slices x {} frames",
            vol.nz(),
            vol.nt()
        )));
    }
    let img = normalize(vol.plane(0, 0), vol.nx(), vol.ny())?;
    Ok(img.with_spacing(vol.header.pixdim[0], vol.header.pixdim[1]))
}

pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    decode_image(&read(path.as_ref())?)
}

/// Per-study metadata not carried by the image file itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyOptions {
    pub id: Option<String>,
    pub ed_phase: usize,
    pub es_phase: Option<usize>,
    pub labels: Option<PathBuf>,
    pub lv_label: i32,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            id: None,
            ed_phase: 0,
            es_phase: None,
            labels: None,
            lv_label: 1,
        }
    }
}

/// `study.toml` inside a study directory. Paths are relative to the directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyManifest {
    pub id: Option<String>,
    pub image: PathBuf,
    pub labels: Option<PathBuf>,
    #[serde(default)]
    pub ed_phase: usize,
    pub es_phase: Option<usize>,
    #[serde(default = "default_lv_label")]
    pub lv_label: i32,
}

fn default_lv_label() -> i32 {
    1
}

impl StudyManifest {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("study manifest: {e}")))
    }
}

/// Loads a 3D/4D NIfTI cine stack, or a directory holding `study.toml`.
///
/// Each `(z, phase)` plane is normalized independently. A 3D volume is read as
/// a single phase. When ES is not given it defaults to the last phase.
pub fn load_study(path: impl AsRef<Path>, opts: &StudyOptions) -> Result<CineStudy> {
    let path = path.as_ref();
    if path.is_dir() {
        let manifest_path = path.join("study.toml");
        let text =
            std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let m = StudyManifest::parse(&text)?;
        let merged = StudyOptions {
            id: m
                .id
                .or_else(|| opts.id.clone())
                .or_else(|| path.file_name().map(|n| n.to_string_lossy().into_owned())),
            ed_phase: m.ed_phase,
            es_phase: m.es_phase.or(opts.es_phase),
            labels: m.labels.map(|l| path.join(l)),
            lv_label: m.lv_label,
        };
        return load_study(path.join(m.image), &merged);
    }

    let vol = nifti::parse_nifti(&read(path)?)?;
    let id = opts.id.clone().unwrap_or_else(|| study_id_from_path(path));
    let labels = match &opts.labels {
        Some(lp) => Some(nifti::parse_nifti(&read(lp)?)?),
        None => None,
    };
    study_from_volumes(id, &vol, labels.as_ref(), opts)
}

pub(crate) fn study_id_from_path(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "study".into());
    name.trim_end_matches(".gz")
        .trim_end_matches(".nii")
        .to_string()
}

/// Builds a study from decoded volumes (image plus optional label map).
pub fn study_from_volumes(
    id: String,
    vol: &nifti::NiftiVolume,
    labels: Option<&nifti::NiftiVolume>,
    opts: &StudyOptions,
) -> Result<CineStudy> {
    let (nx, ny, nz, nt) = (vol.nx(), vol.ny(), vol.nz(), vol.nt());
    let [sx, sy, sz, _] = vol.header.pixdim;
    let mut slices = Vec::with_capacity(nz * nt);
    for z in 0..nz {
        for t in 0..nt {
            slices.push(normalize(vol.plane(z, t), nx, ny)?.with_spacing(sx, sy));
        }
    }
    let es = opts.es_phase.unwrap_or(nt - 1);
    let study = CineStudy::new(id, slices, nz, nt, sz, opts.ed_phase, es)?;
    match labels {
        None => Ok(study),
        Some(lab) => {
            if lab.header.dims != vol.header.dims {
                return Err(Error::Dimension(format!(
                    "label volume {:?} does not match image {:?}",
                    lab.header.dims, vol.header.dims
                )));
            }
            let target = opts.lv_label as f64;
            let mut masks = Vec::with_capacity(nz * nt);
            for z in 0..nz {
                for t in 0..nt {
                    let bits = lab
                        .plane(z, t)
                        .iter()
                        .map(|v| v.round() == target)
                        .collect();
                    masks.push(BinaryMask::from_bits(nx, ny, bits)?);
                }
            }
            study.with_labels(masks)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_is_scaled_then_normalized() {
        let bytes = pgm::encode_pgm(3, 1, &[0, 51, 255]);
        let img = decode_image(&bytes).unwrap();
        assert_eq!(img.pixels(), &[0.0, 0.2, 1.0]);
    }

    #[test]
    fn manifest_parsing() {
        let m = StudyManifest::parse("image = \"a.nii.gz\"\nes_phase = 9\n").unwrap();
        assert_eq!(m.image, PathBuf::from("a.nii.gz"));
        assert_eq!((m.ed_phase, m.es_phase, m.lv_label), (0, Some(9), 1));
        assert!(StudyManifest::parse("image = 3").is_err());
        assert!(StudyManifest::parse("image = \"x\"\nbogus = 1").is_err());
    }

    #[test]
    fn ids_from_paths() {
        assert_eq!(
            study_id_from_path(Path::new("/a/A1B2_sa.nii.gz")),
            "A1B2_sa"
        );
        assert_eq!(study_id_from_path(Path::new("x.nii")), "x");
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_image("/nonexistent/x.pgm"),
            Err(Error::Io { .. })
        ));
    }
}
