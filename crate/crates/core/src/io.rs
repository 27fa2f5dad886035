//! LACT1 binary arrays, PNG export, atomic file writes and Gaussian-mixture
//! prior files.
//!
//! LACT1 layout (little endian): `"LACT"`, `u8` version = 1, `u8` kind
//! (0 image, 1 sinogram, 2 vector field, 3 complex grid), `u16` reserved = 0,
//! `u32` rows, `u32` cols, `f64` pixel/bin spacing, then `f32` payload in
//! row-major order. Vector fields store the horizontal plane followed by the
//! vertical plane; complex grids interleave real and imaginary parts.

use std::io::Write;
use std::path::{Path, PathBuf};

use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffusion::{GmmComponent, GmmPrior};
use crate::fusion::{ComplexGrid, FrequencyMask};
use crate::tomo::{Image, Sinogram, UnitSpace, VectorField};

pub const MAGIC: &[u8; 4] = b"LACT";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 24;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("BadMagic: not a LACT1 file")]
    BadMagic,
    #[error("UnsupportedVersion: {0}")]
    UnsupportedVersion(u8),
    #[error("UnsupportedKind: {0}")]
    UnsupportedKind(u8),
    #[error("TruncatedPayload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("WrongKind: expected {expected:?}, found {found:?}")]
    WrongKind { expected: LactKind, found: LactKind },
    #[error("InvalidData: {0}")]
    InvalidData(String),
    #[error("Io: {0}")]
    Io(#[from] std::io::Error),
    #[error("Png: {0}")]
    Png(String),
    #[error("Parse: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LactKind {
    Image = 0,
    Sinogram = 1,
    VectorField = 2,
    Complex = 3,
}

impl LactKind {
    fn from_u8(v: u8) -> Result<Self, IoError> {
        Ok(match v {
            0 => LactKind::Image,
            1 => LactKind::Sinogram,
            2 => LactKind::VectorField,
            3 => LactKind::Complex,
            other => return Err(IoError::UnsupportedKind(other)),
        })
    }
}

/// Decoded LACT1 contents.
#[derive(Debug, Clone, PartialEq)]
pub enum LactData {
    /// Unit space is not stored; decoded images are tagged `Normalized`.
    Image(Image),
    /// Sinogram and its detector bin spacing.
    Sinogram(Sinogram, f64),
    /// Field and its pixel size.
    VectorField(VectorField, f64),
    Complex(ComplexGrid),
}

impl LactData {
    pub fn kind(&self) -> LactKind {
        match self {
            LactData::Image(_) => LactKind::Image,
            LactData::Sinogram(..) => LactKind::Sinogram,
            LactData::VectorField(..) => LactKind::VectorField,
            LactData::Complex(_) => LactKind::Complex,
        }
    }
}

fn header(kind: LactKind, rows: usize, cols: usize, spacing: f64) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(kind as u8);
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    out.extend_from_slice(&spacing.to_le_bytes());
    out
}

fn push_f32(out: &mut Vec<u8>, values: impl Iterator<Item = f64>) {
    for v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

/// Serializes to LACT1 bytes. Values are rounded to `f32`.
pub fn encode(data: &LactData) -> Vec<u8> {
    match data {
        LactData::Image(img) => {
            let mut out = header(LactKind::Image, img.height, img.width, img.pixel_size);
            push_f32(&mut out, img.data.iter().copied());
            out
        }
        LactData::Sinogram(s, spacing) => {
            let mut out = header(LactKind::Sinogram, s.n_angles, s.n_det, *spacing);
            push_f32(&mut out, s.data.iter().copied());
            out
        }
        LactData::VectorField(vf, ps) => {
            let mut out = header(LactKind::VectorField, vf.height, vf.width, *ps);
            push_f32(&mut out, vf.h.iter().chain(&vf.v).copied());
            out
        }
        LactData::Complex(g) => {
            let mut out = header(LactKind::Complex, g.height, g.width, g.pixel_size);
            push_f32(&mut out, g.data.iter().flat_map(|c| [c.re, c.im]));
            out
        }
    }
}

/// Parses LACT1 bytes, validating magic, version, kind and payload length.
pub fn decode(bytes: &[u8]) -> Result<LactData, IoError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(IoError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(IoError::TruncatedPayload { expected: HEADER_LEN, found: bytes.len() });
    }
    if bytes[4] != VERSION {
        return Err(IoError::UnsupportedVersion(bytes[4]));
    }
    let kind = LactKind::from_u8(bytes[5])?;
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let spacing = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
    if rows == 0 || cols == 0 {
        return Err(IoError::InvalidData(format!("zero dimension {rows}x{cols}")));
    }
    let per_cell = match kind {
        LactKind::Image | LactKind::Sinogram => 1,
        LactKind::VectorField | LactKind::Complex => 2,
    };
    let n = rows * cols * per_cell;
    let expected = HEADER_LEN + 4 * n;
    if bytes.len() < expected {
        return Err(IoError::TruncatedPayload { expected, found: bytes.len() });
    }
    if bytes.len() > expected {
        return Err(IoError::InvalidData(format!("{} trailing bytes", bytes.len() - expected)));
    }
    let values: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let bad = |e: crate::tomo::TomoError| IoError::InvalidData(e.to_string());
    Ok(match kind {
        LactKind::Image => LactData::Image(Image::new(cols, rows, spacing, values).map_err(bad)?.with_units(UnitSpace::Normalized)),
        LactKind::Sinogram => LactData::Sinogram(Sinogram::new(rows, cols, values).map_err(bad)?, spacing),
        LactKind::VectorField => {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(IoError::InvalidData("non-finite vector field".into()));
            }
            let (h, v) = values.split_at(rows * cols);
            LactData::VectorField(VectorField { width: cols, height: rows, h: h.to_vec(), v: v.to_vec() }, spacing)
        }
        LactKind::Complex => LactData::Complex(ComplexGrid {
            width: cols,
            height: rows,
            pixel_size: spacing,
            data: values.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect(),
        }),
    })
}

/// Writes `bytes` to a temporary file beside `path` and renames it into
/// place, so `path` is never left partially written.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    // Temporary files are created 0600; outputs should be ordinary files.
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path).map_err(|e| IoError::Io(e.error))?;
    Ok(())
}

pub fn write_lact(data: &LactData, path: &Path) -> Result<(), IoError> {
    write_atomic(path, &encode(data))
}

pub fn read_lact(path: &Path) -> Result<LactData, IoError> {
    decode(&std::fs::read(path)?)
}

pub fn read_image(path: &Path) -> Result<Image, IoError> {
    match read_lact(path)? {
        LactData::Image(img) => Ok(img),
        other => Err(IoError::WrongKind { expected: LactKind::Image, found: other.kind() }),
    }
}

/// Returns the sinogram and its stored bin spacing.
pub fn read_sinogram(path: &Path) -> Result<(Sinogram, f64), IoError> {
    match read_lact(path)? {
        LactData::Sinogram(s, sp) => Ok((s, sp)),
        other => Err(IoError::WrongKind { expected: LactKind::Sinogram, found: other.kind() }),
    }
}

pub fn write_image(img: &Image, path: &Path) -> Result<(), IoError> {
    write_lact(&LactData::Image(img.clone()), path)
}

/// Masks are stored as kind-0 images with a 0/1 payload.
pub fn write_mask(mask: &FrequencyMask, path: &Path) -> Result<(), IoError> {
    write_image(&mask.to_image(), path)
}

/// Rounds every value through `f32`, as a write/read cycle would.
pub fn quantize(img: &Image) -> Image {
    let mut out = img.clone();
    out.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
    out
}

/// 8-bit grayscale of `img`, linear over `window` and clamped.
pub fn to_gray8(img: &Image, window: (f64, f64)) -> Result<Vec<u8>, IoError> {
    let (lo, hi) = window;
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(IoError::InvalidData(format!("display window [{lo}, {hi}] is empty")));
    }
    Ok(img.data.iter().map(|v| (((v - lo) / (hi - lo)).clamp(0.0, 1.0) * 255.0).round() as u8).collect())
}

pub fn encode_png(img: &Image, window: (f64, f64)) -> Result<Vec<u8>, IoError> {
    let gray = to_gray8(img, window)?;
    let mut buf = Vec::new();
    PngEncoder::new(&mut buf)
        .write_image(&gray, img.width as u32, img.height as u32, ExtendedColorType::L8)
        .map_err(|e| IoError::Png(e.to_string()))?;
    Ok(buf)
}

pub fn write_png(img: &Image, window: (f64, f64), path: &Path) -> Result<(), IoError> {
    write_atomic(path, &encode_png(img, window)?)
}

#[derive(Serialize, Deserialize)]
struct PriorFile {
    width: usize,
    height: usize,
    components: Vec<ComponentEntry>,
}

#[derive(Serialize, Deserialize)]
struct ComponentEntry {
    weight: f64,
    /// LACT1 image, relative to the prior file.
    mean: String,
    base_std: f64,
}

/// Loads a Gaussian-mixture prior from TOML:
///
/// ```toml
/// width = 64
/// height = 64
/// [[components]]
/// weight = 0.5
/// mean = "mean0.lact"
/// base_std = 0.05
/// ```
pub fn load_gmm_prior(path: &Path) -> Result<GmmPrior, IoError> {
    let text = std::fs::read_to_string(path)?;
    let file: PriorFile = toml::from_str(&text).map_err(|e| IoError::Parse(e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut comps = Vec::with_capacity(file.components.len());
    for c in file.components {
        let mean = read_image(&base.join(&c.mean))?;
        if mean.width != file.width || mean.height != file.height {
            return Err(IoError::InvalidData(format!(
                "mean '{}' is {}x{}, prior is {}x{}",
                c.mean, mean.width, mean.height, file.width, file.height
            )));
        }
        comps.push(GmmComponent { weight: c.weight, mean: mean.data, base_std: c.base_std });
    }
    GmmPrior::new(file.width, file.height, comps).map_err(|e| IoError::InvalidData(e.to_string()))
}

/// Writes the prior as TOML with one `<stem>_mean<k>.lact` file per component
/// next to it.
pub fn save_gmm_prior(prior: &GmmPrior, path: &Path, pixel_size: f64) -> Result<(), IoError> {
    let base = path.parent().unwrap_or(Path::new("."));
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("prior");
    let mut components = Vec::new();
    for (k, c) in prior.components.iter().enumerate() {
        let name = format!("{stem}_mean{k}.lact");
        let img = Image::new(prior.width, prior.height, pixel_size, c.mean.clone())
            .map_err(|e| IoError::InvalidData(e.to_string()))?;
        write_image(&img, &base.join(&name))?;
        components.push(ComponentEntry { weight: c.weight, mean: name, base_std: c.base_std });
    }
    let file = PriorFile { width: prior.width, height: prior.height, components };
    let text = toml::to_string(&file).map_err(|e| IoError::Parse(e.to_string()))?;
    write_atomic(path, text.as_bytes())
}
