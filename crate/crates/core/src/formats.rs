//! Little-endian binary containers.
//!
//! * `DGD1` depth: magic, `u32` width, `u32` height, `width·height` `f32`
//!   meters, row-major.
//! * `DGF1` feature pyramid: magic, `u32` scale count, then per scale `u32`
//!   H, W, C followed by `H·W·C` `f32` values in HWC order.
//! * `DGP1` point cloud: magic, `u32` N, `u32` C, then N records of
//!   `3 + C` `f32` (xyz then features).

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::geometry::{DepthImage, GeometryError};
use crate::hsse::{FeaturePyramid, HsseError};
use crate::nncore::{NnError, Tensor};

pub const DEPTH_MAGIC: &[u8; 4] = b"DGD1";
pub const PYRAMID_MAGIC: &[u8; 4] = b"DGF1";
pub const POINTS_MAGIC: &[u8; 4] = b"DGP1";

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("bad magic {found:?}, expected {expected:?}")]
    Magic { expected: String, found: String },
    #[error("truncated input: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("{0} trailing bytes after payload")]
    Trailing(usize),
    #[error("value does not fit the format: {0}")]
    Overflow(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Hsse(#[from] HsseError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

impl FormatError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        FormatError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| FormatError::Truncated {
            offset: self.pos,
            needed: n - (self.buf.len() - self.pos),
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<(), FormatError> {
        let found = self.take(4)?;
        if found != expected {
            return Err(FormatError::Magic {
                expected: String::from_utf8_lossy(expected).into(),
                found: String::from_utf8_lossy(found).into(),
            });
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, FormatError> {
        let bytes = n
            .checked_mul(4)
            .ok_or_else(|| FormatError::Overflow(format!("{n} floats")))?;
        Ok(self
            .take(bytes)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    fn finish(self) -> Result<(), FormatError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(FormatError::Trailing(n)),
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<(), FormatError> {
    let v = u32::try_from(v).map_err(|_| FormatError::Overflow(format!("{v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f32s(out: &mut Vec<u8>, values: impl IntoIterator<Item = f32>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, FormatError> {
    fs::read(path).map_err(|e| FormatError::io(path, e))
}

/// Writes through a sibling temporary file and renames it into place, so a
/// failed run never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut f = BufWriter::new(File::create(&tmp)?);
        f.write_all(bytes)?;
        f.into_inner()
            .map_err(io::IntoInnerError::into_error)?
            .sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(|e| FormatError::io(path, e))
}

pub fn encode_depth(depth: &DepthImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * depth.values().len());
    out.extend_from_slice(DEPTH_MAGIC);
    out.extend_from_slice(&depth.width().to_le_bytes());
    out.extend_from_slice(&depth.height().to_le_bytes());
    put_f32s(&mut out, depth.values().iter().copied());
    out
}

pub fn decode_depth(bytes: &[u8]) -> Result<DepthImage, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(DEPTH_MAGIC)?;
    let (w, h) = (r.u32()?, r.u32()?);
    let n = (w as usize)
        .checked_mul(h as usize)
        .ok_or_else(|| FormatError::Overflow(format!("{w}×{h}")))?;
    let values = r.f32s(n)?;
    r.finish()?;
    Ok(DepthImage::new(w, h, values)?)
}

pub fn read_depth(path: &Path) -> Result<DepthImage, FormatError> {
    decode_depth(&read_file(path)?)
}

pub fn write_depth(path: &Path, depth: &DepthImage) -> Result<(), FormatError> {
    write_atomic(path, &encode_depth(depth))
}

/// Values are narrowed to `f32`.
pub fn encode_pyramid(pyramid: &FeaturePyramid) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::new();
    out.extend_from_slice(PYRAMID_MAGIC);
    put_u32(&mut out, pyramid.num_scales())?;
    for t in pyramid.scales() {
        for &d in t.shape() {
            put_u32(&mut out, d)?;
        }
        put_f32s(&mut out, t.data().iter().map(|&v| v as f32));
    }
    Ok(out)
}

pub fn decode_pyramid(bytes: &[u8]) -> Result<FeaturePyramid, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(PYRAMID_MAGIC)?;
    let s = r.u32()?;
    let mut scales = Vec::new();
    for _ in 0..s {
        let (h, w, c) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let n = h
            .checked_mul(w)
            .and_then(|x| x.checked_mul(c))
            .ok_or_else(|| FormatError::Overflow(format!("{h}×{w}×{c}")))?;
        let data = r.f32s(n)?.into_iter().map(f64::from).collect();
        scales.push(Tensor::new([h, w, c], data)?);
    }
    r.finish()?;
    Ok(FeaturePyramid::new(scales)?)
}

pub fn read_pyramid(path: &Path) -> Result<FeaturePyramid, FormatError> {
    decode_pyramid(&read_file(path)?)
}

pub fn write_pyramid(path: &Path, pyramid: &FeaturePyramid) -> Result<(), FormatError> {
    write_atomic(path, &encode_pyramid(pyramid)?)
}

/// Points with optional per-point features, narrowed to `f32`.
pub fn encode_points(
    points: &[[f64; 3]],
    features: Option<&Tensor>,
) -> Result<Vec<u8>, FormatError> {
    let c = match features {
        Some(f) => {
            let (n, c) = f.dims2()?;
            if n != points.len() {
                return Err(NnError::Shape(format!(
                    "{} points but {n} feature rows",
                    points.len()
                ))
                .into());
            }
            c
        }
        None => 0,
    };
    let mut out = Vec::with_capacity(12 + 4 * points.len() * (3 + c));
    out.extend_from_slice(POINTS_MAGIC);
    put_u32(&mut out, points.len())?;
    put_u32(&mut out, c)?;
    for (i, p) in points.iter().enumerate() {
        put_f32s(&mut out, p.iter().map(|&v| v as f32));
        if let Some(f) = features {
            put_f32s(&mut out, f.row(i).iter().map(|&v| v as f32));
        }
    }
    Ok(out)
}

/// Returns the points and an `N × C` feature tensor (`None` when C = 0).
pub fn decode_points(bytes: &[u8]) -> Result<(Vec<[f64; 3]>, Option<Tensor>), FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(POINTS_MAGIC)?;
    let (n, c) = (r.u32()? as usize, r.u32()? as usize);
    let mut points = Vec::with_capacity(n);
    let mut feats = Vec::with_capacity(n * c);
    for _ in 0..n {
        let rec = r.f32s(3 + c)?;
        points.push([f64::from(rec[0]), f64::from(rec[1]), f64::from(rec[2])]);
        feats.extend(rec[3..].iter().map(|&v| f64::from(v)));
    }
    r.finish()?;
    let features = if c == 0 {
        None
    } else {
        Some(Tensor::new([n, c], feats)?)
    };
    Ok((points, features))
}
