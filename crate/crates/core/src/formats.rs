//! On-disk formats for feature images and relevance maps: `FMAT` float
//! matrices, binary PGM/PPM rasters and JSON sidecars.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lrp::RgbImage;

pub const FMAT_MAGIC: &[u8; 4] = b"FMAT";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major `f32` matrix as stored in an `FMAT` file.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl FloatMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, FormatError> {
        if rows * cols != data.len() {
            return Err(FormatError::Format(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if u32::try_from(rows).is_err() || u32::try_from(cols).is_err() {
            return Err(FormatError::Format("dimensions exceed u32".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_f64(rows: usize, cols: usize, data: &[f64]) -> Result<Self, FormatError> {
        Self::new(rows, cols, data.iter().map(|&v| v as f32).collect())
    }
}

pub fn write_fmat<W: Write>(mut w: W, m: &FloatMatrix) -> Result<(), FormatError> {
    w.write_all(FMAT_MAGIC)?;
    w.write_all(&(m.rows as u32).to_le_bytes())?;
    w.write_all(&(m.cols as u32).to_le_bytes())?;
    for v in &m.data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_fmat<R: Read>(mut r: R) -> Result<FloatMatrix, FormatError> {
    let mut header = [0u8; 12];
    r.read_exact(&mut header)?;
    if &header[..4] != FMAT_MAGIC {
        return Err(FormatError::Format("missing FMAT magic".into()));
    }
    let rows = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != rows * cols * 4 {
        return Err(FormatError::Format(format!(
            "{} payload bytes for a {rows}x{cols} matrix",
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    FloatMatrix::new(rows, cols, data)
}

pub fn save_fmat(path: impl AsRef<Path>, m: &FloatMatrix) -> Result<(), FormatError> {
    write_fmat(BufWriter::new(File::create(path)?), m)
}

pub fn load_fmat(path: impl AsRef<Path>) -> Result<FloatMatrix, FormatError> {
    read_fmat(BufReader::new(File::open(path)?))
}

/// Maps `[0, 1]` onto `0..=255`, rounding to nearest.
pub fn quantize_unit(values: &[f32]) -> Vec<u8> {
    values
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

fn write_pnm<W: Write>(
    mut w: W,
    magic: &str,
    width: usize,
    height: usize,
    bytes: &[u8],
    channels: usize,
) -> Result<(), FormatError> {
    if bytes.len() != width * height * channels {
        return Err(FormatError::Format(format!(
            "{} bytes for a {width}x{height} {magic} raster",
            bytes.len()
        )));
    }
    write!(w, "{magic}\n{width} {height}\n255\n")?;
    w.write_all(bytes)?;
    w.flush()?;
    Ok(())
}

/// Binary PGM (P5, maxval 255).
pub fn write_pgm<W: Write>(w: W, width: usize, height: usize, gray: &[u8]) -> Result<(), FormatError> {
    write_pnm(w, "P5", width, height, gray, 1)
}

/// Binary PPM (P6, maxval 255).
pub fn write_ppm<W: Write>(w: W, image: &RgbImage) -> Result<(), FormatError> {
    write_pnm(w, "P6", image.width, image.height, &image.pixels, 3)
}

/// Decoded P5/P6 raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pnm {
    pub magic: String,
    pub width: usize,
    pub height: usize,
    pub bytes: Vec<u8>,
}

/// Reads a binary PGM or PPM with maxval 255 (no comment lines).
pub fn read_pnm<R: Read>(mut r: R) -> Result<Pnm, FormatError> {
    let mut all = Vec::new();
    r.read_to_end(&mut all)?;
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < all.len() && all[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < all.len() && !all[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(FormatError::Format("truncated header".into()));
        }
        fields.push(String::from_utf8_lossy(&all[start..pos]).into_owned());
    }
    pos += 1;
    let channels = match fields[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(FormatError::Format(format!("unsupported magic {other:?}"))),
    };
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| FormatError::Format(format!("bad header field {s:?}")))
    };
    let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval != 255 {
        return Err(FormatError::Format(format!("maxval {maxval}")));
    }
    let bytes = all.get(pos..).unwrap_or_default().to_vec();
    if bytes.len() != width * height * channels {
        return Err(FormatError::Format("raster length mismatch".into()));
    }
    Ok(Pnm {
        magic: fields.swap_remove(0),
        width,
        height,
        bytes,
    })
}

/// Metadata written next to a relevance dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sidecar {
    pub class: String,
    pub rule: String,
    pub source: String,
}

impl Sidecar {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain strings serialize")
    }
}
