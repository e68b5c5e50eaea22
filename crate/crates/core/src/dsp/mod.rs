//! Spectrogram front end: STFT power, Mel and constant-Q spectrograms,
//! dB compression and fixed-size feature images.

mod cqt;
mod features;
mod image;
mod mel;
mod stft;

pub use cqt::{cqt_center_frequencies, cqt_spectrogram, cqt_spectrogram_with, cqt_window_lengths, CqtConfig};
pub use features::{extract_features, FeatureConfig, FeatureKind};
pub use image::{amplitude_to_db, to_feature_image, FeatureImage, DB_FLOOR, DEFAULT_TOP_DB, IMAGE_SIDE};
pub use mel::{hz_to_mel, mel_filterbank, mel_spectrogram, mel_spectrogram_with, mel_to_hz, MelConfig};
pub use stft::{hann_window, stft_power};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("input error: {0}")]
    Input(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
}

/// Row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, DspError> {
        if data.len() != rows * cols {
            return Err(DspError::Input(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `self (r×k) · other (k×c)`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, DspError> {
        if self.cols != other.rows {
            return Err(DspError::Input(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for (k, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (d, &b) in dst.iter_mut().zip(other.row(k)) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrogramKind {
    Mel,
    #[serde(rename = "cqt")]
    ConstantQ,
}

/// dB spectrogram: rows are frequency bins from low to high, columns are
/// frames. Entries lie in `[−top_db, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub values: Matrix,
    pub kind: SpectrogramKind,
    pub bin_frequencies: Vec<f64>,
    pub frame_hop: usize,
    pub top_db: f64,
}

impl Spectrogram {
    /// Row index whose time-averaged level is highest.
    pub fn dominant_row(&self) -> usize {
        let means: Vec<f64> = (0..self.values.rows)
            .map(|r| self.values.row(r).iter().sum::<f64>())
            .collect();
        let mut best = 0;
        for (i, &m) in means.iter().enumerate() {
            if m > means[best] {
                best = i;
            }
        }
        best
    }

    /// Per-frame argmax row.
    pub fn frame_argmax(&self) -> Vec<usize> {
        (0..self.values.cols)
            .map(|c| {
                let mut best = 0;
                for r in 0..self.values.rows {
                    if self.values.get(r, c) > self.values.get(best, c) {
                        best = r;
                    }
                }
                best
            })
            .collect()
    }
}
