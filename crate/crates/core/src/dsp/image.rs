use super::{DspError, Matrix, Spectrogram};

pub const DEFAULT_TOP_DB: f64 = 80.0;
/// Power floor inside the logarithm.
pub const DB_FLOOR: f64 = 1e-10;
pub const IMAGE_SIDE: usize = 220;

/// `10·log10(max(p, ε)) − 10·log10(max p)`, clamped below at `−top_db`.
///
/// The maximum entry maps to exactly 0 dB. An all-zero matrix has no
/// reference level and maps to `−top_db` everywhere.
pub fn amplitude_to_db(power: &Matrix, top_db: f64) -> Result<Matrix, DspError> {
    if !(top_db > 0.0 && top_db.is_finite()) {
        return Err(DspError::Parameter(format!("top_db {top_db} must be positive")));
    }
    if power.data.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
        return Err(DspError::Input("power entries must be finite and non-negative".into()));
    }
    let peak = power.max();
    let mut out = power.clone();
    if !(peak > 0.0) {
        out.data.fill(-top_db);
        return Ok(out);
    }
    let reference = 10.0 * peak.max(DB_FLOOR).log10();
    for v in &mut out.data {
        let db = 10.0 * v.max(DB_FLOOR).log10() - reference;
        *v = db.max(-top_db);
    }
    Ok(out)
}

/// Square `side × side × 3` image with values in [0, 1], stored HWC. Row 0
/// is the highest frequency; the three channels are identical.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage {
    side: usize,
    pixels: Vec<f32>,
}

impl FeatureImage {
    pub const CHANNELS: usize = 3;

    /// Replicates a single-channel `side × side` plane into three channels.
    pub fn from_gray(side: usize, gray: &[f32]) -> Result<Self, DspError> {
        if side == 0 || gray.len() != side * side {
            return Err(DspError::Input(format!(
                "{} values for a {side}x{side} image",
                gray.len()
            )));
        }
        if gray.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(DspError::Input("image values must lie in [0, 1]".into()));
        }
        let pixels = gray.iter().flat_map(|&g| [g; 3]).collect();
        Ok(Self { side, pixels })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.side, self.side, Self::CHANNELS]
    }

    /// HWC pixel data.
    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn gray(&self) -> Vec<f32> {
        self.pixels.iter().step_by(Self::CHANNELS).copied().collect()
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.pixels[(row * self.side + col) * Self::CHANNELS + channel]
    }
}

/// Bilinear resampling of `src` onto `out_rows × out_cols` with corner
/// samples aligned, so constants and same-size inputs pass through exactly.
fn resize_bilinear(src: &Matrix, out_rows: usize, out_cols: usize) -> Matrix {
    let coord = |i: usize, n_out: usize, n_in: usize| -> (usize, usize, f64) {
        if n_out == 1 || n_in == 1 {
            return (0, 0, 0.0);
        }
        let x = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
        let lo = (x.floor() as usize).min(n_in - 1);
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, x - lo as f64)
    };
    let mut out = Matrix::zeros(out_rows, out_cols);
    for r in 0..out_rows {
        let (r0, r1, fr) = coord(r, out_rows, src.rows);
        for c in 0..out_cols {
            let (c0, c1, fc) = coord(c, out_cols, src.cols);
            let top = src.get(r0, c0) + (src.get(r0, c1) - src.get(r0, c0)) * fc;
            let bottom = src.get(r1, c0) + (src.get(r1, c1) - src.get(r1, c0)) * fc;
            out.set(r, c, top + (bottom - top) * fr);
        }
    }
    out
}

/// Maps dB values from `[−top_db, 0]` onto `[0, 1]`, resizes to
/// `side × side` with the highest frequency in row 0, and replicates the
/// plane into three channels.
pub fn to_feature_image(spec: &Spectrogram, side: usize) -> Result<FeatureImage, DspError> {
    let values = &spec.values;
    if values.rows == 0 || values.cols == 0 || side == 0 {
        return Err(DspError::Input("empty spectrogram or image size".into()));
    }
    let top_db = spec.top_db;
    let mut flipped = Matrix::zeros(values.rows, values.cols);
    for r in 0..values.rows {
        for c in 0..values.cols {
            let v = ((values.get(r, c) + top_db) / top_db).clamp(0.0, 1.0);
            flipped.set(values.rows - 1 - r, c, v);
        }
    }
    let resized = resize_bilinear(&flipped, side, side);
    let gray: Vec<f32> = resized
        .data
        .iter()
        .map(|&v| (v as f32).clamp(0.0, 1.0))
        .collect();
    FeatureImage::from_gray(side, &gray)
}
