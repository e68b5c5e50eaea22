use super::image::{amplitude_to_db, DEFAULT_TOP_DB};
use super::stft::stft_power;
use super::{DspError, Matrix, Spectrogram, SpectrogramKind};
use crate::dataset::AudioClip;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// `n_mels + 2` frequencies equally spaced on the mel scale between the
/// band edges; filter `m` rises from point `m` to a peak at `m + 1` and
/// falls to zero at `m + 2`.
fn mel_points(n_mels: usize, f_min: f64, f_max: f64) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// Triangular mel filterbank with unit peaks, `n_mels × (fft_size/2 + 1)`.
pub fn mel_filterbank(
    n_mels: usize,
    fft_size: usize,
    sample_rate: u32,
    f_min: f64,
    f_max: f64,
) -> Result<Matrix, DspError> {
    let nyquist = sample_rate as f64 / 2.0;
    if n_mels < 2 || fft_size < 2 || !(0.0 <= f_min && f_min < f_max && f_max <= nyquist) {
        return Err(DspError::Parameter(format!(
            "mel filterbank needs n_mels ≥ 2 and 0 ≤ f_min < f_max ≤ {nyquist}, got {n_mels}, {f_min}, {f_max}"
        )));
    }
    let bins = fft_size / 2 + 1;
    let points = mel_points(n_mels, f_min, f_max);
    let mut fb = Matrix::zeros(n_mels, bins);
    for m in 0..n_mels {
        let (left, center, right) = (points[m], points[m + 1], points[m + 2]);
        for k in 0..bins {
            let f = k as f64 * sample_rate as f64 / fft_size as f64;
            let rising = (f - left) / (center - left);
            let falling = (right - f) / (right - center);
            let w = rising.min(falling).max(0.0);
            fb.set(m, k, w);
        }
    }
    Ok(fb)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelConfig {
    pub n_mels: usize,
    pub fft_size: usize,
    pub hop: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub top_db: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            n_mels: 128,
            fft_size: 2048,
            hop: 512,
            f_min: 0.0,
            f_max: 22050.0,
            top_db: DEFAULT_TOP_DB,
        }
    }
}

/// Mel spectrogram with the default 128-band, 2048/512 configuration.
pub fn mel_spectrogram(clip: &AudioClip) -> Result<Spectrogram, DspError> {
    mel_spectrogram_with(clip, &MelConfig::default())
}

pub fn mel_spectrogram_with(clip: &AudioClip, config: &MelConfig) -> Result<Spectrogram, DspError> {
    let fb = mel_filterbank(
        config.n_mels,
        config.fft_size,
        clip.sample_rate(),
        config.f_min,
        config.f_max,
    )?;
    let power = stft_power(clip, config.fft_size, config.hop)?;
    let mel_power = fb.matmul(&power)?;
    let points = mel_points(config.n_mels, config.f_min, config.f_max);
    Ok(Spectrogram {
        values: amplitude_to_db(&mel_power, config.top_db)?,
        kind: SpectrogramKind::Mel,
        bin_frequencies: points[1..=config.n_mels].to_vec(),
        frame_hop: config.hop,
        top_db: config.top_db,
    })
}
