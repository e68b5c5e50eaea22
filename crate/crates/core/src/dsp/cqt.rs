use std::f64::consts::PI;

use super::image::{amplitude_to_db, DEFAULT_TOP_DB};
use super::{DspError, Matrix, Spectrogram, SpectrogramKind};
use crate::dataset::AudioClip;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CqtConfig {
    pub f_min: f64,
    pub bins_per_octave: usize,
    pub n_bins: usize,
    pub hop: usize,
    pub top_db: f64,
}

impl Default for CqtConfig {
    fn default() -> Self {
        Self {
            f_min: 32.70,
            bins_per_octave: 12,
            n_bins: 84,
            hop: 512,
            top_db: DEFAULT_TOP_DB,
        }
    }
}

impl CqtConfig {
    /// Constant ratio of center frequency to bandwidth, `1 / (2^(1/B) − 1)`.
    pub fn quality(&self) -> f64 {
        1.0 / (2f64.powf(1.0 / self.bins_per_octave as f64) - 1.0)
    }
}

/// `f_k = f_min · 2^(k/B)`.
pub fn cqt_center_frequencies(config: &CqtConfig) -> Vec<f64> {
    (0..config.n_bins)
        .map(|k| config.f_min * 2f64.powf(k as f64 / config.bins_per_octave as f64))
        .collect()
}

/// `N_k = ceil(Q · sample_rate / f_k)`.
pub fn cqt_window_lengths(config: &CqtConfig, sample_rate: u32) -> Vec<usize> {
    let q = config.quality();
    cqt_center_frequencies(config)
        .iter()
        .map(|&f| (q * sample_rate as f64 / f).ceil() as usize)
        .collect()
}

/// Per-bin analysis kernel: Hann window times a complex exponential at the
/// bin's center frequency, normalized by the window sum.
struct BinKernel {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl BinKernel {
    fn new(freq: f64, len: usize, sample_rate: u32) -> Self {
        let window: Vec<f64> = (0..len)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
            .collect();
        let norm: f64 = window.iter().sum();
        let omega = 2.0 * PI * freq / sample_rate as f64;
        let (re, im) = window
            .iter()
            .enumerate()
            .map(|(n, &w)| {
                let phase = omega * n as f64;
                (w * phase.cos() / norm, -w * phase.sin() / norm)
            })
            .unzip();
        Self { re, im }
    }
}

pub fn cqt_spectrogram(clip: &AudioClip) -> Result<Spectrogram, DspError> {
    cqt_spectrogram_with(clip, &CqtConfig::default())
}

/// Direct constant-Q transform: for every bin and frame, the inner product
/// of the signal with that bin's windowed exponential, centered on the
/// frame. Samples outside the clip count as zero. The squared magnitude is
/// dB-compressed.
pub fn cqt_spectrogram_with(clip: &AudioClip, config: &CqtConfig) -> Result<Spectrogram, DspError> {
    if config.n_bins == 0 || config.bins_per_octave == 0 || config.hop == 0 || config.f_min <= 0.0 {
        return Err(DspError::Parameter("CQT needs positive f_min, bins and hop".into()));
    }
    let sr = clip.sample_rate();
    let freqs = cqt_center_frequencies(config);
    let top = *freqs.last().unwrap();
    if top >= sr as f64 / 2.0 {
        return Err(DspError::Parameter(format!(
            "top CQT frequency {top:.1} Hz is not below Nyquist {} Hz",
            sr as f64 / 2.0
        )));
    }
    let lengths = cqt_window_lengths(config, sr);
    let x: Vec<f64> = clip.samples().iter().map(|&s| s as f64).collect();
    let frames = 1 + x.len() / config.hop;
    let mut power = Matrix::zeros(config.n_bins, frames);
    for (k, (&f, &len)) in freqs.iter().zip(&lengths).enumerate() {
        let kernel = BinKernel::new(f, len, sr);
        for t in 0..frames {
            let start = (t * config.hop) as isize - (len / 2) as isize;
            let lo = (-start).max(0) as usize;
            let hi = ((x.len() as isize - start).max(0) as usize).min(len);
            let (mut re, mut im) = (0.0, 0.0);
            if lo < hi {
                let seg = &x[(start + lo as isize) as usize..(start + hi as isize) as usize];
                for ((&s, &kr), &ki) in seg.iter().zip(&kernel.re[lo..hi]).zip(&kernel.im[lo..hi]) {
                    re += s * kr;
                    im += s * ki;
                }
            }
            power.set(k, t, re * re + im * im);
        }
    }
    Ok(Spectrogram {
        values: amplitude_to_db(&power, config.top_db)?,
        kind: SpectrogramKind::ConstantQ,
        bin_frequencies: freqs,
        frame_hop: config.hop,
        top_db: config.top_db,
    })
}
