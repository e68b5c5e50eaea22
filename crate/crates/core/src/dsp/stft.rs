use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{DspError, Matrix};
use crate::dataset::AudioClip;

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Reflect-pads `x` by `pad` on both sides without repeating the edge sample.
fn reflect_pad(x: &[f32], pad: usize) -> Vec<f64> {
    let n = x.len() as isize;
    (-(pad as isize)..n + pad as isize)
        .map(|i| {
            let mut j = i;
            if j < 0 {
                j = -j;
            }
            if j >= n {
                j = 2 * (n - 1) - j;
            }
            x[j as usize] as f64
        })
        .collect()
}

/// Power spectrogram `|X_k(t)|²` of centered, Hann-windowed frames.
///
/// The signal is reflect-padded by `fft_size / 2`; the result has
/// `fft_size / 2 + 1` rows and `1 + len / hop` columns.
pub fn stft_power(clip: &AudioClip, fft_size: usize, hop: usize) -> Result<Matrix, DspError> {
    if !fft_size.is_power_of_two() || fft_size < 2 {
        return Err(DspError::Parameter(format!("fft size {fft_size} is not a power of two")));
    }
    if hop == 0 || hop > fft_size {
        return Err(DspError::Parameter(format!("hop {hop} outside 1..={fft_size}")));
    }
    if clip.len() < fft_size {
        return Err(DspError::Input(format!(
            "clip of {} samples is shorter than the {fft_size}-point FFT",
            clip.len()
        )));
    }
    let padded = reflect_pad(clip.samples(), fft_size / 2);
    let frames = 1 + clip.len() / hop;
    let bins = fft_size / 2 + 1;
    let window = hann_window(fft_size);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_size);
    let mut buffer = vec![Complex::new(0.0, 0.0); fft_size];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut out = Matrix::zeros(bins, frames);
    for t in 0..frames {
        let frame = &padded[t * hop..t * hop + fft_size];
        for ((b, &x), &w) in buffer.iter_mut().zip(frame).zip(&window) {
            *b = Complex::new(x * w, 0.0);
        }
        fft.process_with_scratch(&mut buffer, &mut scratch);
        for (k, b) in buffer.iter().take(bins).enumerate() {
            out.set(k, t, b.norm_sqr());
        }
    }
    Ok(out)
}
