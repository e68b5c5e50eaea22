use std::f64::consts::PI;

use super::{AudioClip, DatasetError};

pub const KAISER_BETA: f64 = 8.6;
pub const TAPS_PER_PHASE: usize = 64;

/// Largest phase count for which the polyphase table is precomputed.
const MAX_TABLE_PHASES: u64 = 8192;

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Windowed-sinc kernel for one fractional phase. Tap `j` weighs input
/// sample `base − (half − 1) + j`; weights sum to one.
struct Kernel {
    cutoff: f64,
    half: f64,
    i0_beta: f64,
}

impl Kernel {
    fn taps(&self, frac: f64, out: &mut [f64; TAPS_PER_PHASE]) {
        let first = (TAPS_PER_PHASE / 2 - 1) as f64;
        let mut sum = 0.0;
        for (j, tap) in out.iter_mut().enumerate() {
            let d = first - j as f64 + frac;
            let r = d / self.half;
            let window = if r.abs() <= 1.0 {
                bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / self.i0_beta
            } else {
                0.0
            };
            *tap = self.cutoff * sinc(self.cutoff * d) * window;
            sum += *tap;
        }
        for tap in out.iter_mut() {
            *tap /= sum;
        }
    }
}

/// Rational-ratio polyphase resampler with a Kaiser-windowed sinc
/// (β = 8.6, 64 taps per phase). The anti-aliasing cutoff sits at the lower
/// of the two Nyquist frequencies. Output length is
/// `round(len · target / source)`; equal rates return the clip unchanged.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip, DatasetError> {
    if target_rate == 0 {
        return Err(DatasetError::Parameter("target rate must be positive".into()));
    }
    let source_rate = clip.sample_rate();
    if source_rate == target_rate {
        return Ok(clip.clone());
    }
    let g = gcd(source_rate as u64, target_rate as u64);
    let up = target_rate as u64 / g;
    let down = source_rate as u64 / g;
    let len = clip.len() as u64;
    let out_len = ((len * target_rate as u64 * 2 + source_rate as u64) / (2 * source_rate as u64)) as usize;
    if out_len == 0 {
        return Err(DatasetError::Parameter("resampled clip would be empty".into()));
    }

    let kernel = Kernel {
        cutoff: (target_rate as f64 / source_rate as f64).min(1.0),
        half: (TAPS_PER_PHASE / 2) as f64,
        i0_beta: bessel_i0(KAISER_BETA),
    };
    let table: Option<Vec<[f64; TAPS_PER_PHASE]>> = (up <= MAX_TABLE_PHASES).then(|| {
        (0..up)
            .map(|p| {
                let mut taps = [0.0; TAPS_PER_PHASE];
                kernel.taps(p as f64 / up as f64, &mut taps);
                taps
            })
            .collect()
    });

    let input = clip.samples();
    let offset = (TAPS_PER_PHASE / 2 - 1) as i64;
    let mut scratch = [0.0; TAPS_PER_PHASE];
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len as u64 {
        let pos = n * down;
        let base = (pos / up) as i64;
        let phase = pos % up;
        let taps = match &table {
            Some(t) => &t[phase as usize],
            None => {
                kernel.taps(phase as f64 / up as f64, &mut scratch);
                &scratch
            }
        };
        let start = base - offset;
        let mut acc = 0.0;
        for (j, &w) in taps.iter().enumerate() {
            let idx = start + j as i64;
            if idx >= 0 && (idx as u64) < len {
                acc += w * input[idx as usize] as f64;
            }
        }
        out.push(acc as f32);
    }
    AudioClip::new(out, target_rate)
}
