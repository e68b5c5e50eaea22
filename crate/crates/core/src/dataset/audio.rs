use std::path::Path;

use hound::{SampleFormat, WavReader};

use super::DatasetError;

/// Mono waveform with amplitudes nominally in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, DatasetError> {
        if sample_rate == 0 {
            return Err(DatasetError::InvalidAudio("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(DatasetError::InvalidAudio("clip has no samples".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(DatasetError::InvalidAudio(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

fn map_hound(err: hound::Error) -> DatasetError {
    match err {
        hound::Error::IoError(e) => DatasetError::Io(e),
        other => DatasetError::Format(other.to_string()),
    }
}

/// Decodes a PCM16 or float32 WAV file. Multi-channel audio is averaged
/// to mono; integer PCM is scaled by 1/32768.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip, DatasetError> {
    let reader = WavReader::open(path.as_ref()).map_err(map_hound)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if !(1..=2).contains(&channels) {
        return Err(DatasetError::Format(format!("{channels} channels")));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (format, bits) => {
            return Err(DatasetError::Format(format!("{bits}-bit {format:?} samples")));
        }
    };
    if interleaved.len() % channels != 0 {
        return Err(DatasetError::Io(std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            "data chunk ends inside a frame",
        )));
    }
    let mono = interleaved
        .chunks_exact(channels)
        .map(|frame| (frame.iter().sum::<f64>() / channels as f64) as f32)
        .collect();
    AudioClip::new(mono, spec.sample_rate)
}

/// Truncates or zero-pads (at the end) to `round(duration · rate)` samples.
pub fn fix_length(clip: &AudioClip, duration: f64) -> Result<AudioClip, DatasetError> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(DatasetError::Parameter(format!("duration {duration} must be positive")));
    }
    let target = (duration * clip.sample_rate as f64).round() as usize;
    let mut samples = clip.samples.clone();
    samples.resize(target, 0.0);
    AudioClip::new(samples, clip.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_invariants() {
        assert!(AudioClip::new(vec![], 8000).is_err());
        assert!(AudioClip::new(vec![0.0], 0).is_err());
        assert!(AudioClip::new(vec![f32::NAN], 8000).is_err());
    }

    #[test]
    fn fix_length_pads_truncates_and_is_idempotent() {
        let clip = AudioClip::new(vec![0.5; 88200], 44100).unwrap();
        let padded = fix_length(&clip, 4.0).unwrap();
        assert_eq!(padded.len(), 176400);
        assert!(padded.samples()[88200..].iter().all(|&s| s == 0.0));
        assert_eq!(&padded.samples()[..88200], clip.samples());
        assert_eq!(fix_length(&padded, 4.0).unwrap(), padded);

        let long = AudioClip::new((0..264600).map(|i| i as f32 * 1e-6).collect(), 44100).unwrap();
        let cut = fix_length(&long, 4.0).unwrap();
        assert_eq!(cut.samples(), &long.samples()[..176400]);

        let exact = fix_length(&padded, 4.0).unwrap();
        assert_eq!(exact, padded);
        assert!(fix_length(&clip, 0.0).is_err());
    }
}
