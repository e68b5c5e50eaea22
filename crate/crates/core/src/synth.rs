//! Seeded synthetic four-class audio set: 500 Hz tones, 2000 Hz tones,
//! linear chirps and white-noise bursts.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::dataset::{AudioClip, DatasetError};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SynthClass {
    Tone500 = 0,
    Tone2000 = 1,
    Chirp = 2,
    NoiseBurst = 3,
}

impl SynthClass {
    pub const COUNT: usize = 4;
    pub const ALL: [SynthClass; 4] = [
        SynthClass::Tone500,
        SynthClass::Tone2000,
        SynthClass::Chirp,
        SynthClass::NoiseBurst,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SynthClass::Tone500 => "tone_500hz",
            SynthClass::Tone2000 => "tone_2000hz",
            SynthClass::Chirp => "chirp",
            SynthClass::NoiseBurst => "noise_burst",
        }
    }

    /// Frequency of the pure-tone classes.
    pub fn tone_hz(self) -> Option<f64> {
        match self {
            SynthClass::Tone500 => Some(500.0),
            SynthClass::Tone2000 => Some(2000.0),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub clips_per_class: usize,
    pub sample_rate: u32,
    pub duration: f64,
    pub seed: u64,
    /// Peak amplitude of the white noise added under every clip.
    pub background: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            clips_per_class: 200,
            sample_rate: 8000,
            duration: 1.0,
            seed: 0,
            background: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthClip {
    pub id: String,
    pub class: SynthClass,
    pub clip: AudioClip,
}

fn render<R: Rng>(class: SynthClass, cfg: &SynthConfig, rng: &mut R) -> Vec<f32> {
    let sr = cfg.sample_rate as f64;
    let n = (cfg.duration * sr).round() as usize;
    let amp = rng.gen_range(0.3..0.9);
    let mut x = vec![0.0f64; n];
    match class {
        SynthClass::Tone500 | SynthClass::Tone2000 => {
            let f = class.tone_hz().unwrap();
            let phase = rng.gen_range(0.0..2.0 * PI);
            for (i, v) in x.iter_mut().enumerate() {
                *v = amp * (2.0 * PI * f * i as f64 / sr + phase).sin();
            }
        }
        SynthClass::Chirp => {
            let f0 = rng.gen_range(300.0..800.0);
            let f1 = rng.gen_range(2500.0..3800.0);
            let rate = (f1 - f0) / cfg.duration;
            for (i, v) in x.iter_mut().enumerate() {
                let t = i as f64 / sr;
                *v = amp * (2.0 * PI * (f0 * t + 0.5 * rate * t * t)).sin();
            }
        }
        SynthClass::NoiseBurst => {
            let onset = (rng.gen_range(0.0..0.6) * n as f64) as usize;
            let len = (rng.gen_range(0.15..0.4) * n as f64) as usize;
            for v in &mut x[onset..(onset + len).min(n)] {
                *v = rng.gen_range(-amp..amp);
            }
        }
    }
    x.iter()
        .map(|v| (v + rng.gen_range(-cfg.background..=cfg.background)) as f32)
        .collect()
}

/// Clips in class order, `clips_per_class` each, from one seeded stream.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<SynthClip>, DatasetError> {
    if cfg.clips_per_class == 0 || !(cfg.duration > 0.0) || !(cfg.background >= 0.0) {
        return Err(DatasetError::Parameter(format!("invalid synthetic config {cfg:?}")));
    }
    let mut rng = seeded(cfg.seed);
    let mut out = Vec::with_capacity(cfg.clips_per_class * SynthClass::COUNT);
    for class in SynthClass::ALL {
        for k in 0..cfg.clips_per_class {
            let samples = render(class, cfg, &mut rng);
            out.push(SynthClip {
                id: format!("{}-{k:04}", class.name()),
                class,
                clip: AudioClip::new(samples, cfg.sample_rate)?,
            });
        }
    }
    Ok(out)
}

/// Writes the clips as 32-bit float WAVs under `fold<k>/` plus a
/// `metadata.csv` in the UrbanSound8K column layout.
pub fn write_dataset(root: &Path, clips: &[SynthClip]) -> Result<(), DatasetError> {
    let spec = |rate| hound::WavSpec {
        channels: 1,
        sample_rate: rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut meta = csv::Writer::from_path(root.join("metadata.csv"))?;
    meta.write_record(["slice_file_name", "fsID", "start", "end", "salience", "fold", "classID", "class"])?;
    for (i, c) in clips.iter().enumerate() {
        let fold = i % 10 + 1;
        let dir = root.join(format!("fold{fold}"));
        fs::create_dir_all(&dir)?;
        let name = format!("{}.wav", c.id);
        let mut w = hound::WavWriter::create(dir.join(&name), spec(c.clip.sample_rate()))
            .map_err(|e| DatasetError::Format(e.to_string()))?;
        for &s in c.clip.samples() {
            w.write_sample(s).map_err(|e| DatasetError::Format(e.to_string()))?;
        }
        w.finalize().map_err(|e| DatasetError::Format(e.to_string()))?;
        meta.write_record([
            name,
            i.to_string(),
            "0".into(),
            format!("{}", c.clip.duration()),
            "1".into(),
            fold.to_string(),
            c.class.id().to_string(),
            c.class.name().into(),
        ])?;
    }
    meta.flush()?;
    Ok(())
}
