use serde::{Deserialize, Serialize};

use super::{cqt_spectrogram, mel_spectrogram, to_feature_image, DspError, FeatureImage, Spectrogram, IMAGE_SIDE};
use crate::dataset::{fix_length, resample, AudioClip};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Mel,
    Cqt,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Mel => "mel",
            FeatureKind::Cqt => "cqt",
        }
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = DspError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mel" => Ok(FeatureKind::Mel),
            "cqt" => Ok(FeatureKind::Cqt),
            other => Err(DspError::Parameter(format!("unknown feature kind {other:?}"))),
        }
    }
}

/// Clip preprocessing and image geometry for feature extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub kind: FeatureKind,
    pub sample_rate: u32,
    pub duration: f64,
    pub image_side: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            kind: FeatureKind::Mel,
            sample_rate: 44100,
            duration: 4.0,
            image_side: IMAGE_SIDE,
        }
    }
}

/// Resample → trim/pad → spectrogram → feature image.
pub fn extract_features(
    clip: &AudioClip,
    config: &FeatureConfig,
) -> Result<(Spectrogram, FeatureImage), DspError> {
    let clip = resample(clip, config.sample_rate)?;
    let clip = fix_length(&clip, config.duration)?;
    let spec = match config.kind {
        FeatureKind::Mel => mel_spectrogram(&clip)?,
        FeatureKind::Cqt => cqt_spectrogram(&clip)?,
    };
    let image = to_feature_image(&spec, config.image_side)?;
    Ok((spec, image))
}
