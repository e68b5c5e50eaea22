use std::io::Write;
use std::path::Path;

use proptest::prelude::*;
use urban_lrp::dataset::{
    class_weights, fix_length, load_metadata, load_wav, resample, split_dataset, AudioClip,
    ClassLabel, DatasetError,
};

fn write_pcm16(path: &Path, channels: u16, rate: u32, samples: &[i16]) {
    let spec = hound::WavSpec {
        channels,
        sample_rate: rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for &s in samples {
        w.write_sample(s).unwrap();
    }
    w.finalize().unwrap();
}

fn write_f32(path: &Path, channels: u16, rate: u32, samples: &[f32]) {
    let spec = hound::WavSpec {
        channels,
        sample_rate: rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for &s in samples {
        w.write_sample(s).unwrap();
    }
    w.finalize().unwrap();
}

#[test]
fn pcm16_scaling() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.wav");
    write_pcm16(&path, 1, 22050, &[0, 16384, -32768]);
    let clip = load_wav(&path).unwrap();
    assert_eq!(clip.samples(), &[0.0, 0.5, -1.0]);
    assert_eq!(clip.sample_rate(), 22050);
}

#[test]
fn stereo_float_is_averaged() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.wav");
    let frames: Vec<f32> = (0..100).flat_map(|_| [0.2f32, 0.4]).collect();
    write_f32(&path, 2, 16000, &frames);
    let clip = load_wav(&path).unwrap();
    assert_eq!(clip.len(), 100);
    assert!(clip.samples().iter().all(|&s| (s - 0.3).abs() < 1e-7));
}

#[test]
fn one_second_header_arithmetic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.wav");
    write_pcm16(&path, 1, 22050, &vec![100; 22050]);
    let clip = load_wav(&path).unwrap();
    assert_eq!((clip.len(), clip.sample_rate()), (22050, 22050));
}

#[test]
fn unsupported_bit_depth_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("24.wav");
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: 8000,
        bits_per_sample: 24,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(&path, spec).unwrap();
    w.write_sample(1000i32).unwrap();
    w.finalize().unwrap();
    assert!(matches!(load_wav(&path), Err(DatasetError::Format(_))));
}

#[test]
fn truncated_data_chunk_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.wav");
    write_pcm16(&path, 1, 8000, &vec![7; 1000]);
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 501]).unwrap();
    assert!(matches!(load_wav(&path), Err(DatasetError::Io(_))));
}

#[test]
fn not_a_wav_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.wav");
    std::fs::File::create(&path)
        .unwrap()
        .write_all(b"OggS this is not a riff file at all")
        .unwrap();
    assert!(matches!(load_wav(&path), Err(DatasetError::Format(_))));
}

#[test]
fn metadata_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("meta.csv");
    std::fs::write(
        &path,
        "slice_file_name,fsID,start,end,salience,fold,classID,class\n\
         100032-3-0-0.wav,100032,0.0,0.317,1,5,3,dog_bark\n\
         100263-2-0-117.wav,100263,58.5,62.5,1,5,2,children_playing\n",
    )
    .unwrap();
    let index = load_metadata(&path).unwrap();
    assert_eq!(index.len(), 2);
    assert_eq!(index.entries[0].label, ClassLabel::DogBark);
    assert_eq!(index.entries[0].file_path, "fold5/100032-3-0-0.wav");
    assert_eq!(index.entries[0].clip_id(), "100032-3-0-0");
    assert_eq!(index.entries[1].class_name, "children_playing");
    assert!(load_metadata(dir.path().join("missing.csv")).is_err());
}

/// Per-class counts of UrbanSound8K, in class-id order.
const URBANSOUND8K_COUNTS: [usize; 10] = [1000, 429, 1000, 1000, 1000, 1000, 374, 1000, 929, 1000];

#[test]
fn urbansound_shaped_weights() {
    let total: usize = URBANSOUND8K_COUNTS.iter().sum();
    assert_eq!(total, 8732);
    let w = class_weights(&URBANSOUND8K_COUNTS).unwrap();
    assert!((w[ClassLabel::CarHorn.id()] - 8732.0 / 4290.0).abs() < 1e-12);
    assert!((w[ClassLabel::CarHorn.id()] - 2.035).abs() < 1e-3);
    assert!(w[ClassLabel::GunShot.id()] > w[ClassLabel::CarHorn.id()]);
    let s = split_dataset(8732, 17).unwrap();
    assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (6113, 1746, 873));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fix_length_is_idempotent(len in 1usize..5000, rate in 100u32..48000, dur in 0.01f64..0.2) {
        let clip = AudioClip::new((0..len).map(|i| (i % 7) as f32 * 0.1).collect(), rate).unwrap();
        prop_assume!((dur * rate as f64).round() >= 1.0);
        let once = fix_length(&clip, dur).unwrap();
        prop_assert_eq!(once.len(), (dur * rate as f64).round() as usize);
        prop_assert_eq!(fix_length(&once, dur).unwrap(), once);
    }

    #[test]
    fn same_rate_resample_is_identity(samples in prop::collection::vec(-1.0f32..1.0, 1..300), rate in 1u32..96000) {
        let clip = AudioClip::new(samples, rate).unwrap();
        prop_assert_eq!(resample(&clip, rate).unwrap(), clip);
    }

    #[test]
    fn split_partitions_indices(n in 10usize..3000, seed in any::<u64>()) {
        let s = split_dataset(n, seed).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert!((s.train.len() as f64 - 0.7 * n as f64).abs() <= 1.0);
        prop_assert!((s.validation.len() as f64 - 0.2 * n as f64).abs() <= 1.0);
        prop_assert!((s.test.len() as f64 - 0.1 * n as f64).abs() <= 1.0);
        prop_assert_eq!(split_dataset(n, seed).unwrap(), s);
    }

    #[test]
    fn weighted_counts_sum_to_total(counts in prop::collection::vec(1usize..5000, 2..12)) {
        let w = class_weights(&counts).unwrap();
        let total: usize = counts.iter().sum();
        let weighted: f64 = w.iter().zip(&counts).map(|(w, &n)| w * n as f64).sum();
        prop_assert!((weighted - total as f64).abs() <= 1e-9 * total as f64);
    }

    #[test]
    fn pcm16_roundtrip_within_one_lsb(values in prop::collection::vec(-1.0f64..1.0, 1..200)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.wav");
        let pcm: Vec<i16> = values.iter().map(|&v| (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16).collect();
        write_pcm16(&path, 1, 8000, &pcm);
        let clip = load_wav(&path).unwrap();
        for (&got, &want) in clip.samples().iter().zip(&values) {
            prop_assert!((got as f64 - want).abs() <= 1.0 / 32768.0);
        }
    }
}
