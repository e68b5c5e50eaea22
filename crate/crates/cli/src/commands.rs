use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use urban_lrp::dataset::{class_weights, load_metadata, load_wav, split_dataset, SplitTag};
use urban_lrp::dsp::{extract_features, FeatureImage};
use urban_lrp::eval::{evaluate, write_confusion_csv, write_metrics_csv, write_normalized_csv};
use urban_lrp::formats::{load_fmat, quantize_unit, save_fmat, write_pgm, write_ppm, FloatMatrix, Sidecar};
use urban_lrp::lrp::{analyze, average_maps, fold_batchnorm, overlay, RelevanceMap, CLASS_AVERAGE};
use urban_lrp::nn::{load_model, save_model, train, LabeledSamples, Network};

use crate::config::RunConfig;
use crate::manifest::{class_names, read_manifest, write_manifest, ManifestRow, MANIFEST, STATUS_OK};
use crate::staging::Staging;

pub const MODEL_FILE: &str = "model.rmdl";
pub const REPORT_FILE: &str = "train_report.csv";

fn pool(cfg: &RunConfig) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build()?)
}

/// One FMAT + PGM per clip and a manifest covering every metadata row.
pub fn features(cfg: &RunConfig) -> Result<PathBuf> {
    let (audio_root, metadata) = cfg.dataset_paths()?;
    let index = load_metadata(&metadata)?;
    let split = split_dataset(index.len(), cfg.seed)?;
    let fc = cfg.feature_config();
    let stage = Staging::new(&cfg.features_dir())?;
    let dir = stage.path().to_path_buf();
    log::info!("extracting {} features for {} clips", fc.kind.as_str(), index.len());

    let rows: Vec<ManifestRow> = pool(cfg)?.install(|| {
        index
            .entries
            .par_iter()
            .enumerate()
            .map(|(i, entry)| {
                let id = entry.clip_id().to_string();
                let mut row = ManifestRow {
                    clip_id: id.clone(),
                    class_id: entry.label.id(),
                    class: entry.class_name.clone(),
                    split: split.tag_of(i).map_or("", SplitTag::as_str).into(),
                    fold: entry.fold,
                    kind: fc.kind.as_str().into(),
                    file: String::new(),
                    status: STATUS_OK.into(),
                };
                let result = (|| -> Result<()> {
                    let clip = load_wav(audio_root.join(&entry.file_path))?;
                    let (_, image) = extract_features(&clip, &fc)?;
                    let side = image.side();
                    let gray = image.gray();
                    save_fmat(dir.join(format!("{id}.fmat")), &FloatMatrix::new(side, side, gray.clone())?)?;
                    write_pgm(BufWriter::new(File::create(dir.join(format!("{id}.pgm")))?), side, side, &quantize_unit(&gray))?;
                    Ok(())
                })();
                match result {
                    Ok(()) => row.file = format!("{id}.fmat"),
                    Err(e) => {
                        log::warn!("skipping {}: {e:#}", entry.file_path);
                        row.status = format!("skipped: {e:#}");
                    }
                }
                row
            })
            .collect()
    });
    let skipped = rows.iter().filter(|r| !r.is_ok()).count();
    write_manifest(&dir.join(MANIFEST), &rows)?;
    let target = stage.commit()?;
    log::info!("wrote {} feature images ({skipped} skipped) to {}", rows.len() - skipped, target.display());
    Ok(target)
}

fn manifest(cfg: &RunConfig) -> Result<Vec<ManifestRow>> {
    let rows = read_manifest(&cfg.features_dir().join(MANIFEST))?;
    if let Some(bad) = rows.iter().find(|r| r.kind != cfg.features.as_str()) {
        bail!("manifest row {} has kind {}, expected {}", bad.clip_id, bad.kind, cfg.features.as_str());
    }
    if let Some(bad) = rows.iter().find(|r| r.class_id >= cfg.num_classes) {
        bail!("clip {} has class id {} but num_classes is {}", bad.clip_id, bad.class_id, cfg.num_classes);
    }
    Ok(rows)
}

fn load_image(cfg: &RunConfig, row: &ManifestRow) -> Result<FeatureImage> {
    let m = load_fmat(cfg.features_dir().join(&row.file))?;
    if m.rows != cfg.image_size || m.cols != cfg.image_size {
        bail!("{} is {}x{}, expected image_size {}", row.file, m.rows, m.cols, cfg.image_size);
    }
    Ok(FeatureImage::from_gray(m.rows, &m.data)?)
}

fn split_samples(cfg: &RunConfig, rows: &[ManifestRow], tag: SplitTag) -> Result<LabeledSamples<f32>> {
    let side = cfg.image_size;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for r in rows.iter().filter(|r| r.is_ok() && r.split == tag.as_str()) {
        data.extend_from_slice(load_image(cfg, r)?.pixels());
        labels.push(r.class_id);
    }
    Ok(LabeledSamples::new([side, side, FeatureImage::CHANNELS], data, labels)?)
}

pub fn train_model(cfg: &RunConfig) -> Result<PathBuf> {
    if !cfg.features_dir().join(MANIFEST).exists() {
        log::info!("no feature manifest yet; extracting features first");
        features(cfg)?;
    }
    let rows = manifest(cfg)?;
    let train_set = split_samples(cfg, &rows, SplitTag::Train)?;
    let val_set = split_samples(cfg, &rows, SplitTag::Validation)?;
    if train_set.is_empty() || val_set.is_empty() {
        bail!("training needs non-empty train and validation splits");
    }
    let weights = if cfg.class_weighting {
        let mut counts = vec![0; cfg.num_classes];
        for &l in &train_set.labels {
            counts[l] += 1;
        }
        Some(class_weights(&counts)?)
    } else {
        None
    };
    let mut model = Network::<f32>::build(&cfg.architecture(), cfg.seed)?;
    log::info!(
        "training on {} samples, validating on {} ({} parameters)",
        train_set.len(),
        val_set.len(),
        model.param_count()
    );
    let report = train(&mut model, &train_set, &val_set, &cfg.train_config(weights))?;
    log::info!("best epoch {}, stopped after {}", report.best_epoch, report.stopped_epoch);
    let stage = Staging::new(&cfg.model_dir())?;
    save_model(&model, stage.path().join(MODEL_FILE))?;
    fs::write(stage.path().join(REPORT_FILE), report.to_csv())?;
    stage.commit()
}

fn load_trained(cfg: &RunConfig) -> Result<Network<f32>> {
    let path = cfg.model_dir().join(MODEL_FILE);
    let model = load_model(&path).with_context(|| format!("loading {} (run `train` first)", path.display()))?;
    if model.num_outputs() != cfg.num_classes {
        bail!("checkpoint has {} outputs, config expects {} classes", model.num_outputs(), cfg.num_classes);
    }
    Ok(model)
}

pub fn eval(cfg: &RunConfig) -> Result<PathBuf> {
    let rows = manifest(cfg)?;
    let model = load_trained(cfg)?;
    let test = split_samples(cfg, &rows, SplitTag::Test)?;
    let result = evaluate(&model, &test)?;
    let names = class_names(&rows, cfg.num_classes);
    log::info!("test accuracy {:.4} over {} clips", result.metrics.accuracy, test.len());
    let stage = Staging::new(&cfg.eval_dir())?;
    let file = |name: &str| -> Result<BufWriter<File>> { Ok(BufWriter::new(File::create(stage.path().join(name))?)) };
    write_confusion_csv(file("confusion.csv")?, &result.confusion, &names)?;
    write_normalized_csv(file("confusion_normalized.csv")?, &result.confusion, &names)?;
    write_metrics_csv(file("metrics.csv")?, &result.metrics, &names)?;
    stage.commit()
}

pub enum Target {
    Sample(String),
    ClassAverage(String),
}

fn resolve_class(name: &str, names: &[String]) -> Result<usize> {
    if let Some(k) = names.iter().position(|n| n == name) {
        return Ok(k);
    }
    match name.parse::<usize>() {
        Ok(k) if k < names.len() => Ok(k),
        _ => bail!("unknown class {name:?}; known classes: {}", names.join(", ")),
    }
}

fn write_explanation(dir: &Path, map: &RelevanceMap, image: &FeatureImage, alpha: f64, class: &str) -> Result<()> {
    save_fmat(dir.join("relevance.fmat"), &FloatMatrix::from_f64(map.height, map.width, &map.values)?)?;
    let rgb = overlay(map, image, alpha)?;
    write_ppm(BufWriter::new(File::create(dir.join("overlay.ppm"))?), &rgb)?;
    let sidecar = Sidecar { class: class.into(), rule: map.rule.to_string(), source: map.source.clone() };
    fs::write(dir.join("relevance.json"), sidecar.to_json())?;
    Ok(())
}

/// Relevance map of one clip, or the average over the test clips of a class.
pub fn explain(cfg: &RunConfig, target: Target, class_override: Option<&str>) -> Result<PathBuf> {
    let rows = manifest(cfg)?;
    let names = class_names(&rows, cfg.num_classes);
    let plan = cfg.rule_plan()?;
    let model = load_trained(cfg)?;
    let net = fold_batchnorm(&model)?;
    match target {
        Target::Sample(id) => {
            let row = rows
                .iter()
                .find(|r| r.clip_id == id)
                .with_context(|| format!("unknown sample id {id:?}"))?;
            if !row.is_ok() {
                bail!("sample {id} has no features ({})", row.status);
            }
            let class = match class_override {
                Some(c) => resolve_class(c, &names)?,
                None => row.class_id,
            };
            let image = load_image(cfg, row)?;
            let mut map = analyze(&net, &image, class, &plan)?;
            map.source = id.clone();
            let stage = Staging::new(&cfg.explain_dir().join(&id))?;
            write_explanation(stage.path(), &map, &image, cfg.alpha, &names[class])?;
            stage.commit()
        }
        Target::ClassAverage(name) => {
            let class = resolve_class(&name, &names)?;
            let members: Vec<&ManifestRow> = rows
                .iter()
                .filter(|r| r.is_ok() && r.class_id == class && r.split == SplitTag::Test.as_str())
                .collect();
            if members.is_empty() {
                bail!("no test-split clips of class {}", names[class]);
            }
            let results: Vec<(RelevanceMap, Vec<f32>)> = pool(cfg)?.install(|| {
                members
                    .par_iter()
                    .map(|r| -> Result<_> {
                        let image = load_image(cfg, r)?;
                        Ok((analyze(&net, &image, class, &plan)?, image.gray()))
                    })
                    .collect::<Result<_>>()
            })?;
            let maps: Vec<RelevanceMap> = results.iter().map(|(m, _)| m.clone()).collect();
            let avg = average_maps(&maps, class)?;
            let side = cfg.image_size;
            let mut mean = vec![0.0f64; side * side];
            for (_, gray) in &results {
                for (m, &g) in mean.iter_mut().zip(gray) {
                    *m += g as f64;
                }
            }
            let n = results.len() as f64;
            let mean: Vec<f32> = mean.iter().map(|m| ((m / n) as f32).clamp(0.0, 1.0)).collect();
            let backdrop = FeatureImage::from_gray(side, &mean)?;
            let stage = Staging::new(&cfg.explain_dir().join(format!("{CLASS_AVERAGE}-{}", names[class])))?;
            write_explanation(stage.path(), &avg, &backdrop, cfg.alpha, &names[class])?;
            log::info!("averaged {} relevance maps for {}", results.len(), names[class]);
            stage.commit()
        }
    }
}
