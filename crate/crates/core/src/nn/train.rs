use std::fmt::Write as _;

use super::network::{argmax, weighted_cross_entropy, Network, LOSS_EPS};
use super::{Nadam, NadamConfig, NnError, Real, Tensor};
use crate::rng::{fisher_yates, seeded};

/// Images (HWC, flattened) with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSamples<F> {
    pub sample_shape: [usize; 3],
    pub data: Vec<F>,
    pub labels: Vec<usize>,
}

impl<F: Real> LabeledSamples<F> {
    pub fn new(sample_shape: [usize; 3], data: Vec<F>, labels: Vec<usize>) -> Result<Self, NnError> {
        let item: usize = sample_shape.iter().product();
        if item == 0 || data.len() != item * labels.len() {
            return Err(NnError::Shape(format!(
                "{} values for {} samples of {sample_shape:?}",
                data.len(),
                labels.len()
            )));
        }
        Ok(Self {
            sample_shape,
            data,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[F] {
        let item: usize = self.sample_shape.iter().product();
        &self.data[i * item..(i + 1) * item]
    }

    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor<F>, Vec<usize>), NnError> {
        let items: Vec<&[F]> = indices.iter().map(|&i| self.sample(i)).collect();
        let x = Tensor::stack(&items, &self.sample_shape)?;
        Ok((x, indices.iter().map(|&i| self.labels[i]).collect()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub optimizer: NadamConfig,
    pub seed: u64,
    /// Per-class loss weights; `None` weighs every class 1.
    pub class_weights: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 80,
            patience: 10,
            batch_size: 32,
            optimizer: NadamConfig::default(),
            seed: 0,
            class_weights: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.max_epochs == 0 || self.patience >= self.max_epochs {
            return Err(NnError::Config(format!(
                "patience {} must be below max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(NnError::Config("batch_size must be positive".into()));
        }
        let lr = self.optimizer.lr;
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(NnError::Config(format!("learning rate {lr} is not usable")));
        }
        if let Some(w) = &self.class_weights {
            if w.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
                return Err(NnError::Config("class weights must be positive".into()));
            }
        }
        Ok(())
    }

    /// A zero learning rate freezes the model completely, batch-norm
    /// running statistics included.
    pub fn is_frozen(&self) -> bool {
        self.optimizer.lr == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
        for r in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Wait,
    Stop,
}

/// Patience-based early stopping on validation loss. Only strict
/// improvements reset the counter.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    best_epoch: usize,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            best_epoch: 0,
            wait: 0,
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        if self.best.map_or(true, |b| val_loss < b) {
            self.best = Some(val_loss);
            self.best_epoch = epoch;
            self.wait = 0;
            return StopDecision::Improved;
        }
        self.wait += 1;
        if self.wait >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Wait
        }
    }
}

fn evaluate_split<F: Real>(
    model: &Network<F>,
    samples: &LabeledSamples<F>,
    batch_size: usize,
) -> Result<(f64, f64), NnError> {
    let indices: Vec<usize> = (0..samples.len()).collect();
    let mut loss = 0.0;
    let mut correct = 0usize;
    for chunk in indices.chunks(batch_size) {
        let (x, labels) = samples.batch(chunk)?;
        let probs = model.forward(&x)?;
        for (i, &label) in labels.iter().enumerate() {
            let p = probs.item(i);
            loss -= (p[label].to_f64_lossy() + LOSS_EPS).ln();
            correct += usize::from(argmax(p) == label);
        }
    }
    let n = samples.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Mini-batch Nadam training with class-weighted cross-entropy and early
/// stopping on validation loss. The weights of the best validation epoch
/// are restored before returning.
///
/// Shuffling and dropout draw from two xoshiro256** streams derived from
/// `config.seed`, so identical inputs give identical reports and weights.
pub fn train<F: Real>(
    model: &mut Network<F>,
    train_set: &LabeledSamples<F>,
    val_set: &LabeledSamples<F>,
    config: &TrainConfig,
) -> Result<TrainReport, NnError> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(NnError::Config("training and validation splits must be non-empty".into()));
    }
    let classes = model.num_outputs();
    if let Some(w) = &config.class_weights {
        if w.len() != classes {
            return Err(NnError::Config(format!(
                "{} class weights for {classes} outputs",
                w.len()
            )));
        }
    }
    if let Some(&bad) = train_set.labels.iter().chain(&val_set.labels).find(|&&l| l >= classes) {
        return Err(NnError::Config(format!("label {bad} outside {classes} classes")));
    }

    let frozen = config.is_frozen();
    let mut shuffle_rng = seeded(config.seed);
    let mut dropout_rng = seeded(config.seed ^ 0x9E37_79B9_7F4A_7C15);
    let mut optimizer = Nadam::new(config.optimizer);
    let mut stopping = EarlyStopping::new(config.patience);
    let mut best = model.clone();
    let mut epochs = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.max_epochs {
        fisher_yates(&mut order, &mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let (x, labels) = train_set.batch(chunk)?;
            let weights: Vec<F> = labels
                .iter()
                .map(|&l| {
                    F::from_f64_lossy(config.class_weights.as_ref().map_or(1.0, |w| w[l]))
                })
                .collect();
            let (probs, caches) = model.forward_train(&x, &mut dropout_rng, !frozen)?;
            let (loss, grad) = weighted_cross_entropy(&probs, &labels, &weights)?;
            let loss = loss.to_f64_lossy();
            if !loss.is_finite() {
                return Err(NnError::NonFinite { epoch, batch: b + 1 });
            }
            loss_sum += loss * chunk.len() as f64;
            correct += labels
                .iter()
                .enumerate()
                .filter(|&(i, &l)| argmax(probs.item(i)) == l)
                .count();
            if !frozen {
                let (grads, _) = model.backward(&caches, grad)?;
                optimizer.step(model.params_mut(), &grads);
            }
        }
        let (val_loss, val_acc) = evaluate_split(model, val_set, config.batch_size)?;
        if !val_loss.is_finite() {
            return Err(NnError::NonFinite { epoch, batch: 0 });
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_acc: correct as f64 / train_set.len() as f64,
            val_loss,
            val_acc,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} acc {:.3} val_loss {:.4} val_acc {:.3}",
            record.train_loss,
            record.train_acc,
            record.val_loss,
            record.val_acc
        );
        epochs.push(record);
        match stopping.observe(epoch, val_loss) {
            StopDecision::Improved => best = model.clone(),
            StopDecision::Wait => {}
            StopDecision::Stop => break,
        }
    }
    *model = best;
    Ok(TrainReport {
        stopped_epoch: epochs.len(),
        best_epoch: stopping.best_epoch(),
        epochs,
    })
}
