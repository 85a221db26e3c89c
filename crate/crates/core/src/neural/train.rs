//! Mini-batch training with early stopping on validation NLL.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureTensor;
use crate::pipeline::dataset::read_mixture;
use crate::pipeline::{DatasetManifest, Split};
use crate::rng::{stream, Purpose};

use super::loss::nll_loss;
use super::model::{ArchConfig, Estimate, Grads, Input, Model};
use super::optim::{Adam, AdamConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub arch: ArchConfig,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            arch: ArchConfig::default(),
            adam: AdamConfig::default(),
            batch_size: 120,
            max_epochs: 200,
            patience: 15,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Settings sized for a few hundred rooms on one CPU.
    pub fn desk() -> TrainConfig {
        TrainConfig {
            arch: ArchConfig::desk(),
            adam: AdamConfig { lr: 1e-3, ..AdamConfig::default() },
            batch_size: 16,
            max_epochs: 30,
            patience: 15,
            seed: 0,
        }
    }
}

/// Where an example's network input comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Sample {
    Input(Input),
    /// Two-channel 16 kHz mixture on disk.
    Wav(PathBuf),
}

impl Sample {
    pub fn load(&self) -> Result<Input> {
        match self {
            Sample::Input(x) => Ok(x.clone()),
            Sample::Wav(p) => {
                let [l, r] = read_mixture(p)?;
                Ok(Input::from_features(&FeatureTensor::from_channels(&l, &r)?))
            }
        }
    }
}

/// One training example with its target in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub sample: Sample,
    pub target: Vec<f64>,
    pub room_id: u64,
    pub position: usize,
}

/// Examples of one split, in manifest order.
pub fn examples_from_manifest(manifest: &DatasetManifest, root: &Path, split: Split) -> Result<Vec<Example>> {
    manifest
        .mixtures_in(split)
        .map(|m| {
            let room = manifest
                .room(m.room_id)
                .ok_or_else(|| Error::Data(format!("{} refers to unknown room {}", m.mix_id, m.room_id)))?;
            Ok(Example {
                sample: Sample::Wav(root.join(&m.wav_path)),
                target: room.targets.clone(),
                room_id: m.room_id,
                position: m.position,
            })
        })
        .collect()
}

/// Per-target population standard deviation.
pub fn target_std(examples: &[Example]) -> Result<Vec<f64>> {
    let n = examples.len() as f64;
    let d = examples.first().map(|e| e.target.len()).ok_or_else(|| Error::Data("no examples".into()))?;
    let mut out = vec![0.0; d];
    for (i, o) in out.iter_mut().enumerate() {
        let mean = examples.iter().map(|e| e.target[i]).sum::<f64>() / n;
        let var = examples.iter().map(|e| (e.target[i] - mean).powi(2)).sum::<f64>() / n;
        *o = var.sqrt();
        if !(*o > 0.0 && o.is_finite()) {
            return Err(Error::Data(format!("target {i} has no spread in the training set")));
        }
    }
    Ok(out)
}

fn normalized(target: &[f64], std: &[f64]) -> Vec<f64> {
    target.iter().zip(std).map(|(t, s)| t / s).collect()
}

/// Patience counter on a minimised metric.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    pub since_best: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> EarlyStopping {
        EarlyStopping { patience, best: f64::INFINITY, best_epoch: 0, since_best: 0 }
    }

    pub fn update(&mut self, epoch: usize, value: f64) -> StopDecision {
        if value < self.best {
            self.best = value;
            self.best_epoch = epoch;
            self.since_best = 0;
            StopDecision::Improved
        } else {
            self.since_best += 1;
            if self.since_best >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_nll: f64,
    pub val_nll: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch, rounded to single precision.
    pub model: Model,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Mean loss and summed gradient of a batch. Per-example gradients are
/// computed in parallel and reduced in batch order.
fn batch_grad(model: &Model, batch: &[(&Example, Input)], std: &[f64], seed: u64, tag: [u64; 2]) -> Result<(f64, Grads)> {
    let parts = batch
        .par_iter()
        .enumerate()
        .map(|(i, (ex, x))| -> Result<(f64, Grads)> {
            let mut g = model.zero_grads();
            let mut rng = stream(seed, Purpose::Dropout, &[tag[0], tag[1], i as u64]);
            let loss = model.loss_and_grad(x, &normalized(&ex.target, std), Some(&mut rng), &mut g)?;
            Ok((loss, g))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = model.zero_grads();
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for (l, g) in parts {
        loss += l;
        for (t, gi) in total.iter_mut().zip(g) {
            for (a, b) in t.iter_mut().zip(gi) {
                *a += b * scale;
            }
        }
    }
    Ok((loss * scale, total))
}

/// Mean NLL over examples in the normalised domain, without dropout.
pub fn mean_nll(model: &Model, examples: &[Example]) -> Result<f64> {
    let losses = examples
        .par_iter()
        .map(|e| -> Result<f64> {
            let est = model.forward(&e.sample.load()?)?;
            nll_loss(&est, &normalized(&e.target, &model.target_std))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Trains from scratch; `on_epoch` sees every log line as it is produced.
pub fn train(train: &[Example], val: &[Example], cfg: &TrainConfig, mut on_epoch: impl FnMut(&EpochLog)) -> Result<TrainOutcome> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data("training needs non-empty train and validation splits".into()));
    }
    if cfg.batch_size == 0 || cfg.max_epochs == 0 {
        return Err(Error::Config("batch_size and max_epochs must be positive".into()));
    }
    let std = target_std(train)?;
    let mut model = Model::new(cfg.arch.clone(), cfg.seed)?;
    if std.len() != model.arch.n_targets {
        return Err(Error::Shape(format!("targets have {} values, model predicts {}", std.len(), model.arch.n_targets)));
    }
    let n = train.len() as f64;
    let mean_norm: Vec<f64> = (0..std.len())
        .map(|i| train.iter().map(|e| e.target[i] / std[i]).sum::<f64>() / n)
        .collect();
    model.set_mean_bias(&mean_norm)?;
    model.target_std = std.clone();
    let mut opt = Adam::new(&model, cfg.adam);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = model.clone();
    let mut log = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut stream(cfg.seed, Purpose::Shuffle, &[epoch as u64]));
        let mut loss_sum = 0.0;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = chunk
                .par_iter()
                .map(|&i| Ok((&train[i], train[i].sample.load()?)))
                .collect::<Result<Vec<_>>>()?;
            let (loss, grads) = batch_grad(&model, &batch, &std, cfg.seed, [epoch as u64, step as u64])?;
            if !loss.is_finite() {
                return Err(Error::Data(format!("non-finite training loss at epoch {epoch}")));
            }
            opt.step(&mut model, &grads)?;
            loss_sum += loss * chunk.len() as f64;
        }
        let entry = EpochLog { epoch, train_nll: loss_sum / n, val_nll: mean_nll(&model, val)? };
        on_epoch(&entry);
        let decision = stopper.update(epoch, entry.val_nll);
        log.push(entry);
        match decision {
            StopDecision::Improved => best = model.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                stopped_early = true;
                break;
            }
        }
    }
    best.quantize();
    Ok(TrainOutcome { model: best, log, best_epoch: stopper.best_epoch, stopped_early })
}

/// Physical-unit estimates for many examples.
pub fn predict_examples(model: &Model, examples: &[Example]) -> Result<Vec<Estimate>> {
    examples
        .par_iter()
        .map(|e| Ok(model.forward(&e.sample.load()?)?.denormalize(&model.target_std)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patience_stops_on_frozen_metric() {
        let mut s = EarlyStopping::new(3);
        assert_eq!(s.update(1, 5.0), StopDecision::Improved);
        assert_eq!(s.update(2, 5.0), StopDecision::Continue);
        assert_eq!(s.update(3, 5.0), StopDecision::Continue);
        assert_eq!(s.update(4, 5.0), StopDecision::Stop);
        assert_eq!(s.best_epoch, 1);
        let mut s = EarlyStopping::new(2);
        s.update(1, 3.0);
        s.update(2, 4.0);
        assert_eq!(s.update(3, 2.0), StopDecision::Improved);
        assert_eq!(s.since_best, 0);
    }

    #[test]
    fn std_of_targets() {
        let ex = |t: Vec<f64>| Example { sample: Sample::Wav(PathBuf::new()), target: t, room_id: 0, position: 0 };
        let s = target_std(&[ex(vec![1.0, 10.0]), ex(vec![3.0, 10.5])]).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-12 && (s[1] - 0.25).abs() < 1e-12);
        assert!(target_std(&[ex(vec![1.0]), ex(vec![1.0])]).is_err());
        assert!(target_std(&[]).is_err());
    }
}
