//! Fusion of per-position estimates, error metrics and evaluation reports.

pub mod plot;
pub mod report;

use std::collections::BTreeMap;
use std::path::Path;

use itertools::Itertools;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, shape, Error, Result};
use crate::geometry::{ABSORPTION_OFFSET, N_BANDS, N_TARGETS, RT60_OFFSET, SURFACE_INDEX, VOLUME_INDEX};
use crate::neural::train::{examples_from_manifest, predict_examples};
use crate::neural::{Estimate, Model};
use crate::pipeline::{DatasetManifest, Split};
use crate::rng::{stream, Purpose};

pub use report::{evaluate, variant_labels, write_report, AblationRow, CurvePoint, EvalReport, REFERENCE_MAE};

/// Precision-weighted combination of `j` Gaussian estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedEstimate {
    pub mean: Vec<f64>,
    pub precision: Vec<f64>,
    pub j: usize,
}

impl FusedEstimate {
    pub fn variance(&self) -> Vec<f64> {
        self.precision.iter().map(|p| 1.0 / p).collect()
    }

    pub fn to_estimate(&self) -> Estimate {
        Estimate { mean: self.mean.clone(), var: self.variance() }
    }
}

/// Fuses independent observations of the same quantities: precisions add and
/// means are weighted by their share of the total precision.
pub fn fuse(estimates: &[Estimate]) -> Result<FusedEstimate> {
    let first = estimates.first().ok_or_else(|| domain("cannot fuse an empty list of estimates"))?;
    let d = first.mean.len();
    let mut precision = vec![0.0; d];
    let mut weighted = vec![0.0; d];
    for e in estimates {
        if e.mean.len() != d || e.var.len() != d {
            return Err(shape(format!("estimate of size {}/{} among estimates of size {d}", e.mean.len(), e.var.len())));
        }
        for (i, (&m, &v)) in e.mean.iter().zip(&e.var).enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(domain(format!("variance {v} of target {i} is not positive")));
            }
            precision[i] += 1.0 / v;
            weighted[i] += m / v;
        }
    }
    let mean = weighted.iter().zip(&precision).map(|(w, p)| w / p).collect();
    Ok(FusedEstimate { mean, precision, j: estimates.len() })
}

/// The four reported parameter groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamGroup {
    Absorption,
    Rt60,
    Surface,
    Volume,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 4] = [ParamGroup::Absorption, ParamGroup::Rt60, ParamGroup::Surface, ParamGroup::Volume];

    /// Target indices belonging to the group.
    pub fn indices(self) -> std::ops::Range<usize> {
        match self {
            ParamGroup::Absorption => ABSORPTION_OFFSET..ABSORPTION_OFFSET + N_BANDS,
            ParamGroup::Rt60 => RT60_OFFSET..RT60_OFFSET + N_BANDS,
            ParamGroup::Surface => SURFACE_INDEX..SURFACE_INDEX + 1,
            ParamGroup::Volume => VOLUME_INDEX..VOLUME_INDEX + 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ParamGroup::Absorption => "ᾱ",
            ParamGroup::Rt60 => "RT60 (s)",
            ParamGroup::Surface => "S (m²)",
            ParamGroup::Volume => "V (m³)",
        }
    }

    /// ASCII column name for CSV files.
    pub fn key(self) -> &'static str {
        match self {
            ParamGroup::Absorption => "alpha",
            ParamGroup::Rt60 => "rt60_s",
            ParamGroup::Surface => "surface_m2",
            ParamGroup::Volume => "volume_m3",
        }
    }
}

/// What an error metric looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    Target(usize),
    /// Band average for ᾱ and RT60.
    Group(ParamGroup),
}

impl Selector {
    fn indices(self) -> std::ops::Range<usize> {
        match self {
            Selector::Target(i) => i..i + 1,
            Selector::Group(g) => g.indices(),
        }
    }
}

/// Absolute error per room, averaged over the selected targets.
pub fn abs_errors(predictions: &[Vec<f64>], truths: &[Vec<f64>], sel: Selector) -> Result<Vec<f64>> {
    if predictions.len() != truths.len() {
        return Err(shape(format!("{} predictions for {} truths", predictions.len(), truths.len())));
    }
    let idx = sel.indices();
    predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| {
            if p.len() < idx.end || t.len() < idx.end {
                return Err(shape(format!("vectors of size {}/{} lack target {}", p.len(), t.len(), idx.end - 1)));
            }
            Ok(idx.clone().map(|i| (p[i] - t[i]).abs()).sum::<f64>() / idx.len() as f64)
        })
        .collect()
}

/// Mean absolute error in physical units.
pub fn mae(predictions: &[Vec<f64>], truths: &[Vec<f64>], sel: Selector) -> Result<f64> {
    let e = abs_errors(predictions, truths, sel)?;
    if e.is_empty() {
        return Err(domain("mean absolute error of an empty set"));
    }
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

/// Percentile bootstrap interval for the mean of `errors`.
pub fn bootstrap_ci<R: Rng + ?Sized>(errors: &[f64], level: f64, resamples: usize, rng: &mut R) -> Result<(f64, f64)> {
    let n = errors.len();
    if n < 2 {
        return Err(domain(format!("bootstrap needs at least 2 samples, got {n}")));
    }
    if !(level > 0.0 && level < 1.0) || resamples == 0 {
        return Err(domain(format!("invalid bootstrap setting: level {level}, {resamples} resamples")));
    }
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| errors[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((quantile(&means, tail), quantile(&means, 1.0 - tail)))
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Bootstrap draws used for every interval in a report.
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

pub(crate) fn seeded_ci(errors: &[f64], seed: u64, tag: &[u64]) -> Result<(f64, f64)> {
    bootstrap_ci(errors, 0.95, BOOTSTRAP_RESAMPLES, &mut stream(seed, Purpose::Bootstrap, tag))
}

/// Ground truth and per-position estimates of one room.
#[derive(Debug, Clone, PartialEq)]
pub struct RoomPredictions {
    pub room_id: u64,
    pub truth: Vec<f64>,
    /// Ordered by position index.
    pub positions: Vec<Estimate>,
}

/// Mean over all `C(n, j)` subsets of the positions: absolute error per
/// target and fused variance per target.
pub fn subset_average(room: &RoomPredictions, j: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = room.positions.len();
    if j == 0 || j > n {
        return Err(domain(format!("room {} has {n} positions, cannot fuse {j}", room.room_id)));
    }
    let d = room.truth.len();
    let mut err = vec![0.0; d];
    let mut var = vec![0.0; d];
    let mut count = 0usize;
    for subset in room.positions.iter().cloned().combinations(j) {
        let f = fuse(&subset)?;
        if f.mean.len() != d {
            return Err(shape(format!("estimates of size {} for {d} targets", f.mean.len())));
        }
        for i in 0..d {
            err[i] += (f.mean[i] - room.truth[i]).abs();
            var[i] += 1.0 / f.precision[i];
        }
        count += 1;
    }
    let c = count as f64;
    err.iter_mut().chain(var.iter_mut()).for_each(|v| *v /= c);
    Ok((err, var))
}

/// Per-mixture output of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub mix_id: String,
    pub room_id: u64,
    pub position: usize,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Fused output for one room.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedRecord {
    pub room_id: u64,
    pub j: usize,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Runs `model` on every mixture of `split`, in manifest order.
pub fn predict_split(model: &Model, manifest: &DatasetManifest, root: &Path, split: Split) -> Result<Vec<PredictionRecord>> {
    let examples = examples_from_manifest(manifest, root, split)?;
    let estimates = predict_examples(model, &examples)?;
    Ok(manifest
        .mixtures_in(split)
        .zip(estimates)
        .map(|(m, e)| PredictionRecord {
            mix_id: m.mix_id.clone(),
            room_id: m.room_id,
            position: m.position,
            mean: e.mean,
            var: e.var,
        })
        .collect())
}

/// Groups predictions by room and attaches the manifest's targets.
pub fn group_by_room(records: &[PredictionRecord], manifest: &DatasetManifest) -> Result<Vec<RoomPredictions>> {
    let mut rooms: BTreeMap<u64, Vec<&PredictionRecord>> = BTreeMap::new();
    for r in records {
        rooms.entry(r.room_id).or_default().push(r);
    }
    rooms
        .into_iter()
        .map(|(room_id, mut recs)| {
            let truth = manifest
                .room(room_id)
                .ok_or_else(|| Error::Data(format!("prediction for unknown room {room_id}")))?
                .targets
                .clone();
            if truth.len() != N_TARGETS {
                return Err(Error::Data(format!("room {room_id} has {} targets", truth.len())));
            }
            recs.sort_by_key(|r| r.position);
            if recs.windows(2).any(|w| w[0].position == w[1].position) {
                return Err(Error::Data(format!("room {room_id} has duplicate positions")));
            }
            let positions = recs.iter().map(|r| Estimate { mean: r.mean.clone(), var: r.var.clone() }).collect();
            Ok(RoomPredictions { room_id, truth, positions })
        })
        .collect()
}

/// Fuses the first `j` positions of every room (all positions when `j` is
/// `None`), rooms in ascending id order.
pub fn fuse_predictions(records: &[PredictionRecord], j: Option<usize>) -> Result<Vec<FusedRecord>> {
    let mut rooms: BTreeMap<u64, Vec<&PredictionRecord>> = BTreeMap::new();
    for r in records {
        rooms.entry(r.room_id).or_default().push(r);
    }
    let rooms: Vec<(u64, Vec<&PredictionRecord>)> = rooms.into_iter().collect();
    rooms
        .par_iter()
        .map(|(room_id, recs)| {
            let mut recs = recs.clone();
            recs.sort_by_key(|r| r.position);
            let j = j.unwrap_or(recs.len());
            if j == 0 || recs.len() < j {
                return Err(domain(format!("room {room_id} has {} positions, cannot fuse {j}", recs.len())));
            }
            let est: Vec<Estimate> = recs[..j].iter().map(|r| Estimate { mean: r.mean.clone(), var: r.var.clone() }).collect();
            let f = fuse(&est)?;
            Ok(FusedRecord { room_id: *room_id, j, var: f.variance(), mean: f.mean })
        })
        .collect()
}
