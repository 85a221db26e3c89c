//! Convolutional estimator of room parameters with a heteroscedastic Gaussian
//! output, its gradients, optimiser, training loop and checkpoints.

pub mod checkpoint;
pub mod layers;
pub mod loss;
pub mod model;
pub mod optim;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use loss::{nll_loss, VAR_FLOOR};
pub use model::{ArchConfig, Estimate, Input, Model};
pub use optim::{Adam, AdamConfig};
pub use train::{train, EarlyStopping, Example, Sample, TrainConfig, TrainOutcome};

use crate::error::Result;
use crate::rng::{stream, Purpose};

/// Largest relative difference between the analytic gradient and central
/// finite differences (step `h`) over every parameter. Dropout masks are
/// drawn from `seed` and held fixed across evaluations.
pub fn gradient_check(model: &Model, input: &Input, target: &[f64], seed: u64, h: f64) -> Result<f64> {
    let mask_rng = || stream(seed, Purpose::Dropout, &[u64::MAX]);
    let mut g = model.zero_grads();
    model.loss_and_grad(input, target, Some(&mut mask_rng()), &mut g)?;
    let loss_at = |m: &Model| -> Result<f64> {
        let mut scratch = m.zero_grads();
        m.loss_and_grad(input, target, Some(&mut mask_rng()), &mut scratch)
    };
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (ti, t) in model.tensors.iter().enumerate() {
        for i in 0..t.data.len() {
            let orig = t.data[i];
            probe.tensors[ti].data[i] = orig + h;
            let up = loss_at(&probe)?;
            probe.tensors[ti].data[i] = orig - h;
            let down = loss_at(&probe)?;
            probe.tensors[ti].data[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = g[ti][i];
            let err = (numeric - analytic).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
