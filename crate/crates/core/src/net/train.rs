//! Mini-batch Adam training on `(C_in, C_gt)` cube pairs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::UNetConfig;
use super::model::ModelWeights;
use crate::error::{Error, Result};
use crate::parallel::pool;
use crate::partition::OccupancyCube;
use crate::tensor::{adam_step, AdamConfig, Tensor};

/// Decoded cube and the ground-truth cube at the same index.
pub type TrainingPair = (OccupancyCube, OccupancyCube);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Seeds the shuffle schedule.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 64,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean BCE over the epoch's samples, measured before each update.
    pub mean_loss: f64,
    pub steps: u64,
}

fn check_pairs(pairs: &[TrainingPair], config: &UNetConfig) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    for (input, target) in pairs {
        if input.index != target.index {
            return Err(Error::Input(format!(
                "pair indices {:?} and {:?} differ",
                input.index, target.index
            )));
        }
        for c in [input, target] {
            if c.size() != config.cube_size {
                return Err(Error::Shape(format!(
                    "cube {:?} has size {:?}, model expects {:?}",
                    c.index,
                    c.size().0,
                    config.cube_size.0
                )));
            }
        }
    }
    Ok(())
}

/// Trains freshly initialized weights and returns them with the per-epoch
/// mean loss.
pub fn train(
    pairs: &[TrainingPair],
    config: UNetConfig,
    tc: &TrainConfig,
) -> Result<(ModelWeights, Vec<f64>)> {
    let mut weights = ModelWeights::init(config)?;
    let history = train_with(&mut weights, pairs, tc, |_, _| true)?;
    Ok((weights, history))
}

/// Continues training `weights`. `on_epoch` runs after every epoch and
/// stops training by returning `false`.
pub fn train_with(
    weights: &mut ModelWeights,
    pairs: &[TrainingPair],
    tc: &TrainConfig,
    mut on_epoch: impl FnMut(&ModelWeights, &EpochStats) -> bool,
) -> Result<Vec<f64>> {
    check_pairs(pairs, weights.config())?;
    if tc.batch_size == 0 {
        return Err(Error::Input("batch size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut history = Vec::with_capacity(tc.epochs);
    let mut steps = 0u64;
    for epoch in 0..tc.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(tc.batch_size) {
            let model = &*weights;
            let results: Vec<(f64, Vec<Tensor<f32>>)> = pool().install(|| {
                batch
                    .par_iter()
                    .map(|&i| {
                        let (input, target) = &pairs[i];
                        model.loss_and_grads(&model.cube_tensor(input)?, &model.cube_tensor(target)?)
                    })
                    .collect::<Result<_>>()
            })?;
            let scale = 1.0 / batch.len() as f32;
            for (loss, grads) in &results {
                loss_sum += loss;
                for (p, g) in weights.params_mut().iter_mut().zip(grads) {
                    for (acc, &v) in p.grad.data_mut().iter_mut().zip(g.data()) {
                        *acc += v * scale;
                    }
                }
            }
            adam_step(weights.params_mut().iter_mut(), &tc.adam);
            steps += 1;
        }
        let stats = EpochStats {
            epoch,
            mean_loss: loss_sum / pairs.len() as f64,
            steps,
        };
        if !stats.mean_loss.is_finite() {
            return Err(Error::Domain(format!("training loss diverged in epoch {epoch}")));
        }
        history.push(stats.mean_loss);
        if !on_epoch(weights, &stats) {
            break;
        }
    }
    Ok(history)
}
