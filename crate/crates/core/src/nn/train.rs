//! Shuffled-minibatch Adam training shared by every network.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{adam_step, AdamConfig, OptimizerState};
use super::params::NamedParameters;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Rescale the joint gradient to at most this L2 norm.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            adam: AdamConfig::default(),
            seed: 0,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::InvalidConfig("grad_clip must be positive".into()));
            }
        }
        Ok(())
    }
}

/// A network whose loss on a minibatch can be recorded on a tape.
pub trait Trainable: NamedParameters {
    type Sample;

    /// Binds parameters with [`Tape::param`] in `named_parameters` order and
    /// returns the scalar loss. `rng` is `Some` in training mode.
    fn batch_loss(
        &self,
        tape: &mut Tape,
        batch: &[&Self::Sample],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var>;
}

/// Trains in place. Returns the sample-weighted mean training loss of each
/// epoch.
pub fn fit<M: Trainable>(model: &mut M, samples: &[M::Sample], config: &TrainConfig) -> Result<Vec<f64>> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = OptimizerState::new(
        &config.adam,
        model.named_parameters().into_iter().map(|(_, t)| t),
    )?;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&M::Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            let mut tape = Tape::new();
            let loss = model.batch_loss(&mut tape, &batch, Some(&mut rng))?;
            let value = tape.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::Forecaster("training loss diverged".into()));
            }
            total += value * chunk.len() as f64;
            tape.backward(loss);
            let mut grads = tape.param_grads();
            if let Some(limit) = config.grad_clip {
                let norm = grads
                    .iter()
                    .flat_map(|g| g.data())
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt();
                if norm > limit {
                    let s = limit / norm;
                    for g in &mut grads {
                        g.data_mut().iter_mut().for_each(|v| *v *= s);
                    }
                }
            }
            let mut params: Vec<_> = model
                .named_parameters_mut()
                .into_iter()
                .map(|(_, t)| t)
                .collect();
            adam_step(&mut state, &mut params, &grads)?;
        }
        curve.push(total / samples.len() as f64);
    }
    Ok(curve)
}

/// Mean loss over `samples` in inference mode.
pub fn evaluate_loss<M: Trainable>(model: &M, samples: &[M::Sample], batch_size: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = 0.0;
    for chunk in samples.chunks(batch_size.max(1)) {
        let batch: Vec<&M::Sample> = chunk.iter().collect();
        let mut tape = Tape::new();
        let loss = model.batch_loss(&mut tape, &batch, None)?;
        total += tape.value(loss).data()[0] * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}
