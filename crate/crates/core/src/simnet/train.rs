//! Single-threaded training loop with adaptive-moment gradient descent.
//! Deterministic given the seed: shuffling, init and updates all run off one
//! seeded generator in a fixed order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::bundle::WeightBundle;
use super::network::{loss_and_gradient, NetworkConfig, Params};
use super::{SimnetError, TargetChannel, WindowSet};

/// Training hyperparameters. Defaults: 2 s windows at 80% overlap, MSE
/// loss, adaptive moments with lr 1e-3 and β = (0.9, 0.999).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub window_s: f64,
    pub overlap: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            window_s: 2.0,
            overlap: 0.8,
            batch_size: 4,
            epochs: 100,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, sample_rate: f64) -> Result<(), SimnetError> {
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(SimnetError::BadConfig(format!(
                "overlap must be in [0, 1), got {}",
                self.overlap
            )));
        }
        if self.window_s * sample_rate < 5.0 {
            return Err(SimnetError::BadConfig(format!(
                "window of {} s at {} Hz is under 5 samples",
                self.window_s, sample_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(SimnetError::BadConfig("batch_size must be positive".into()));
        }
        Ok(())
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    lr: f64,
}

impl Adam {
    fn new(n: usize, cfg: &TrainConfig) -> Adam {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            lr: cfg.learning_rate,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Trains one network on a window set. Returns the trained bundle and the
/// per-epoch mean batch loss. A non-finite loss aborts with the history so
/// far attached to the error.
pub fn train(
    windows: &WindowSet,
    channel: TargetChannel,
    net: &NetworkConfig,
    cfg: &TrainConfig,
) -> Result<(WeightBundle, Vec<f64>), SimnetError> {
    net.validate()?;
    cfg.validate(windows.sample_rate)?;
    if windows.inputs.is_empty() {
        return Err(SimnetError::EmptyBatch);
    }

    let mut params = Params::init(net, cfg.seed);
    let mut flat = params.flatten();
    let mut adam = Adam::new(flat.len(), cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..windows.inputs.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<_> = chunk
                .iter()
                .map(|&i| (windows.inputs[i].clone(), windows.targets[i].clone()))
                .collect();
            let (loss, grad) = match loss_and_gradient(&params, &batch) {
                Ok(ok) => ok,
                Err(SimnetError::NonFiniteLoss(loss)) => {
                    return Err(SimnetError::Diverged { epoch, loss, history })
                }
                Err(e) => return Err(e),
            };
            adam.update(&mut flat, &grad.flatten());
            params = Params::from_flat(net, &flat)?;
            // Weight by batch size so the epoch mean is per-window and does
            // not depend on how the shuffle partitioned a ragged last batch.
            epoch_loss += loss * chunk.len() as f64;
        }
        let mean = epoch_loss / windows.inputs.len() as f64;
        if !mean.is_finite() {
            return Err(SimnetError::Diverged { epoch, loss: mean, history });
        }
        history.push(mean);
    }

    let bundle = WeightBundle {
        version: 1,
        channel,
        config: net.clone(),
        seed: cfg.seed,
        stats: windows.stats.clone(),
        window_s: cfg.window_s,
        overlap: cfg.overlap,
        sample_rate: windows.sample_rate,
        params,
    };
    Ok((bundle, history))
}
