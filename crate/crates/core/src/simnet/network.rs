//! The full regressor: three conv layers (ReLU, same padding) feeding two
//! bidirectional LSTM layers and a per-frame linear head with 3 outputs.
//! Layer counts are fixed; channel, kernel and hidden sizes are
//! configuration.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{BiLstmLayer, ConvLayer, Linear, LstmDir};
use super::SimnetError;

/// Architecture sizes. `input_dim` is 27 (3 triangles × 3 vertices × 3
/// coordinates per frame) or 31 when the per-frame segment orientation
/// quaternion is appended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub conv_channels: [usize; 3],
    pub conv_kernel: usize,
    pub lstm_hidden: usize,
    /// Append the `(w,x,y,z)` bone orientation to each input frame.
    pub include_orientation: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            input_dim: 27,
            conv_channels: [64, 64, 64],
            conv_kernel: 5,
            lstm_hidden: 128,
            include_orientation: false,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), SimnetError> {
        if self.include_orientation && self.input_dim != 31 {
            return Err(SimnetError::BadConfig(format!(
                "include_orientation requires input_dim 31, got {}",
                self.input_dim
            )));
        }
        if !self.include_orientation && self.input_dim != 27 {
            return Err(SimnetError::BadConfig(format!(
                "input_dim must be 27 without orientation, got {}",
                self.input_dim
            )));
        }
        if self.conv_kernel % 2 == 0 || self.conv_kernel == 0 {
            return Err(SimnetError::BadConfig(format!(
                "conv_kernel must be odd and positive for same-length padding, got {}",
                self.conv_kernel
            )));
        }
        if self.conv_channels.contains(&0) || self.lstm_hidden == 0 {
            return Err(SimnetError::BadConfig("layer sizes must be positive".into()));
        }
        Ok(())
    }

    /// Shapes of every parameter array, in canonical (serialization) order.
    pub fn param_entries(&self) -> Vec<(String, Vec<usize>)> {
        let mut entries = Vec::new();
        let mut in_ch = self.input_dim;
        for (l, &out_ch) in self.conv_channels.iter().enumerate() {
            entries.push((format!("conv{l}.w"), vec![out_ch, in_ch, self.conv_kernel]));
            entries.push((format!("conv{l}.b"), vec![out_ch]));
            in_ch = out_ch;
        }
        let h = self.lstm_hidden;
        let mut lstm_in = in_ch;
        for l in 0..2 {
            for dir in ["fwd", "bwd"] {
                entries.push((format!("lstm{l}.{dir}.w_ih"), vec![4 * h, lstm_in]));
                entries.push((format!("lstm{l}.{dir}.w_hh"), vec![4 * h, h]));
                entries.push((format!("lstm{l}.{dir}.b"), vec![4 * h]));
            }
            lstm_in = 2 * h;
        }
        entries.push(("head.w".to_string(), vec![3, 2 * h]));
        entries.push(("head.b".to_string(), vec![3]));
        entries
    }
}

/// All parameters of one network. The same structure carries gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub conv: Vec<ConvLayer>,
    pub lstm: Vec<BiLstmLayer>,
    pub head: Linear,
}

impl Params {
    pub fn zeros(config: &NetworkConfig) -> Params {
        let mut conv = Vec::new();
        let mut in_ch = config.input_dim;
        for &out_ch in &config.conv_channels {
            conv.push(ConvLayer::zeros(out_ch, in_ch, config.conv_kernel));
            in_ch = out_ch;
        }
        let h = config.lstm_hidden;
        let lstm = vec![BiLstmLayer::zeros(in_ch, h), BiLstmLayer::zeros(2 * h, h)];
        Params { conv, lstm, head: Linear::zeros(2 * h, 3) }
    }

    /// Uniform init in ±1/√fan_in per array, deterministic per seed.
    pub fn init(config: &NetworkConfig, seed: u64) -> Params {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::zeros(config);
        for layer in &mut params.conv {
            let fan_in = (layer.w.dim().1 * layer.w.dim().2) as f64;
            let bound = fan_in.sqrt().recip();
            layer.w.mapv_inplace(|_| rng.gen_range(-bound..bound));
            layer.b.mapv_inplace(|_| rng.gen_range(-bound..bound));
        }
        for layer in &mut params.lstm {
            for dir in [&mut layer.fwd, &mut layer.bwd] {
                init_lstm_dir(dir, &mut rng);
            }
        }
        let bound = (params.head.w.ncols() as f64).sqrt().recip();
        params.head.w.mapv_inplace(|_| rng.gen_range(-bound..bound));
        params.head.b.mapv_inplace(|_| rng.gen_range(-bound..bound));
        params
    }

    /// Flattens every array in canonical order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.for_each(|xs| out.extend(xs.iter().copied()));
        out
    }

    /// Inverse of [`Params::flatten`].
    pub fn from_flat(config: &NetworkConfig, flat: &[f64]) -> Result<Params, SimnetError> {
        let mut params = Params::zeros(config);
        let mut cursor = 0usize;
        let mut result = Ok(());
        params.for_each_mut(|xs| {
            if result.is_err() {
                return;
            }
            let len = xs.len();
            if cursor + len > flat.len() {
                result = Err(SimnetError::BadConfig(format!(
                    "parameter blob too short: {} values",
                    flat.len()
                )));
                return;
            }
            xs.copy_from_slice(&flat[cursor..cursor + len]);
            cursor += len;
        });
        result?;
        if cursor != flat.len() {
            return Err(SimnetError::BadConfig(format!(
                "parameter blob has {} values, expected {cursor}",
                flat.len()
            )));
        }
        Ok(params)
    }

    pub fn len(&self) -> usize {
        let mut n = 0;
        self.for_each(|xs| n += xs.len());
        n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Visits every parameter array as a slice, in canonical order matching
    /// [`NetworkConfig::param_entries`].
    pub fn for_each(&self, mut f: impl FnMut(&[f64])) {
        for layer in &self.conv {
            f(layer.w.as_slice().expect("contiguous"));
            f(layer.b.as_slice().expect("contiguous"));
        }
        for layer in &self.lstm {
            for dir in [&layer.fwd, &layer.bwd] {
                f(dir.w_ih.as_slice().expect("contiguous"));
                f(dir.w_hh.as_slice().expect("contiguous"));
                f(dir.b.as_slice().expect("contiguous"));
            }
        }
        f(self.head.w.as_slice().expect("contiguous"));
        f(self.head.b.as_slice().expect("contiguous"));
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        for layer in &mut self.conv {
            f(layer.w.as_slice_mut().expect("contiguous"));
            f(layer.b.as_slice_mut().expect("contiguous"));
        }
        for layer in &mut self.lstm {
            for dir in [&mut layer.fwd, &mut layer.bwd] {
                f(dir.w_ih.as_slice_mut().expect("contiguous"));
                f(dir.w_hh.as_slice_mut().expect("contiguous"));
                f(dir.b.as_slice_mut().expect("contiguous"));
            }
        }
        f(self.head.w.as_slice_mut().expect("contiguous"));
        f(self.head.b.as_slice_mut().expect("contiguous"));
    }
}

fn init_lstm_dir(dir: &mut LstmDir, rng: &mut ChaCha8Rng) {
    let bound = (dir.hidden_size() as f64).sqrt().recip();
    dir.w_ih.mapv_inplace(|_| rng.gen_range(-bound..bound));
    dir.w_hh.mapv_inplace(|_| rng.gen_range(-bound..bound));
    dir.b.mapv_inplace(|_| rng.gen_range(-bound..bound));
}

struct ForwardCache {
    conv_inputs: Vec<Array2<f64>>,
    conv_pre: Vec<Array2<f64>>,
    lstm_inputs: Vec<Array2<f64>>,
    lstm_caches: Vec<super::layers::BiLstmCache>,
    head_input: Array2<f64>,
}

fn forward_cached(params: &Params, input: &Array2<f64>) -> (Array2<f64>, ForwardCache) {
    let mut x = input.clone();
    let mut conv_inputs = Vec::new();
    let mut conv_pre = Vec::new();
    for layer in &params.conv {
        conv_inputs.push(x.clone());
        let (act, pre) = layer.forward(&x);
        conv_pre.push(pre);
        x = act;
    }
    let mut lstm_inputs = Vec::new();
    let mut lstm_caches = Vec::new();
    for layer in &params.lstm {
        lstm_inputs.push(x.clone());
        let (out, cache) = layer.forward(&x);
        lstm_caches.push(cache);
        x = out;
    }
    let head_input = x.clone();
    let y = params.head.forward(&x);
    (y, ForwardCache { conv_inputs, conv_pre, lstm_inputs, lstm_caches, head_input })
}

/// Deterministic forward pass of one window: `[T, input_dim]` in,
/// `[T, 3]` out. Pure; no state survives between calls.
pub fn forward(params: &Params, input: &Array2<f64>) -> Result<Array2<f64>, SimnetError> {
    let expected = params.conv[0].w.dim().1;
    if input.ncols() != expected {
        return Err(SimnetError::ShapeMismatch {
            what: "window input columns",
            got: input.ncols(),
            expected,
        });
    }
    Ok(forward_cached(params, input).0)
}

/// Mean-squared-error loss and full gradient over a batch of
/// `(input, target)` windows. The gradient is checked against central
/// finite differences in the tests.
pub fn loss_and_gradient(
    params: &Params,
    batch: &[(Array2<f64>, Array2<f64>)],
) -> Result<(f64, Params), SimnetError> {
    if batch.is_empty() {
        return Err(SimnetError::EmptyBatch);
    }
    let config_cols = params.conv[0].w.dim().1;
    let total: usize = batch.iter().map(|(_, t)| t.len()).sum();
    let scale = 1.0 / total as f64;

    let mut loss = 0.0;
    let mut grad = zeros_like(params);
    for (input, target) in batch {
        if input.ncols() != config_cols {
            return Err(SimnetError::ShapeMismatch {
                what: "window input columns",
                got: input.ncols(),
                expected: config_cols,
            });
        }
        if target.nrows() != input.nrows() || target.ncols() != 3 {
            return Err(SimnetError::ShapeMismatch {
                what: "target rows",
                got: target.nrows(),
                expected: input.nrows(),
            });
        }
        let (y, cache) = forward_cached(params, input);
        let diff = &y - target;
        loss += diff.iter().map(|v| v * v).sum::<f64>() * scale;
        let d_y = diff * (2.0 * scale);

        let mut dx = params.head.backward(&cache.head_input, &d_y, &mut grad.head);
        for l in (0..params.lstm.len()).rev() {
            dx = params.lstm[l].backward(
                &cache.lstm_inputs[l],
                &cache.lstm_caches[l],
                &dx,
                &mut grad.lstm[l],
            );
        }
        for l in (0..params.conv.len()).rev() {
            dx = params.conv[l].backward(
                &cache.conv_inputs[l],
                &cache.conv_pre[l],
                &dx,
                &mut grad.conv[l],
            );
        }
    }
    if !loss.is_finite() {
        return Err(SimnetError::NonFiniteLoss(loss));
    }
    Ok((loss, grad))
}

fn zeros_like(params: &Params) -> Params {
    let mut grad = params.clone();
    grad.for_each_mut(|xs| xs.fill(0.0));
    grad
}
