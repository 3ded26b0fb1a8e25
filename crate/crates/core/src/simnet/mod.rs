//! The learned mapping from noisy mesh-triangle trajectories to global-frame
//! IMU readings. Two independent networks are trained, one for the
//! accelerometer and one for the gyroscope; each sees a window of per-frame
//! triangle vertex coordinates and regresses a 3-vector per frame.
//!
//! Windows overlap 80% at 2 s by default; prediction stitches overlapping
//! windows by uniform averaging, with a final right-aligned window covering
//! any tail shorter than one window.

mod bundle;
mod layers;
mod network;
mod train;

pub use bundle::WeightBundle;
pub use layers::{BiLstmLayer, ConvLayer, Linear, LstmDir};
pub use network::{forward, loss_and_gradient, NetworkConfig, Params};
pub use train::{train, TrainConfig};

use ndarray::Array2;
use nalgebra::Vector3;
use thiserror::Error;

use crate::motion::{FrameTag, ImuSeries, MotionTrackSet};
use crate::postprocess::NormStats;

#[derive(Debug, Error)]
pub enum SimnetError {
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("{what}: got {got}, expected {expected}")]
    ShapeMismatch { what: &'static str, got: usize, expected: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite loss {0}")]
    NonFiniteLoss(f64),
    #[error("training diverged at epoch {epoch} (loss {loss}); history retained")]
    Diverged { epoch: usize, loss: f64, history: Vec<f64> },
    #[error("track ({track} Hz) and target ({target} Hz) sample rates differ")]
    RateMismatch { track: f64, target: f64 },
    #[error("series of {n} frames shorter than window of {window} frames")]
    TooShort { n: usize, window: usize },
    #[error("track has {track} frames but target has {target}")]
    LengthMismatch { track: usize, target: usize },
    #[error("targets must be in the global frame, got {0}")]
    WrongFrame(FrameTag),
    #[error("weights file: {0}")]
    BadBundle(String),
    #[error(transparent)]
    Motion(#[from] crate::motion::MotionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which target channel a network regresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetChannel {
    Accel,
    Gyro,
}

/// Standardized training windows with the statistics and geometry needed to
/// reproduce them at prediction time.
#[derive(Debug, Clone)]
pub struct WindowSet {
    /// Per-window standardized inputs, each `[window_len, input_dim]`.
    pub inputs: Vec<Array2<f64>>,
    /// Per-window targets, each `[window_len, 3]`, global frame.
    pub targets: Vec<Array2<f64>>,
    /// Source frame offset of each window, for stitching.
    pub offsets: Vec<usize>,
    /// Per-channel mean/std of the raw inputs.
    pub stats: NormStats,
    pub window_len: usize,
    pub hop: usize,
    pub sample_rate: f64,
}

/// Raw (unstandardized) per-frame network input for a region: the 27
/// triangle-vertex coordinates in triangle-listing order, optionally
/// followed by the `(w,x,y,z)` bone orientation.
pub fn input_matrix(
    set: &MotionTrackSet,
    region: &str,
    config: &NetworkConfig,
) -> Result<Array2<f64>, SimnetError> {
    let track = set.region(region)?;
    let frames = set.frame_count();
    let mut out = Array2::zeros((frames, config.input_dim));
    for frame in 0..frames {
        let mut col = 0;
        for tri in 0..3 {
            for v in track.triangle_vertices(tri, frame) {
                out[[frame, col]] = v.x;
                out[[frame, col + 1]] = v.y;
                out[[frame, col + 2]] = v.z;
                col += 3;
            }
        }
        if config.include_orientation {
            let q = track.orientation[frame].quaternion();
            for (i, c) in [q.w, q.i, q.j, q.k].into_iter().enumerate() {
                out[[frame, col + i]] = c;
            }
        }
    }
    Ok(out)
}

fn channel_stats(raw: &Array2<f64>) -> NormStats {
    let n = raw.nrows() as f64;
    let channels = raw.ncols();
    let mut mean = vec![0.0; channels];
    let mut std = vec![0.0; channels];
    for c in 0..channels {
        let col = raw.column(c);
        mean[c] = col.sum() / n;
        let var = col.iter().map(|x| (x - mean[c]).powi(2)).sum::<f64>() / n;
        // A constant channel standardizes to zero rather than erroring;
        // static fixtures are a legitimate input.
        std[c] = var.sqrt().max(1e-8);
    }
    NormStats { mean, std }
}

fn standardize(raw: &Array2<f64>, stats: &NormStats) -> Array2<f64> {
    let mut out = raw.clone();
    for mut row in out.rows_mut() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = (*v - stats.mean[c]) / stats.std[c];
        }
    }
    out
}

/// Window geometry: `L = round(window_s · rate)`, `hop = round(L·(1−overlap))`.
pub fn window_geometry(window_s: f64, overlap: f64, rate: f64) -> (usize, usize) {
    let window_len = (window_s * rate).round() as usize;
    let hop = ((window_len as f64) * (1.0 - overlap)).round().max(1.0) as usize;
    (window_len, hop)
}

/// Slices a track region and its global-frame targets into standardized
/// training windows. Window count is `floor((N−L)/hop) + 1`.
pub fn build_windows(
    set: &MotionTrackSet,
    region: &str,
    targets: &ImuSeries,
    channel: TargetChannel,
    net: &NetworkConfig,
    cfg: &TrainConfig,
) -> Result<WindowSet, SimnetError> {
    net.validate()?;
    cfg.validate(set.sample_rate)?;
    if targets.frame_tag != FrameTag::Global {
        return Err(SimnetError::WrongFrame(targets.frame_tag));
    }
    if (targets.sample_rate - set.sample_rate).abs() > 1e-9 {
        return Err(SimnetError::RateMismatch { track: set.sample_rate, target: targets.sample_rate });
    }
    let frames = set.frame_count();
    if targets.len() != frames {
        return Err(SimnetError::LengthMismatch { track: frames, target: targets.len() });
    }
    let (window_len, hop) = window_geometry(cfg.window_s, cfg.overlap, set.sample_rate);
    if frames < window_len {
        return Err(SimnetError::TooShort { n: frames, window: window_len });
    }

    let raw = input_matrix(set, region, net)?;
    let stats = channel_stats(&raw);
    let standardized = standardize(&raw, &stats);
    let target_vecs: &[Vector3<f64>] = match channel {
        TargetChannel::Accel => &targets.accel,
        TargetChannel::Gyro => &targets.gyro,
    };

    let count = (frames - window_len) / hop + 1;
    let mut inputs = Vec::with_capacity(count);
    let mut target_windows = Vec::with_capacity(count);
    let mut offsets = Vec::with_capacity(count);
    for w in 0..count {
        let start = w * hop;
        inputs.push(standardized.slice(ndarray::s![start..start + window_len, ..]).to_owned());
        let mut t = Array2::zeros((window_len, 3));
        for (i, v) in target_vecs[start..start + window_len].iter().enumerate() {
            t[[i, 0]] = v.x;
            t[[i, 1]] = v.y;
            t[[i, 2]] = v.z;
        }
        target_windows.push(t);
        offsets.push(start);
    }
    Ok(WindowSet {
        inputs,
        targets: target_windows,
        offsets,
        stats,
        window_len,
        hop,
        sample_rate: set.sample_rate,
    })
}

/// Uniform-average stitching of per-window predictions back into one series
/// of `n` frames. Every frame is covered by at least one window.
pub(crate) fn stitch_windows(
    predictions: &[(usize, Array2<f64>)],
    n: usize,
) -> Vec<Vector3<f64>> {
    let mut sum = vec![Vector3::zeros(); n];
    let mut count = vec![0usize; n];
    for (offset, window) in predictions {
        for (i, row) in window.rows().into_iter().enumerate() {
            sum[offset + i] += Vector3::new(row[0], row[1], row[2]);
            count[offset + i] += 1;
        }
    }
    sum.into_iter()
        .zip(count)
        .map(|(s, c)| {
            debug_assert!(c > 0, "stitching left a frame uncovered");
            s / c as f64
        })
        .collect()
}

/// Window start offsets covering `n` frames: regular hops plus a final
/// right-aligned window when a tail would otherwise be uncovered.
fn prediction_offsets(n: usize, window_len: usize, hop: usize) -> Vec<usize> {
    let count = (n - window_len) / hop + 1;
    let mut offsets: Vec<usize> = (0..count).map(|w| w * hop).collect();
    let last = offsets.last().copied().unwrap_or(0);
    if last + window_len < n {
        offsets.push(n - window_len);
    }
    offsets
}

/// Predicts one channel over a whole track with overlap-stitched windows.
pub fn predict_channel(
    bundle: &WeightBundle,
    set: &MotionTrackSet,
    region: &str,
) -> Result<Vec<Vector3<f64>>, SimnetError> {
    if (set.sample_rate - bundle.sample_rate).abs() > 1e-9 {
        return Err(SimnetError::RateMismatch {
            track: set.sample_rate,
            target: bundle.sample_rate,
        });
    }
    let n = set.frame_count();
    let (window_len, hop) = window_geometry(bundle.window_s, bundle.overlap, set.sample_rate);
    if n < window_len {
        return Err(SimnetError::TooShort { n, window: window_len });
    }
    let raw = input_matrix(set, region, &bundle.config)?;
    let standardized = standardize(&raw, &bundle.stats);
    let predictions: Vec<(usize, Array2<f64>)> = prediction_offsets(n, window_len, hop)
        .into_iter()
        .map(|start| {
            let input = standardized.slice(ndarray::s![start..start + window_len, ..]).to_owned();
            network::forward(&bundle.params, &input).map(|y| (start, y))
        })
        .collect::<Result<_, _>>()?;
    Ok(stitch_windows(&predictions, n))
}

/// Runs both networks and assembles a global-frame [`ImuSeries`].
pub fn predict_series(
    accel_bundle: &WeightBundle,
    gyro_bundle: &WeightBundle,
    set: &MotionTrackSet,
    region: &str,
) -> Result<ImuSeries, SimnetError> {
    let accel = predict_channel(accel_bundle, set, region)?;
    let gyro = predict_channel(gyro_bundle, set, region)?;
    Ok(ImuSeries::new(FrameTag::Global, set.sample_rate, accel, gyro)?)
}
