//! Domain-gap reduction and HAR dataset export: rank-based distribution
//! mapping, zero-phase low-pass filtering, z-score normalization and
//! 1-second / 50%-overlap windowing.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PostprocessError {
    #[error("empty input series")]
    Empty,
    #[error("cutoff {cutoff} Hz outside (0, {nyquist}) for rate {rate} Hz")]
    CutoffOutOfRange { cutoff: f64, rate: f64, nyquist: f64 },
    #[error("series of {n} samples shorter than window of {window} samples")]
    TooShort { n: usize, window: usize },
    #[error("channel {0} has zero variance; cannot z-score")]
    ZeroVariance(usize),
    #[error("window and label counts differ: {0} vs {1}")]
    LabelMismatch(usize, usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Maps each sample of `sim` onto the empirical quantile of `reference` at
/// its own rank, `rank(sim[i]) / (N+1)`, with ties broken by average rank.
/// The output is a monotone transform of `sim`: rank order is preserved.
pub fn distribution_map(sim: &[f64], reference: &[f64]) -> Result<Vec<f64>, PostprocessError> {
    if sim.is_empty() || reference.is_empty() {
        return Err(PostprocessError::Empty);
    }
    let ranks = average_ranks(sim);
    let mut sorted_ref = reference.to_vec();
    sorted_ref.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sim.len() as f64;
    Ok(ranks
        .iter()
        .map(|&r| empirical_quantile(&sorted_ref, r / (n + 1.0)))
        .collect())
}

/// 1-based ranks with ties averaged.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Quantile of a sorted sample with Weibull plotting positions `k/(M+1)`,
/// linearly interpolated between order statistics.
fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let m = sorted.len();
    let h = p * (m as f64 + 1.0);
    if h <= 1.0 {
        return sorted[0];
    }
    if h >= m as f64 {
        return sorted[m - 1];
    }
    let k = h.floor() as usize; // 1-based
    let frac = h - k as f64;
    sorted[k - 1] + frac * (sorted[k] - sorted[k - 1])
}

/// One second-order IIR section in direct form II transposed.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Biquad {
    /// Low-pass section from the bilinear transform with frequency prewarp
    /// (RBJ cookbook form).
    fn lowpass(cutoff: f64, rate: f64, q: f64) -> Biquad {
        let w0 = std::f64::consts::TAU * cutoff / rate;
        let alpha = w0.sin() / (2.0 * q);
        let cos = w0.cos();
        let a0 = 1.0 + alpha;
        Biquad {
            b0: (1.0 - cos) / 2.0 / a0,
            b1: (1.0 - cos) / a0,
            b2: (1.0 - cos) / 2.0 / a0,
            a1: -2.0 * cos / a0,
            a2: (1.0 - alpha) / a0,
        }
    }

    fn filter(&self, xs: &[f64]) -> Vec<f64> {
        // Start at the steady state for a constant input equal to the first
        // sample, so a DC signal passes through without an edge transient.
        let x0 = xs.first().copied().unwrap_or(0.0);
        let g = (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2);
        let mut s1 = (g - self.b0) * x0;
        let mut s2 = (self.b2 - self.a2 * g) * x0;
        xs.iter()
            .map(|&x| {
                let y = self.b0 * x + s1;
                s1 = self.b1 * x - self.a1 * y + s2;
                s2 = self.b2 * x - self.a2 * y;
                y
            })
            .collect()
    }
}

// Q values of the two sections of a 4th-order Butterworth cascade:
// 1 / (2 cos(pi/8)) and 1 / (2 cos(3 pi/8)).
const BUTTER4_Q: [f64; 2] = [0.5411961001461969, 1.3065629648763766];

/// 4th-order Butterworth low-pass (two cascaded biquads), applied
/// forward-backward for zero phase. Gain at DC is 1; a sinusoid exactly at
/// the cutoff is attenuated to about 1/2 after both passes.
pub fn lowpass(series: &[f64], cutoff: f64, sample_rate: f64) -> Result<Vec<f64>, PostprocessError> {
    let nyquist = sample_rate / 2.0;
    if !(cutoff > 0.0 && cutoff < nyquist) {
        return Err(PostprocessError::CutoffOutOfRange { cutoff, rate: sample_rate, nyquist });
    }
    if series.is_empty() {
        return Err(PostprocessError::Empty);
    }
    let sections: Vec<Biquad> =
        BUTTER4_Q.iter().map(|&q| Biquad::lowpass(cutoff, sample_rate, q)).collect();
    let single_pass = |xs: &[f64]| {
        let mut ys = xs.to_vec();
        for s in &sections {
            ys = s.filter(&ys);
        }
        ys
    };
    let mut ys = single_pass(series);
    ys.reverse();
    ys = single_pass(&ys);
    ys.reverse();
    Ok(ys)
}

/// Per-channel mean/std captured by [`normalize`], sufficient to invert it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Z-scores each channel (channels are the inner index of `series`).
/// A zero-variance channel is an error; callers that want pass-through
/// behavior can zero-center such channels themselves.
pub fn normalize(series: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, NormStats), PostprocessError> {
    if series.is_empty() || series[0].is_empty() {
        return Err(PostprocessError::Empty);
    }
    let channels = series[0].len();
    let n = series.len() as f64;
    let mut mean = vec![0.0; channels];
    for row in series {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; channels];
    for row in series {
        for c in 0..channels {
            var[c] += (row[c] - mean[c]).powi(2);
        }
    }
    let mut std = vec![0.0; channels];
    for c in 0..channels {
        std[c] = (var[c] / n).sqrt();
        if std[c] == 0.0 {
            return Err(PostprocessError::ZeroVariance(c));
        }
    }
    let out = series
        .iter()
        .map(|row| row.iter().enumerate().map(|(c, x)| (x - mean[c]) / std[c]).collect())
        .collect();
    Ok((out, NormStats { mean, std }))
}

/// Inverts [`normalize`].
pub fn denormalize(series: &[Vec<f64>], stats: &NormStats) -> Vec<Vec<f64>> {
    series
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(c, x)| x * stats.std[c] + stats.mean[c])
                .collect()
        })
        .collect()
}

/// Number of sliding windows of `window_len` with `hop` over `n` samples.
pub fn window_count(n: usize, window_len: usize, hop: usize) -> usize {
    (n - window_len) / hop + 1
}

/// Splits a multichannel series into sliding windows; defaults elsewhere are
/// 1 s length with 50% overlap. Returns the window start indices alongside
/// the window data.
pub fn har_windows(
    series: &[Vec<f64>],
    sample_rate: f64,
    window_s: f64,
    overlap: f64,
) -> Result<Vec<(usize, Vec<Vec<f64>>)>, PostprocessError> {
    let window_len = (window_s * sample_rate).round() as usize;
    let hop = ((window_len as f64) * (1.0 - overlap)).round().max(1.0) as usize;
    if series.len() < window_len {
        return Err(PostprocessError::TooShort { n: series.len(), window: window_len });
    }
    let count = window_count(series.len(), window_len, hop);
    Ok((0..count)
        .map(|w| {
            let start = w * hop;
            (start, series[start..start + window_len].to_vec())
        })
        .collect())
}

/// Metadata written next to an HAR export.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HarMeta {
    pub sample_rate: f64,
    pub window_s: f64,
    pub overlap: f64,
    pub subject: String,
    pub channels: Vec<String>,
    pub window_count: usize,
    /// True when a reference recording was used for distribution mapping.
    pub distribution_mapped: bool,
}

/// Writes an HAR window directory: `X.csv` with one flattened window per
/// row, `y.csv` with one label per row, and `meta.json`.
pub fn export_har(
    dir: impl AsRef<Path>,
    windows: &[(usize, Vec<Vec<f64>>)],
    labels: &[String],
    meta: &HarMeta,
) -> Result<(), PostprocessError> {
    if labels.len() != windows.len() {
        return Err(PostprocessError::LabelMismatch(windows.len(), labels.len()));
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut x = std::io::BufWriter::new(std::fs::File::create(dir.join("X.csv"))?);
    for (_, window) in windows {
        let cells: Vec<String> = window
            .iter()
            .flat_map(|row| row.iter().map(|v| format!("{v:.16e}")))
            .collect();
        writeln!(x, "{}", cells.join(","))?;
    }
    let mut y = std::io::BufWriter::new(std::fs::File::create(dir.join("y.csv"))?);
    for label in labels {
        writeln!(y, "{label}")?;
    }
    std::fs::write(
        dir.join("meta.json"),
        serde_json::to_string_pretty(meta).expect("meta serialization cannot fail"),
    )?;
    Ok(())
}
