//! Conditioning of noisy root/vertex trajectories: confidence gating, gap
//! interpolation, Kalman smoothing and metric scale resolution.
//!
//! Everything here is pure and per-axis, so callers can process many
//! trajectories in parallel.

use nalgebra::{Matrix2, RowVector2, Vector2, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("all {0} frames gated out; nothing left to interpolate")]
    AllGated(usize),
    #[error("need at least {need} present samples, have {have}")]
    TooFewSamples { need: usize, have: usize },
    #[error("lengths differ: {0} positions vs {1} confidences")]
    LengthMismatch(usize, usize),
    #[error("{name} must be strictly positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
}

/// A position series with missing frames.
#[derive(Debug, Clone, PartialEq)]
pub struct GappedSeries {
    pub sample_rate: f64,
    pub samples: Vec<Option<Vector3<f64>>>,
}

impl GappedSeries {
    pub fn present_mask(&self) -> Vec<bool> {
        self.samples.iter().map(Option::is_some).collect()
    }

    pub fn present_count(&self) -> usize {
        self.samples.iter().filter(|s| s.is_some()).count()
    }
}

/// Keeps only the frames whose confidence reaches `threshold`.
pub fn gate_by_confidence(
    positions: &[Vector3<f64>],
    confidence: &[f64],
    threshold: f64,
    sample_rate: f64,
) -> Result<GappedSeries, TrajectoryError> {
    if positions.len() != confidence.len() {
        return Err(TrajectoryError::LengthMismatch(positions.len(), confidence.len()));
    }
    let samples: Vec<Option<Vector3<f64>>> = positions
        .iter()
        .zip(confidence)
        .map(|(p, &c)| if c >= threshold { Some(*p) } else { None })
        .collect();
    if samples.iter().all(Option::is_none) {
        return Err(TrajectoryError::AllGated(positions.len()));
    }
    Ok(GappedSeries { sample_rate, samples })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpMethod {
    Linear,
    /// Piecewise cubic through the four nearest present samples; exact for
    /// cubic polynomials of time.
    Cubic,
}

/// Fills gaps: interior by the chosen interpolant on time, leading/trailing
/// by nearest-value extension. Present samples pass through unchanged.
pub fn interpolate_gaps(
    gapped: &GappedSeries,
    method: InterpMethod,
) -> Result<Vec<Vector3<f64>>, TrajectoryError> {
    let present: Vec<usize> = gapped
        .samples
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.as_ref().map(|_| i))
        .collect();
    if present.len() < 2 {
        return Err(TrajectoryError::TooFewSamples { need: 2, have: present.len() });
    }

    let n = gapped.samples.len();
    let mut out = Vec::with_capacity(n);
    let first = present[0];
    let last = *present.last().unwrap();
    for i in 0..n {
        if let Some(p) = gapped.samples[i] {
            out.push(p);
        } else if i < first {
            out.push(gapped.samples[first].unwrap());
        } else if i > last {
            out.push(gapped.samples[last].unwrap());
        } else {
            out.push(interp_at(&gapped.samples, &present, i, method));
        }
    }
    Ok(out)
}

/// Like [`interpolate_gaps`] but picks the interpolant per gap: cubic for
/// interior gaps no longer than `max_cubic_gap_s`, linear otherwise (long
/// gaps extrapolate badly under cubics).
pub fn interpolate_gaps_auto(
    gapped: &GappedSeries,
    max_cubic_gap_s: f64,
) -> Result<Vec<Vector3<f64>>, TrajectoryError> {
    let linear = interpolate_gaps(gapped, InterpMethod::Linear)?;
    let cubic = interpolate_gaps(gapped, InterpMethod::Cubic)?;
    let max_gap = (max_cubic_gap_s * gapped.sample_rate).round() as usize;
    let mut out = linear;
    let mut i = 0;
    while i < gapped.samples.len() {
        if gapped.samples[i].is_none() {
            let start = i;
            while i < gapped.samples.len() && gapped.samples[i].is_none() {
                i += 1;
            }
            if i - start <= max_gap {
                out[start..i].copy_from_slice(&cubic[start..i]);
            }
        } else {
            i += 1;
        }
    }
    Ok(out)
}

fn interp_at(
    samples: &[Option<Vector3<f64>>],
    present: &[usize],
    i: usize,
    method: InterpMethod,
) -> Vector3<f64> {
    // `after` is the first present index > i; present samples bracket i here.
    let after = present.partition_point(|&p| p < i);
    let support: Vec<usize> = match method {
        InterpMethod::Linear => vec![present[after - 1], present[after]],
        InterpMethod::Cubic => {
            let lo = after.saturating_sub(2);
            let hi = (after + 2).min(present.len());
            let lo = lo.min(hi.saturating_sub(4));
            present[lo..hi].to_vec()
        }
    };
    // Lagrange interpolation over the support indices (time is uniform, so
    // indices stand in for time).
    let mut value = Vector3::zeros();
    for (a, &ia) in support.iter().enumerate() {
        let mut weight = 1.0;
        for (b, &ib) in support.iter().enumerate() {
            if a != b {
                weight *= (i as f64 - ib as f64) / (ia as f64 - ib as f64);
            }
        }
        value += samples[ia].unwrap() * weight;
    }
    value
}

/// Noise settings for the constant-velocity Kalman smoother.
#[derive(Debug, Clone, Copy)]
pub struct KalmanParams {
    /// Variance of the acceleration random walk, (m/s²)².
    pub process_noise: f64,
    /// Position measurement variance, m².
    pub measurement_noise: f64,
    /// Initial state variance, m².
    pub initial_variance: f64,
}

impl Default for KalmanParams {
    /// Tuned for meter-scale human motion.
    fn default() -> Self {
        KalmanParams { process_noise: 1.0, measurement_noise: 0.01, initial_variance: 10.0 }
    }
}

impl KalmanParams {
    fn validate(&self) -> Result<(), TrajectoryError> {
        for (name, value) in [
            ("process_noise", self.process_noise),
            ("measurement_noise", self.measurement_noise),
            ("initial_variance", self.initial_variance),
        ] {
            if !(value > 0.0) {
                return Err(TrajectoryError::NonPositive { name, value });
            }
        }
        Ok(())
    }
}

/// Per-axis constant-velocity Kalman filter followed by a
/// Rauch-Tung-Striebel backward smoothing pass.
pub fn kalman_smooth(
    positions: &[Vector3<f64>],
    sample_rate: f64,
    params: &KalmanParams,
) -> Result<Vec<Vector3<f64>>, TrajectoryError> {
    params.validate()?;
    if !(sample_rate > 0.0) {
        return Err(TrajectoryError::NonPositive { name: "sample_rate", value: sample_rate });
    }
    if positions.len() < 2 {
        return Err(TrajectoryError::TooFewSamples { need: 2, have: positions.len() });
    }

    let n = positions.len();
    let mut out = vec![Vector3::zeros(); n];
    for axis in 0..3 {
        let measurements: Vec<f64> = positions.iter().map(|p| p[axis]).collect();
        let smoothed = smooth_axis(&measurements, sample_rate, params);
        for (o, s) in out.iter_mut().zip(&smoothed) {
            o[axis] = *s;
        }
    }
    Ok(out)
}

fn smooth_axis(z: &[f64], rate: f64, params: &KalmanParams) -> Vec<f64> {
    let dt = 1.0 / rate;
    let f = Matrix2::new(1.0, dt, 0.0, 1.0);
    let q = params.process_noise
        * Matrix2::new(
            dt.powi(4) / 4.0,
            dt.powi(3) / 2.0,
            dt.powi(3) / 2.0,
            dt.powi(2),
        );
    let h = RowVector2::new(1.0, 0.0);
    let r = params.measurement_noise;

    let n = z.len();
    let mut x_pred = Vec::with_capacity(n);
    let mut p_pred = Vec::with_capacity(n);
    let mut x_filt = Vec::with_capacity(n);
    let mut p_filt = Vec::with_capacity(n);

    // Seed velocity from the first difference: a clean constant-velocity
    // track then produces zero innovations and passes through untouched.
    let mut x = Vector2::new(z[0], (z[1] - z[0]) * rate);
    let mut p = Matrix2::identity() * params.initial_variance;
    for (k, &meas) in z.iter().enumerate() {
        if k > 0 {
            x = f * x;
            p = f * p * f.transpose() + q;
        }
        x_pred.push(x);
        p_pred.push(p);

        let innovation = meas - (h * x)[0];
        let s = (h * p * h.transpose())[0] + r;
        let gain = p * h.transpose() / s;
        x += gain * innovation;
        p = (Matrix2::identity() - gain * h) * p;
        x_filt.push(x);
        p_filt.push(p);
    }

    // RTS backward pass.
    let mut x_smooth = x_filt.clone();
    let mut p_smooth = p_filt.clone();
    for k in (0..n - 1).rev() {
        let c = p_filt[k]
            * f.transpose()
            * p_pred[k + 1].try_inverse().expect("predicted covariance is positive definite");
        x_smooth[k] = x_filt[k] + c * (x_smooth[k + 1] - x_pred[k + 1]);
        p_smooth[k] = p_filt[k] + c * (p_smooth[k + 1] - p_pred[k + 1]) * c.transpose();
    }
    x_smooth.iter().map(|x| x[0]).collect()
}

/// Rescales positions by `known_length / estimated_length`.
pub fn resolve_scale(
    positions: &[Vector3<f64>],
    known_length: f64,
    estimated_length: f64,
) -> Result<Vec<Vector3<f64>>, TrajectoryError> {
    if !(known_length > 0.0) {
        return Err(TrajectoryError::NonPositive { name: "known_length", value: known_length });
    }
    if !(estimated_length > 0.0) {
        return Err(TrajectoryError::NonPositive {
            name: "estimated_length",
            value: estimated_length,
        });
    }
    let factor = known_length / estimated_length;
    Ok(positions.iter().map(|p| p * factor).collect())
}
