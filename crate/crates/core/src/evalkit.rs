//! Fidelity and downstream-task metrics: pooled RMSE tables, macro-F1,
//! single-subject-holdout splits and per-axis comparison traces for
//! external plotting.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::motion::ImuSeries;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("series length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("frame tags differ: {0} vs {1}")]
    FrameMismatch(crate::motion::FrameTag, crate::motion::FrameTag),
    #[error("empty input")]
    Empty,
    #[error("cannot hold out {k} of {n} subjects")]
    TooManyFolds { k: usize, n: usize },
    #[error("bad trace file: {0}")]
    BadTrace(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Accel and gyro RMSE, each pooled over all samples and all three axes.
/// A per-axis breakdown is kept for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct RmseReport {
    pub accel: f64,
    pub gyro: f64,
    pub accel_per_axis: [f64; 3],
    pub gyro_per_axis: [f64; 3],
}

/// Root-mean-square error between a simulated and a ground-truth series.
pub fn rmse(sim: &ImuSeries, gt: &ImuSeries) -> Result<RmseReport, EvalError> {
    if sim.len() != gt.len() {
        return Err(EvalError::LengthMismatch(sim.len(), gt.len()));
    }
    if sim.frame_tag != gt.frame_tag {
        return Err(EvalError::FrameMismatch(sim.frame_tag, gt.frame_tag));
    }
    if sim.is_empty() {
        return Err(EvalError::Empty);
    }
    let pooled = |a: &[nalgebra::Vector3<f64>], b: &[nalgebra::Vector3<f64>]| {
        let mut per_axis = [0.0f64; 3];
        for (x, y) in a.iter().zip(b) {
            for c in 0..3 {
                per_axis[c] += (x[c] - y[c]).powi(2);
            }
        }
        let n = a.len() as f64;
        let total = (per_axis.iter().sum::<f64>() / (3.0 * n)).sqrt();
        for v in &mut per_axis {
            *v = (*v / n).sqrt();
        }
        (total, per_axis)
    };
    let (accel, accel_per_axis) = pooled(&sim.accel, &gt.accel);
    let (gyro, gyro_per_axis) = pooled(&sim.gyro, &gt.gyro);
    Ok(RmseReport { accel, gyro, accel_per_axis, gyro_per_axis })
}

/// Unweighted mean over classes of `2PR/(P+R)`. Classes absent from both
/// predictions and labels are excluded; a precision or recall with zero
/// denominator counts as zero.
pub fn macro_f1(predictions: &[u32], labels: &[u32]) -> Result<f64, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch(predictions.len(), labels.len()));
    }
    if labels.is_empty() {
        return Err(EvalError::Empty);
    }
    let classes: BTreeSet<u32> = predictions.iter().chain(labels.iter()).copied().collect();
    let mut sum = 0.0;
    for &class in &classes {
        let tp = predictions
            .iter()
            .zip(labels)
            .filter(|(p, l)| **p == class && **l == class)
            .count() as f64;
        let pred = predictions.iter().filter(|&&p| p == class).count() as f64;
        let actual = labels.iter().filter(|&&l| l == class).count() as f64;
        let precision = if pred > 0.0 { tp / pred } else { 0.0 };
        let recall = if actual > 0.0 { tp / actual } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        sum += f1;
    }
    Ok(sum / classes.len() as f64)
}

/// Chooses `k` distinct held-out subjects without replacement, deterministic
/// per seed. Each fold trains on everything else.
pub fn subject_holdout_splits(
    subjects: &[String],
    seed: u64,
    k: usize,
) -> Result<Vec<(Vec<String>, String)>, EvalError> {
    if k > subjects.len() {
        return Err(EvalError::TooManyFolds { k, n: subjects.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = subjects.to_vec();
    pool.shuffle(&mut rng);
    Ok(pool[..k]
        .iter()
        .map(|held| {
            let train = subjects.iter().filter(|s| *s != held).cloned().collect();
            (train, held.clone())
        })
        .collect())
}

const TRACE_HEADER: &str =
    "t,a_ax,a_ay,a_az,a_gx,a_gy,a_gz,b_ax,b_ay,b_az,b_gx,b_gy,b_gz,r_ax,r_ay,r_az,r_gx,r_gy,r_gz";

/// Writes aligned per-axis columns of two series plus residuals, with RMSE
/// annotation rows, for external plotting. Re-readable by [`read_traces`].
pub fn compare_traces(
    a: &ImuSeries,
    b: &ImuSeries,
    path: impl AsRef<Path>,
) -> Result<RmseReport, EvalError> {
    let report = rmse(a, b)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# rmse_accel={:.16e} rmse_gyro={:.16e}", report.accel, report.gyro)?;
    writeln!(
        out,
        "# rmse_accel_axes={:.16e},{:.16e},{:.16e} rmse_gyro_axes={:.16e},{:.16e},{:.16e}",
        report.accel_per_axis[0],
        report.accel_per_axis[1],
        report.accel_per_axis[2],
        report.gyro_per_axis[0],
        report.gyro_per_axis[1],
        report.gyro_per_axis[2]
    )?;
    writeln!(out, "{TRACE_HEADER}")?;
    let dt = 1.0 / a.sample_rate;
    for i in 0..a.len() {
        let mut cells = vec![format!("{:.16e}", i as f64 * dt)];
        for v in [&a.accel[i], &a.gyro[i], &b.accel[i], &b.gyro[i]] {
            for c in 0..3 {
                cells.push(format!("{:.16e}", v[c]));
            }
        }
        for (x, y) in [(&a.accel[i], &b.accel[i]), (&a.gyro[i], &b.gyro[i])] {
            for c in 0..3 {
                cells.push(format!("{:.16e}", x[c] - y[c]));
            }
        }
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(report)
}

/// Columns of a trace file: per-sample rows of the two series and residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceData {
    pub rmse_accel: f64,
    pub rmse_gyro: f64,
    /// Rows of `[t, a(6), b(6), residual(6)]`.
    pub rows: Vec<Vec<f64>>,
}

/// Reads a file written by [`compare_traces`].
pub fn read_traces(path: impl AsRef<Path>) -> Result<TraceData, EvalError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut rmse_accel = None;
    let mut rmse_gyro = None;
    let mut seen_header = false;
    let mut rows = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            for token in comment.split_whitespace() {
                if let Some(v) = token.strip_prefix("rmse_accel=") {
                    rmse_accel = v.parse().ok();
                } else if let Some(v) = token.strip_prefix("rmse_gyro=") {
                    rmse_gyro = v.parse().ok();
                }
            }
            continue;
        }
        if !seen_header {
            if line != TRACE_HEADER {
                return Err(EvalError::BadTrace(format!("unexpected header `{line}`")));
            }
            seen_header = true;
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| EvalError::BadTrace(e.to_string()))?;
        if row.len() != 19 {
            return Err(EvalError::BadTrace(format!("row of {} cells, expected 19", row.len())));
        }
        rows.push(row);
    }
    Ok(TraceData {
        rmse_accel: rmse_accel.ok_or_else(|| EvalError::BadTrace("missing rmse_accel".into()))?,
        rmse_gyro: rmse_gyro.ok_or_else(|| EvalError::BadTrace("missing rmse_gyro".into()))?,
        rows,
    })
}

/// One row of a Table-I-style results CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: String,
    pub modality: String,
    pub accel_rmse: f64,
    pub gyro_rmse: f64,
}

/// Writes the results table: `method,modality,accel_rmse,gyro_rmse`, rows
/// sorted by method then modality.
pub fn write_results_table(
    rows: &[ResultRow],
    path: impl AsRef<Path>,
) -> Result<(), EvalError> {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| (&a.method, &a.modality).cmp(&(&b.method, &b.modality)));
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "method,modality,accel_rmse,gyro_rmse")?;
    for r in &sorted {
        writeln!(out, "{},{},{:.6},{:.6}", r.method, r.modality, r.accel_rmse, r.gyro_rmse)?;
    }
    Ok(())
}

/// Writes an F1 report CSV with one row per fold plus a `mean,std` summary
/// row, mirroring a per-subject holdout table.
pub fn write_f1_report(
    folds: &[(String, f64)],
    path: impl AsRef<Path>,
) -> Result<(), EvalError> {
    if folds.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "fold,held_out,f1")?;
    for (i, (subject, f1)) in folds.iter().enumerate() {
        writeln!(out, "{},{},{:.6}", i, subject, f1)?;
    }
    let n = folds.len() as f64;
    let mean = folds.iter().map(|(_, f)| f).sum::<f64>() / n;
    let std = (folds.iter().map(|(_, f)| (f - mean).powi(2)).sum::<f64>() / n).sqrt();
    writeln!(out, "mean,,{mean:.6}")?;
    writeln!(out, "std,,{std:.6}")?;
    Ok(())
}
