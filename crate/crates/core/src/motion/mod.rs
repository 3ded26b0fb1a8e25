//! Parsing and serialization of every external data representation:
//! BVH motion capture, mesh-vertex track files, sensor specs and IMU series.
//!
//! All values are SI: meters, seconds, m/s², rad/s. Quaternions are stored
//! `(w, x, y, z)`. On load, a quaternion within 1e-3 of unit norm is
//! renormalized; anything further off is rejected.

mod bvh;
mod tracks;

pub use bvh::{forward_kinematics, parse_bvh, serialize_bvh, Channel, Joint, JointPose, SkeletonAnimation};
pub use tracks::{load_track_set, store_track_set, MotionTrackSet, RegionTrack};

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by parsers and serializers in this module.
#[derive(Debug, Error)]
pub enum MotionError {
    /// Syntactic problem at a known line of a text input.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    /// Structural problem with a file: bad version, missing columns, truncation.
    #[error("format error: {0}")]
    Format(String),
    /// A domain invariant does not hold for otherwise well-formed data.
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl MotionError {
    pub(crate) fn parse(line: usize, msg: impl fmt::Display) -> Self {
        MotionError::Parse { line, msg: msg.to_string() }
    }
}

/// Which coordinate frame an [`ImuSeries`] is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameTag {
    /// Global (inertial) frame; accelerations exclude gravity.
    Global,
    /// Sensor frame; accelerations include gravity as a real sensor reports.
    Sensor,
}

impl fmt::Display for FrameTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameTag::Global => write!(f, "global"),
            FrameTag::Sensor => write!(f, "sensor"),
        }
    }
}

/// 3-axis acceleration (m/s²) and angular velocity (rad/s) sequences in a
/// declared frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ImuSeries {
    pub frame_tag: FrameTag,
    pub sample_rate: f64,
    pub accel: Vec<Vector3<f64>>,
    pub gyro: Vec<Vector3<f64>>,
}

impl ImuSeries {
    pub fn new(
        frame_tag: FrameTag,
        sample_rate: f64,
        accel: Vec<Vector3<f64>>,
        gyro: Vec<Vector3<f64>>,
    ) -> Result<Self, MotionError> {
        if accel.len() != gyro.len() {
            return Err(MotionError::Invariant(format!(
                "accel and gyro lengths differ: {} vs {}",
                accel.len(),
                gyro.len()
            )));
        }
        for (i, v) in accel.iter().chain(gyro.iter()).enumerate() {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(MotionError::Invariant(format!("non-finite sample at index {i}")));
            }
        }
        Ok(ImuSeries { frame_tag, sample_rate, accel, gyro })
    }

    pub fn len(&self) -> usize {
        self.accel.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accel.is_empty()
    }
}

/// Binding of a virtual sensor to a skin region: the sensor-to-bone alignment
/// rotation, the gravity vector in the global frame and the output rate.
#[derive(Debug, Clone)]
pub struct SensorSpec {
    pub region: String,
    /// Rotation from sensor frame to bone frame (`R_S^B`).
    pub r_sensor_to_bone: UnitQuaternion<f64>,
    /// Gravity in the global frame, m/s². Direction is explicit because the
    /// upstream capture convention (up-axis, handedness) varies by dataset.
    pub gravity: Vector3<f64>,
    pub sample_rate: f64,
}

#[derive(Serialize, Deserialize)]
struct SensorSpecFile {
    version: u32,
    region: String,
    rotation: RotationField,
    gravity: [f64; 3],
    sample_rate: f64,
}

#[derive(Serialize, Deserialize)]
struct RotationField {
    #[serde(skip_serializing_if = "Option::is_none")]
    quat: Option<[f64; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    matrix: Option<[[f64; 3]; 3]>,
}

/// Renormalizes a `(w, x, y, z)` quaternion, rejecting anything more than
/// 1e-3 away from unit norm. `what` names the offending value in the error.
pub(crate) fn unit_quat_checked(
    w: f64,
    x: f64,
    y: f64,
    z: f64,
    what: &str,
) -> Result<UnitQuaternion<f64>, MotionError> {
    let q = Quaternion::new(w, x, y, z);
    let norm = q.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > 1e-3 {
        return Err(MotionError::Invariant(format!(
            "{what}: quaternion norm {norm} outside unit tolerance 1e-3"
        )));
    }
    Ok(UnitQuaternion::from_quaternion(q))
}

impl SensorSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, MotionError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, MotionError> {
        let file: SensorSpecFile =
            serde_json::from_str(text).map_err(|e| MotionError::Format(e.to_string()))?;
        if file.version != 1 {
            return Err(MotionError::Format(format!(
                "unsupported sensor spec version {}, expected 1",
                file.version
            )));
        }
        let rot = match (&file.rotation.quat, &file.rotation.matrix) {
            (Some([w, x, y, z]), None) => unit_quat_checked(*w, *x, *y, *z, "rotation.quat")?,
            (None, Some(rows)) => {
                let m = Matrix3::from_fn(|r, c| rows[r][c]);
                let err = (m.transpose() * m - Matrix3::identity()).abs().max();
                if err > 1e-9 || (m.determinant() - 1.0).abs() > 1e-9 {
                    return Err(MotionError::Invariant(format!(
                        "rotation.matrix not orthonormal with determinant +1 (error {err:.3e})"
                    )));
                }
                UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m))
            }
            _ => {
                return Err(MotionError::Format(
                    "rotation must contain exactly one of `quat` or `matrix`".into(),
                ))
            }
        };
        if !(file.sample_rate > 0.0) {
            return Err(MotionError::Invariant(format!(
                "sample_rate must be positive, got {}",
                file.sample_rate
            )));
        }
        Ok(SensorSpec {
            region: file.region,
            r_sensor_to_bone: rot,
            gravity: Vector3::new(file.gravity[0], file.gravity[1], file.gravity[2]),
            sample_rate: file.sample_rate,
        })
    }

    pub fn to_json(&self) -> String {
        let q = self.r_sensor_to_bone.quaternion();
        let file = SensorSpecFile {
            version: 1,
            region: self.region.clone(),
            rotation: RotationField { quat: Some([q.w, q.i, q.j, q.k]), matrix: None },
            gravity: [self.gravity.x, self.gravity.y, self.gravity.z],
            sample_rate: self.sample_rate,
        };
        serde_json::to_string_pretty(&file).expect("sensor spec serialization cannot fail")
    }

    pub fn store(&self, path: impl AsRef<Path>) -> Result<(), MotionError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

const IMU_HEADER: &str = "t,ax,ay,az,gx,gy,gz";

/// Writes an [`ImuSeries`] as CSV: a `# frame=<tag> rate=<Hz>` comment line,
/// the `t,ax,ay,az,gx,gy,gz` header, then one row per sample. Floats carry
/// 17 significant digits so a read-back is bit-faithful.
pub fn write_imu_csv(series: &ImuSeries, path: impl AsRef<Path>) -> Result<(), MotionError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# frame={} rate={}", series.frame_tag, series.sample_rate)?;
    writeln!(out, "{IMU_HEADER}")?;
    let dt = 1.0 / series.sample_rate;
    for (i, (a, g)) in series.accel.iter().zip(&series.gyro).enumerate() {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            i as f64 * dt,
            a.x,
            a.y,
            a.z,
            g.x,
            g.y,
            g.z
        )?;
    }
    Ok(())
}

/// Reads an [`ImuSeries`] written by [`write_imu_csv`].
pub fn read_imu_csv(path: impl AsRef<Path>) -> Result<ImuSeries, MotionError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines().enumerate();

    let (_, first) = lines
        .next()
        .ok_or_else(|| MotionError::Format("empty IMU CSV".into()))?;
    let first = first?;
    let meta = first
        .strip_prefix('#')
        .ok_or_else(|| MotionError::Format("missing `# frame=... rate=...` comment line".into()))?;
    let mut frame_tag = None;
    let mut rate = None;
    for token in meta.split_whitespace() {
        if let Some(v) = token.strip_prefix("frame=") {
            frame_tag = Some(match v {
                "global" => FrameTag::Global,
                "sensor" => FrameTag::Sensor,
                other => {
                    return Err(MotionError::Format(format!("unknown frame tag `{other}`")))
                }
            });
        } else if let Some(v) = token.strip_prefix("rate=") {
            rate = Some(v.parse::<f64>().map_err(|_| {
                MotionError::Format(format!("bad rate value `{v}` in comment line"))
            })?);
        }
    }
    let frame_tag =
        frame_tag.ok_or_else(|| MotionError::Format("comment line missing frame=".into()))?;
    let rate = rate.ok_or_else(|| MotionError::Format("comment line missing rate=".into()))?;

    let (_, header) = lines
        .next()
        .ok_or_else(|| MotionError::Format("missing header row".into()))?;
    let header = header?;
    if header.trim() != IMU_HEADER {
        return Err(MotionError::Format(format!(
            "bad header `{}`, expected `{IMU_HEADER}`",
            header.trim()
        )));
    }

    let mut accel = Vec::new();
    let mut gyro = Vec::new();
    for (lineno, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(MotionError::parse(
                lineno + 1,
                format!("expected 7 columns, found {}", fields.len()),
            ));
        }
        let mut vals = [0.0f64; 7];
        for (i, f) in fields.iter().enumerate() {
            vals[i] = f.trim().parse::<f64>().map_err(|_| {
                MotionError::parse(lineno + 1, format!("non-numeric cell `{}`", f.trim()))
            })?;
            if !vals[i].is_finite() {
                return Err(MotionError::parse(lineno + 1, "non-finite cell"));
            }
        }
        accel.push(Vector3::new(vals[1], vals[2], vals[3]));
        gyro.push(Vector3::new(vals[4], vals[5], vals[6]));
    }
    ImuSeries::new(frame_tag, rate, accel, gyro)
}
