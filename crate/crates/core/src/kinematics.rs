//! The analytic simulation path: finite-difference second derivatives for
//! acceleration, triangle-triad tracking for angular velocity, and the
//! global ↔ sensor frame transforms
//!
//!   a_S = (R_S^B)⁻¹ (R_B^G)⁻¹ (a_G + g),
//!   ω_S = (R_S^B)⁻¹ (R_B^G)⁻¹ ω_G.
//!
//! The triad tracks the full triangle orientation, not the normal alone: the
//! normal cannot observe spin about itself, and a 3-DoF angular velocity
//! needs all three axes.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::motion::{FrameTag, ImuSeries, MotionTrackSet, SensorSpec};

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("need at least {need} samples, have {have}")]
    TooFewSamples { need: usize, have: usize },
    #[error("degenerate triangle (area {area:.3e} m² <= 1e-12)")]
    DegenerateTriangle { area: f64 },
    #[error("rotation of {angle:.4} rad >= pi between frames {frame} and {next}; sample rate too low for this motion")]
    Aliased { frame: usize, next: usize, angle: f64 },
    #[error("series length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Motion(#[from] crate::motion::MotionError),
}

/// A differentiated series plus a per-sample flag marking boundary samples
/// that used a lower-order fallback stencil. Downstream windowing may drop
/// flagged samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedSeries {
    pub values: Vec<Vector3<f64>>,
    pub boundary: Vec<bool>,
}

impl DerivedSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Samples computed at the stencil's full interior accuracy.
    pub fn interior(&self) -> impl Iterator<Item = &Vector3<f64>> {
        self.values
            .iter()
            .zip(&self.boundary)
            .filter_map(|(v, &b)| (!b).then_some(v))
    }
}

/// Second derivative by the 3-point central stencil, O(h²). Endpoints use
/// one-sided second-order stencils and are flagged as boundary samples.
pub fn central_second_derivative(
    positions: &[Vector3<f64>],
    sample_rate: f64,
) -> Result<DerivedSeries, KinematicsError> {
    let n = positions.len();
    if n < 3 {
        return Err(KinematicsError::TooFewSamples { need: 3, have: n });
    }
    let r2 = sample_rate * sample_rate;
    let mut values = Vec::with_capacity(n);
    let mut boundary = vec![false; n];
    for i in 0..n {
        let v = if i == 0 {
            boundary[0] = true;
            one_sided_second(positions, 0, false, r2)
        } else if i == n - 1 {
            boundary[n - 1] = true;
            one_sided_second(positions, n - 1, true, r2)
        } else {
            (positions[i - 1] - positions[i] * 2.0 + positions[i + 1]) * r2
        };
        values.push(v);
    }
    Ok(DerivedSeries { values, boundary })
}

/// One-sided second-order second-derivative stencil. Falls back to the
/// adjacent central value when only 3 samples exist.
fn one_sided_second(p: &[Vector3<f64>], i: usize, backward: bool, r2: f64) -> Vector3<f64> {
    let n = p.len();
    if n < 4 {
        return (p[0] - p[1] * 2.0 + p[2]) * r2;
    }
    if backward {
        (p[i] * 2.0 - p[i - 1] * 5.0 + p[i - 2] * 4.0 - p[i - 3]) * r2
    } else {
        (p[i] * 2.0 - p[i + 1] * 5.0 + p[i + 2] * 4.0 - p[i + 3]) * r2
    }
}

/// Second derivative by the 5-point stencil
/// `(-x[i-2] + 16 x[i-1] - 30 x[i] + 16 x[i+1] - x[i+2]) · rate² / 12`,
/// O(h⁴) at interior samples. The two samples at each end fall back to the
/// central/one-sided stencils and are flagged.
pub fn richardson_second_derivative(
    positions: &[Vector3<f64>],
    sample_rate: f64,
) -> Result<DerivedSeries, KinematicsError> {
    let n = positions.len();
    if n < 5 {
        return Err(KinematicsError::TooFewSamples { need: 5, have: n });
    }
    let fallback = central_second_derivative(positions, sample_rate)?;
    let r2 = sample_rate * sample_rate;
    let mut values = Vec::with_capacity(n);
    let mut boundary = vec![false; n];
    for i in 0..n {
        if i < 2 || i >= n - 2 {
            boundary[i] = true;
            values.push(fallback.values[i]);
        } else {
            values.push(
                (-positions[i - 2] + positions[i - 1] * 16.0 - positions[i] * 30.0
                    + positions[i + 1] * 16.0
                    - positions[i + 2])
                    * (r2 / 12.0),
            );
        }
    }
    Ok(DerivedSeries { values, boundary })
}

/// Orthonormal frame attached to a triangle: `e1` along the first edge,
/// `e3` the outward normal for counter-clockwise winding, `e2 = e3 × e1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleTriad {
    /// Centroid, meters.
    pub origin: Vector3<f64>,
    /// Columns are `e1, e2, e3`; a proper rotation matrix.
    pub axes: Matrix3<f64>,
}

/// Builds the triad of a triangle with counter-clockwise winding.
pub fn triangle_triad(
    v0: Vector3<f64>,
    v1: Vector3<f64>,
    v2: Vector3<f64>,
) -> Result<TriangleTriad, KinematicsError> {
    let edge = v1 - v0;
    let normal = edge.cross(&(v2 - v0));
    let area = 0.5 * normal.norm();
    if area <= 1e-12 {
        return Err(KinematicsError::DegenerateTriangle { area });
    }
    let e1 = edge.normalize();
    let e3 = normal.normalize();
    let e2 = e3.cross(&e1);
    Ok(TriangleTriad {
        origin: (v0 + v1 + v2) / 3.0,
        axes: Matrix3::from_columns(&[e1, e2, e3]),
    })
}

/// Angular velocity from consecutive triads: the rotation-matrix logarithm
/// of `R[i+1] · R[i]ᵀ` divided by the frame interval, assigned to sample
/// `i`; the last sample copies its predecessor.
pub fn angular_velocity(
    triads: &[TriangleTriad],
    sample_rate: f64,
) -> Result<Vec<Vector3<f64>>, KinematicsError> {
    let n = triads.len();
    if n < 2 {
        return Err(KinematicsError::TooFewSamples { need: 2, have: n });
    }
    let mut omega = Vec::with_capacity(n);
    for i in 0..n - 1 {
        let delta = triads[i + 1].axes * triads[i].axes.transpose();
        let rot = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(delta));
        let angle = rot.angle();
        if angle >= std::f64::consts::PI * (1.0 - 1e-9) {
            return Err(KinematicsError::Aliased { frame: i, next: i + 1, angle });
        }
        omega.push(rot.scaled_axis() * sample_rate);
    }
    omega.push(*omega.last().unwrap());
    Ok(omega)
}

/// Analytic global-frame motion of a skin region: acceleration as the
/// 4th-order second derivative of the mean triangle centroid, angular
/// velocity averaged over the three triangle triads.
pub fn region_motion(
    set: &MotionTrackSet,
    region: &str,
) -> Result<(DerivedSeries, Vec<Vector3<f64>>), KinematicsError> {
    let track = set.region(region)?;
    let frames = set.frame_count();

    let mut centroids = Vec::with_capacity(frames);
    let mut triads: [Vec<TriangleTriad>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for frame in 0..frames {
        let mut mean = Vector3::zeros();
        for tri in 0..3 {
            let [v0, v1, v2] = track.triangle_vertices(tri, frame);
            let triad = triangle_triad(v0, v1, v2)?;
            mean += triad.origin;
            triads[tri].push(triad);
        }
        centroids.push(mean / 3.0);
    }

    let accel = richardson_second_derivative(&centroids, set.sample_rate)?;
    let per_tri: Vec<Vec<Vector3<f64>>> = triads
        .iter()
        .map(|t| angular_velocity(t, set.sample_rate))
        .collect::<Result<_, _>>()?;
    let omega = (0..frames)
        .map(|i| (per_tri[0][i] + per_tri[1][i] + per_tri[2][i]) / 3.0)
        .collect();
    Ok((accel, omega))
}

/// Sign convention for gravity in the accelerometer model: a real sensor at
/// rest reads `+g` rotated into its own frame, but some datasets negate it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GravitySign {
    #[default]
    Positive,
    Negative,
}

impl GravitySign {
    fn factor(self) -> f64 {
        match self {
            GravitySign::Positive => 1.0,
            GravitySign::Negative => -1.0,
        }
    }
}

/// Transforms global-frame acceleration and angular velocity into the sensor
/// frame. Gravity is added in the global frame before any rotation.
pub fn to_sensor_frame(
    a_global: &[Vector3<f64>],
    w_global: &[Vector3<f64>],
    r_bone_to_global: &[UnitQuaternion<f64>],
    spec: &SensorSpec,
    gravity_sign: GravitySign,
) -> Result<ImuSeries, KinematicsError> {
    if a_global.len() != w_global.len() {
        return Err(KinematicsError::LengthMismatch(a_global.len(), w_global.len()));
    }
    if a_global.len() != r_bone_to_global.len() {
        return Err(KinematicsError::LengthMismatch(a_global.len(), r_bone_to_global.len()));
    }
    let g = spec.gravity * gravity_sign.factor();
    let r_bone_to_sensor = spec.r_sensor_to_bone.inverse();
    let mut accel = Vec::with_capacity(a_global.len());
    let mut gyro = Vec::with_capacity(w_global.len());
    for ((a, w), r_bg) in a_global.iter().zip(w_global).zip(r_bone_to_global) {
        let r_global_to_sensor = r_bone_to_sensor * r_bg.inverse();
        accel.push(r_global_to_sensor * (a + g));
        gyro.push(r_global_to_sensor * w);
    }
    Ok(ImuSeries::new(FrameTag::Sensor, spec.sample_rate, accel, gyro)?)
}

/// Algebraic inverse of [`to_sensor_frame`]:
/// `a_G = R_B^G R_S^B a_S − g`, `ω_G = R_B^G R_S^B ω_S`.
pub fn from_sensor_frame(
    imu: &ImuSeries,
    r_bone_to_global: &[UnitQuaternion<f64>],
    spec: &SensorSpec,
    gravity_sign: GravitySign,
) -> Result<(Vec<Vector3<f64>>, Vec<Vector3<f64>>), KinematicsError> {
    if imu.len() != r_bone_to_global.len() {
        return Err(KinematicsError::LengthMismatch(imu.len(), r_bone_to_global.len()));
    }
    let g = spec.gravity * gravity_sign.factor();
    let mut accel = Vec::with_capacity(imu.len());
    let mut gyro = Vec::with_capacity(imu.len());
    for ((a, w), r_bg) in imu.accel.iter().zip(&imu.gyro).zip(r_bone_to_global) {
        let r_sensor_to_global = r_bg * spec.r_sensor_to_bone;
        accel.push(r_sensor_to_global * a - g);
        gyro.push(r_sensor_to_global * w);
    }
    Ok((accel, gyro))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(f: impl Fn(f64) -> f64, rate: f64, t_max: f64) -> Vec<Vector3<f64>> {
        let n = (t_max * rate) as usize + 1;
        (0..n).map(|i| Vector3::new(f(i as f64 / rate), 0.0, 0.0)).collect()
    }

    #[test]
    fn central_exact_on_quadratic() {
        let positions = sample(|t| 3.0 * t * t, 100.0, 1.0);
        let d2 = central_second_derivative(&positions, 100.0).unwrap();
        for v in &d2.values {
            assert_abs_diff_eq!(v.x, 6.0, epsilon = 1e-7);
        }
    }

    #[test]
    fn central_zero_on_constant() {
        let positions = vec![Vector3::new(1.0, 2.0, 3.0); 10];
        let d2 = central_second_derivative(&positions, 50.0).unwrap();
        for v in &d2.values {
            assert_abs_diff_eq!(*v, Vector3::zeros(), epsilon = 1e-9);
        }
    }

    #[test]
    fn central_needs_three() {
        let positions = vec![Vector3::zeros(); 2];
        assert!(matches!(
            central_second_derivative(&positions, 50.0),
            Err(KinematicsError::TooFewSamples { need: 3, have: 2 })
        ));
    }

    /// Error at t=1 against the analytic -sin(1), at a given rate.
    fn sin_error(rate: f64, richardson: bool) -> f64 {
        let positions = sample(|t| t.sin(), rate, 2.0);
        let d2 = if richardson {
            richardson_second_derivative(&positions, rate).unwrap()
        } else {
            central_second_derivative(&positions, rate).unwrap()
        };
        let i = rate as usize; // index of t = 1
        (d2.values[i].x - (-(1.0f64).sin())).abs()
    }

    #[test]
    fn central_is_second_order() {
        let ratio = sin_error(100.0, false) / sin_error(200.0, false);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn richardson_is_fourth_order() {
        // Rates kept moderate: at 200 Hz the O(h⁴) truncation error on sin t
        // drops below the f64 rounding floor of the stencil (~1e-11) and the
        // measured ratio becomes noise.
        let ratio = sin_error(50.0, true) / sin_error(100.0, true);
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn richardson_exact_on_quartic() {
        let positions = sample(|t| t.powi(4), 100.0, 1.0);
        let d2 = richardson_second_derivative(&positions, 100.0).unwrap();
        for (i, (v, b)) in d2.values.iter().zip(&d2.boundary).enumerate() {
            if !b {
                let t = i as f64 / 100.0;
                assert_abs_diff_eq!(v.x, 12.0 * t * t, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn richardson_zero_on_constant() {
        let positions = vec![Vector3::new(-1.0, 0.5, 2.0); 8];
        let d2 = richardson_second_derivative(&positions, 10.0).unwrap();
        for v in &d2.values {
            assert_abs_diff_eq!(*v, Vector3::zeros(), epsilon = 1e-9);
        }
    }

    #[test]
    fn stencils_agree_on_quadratics() {
        let positions = sample(|t| 2.0 * t * t - 3.0 * t + 1.0, 50.0, 1.0);
        let c = central_second_derivative(&positions, 50.0).unwrap();
        let r = richardson_second_derivative(&positions, 50.0).unwrap();
        for (i, (a, b)) in c.values.iter().zip(&r.values).enumerate() {
            if !r.boundary[i] {
                assert_abs_diff_eq!(a.x, b.x, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn triad_of_unit_triangle() {
        let triad = triangle_triad(
            Vector3::zeros(),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        )
        .unwrap();
        assert_abs_diff_eq!(triad.axes.column(2).into_owned(), Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-12);
        assert_abs_diff_eq!(triad.origin, Vector3::new(1.0 / 3.0, 1.0 / 3.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn swapping_vertices_flips_normal() {
        let v1 = Vector3::new(1.0, 0.0, 0.0);
        let v2 = Vector3::new(0.0, 1.0, 0.0);
        let a = triangle_triad(Vector3::zeros(), v1, v2).unwrap();
        let b = triangle_triad(Vector3::zeros(), v2, v1).unwrap();
        assert_abs_diff_eq!(
            a.axes.column(2).into_owned(),
            -b.axes.column(2).into_owned(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn random_triads_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let v0 = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let v1 = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let v2 = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let Ok(triad) = triangle_triad(v0, v1, v2) else { continue };
            let err = (triad.axes.transpose() * triad.axes - Matrix3::identity()).abs().max();
            assert!(err <= 1e-12, "orthonormality error {err}");
            assert!((triad.axes.determinant() - 1.0).abs() <= 1e-12);
        }
    }

    fn rng_gen(rng: &mut ChaCha8Rng) -> f64 {
        rng.gen_range(-1.0..1.0)
    }

    #[test]
    fn degenerate_triangle_rejected() {
        let err = triangle_triad(
            Vector3::zeros(),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(2.0, 0.0, 0.0),
        )
        .unwrap_err();
        assert!(matches!(err, KinematicsError::DegenerateTriangle { .. }));
    }

    fn rotating_triads(axis: Vector3<f64>, speed: f64, rate: f64, n: usize) -> Vec<TriangleTriad> {
        let base = [
            Vector3::new(0.1, 0.0, 0.0),
            Vector3::new(0.0, 0.2, 0.0),
            Vector3::new(0.0, 0.0, 0.3),
        ];
        (0..n)
            .map(|i| {
                let rot = UnitQuaternion::from_scaled_axis(axis * (speed * i as f64 / rate));
                triangle_triad(rot * base[0], rot * base[1], rot * base[2]).unwrap()
            })
            .collect()
    }

    #[test]
    fn static_triangle_zero_omega() {
        let triads = rotating_triads(Vector3::z(), 0.0, 100.0, 10);
        for w in angular_velocity(&triads, 100.0).unwrap() {
            assert_abs_diff_eq!(w, Vector3::zeros(), epsilon = 1e-12);
        }
    }

    #[test]
    fn rotation_about_z_recovered() {
        let triads = rotating_triads(Vector3::z(), 0.5, 100.0, 50);
        for w in angular_velocity(&triads, 100.0).unwrap() {
            assert_abs_diff_eq!(w, Vector3::new(0.0, 0.0, 0.5), epsilon = 1e-6);
        }
    }

    #[test]
    fn rotation_about_diagonal_axis_recovered() {
        let axis = Vector3::new(1.0, 1.0, 1.0).normalize();
        let triads = rotating_triads(axis, 2.0, 100.0, 50);
        for w in angular_velocity(&triads, 100.0).unwrap() {
            assert_abs_diff_eq!(w, axis * 2.0, epsilon = 1e-5);
        }
    }

    #[test]
    fn aliasing_reported_with_frame() {
        // A half-turn per frame is the largest observable step; anything
        // faster wraps back below π and is indistinguishable from a slower
        // rotation the other way.
        let triads = rotating_triads(Vector3::z(), std::f64::consts::PI, 1.0, 5);
        let err = angular_velocity(&triads, 1.0).unwrap_err();
        assert!(matches!(err, KinematicsError::Aliased { frame: 0, .. }), "{err}");
    }

    #[test]
    fn angular_velocity_left_invariant() {
        let axis = Vector3::new(0.3, -0.8, 0.5).normalize();
        let triads = rotating_triads(axis, 1.3, 100.0, 30);
        let q = UnitQuaternion::from_euler_angles(0.4, -1.1, 2.0);
        let rotated: Vec<TriangleTriad> = triads
            .iter()
            .map(|t| TriangleTriad { origin: q * t.origin, axes: q.to_rotation_matrix().matrix() * t.axes })
            .collect();
        let w = angular_velocity(&triads, 100.0).unwrap();
        let w_rot = angular_velocity(&rotated, 100.0).unwrap();
        for (a, b) in w.iter().zip(&w_rot) {
            assert_abs_diff_eq!(q * a, *b, epsilon = 1e-9);
        }
    }

    fn identity_spec(rate: f64) -> SensorSpec {
        SensorSpec {
            region: "r".into(),
            r_sensor_to_bone: UnitQuaternion::identity(),
            gravity: Vector3::new(0.0, 0.0, 9.80665),
            sample_rate: rate,
        }
    }

    #[test]
    fn stationary_sensor_reads_gravity() {
        let n = 5;
        let spec = identity_spec(100.0);
        let imu = to_sensor_frame(
            &vec![Vector3::zeros(); n],
            &vec![Vector3::zeros(); n],
            &vec![UnitQuaternion::identity(); n],
            &spec,
            GravitySign::Positive,
        )
        .unwrap();
        for (a, w) in imu.accel.iter().zip(&imu.gyro) {
            assert_abs_diff_eq!(*a, Vector3::new(0.0, 0.0, 9.80665), epsilon = 1e-12);
            assert_abs_diff_eq!(*w, Vector3::zeros(), epsilon = 1e-12);
        }
        let (a_g, _) =
            from_sensor_frame(&imu, &vec![UnitQuaternion::identity(); n], &spec, GravitySign::Positive)
                .unwrap();
        for a in &a_g {
            assert_abs_diff_eq!(*a, Vector3::zeros(), epsilon = 1e-12);
        }
    }

    #[test]
    fn omega_rotated_by_bone_orientation() {
        // R_B^G = 90° about Z, identity R_S^B: ω_S = Rz(-90°)·(1,0,0) = (0,-1,0).
        let spec = identity_spec(100.0);
        let r_bg = vec![UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2)];
        let imu = to_sensor_frame(
            &[Vector3::zeros()],
            &[Vector3::new(1.0, 0.0, 0.0)],
            &r_bg,
            &spec,
            GravitySign::Positive,
        )
        .unwrap();
        assert_abs_diff_eq!(imu.gyro[0], Vector3::new(0.0, -1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn sensor_frame_round_trip_and_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100;
        let a_g: Vec<Vector3<f64>> = (0..n).map(|_| Vector3::from_fn(|_, _| rng_gen(&mut rng) * 5.0)).collect();
        let w_g: Vec<Vector3<f64>> = (0..n).map(|_| Vector3::from_fn(|_, _| rng_gen(&mut rng) * 3.0)).collect();
        let r_bg: Vec<UnitQuaternion<f64>> = (0..n)
            .map(|_| {
                UnitQuaternion::from_euler_angles(
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-1.5..1.5),
                    rng.gen_range(-3.0..3.0),
                )
            })
            .collect();
        let spec = SensorSpec {
            r_sensor_to_bone: UnitQuaternion::from_euler_angles(0.2, 0.7, -0.4),
            ..identity_spec(100.0)
        };
        let imu = to_sensor_frame(&a_g, &w_g, &r_bg, &spec, GravitySign::Positive).unwrap();
        // Rotations preserve angular velocity norms.
        for (ws, wg) in imu.gyro.iter().zip(&w_g) {
            assert_abs_diff_eq!(ws.norm(), wg.norm(), epsilon = 1e-12);
        }
        let (a_back, w_back) = from_sensor_frame(&imu, &r_bg, &spec, GravitySign::Positive).unwrap();
        for ((a, b), (c, d)) in a_g.iter().zip(&a_back).zip(w_g.iter().zip(&w_back)) {
            assert!((a - b).abs().max() <= 1e-12);
            assert!((c - d).abs().max() <= 1e-12);
        }
    }

    #[test]
    fn region_motion_static_is_zero() {
        let set = crate::motion::test_fixtures::rigid_set(|_t| {
            (Vector3::zeros(), UnitQuaternion::identity())
        });
        let (a, w) = region_motion(&set, "region").unwrap();
        for v in &a.values {
            assert_abs_diff_eq!(*v, Vector3::zeros(), epsilon = 1e-9);
        }
        for v in &w {
            assert_abs_diff_eq!(*v, Vector3::zeros(), epsilon = 1e-9);
        }
    }

    #[test]
    fn region_motion_rigid_translation() {
        // x(t) = a t² / 2 with a = (1, 0, 0).
        let set = crate::motion::test_fixtures::rigid_set(|t| {
            (Vector3::new(0.5 * t * t, 0.0, 0.0), UnitQuaternion::identity())
        });
        let (a, w) = region_motion(&set, "region").unwrap();
        for v in a.interior() {
            assert_abs_diff_eq!(*v, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-6);
        }
        for v in &w {
            assert_abs_diff_eq!(*v, Vector3::zeros(), epsilon = 1e-8);
        }
    }

    #[test]
    fn region_motion_circular_orbit() {
        // Rigid orbit of radius 1 m at 1 Hz: centripetal |a| = 4π², ω = (0,0,2π).
        use std::f64::consts::TAU;
        let set = crate::motion::test_fixtures::rigid_set(|t| {
            let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), TAU * t);
            (rot * Vector3::new(1.0, 0.0, 0.0), rot)
        });
        let (a, w) = region_motion(&set, "region").unwrap();
        let target = 4.0 * std::f64::consts::PI * std::f64::consts::PI;
        for v in a.interior() {
            assert!((v.norm() - target).abs() / target < 5e-3, "|a| = {}", v.norm());
        }
        for v in &w {
            assert_abs_diff_eq!(*v, Vector3::new(0.0, 0.0, TAU), epsilon = 1e-4);
        }
    }
}
