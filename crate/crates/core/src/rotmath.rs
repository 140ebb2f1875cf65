//! Rotation algebra on SO(3): rotation matrices, the exponential and
//! logarithm maps, and the continuous 6D representation used as network
//! output.
//!
//! The 6D layout is column-major: the first column of the rotation matrix
//! followed by the second column. Trained checkpoints depend on this order.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

const SMALL_ANGLE: f64 = 1e-8;
const DEGENERATE_NORM: f64 = 1e-9;
const VALIDITY_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RotError {
    #[error("degenerate 6D input: norm {0:e} below threshold")]
    DegenerateInput(f64),
    #[error("matrix is not a proper rotation (orthonormality error {ortho:e}, det {det})")]
    NotRotation { ortho: f64, det: f64 },
}

/// A proper rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rot3(Matrix3<f64>);

impl Default for Rot3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rot3 {
    pub fn identity() -> Self {
        Rot3(Matrix3::identity())
    }

    /// Wraps a matrix after checking `mᵀm = I` and `det m = 1` within 1e-6.
    pub fn try_from_matrix(m: Matrix3<f64>) -> Result<Self, RotError> {
        let ortho = (m.transpose() * m - Matrix3::identity()).amax();
        let det = m.determinant();
        if !ortho.is_finite() || ortho > VALIDITY_TOL || (det - 1.0).abs() > VALIDITY_TOL {
            return Err(RotError::NotRotation { ortho, det });
        }
        Ok(Rot3(m))
    }

    /// Wraps a matrix the caller knows to be a rotation.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rot3(m)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rot3(self.0.transpose())
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn about_x(angle: f64) -> Self {
        exp_so3(&Vec3::new(angle, 0.0, 0.0))
    }

    pub fn about_y(angle: f64) -> Self {
        exp_so3(&Vec3::new(0.0, angle, 0.0))
    }

    pub fn about_z(angle: f64) -> Self {
        exp_so3(&Vec3::new(0.0, 0.0, angle))
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        log_so3(self).norm()
    }

    /// Geodesic distance `‖log(selfᵀ·other)‖` in radians.
    pub fn angle_to(&self, other: &Rot3) -> f64 {
        (self.transpose() * *other).angle()
    }

    pub fn is_valid(&self) -> bool {
        Rot3::try_from_matrix(self.0).is_ok()
    }

    /// Entries in column-major order.
    pub fn to_col_major(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        out.copy_from_slice(self.0.as_slice());
        out
    }

    pub fn from_col_major(v: &[f64; 9]) -> Result<Self, RotError> {
        Rot3::try_from_matrix(Matrix3::from_column_slice(v))
    }

    /// Unit quaternion `(w, x, y, z)` to rotation; the quaternion is
    /// normalized first.
    pub fn from_quaternion(q: [f64; 4]) -> Self {
        let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
        Rot3(Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ))
    }

    /// Rotation to unit quaternion `(w, x, y, z)` with `w ≥ 0`.
    pub fn to_quaternion(&self) -> [f64; 4] {
        let v = log_so3(self);
        let theta = v.norm();
        if theta < SMALL_ANGLE {
            return [1.0, v.x / 2.0, v.y / 2.0, v.z / 2.0];
        }
        let s = (theta / 2.0).sin() / theta;
        let q = [(theta / 2.0).cos(), v.x * s, v.y * s, v.z * s];
        if q[0] < 0.0 {
            [-q[0], -q[1], -q[2], -q[3]]
        } else {
            q
        }
    }

    /// Re-projects onto SO(3) through the 6D Gram–Schmidt decoder. Used to
    /// remove drift after long products.
    pub fn renormalized(&self) -> Self {
        decode_rot6d(&encode_rot6d(self)).unwrap_or(*self)
    }
}

impl std::ops::Mul for Rot3 {
    type Output = Rot3;
    fn mul(self, rhs: Rot3) -> Rot3 {
        Rot3(self.0 * rhs.0)
    }
}

impl std::ops::Mul<Vec3> for Rot3 {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// First two columns of a rotation matrix, column-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rot6D(pub [f64; 6]);

impl Rot6D {
    pub fn identity() -> Self {
        Rot6D([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn from_slice(s: &[f64]) -> Self {
        let mut r = [0.0; 6];
        r.copy_from_slice(&s[..6]);
        Rot6D(r)
    }
}

pub fn hat(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// `vee(m − mᵀ) / 2`, the axial vector of the skew part.
fn skew_axial(m: &Matrix3<f64>) -> Vec3 {
    Vec3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Logarithm map SO(3) → so(3) as an axis-angle vector with norm in `[0, π]`.
pub fn log_so3(r: &Rot3) -> Vec3 {
    let m = &r.0;
    let axial = skew_axial(m);
    let sin_t = axial.norm();
    let cos_t = (0.5 * (m.trace() - 1.0)).clamp(-1.0, 1.0);
    let theta = sin_t.atan2(cos_t);

    if theta < SMALL_ANGLE {
        // θ/sinθ ≈ 1 + θ²/6
        return axial * (1.0 + theta * theta / 6.0);
    }
    if cos_t > 0.0 || sin_t > 1e-3 {
        return axial * (theta / sin_t);
    }

    // Near π the skew part vanishes. Recover the axis from the symmetric part
    // (R + Rᵀ)/2 = cosθ·I + (1 − cosθ)·aaᵀ using its largest diagonal entry.
    let sym = (m + m.transpose()) * 0.5;
    let outer = (sym - Matrix3::identity() * cos_t) / (1.0 - cos_t);
    let k = (0..3)
        .max_by(|&i, &j| outer[(i, i)].total_cmp(&outer[(j, j)]))
        .unwrap_or(0);
    let mut axis: Vec3 = outer.column(k).into_owned() / outer[(k, k)].max(0.0).sqrt();
    axis.normalize_mut();
    if axis.dot(&axial) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// Exponential map so(3) → SO(3) (Rodrigues).
pub fn exp_so3(v: &Vec3) -> Rot3 {
    let theta = v.norm();
    let k = hat(v);
    if theta < SMALL_ANGLE {
        return Rot3(Matrix3::identity() + k + k * k * 0.5);
    }
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / (theta * theta);
    Rot3(Matrix3::identity() + k * a + k * k * b)
}

pub fn encode_rot6d(r: &Rot3) -> Rot6D {
    let s = r.0.as_slice();
    Rot6D([s[0], s[1], s[2], s[3], s[4], s[5]])
}

/// Gram–Schmidt decoding of any finite 6-vector into a rotation.
pub fn decode_rot6d(r: &Rot6D) -> Result<Rot3, RotError> {
    let a = Vec3::new(r.0[0], r.0[1], r.0[2]);
    let b = Vec3::new(r.0[3], r.0[4], r.0[5]);
    let na = a.norm();
    if !(na >= DEGENERATE_NORM) {
        return Err(RotError::DegenerateInput(na));
    }
    let c1 = a / na;
    let cross = c1.cross(&b);
    let nc = cross.norm();
    if !(nc >= DEGENERATE_NORM) {
        return Err(RotError::DegenerateInput(nc));
    }
    let c3 = cross / nc;
    let c2 = c3.cross(&c1);
    Ok(Rot3(Matrix3::from_columns(&[c1, c2, c3])))
}

/// Yaw angle of the horizontal projection of `dir` measured about +y, such
/// that `Rot3::about_y(yaw_of(d)) * (0,0,1)` points along the projection.
pub fn yaw_of(dir: &Vec3) -> f64 {
    dir.x.atan2(dir.z)
}
