//! Per-frame feature vectors for the two estimators.
//!
//! Flattening order is fixed (tagged by [`FEATURE_LAYOUT_VERSION`] in
//! checkpoints): fields in declaration order, rotation matrices column-major.

use crate::kinematics::NUM_JOINTS;
use crate::rotmath::{log_so3, Rot3, Vec3};

pub const FEATURE_LAYOUT_VERSION: u16 = 1;
pub const POSE_INPUT_DIM: usize = 22;
pub const TRANS_INPUT_DIM: usize = 25;
pub const RAW_FRAME_DIM: usize = 26;

/// Unit gravity direction in the y-up world frame.
pub const GRAVITY_DIR: Vec3 = Vec3::new(0.0, -1.0, 0.0);

/// Aligned per-frame measurements: world-frame free accelerations, bone
/// orientations and ground-relative filtered heights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawFrame {
    pub a_lw: Vec3,
    pub a_rp: Vec3,
    pub r_lw: Rot3,
    pub r_rp: Rot3,
    pub h_lw: f64,
    pub h_rp: f64,
    pub t: f64,
}

impl RawFrame {
    pub fn at_rest(t: f64) -> Self {
        RawFrame {
            a_lw: Vec3::zeros(),
            a_rp: Vec3::zeros(),
            r_lw: Rot3::identity(),
            r_rp: Rot3::identity(),
            h_lw: 0.0,
            h_rp: 0.0,
            t,
        }
    }

    /// The 26-vector `[a_lw, a_rp, R_lw, R_rp, h_lw, h_rp]`.
    pub fn flatten(&self) -> [f64; RAW_FRAME_DIM] {
        let mut out = [0.0; RAW_FRAME_DIM];
        out[0..3].copy_from_slice(self.a_lw.as_slice());
        out[3..6].copy_from_slice(self.a_rp.as_slice());
        out[6..15].copy_from_slice(&self.r_lw.to_col_major());
        out[15..24].copy_from_slice(&self.r_rp.to_col_major());
        out[24] = self.h_lw;
        out[25] = self.h_rp;
        out
    }
}

/// Thigh-rooted pose estimator input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseInput22 {
    pub a_lw_local: Vec3,
    pub a_rp_local: Vec3,
    pub r_lw_local: Rot3,
    pub w_rp_local: Vec3,
    pub g_local: Vec3,
    pub dh: f64,
}

impl PoseInput22 {
    pub fn flatten(&self) -> [f64; POSE_INPUT_DIM] {
        let mut out = [0.0; POSE_INPUT_DIM];
        out[0..3].copy_from_slice(self.a_lw_local.as_slice());
        out[3..6].copy_from_slice(self.a_rp_local.as_slice());
        out[6..15].copy_from_slice(&self.r_lw_local.to_col_major());
        out[15..18].copy_from_slice(self.w_rp_local.as_slice());
        out[18..21].copy_from_slice(self.g_local.as_slice());
        out[21] = self.dh;
        out
    }
}

/// World-frame velocity estimator input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransInput25 {
    pub a_lw: Vec3,
    pub a_rp: Vec3,
    pub r_lw: Rot3,
    pub r_rp: Rot3,
    pub dh: f64,
}

impl TransInput25 {
    pub fn flatten(&self) -> [f64; TRANS_INPUT_DIM] {
        let mut out = [0.0; TRANS_INPUT_DIM];
        out[0..3].copy_from_slice(self.a_lw.as_slice());
        out[3..6].copy_from_slice(self.a_rp.as_slice());
        out[6..15].copy_from_slice(&self.r_lw.to_col_major());
        out[15..24].copy_from_slice(&self.r_rp.to_col_major());
        out[24] = self.dh;
        out
    }

    /// Inverse of [`flatten`](Self::flatten); the rotations are taken as-is.
    pub fn unflatten(v: &[f64; TRANS_INPUT_DIM]) -> Self {
        let mat = |s: &[f64]| {
            Rot3::from_matrix_unchecked(nalgebra::Matrix3::from_column_slice(s))
        };
        TransInput25 {
            a_lw: Vec3::new(v[0], v[1], v[2]),
            a_rp: Vec3::new(v[3], v[4], v[5]),
            r_lw: mat(&v[6..15]),
            r_rp: mat(&v[15..24]),
            dh: v[24],
        }
    }
}

/// Expresses the frame in the pocket (thigh) device frame. `prev` supplies
/// the thigh angular velocity; pass `curr` again for the first frame.
pub fn build_pose_input(curr: &RawFrame, prev: &RawFrame, dt: f64) -> PoseInput22 {
    let to_local = curr.r_rp.transpose();
    PoseInput22 {
        a_lw_local: to_local * curr.a_lw,
        a_rp_local: to_local * curr.a_rp,
        r_lw_local: to_local * curr.r_lw,
        w_rp_local: log_so3(&(prev.r_rp.transpose() * curr.r_rp)) / dt,
        g_local: to_local * GRAVITY_DIR,
        dh: curr.h_lw - curr.h_rp,
    }
}

pub fn build_trans_input(curr: &RawFrame) -> TransInput25 {
    TransInput25 {
        a_lw: curr.a_lw,
        a_rp: curr.a_rp,
        r_lw: curr.r_lw,
        r_rp: curr.r_rp,
        dh: curr.h_lw - curr.h_rp,
    }
}

/// Thigh-frame pose to world pose: the pelvis entry is re-expressed in the
/// world frame, parent-relative joints pass through.
pub fn localize_pose_output(theta_local: &[Rot3; NUM_JOINTS], r_rp: &Rot3) -> [Rot3; NUM_JOINTS] {
    let mut out = *theta_local;
    out[0] = *r_rp * theta_local[0];
    out
}

/// Inverse of [`localize_pose_output`]; produces training targets.
pub fn delocalize_pose_output(theta: &[Rot3; NUM_JOINTS], r_rp: &Rot3) -> [Rot3; NUM_JOINTS] {
    let mut out = *theta;
    out[0] = r_rp.transpose() * theta[0];
    out
}
