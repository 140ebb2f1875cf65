//! Fixed-length training windows cut from synthesized frame sets.

use super::{PoseWindow, VelocityWindow, POSE_OUTPUT_DIM};
use crate::features::{build_pose_input, build_trans_input, delocalize_pose_output};
use crate::kinematics::NUM_JOINTS;
use crate::rotmath::{encode_rot6d, Rot3};
use crate::synth::SynthFrameSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowOptions {
    pub seq_len: usize,
    /// Frames between window starts; `seq_len` gives non-overlapping windows.
    pub stride: usize,
}

impl Default for WindowOptions {
    fn default() -> Self {
        WindowOptions { seq_len: 150, stride: 150 }
    }
}

impl WindowOptions {
    pub fn new(seq_len: usize) -> Self {
        WindowOptions { seq_len, stride: seq_len }
    }

    /// Half-window stride.
    pub fn overlapping(seq_len: usize) -> Self {
        WindowOptions { seq_len, stride: (seq_len / 2).max(1) }
    }

    fn starts(&self, n: usize) -> impl Iterator<Item = usize> {
        let (len, stride) = (self.seq_len.max(1), self.stride.max(1));
        (0..).map(move |k| k * stride).take_while(move |s| s + len <= n)
    }
}

/// Thigh-rooted pose as 24 concatenated 6D vectors.
pub fn pose_target(pose: &[Rot3; NUM_JOINTS], r_rp: &Rot3) -> [f64; POSE_OUTPUT_DIM] {
    let local = delocalize_pose_output(pose, r_rp);
    let mut out = [0.0; POSE_OUTPUT_DIM];
    for (j, r) in local.iter().enumerate() {
        out[6 * j..6 * j + 6].copy_from_slice(&encode_rot6d(r).0);
    }
    out
}

/// The assumed initial pose at session start: all identities.
pub fn tpose_encoding() -> [f64; POSE_OUTPUT_DIM] {
    pose_target(&[Rot3::identity(); NUM_JOINTS], &Rot3::identity())
}

pub fn pose_windows(set: &SynthFrameSet, opts: &WindowOptions) -> Vec<PoseWindow> {
    let f = &set.frames;
    let dt = 1.0 / set.fps;
    opts.starts(f.len())
        .map(|s| {
            let range = s..s + opts.seq_len;
            PoseWindow {
                first_pose: pose_target(&f[s].pose, &f[s].raw.r_rp),
                inputs: range
                    .clone()
                    .map(|t| build_pose_input(&f[t].raw, &f[t.saturating_sub(1)].raw, dt).flatten())
                    .collect(),
                targets: range.map(|t| pose_target(&f[t].pose, &f[t].raw.r_rp)).collect(),
            }
        })
        .collect()
}

pub fn velocity_windows(set: &SynthFrameSet, opts: &WindowOptions) -> Vec<VelocityWindow> {
    let f = &set.frames;
    opts.starts(f.len())
        .map(|s| {
            let range = s..s + opts.seq_len;
            VelocityWindow {
                inputs: range.clone().map(|t| build_trans_input(&f[t].raw).flatten()).collect(),
                targets: range.map(|t| [f[t].v_xz.x, f[t].v_xz.y]).collect(),
            }
        })
        .collect()
}
