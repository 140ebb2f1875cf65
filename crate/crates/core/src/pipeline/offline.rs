//! Whole-sequence inference on synthesized frames, for training
//! diagnostics and evaluation against ground truth.

use super::engine::Models;
use crate::features::{build_pose_input, build_trans_input};
use crate::kinematics::{assemble, Skeleton, Vec2, NUM_JOINTS};
use crate::metrics::{CurveOptions, EvalReport};
use crate::neural::pose_target;
use crate::rotmath::{decode_rot6d, Rot3, Rot6D, Vec3};
use crate::synth::SynthFrameSet;

#[derive(Debug, Clone)]
pub struct SetPrediction {
    /// Pelvis in the world frame, other joints parent-relative.
    pub poses: Vec<[Rot3; NUM_JOINTS]>,
    /// Root translation relative to the first frame.
    pub trajectory: Vec<Vec3>,
}

/// Runs both estimators over a frame set, seeding the pose estimator with
/// the true first-frame pose.
pub fn predict_set(models: &Models, set: &SynthFrameSet, skel: &Skeleton) -> SetPrediction {
    let f = &set.frames;
    let dt = 1.0 / set.fps;
    if f.is_empty() {
        return SetPrediction { poses: Vec::new(), trajectory: Vec::new() };
    }
    let mut pose_state = models.pose.start(&pose_target(&f[0].pose, &f[0].raw.r_rp)).expect("144-value pose");
    let mut vel_state = models.velocity.start();
    let mut local = Vec::with_capacity(f.len());
    let mut vel = Vec::with_capacity(f.len());
    let mut prev_theta = [Rot3::identity(); NUM_JOINTS];
    for t in 0..f.len() {
        let x = build_pose_input(&f[t].raw, &f[t.saturating_sub(1)].raw, dt).flatten();
        let y = models.pose.step(&mut pose_state, &x);
        for (j, r) in prev_theta.iter_mut().enumerate() {
            if let Ok(d) = decode_rot6d(&Rot6D::from_slice(&y[6 * j..6 * j + 6])) {
                *r = d;
            }
        }
        local.push(prev_theta);
        let v = models.velocity.step(&mut vel_state, &build_trans_input(&f[t].raw).flatten());
        vel.push(Vec2::new(v[0], v[1]));
    }
    let r_rp: Vec<Rot3> = f.iter().map(|x| x.raw.r_rp).collect();
    let h: Vec<f64> = f.iter().map(|x| x.raw.h_rp).collect();
    let states = assemble(&local, &r_rp, &vel, &h, skel, dt).expect("equal lengths");
    SetPrediction {
        poses: states.iter().map(|s| s.pose.theta).collect(),
        trajectory: states.iter().map(|s| Vec3::new(s.t_xz.x, s.t_y, s.t_xz.y)).collect(),
    }
}

pub fn evaluate_set(models: &Models, set: &SynthFrameSet, skel: &Skeleton, opts: &CurveOptions) -> EvalReport {
    let pred = predict_set(models, set, skel);
    let gt_poses: Vec<[Rot3; NUM_JOINTS]> = set.frames.iter().map(|f| f.pose).collect();
    let root0 = set.frames.first().map(|f| f.root).unwrap_or_else(Vec3::zeros);
    let gt_traj: Vec<Vec3> = set.frames.iter().map(|f| f.root - root0).collect();
    EvalReport::new(&pred.poses, &gt_poses, &pred.trajectory, &gt_traj, skel, opts)
}
