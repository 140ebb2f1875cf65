//! Pose and trajectory error metrics, and the evaluation report.
//!
//! Positional error averages over the 23 non-root joints. Mesh error needs a
//! body-surface model and is always reported as `n/a`.

use std::fmt::Write as _;

use serde::Serialize;

use crate::kinematics::{fk, Skeleton, NUM_JOINTS, SIP_JOINTS};
use crate::rotmath::{Rot3, Vec3};

pub const ALL_JOINTS: [usize; NUM_JOINTS] = {
    let mut a = [0; NUM_JOINTS];
    let mut i = 0;
    while i < NUM_JOINTS {
        a[i] = i;
        i += 1;
    }
    a
};

pub const MESH_ERROR_LABEL: &str = "n/a";

/// Mean geodesic angle between global joint orientations over `joints`,
/// degrees.
pub fn angular_error(pred: &[Rot3; NUM_JOINTS], gt: &[Rot3; NUM_JOINTS], joints: &[usize]) -> f64 {
    if joints.is_empty() {
        return 0.0;
    }
    joints.iter().map(|&j| gt[j].angle_to(&pred[j])).sum::<f64>().to_degrees() / joints.len() as f64
}

/// Angular error over the upper arms and upper legs.
pub fn sip_error(pred: &[Rot3; NUM_JOINTS], gt: &[Rot3; NUM_JOINTS]) -> f64 {
    angular_error(pred, gt, &SIP_JOINTS)
}

/// Mean non-root joint distance with both pelvises at the origin, cm.
/// Poses are parent-relative rotations.
pub fn positional_error(pred: &[Rot3; NUM_JOINTS], gt: &[Rot3; NUM_JOINTS], skel: &Skeleton) -> f64 {
    let (a, b) = (fk(pred, skel).joints, fk(gt, skel).joints);
    let root = (a[0], b[0]);
    (1..NUM_JOINTS).map(|j| ((a[j] - root.0) - (b[j] - root.1)).norm()).sum::<f64>() * 100.0 / (NUM_JOINTS - 1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoseErrorReport {
    pub sip_deg: Vec<f64>,
    pub ang_deg: Vec<f64>,
    pub pos_cm: Vec<f64>,
    pub mean_sip_deg: f64,
    pub mean_ang_deg: f64,
    pub mean_pos_cm: f64,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Per-frame errors of parent-relative pose sequences (compared on the
/// shorter length).
pub fn evaluate_poses(pred: &[[Rot3; NUM_JOINTS]], gt: &[[Rot3; NUM_JOINTS]], skel: &Skeleton) -> PoseErrorReport {
    let mut sip_deg = Vec::with_capacity(gt.len());
    let mut ang_deg = Vec::with_capacity(gt.len());
    let mut pos_cm = Vec::with_capacity(gt.len());
    for (p, g) in pred.iter().zip(gt) {
        let (pg, gg) = (fk(p, skel).global, fk(g, skel).global);
        sip_deg.push(sip_error(&pg, &gg));
        ang_deg.push(angular_error(&pg, &gg, &ALL_JOINTS));
        pos_cm.push(positional_error(p, g, skel));
    }
    PoseErrorReport {
        mean_sip_deg: mean(&sip_deg),
        mean_ang_deg: mean(&ang_deg),
        mean_pos_cm: mean(&pos_cm),
        sip_deg,
        ang_deg,
        pos_cm,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveOptions {
    /// Meters of ground-truth travel per bin.
    pub bin_width: f64,
    /// Frames between window starts.
    pub start_stride: usize,
}

impl Default for CurveOptions {
    fn default() -> Self {
        CurveOptions { bin_width: 1.0, start_stride: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranslationErrorCurve {
    /// Bin edges, meters of ground-truth travel: 0, w, 2w, …
    pub distance: Vec<f64>,
    /// Mean translation error at each edge, meters.
    pub mean_error: Vec<f64>,
    /// Windows that reached each edge.
    pub windows: Vec<usize>,
}

/// Error after travelling `d` meters along the ground truth, averaged over
/// windows starting every `start_stride` frames. Both trajectories are
/// re-anchored at each window start and interpolated linearly in arc length.
pub fn cumulative_translation_error(pred: &[Vec3], gt: &[Vec3], opts: &CurveOptions) -> TranslationErrorCurve {
    let n = pred.len().min(gt.len());
    let w = opts.bin_width;
    let mut sums: Vec<f64> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    let mut record = |k: usize, e: f64| {
        if sums.len() <= k {
            sums.resize(k + 1, 0.0);
            counts.resize(k + 1, 0);
        }
        sums[k] += e;
        counts[k] += 1;
    };
    for s in (0..n).step_by(opts.start_stride.max(1)) {
        record(0, 0.0);
        let mut arc = 0.0;
        let mut next = 1usize;
        for t in s + 1..n {
            let seg = (gt[t] - gt[t - 1]).norm();
            while seg > 0.0 && arc + seg >= next as f64 * w {
                let f = (next as f64 * w - arc) / seg;
                let g = gt[t - 1] + (gt[t] - gt[t - 1]) * f - gt[s];
                let p = pred[t - 1] + (pred[t] - pred[t - 1]) * f - pred[s];
                record(next, (p - g).norm());
                next += 1;
            }
            arc += seg;
        }
    }
    TranslationErrorCurve {
        distance: (0..sums.len()).map(|k| k as f64 * w).collect(),
        mean_error: sums.iter().zip(&counts).map(|(s, c)| s / *c as f64).collect(),
        windows: counts,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub frames: usize,
    pub mean_sip_deg: f64,
    pub mean_ang_deg: f64,
    pub mean_pos_cm: f64,
    pub mesh_error: &'static str,
    pub final_translation_error_m: f64,
    pub translation_curve: TranslationErrorCurve,
}

pub struct EvalReport {
    pub poses: PoseErrorReport,
    pub translation: TranslationErrorCurve,
    pub final_translation_error: f64,
}

impl EvalReport {
    pub fn new(
        pred_pose: &[[Rot3; NUM_JOINTS]],
        gt_pose: &[[Rot3; NUM_JOINTS]],
        pred_traj: &[Vec3],
        gt_traj: &[Vec3],
        skel: &Skeleton,
        opts: &CurveOptions,
    ) -> Self {
        let n = pred_traj.len().min(gt_traj.len());
        let final_translation_error = if n == 0 {
            0.0
        } else {
            ((pred_traj[n - 1] - pred_traj[0]) - (gt_traj[n - 1] - gt_traj[0])).norm()
        };
        EvalReport {
            poses: evaluate_poses(pred_pose, gt_pose, skel),
            translation: cumulative_translation_error(pred_traj, gt_traj, opts),
            final_translation_error,
        }
    }

    /// Per-frame table: `frame,sip_deg,ang_deg,pos_cm,mesh`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,sip_deg,ang_deg,pos_cm,mesh\n");
        let p = &self.poses;
        for i in 0..p.sip_deg.len() {
            let _ = writeln!(out, "{i},{:.6},{:.6},{:.6},{MESH_ERROR_LABEL}", p.sip_deg[i], p.ang_deg[i], p.pos_cm[i]);
        }
        out
    }

    pub fn summary(&self) -> EvalSummary {
        EvalSummary {
            frames: self.poses.sip_deg.len(),
            mean_sip_deg: self.poses.mean_sip_deg,
            mean_ang_deg: self.poses.mean_ang_deg,
            mean_pos_cm: self.poses.mean_pos_cm,
            mesh_error: MESH_ERROR_LABEL,
            final_translation_error_m: self.final_translation_error,
            translation_curve: self.translation.clone(),
        }
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary()).expect("summary serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotmath::exp_so3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng) -> [Rot3; NUM_JOINTS] {
        std::array::from_fn(|_| {
            exp_so3(&Vec3::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)))
        })
    }

    #[test]
    fn identical_poses_have_zero_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = random_pose(&mut rng);
        assert_eq!(angular_error(&p, &p, &ALL_JOINTS), 0.0);
        assert_eq!(positional_error(&p, &p, &Skeleton::default()), 0.0);
    }

    #[test]
    fn single_joint_offset() {
        let gt = [Rot3::identity(); NUM_JOINTS];
        let mut pred = gt;
        pred[5] = Rot3::about_z(30f64.to_radians());
        assert!((angular_error(&pred, &gt, &[5]) - 30.0).abs() < 1e-9);
        assert!((angular_error(&pred, &gt, &[4, 5]) - 15.0).abs() < 1e-9);
    }

    #[test]
    fn angular_error_matches_quaternion_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let (a, b) = (random_pose(&mut rng), random_pose(&mut rng));
            let oracle = (0..NUM_JOINTS)
                .map(|j| {
                    let (qa, qb) = (a[j].to_quaternion(), b[j].to_quaternion());
                    let d: f64 = qa.iter().zip(&qb).map(|(x, y)| x * y).sum();
                    2.0 * d.abs().min(1.0).acos()
                })
                .sum::<f64>()
                .to_degrees()
                / NUM_JOINTS as f64;
            assert!((angular_error(&a, &b, &ALL_JOINTS) - oracle).abs() < 1e-6);
            let c = exp_so3(&Vec3::new(0.3, -1.0, 2.0));
            let (ca, cb) = (a.map(|r| c * r), b.map(|r| c * r));
            assert!((angular_error(&ca, &cb, &ALL_JOINTS) - angular_error(&a, &b, &ALL_JOINTS)).abs() < 1e-9);
        }
    }

    #[test]
    fn two_bone_hinge_closed_form() {
        // only left_hip (unit length below the pelvis) and left_knee (unit length below the hip) have length
        let mut skel = Skeleton::default();
        skel.offsets = [Vec3::zeros(); NUM_JOINTS];
        skel.offsets[1] = Vec3::new(0.0, -1.0, 0.0);
        skel.offsets[4] = Vec3::new(0.0, -1.0, 0.0);
        let gt = [Rot3::identity(); NUM_JOINTS];
        let mut pred = gt;
        let alpha = 0.7f64;
        pred[1] = Rot3::about_z(alpha);
        // joints 4, 7 and 10 all sit at the knee
        let expected = 3.0 * 2.0 * (alpha / 2.0).sin() * 100.0 / 23.0;
        assert!((positional_error(&pred, &gt, &skel) - expected).abs() < 1e-9);
        // a turn about the vertical leaves this vertical chain in place
        let mut turned = gt;
        turned[0] = Rot3::about_y(1.0);
        assert!((positional_error(&turned, &gt, &skel)).abs() < 1e-12);
    }

    #[test]
    fn straight_line_overshoot_curve() {
        let gt: Vec<Vec3> = (0..301).map(|i| Vec3::new(i as f64 / 30.0, 0.0, 0.0)).collect();
        let pred: Vec<Vec3> = gt.iter().map(|p| p * 1.1).collect();
        let c = cumulative_translation_error(&pred, &gt, &CurveOptions::default());
        assert_eq!(c.distance.len(), 11);
        for (d, e) in c.distance.iter().zip(&c.mean_error) {
            assert!((e - 0.1 * d).abs() < 1e-9, "{d} {e}");
        }
        assert_eq!(c.windows[0], 11);
        assert_eq!(c.windows[10], 1);
        let same = cumulative_translation_error(&gt, &gt, &CurveOptions::default());
        assert!(same.mean_error.iter().all(|e| *e == 0.0));
        let shifted: Vec<Vec3> = gt.iter().map(|p| p + Vec3::new(5.0, 1.0, 0.0)).collect();
        let c = cumulative_translation_error(&shifted, &gt, &CurveOptions::default());
        assert!(c.mean_error.iter().all(|e| e.abs() < 1e-12));
    }

    #[test]
    fn report_labels_mesh_error() {
        let skel = Skeleton::default();
        let poses = vec![[Rot3::identity(); NUM_JOINTS]; 3];
        let traj = vec![Vec3::zeros(); 3];
        let r = EvalReport::new(&poses, &poses, &traj, &traj, &skel, &CurveOptions::default());
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().nth(1).unwrap().ends_with(",n/a"));
        let json = r.summary_json();
        assert!(json.contains("\"mesh_error\": \"n/a\""));
        assert_eq!(r.summary().mean_pos_cm, 0.0);
    }
}
