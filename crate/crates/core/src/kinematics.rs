//! Forward kinematics over the 24-joint mean-shape skeleton and the hybrid
//! translation estimate: integrated horizontal velocity plus pose-corrected
//! barometric vertical translation.

use std::path::Path;

use nalgebra::Vector2;
use thiserror::Error;

use crate::features::localize_pose_output;
use crate::rotmath::{Rot3, Vec3};

pub type Vec2 = Vector2<f64>;

pub const NUM_JOINTS: usize = 24;

pub const PELVIS: usize = 0;
pub const LEFT_HIP: usize = 1;
pub const RIGHT_HIP: usize = 2;
pub const LEFT_KNEE: usize = 4;
pub const RIGHT_KNEE: usize = 5;
pub const SPINE3: usize = 9;
pub const LEFT_FOOT: usize = 10;
pub const RIGHT_FOOT: usize = 11;
pub const LEFT_SHOULDER: usize = 16;
pub const RIGHT_SHOULDER: usize = 17;
pub const LEFT_ELBOW: usize = 18;
pub const RIGHT_ELBOW: usize = 19;
pub const LEFT_WRIST: usize = 20;

/// Joints whose global orientation is used for the SIP error: upper arms and
/// upper legs.
pub const SIP_JOINTS: [usize; 4] = [LEFT_SHOULDER, RIGHT_SHOULDER, LEFT_HIP, RIGHT_HIP];

/// Bone carrying the wrist device (the forearm is driven by the elbow joint).
pub const WRIST_DEVICE_BONE: usize = LEFT_ELBOW;
/// Bone carrying the pocket device.
pub const POCKET_DEVICE_BONE: usize = RIGHT_HIP;

const DEFAULT_SKELETON: &str = include_str!("../data/skeleton_mean.txt");

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("skeleton file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("skeleton has {0} joints, expected 24")]
    JointCount(usize),
    #[error("joint {joint} has parent {parent}; parents must precede children")]
    NotTopological { joint: usize, parent: i64 },
    #[error("sequence lengths differ: {0}")]
    LengthMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mean-shape skeleton: parent table plus rest offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub names: Vec<String>,
    /// `None` for the root.
    pub parents: [Option<usize>; NUM_JOINTS],
    /// Offset from the parent joint in the parent's rest frame. For the root
    /// this is its rest position and is ignored by [`fk`].
    pub offsets: [Vec3; NUM_JOINTS],
    /// Pocket device position as a fraction along the hip→knee bone.
    pub thigh_site_fraction: f64,
}

impl Default for Skeleton {
    fn default() -> Self {
        Skeleton::parse(DEFAULT_SKELETON).expect("bundled skeleton table is valid")
    }
}

impl Skeleton {
    /// Parses the text table: one `name parent x y z` row per joint, `#`
    /// comments and blank lines ignored.
    pub fn parse(text: &str) -> Result<Self, KinematicsError> {
        let mut names = Vec::with_capacity(NUM_JOINTS);
        let mut parents = [None; NUM_JOINTS];
        let mut offsets = [Vec3::zeros(); NUM_JOINTS];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| KinematicsError::Parse { line: lineno + 1, msg: msg.to_string() };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(err("expected 5 fields"));
            }
            let j = names.len();
            if j >= NUM_JOINTS {
                return Err(KinematicsError::JointCount(j + 1));
            }
            let parent: i64 = fields[1].parse().map_err(|_| err("bad parent index"))?;
            let mut xyz = [0.0f64; 3];
            for (k, f) in fields[2..].iter().enumerate() {
                xyz[k] = f.parse().map_err(|_| err("bad offset"))?;
                if !xyz[k].is_finite() {
                    return Err(err("non-finite offset"));
                }
            }
            parents[j] = match parent {
                -1 if j == 0 => None,
                p if p >= 0 && (p as usize) < j => Some(p as usize),
                _ => return Err(KinematicsError::NotTopological { joint: j, parent }),
            };
            offsets[j] = Vec3::new(xyz[0], xyz[1], xyz[2]);
            names.push(fields[0].to_string());
        }
        if names.len() != NUM_JOINTS {
            return Err(KinematicsError::JointCount(names.len()));
        }
        Ok(Skeleton { names, parents, offsets, thigh_site_fraction: 0.5 })
    }

    pub fn load(path: &Path) -> Result<Self, KinematicsError> {
        Skeleton::parse(&std::fs::read_to_string(path)?)
    }

    pub fn with_thigh_site_fraction(mut self, fraction: f64) -> Self {
        self.thigh_site_fraction = fraction;
        self
    }

    /// Uniformly scaled body (every bone length times `factor`).
    pub fn scaled(mut self, factor: f64) -> Self {
        for o in &mut self.offsets {
            *o *= factor;
        }
        self
    }

    /// Wrist-minus-thigh site height in the rest T-pose.
    pub fn tpose_site_height_gap(&self) -> f64 {
        let fk = fk(&[Rot3::identity(); NUM_JOINTS], self);
        fk.wrist_site.y - fk.thigh_site.y
    }
}

/// Forward kinematics result, pelvis at the origin, world orientation.
#[derive(Debug, Clone)]
pub struct FkResult {
    pub global: [Rot3; NUM_JOINTS],
    pub joints: [Vec3; NUM_JOINTS],
    pub wrist_site: Vec3,
    pub thigh_site: Vec3,
    pub foot_sites: [Vec3; 2],
}

impl FkResult {
    pub fn lowest_foot(&self) -> f64 {
        self.foot_sites[0].y.min(self.foot_sites[1].y)
    }
}

/// `theta[0]` is the pelvis world orientation, the rest are parent-relative.
pub fn fk(theta: &[Rot3; NUM_JOINTS], skel: &Skeleton) -> FkResult {
    let mut global = [Rot3::identity(); NUM_JOINTS];
    let mut joints = [Vec3::zeros(); NUM_JOINTS];
    global[0] = theta[0];
    for j in 1..NUM_JOINTS {
        let p = skel.parents[j].expect("non-root joint has a parent");
        global[j] = global[p] * theta[j];
        joints[j] = joints[p] + global[p] * skel.offsets[j];
    }
    let thigh_site = joints[RIGHT_HIP]
        + global[RIGHT_HIP] * (skel.offsets[RIGHT_KNEE] * skel.thigh_site_fraction);
    FkResult {
        global,
        wrist_site: joints[LEFT_WRIST],
        thigh_site,
        foot_sites: [joints[LEFT_FOOT], joints[RIGHT_FOOT]],
        joints,
    }
}

/// Parent-relative rotations from global ones.
pub fn global_to_local(global: &[Rot3; NUM_JOINTS], skel: &Skeleton) -> [Rot3; NUM_JOINTS] {
    let mut local = *global;
    for j in 1..NUM_JOINTS {
        let p = skel.parents[j].expect("non-root joint has a parent");
        local[j] = global[p].transpose() * global[j];
    }
    local
}

#[derive(Debug, Clone)]
pub struct PoseState {
    pub theta: [Rot3; NUM_JOINTS],
    pub joints: [Vec3; NUM_JOINTS],
}

impl PoseState {
    pub fn from_theta(theta: [Rot3; NUM_JOINTS], skel: &Skeleton) -> Self {
        let joints = fk(&theta, skel).joints;
        PoseState { theta, joints }
    }

    pub fn tpose(skel: &Skeleton) -> Self {
        PoseState::from_theta([Rot3::identity(); NUM_JOINTS], skel)
    }
}

#[derive(Debug, Clone)]
pub struct MotionState {
    pub pose: PoseState,
    pub t_xz: Vec2,
    pub t_y: f64,
    pub t: f64,
}

/// Right-thigh site height relative to the pelvis, world orientation.
pub fn thigh_local_height(pose: &PoseState, skel: &Skeleton) -> f64 {
    fk(&pose.theta, skel).thigh_site.y
}

/// Root vertical translation from the barometric thigh height change minus
/// the thigh height change explained by the pose itself.
pub fn vertical_translation(h_glb_t: f64, h_glb_0: f64, h_loc_t: f64, h_loc_0: f64) -> f64 {
    (h_glb_t - h_glb_0) - (h_loc_t - h_loc_0)
}

/// Running sum `t(k) = Σ_{i≤k} v_i·dt`, starting from the origin.
pub fn integrate_horizontal(v_seq: &[Vec2], dt: f64) -> Vec<Vec2> {
    v_seq
        .iter()
        .scan(Vec2::zeros(), |acc, v| {
            *acc += v * dt;
            Some(*acc)
        })
        .collect()
}

/// Streaming fold behind [`assemble`]; one per session.
#[derive(Debug, Clone)]
pub struct Assembler {
    skel: Skeleton,
    dt: f64,
    frame: usize,
    t_xz: Vec2,
    reference: Option<(f64, f64)>,
}

impl Assembler {
    pub fn new(skel: Skeleton, dt: f64) -> Self {
        Assembler { skel, dt, frame: 0, t_xz: Vec2::zeros(), reference: None }
    }

    pub fn skeleton(&self) -> &Skeleton {
        &self.skel
    }

    /// `theta_local` is the thigh-frame estimator output, `h_glb` the filtered
    /// pocket height.
    pub fn push(
        &mut self,
        theta_local: &[Rot3; NUM_JOINTS],
        r_rp: &Rot3,
        v_xz: Vec2,
        h_glb: f64,
    ) -> MotionState {
        let theta = localize_pose_output(theta_local, r_rp);
        let fk = fk(&theta, &self.skel);
        let h_loc = fk.thigh_site.y;
        let (h_glb_0, h_loc_0) = *self.reference.get_or_insert((h_glb, h_loc));
        self.t_xz += v_xz * self.dt;
        let state = MotionState {
            pose: PoseState { theta, joints: fk.joints },
            t_xz: self.t_xz,
            t_y: vertical_translation(h_glb, h_glb_0, h_loc, h_loc_0),
            t: self.frame as f64 * self.dt,
        };
        self.frame += 1;
        state
    }
}

pub fn assemble(
    theta_seq: &[[Rot3; NUM_JOINTS]],
    r_rp_seq: &[Rot3],
    v_seq: &[Vec2],
    h_glb_seq: &[f64],
    skel: &Skeleton,
    dt: f64,
) -> Result<Vec<MotionState>, KinematicsError> {
    let n = theta_seq.len();
    if r_rp_seq.len() != n || v_seq.len() != n || h_glb_seq.len() != n {
        return Err(KinematicsError::LengthMismatch(format!(
            "theta {n}, r_rp {}, v {}, h {}",
            r_rp_seq.len(),
            v_seq.len(),
            h_glb_seq.len()
        )));
    }
    let mut asm = Assembler::new(skel.clone(), dt);
    Ok((0..n)
        .map(|i| asm.push(&theta_seq[i], &r_rp_seq[i], v_seq[i], h_glb_seq[i]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotmath::exp_so3;
    use std::f64::consts::FRAC_PI_2;

    fn rest_positions(skel: &Skeleton) -> [Vec3; NUM_JOINTS] {
        let mut p = [Vec3::zeros(); NUM_JOINTS];
        for j in 1..NUM_JOINTS {
            p[j] = p[skel.parents[j].unwrap()] + skel.offsets[j];
        }
        p
    }

    #[test]
    fn bundled_skeleton_is_topological() {
        let skel = Skeleton::default();
        assert_eq!(skel.names[LEFT_WRIST], "left_wrist");
        assert_eq!(skel.names[RIGHT_KNEE], "right_knee");
        for j in 1..NUM_JOINTS {
            assert!(skel.parents[j].unwrap() < j);
        }
    }

    #[test]
    fn identity_pose_is_rest_pose() {
        let skel = Skeleton::default();
        let out = fk(&[Rot3::identity(); NUM_JOINTS], &skel);
        let rest = rest_positions(&skel);
        for j in 0..NUM_JOINTS {
            assert!((out.joints[j] - rest[j]).norm() < 1e-15);
        }
        // thigh site halfway between hip and knee
        let mid = (rest[RIGHT_HIP] + rest[RIGHT_KNEE]) * 0.5;
        assert!((out.thigh_site - mid).norm() < 1e-15);
    }

    #[test]
    fn pelvis_rotation_rotates_everything() {
        let skel = Skeleton::default();
        let rest = fk(&[Rot3::identity(); NUM_JOINTS], &skel);
        let mut theta = [Rot3::identity(); NUM_JOINTS];
        let rz = Rot3::about_z(0.8);
        theta[0] = rz;
        let out = fk(&theta, &skel);
        for j in 0..NUM_JOINTS {
            assert!((out.joints[j] - rz * rest.joints[j]).norm() < 1e-12);
        }
    }

    #[test]
    fn thigh_height_under_hip_flexion() {
        let skel = Skeleton::default();
        let rest = PoseState::tpose(&skel);
        let rest_h = thigh_local_height(&rest, &skel);
        let rest_fk = fk(&rest.theta, &skel);
        assert!(rest_h < 0.0);
        assert_eq!(rest_h, rest_fk.thigh_site.y);

        let mut theta = [Rot3::identity(); NUM_JOINTS];
        theta[RIGHT_HIP] = Rot3::about_x(FRAC_PI_2);
        let lifted = thigh_local_height(&PoseState::from_theta(theta, &skel), &skel);
        // two-bone chain by hand: hip then the site offset rotated 90° about x,
        // which maps (x, y, z) to (x, -z, y)
        let hip = skel.offsets[RIGHT_HIP];
        let site = skel.offsets[RIGHT_KNEE] * skel.thigh_site_fraction;
        let expect = hip.y - site.z;
        assert!((lifted - expect).abs() < 1e-12);
        assert!(lifted > rest_h);
    }

    #[test]
    fn thigh_height_invariant_under_pelvis_yaw() {
        let skel = Skeleton::default();
        let mut theta = [Rot3::identity(); NUM_JOINTS];
        theta[RIGHT_HIP] = exp_so3(&Vec3::new(0.4, 0.1, -0.2));
        let a = thigh_local_height(&PoseState::from_theta(theta, &skel), &skel);
        theta[0] = Rot3::about_y(2.1);
        let b = thigh_local_height(&PoseState::from_theta(theta, &skel), &skel);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn vertical_translation_cases() {
        assert_eq!(vertical_translation(0.2, 0.0, -0.3, -0.5), 0.0);
        assert!((vertical_translation(1.17, 1.0, -0.5, -0.5) - 0.17).abs() < 1e-15);
    }

    #[test]
    fn horizontal_integration() {
        let dt = 1.0 / 30.0;
        assert!(integrate_horizontal(&vec![Vec2::zeros(); 10], dt)
            .iter()
            .all(|p| *p == Vec2::zeros()));
        let traj = integrate_horizontal(&vec![Vec2::new(1.0, 0.0); 30], dt);
        assert_eq!(traj.len(), 30);
        assert!((traj[29] - Vec2::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn assemble_static_tpose() {
        let skel = Skeleton::default();
        let n = 20;
        let out = assemble(
            &vec![[Rot3::identity(); NUM_JOINTS]; n],
            &vec![Rot3::identity(); n],
            &vec![Vec2::zeros(); n],
            &vec![0.7; n],
            &skel,
            1.0 / 30.0,
        )
        .unwrap();
        for m in &out {
            assert_eq!(m.t_xz, Vec2::zeros());
            assert_eq!(m.t_y, 0.0);
        }
    }

    #[test]
    fn assemble_rejects_mismatched_lengths() {
        let skel = Skeleton::default();
        let r = assemble(
            &vec![[Rot3::identity(); NUM_JOINTS]; 3],
            &vec![Rot3::identity(); 2],
            &vec![Vec2::zeros(); 3],
            &vec![0.0; 3],
            &skel,
            1.0 / 30.0,
        );
        assert!(matches!(r, Err(KinematicsError::LengthMismatch(_))));
    }

    #[test]
    fn skeleton_parse_errors() {
        assert!(matches!(Skeleton::parse("a -1 0 0 0\n"), Err(KinematicsError::JointCount(1))));
        assert!(matches!(
            Skeleton::parse("a -1 0 0\n"),
            Err(KinematicsError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            Skeleton::parse("a -1 0 0 0\nb 1 0 0 0\n"),
            Err(KinematicsError::NotTopological { joint: 1, parent: 1 })
        ));
    }
}
