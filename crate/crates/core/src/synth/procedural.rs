//! Procedural motion clips: walk, squat, stair climb, leg lift and a T-pose
//! hold. The pelvis height follows a foot-on-ground constraint so the clips
//! are kinematically plausible without any external motion data.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ClipFrame, MotionClip};
use crate::kinematics::*;
use crate::rotmath::{Rot3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClipKind {
    Walk,
    Squat,
    StairClimb,
    LegLift,
    TPoseHold,
}

impl ClipKind {
    pub const ALL: [ClipKind; 5] =
        [ClipKind::Walk, ClipKind::Squat, ClipKind::StairClimb, ClipKind::LegLift, ClipKind::TPoseHold];

    pub fn name(&self) -> &'static str {
        match self {
            ClipKind::Walk => "walk",
            ClipKind::Squat => "squat",
            ClipKind::StairClimb => "stairs",
            ClipKind::LegLift => "leglift",
            ClipKind::TPoseHold => "tpose",
        }
    }

    pub fn from_name(s: &str) -> Option<ClipKind> {
        ClipKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipParams {
    pub kind: ClipKind,
    /// Seconds.
    pub duration: f64,
    pub fps: f64,
    /// Facing direction, radians about +y; 0 faces −z.
    pub heading: f64,
    /// Forward speed, m/s (walk, stairs).
    pub speed: f64,
    /// Cycles per second of the dominant motion.
    pub cadence: f64,
    /// Joint-angle amplitude multiplier.
    pub amplitude: f64,
    /// Rise per step, meters (stairs).
    pub step_height: f64,
    pub phase: f64,
}

impl ClipParams {
    pub fn new(kind: ClipKind) -> Self {
        let (speed, cadence) = match kind {
            ClipKind::Walk => (1.2, 0.9),
            ClipKind::StairClimb => (0.5, 0.7),
            ClipKind::Squat => (0.0, 0.3),
            ClipKind::LegLift => (0.0, 0.25),
            ClipKind::TPoseHold => (0.0, 0.2),
        };
        ClipParams {
            kind,
            duration: 10.0,
            fps: 30.0,
            heading: 0.0,
            speed,
            cadence,
            amplitude: 1.0,
            step_height: 0.17,
            phase: 0.0,
        }
    }

    /// Default parameters jittered by a seeded RNG: random heading, ±20 %
    /// speed and amplitude, ±15 % cadence, random phase.
    pub fn randomized(kind: ClipKind, duration: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = ClipParams::new(kind);
        ClipParams {
            duration,
            heading: rng.random_range(-PI..PI),
            speed: base.speed * rng.random_range(0.8..1.2),
            cadence: base.cadence * rng.random_range(0.85..1.15),
            amplitude: rng.random_range(0.8..1.2),
            step_height: rng.random_range(0.15..0.19),
            phase: rng.random_range(0.0..TAU),
            ..base
        }
    }
}

struct Limbs {
    hip: [f64; 2],
    knee: [f64; 2],
    arm_down: f64,
    arm_swing: [f64; 2],
    elbow: [f64; 2],
    spine_lean: f64,
    spine_twist: f64,
    pelvis_yaw: f64,
}

impl Limbs {
    fn rest() -> Self {
        Limbs {
            hip: [0.0; 2],
            knee: [0.0; 2],
            arm_down: 0.0,
            arm_swing: [0.0; 2],
            elbow: [0.0; 2],
            spine_lean: 0.0,
            spine_twist: 0.0,
            pelvis_yaw: 0.0,
        }
    }

    fn pose(&self, heading: f64) -> [Rot3; NUM_JOINTS] {
        let mut p = [Rot3::identity(); NUM_JOINTS];
        p[PELVIS] = Rot3::about_y(heading + self.pelvis_yaw);
        // legs hang along −y; +x rotation swings them forward (−z)
        for (side, (hip, knee, ankle)) in [(LEFT_HIP, LEFT_KNEE, 7), (RIGHT_HIP, RIGHT_KNEE, 8)].into_iter().enumerate() {
            p[hip] = Rot3::about_x(self.hip[side]);
            p[knee] = Rot3::about_x(-self.knee[side]);
            p[ankle] = Rot3::about_x(self.knee[side] - self.hip[side]);
        }
        p[3] = Rot3::about_x(-self.spine_lean) * Rot3::about_y(self.spine_twist);
        // arms point along ∓x in the rest pose; lower them, then swing forward
        p[LEFT_SHOULDER] = Rot3::about_x(self.arm_swing[0]) * Rot3::about_z(self.arm_down);
        p[RIGHT_SHOULDER] = Rot3::about_x(self.arm_swing[1]) * Rot3::about_z(-self.arm_down);
        p[LEFT_ELBOW] = Rot3::about_y(-self.elbow[0]);
        p[RIGHT_ELBOW] = Rot3::about_y(self.elbow[1]);
        p
    }
}

fn raised_cosine(x: f64) -> f64 {
    0.5 * (1.0 - x.cos())
}

fn limbs_at(params: &ClipParams, t: f64) -> Limbs {
    let a = params.amplitude;
    let phi = TAU * params.cadence * t + params.phase;
    let mut l = Limbs::rest();
    match params.kind {
        ClipKind::Walk | ClipKind::StairClimb => {
            let stairs = params.kind == ClipKind::StairClimb;
            let (swing, offset, knee_amp) = if stairs { (0.5, 0.35, 0.9) } else { (0.45, 0.05, 0.55) };
            for side in 0..2 {
                let ph = phi + side as f64 * PI;
                l.hip[side] = offset + a * swing * ph.sin();
                l.knee[side] = a * (0.1 + knee_amp * ph.cos().max(0.0).powi(2));
            }
            l.arm_down = 1.25;
            l.arm_swing = [-0.35 * a * phi.sin(), 0.35 * a * phi.sin()];
            l.elbow = [0.25 + 0.1 * phi.sin(), 0.25 - 0.1 * phi.sin()];
            l.spine_twist = 0.08 * a * phi.sin();
            l.spine_lean = if stairs { 0.15 } else { 0.03 };
            l.pelvis_yaw = 0.05 * a * phi.sin();
        }
        ClipKind::Squat => {
            let s = raised_cosine(phi);
            l.hip = [1.5 * a * s; 2];
            l.knee = [2.0 * a * s; 2];
            l.spine_lean = 0.4 * a * s;
            l.arm_down = 1.25 + (FRAC_PI_2 - 1.25) * s;
            l.arm_swing = [1.4 * s; 2];
            l.elbow = [0.1; 2];
        }
        ClipKind::LegLift => {
            let s = raised_cosine(phi);
            l.hip[1] = 1.4 * a * s;
            l.knee[1] = 1.2 * a * s;
            l.arm_down = 1.25;
            l.elbow = [0.2; 2];
        }
        ClipKind::TPoseHold => {
            l.pelvis_yaw = 0.03 * a * phi.sin();
            l.spine_twist = 0.02 * a * phi.sin();
        }
    }
    l
}

/// Generates a clip at `params.fps`. Root heights keep the lowest foot on the
/// ground (plus the accumulated rise for stairs); the leg lift and T-pose hold
/// keep the pelvis fixed.
pub fn generate(params: &ClipParams, skel: &Skeleton) -> MotionClip {
    let n = ((params.duration * params.fps).round() as usize).max(3);
    let forward = Rot3::about_y(params.heading) * Vec3::new(0.0, 0.0, -1.0);
    let fixed_root = matches!(params.kind, ClipKind::LegLift | ClipKind::TPoseHold);
    let rest_floor = -fk(&limbs_at(params, 0.0).pose(params.heading), skel).lowest_foot();

    let frames = (0..n)
        .map(|i| {
            let t = i as f64 / params.fps;
            let pose = limbs_at(params, t).pose(params.heading);
            let y = if fixed_root {
                rest_floor
            } else {
                let rise = if params.kind == ClipKind::StairClimb {
                    // two steps per gait cycle
                    params.step_height * 2.0 * params.cadence * t
                } else {
                    0.0
                };
                rise - fk(&pose, skel).lowest_foot()
            };
            let xz = forward * (params.speed * t);
            ClipFrame { pose, root: Vec3::new(xz.x, y, xz.z) }
        })
        .collect();
    MotionClip { fps: params.fps, frames, subject: params.kind.name().to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_kind_produces_valid_rotations() {
        let skel = Skeleton::default();
        for kind in ClipKind::ALL {
            let clip = generate(&ClipParams::randomized(kind, 3.0, 11), &skel);
            assert_eq!(clip.frames.len(), 90);
            for f in &clip.frames {
                assert!(f.pose.iter().all(|r| r.is_valid()));
                assert!(f.root.iter().all(|v| v.is_finite()));
            }
            assert_eq!(ClipKind::from_name(kind.name()), Some(kind));
        }
    }

    #[test]
    fn feet_stay_on_the_ground() {
        let skel = Skeleton::default();
        let clip = generate(&ClipParams::new(ClipKind::Walk), &skel);
        for f in &clip.frames {
            let floor = f.root.y + fk(&f.pose, &skel).lowest_foot();
            assert!(floor.abs() < 1e-12);
        }
    }

    #[test]
    fn walk_moves_along_heading() {
        let skel = Skeleton::default();
        let p = ClipParams { heading: FRAC_PI_2, ..ClipParams::new(ClipKind::Walk) };
        let clip = generate(&p, &skel);
        let d = clip.frames.last().unwrap().root - clip.frames[0].root;
        // heading π/2 turns −z into −x
        assert!(d.x < -10.0 && d.z.abs() < 1e-9);
    }

    #[test]
    fn stairs_rise_and_leg_lift_keeps_root() {
        let skel = Skeleton::default();
        let stairs = generate(&ClipParams::new(ClipKind::StairClimb), &skel);
        let rise = stairs.frames.last().unwrap().root.y - stairs.frames[0].root.y;
        assert!(rise > 1.5, "{rise}");
        let lift = generate(&ClipParams::new(ClipKind::LegLift), &skel);
        assert!(lift.frames.iter().all(|f| f.root == lift.frames[0].root));
    }
}
