//! Synthetic sensor data from ground-truth motion: bone orientations and
//! finite-difference accelerations at the two device sites, device heights
//! above the first-frame ground, and Gaussian height noise.

mod clip_format;
mod dataset;
pub mod procedural;
pub mod sensors;

pub use clip_format::{parse_clip, read_clip, write_clip, ClipFormatError};
pub use dataset::{read_dataset, write_dataset, DatasetError, DATASET_MAGIC, DATASET_VERSION};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::features::RawFrame;
use crate::kinematics::{fk, Skeleton, Vec2, NUM_JOINTS, POCKET_DEVICE_BONE, WRIST_DEVICE_BONE};
use crate::rotmath::{exp_so3, log_so3, Rot3, Vec3};

pub const ENGINE_FPS: f64 = 30.0;
/// Height noise injected into synthetic barometric heights, meters.
pub const HEIGHT_NOISE_STD: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("clip too short: {got} frames, need at least {need}")]
    TooShort { got: usize, need: usize },
    #[error("invalid frame rate {0}")]
    BadFrameRate(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipFrame {
    /// Pelvis world orientation followed by parent-relative rotations.
    pub pose: [Rot3; NUM_JOINTS],
    /// Pelvis world position.
    pub root: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionClip {
    pub fps: f64,
    pub frames: Vec<ClipFrame>,
    pub subject: String,
}

impl MotionClip {
    pub fn dt(&self) -> f64 {
        1.0 / self.fps
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Uniform resampling: linear interpolation of the root, geodesic
/// interpolation of every joint rotation.
pub fn resample(clip: &MotionClip, target_fps: f64) -> Result<MotionClip, SynthError> {
    if !(clip.fps >= 1.0) {
        return Err(SynthError::BadFrameRate(clip.fps));
    }
    if !(target_fps > 0.0) {
        return Err(SynthError::BadFrameRate(target_fps));
    }
    let n = clip.frames.len();
    if n == 0 {
        return Err(SynthError::TooShort { got: 0, need: 1 });
    }
    let last = (n - 1) as f64;
    let mut frames = Vec::new();
    for k in 0.. {
        let mut s = k as f64 * clip.fps / target_fps;
        if s > last + 1e-9 {
            break;
        }
        if (s - s.round()).abs() < 1e-9 {
            s = s.round();
        }
        let i = (s.floor() as usize).min(n - 1);
        let alpha = s - i as f64;
        if alpha == 0.0 || i + 1 >= n {
            frames.push(clip.frames[i].clone());
            continue;
        }
        let (a, b) = (&clip.frames[i], &clip.frames[i + 1]);
        let mut pose = a.pose;
        for j in 0..NUM_JOINTS {
            pose[j] = a.pose[j] * exp_so3(&(log_so3(&(a.pose[j].transpose() * b.pose[j])) * alpha));
        }
        frames.push(ClipFrame { pose, root: a.root + (b.root - a.root) * alpha });
    }
    Ok(MotionClip { fps: target_fps, frames, subject: clip.subject.clone() })
}

/// Per-frame synthetic IMU readings at the two device sites (world frame,
/// gravity-free accelerations, bone orientations).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub a_lw: Vec3,
    pub a_rp: Vec3,
    pub r_lw: Rot3,
    pub r_rp: Rot3,
}

/// World positions of the wrist and thigh sites per frame.
pub fn site_trajectories(clip: &MotionClip, skel: &Skeleton) -> Vec<(Vec3, Vec3)> {
    clip.frames
        .iter()
        .map(|f| {
            let out = fk(&f.pose, skel);
            (f.root + out.wrist_site, f.root + out.thigh_site)
        })
        .collect()
}

fn moving_average5(p: &[Vec3]) -> Vec<Vec3> {
    let n = p.len() as isize;
    (0..n)
        .map(|i| {
            let mut acc = Vec3::zeros();
            for d in -2..=2 {
                acc += p[(i + d).clamp(0, n - 1) as usize];
            }
            acc / 5.0
        })
        .collect()
}

fn second_difference(p: &[Vec3], dt: f64) -> Vec<Vec3> {
    let n = p.len();
    let mut a: Vec<Vec3> = vec![Vec3::zeros(); n];
    for t in 1..n - 1 {
        a[t] = (p[t - 1] - p[t] * 2.0 + p[t + 1]) / (dt * dt);
    }
    a[0] = a[1];
    a[n - 1] = a[n - 2];
    a
}

/// Central second differences of the site positions; endpoint accelerations
/// replicate their neighbours. `smooth` applies a 5-frame moving average to
/// positions first.
pub fn synth_imu(clip: &MotionClip, skel: &Skeleton, smooth: bool) -> Result<Vec<ImuSample>, SynthError> {
    if clip.frames.len() < 3 {
        return Err(SynthError::TooShort { got: clip.frames.len(), need: 3 });
    }
    let sites = site_trajectories(clip, skel);
    let (mut lw, mut rp): (Vec<Vec3>, Vec<Vec3>) = sites.into_iter().unzip();
    if smooth {
        lw = moving_average5(&lw);
        rp = moving_average5(&rp);
    }
    let dt = clip.dt();
    let a_lw = second_difference(&lw, dt);
    let a_rp = second_difference(&rp, dt);
    Ok(clip
        .frames
        .iter()
        .enumerate()
        .map(|(t, f)| {
            let g = fk(&f.pose, skel).global;
            ImuSample {
                a_lw: a_lw[t],
                a_rp: a_rp[t],
                r_lw: g[WRIST_DEVICE_BONE],
                r_rp: g[POCKET_DEVICE_BONE],
            }
        })
        .collect())
}

/// Absolute height of the lowest foot site in the first frame.
pub fn first_frame_ground(clip: &MotionClip, skel: &Skeleton) -> f64 {
    let f0 = &clip.frames[0];
    f0.root.y + fk(&f0.pose, skel).lowest_foot()
}

/// Wrist and thigh site heights above the first-frame ground, with i.i.d.
/// Gaussian noise (`noise_std` meters) per frame and device.
pub fn synth_heights(clip: &MotionClip, skel: &Skeleton, noise_std: f64, seed: u64) -> Vec<(f64, f64)> {
    if clip.frames.is_empty() {
        return Vec::new();
    }
    let ground = first_frame_ground(clip, skel);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_std.max(0.0)).expect("finite std");
    site_trajectories(clip, skel)
        .into_iter()
        .map(|(lw, rp)| {
            let n_lw = if noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            let n_rp = if noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            (lw.y - ground + n_lw, rp.y - ground + n_rp)
        })
        .collect()
}

/// Backward differences of the root x/z; the first frame repeats the second.
pub fn ground_truth_velocity(clip: &MotionClip) -> Result<Vec<Vec2>, SynthError> {
    let n = clip.frames.len();
    if n < 2 {
        return Err(SynthError::TooShort { got: n, need: 2 });
    }
    let fps = clip.fps;
    let mut v: Vec<Vec2> = clip
        .frames
        .windows(2)
        .map(|w| {
            let d = w[1].root - w[0].root;
            Vec2::new(d.x * fps, d.z * fps)
        })
        .collect();
    v.insert(0, v[0]);
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthFrame {
    pub raw: RawFrame,
    pub pose: [Rot3; NUM_JOINTS],
    pub root: Vec3,
    pub v_xz: Vec2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthFrameSet {
    pub tag: String,
    pub fps: f64,
    pub frames: Vec<SynthFrame>,
}

#[derive(Debug, Clone, Copy)]
pub struct SynthOptions {
    pub height_noise_std: f64,
    pub smooth_positions: bool,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions { height_noise_std: HEIGHT_NOISE_STD, smooth_positions: false, seed: 0 }
    }
}

/// Resamples to 30 Hz and synthesizes every per-frame quantity.
pub fn synthesize(clip: &MotionClip, skel: &Skeleton, opts: &SynthOptions) -> Result<SynthFrameSet, SynthError> {
    let clip = resample(clip, ENGINE_FPS)?;
    let imu = synth_imu(&clip, skel, opts.smooth_positions)?;
    let heights = synth_heights(&clip, skel, opts.height_noise_std, opts.seed);
    let vel = ground_truth_velocity(&clip)?;
    let dt = clip.dt();
    let frames = (0..clip.frames.len())
        .map(|t| SynthFrame {
            raw: RawFrame {
                a_lw: imu[t].a_lw,
                a_rp: imu[t].a_rp,
                r_lw: imu[t].r_lw,
                r_rp: imu[t].r_rp,
                h_lw: heights[t].0,
                h_rp: heights[t].1,
                t: t as f64 * dt,
            },
            pose: clip.frames[t].pose,
            root: clip.frames[t].root,
            v_xz: vel[t],
        })
        .collect();
    Ok(SynthFrameSet { tag: clip.subject.clone(), fps: clip.fps, frames })
}
