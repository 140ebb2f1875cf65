//! Per-tick compute stage: calibration transforms, height filters, feature
//! vectors, both estimators and the translation assembly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ingest::AlignedTick;
use super::protocol::DeviceId;
use super::PipelineError;
use crate::baro::{BaroSample, FilterParams, HeightFilter};
use crate::calibration::{set_ground, CalibProfile, DeviceCalib};
use crate::features::{build_pose_input, build_trans_input, RawFrame};
use crate::kinematics::{Assembler, MotionState, PoseState, Skeleton, Vec2, NUM_JOINTS};
use crate::neural::{
    read_checkpoint, tpose_encoding, write_checkpoint, Checkpoint, CheckpointError, NetDims, PoseNet, RecurrentState,
    VelocityNet,
};
use crate::rotmath::{decode_rot6d, Rot3, Rot6D, Vec3};

pub const STANDARD_GRAVITY: f64 = 9.80665;
pub const POSE_CHECKPOINT_FILE: &str = "pose.mckp";
pub const VELOCITY_CHECKPOINT_FILE: &str = "velocity.mckp";

/// The two estimators used by a session.
#[derive(Debug, Clone, PartialEq)]
pub struct Models {
    pub pose: PoseNet,
    pub velocity: VelocityNet,
}

impl Models {
    /// Untrained networks; the velocity net is seeded from `seed + 1`.
    pub fn random(dims: NetDims, seed: u64) -> Self {
        Models { pose: PoseNet::new(dims, seed), velocity: VelocityNet::new(dims, seed.wrapping_add(1)) }
    }

    /// Reads `pose.mckp` and `velocity.mckp` from a directory.
    pub fn load_dir(dir: &Path) -> Result<Self, CheckpointError> {
        Ok(Models {
            pose: read_checkpoint(&dir.join(POSE_CHECKPOINT_FILE))?.into_pose()?,
            velocity: read_checkpoint(&dir.join(VELOCITY_CHECKPOINT_FILE))?.into_velocity()?,
        })
    }

    pub fn save_dir(&self, dir: &Path) -> Result<(), CheckpointError> {
        std::fs::create_dir_all(dir)?;
        write_checkpoint(&dir.join(POSE_CHECKPOINT_FILE), &Checkpoint::Pose(self.pose.clone()))?;
        write_checkpoint(&dir.join(VELOCITY_CHECKPOINT_FILE), &Checkpoint::Velocity(self.velocity.clone()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub frame_rate: f64,
    pub filter: FilterParams,
    pub skeleton: Skeleton,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { frame_rate: 30.0, filter: FilterParams::default(), skeleton: Skeleton::default() }
    }
}

/// One output line of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionRecord {
    pub frame: u64,
    /// Seconds since the first tick.
    pub t: f64,
    /// Horizontal root translation (x, z), meters.
    pub t_xz: [f64; 2],
    pub t_y: f64,
    /// Quaternions (w, x, y, z): pelvis in the world frame, every other joint
    /// relative to its parent.
    pub theta: [[f64; 4]; NUM_JOINTS],
    /// Wrist and pocket device starvation flags.
    pub degraded: [bool; 2],
}

impl MotionRecord {
    pub fn from_state(frame: u64, s: &MotionState, degraded: [bool; 2]) -> Self {
        MotionRecord {
            frame,
            t: s.t,
            t_xz: [s.t_xz.x, s.t_xz.y],
            t_y: s.t_y,
            theta: s.pose.theta.map(|r| r.to_quaternion()),
            degraded,
        }
    }

    pub fn pose(&self) -> [Rot3; NUM_JOINTS] {
        self.theta.map(Rot3::from_quaternion)
    }

    pub fn root(&self) -> Vec3 {
        Vec3::new(self.t_xz[0], self.t_y, self.t_xz[1])
    }

    pub fn to_json_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("record serializes");
        s.push('\n');
        s
    }
}

/// World-frame measurements of one device at one tick.
#[derive(Debug, Clone, Copy)]
struct DeviceReading {
    bone: Rot3,
    acc: Vec3,
    height: f64,
}

struct DeviceTrack {
    calib: DeviceCalib,
    filter: HeightFilter,
    last_bone: Rot3,
}

impl DeviceTrack {
    fn new(calib: DeviceCalib, params: FilterParams) -> Self {
        DeviceTrack { calib, filter: HeightFilter::new(calib.baro, params), last_bone: Rot3::identity() }
    }
}

pub struct Engine {
    cfg: EngineConfig,
    world_yaw: Rot3,
    models: Models,
    pose_state: Option<RecurrentState>,
    vel_state: RecurrentState,
    devices: [DeviceTrack; 2],
    ground: Option<f64>,
    prev_raw: Option<RawFrame>,
    prev_theta: [Rot3; NUM_JOINTS],
    assembler: Assembler,
    frames: u64,
    pub degenerate_outputs: u64,
}

impl Engine {
    pub fn new(profile: &CalibProfile, models: Models, cfg: EngineConfig) -> Self {
        let vel_state = models.velocity.start();
        Engine {
            world_yaw: profile.world_yaw,
            pose_state: None,
            vel_state,
            devices: [DeviceTrack::new(profile.wrist, cfg.filter), DeviceTrack::new(profile.pocket, cfg.filter)],
            ground: None,
            prev_raw: None,
            prev_theta: [Rot3::identity(); NUM_JOINTS],
            assembler: Assembler::new(cfg.skeleton.clone(), 1.0 / cfg.frame_rate),
            frames: 0,
            degenerate_outputs: 0,
            models,
            cfg,
        }
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }

    fn reading(&mut self, tick: &AlignedTick, device: DeviceId) -> Result<DeviceReading, PipelineError> {
        let sample = tick.sample(device);
        let frame = sample.packet.to_frame();
        let gravity = self.cfg.filter.subtract_gravity;
        let yaw = self.world_yaw;
        let track = &mut self.devices[device.index()];
        let device_to_world = yaw * frame.orient;
        // degraded streams hold orientation and height with zero acceleration
        let (bone, acc) = if sample.degraded {
            (track.last_bone, Vec3::zeros())
        } else {
            let mut a = device_to_world * frame.acc;
            if gravity {
                a.y -= STANDARD_GRAVITY;
            }
            (device_to_world * track.calib.r_offset, a)
        };
        track.last_bone = bone;
        let height = if sample.fresh && !sample.degraded {
            let s = BaroSample { t: frame.t, pressure: frame.pressure, a_vertical: acc.y };
            track.filter.push(&s).map_err(|e| PipelineError::Frame { frame: self.frames, message: e.to_string() })?.h
        } else {
            track.filter.hold(frame.t).map(|f| f.h).ok_or(PipelineError::Frame {
                frame: self.frames,
                message: format!("{} height unavailable", device.name()),
            })?
        };
        Ok(DeviceReading { bone, acc, height })
    }

    /// Runs the full per-frame pipeline for one tick.
    pub fn step(&mut self, tick: &AlignedTick) -> Result<MotionRecord, PipelineError> {
        let w = self.reading(tick, DeviceId::Wrist)?;
        let p = self.reading(tick, DeviceId::Pocket)?;
        let skel = &self.cfg.skeleton;
        // the session is assumed to start in the T-pose
        let ground = *self.ground.get_or_insert_with(|| set_ground(&PoseState::tpose(skel), p.height, skel));
        let raw = RawFrame {
            a_lw: w.acc,
            a_rp: p.acc,
            r_lw: w.bone,
            r_rp: p.bone,
            h_lw: w.height - ground,
            h_rp: p.height - ground,
            t: self.frames as f64 / self.cfg.frame_rate,
        };
        let prev = self.prev_raw.unwrap_or(raw);
        let dt = 1.0 / self.cfg.frame_rate;
        let x_pose = build_pose_input(&raw, &prev, dt).flatten();
        let x_vel = build_trans_input(&raw).flatten();
        if self.pose_state.is_none() {
            self.pose_state = Some(self.models.pose.start(&tpose_encoding()).expect("T-pose encoding has 144 values"));
        }
        let y = self.models.pose.step(self.pose_state.as_mut().expect("started"), &x_pose);
        let v = self.models.velocity.step(&mut self.vel_state, &x_vel);
        let mut theta = self.prev_theta;
        for (j, r) in theta.iter_mut().enumerate() {
            match decode_rot6d(&Rot6D::from_slice(&y[6 * j..6 * j + 6])) {
                Ok(d) => *r = d,
                Err(_) => self.degenerate_outputs += 1,
            }
        }
        self.prev_theta = theta;
        self.prev_raw = Some(raw);
        let state = self.assembler.push(&theta, &raw.r_rp, Vec2::new(v[0], v[1]), p.height);
        let degraded = tick.samples.map(|s| s.degraded);
        let record = MotionRecord::from_state(self.frames, &state, degraded);
        self.frames += 1;
        Ok(record)
    }
}
