//! Raw device streams from synthetic motion: device-frame accelerations,
//! device-world orientations with a heading offset and mounting
//! misalignment, and barometer pressures with a per-device offset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::SynthFrameSet;
use crate::calibration::{CalibLabel, CalibSampleSet, SensorFrame};
use crate::kinematics::{fk, Skeleton, LEFT_WRIST, NUM_JOINTS, POCKET_DEVICE_BONE, WRIST_DEVICE_BONE};
use crate::rotmath::{exp_so3, Rot3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceTruth {
    /// Device frame to bone frame.
    pub r_offset: Rot3,
    /// Added to the ideal pressure, hPa.
    pub pressure_offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionTruth {
    pub wrist: DeviceTruth,
    pub pocket: DeviceTruth,
    /// Device world to engine world.
    pub world_yaw: Rot3,
    /// True meters per hPa.
    pub scale: f64,
    /// Pressure at absolute height 0, hPa.
    pub ground_pressure: f64,
    /// Absolute height of the floor the session starts on, meters.
    pub floor_height: f64,
    /// Height-equivalent pressure noise, meters.
    pub height_noise_std: f64,
    pub orientation_noise_deg: f64,
    pub acc_noise_std: f64,
}

impl SessionTruth {
    /// Perfectly mounted, noiseless devices in the engine world.
    pub fn ideal() -> Self {
        let dev = DeviceTruth { r_offset: Rot3::identity(), pressure_offset: 0.0 };
        SessionTruth {
            wrist: dev,
            pocket: dev,
            world_yaw: Rot3::identity(),
            scale: 8.43,
            ground_pressure: 1005.0,
            floor_height: 0.0,
            height_noise_std: 0.0,
            orientation_noise_deg: 0.0,
            acc_noise_std: 0.0,
        }
    }

    /// Random heading, pressure offsets (±0.2 hPa), scale (7.5–9.5 m/hPa) and
    /// mounting: the watch rolled by any angle about the forearm, the phone
    /// misaligned by up to ~40° about any axis. Noise levels are zero.
    pub fn randomized(seed: u64, skel: &Skeleton) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let forearm = skel.offsets[LEFT_WRIST].normalize();
        let roll = exp_so3(&(forearm * rng.random_range(-3.1..3.1)));
        let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let tilt = exp_so3(&(axis.normalize() * rng.random_range(0.0..0.7)));
        let wrist = DeviceTruth { r_offset: roll, pressure_offset: rng.random_range(-0.2..0.2) };
        let pocket = DeviceTruth { r_offset: tilt, pressure_offset: rng.random_range(-0.2..0.2) };
        SessionTruth {
            wrist,
            pocket,
            world_yaw: Rot3::about_y(rng.random_range(-3.1..3.1)),
            scale: rng.random_range(7.5..9.5),
            ground_pressure: rng.random_range(990.0..1020.0),
            floor_height: rng.random_range(0.0..20.0),
            ..SessionTruth::ideal()
        }
    }

    pub fn with_noise(self, height_std: f64, orientation_deg: f64, acc_std: f64) -> Self {
        SessionTruth { height_noise_std: height_std, orientation_noise_deg: orientation_deg, acc_noise_std: acc_std, ..self }
    }
}

/// Engine-world measurements of one device at one instant.
#[derive(Debug, Clone, Copy)]
pub struct DeviceState {
    pub bone: Rot3,
    pub acc_world: Vec3,
    /// Absolute height, meters.
    pub height: f64,
}

pub struct SensorSimulator {
    truth: SessionTruth,
    rng: ChaCha8Rng,
    unit: Normal<f64>,
}

impl SensorSimulator {
    pub fn new(truth: SessionTruth, seed: u64) -> Self {
        SensorSimulator { truth, rng: ChaCha8Rng::seed_from_u64(seed), unit: Normal::new(0.0, 1.0).expect("unit normal") }
    }

    pub fn truth(&self) -> &SessionTruth {
        &self.truth
    }

    fn gauss3(&mut self) -> Vec3 {
        Vec3::new(self.unit.sample(&mut self.rng), self.unit.sample(&mut self.rng), self.unit.sample(&mut self.rng))
    }

    fn device(&mut self, dev: DeviceTruth, s: &DeviceState, t: f64) -> SensorFrame {
        let tr = self.truth;
        // world_yaw · R_device · r_offset = R_bone
        let orient = tr.world_yaw.transpose() * s.bone * dev.r_offset.transpose();
        let acc = orient.transpose() * (tr.world_yaw.transpose() * s.acc_world) + self.gauss3() * tr.acc_noise_std;
        let noisy_orient = orient * exp_so3(&(self.gauss3() * tr.orientation_noise_deg.to_radians()));
        let h = s.height + self.unit.sample(&mut self.rng) * tr.height_noise_std;
        SensorFrame { t, acc, orient: noisy_orient, pressure: tr.ground_pressure - h / tr.scale + dev.pressure_offset }
    }

    /// One (wrist, pocket) sample pair.
    pub fn sample(&mut self, t: f64, wrist: &DeviceState, pocket: &DeviceState) -> (SensorFrame, SensorFrame) {
        let (w, p) = (self.truth.wrist, self.truth.pocket);
        (self.device(w, wrist, t), self.device(p, pocket, t))
    }

    /// Device streams for a synthesized frame set (whose heights are taken
    /// relative to `floor_height`).
    pub fn stream(&mut self, set: &SynthFrameSet, t0: f64) -> Vec<(SensorFrame, SensorFrame)> {
        let floor = self.truth.floor_height;
        set.frames
            .iter()
            .map(|f| {
                let r = &f.raw;
                let w = DeviceState { bone: r.r_lw, acc_world: r.a_lw, height: floor + r.h_lw };
                let p = DeviceState { bone: r.r_rp, acc_world: r.a_rp, height: floor + r.h_rp };
                self.sample(t0 + r.t, &w, &p)
            })
            .collect()
    }

    /// Both devices held still side by side at `height` above the floor.
    pub fn same_height_window(&mut self, height: f64, n: usize, t0: f64) -> CalibSampleSet {
        let h = self.truth.floor_height + height;
        let w = DeviceState { bone: Rot3::about_x(-1.2), acc_world: Vec3::zeros(), height: h };
        let p = DeviceState { bone: Rot3::about_z(0.4), acc_world: Vec3::zeros(), height: h };
        let frames = (0..n).map(|i| self.sample(t0 + i as f64 / 30.0, &w, &p)).collect();
        CalibSampleSet { label: CalibLabel::SameHeight, frames }
    }

    /// Subject standing still in the T-pose on the floor.
    pub fn tpose_window(&mut self, skel: &Skeleton, n: usize, t0: f64) -> CalibSampleSet {
        let out = fk(&[Rot3::identity(); NUM_JOINTS], skel);
        let lift = self.truth.floor_height - out.lowest_foot();
        let w = DeviceState { bone: out.global[WRIST_DEVICE_BONE], acc_world: Vec3::zeros(), height: lift + out.wrist_site.y };
        let p = DeviceState { bone: out.global[POCKET_DEVICE_BONE], acc_world: Vec3::zeros(), height: lift + out.thigh_site.y };
        let frames = (0..n).map(|i| self.sample(t0 + i as f64 / 30.0, &w, &p)).collect();
        CalibSampleSet { label: CalibLabel::TPose, frames }
    }
}
