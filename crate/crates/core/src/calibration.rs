//! Session calibration: barometer bias from a same-height window, barometer
//! scale from a T-pose with a known wrist–pocket height gap, and device to
//! bone alignment with a common heading.
//!
//! Conventions: the pocket device is the barometric reference (bias 0). The
//! engine world is y-up and the subject faces −z during the T-pose. Device
//! orientations arrive in a gravity-aligned, y-up device world whose heading
//! is arbitrary; `world_yaw` rotates it into the engine world.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baro::{pressure_to_height, BaroModel, DEFAULT_SCALE};
use crate::kinematics::{
    fk, PoseState, Skeleton, LEFT_WRIST, NUM_JOINTS, POCKET_DEVICE_BONE, WRIST_DEVICE_BONE,
};
use crate::rotmath::{exp_so3, log_so3, yaw_of, Rot3, Vec3};

/// Wrist-above-pocket height in the T-pose for a mean body shape, meters.
pub const TPOSE_HEIGHT_GAP: f64 = 0.66;
pub const MIN_CALIB_FRAMES: usize = 60;
pub const MAX_PAIRING_SKEW: f64 = 0.05;
pub const STATIONARY_ACC_STD: f64 = 0.3;
pub const MIN_PRESSURE_SPAN_HPA: f64 = 0.005;
pub const MAX_ORIENTATION_SPREAD_DEG: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibError {
    #[error("expected a {expected:?} window, got {got:?}")]
    WrongLabel { expected: CalibLabel, got: CalibLabel },
    #[error("calibration window has {0} frame pairs, need at least {MIN_CALIB_FRAMES}")]
    TooFewFrames(usize),
    #[error("frame pair {index} is {skew:.3} s apart")]
    Unpaired { index: usize, skew: f64 },
    #[error("{device} device is moving (acceleration std {std:.3} m/s²)")]
    NotStationary { device: &'static str, std: f64 },
    #[error("height span degenerate: pressure difference {dp:.5} hPa, known gap {known_dh} m")]
    DegenerateSpan { dp: f64, known_dh: f64 },
    #[error("{device} orientation varies by {spread_deg:.2}° during the window")]
    ExcessiveMotion { device: &'static str, spread_deg: f64 },
}

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("calibration profile: {0}")]
    Parse(String),
    #[error("calibration profile: invalid {0}")]
    Invalid(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One timestamped sample from one device, in device terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorFrame {
    pub t: f64,
    /// Device-frame acceleration, m/s².
    pub acc: Vec3,
    /// Device to device-world rotation.
    pub orient: Rot3,
    /// hPa.
    pub pressure: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibLabel {
    SameHeight,
    TPose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibSampleSet {
    pub label: CalibLabel,
    /// (wrist, pocket) pairs.
    pub frames: Vec<(SensorFrame, SensorFrame)>,
}

impl CalibSampleSet {
    fn check(&self, label: CalibLabel) -> Result<(), CalibError> {
        if self.label != label {
            return Err(CalibError::WrongLabel { expected: label, got: self.label });
        }
        if self.frames.len() < MIN_CALIB_FRAMES {
            return Err(CalibError::TooFewFrames(self.frames.len()));
        }
        for (index, (w, p)) in self.frames.iter().enumerate() {
            let skew = (w.t - p.t).abs();
            if !(skew <= MAX_PAIRING_SKEW) {
                return Err(CalibError::Unpaired { index, skew });
            }
        }
        Ok(())
    }

    fn check_stationary(&self) -> Result<(), CalibError> {
        for (device, pick) in [("wrist", 0usize), ("pocket", 1)] {
            let acc: Vec<Vec3> = self.frames.iter().map(|f| if pick == 0 { f.0.acc } else { f.1.acc }).collect();
            let std = vector_std(&acc);
            if !(std < STATIONARY_ACC_STD) {
                return Err(CalibError::NotStationary { device, std });
            }
        }
        Ok(())
    }

    fn mean_pressure_gap(&self) -> f64 {
        // pocket minus wrist
        self.frames.iter().map(|(w, p)| p.pressure - w.pressure).sum::<f64>() / self.frames.len() as f64
    }
}

/// `sqrt(Σ per-axis variance)`.
fn vector_std(v: &[Vec3]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().fold(Vec3::zeros(), |a, b| a + b) / n;
    (v.iter().map(|x| (x - mean).norm_squared()).sum::<f64>() / n).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasEstimate {
    /// Meters added to the wrist height (at the scale used for estimation).
    pub wrist_bias: f64,
    /// Always 0: the pocket device is the reference.
    pub pocket_bias: f64,
    /// Wrist minus pocket pressure at equal height, hPa.
    pub pressure_offset: f64,
    pub scale: f64,
}

/// Wrist bias that makes both devices report the same mean height over a
/// same-height window.
pub fn estimate_bias(s: &CalibSampleSet, scale: f64) -> Result<BiasEstimate, CalibError> {
    s.check(CalibLabel::SameHeight)?;
    s.check_stationary()?;
    let model = BaroModel { scale, bias: 0.0, reference_pressure: s.frames[0].1.pressure };
    let n = s.frames.len() as f64;
    let wrist_bias = s
        .frames
        .iter()
        .map(|(w, p)| pressure_to_height(p.pressure, &model) - pressure_to_height(w.pressure, &model))
        .sum::<f64>()
        / n;
    Ok(BiasEstimate { wrist_bias, pocket_bias: 0.0, pressure_offset: -s.mean_pressure_gap(), scale })
}

/// Pressure-to-height scale such that the bias-corrected mean wrist−pocket
/// height gap over the T-pose window equals `known_dh`.
pub fn estimate_scale(s: &CalibSampleSet, bias: &BiasEstimate, known_dh: f64) -> Result<f64, CalibError> {
    s.check(CalibLabel::TPose)?;
    s.check_stationary()?;
    let dp = s.mean_pressure_gap() + bias.pressure_offset;
    if !(dp >= MIN_PRESSURE_SPAN_HPA) || !(known_dh > 0.0) {
        return Err(CalibError::DegenerateSpan { dp, known_dh });
    }
    Ok(known_dh / dp)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignConfig {
    /// Direction along the forearm toward the hand, in the wrist device
    /// frame. Only its heading in the T-pose is used.
    pub wrist_forearm_axis: Vec3,
}

impl AlignConfig {
    /// Assumes the nominal watch mount: device axes along the forearm bone
    /// axes, any roll about the forearm allowed.
    pub fn nominal(skel: &Skeleton) -> Self {
        AlignConfig { wrist_forearm_axis: skel.offsets[LEFT_WRIST].normalize() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    pub wrist_offset: Rot3,
    pub pocket_offset: Rot3,
    pub world_yaw: Rot3,
}

fn mean_orientation(rs: &[Rot3]) -> Rot3 {
    let r0 = rs[0];
    let mean_tangent = rs.iter().map(|r| log_so3(&(r0.transpose() * *r))).fold(Vec3::zeros(), |a, b| a + b)
        / rs.len() as f64;
    r0 * exp_so3(&mean_tangent)
}

fn steady_orientation(rs: &[Rot3], device: &'static str) -> Result<Rot3, CalibError> {
    let mean = mean_orientation(rs);
    let spread = rs.iter().map(|r| mean.angle_to(r)).fold(0.0, f64::max).to_degrees();
    if spread > MAX_ORIENTATION_SPREAD_DEG {
        return Err(CalibError::ExcessiveMotion { device, spread_deg: spread });
    }
    Ok(mean)
}

/// Device-to-bone offsets and world heading from a T-pose window.
///
/// The heading comes from the horizontal direction of the wrist device's
/// forearm axis, which the T-pose fixes regardless of how the watch is rolled
/// around the wrist. Offsets then satisfy
/// `world_yaw · R_device · offset = R_bone(T-pose)` for both devices.
pub fn align_frames(s: &CalibSampleSet, skel: &Skeleton, cfg: &AlignConfig) -> Result<Alignment, CalibError> {
    s.check(CalibLabel::TPose)?;
    let wrist: Vec<Rot3> = s.frames.iter().map(|f| f.0.orient).collect();
    let pocket: Vec<Rot3> = s.frames.iter().map(|f| f.1.orient).collect();
    let r_wrist = steady_orientation(&wrist, "wrist")?;
    let r_pocket = steady_orientation(&pocket, "pocket")?;

    let tpose = fk(&[Rot3::identity(); NUM_JOINTS], skel);
    let bone_wrist = tpose.global[WRIST_DEVICE_BONE];
    let bone_pocket = tpose.global[POCKET_DEVICE_BONE];

    let canonical = bone_wrist * skel.offsets[LEFT_WRIST];
    let measured = r_wrist * cfg.wrist_forearm_axis;
    let world_yaw = Rot3::about_y(yaw_of(&canonical) - yaw_of(&measured));

    Ok(Alignment {
        wrist_offset: (world_yaw * r_wrist).transpose() * bone_wrist,
        pocket_offset: (world_yaw * r_pocket).transpose() * bone_pocket,
        world_yaw,
    })
}

/// Absolute ground height from the frame-0 pose and the absolute pocket
/// height: the lowest foot site of that pose.
pub fn set_ground(first_pose: &PoseState, pocket_height: f64, skel: &Skeleton) -> f64 {
    let out = fk(&first_pose.theta, skel);
    pocket_height - out.thigh_site.y + out.lowest_foot()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceCalib {
    pub baro: BaroModel,
    /// Device frame to bone frame.
    pub r_offset: Rot3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibProfile {
    pub wrist: DeviceCalib,
    pub pocket: DeviceCalib,
    pub world_yaw: Rot3,
    pub ground_height: f64,
}

impl Default for CalibProfile {
    fn default() -> Self {
        let dev = DeviceCalib { baro: BaroModel::default(), r_offset: Rot3::identity() };
        CalibProfile { wrist: dev, pocket: dev, world_yaw: Rot3::identity(), ground_height: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibConfig {
    pub known_dh: f64,
    pub initial_scale: f64,
    pub align: AlignConfig,
}

impl CalibConfig {
    pub fn new(skel: &Skeleton) -> Self {
        CalibConfig { known_dh: TPOSE_HEIGHT_GAP, initial_scale: DEFAULT_SCALE, align: AlignConfig::nominal(skel) }
    }
}

/// Full two-window calibration. Heights are referenced to the pocket
/// pressure of the same-height window; the ground is the T-pose lowest foot.
pub fn calibrate(
    same_height: &CalibSampleSet,
    tpose: &CalibSampleSet,
    cfg: &CalibConfig,
    skel: &Skeleton,
) -> Result<CalibProfile, CalibError> {
    let bias = estimate_bias(same_height, cfg.initial_scale)?;
    let scale = estimate_scale(tpose, &bias, cfg.known_dh)?;
    let align = align_frames(tpose, skel, &cfg.align)?;
    let n = same_height.frames.len() as f64;
    let reference_pressure = same_height.frames.iter().map(|f| f.1.pressure).sum::<f64>() / n;
    let pocket = BaroModel { scale, bias: 0.0, reference_pressure };
    let wrist = BaroModel { scale, bias: scale * bias.pressure_offset, reference_pressure };
    let tpose_pocket_height =
        tpose.frames.iter().map(|f| pressure_to_height(f.1.pressure, &pocket)).sum::<f64>() / tpose.frames.len() as f64;
    Ok(CalibProfile {
        wrist: DeviceCalib { baro: wrist, r_offset: align.wrist_offset },
        pocket: DeviceCalib { baro: pocket, r_offset: align.pocket_offset },
        world_yaw: align.world_yaw,
        ground_height: set_ground(&PoseState::tpose(skel), tpose_pocket_height, skel),
    })
}

#[derive(Serialize, Deserialize)]
struct DeviceRecord {
    baro_scale: f64,
    baro_bias: f64,
    reference_pressure: f64,
    r_offset: [f64; 9],
}

#[derive(Serialize, Deserialize)]
struct ProfileRecord {
    format: String,
    ground_height: f64,
    world_yaw: [f64; 9],
    wrist: DeviceRecord,
    pocket: DeviceRecord,
}

const PROFILE_FORMAT: &str = "calib-profile-v1";

impl DeviceRecord {
    fn from_calib(c: &DeviceCalib) -> Self {
        DeviceRecord {
            baro_scale: c.baro.scale,
            baro_bias: c.baro.bias,
            reference_pressure: c.baro.reference_pressure,
            r_offset: c.r_offset.to_col_major(),
        }
    }

    fn into_calib(self) -> Result<DeviceCalib, ProfileError> {
        let baro = BaroModel { scale: self.baro_scale, bias: self.baro_bias, reference_pressure: self.reference_pressure };
        if !baro.is_valid() {
            return Err(ProfileError::Invalid("barometer model"));
        }
        let r_offset = Rot3::from_col_major(&self.r_offset).map_err(|_| ProfileError::Invalid("r_offset"))?;
        Ok(DeviceCalib { baro, r_offset })
    }
}

impl CalibProfile {
    /// Key-value text (TOML) with fixed field names; rotations column-major.
    pub fn to_text(&self) -> String {
        let rec = ProfileRecord {
            format: PROFILE_FORMAT.to_string(),
            ground_height: self.ground_height,
            world_yaw: self.world_yaw.to_col_major(),
            wrist: DeviceRecord::from_calib(&self.wrist),
            pocket: DeviceRecord::from_calib(&self.pocket),
        };
        toml::to_string(&rec).expect("profile serializes")
    }

    pub fn from_text(text: &str) -> Result<Self, ProfileError> {
        let rec: ProfileRecord = toml::from_str(text).map_err(|e| ProfileError::Parse(e.to_string()))?;
        if rec.format != PROFILE_FORMAT {
            return Err(ProfileError::Parse(format!("unknown format `{}`", rec.format)));
        }
        if !rec.ground_height.is_finite() {
            return Err(ProfileError::Invalid("ground_height"));
        }
        Ok(CalibProfile {
            world_yaw: Rot3::from_col_major(&rec.world_yaw).map_err(|_| ProfileError::Invalid("world_yaw"))?,
            ground_height: rec.ground_height,
            wrist: rec.wrist.into_calib()?,
            pocket: rec.pocket.into_calib()?,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ProfileError> {
        CalibProfile::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ProfileError> {
        Ok(std::fs::write(path, self.to_text())?)
    }
}
