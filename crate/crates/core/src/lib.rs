//! Real-time full-body motion tracking from a wrist IMU, a thigh-pocket IMU
//! and the barometers of both devices.

pub mod baro;
pub mod calibration;
mod binio;
pub mod features;
pub mod kinematics;
pub mod metrics;
pub mod neural;
pub mod pipeline;
pub mod rotmath;
pub mod synth;
