//! Barometric height: linear pressure-to-height conversion and a two-state
//! (height, vertical velocity) Kalman filter driven by world-frame vertical
//! free acceleration.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default pressure lapse near sea level, meters per hPa.
pub const DEFAULT_SCALE: f64 = 8.43;
pub const STANDARD_PRESSURE_HPA: f64 = 1013.25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaroError {
    #[error("timestamp regressed at sample {index}: {prev} -> {curr}")]
    NonMonotonicTime { index: usize, prev: f64, curr: f64 },
}

/// `h = scale·(reference_pressure − p) + bias`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaroModel {
    pub scale: f64,
    pub bias: f64,
    pub reference_pressure: f64,
}

impl Default for BaroModel {
    fn default() -> Self {
        BaroModel { scale: DEFAULT_SCALE, bias: 0.0, reference_pressure: STANDARD_PRESSURE_HPA }
    }
}

impl BaroModel {
    /// Local slope of the standard-atmosphere barometric formula at `p0`.
    pub fn standard_atmosphere_scale(p0: f64) -> f64 {
        // h = 44330.77·(1 − (p/1013.25)^0.190263)
        44330.77 * 0.190263 * (p0 / STANDARD_PRESSURE_HPA).powf(0.190263 - 1.0)
            / STANDARD_PRESSURE_HPA
    }

    pub fn is_valid(&self) -> bool {
        self.scale.is_finite()
            && self.scale != 0.0
            && self.bias.is_finite()
            && self.reference_pressure > 0.0
    }
}

pub fn pressure_to_height(p: f64, model: &BaroModel) -> f64 {
    debug_assert!(p > 0.0, "pressure must be positive");
    model.scale * (model.reference_pressure - p) + model.bias
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterParams {
    /// Acceleration noise variance per step, (m/s²)².
    pub q_accel: f64,
    /// Height measurement noise variance, m².
    pub r_meas: f64,
    pub initial_height_var: f64,
    pub initial_velocity_var: f64,
    /// Nominal step; longer gaps are bridged with several predict steps.
    pub nominal_dt: f64,
    /// Subtract gravity from raw accelerometer readings before use.
    pub subtract_gravity: bool,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            q_accel: 0.5,
            r_meas: 0.0025,
            initial_height_var: 1.0,
            initial_velocity_var: 1.0,
            nominal_dt: 1.0 / 30.0,
            subtract_gravity: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KfState {
    /// (height m, vertical velocity m/s)
    pub x: Vector2<f64>,
    pub p: Matrix2<f64>,
    pub q_accel: f64,
    pub r_meas: f64,
}

impl KfState {
    pub fn new(height: f64, params: &FilterParams) -> Self {
        KfState {
            x: Vector2::new(height, 0.0),
            p: Matrix2::new(params.initial_height_var, 0.0, 0.0, params.initial_velocity_var),
            q_accel: params.q_accel,
            r_meas: params.r_meas,
        }
    }

    pub fn height(&self) -> f64 {
        self.x[0]
    }

    pub fn velocity(&self) -> f64 {
        self.x[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilteredHeight {
    pub h: f64,
    pub source_time: f64,
}

/// Constant-velocity model with the acceleration as control input.
pub fn kf_predict(s: &KfState, a_vertical: f64, dt: f64) -> KfState {
    let f = Matrix2::new(1.0, dt, 0.0, 1.0);
    let b = Vector2::new(0.5 * dt * dt, dt);
    let g = Vector2::new(0.5 * dt * dt, dt);
    let q = g * g.transpose() * s.q_accel;
    let p = f * s.p * f.transpose() + q;
    KfState { x: f * s.x + b * a_vertical, p: symmetrize(p), ..*s }
}

/// Measurement update with `H = [1, 0]` (Joseph form).
pub fn kf_update(s: &KfState, h_meas: f64) -> (KfState, FilteredHeight) {
    let innovation = h_meas - s.x[0];
    let var = s.p[(0, 0)] + s.r_meas;
    let k = Vector2::new(s.p[(0, 0)] / var, s.p[(1, 0)] / var);
    let i_kh = Matrix2::new(1.0 - k[0], 0.0, -k[1], 1.0);
    let p = i_kh * s.p * i_kh.transpose() + k * k.transpose() * s.r_meas;
    let next = KfState { x: s.x + k * innovation, p: symmetrize(p), ..*s };
    (next, FilteredHeight { h: next.x[0], source_time: f64::NAN })
}

fn symmetrize(p: Matrix2<f64>) -> Matrix2<f64> {
    (p + p.transpose()) * 0.5
}

/// One barometer sample with the concurrent world-frame vertical acceleration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaroSample {
    pub t: f64,
    pub pressure: f64,
    pub a_vertical: f64,
}

/// Incremental filter for one device stream.
#[derive(Debug, Clone)]
pub struct HeightFilter {
    model: BaroModel,
    params: FilterParams,
    state: Option<KfState>,
    last_t: f64,
    index: usize,
}

impl HeightFilter {
    pub fn new(model: BaroModel, params: FilterParams) -> Self {
        HeightFilter { model, params, state: None, last_t: f64::NEG_INFINITY, index: 0 }
    }

    pub fn state(&self) -> Option<&KfState> {
        self.state.as_ref()
    }

    pub fn push(&mut self, sample: &BaroSample) -> Result<FilteredHeight, BaroError> {
        let index = self.index;
        self.index += 1;
        if sample.t < self.last_t {
            return Err(BaroError::NonMonotonicTime { index, prev: self.last_t, curr: sample.t });
        }
        let h_meas = pressure_to_height(sample.pressure, &self.model);
        let prior = match self.state {
            None => KfState::new(h_meas, &self.params),
            Some(s) => {
                let gap = sample.t - self.last_t;
                let steps = (gap / self.params.nominal_dt - 0.5).ceil().max(0.0) as usize;
                let mut s = s;
                if steps > 0 {
                    let dt = gap / steps as f64;
                    for _ in 0..steps {
                        s = kf_predict(&s, sample.a_vertical, dt);
                    }
                }
                s
            }
        };
        let (post, mut out) = kf_update(&prior, h_meas);
        self.state = Some(post);
        self.last_t = sample.t;
        out.source_time = sample.t;
        Ok(out)
    }

    /// Height held without a measurement (degraded stream).
    pub fn hold(&self, t: f64) -> Option<FilteredHeight> {
        self.state.map(|s| FilteredHeight { h: s.height(), source_time: t })
    }
}

/// Filters a whole stream: predict + update per sample.
pub fn fuse_stream(
    frames: &[BaroSample],
    model: &BaroModel,
    params: &FilterParams,
) -> Result<Vec<FilteredHeight>, BaroError> {
    let mut filter = HeightFilter::new(*model, *params);
    frames.iter().map(|f| filter.push(f)).collect()
}
