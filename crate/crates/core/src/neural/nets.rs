//! Pose and velocity estimators.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{DenseLayer, DenseStack, ParamLayout, RecurrentStack, RecurrentState, Activation};
use super::{NeuralError, PoseWindow, VelocityWindow, POSE_OUTPUT_DIM, VELOCITY_OUTPUT_DIM};
use crate::features::{POSE_INPUT_DIM, TRANS_INPUT_DIM};

/// Network sizes. Every hidden width (recurrent and MLP) is `hidden`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetDims {
    pub hidden: usize,
    pub layers: usize,
}

impl Default for NetDims {
    fn default() -> Self {
        NetDims { hidden: 512, layers: 2 }
    }
}

impl NetDims {
    pub fn new(hidden: usize, layers: usize) -> Self {
        NetDims { hidden, layers }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetKind {
    Pose,
    Velocity,
}

impl NetKind {
    pub fn code(self) -> u8 {
        match self {
            NetKind::Pose => 0,
            NetKind::Velocity => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(NetKind::Pose),
            1 => Some(NetKind::Velocity),
            _ => None,
        }
    }

    pub fn input_dim(self) -> usize {
        match self {
            NetKind::Pose => POSE_INPUT_DIM,
            NetKind::Velocity => TRANS_INPUT_DIM,
        }
    }

    pub fn output_dim(self) -> usize {
        match self {
            NetKind::Pose => POSE_OUTPUT_DIM,
            NetKind::Velocity => VELOCITY_OUTPUT_DIM,
        }
    }
}

/// Parameter-carrying model that the trainer can optimize.
pub trait Trainable {
    type Window;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    /// Mean loss over the batch; adds the gradient into `grad` when given.
    fn batch_loss(&self, batch: &[&Self::Window], grad: Option<&mut [f64]>) -> Result<f64, NeuralError>;
}

/// Neumaier summation; keeps the loss accurate enough for finite-difference
/// checks over many output terms.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Shared-length, time-major input matrix (row `t·B + k`).
fn time_major<const D: usize>(seqs: &[&[[f64; D]]]) -> Result<(Vec<f64>, usize), NeuralError> {
    let steps = seqs.first().map_or(0, |s| s.len());
    if steps == 0 {
        return Err(NeuralError::ShapeMismatch("empty sequence".into()));
    }
    if let Some(bad) = seqs.iter().find(|s| s.len() != steps) {
        return Err(NeuralError::ShapeMismatch(format!("batch mixes lengths {steps} and {}", bad.len())));
    }
    let b = seqs.len();
    let mut x = vec![0.0; steps * b * D];
    for (k, s) in seqs.iter().enumerate() {
        for (t, row) in s.iter().enumerate() {
            x[(t * b + k) * D..(t * b + k + 1) * D].copy_from_slice(row);
        }
    }
    Ok((x, steps))
}

fn check_targets<const D: usize, const E: usize>(inputs: &[[f64; D]], targets: &[[f64; E]]) -> Result<(), NeuralError> {
    if inputs.len() != targets.len() {
        return Err(NeuralError::LengthMismatch { pred: inputs.len(), gt: targets.len() });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseNet {
    pub dims: NetDims,
    pub init_encoder: DenseStack,
    pub core: RecurrentStack,
    pub head: DenseLayer,
    pub layout: ParamLayout,
    pub params: Vec<f64>,
}

impl PoseNet {
    pub fn new(dims: NetDims, seed: u64) -> Self {
        let mut layout = ParamLayout::default();
        let (h, l) = (dims.hidden, dims.layers);
        let init_encoder = DenseStack::new(&mut layout, "pose.init", &[POSE_OUTPUT_DIM, h, h, 2 * l * h]);
        let core = RecurrentStack::new(&mut layout, "pose.lstm", POSE_INPUT_DIM, h, l);
        let head = DenseLayer::new(&mut layout, "pose.head", h, POSE_OUTPUT_DIM, Activation::Linear);
        let params = layout.initialize(&mut ChaCha8Rng::seed_from_u64(seed));
        PoseNet { dims, init_encoder, core, head, layout, params }
    }

    /// Recurrent state encoded from the first-frame pose (24 × 6D).
    pub fn start(&self, first_pose: &[f64]) -> Result<RecurrentState, NeuralError> {
        if first_pose.len() != POSE_OUTPUT_DIM {
            return Err(NeuralError::ShapeMismatch(format!("first pose has {} values", first_pose.len())));
        }
        let e = self.init_encoder.forward_one(&self.params, first_pose);
        let mut st = self.core.zero_state();
        let hd = self.dims.hidden;
        for l in 0..self.dims.layers {
            st.h[l].copy_from_slice(&e[2 * l * hd..(2 * l + 1) * hd]);
            st.c[l].copy_from_slice(&e[(2 * l + 1) * hd..(2 * l + 2) * hd]);
        }
        Ok(st)
    }

    pub fn step(&self, state: &mut RecurrentState, x: &[f64; POSE_INPUT_DIM]) -> [f64; POSE_OUTPUT_DIM] {
        let h = self.core.step(&self.params, x, state);
        let mut y = [0.0; POSE_OUTPUT_DIM];
        self.head.forward_one(&self.params, h, &mut y);
        y
    }
}

impl Trainable for PoseNet {
    type Window = PoseWindow;

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn batch_loss(&self, batch: &[&PoseWindow], grad: Option<&mut [f64]>) -> Result<f64, NeuralError> {
        for w in batch {
            check_targets(&w.inputs, &w.targets)?;
        }
        let p = &self.params;
        let b = batch.len();
        let (hd, nl) = (self.dims.hidden, self.dims.layers);
        let (x, steps) = time_major(&batch.iter().map(|w| w.inputs.as_slice()).collect::<Vec<_>>())?;
        let first: Vec<f64> = batch.iter().flat_map(|w| w.first_pose.iter().copied()).collect();
        let enc = self.init_encoder.forward_batch(p, &first, b);
        let e = enc.last().expect("encoder has layers");
        let split = |off: usize| -> Vec<f64> {
            (0..b).flat_map(|k| e[k * 2 * nl * hd + off * hd..k * 2 * nl * hd + (off + 1) * hd].iter().copied()).collect()
        };
        let h0: Vec<Vec<f64>> = (0..nl).map(|l| split(2 * l)).collect();
        let c0: Vec<Vec<f64>> = (0..nl).map(|l| split(2 * l + 1)).collect();
        let traces = self.core.forward_seq(p, &x, steps, b, &h0, &c0);
        let top = traces.last().expect("core has layers").outputs(b, hd);
        let rows = steps * b;
        let mut y = vec![0.0; rows * POSE_OUTPUT_DIM];
        self.head.forward_batch(p, top, rows, &mut y);

        // mean over windows of (mean over frames of the squared error)
        let scale = 1.0 / (steps * b) as f64;
        let mut loss = CompensatedSum::default();
        let mut dy = vec![0.0; rows * POSE_OUTPUT_DIM];
        for t in 0..steps {
            for (k, w) in batch.iter().enumerate() {
                let r = (t * b + k) * POSE_OUTPUT_DIM;
                for (j, gt) in w.targets[t].iter().enumerate() {
                    let d = y[r + j] - gt;
                    loss.add(d * d);
                    dy[r + j] = 2.0 * d * scale;
                }
            }
        }
        let loss = loss.total() * scale;
        let Some(grad) = grad else { return Ok(loss) };

        let mut dtop = vec![0.0; rows * hd];
        self.head.backward_batch(p, top, &y, &mut dy, rows, grad, Some(&mut dtop));
        let init = self.core.backward_seq(p, &traces, &x, dtop, steps, b, grad);
        let mut de = vec![0.0; b * 2 * nl * hd];
        for (l, (dh0, dc0)) in init.iter().enumerate() {
            for k in 0..b {
                let base = k * 2 * nl * hd;
                de[base + 2 * l * hd..base + (2 * l + 1) * hd].copy_from_slice(&dh0[k * hd..(k + 1) * hd]);
                de[base + (2 * l + 1) * hd..base + (2 * l + 2) * hd].copy_from_slice(&dc0[k * hd..(k + 1) * hd]);
            }
        }
        self.init_encoder.backward_batch(p, &first, &enc, de, b, grad);
        Ok(loss)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityNet {
    pub dims: NetDims,
    pub core: RecurrentStack,
    pub head: DenseLayer,
    pub layout: ParamLayout,
    pub params: Vec<f64>,
}

impl VelocityNet {
    pub fn new(dims: NetDims, seed: u64) -> Self {
        let mut layout = ParamLayout::default();
        let core = RecurrentStack::new(&mut layout, "vel.lstm", TRANS_INPUT_DIM, dims.hidden, dims.layers);
        let head = DenseLayer::new(&mut layout, "vel.head", dims.hidden, VELOCITY_OUTPUT_DIM, Activation::Linear);
        let params = layout.initialize(&mut ChaCha8Rng::seed_from_u64(seed));
        VelocityNet { dims, core, head, layout, params }
    }

    pub fn start(&self) -> RecurrentState {
        self.core.zero_state()
    }

    pub fn step(&self, state: &mut RecurrentState, x: &[f64; TRANS_INPUT_DIM]) -> [f64; VELOCITY_OUTPUT_DIM] {
        let h = self.core.step(&self.params, x, state);
        let mut y = [0.0; VELOCITY_OUTPUT_DIM];
        self.head.forward_one(&self.params, h, &mut y);
        y
    }
}

impl Trainable for VelocityNet {
    type Window = VelocityWindow;

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn batch_loss(&self, batch: &[&VelocityWindow], grad: Option<&mut [f64]>) -> Result<f64, NeuralError> {
        for w in batch {
            check_targets(&w.inputs, &w.targets)?;
        }
        let p = &self.params;
        let b = batch.len();
        let hd = self.dims.hidden;
        let (x, steps) = time_major(&batch.iter().map(|w| w.inputs.as_slice()).collect::<Vec<_>>())?;
        let zeros = vec![vec![0.0; b * hd]; self.dims.layers];
        let traces = self.core.forward_seq(p, &x, steps, b, &zeros, &zeros);
        let top = traces.last().expect("core has layers").outputs(b, hd);
        let rows = steps * b;
        let mut y = vec![0.0; rows * VELOCITY_OUTPUT_DIM];
        self.head.forward_batch(p, top, rows, &mut y);

        // mean over windows of ‖Σ pred − Σ gt‖²
        let mut resid = vec![[0.0f64; VELOCITY_OUTPUT_DIM]; b];
        for t in 0..steps {
            for (k, w) in batch.iter().enumerate() {
                for j in 0..VELOCITY_OUTPUT_DIM {
                    resid[k][j] += y[(t * b + k) * VELOCITY_OUTPUT_DIM + j] - w.targets[t][j];
                }
            }
        }
        let loss = resid.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / b as f64;
        let Some(grad) = grad else { return Ok(loss) };

        let mut dy = vec![0.0; rows * VELOCITY_OUTPUT_DIM];
        for t in 0..steps {
            for k in 0..b {
                for j in 0..VELOCITY_OUTPUT_DIM {
                    dy[(t * b + k) * VELOCITY_OUTPUT_DIM + j] = 2.0 * resid[k][j] / b as f64;
                }
            }
        }
        let mut dtop = vec![0.0; rows * hd];
        self.head.backward_batch(p, top, &y, &mut dy, rows, grad, Some(&mut dtop));
        self.core.backward_seq(p, &traces, &x, dtop, steps, b, grad);
        Ok(loss)
    }
}
