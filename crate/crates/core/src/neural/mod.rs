//! Self-contained neural runtime: dense and recurrent layers over a flat
//! parameter buffer, truncated BPTT, Adam, and the two estimators.

mod checkpoint;
mod data;
mod layers;
mod linalg;
mod nets;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, Checkpoint, CheckpointError, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use data::{pose_target, pose_windows, tpose_encoding, velocity_windows, WindowOptions};
pub use layers::{Activation, DenseLayer, DenseStack, LstmLayer, ParamLayout, RecurrentStack, RecurrentState, TensorSpec};
pub use nets::{NetDims, NetKind, PoseNet, Trainable, VelocityNet};
pub use train::{clip_global_norm, train, Adam, TrainConfig, TrainReport};

use thiserror::Error;

use crate::features::{PoseInput22, TransInput25, POSE_INPUT_DIM, TRANS_INPUT_DIM};
use crate::kinematics::NUM_JOINTS;

pub const POSE_OUTPUT_DIM: usize = NUM_JOINTS * 6;
pub const VELOCITY_OUTPUT_DIM: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("sequence lengths differ: {pred} predicted vs {gt} ground truth")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("non-finite loss {loss} at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize, loss: f64 },
    #[error("empty training set")]
    EmptyDataset,
}

/// One training sequence for the pose estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseWindow {
    /// Frame-0 thigh-rooted pose, 24 × 6D.
    pub first_pose: [f64; POSE_OUTPUT_DIM],
    pub inputs: Vec<[f64; POSE_INPUT_DIM]>,
    pub targets: Vec<[f64; POSE_OUTPUT_DIM]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityWindow {
    pub inputs: Vec<[f64; TRANS_INPUT_DIM]>,
    /// Horizontal velocity (x, z), m/s.
    pub targets: Vec<[f64; VELOCITY_OUTPUT_DIM]>,
}

fn check_lengths(pred: usize, gt: usize) -> Result<(), NeuralError> {
    if pred != gt {
        return Err(NeuralError::LengthMismatch { pred, gt });
    }
    Ok(())
}

/// Mean over frames of the summed squared difference of all 144 values.
pub fn pose_loss(pred: &[[f64; POSE_OUTPUT_DIM]], gt: &[[f64; POSE_OUTPUT_DIM]]) -> Result<f64, NeuralError> {
    check_lengths(pred.len(), gt.len())?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = pred.iter().zip(gt).flat_map(|(p, g)| p.iter().zip(g).map(|(a, b)| (a - b) * (a - b))).sum();
    Ok(total / pred.len() as f64)
}

pub fn pose_loss_grad(
    pred: &[[f64; POSE_OUTPUT_DIM]],
    gt: &[[f64; POSE_OUTPUT_DIM]],
) -> Result<Vec<[f64; POSE_OUTPUT_DIM]>, NeuralError> {
    check_lengths(pred.len(), gt.len())?;
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(gt)
        .map(|(p, g)| std::array::from_fn(|j| 2.0 * (p[j] - g[j]) / n))
        .collect())
}

fn summed_residual(pred: &[[f64; 2]], gt: &[[f64; 2]]) -> [f64; 2] {
    let mut r = [0.0; 2];
    for (p, g) in pred.iter().zip(gt) {
        r[0] += p[0] - g[0];
        r[1] += p[1] - g[1];
    }
    r
}

/// Squared distance between the summed predicted and summed true
/// velocities; only the totals matter.
pub fn velocity_loss(pred: &[[f64; VELOCITY_OUTPUT_DIM]], gt: &[[f64; VELOCITY_OUTPUT_DIM]]) -> Result<f64, NeuralError> {
    check_lengths(pred.len(), gt.len())?;
    let sp = pred.iter().fold([0.0; 2], |a, v| [a[0] + v[0], a[1] + v[1]]);
    let sg = gt.iter().fold([0.0; 2], |a, v| [a[0] + v[0], a[1] + v[1]]);
    Ok((sp[0] - sg[0]).powi(2) + (sp[1] - sg[1]).powi(2))
}

pub fn velocity_loss_grad(
    pred: &[[f64; VELOCITY_OUTPUT_DIM]],
    gt: &[[f64; VELOCITY_OUTPUT_DIM]],
) -> Result<Vec<[f64; VELOCITY_OUTPUT_DIM]>, NeuralError> {
    check_lengths(pred.len(), gt.len())?;
    let r = summed_residual(pred, gt);
    Ok(vec![[2.0 * r[0], 2.0 * r[1]]; pred.len()])
}

/// Causal pose estimation over a whole sequence.
pub fn pose_forward(net: &PoseNet, first_pose: &[f64], seq: &[PoseInput22]) -> Result<Vec<[f64; POSE_OUTPUT_DIM]>, NeuralError> {
    if seq.is_empty() {
        return Err(NeuralError::ShapeMismatch("empty sequence".into()));
    }
    let mut st = net.start(first_pose)?;
    Ok(seq.iter().map(|x| net.step(&mut st, &x.flatten())).collect())
}

pub fn velocity_forward(net: &VelocityNet, seq: &[TransInput25]) -> Result<Vec<[f64; VELOCITY_OUTPUT_DIM]>, NeuralError> {
    if seq.is_empty() {
        return Err(NeuralError::ShapeMismatch("empty sequence".into()));
    }
    let mut st = net.start();
    Ok(seq.iter().map(|x| net.step(&mut st, &x.flatten())).collect())
}
