//! Weight checkpoint container.
//!
//! Layout (little-endian):
//!
//! | field            | type                                   |
//! |------------------|----------------------------------------|
//! | magic            | 4 bytes `MCKP`                         |
//! | version          | u16 (currently 1)                      |
//! | feature layout   | u16, must equal `FEATURE_LAYOUT_VERSION` |
//! | network kind     | u8 (0 pose, 1 velocity)                |
//! | reserved         | 3 bytes, zero                          |
//! | input, output, hidden, layers | u32 each                  |
//! | tensor count     | u32                                    |
//! | per tensor       | name (u32 length + UTF-8), rank u32, dims u32 × rank, values f32 × product |
//!
//! Tensors appear in parameter-buffer order; names and shapes must match
//! the network rebuilt from the header.

use std::path::Path;

use thiserror::Error;

use super::nets::{NetDims, NetKind, PoseNet, VelocityNet};
use super::layers::ParamLayout;
use crate::binio::{put_f32, put_string, put_u16, put_u32, put_u8, Reader, Truncated};
use crate::features::FEATURE_LAYOUT_VERSION;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MCKP";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint version {0} not supported")]
    Version(u16),
    #[error("checkpoint feature layout {found} differs from {expected}")]
    LayoutMismatch { found: u16, expected: u16 },
    #[error("checkpoint shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("expected a {expected:?} checkpoint, found {found:?}")]
    WrongKind { expected: NetKind, found: NetKind },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<Truncated> for CheckpointError {
    fn from(t: Truncated) -> Self {
        CheckpointError::Corrupt(format!("truncated at byte {}", t.offset))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Pose(PoseNet),
    Velocity(VelocityNet),
}

impl Checkpoint {
    pub fn kind(&self) -> NetKind {
        match self {
            Checkpoint::Pose(_) => NetKind::Pose,
            Checkpoint::Velocity(_) => NetKind::Velocity,
        }
    }

    fn parts(&self) -> (NetDims, &ParamLayout, &[f64]) {
        match self {
            Checkpoint::Pose(n) => (n.dims, &n.layout, &n.params),
            Checkpoint::Velocity(n) => (n.dims, &n.layout, &n.params),
        }
    }

    pub fn into_pose(self) -> Result<PoseNet, CheckpointError> {
        match self {
            Checkpoint::Pose(n) => Ok(n),
            other => Err(CheckpointError::WrongKind { expected: NetKind::Pose, found: other.kind() }),
        }
    }

    pub fn into_velocity(self) -> Result<VelocityNet, CheckpointError> {
        match self {
            Checkpoint::Velocity(n) => Ok(n),
            other => Err(CheckpointError::WrongKind { expected: NetKind::Velocity, found: other.kind() }),
        }
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let (dims, layout, params) = ckpt.parts();
    let kind = ckpt.kind();
    let mut out = Vec::with_capacity(64 + params.len() * 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u16(&mut out, CHECKPOINT_VERSION);
    put_u16(&mut out, FEATURE_LAYOUT_VERSION);
    put_u8(&mut out, kind.code());
    out.extend_from_slice(&[0; 3]);
    for v in [kind.input_dim(), kind.output_dim(), dims.hidden, dims.layers] {
        put_u32(&mut out, v as u32);
    }
    put_u32(&mut out, layout.tensors.len() as u32);
    for t in &layout.tensors {
        put_string(&mut out, &t.name);
        put_u32(&mut out, t.shape.len() as u32);
        for &d in &t.shape {
            put_u32(&mut out, d as u32);
        }
        for &v in &params[t.offset..t.offset + t.len()] {
            put_f32(&mut out, v as f32);
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let mut r = Reader::new(bytes);
    if r.bytes(4)? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::Corrupt("bad magic".into()));
    }
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let layout_tag = r.u16()?;
    if layout_tag != FEATURE_LAYOUT_VERSION {
        return Err(CheckpointError::LayoutMismatch { found: layout_tag, expected: FEATURE_LAYOUT_VERSION });
    }
    let kind = NetKind::from_code(r.u8()?).ok_or_else(|| CheckpointError::Corrupt("unknown network kind".into()))?;
    r.bytes(3)?;
    let (input, output, hidden, layers) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    if input != kind.input_dim() || output != kind.output_dim() {
        return Err(CheckpointError::ShapeMismatch(format!("{kind:?} network with {input} inputs, {output} outputs")));
    }
    if hidden == 0 || layers == 0 || hidden > 1 << 14 || layers > 16 {
        return Err(CheckpointError::Corrupt(format!("implausible sizes hidden {hidden}, layers {layers}")));
    }
    let dims = NetDims::new(hidden, layers);
    let mut ckpt = match kind {
        NetKind::Pose => Checkpoint::Pose(PoseNet::new(dims, 0)),
        NetKind::Velocity => Checkpoint::Velocity(VelocityNet::new(dims, 0)),
    };
    let (layout, params) = match &mut ckpt {
        Checkpoint::Pose(n) => (&n.layout, &mut n.params),
        Checkpoint::Velocity(n) => (&n.layout, &mut n.params),
    };
    let count = r.u32()? as usize;
    if count != layout.tensors.len() {
        return Err(CheckpointError::ShapeMismatch(format!("{count} tensors, expected {}", layout.tensors.len())));
    }
    for t in &layout.tensors {
        let name = r.string()?;
        let rank = r.u32()? as usize;
        if rank > 8 {
            return Err(CheckpointError::Corrupt(format!("tensor `{name}` has rank {rank}")));
        }
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        if name != t.name || shape != t.shape {
            return Err(CheckpointError::ShapeMismatch(format!(
                "tensor `{name}` {shape:?}, expected `{}` {:?}",
                t.name, t.shape
            )));
        }
        for v in &mut params[t.offset..t.offset + t.len()] {
            let x = r.f32()?;
            if !x.is_finite() {
                return Err(CheckpointError::Corrupt(format!("non-finite value in `{name}`")));
            }
            *v = x as f64;
        }
    }
    if r.remaining() != 0 {
        return Err(CheckpointError::Corrupt(format!("{} trailing bytes", r.remaining())));
    }
    Ok(ckpt)
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    Ok(std::fs::write(path, encode_checkpoint(ckpt))?)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    decode_checkpoint(&std::fs::read(path)?)
}
