//! Binary dataset container for synthesized frame sets.
//!
//! Layout (little-endian):
//!
//! | field          | type                               |
//! |----------------|------------------------------------|
//! | magic          | 8 bytes `MCSYNTH\0`                |
//! | version        | u16 (currently 1)                  |
//! | reserved       | u16, zero                          |
//! | set count      | u32                                |
//! | per set        | tag (u32 length + UTF-8), fps f64, frame count u32, frames |
//!
//! Each frame is 248 f64 values: `t`, `a_lw[3]`, `a_rp[3]`, `r_lw[9]`,
//! `r_rp[9]`, `h_lw`, `h_rp`, pose `24×9`, root `[3]`, `v_xz[2]`, with
//! rotation matrices column-major. Values are stored bit-exact.

use std::path::Path;

use nalgebra::Matrix3;
use thiserror::Error;

use super::{SynthFrame, SynthFrameSet};
use crate::binio::{put_f64, put_string, put_u16, put_u32, Reader, Truncated};
use crate::features::RawFrame;
use crate::kinematics::{Vec2, NUM_JOINTS};
use crate::rotmath::{Rot3, Vec3};

pub const DATASET_MAGIC: &[u8; 8] = b"MCSYNTH\0";
pub const DATASET_VERSION: u16 = 1;
const FRAME_VALUES: usize = 1 + 3 + 3 + 9 + 9 + 2 + NUM_JOINTS * 9 + 3 + 2;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("corrupt dataset file: {0}")]
    CorruptFile(String),
    #[error("dataset version {found} not supported (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<Truncated> for DatasetError {
    fn from(t: Truncated) -> Self {
        DatasetError::CorruptFile(format!("truncated at byte {} (wanted {} more)", t.offset, t.wanted))
    }
}

fn put_rot(out: &mut Vec<u8>, r: &Rot3) {
    for v in r.to_col_major() {
        put_f64(out, v);
    }
}

fn put_vec(out: &mut Vec<u8>, v: &[f64]) {
    for &x in v {
        put_f64(out, x);
    }
}

pub fn encode_dataset(sets: &[SynthFrameSet]) -> Vec<u8> {
    let frames: usize = sets.iter().map(|s| s.frames.len()).sum();
    let mut out = Vec::with_capacity(16 + frames * FRAME_VALUES * 8);
    out.extend_from_slice(DATASET_MAGIC);
    put_u16(&mut out, DATASET_VERSION);
    put_u16(&mut out, 0);
    put_u32(&mut out, sets.len() as u32);
    for set in sets {
        put_string(&mut out, &set.tag);
        put_f64(&mut out, set.fps);
        put_u32(&mut out, set.frames.len() as u32);
        for f in &set.frames {
            put_f64(&mut out, f.raw.t);
            put_vec(&mut out, f.raw.a_lw.as_slice());
            put_vec(&mut out, f.raw.a_rp.as_slice());
            put_rot(&mut out, &f.raw.r_lw);
            put_rot(&mut out, &f.raw.r_rp);
            put_f64(&mut out, f.raw.h_lw);
            put_f64(&mut out, f.raw.h_rp);
            for r in &f.pose {
                put_rot(&mut out, r);
            }
            put_vec(&mut out, f.root.as_slice());
            put_vec(&mut out, f.v_xz.as_slice());
        }
    }
    out
}

fn read_vec3(r: &mut Reader) -> Result<Vec3, Truncated> {
    Ok(Vec3::new(r.f64()?, r.f64()?, r.f64()?))
}

fn read_rot(r: &mut Reader) -> Result<Rot3, Truncated> {
    let mut m = [0.0; 9];
    for v in &mut m {
        *v = r.f64()?;
    }
    Ok(Rot3::from_matrix_unchecked(Matrix3::from_column_slice(&m)))
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Vec<SynthFrameSet>, DatasetError> {
    let mut r = Reader::new(bytes);
    if r.bytes(8)? != DATASET_MAGIC {
        return Err(DatasetError::CorruptFile("bad magic".into()));
    }
    let version = r.u16()?;
    if version != DATASET_VERSION {
        return Err(DatasetError::VersionMismatch { found: version, expected: DATASET_VERSION });
    }
    let _reserved = r.u16()?;
    let count = r.u32()? as usize;
    let mut sets = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let tag = r.string()?;
        let fps = r.f64()?;
        let n = r.u32()? as usize;
        if r.remaining() < n.saturating_mul(FRAME_VALUES * 8) {
            return Err(DatasetError::CorruptFile(format!("set `{tag}` claims {n} frames")));
        }
        let mut frames = Vec::with_capacity(n);
        for _ in 0..n {
            let t = r.f64()?;
            let a_lw = read_vec3(&mut r)?;
            let a_rp = read_vec3(&mut r)?;
            let r_lw = read_rot(&mut r)?;
            let r_rp = read_rot(&mut r)?;
            let h_lw = r.f64()?;
            let h_rp = r.f64()?;
            let mut pose = [Rot3::identity(); NUM_JOINTS];
            for p in &mut pose {
                *p = read_rot(&mut r)?;
            }
            let root = read_vec3(&mut r)?;
            let v_xz = Vec2::new(r.f64()?, r.f64()?);
            frames.push(SynthFrame {
                raw: RawFrame { a_lw, a_rp, r_lw, r_rp, h_lw, h_rp, t },
                pose,
                root,
                v_xz,
            });
        }
        sets.push(SynthFrameSet { tag, fps, frames });
    }
    if r.remaining() != 0 {
        return Err(DatasetError::CorruptFile(format!("{} trailing bytes", r.remaining())));
    }
    Ok(sets)
}

pub fn write_dataset(path: &Path, sets: &[SynthFrameSet]) -> Result<(), DatasetError> {
    Ok(std::fs::write(path, encode_dataset(sets))?)
}

pub fn read_dataset(path: &Path) -> Result<Vec<SynthFrameSet>, DatasetError> {
    decode_dataset(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::procedural::{generate, ClipKind, ClipParams};
    use crate::synth::{synthesize, SynthOptions};
    use crate::kinematics::Skeleton;

    fn sample_sets() -> Vec<SynthFrameSet> {
        let skel = Skeleton::default();
        let clip = generate(&ClipParams { duration: 1.0, ..ClipParams::new(ClipKind::Walk) }, &skel);
        vec![synthesize(&clip, &skel, &SynthOptions { seed: 3, ..Default::default() }).unwrap()]
    }

    #[test]
    fn round_trip_is_bitwise() {
        let sets = sample_sets();
        let bytes = encode_dataset(&sets);
        let back = decode_dataset(&bytes).unwrap();
        assert_eq!(back, sets);
        assert_eq!(encode_dataset(&back), bytes);
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let bytes = encode_dataset(&sample_sets());
        for cut in [3, 12, 40, bytes.len() - 1] {
            assert!(matches!(decode_dataset(&bytes[..cut]), Err(DatasetError::CorruptFile(_))));
        }
    }

    #[test]
    fn handcrafted_header_fixture() {
        // empty dataset: magic, version 1, reserved 0, zero sets
        let fixture: [u8; 16] = [
            b'M', b'C', b'S', b'Y', b'N', b'T', b'H', 0, 0x01, 0x00, 0x00, 0x00, 0, 0, 0, 0,
        ];
        assert_eq!(encode_dataset(&[]), fixture);
        assert!(decode_dataset(&fixture).unwrap().is_empty());
        let mut v2 = fixture;
        v2[8] = 2;
        assert!(matches!(
            decode_dataset(&v2),
            Err(DatasetError::VersionMismatch { found: 2, expected: 1 })
        ));
        let mut bad = fixture;
        bad[0] = b'X';
        assert!(matches!(decode_dataset(&bad), Err(DatasetError::CorruptFile(_))));
    }
}
