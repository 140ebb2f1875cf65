//! MotionClip text format.
//!
//! ```text
//! motionclip 1
//! fps 30
//! joints 24
//! subject walk
//! frames 2
//! <72 axis-angle components> <root x y z>
//! <72 axis-angle components> <root x y z>
//! ```
//!
//! Lines starting with `#` are comments. Axis-angle triples are in joint
//! order: pelvis world orientation first, then parent-relative rotations.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use super::{ClipFrame, MotionClip};
use crate::kinematics::NUM_JOINTS;
use crate::rotmath::{exp_so3, log_so3, Rot3, Vec3};

const CLIP_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ClipFormatError {
    #[error("clip line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn parse_err(line: usize, msg: impl Into<String>) -> ClipFormatError {
    ClipFormatError::Parse { line, msg: msg.into() }
}

pub fn parse_clip(text: &str) -> Result<MotionClip, ClipFormatError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let mut header = |key: &str| -> Result<(usize, String), ClipFormatError> {
        let (n, l) = lines.next().ok_or_else(|| parse_err(0, format!("missing `{key}` header")))?;
        let rest = l
            .strip_prefix(key)
            .ok_or_else(|| parse_err(n, format!("expected `{key}`")))?;
        Ok((n, rest.trim().to_string()))
    };

    let (n, v) = header("motionclip")?;
    if v.parse::<u32>().ok() != Some(CLIP_FORMAT_VERSION) {
        return Err(parse_err(n, format!("unsupported version `{v}`")));
    }
    let (n, v) = header("fps")?;
    let fps: f64 = v.parse().map_err(|_| parse_err(n, "bad fps"))?;
    if !(fps > 0.0) {
        return Err(parse_err(n, "fps must be positive"));
    }
    let (n, v) = header("joints")?;
    if v.parse::<usize>().ok() != Some(NUM_JOINTS) {
        return Err(parse_err(n, "joint count must be 24"));
    }
    let (_, subject) = header("subject")?;
    let (n, v) = header("frames")?;
    let count: usize = v.parse().map_err(|_| parse_err(n, "bad frame count"))?;

    let mut frames = Vec::with_capacity(count);
    for (n, l) in lines {
        let vals: Vec<f64> = l
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| parse_err(n, "bad number"))?;
        if vals.len() != NUM_JOINTS * 3 + 3 || vals.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(n, "expected 75 finite numbers"));
        }
        let mut pose = [Rot3::identity(); NUM_JOINTS];
        for (j, r) in pose.iter_mut().enumerate() {
            *r = exp_so3(&Vec3::new(vals[3 * j], vals[3 * j + 1], vals[3 * j + 2]));
        }
        let k = NUM_JOINTS * 3;
        frames.push(ClipFrame { pose, root: Vec3::new(vals[k], vals[k + 1], vals[k + 2]) });
    }
    if frames.len() != count {
        return Err(parse_err(0, format!("header says {count} frames, found {}", frames.len())));
    }
    Ok(MotionClip { fps, frames, subject })
}

pub fn format_clip(clip: &MotionClip) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "motionclip {CLIP_FORMAT_VERSION}");
    let _ = writeln!(out, "fps {}", clip.fps);
    let _ = writeln!(out, "joints {NUM_JOINTS}");
    let _ = writeln!(out, "subject {}", clip.subject);
    let _ = writeln!(out, "frames {}", clip.frames.len());
    for f in &clip.frames {
        let mut fields: Vec<String> = Vec::with_capacity(NUM_JOINTS * 3 + 3);
        for r in &f.pose {
            let v = log_so3(r);
            fields.extend(v.iter().map(|x| x.to_string()));
        }
        fields.extend(f.root.iter().map(|x| x.to_string()));
        let _ = writeln!(out, "{}", fields.join(" "));
    }
    out
}

pub fn read_clip(path: &Path) -> Result<MotionClip, ClipFormatError> {
    parse_clip(&std::fs::read_to_string(path)?)
}

pub fn write_clip(path: &Path, clip: &MotionClip) -> Result<(), ClipFormatError> {
    Ok(std::fs::write(path, format_clip(clip))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_text() {
        let mut pose = [Rot3::identity(); NUM_JOINTS];
        pose[3] = exp_so3(&Vec3::new(0.1, -0.2, 0.3));
        let clip = MotionClip {
            fps: 25.0,
            frames: vec![ClipFrame { pose, root: Vec3::new(1.0, 0.9, -2.5) }; 3],
            subject: "unit".into(),
        };
        let back = parse_clip(&format_clip(&clip)).unwrap();
        assert_eq!(back.fps, 25.0);
        assert_eq!(back.subject, "unit");
        assert_eq!(back.frames.len(), 3);
        assert!(back.frames[1].pose[3].angle_to(&pose[3]) < 1e-12);
        assert_eq!(back.frames[2].root, clip.frames[2].root);
    }

    #[test]
    fn rejects_bad_headers_and_rows() {
        assert!(parse_clip("motionclip 2\n").is_err());
        let text = "motionclip 1\nfps 30\njoints 23\nsubject x\nframes 0\n";
        assert!(parse_clip(text).is_err());
        let text = "motionclip 1\nfps 30\njoints 24\nsubject x\nframes 1\n1 2 3\n";
        assert!(matches!(parse_clip(text), Err(ClipFormatError::Parse { line: 6, .. })));
        let text = "motionclip 1\nfps 30\njoints 24\nsubject x\nframes 2\n";
        assert!(parse_clip(text).is_err());
    }
}
