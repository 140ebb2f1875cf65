//! Fixed 48-byte little-endian sensor packet.
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 2    | magic `0xB1 0x05`                       |
//! | 2      | 1    | version (1)                             |
//! | 3      | 1    | device (0 wrist watch, 1 pocket phone)  |
//! | 4      | 4    | seq, u32                                |
//! | 8      | 8    | timestamp, µs, u64                      |
//! | 16     | 12   | acceleration xyz, f32, m/s², device frame |
//! | 28     | 16   | orientation quaternion wxyz, f32, device→world |
//! | 44     | 4    | pressure, f32, hPa                      |
//!
//! The device world is gravity aligned with +y up; its heading is
//! arbitrary. Decoding validates but keeps every field verbatim so that
//! re-encoding is byte exact; the quaternion is renormalized when converted
//! to a rotation.

use thiserror::Error;

use crate::calibration::SensorFrame;
use crate::rotmath::{Rot3, Vec3};

pub const PACKET_LEN: usize = 48;
pub const PACKET_MAGIC: [u8; 2] = [0xB1, 0x05];
pub const PROTOCOL_VERSION: u8 = 1;
pub const QUAT_NORM_RANGE: (f32, f32) = (0.99, 1.01);
pub const PRESSURE_RANGE_HPA: (f32, f32) = (300.0, 1200.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("packet has {0} bytes, need {PACKET_LEN}")]
    Truncated(usize),
    #[error("bad magic {0:02x} {1:02x}")]
    BadMagic(u8, u8),
    #[error("unsupported protocol version {0}")]
    BadVersion(u8),
    #[error("unknown device id {0}")]
    BadDevice(u8),
    #[error("{field} out of range: {value}")]
    OutOfRange { field: &'static str, value: f32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DeviceId {
    Wrist = 0,
    Pocket = 1,
}

impl DeviceId {
    pub const ALL: [DeviceId; 2] = [DeviceId::Wrist, DeviceId::Pocket];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(DeviceId::Wrist),
            1 => Some(DeviceId::Pocket),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DeviceId::Wrist => "wrist",
            DeviceId::Pocket => "pocket",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorPacket {
    pub version: u8,
    pub device: DeviceId,
    pub seq: u32,
    pub timestamp_us: u64,
    pub acc: [f32; 3],
    /// w, x, y, z
    pub orient: [f32; 4],
    pub pressure: f32,
}

impl SensorPacket {
    /// Packet for a sensor frame; time rounds to the microsecond.
    pub fn from_frame(device: DeviceId, seq: u32, frame: &SensorFrame) -> Self {
        let q = frame.orient.to_quaternion();
        SensorPacket {
            version: PROTOCOL_VERSION,
            device,
            seq,
            timestamp_us: (frame.t * 1e6).round().max(0.0) as u64,
            acc: [frame.acc.x as f32, frame.acc.y as f32, frame.acc.z as f32],
            orient: q.map(|v| v as f32),
            pressure: frame.pressure as f32,
        }
    }

    pub fn time(&self) -> f64 {
        self.timestamp_us as f64 * 1e-6
    }

    pub fn to_frame(&self) -> SensorFrame {
        let q = self.orient.map(|v| v as f64);
        SensorFrame {
            t: self.time(),
            acc: Vec3::new(self.acc[0] as f64, self.acc[1] as f64, self.acc[2] as f64),
            orient: Rot3::from_quaternion(q),
            pressure: self.pressure as f64,
        }
    }
}

pub fn encode_packet(p: &SensorPacket) -> [u8; PACKET_LEN] {
    let mut b = [0u8; PACKET_LEN];
    b[0..2].copy_from_slice(&PACKET_MAGIC);
    b[2] = p.version;
    b[3] = p.device as u8;
    b[4..8].copy_from_slice(&p.seq.to_le_bytes());
    b[8..16].copy_from_slice(&p.timestamp_us.to_le_bytes());
    for (i, v) in p.acc.iter().enumerate() {
        b[16 + 4 * i..20 + 4 * i].copy_from_slice(&v.to_le_bytes());
    }
    for (i, v) in p.orient.iter().enumerate() {
        b[28 + 4 * i..32 + 4 * i].copy_from_slice(&v.to_le_bytes());
    }
    b[44..48].copy_from_slice(&p.pressure.to_le_bytes());
    b
}

fn f32_at(b: &[u8], off: usize) -> f32 {
    f32::from_le_bytes(b[off..off + 4].try_into().expect("4 bytes"))
}

/// Decodes the first 48 bytes of `b`.
pub fn decode_packet(b: &[u8]) -> Result<SensorPacket, ProtocolError> {
    if b.len() < PACKET_LEN {
        return Err(ProtocolError::Truncated(b.len()));
    }
    if b[0..2] != PACKET_MAGIC {
        return Err(ProtocolError::BadMagic(b[0], b[1]));
    }
    if b[2] != PROTOCOL_VERSION {
        return Err(ProtocolError::BadVersion(b[2]));
    }
    let device = DeviceId::from_u8(b[3]).ok_or(ProtocolError::BadDevice(b[3]))?;
    let acc = [f32_at(b, 16), f32_at(b, 20), f32_at(b, 24)];
    let orient = [f32_at(b, 28), f32_at(b, 32), f32_at(b, 36), f32_at(b, 40)];
    let pressure = f32_at(b, 44);
    if let Some(&a) = acc.iter().find(|a| !a.is_finite()) {
        return Err(ProtocolError::OutOfRange { field: "acceleration", value: a });
    }
    let norm = orient.iter().map(|v| v * v).sum::<f32>().sqrt();
    if !(norm >= QUAT_NORM_RANGE.0 && norm <= QUAT_NORM_RANGE.1) {
        return Err(ProtocolError::OutOfRange { field: "quaternion norm", value: norm });
    }
    if !(pressure > PRESSURE_RANGE_HPA.0 && pressure < PRESSURE_RANGE_HPA.1) {
        return Err(ProtocolError::OutOfRange { field: "pressure", value: pressure });
    }
    Ok(SensorPacket {
        version: b[2],
        device,
        seq: u32::from_le_bytes(b[4..8].try_into().expect("4 bytes")),
        timestamp_us: u64::from_le_bytes(b[8..16].try_into().expect("8 bytes")),
        acc,
        orient,
        pressure,
    })
}

/// Splits a byte stream into packets, resynchronizing on the magic after
/// corrupt data.
#[derive(Debug, Clone, Default)]
pub struct StreamDecoder {
    buf: Vec<u8>,
    pub skipped_bytes: u64,
}

impl StreamDecoder {
    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Next complete 48-byte frame starting with the magic.
    pub fn next_frame(&mut self) -> Option<[u8; PACKET_LEN]> {
        loop {
            let start = self.buf.windows(2).position(|w| w == PACKET_MAGIC).unwrap_or(self.buf.len().saturating_sub(1));
            if start > 0 {
                self.skipped_bytes += start as u64;
                self.buf.drain(..start);
            }
            if self.buf.len() < PACKET_LEN {
                return None;
            }
            let frame: [u8; PACKET_LEN] = self.buf[..PACKET_LEN].try_into().expect("length checked");
            if decode_packet(&frame).is_ok() {
                self.buf.drain(..PACKET_LEN);
                return Some(frame);
            }
            // not a valid packet at this magic; skip it and rescan
            self.skipped_bytes += 1;
            self.buf.drain(..1);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Byte layout of device 1, seq 7, t = 0, zero acceleration, identity
    /// quaternion, 1013.25 hPa, written out by hand.
    fn fixture() -> [u8; PACKET_LEN] {
        let mut b = [0u8; PACKET_LEN];
        b[0] = 0xB1;
        b[1] = 0x05;
        b[2] = 0x01;
        b[3] = 0x01;
        b[4] = 0x07;
        // w = 1.0f32 = 0x3F800000
        b[28..32].copy_from_slice(&[0x00, 0x00, 0x80, 0x3F]);
        // 1013.25f32 = 0x447D5000
        b[44..48].copy_from_slice(&[0x00, 0x50, 0x7D, 0x44]);
        b
    }

    #[test]
    fn fixture_fields() {
        let p = decode_packet(&fixture()).unwrap();
        assert_eq!(p.device, DeviceId::Pocket);
        assert_eq!(p.seq, 7);
        assert_eq!(p.timestamp_us, 0);
        assert_eq!(p.acc, [0.0; 3]);
        assert_eq!(p.orient, [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(p.pressure, 1013.25);
        assert_eq!(encode_packet(&p), fixture());
        assert_eq!(p.to_frame().orient, Rot3::identity());
    }

    #[test]
    fn rejects_bad_headers_and_ranges() {
        let mut b = fixture();
        b[0] = 0;
        b[1] = 0;
        assert_eq!(decode_packet(&b), Err(ProtocolError::BadMagic(0, 0)));
        let mut b = fixture();
        b[2] = 2;
        assert_eq!(decode_packet(&b), Err(ProtocolError::BadVersion(2)));
        let mut b = fixture();
        b[3] = 5;
        assert_eq!(decode_packet(&b), Err(ProtocolError::BadDevice(5)));
        let mut b = fixture();
        b[44..48].copy_from_slice(&1500f32.to_le_bytes());
        assert!(matches!(decode_packet(&b), Err(ProtocolError::OutOfRange { field: "pressure", .. })));
        let mut b = fixture();
        b[28..32].copy_from_slice(&0.5f32.to_le_bytes());
        assert!(matches!(decode_packet(&b), Err(ProtocolError::OutOfRange { field: "quaternion norm", .. })));
        assert_eq!(decode_packet(&fixture()[..20]), Err(ProtocolError::Truncated(20)));
    }

    #[test]
    fn slightly_denormalized_quaternion_is_kept_verbatim() {
        let mut b = fixture();
        b[28..32].copy_from_slice(&1.005f32.to_le_bytes());
        let p = decode_packet(&b).unwrap();
        assert_eq!(encode_packet(&p), b);
        assert!(p.to_frame().orient.is_valid());
    }

    #[test]
    fn stream_decoder_resyncs() {
        let a = fixture();
        let mut second = fixture();
        second[4] = 8;
        let mut d = StreamDecoder::default();
        d.push(&[0xB1, 0x00, 0x13]);
        d.push(&a[..30]);
        assert_eq!(d.next_frame(), None);
        d.push(&a[30..]);
        d.push(&second);
        assert_eq!(d.next_frame(), Some(a));
        assert_eq!(d.next_frame(), Some(second));
        assert_eq!(d.next_frame(), None);
        assert_eq!(d.skipped_bytes, 3);
    }
}
