//! Append-only log of received network payloads.
//!
//! Layout (little-endian):
//!
//! | field             | type                                         |
//! |-------------------|----------------------------------------------|
//! | magic             | 4 bytes `MCRF`                               |
//! | version           | u16 (currently 1)                            |
//! | transport         | u8 (0 datagram, 1 stream)                    |
//! | devices           | u8 bit set (bit 0 wrist, bit 1 pocket)       |
//! | start time        | u64, µs since the Unix epoch                 |
//! | calibration       | u32 length + profile text (may be empty)     |
//! | entries until EOF | arrival µs u64, length u16, payload bytes    |
//!
//! Payloads are stored exactly as received (whole datagrams, or stream
//! chunks), so replay repeats the framing and error paths of the session.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::binio::{put_string, put_u16, put_u64, put_u8, Reader, Truncated};

pub const RECORD_MAGIC: &[u8; 4] = b"MCRF";
pub const RECORD_VERSION: u16 = 1;
pub const DEVICES_BOTH: u8 = 0b11;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("corrupt record: {0}")]
    Corrupt(String),
    #[error("record version {0} not supported")]
    Version(u16),
    #[error("payload of {0} bytes does not fit an entry")]
    Oversized(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<Truncated> for RecordError {
    fn from(t: Truncated) -> Self {
        RecordError::Corrupt(format!("truncated header at byte {}", t.offset))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    Datagram,
    Stream,
}

impl Transport {
    fn code(self) -> u8 {
        match self {
            Transport::Datagram => 0,
            Transport::Stream => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Transport::Datagram),
            1 => Some(Transport::Stream),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordHeader {
    pub transport: Transport,
    pub devices: u8,
    pub start_unix_us: u64,
    /// Calibration profile text in use while recording; empty if none.
    pub calibration: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordEntry {
    pub arrival_us: u64,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordFile {
    pub header: RecordHeader,
    pub entries: Vec<RecordEntry>,
    /// A partially written final entry was discarded.
    pub truncated_tail: bool,
}

fn encode_header(h: &RecordHeader) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + h.calibration.len());
    out.extend_from_slice(RECORD_MAGIC);
    put_u16(&mut out, RECORD_VERSION);
    put_u8(&mut out, h.transport.code());
    put_u8(&mut out, h.devices);
    put_u64(&mut out, h.start_unix_us);
    put_string(&mut out, &h.calibration);
    out
}

fn encode_entry(out: &mut Vec<u8>, arrival_us: u64, payload: &[u8]) -> Result<(), RecordError> {
    let len = u16::try_from(payload.len()).map_err(|_| RecordError::Oversized(payload.len()))?;
    put_u64(out, arrival_us);
    put_u16(out, len);
    out.extend_from_slice(payload);
    Ok(())
}

impl RecordFile {
    pub fn new(header: RecordHeader) -> Self {
        RecordFile { header, entries: Vec::new(), truncated_tail: false }
    }

    pub fn encode(&self) -> Result<Vec<u8>, RecordError> {
        let mut out = encode_header(&self.header);
        for e in &self.entries {
            encode_entry(&mut out, e.arrival_us, &e.payload)?;
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, RecordError> {
        let mut r = Reader::new(bytes);
        if r.bytes(4)? != RECORD_MAGIC {
            return Err(RecordError::Corrupt("bad magic".into()));
        }
        let version = r.u16()?;
        if version != RECORD_VERSION {
            return Err(RecordError::Version(version));
        }
        let code = r.u8()?;
        let transport = Transport::from_code(code).ok_or_else(|| RecordError::Corrupt(format!("transport {code}")))?;
        let header = RecordHeader { transport, devices: r.u8()?, start_unix_us: r.u64()?, calibration: r.string()? };
        let mut file = RecordFile::new(header);
        while r.remaining() > 0 {
            let entry = (|| -> Result<RecordEntry, Truncated> {
                let arrival_us = r.u64()?;
                let len = r.u16()? as usize;
                Ok(RecordEntry { arrival_us, payload: r.bytes(len)?.to_vec() })
            })();
            match entry {
                Ok(e) => file.entries.push(e),
                Err(_) => {
                    file.truncated_tail = true;
                    break;
                }
            }
        }
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self, RecordError> {
        RecordFile::decode(&std::fs::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), RecordError> {
        Ok(std::fs::write(path, self.encode()?)?)
    }
}

/// Streams a record to any writer, one entry at a time.
pub struct RecordWriter<W: Write> {
    inner: W,
    buf: Vec<u8>,
    pub entries: u64,
}

impl<W: Write> RecordWriter<W> {
    pub fn new(mut inner: W, header: &RecordHeader) -> Result<Self, RecordError> {
        inner.write_all(&encode_header(header))?;
        Ok(RecordWriter { inner, buf: Vec::with_capacity(64), entries: 0 })
    }

    pub fn append(&mut self, arrival_us: u64, payload: &[u8]) -> Result<(), RecordError> {
        self.buf.clear();
        encode_entry(&mut self.buf, arrival_us, payload)?;
        self.inner.write_all(&self.buf)?;
        self.entries += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, RecordError> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> RecordHeader {
        RecordHeader {
            transport: Transport::Datagram,
            devices: DEVICES_BOTH,
            start_unix_us: 1_700_000_000_000_000,
            calibration: "format = \"x\"\n".into(),
        }
    }

    #[test]
    fn round_trip_and_writer_agree() {
        let mut f = RecordFile::new(header());
        f.entries.push(RecordEntry { arrival_us: 5, payload: vec![1, 2, 3] });
        f.entries.push(RecordEntry { arrival_us: 9, payload: vec![] });
        let bytes = f.encode().unwrap();
        assert_eq!(RecordFile::decode(&bytes).unwrap(), f);
        let mut w = RecordWriter::new(Vec::new(), &header()).unwrap();
        w.append(5, &[1, 2, 3]).unwrap();
        w.append(9, &[]).unwrap();
        assert_eq!(w.finish().unwrap(), bytes);
    }

    #[test]
    fn partial_tail_is_dropped() {
        let mut f = RecordFile::new(header());
        f.entries.push(RecordEntry { arrival_us: 5, payload: vec![7; 48] });
        let bytes = f.encode().unwrap();
        let cut = RecordFile::decode(&bytes[..bytes.len() - 10]).unwrap();
        assert!(cut.truncated_tail);
        assert!(cut.entries.is_empty());
        assert!(matches!(RecordFile::decode(b"MCRX"), Err(RecordError::Corrupt(_))));
    }
}
