//! Packet bytes in, motion records out.

use serde::Serialize;

use super::engine::{Engine, MotionRecord};
use super::ingest::{AlignedTick, Aligner, ReorderStats, Reorderer};
use super::protocol::{decode_packet, DeviceId, SensorPacket, StreamDecoder, PACKET_LEN};
use super::record::{RecordFile, Transport};
use super::PipelineError;
use crate::calibration::SensorFrame;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SessionStats {
    pub wrist: ReorderStats,
    pub pocket: ReorderStats,
    /// Datagrams or stream frames that failed validation.
    pub rejected: u64,
    /// Stream bytes discarded while resynchronizing.
    pub skipped_bytes: u64,
    /// Packets discarded by the bounded queue (live mode).
    pub queue_dropped: u64,
    /// Packets older than the device's latest timestamp.
    pub out_of_order: u64,
    pub ticks: u64,
    pub degraded_ticks: [u64; 2],
    pub degenerate_outputs: u64,
}

impl SessionStats {
    pub fn reorder(&self, d: DeviceId) -> &ReorderStats {
        match d {
            DeviceId::Wrist => &self.wrist,
            DeviceId::Pocket => &self.pocket,
        }
    }
}

/// Ingestion stage: framing, validation and per-device reordering.
#[derive(Debug, Clone)]
pub struct Ingestor {
    transport: Transport,
    stream: StreamDecoder,
    reorder: [Reorderer; 2],
    pub rejected: u64,
}

impl Ingestor {
    pub fn new(transport: Transport, window_us: u64) -> Self {
        Ingestor {
            transport,
            stream: StreamDecoder::default(),
            reorder: [Reorderer::new(window_us), Reorderer::new(window_us)],
            rejected: 0,
        }
    }

    fn accept(&mut self, arrival_us: u64, frame: &[u8]) {
        match decode_packet(frame) {
            Ok(p) => self.reorder[p.device.index()].push(arrival_us, p),
            Err(_) => self.rejected += 1,
        }
    }

    /// Takes one received payload and appends every packet released by
    /// time `arrival_us`.
    pub fn ingest(&mut self, arrival_us: u64, payload: &[u8], out: &mut Vec<SensorPacket>) {
        match self.transport {
            Transport::Datagram => {
                if payload.len() == PACKET_LEN {
                    self.accept(arrival_us, payload);
                } else {
                    self.rejected += 1;
                }
            }
            Transport::Stream => {
                self.stream.push(payload);
                while let Some(frame) = self.stream.next_frame() {
                    self.accept(arrival_us, &frame);
                }
            }
        }
        self.poll(arrival_us, out);
    }

    pub fn poll(&mut self, now_us: u64, out: &mut Vec<SensorPacket>) {
        for r in &mut self.reorder {
            r.poll(now_us, out);
        }
    }

    pub fn flush(&mut self, out: &mut Vec<SensorPacket>) {
        for r in &mut self.reorder {
            r.flush(out);
        }
    }

    pub fn fill_stats(&self, s: &mut SessionStats) {
        s.wrist = self.reorder[0].stats;
        s.pocket = self.reorder[1].stats;
        s.rejected = self.rejected;
        s.skipped_bytes = self.stream.skipped_bytes;
    }
}

/// Compute stage: clock alignment and the engine. Single owner, strictly
/// sequential.
pub struct ComputeStage {
    aligner: Aligner,
    engine: Engine,
    ticks: Vec<AlignedTick>,
    degraded_ticks: [u64; 2],
}

impl ComputeStage {
    pub fn new(engine: Engine, frame_rate: f64, starvation_us: u64) -> Self {
        ComputeStage { aligner: Aligner::new(frame_rate, starvation_us), engine, ticks: Vec::new(), degraded_ticks: [0; 2] }
    }

    pub fn push(&mut self, packets: &[SensorPacket], out: &mut Vec<MotionRecord>) -> Result<(), PipelineError> {
        for &p in packets {
            self.aligner.push(p);
        }
        self.aligner.poll(&mut self.ticks);
        self.run_ticks(out)
    }

    pub fn finish(&mut self, out: &mut Vec<MotionRecord>) -> Result<(), PipelineError> {
        self.aligner.flush(&mut self.ticks);
        self.run_ticks(out)
    }

    fn run_ticks(&mut self, out: &mut Vec<MotionRecord>) -> Result<(), PipelineError> {
        for tick in self.ticks.drain(..) {
            for (count, s) in self.degraded_ticks.iter_mut().zip(&tick.samples) {
                *count += u64::from(s.degraded);
            }
            out.push(self.engine.step(&tick)?);
        }
        Ok(())
    }

    pub fn fill_stats(&self, s: &mut SessionStats) {
        s.out_of_order = self.aligner.out_of_order;
        s.ticks = self.engine.frames();
        s.degraded_ticks = self.degraded_ticks;
        s.degenerate_outputs = self.engine.degenerate_outputs;
    }
}

/// Both stages in one thread; used for replay and tests.
pub struct Session {
    ingestor: Ingestor,
    compute: ComputeStage,
    delivered: Vec<SensorPacket>,
}

impl Session {
    pub fn new(engine: Engine, transport: Transport, frame_rate: f64, reorder_window_us: u64, starvation_us: u64) -> Self {
        Session {
            ingestor: Ingestor::new(transport, reorder_window_us),
            compute: ComputeStage::new(engine, frame_rate, starvation_us),
            delivered: Vec::new(),
        }
    }

    pub fn ingest(&mut self, arrival_us: u64, payload: &[u8], out: &mut Vec<MotionRecord>) -> Result<(), PipelineError> {
        self.delivered.clear();
        self.ingestor.ingest(arrival_us, payload, &mut self.delivered);
        self.compute.push(&self.delivered, out)
    }

    pub fn finish(&mut self, out: &mut Vec<MotionRecord>) -> Result<(), PipelineError> {
        self.delivered.clear();
        self.ingestor.flush(&mut self.delivered);
        self.compute.push(&self.delivered, out)?;
        self.compute.finish(out)
    }

    pub fn stats(&self) -> SessionStats {
        let mut s = SessionStats::default();
        self.ingestor.fill_stats(&mut s);
        self.compute.fill_stats(&mut s);
        s
    }

    /// Runs a whole record through the session.
    pub fn replay(mut self, record: &RecordFile) -> Result<(Vec<MotionRecord>, SessionStats), PipelineError> {
        let mut out = Vec::new();
        for e in &record.entries {
            self.ingest(e.arrival_us, &e.payload, &mut out)?;
        }
        self.finish(&mut out)?;
        Ok((out, self.stats()))
    }
}

/// Serializes records as JSON lines.
pub fn records_to_jsonl(records: &[MotionRecord]) -> String {
    records.iter().map(MotionRecord::to_json_line).collect()
}

/// (wrist, pocket) sensor frames of a recording, one pair per engine tick.
pub fn aligned_pairs(record: &RecordFile, frame_rate: f64, reorder_window_us: u64, starvation_us: u64) -> Vec<(SensorFrame, SensorFrame)> {
    let mut ingestor = Ingestor::new(record.header.transport, reorder_window_us);
    let mut aligner = Aligner::new(frame_rate, starvation_us);
    let mut packets = Vec::new();
    let mut ticks = Vec::new();
    for e in &record.entries {
        ingestor.ingest(e.arrival_us, &e.payload, &mut packets);
    }
    ingestor.flush(&mut packets);
    for p in packets {
        aligner.push(p);
    }
    aligner.flush(&mut ticks);
    ticks
        .iter()
        .filter(|t| !t.samples.iter().any(|s| s.degraded))
        .map(|t| (t.sample(DeviceId::Wrist).packet.to_frame(), t.sample(DeviceId::Pocket).packet.to_frame()))
        .collect()
}
