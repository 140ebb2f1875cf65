//! Per-device reordering by sequence number and alignment of both devices
//! onto the engine clock.
//!
//! All times are microseconds. Arrival times drive the reorder window and
//! device timestamps drive the engine clock, so a replayed packet log gives
//! the same ticks as the live session that produced it.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use super::protocol::{DeviceId, SensorPacket};

pub const REORDER_WINDOW_US: u64 = 100_000;
pub const STARVATION_US: u64 = 500_000;
/// Delivered sequence numbers remembered for duplicate detection.
const DUPLICATE_MEMORY: usize = 1024;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ReorderStats {
    pub received: u64,
    pub delivered: u64,
    /// Arrived after their slot was given up as missing.
    pub late: u64,
    pub duplicate: u64,
    /// Sequence numbers never received before their slot was given up.
    pub missing: u64,
}

/// Releases one device's packets in sequence order. A gap is held open until
/// the packet after it has waited `window_us`; the very first packet waits
/// the same window so that an early reordered start is still sorted.
#[derive(Debug, Clone)]
pub struct Reorderer {
    window_us: u64,
    next_seq: Option<u32>,
    pending: BTreeMap<u32, (u64, SensorPacket)>,
    recent: BTreeSet<u32>,
    pub stats: ReorderStats,
}

impl Reorderer {
    pub fn new(window_us: u64) -> Self {
        Reorderer { window_us, next_seq: None, pending: BTreeMap::new(), recent: BTreeSet::new(), stats: ReorderStats::default() }
    }

    pub fn push(&mut self, arrival_us: u64, packet: SensorPacket) {
        self.stats.received += 1;
        let seq = packet.seq;
        if self.pending.contains_key(&seq) || self.recent.contains(&seq) {
            self.stats.duplicate += 1;
            return;
        }
        if self.next_seq.is_some_and(|next| seq < next) {
            self.stats.late += 1;
            return;
        }
        self.pending.insert(seq, (arrival_us, packet));
    }

    /// Packets ready at `now_us`, in sequence order.
    pub fn poll(&mut self, now_us: u64, out: &mut Vec<SensorPacket>) {
        while let Some((&seq, &(arrival, _))) = self.pending.first_key_value() {
            let in_order = self.next_seq == Some(seq);
            let expired = now_us >= arrival.saturating_add(self.window_us);
            if !in_order && !expired {
                break;
            }
            self.release(seq, out);
        }
    }

    /// Releases everything still pending (end of stream).
    pub fn flush(&mut self, out: &mut Vec<SensorPacket>) {
        while let Some(&seq) = self.pending.keys().next() {
            self.release(seq, out);
        }
    }

    fn release(&mut self, seq: u32, out: &mut Vec<SensorPacket>) {
        let (_, packet) = self.pending.remove(&seq).expect("pending key");
        if let Some(next) = self.next_seq {
            self.stats.missing += u64::from(seq - next);
        }
        self.next_seq = Some(seq.wrapping_add(1));
        self.recent.insert(seq);
        if self.recent.len() > DUPLICATE_MEMORY {
            self.recent.pop_first();
        }
        self.stats.delivered += 1;
        out.push(packet);
    }
}

/// One device's contribution to a tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickSample {
    /// Latest packet with a timestamp at or before the tick.
    pub packet: SensorPacket,
    /// First tick to use this packet.
    pub fresh: bool,
    /// No packet for longer than the starvation limit.
    pub degraded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignedTick {
    pub index: u64,
    /// Device-clock time of the tick, µs.
    pub time_us: u64,
    pub samples: [TickSample; 2],
}

impl AlignedTick {
    pub fn sample(&self, d: DeviceId) -> &TickSample {
        &self.samples[d.index()]
    }
}

#[derive(Debug, Clone, Default)]
struct DeviceLane {
    queue: VecDeque<SensorPacket>,
    held: Option<SensorPacket>,
    held_used: bool,
    first_us: Option<u64>,
    latest_us: Option<u64>,
}

impl DeviceLane {
    fn advance_to(&mut self, tick_us: u64) {
        while self.queue.front().is_some_and(|p| p.timestamp_us <= tick_us) {
            self.held = self.queue.pop_front();
            self.held_used = false;
        }
    }
}

/// Zero-order hold of both devices onto a fixed-rate clock that starts at
/// the later of the two first timestamps. A tick fires once both devices
/// have reported past it, or once either device is a full starvation period
/// past it; the lagging device is then held and flagged degraded if its
/// held sample is older than the starvation limit.
#[derive(Debug, Clone)]
pub struct Aligner {
    period_us: f64,
    starvation_us: u64,
    lanes: [DeviceLane; 2],
    start_us: Option<u64>,
    next_index: u64,
    /// Packets with a timestamp older than the held one.
    pub out_of_order: u64,
}

impl Aligner {
    pub fn new(frame_rate: f64, starvation_us: u64) -> Self {
        Aligner {
            period_us: 1e6 / frame_rate,
            starvation_us,
            lanes: Default::default(),
            start_us: None,
            next_index: 0,
            out_of_order: 0,
        }
    }

    pub fn push(&mut self, p: SensorPacket) {
        let lane = &mut self.lanes[p.device.index()];
        if lane.latest_us.is_some_and(|l| p.timestamp_us < l) {
            self.out_of_order += 1;
            return;
        }
        lane.latest_us = Some(p.timestamp_us);
        lane.first_us.get_or_insert(p.timestamp_us);
        lane.queue.push_back(p);
        if self.start_us.is_none() {
            if let [Some(a), Some(b)] = self.lanes.each_ref().map(|l| l.first_us) {
                self.start_us = Some(a.max(b));
            }
        }
    }

    fn tick_time(&self, index: u64) -> Option<u64> {
        self.start_us.map(|s| s + (index as f64 * self.period_us).round() as u64)
    }

    /// Fires every tick that is due.
    pub fn poll(&mut self, out: &mut Vec<AlignedTick>) {
        self.fire(false, out);
    }

    /// Fires every tick covered by both devices (end of stream).
    pub fn flush(&mut self, out: &mut Vec<AlignedTick>) {
        self.fire(true, out);
    }

    fn fire(&mut self, at_end: bool, out: &mut Vec<AlignedTick>) {
        while let Some(tick_us) = self.tick_time(self.next_index) {
            let latest = self.lanes.each_ref().map(|l| l.latest_us.unwrap_or(0));
            let covered = latest.iter().all(|&l| l >= tick_us);
            let starved = !at_end && latest.iter().any(|&l| l >= tick_us + self.starvation_us);
            if !covered && !starved {
                break;
            }
            for lane in &mut self.lanes {
                lane.advance_to(tick_us);
            }
            let samples = self.lanes.each_mut().map(|lane| {
                let packet = lane.held.expect("clock starts after both devices report");
                let fresh = !lane.held_used;
                lane.held_used = true;
                TickSample { packet, fresh, degraded: tick_us - packet.timestamp_us.min(tick_us) > self.starvation_us }
            });
            out.push(AlignedTick { index: self.next_index, time_us: tick_us, samples });
            self.next_index += 1;
        }
    }
}
