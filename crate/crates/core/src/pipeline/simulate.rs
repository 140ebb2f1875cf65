//! Synthetic network traffic: packets from sensor frames, arrival times and
//! fault injection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::protocol::{encode_packet, DeviceId, SensorPacket};
use super::record::{RecordEntry, RecordFile, RecordHeader, Transport, DEVICES_BOTH};
use crate::calibration::{calibrate, CalibConfig, CalibError, CalibProfile, CalibSampleSet, SensorFrame};
use crate::kinematics::Skeleton;
use crate::synth::sensors::{SensorSimulator, SessionTruth};
use crate::synth::SynthFrameSet;

/// Frames per calibration window.
pub const CALIB_WINDOW_FRAMES: usize = 90;
/// Height of the same-height window above the floor, meters.
pub const SAME_HEIGHT_LEVEL: f64 = 1.0;
/// Device time at which the motion stream starts, seconds.
pub const SESSION_START_S: f64 = 10.0;

/// Raw device streams of one simulated session with their calibration.
#[derive(Debug, Clone)]
pub struct SyntheticSession {
    pub same_height: CalibSampleSet,
    pub tpose: CalibSampleSet,
    pub profile: CalibProfile,
    pub pairs: Vec<(SensorFrame, SensorFrame)>,
}

/// Same-height window, T-pose window, calibration, then the motion stream,
/// all from one simulated pair of devices.
pub fn synthetic_session(
    set: &SynthFrameSet,
    truth: SessionTruth,
    skel: &Skeleton,
    seed: u64,
) -> Result<SyntheticSession, CalibError> {
    let mut sim = SensorSimulator::new(truth, seed);
    let same_height = sim.same_height_window(SAME_HEIGHT_LEVEL, CALIB_WINDOW_FRAMES, 0.0);
    let tpose = sim.tpose_window(skel, CALIB_WINDOW_FRAMES, 4.0);
    let profile = calibrate(&same_height, &tpose, &CalibConfig::new(skel), skel)?;
    let pairs = sim.stream(set, SESSION_START_S);
    Ok(SyntheticSession { same_height, tpose, profile, pairs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimPacket {
    pub arrival_us: u64,
    pub packet_index: usize,
    pub device: DeviceId,
    pub bytes: [u8; 48],
}

/// One packet per device per frame; arrival is the device timestamp plus a
/// fixed latency.
pub fn packetize(pairs: &[(SensorFrame, SensorFrame)], latency_us: u64) -> Vec<SimPacket> {
    let mut out = Vec::with_capacity(2 * pairs.len());
    for (i, (w, p)) in pairs.iter().enumerate() {
        for (device, frame) in [(DeviceId::Wrist, w), (DeviceId::Pocket, p)] {
            let packet = SensorPacket::from_frame(device, i as u32, frame);
            out.push(SimPacket {
                arrival_us: packet.timestamp_us + latency_us,
                packet_index: out.len(),
                device,
                bytes: encode_packet(&packet),
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultInjector {
    pub drop_prob: f64,
    /// Probability of swapping a packet's arrival with the device's next one.
    pub swap_prob: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InjectedFaults {
    pub dropped: [u64; 2],
    pub swapped: [u64; 2],
}

impl FaultInjector {
    /// Drops and swaps per device. The first and last packet of each device
    /// are never dropped, so every drop is an interior gap a receiver can
    /// detect. Output is sorted by arrival.
    pub fn apply(&self, packets: &[SimPacket]) -> (Vec<SimPacket>, InjectedFaults) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut faults = InjectedFaults::default();
        let mut out = Vec::with_capacity(packets.len());
        for device in DeviceId::ALL {
            let mut lane: Vec<SimPacket> = packets.iter().filter(|p| p.device == device).copied().collect();
            let n = lane.len();
            let mut k = 0;
            while k + 1 < n {
                if rng.random_bool(self.swap_prob) {
                    let a = lane[k].arrival_us;
                    lane[k].arrival_us = lane[k + 1].arrival_us;
                    lane[k + 1].arrival_us = a;
                    faults.swapped[device.index()] += 1;
                    k += 2;
                } else {
                    k += 1;
                }
            }
            for (i, p) in lane.into_iter().enumerate() {
                let interior = i > 0 && i + 1 < n;
                if interior && rng.random_bool(self.drop_prob) {
                    faults.dropped[device.index()] += 1;
                } else {
                    out.push(p);
                }
            }
        }
        out.sort_by_key(|p| (p.arrival_us, p.packet_index));
        (out, faults)
    }
}

/// A datagram recording of simulated traffic.
pub fn to_record(packets: &[SimPacket], calibration: String) -> RecordFile {
    RecordFile {
        header: RecordHeader { transport: Transport::Datagram, devices: DEVICES_BOTH, start_unix_us: 0, calibration },
        entries: packets.iter().map(|p| RecordEntry { arrival_us: p.arrival_us, payload: p.bytes.to_vec() }).collect(),
        truncated_tail: false,
    }
}
