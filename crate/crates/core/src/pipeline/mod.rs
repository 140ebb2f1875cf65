//! Streaming shell around the engine: wire protocol, reordering and clock
//! alignment, the per-tick compute stage, record/replay and configuration.

pub mod config;
pub mod engine;
pub mod ingest;
pub mod live;
pub mod offline;
pub mod protocol;
pub mod record;
pub mod session;
pub mod simulate;

pub use config::{Endpoint, OutputSink, SessionConfig};
pub use engine::{Engine, EngineConfig, Models, MotionRecord};
pub use ingest::{AlignedTick, Aligner, Reorderer, REORDER_WINDOW_US, STARVATION_US};
pub use protocol::{decode_packet, encode_packet, DeviceId, ProtocolError, SensorPacket, PACKET_LEN};
pub use record::{RecordError, RecordFile, RecordHeader, RecordWriter, Transport};
pub use session::{aligned_pairs, records_to_jsonl, ComputeStage, Ingestor, Session, SessionStats};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("frame {frame}: {message}")]
    Frame { frame: u64, message: String },
    #[error("io: {0}")]
    Io(String),
    #[error("parse: {0}")]
    Parse(String),
    #[error(transparent)]
    Record(#[from] RecordError),
}

impl PipelineError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "CONFIG",
            PipelineError::Frame { .. } => "FRAME",
            PipelineError::Io(_) => "IO",
            PipelineError::Parse(_) => "PARSE",
            PipelineError::Record(_) => "RECORD",
        }
    }
}
