//! Live sessions over UDP or TCP.
//!
//! The receive thread owns the socket, the optional recorder and the
//! ingestion stage. It hands released packets to the compute stage through
//! a bounded queue that drops its oldest entry when full, so inference never
//! blocks the network path.

use std::io::{ErrorKind, Read, Write};
use std::net::{TcpListener, TcpStream, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use crossbeam_channel::{bounded, Receiver, RecvTimeoutError, Sender, TrySendError};

use super::config::Endpoint;
use super::engine::MotionRecord;
use super::protocol::SensorPacket;
use super::record::{RecordError, RecordHeader, RecordWriter, Transport, DEVICES_BOTH};
use super::session::{ComputeStage, Ingestor, SessionStats};
use super::PipelineError;

const POLL_INTERVAL: Duration = Duration::from_millis(5);

pub fn unix_time_us() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_micros() as u64).unwrap_or(0)
}

/// Bounded queue whose producer evicts the oldest entry instead of waiting.
pub struct DropOldestQueue<T> {
    tx: Sender<T>,
    rx: Receiver<T>,
    dropped: Arc<AtomicU64>,
}

impl<T> Clone for DropOldestQueue<T> {
    fn clone(&self) -> Self {
        DropOldestQueue { tx: self.tx.clone(), rx: self.rx.clone(), dropped: Arc::clone(&self.dropped) }
    }
}

impl<T> DropOldestQueue<T> {
    pub fn new(capacity: usize) -> Self {
        let (tx, rx) = bounded(capacity.max(1));
        DropOldestQueue { tx, rx, dropped: Arc::new(AtomicU64::new(0)) }
    }

    pub fn push(&self, mut item: T) {
        loop {
            match self.tx.try_send(item) {
                Ok(()) => return,
                Err(TrySendError::Full(back)) => {
                    if self.rx.try_recv().is_ok() {
                        self.dropped.fetch_add(1, Ordering::Relaxed);
                    }
                    item = back;
                }
                Err(TrySendError::Disconnected(_)) => return,
            }
        }
    }

    pub fn receiver(&self) -> &Receiver<T> {
        &self.rx
    }

    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }
}

pub struct LiveOptions {
    pub endpoint: Endpoint,
    pub queue_capacity: usize,
    pub reorder_window_us: u64,
    /// Stop after this long; `None` runs until `stop` is set.
    pub duration: Option<Duration>,
    pub stop: Arc<AtomicBool>,
    /// Calibration text stored in the record header.
    pub calibration_snapshot: String,
}

enum Socket {
    Udp(UdpSocket),
    Tcp { listener: TcpListener, conns: Vec<TcpStream> },
}

impl Socket {
    fn bind(endpoint: &Endpoint) -> Result<Self, PipelineError> {
        let io = |e: std::io::Error| PipelineError::Io(format!("bind {endpoint:?}: {e}"));
        match endpoint {
            Endpoint::Udp(addr) => {
                let s = UdpSocket::bind(addr).map_err(io)?;
                s.set_read_timeout(Some(POLL_INTERVAL)).map_err(io)?;
                Ok(Socket::Udp(s))
            }
            Endpoint::Tcp(addr) => {
                let listener = TcpListener::bind(addr).map_err(io)?;
                listener.set_nonblocking(true).map_err(io)?;
                Ok(Socket::Tcp { listener, conns: Vec::new() })
            }
        }
    }

    fn transport(&self) -> Transport {
        match self {
            Socket::Udp(_) => Transport::Datagram,
            Socket::Tcp { .. } => Transport::Stream,
        }
    }

    /// Calls `on_payload` for everything received within one poll interval.
    fn receive(&mut self, buf: &mut [u8], mut on_payload: impl FnMut(&[u8])) {
        match self {
            Socket::Udp(s) => {
                if let Ok(n) = s.recv(buf) {
                    on_payload(&buf[..n]);
                }
            }
            Socket::Tcp { listener, conns } => {
                while let Ok((c, _)) = listener.accept() {
                    if c.set_nonblocking(true).is_ok() {
                        conns.push(c);
                    }
                }
                let mut any = false;
                conns.retain_mut(|c| match c.read(buf) {
                    Ok(0) => false,
                    Ok(n) => {
                        any = true;
                        on_payload(&buf[..n]);
                        true
                    }
                    Err(e) => e.kind() == ErrorKind::WouldBlock || e.kind() == ErrorKind::Interrupted,
                });
                if !any {
                    thread::sleep(POLL_INTERVAL);
                }
            }
        }
    }
}

enum Message {
    Packets(Vec<SensorPacket>),
}

struct ReceiveOutcome {
    ingestor: Ingestor,
    recorded: Option<Result<u64, RecordError>>,
}

fn receive_loop<W: Write>(
    mut socket: Socket,
    opts: &LiveOptions,
    queue: Option<DropOldestQueue<Message>>,
    mut recorder: Option<RecordWriter<W>>,
) -> ReceiveOutcome {
    let mut ingestor = Ingestor::new(socket.transport(), opts.reorder_window_us);
    let start = Instant::now();
    let mut buf = vec![0u8; 64 * 1024];
    let mut released = Vec::new();
    let mut record_error = None;
    loop {
        let elapsed = start.elapsed();
        if opts.stop.load(Ordering::Relaxed) || opts.duration.is_some_and(|d| elapsed >= d) {
            break;
        }
        socket.receive(&mut buf, |payload| {
            let arrival = start.elapsed().as_micros() as u64;
            if let Some(w) = recorder.as_mut() {
                // one entry holds at most u16::MAX bytes
                for chunk in payload.chunks(u16::MAX as usize) {
                    if let Err(e) = w.append(arrival, chunk) {
                        record_error.get_or_insert(e);
                    }
                }
            }
            ingestor.ingest(arrival, payload, &mut released);
        });
        ingestor.poll(start.elapsed().as_micros() as u64, &mut released);
        if let Some(q) = &queue {
            if !released.is_empty() {
                q.push(Message::Packets(std::mem::take(&mut released)));
            }
        } else {
            released.clear();
        }
    }
    ingestor.flush(&mut released);
    if let Some(q) = &queue {
        q.push(Message::Packets(released));
    }
    let recorded = recorder.map(|w| match record_error {
        Some(e) => Err(e),
        None => {
            let n = w.entries;
            w.finish().map(|_| n)
        }
    });
    ReceiveOutcome { ingestor, recorded }
}

/// Runs a live session until the deadline or the stop flag, writing each
/// record to `sink` as a JSON line. A recorder, when given, receives every
/// raw payload with its arrival time.
pub fn run_live<W: Write + Send + 'static>(
    opts: LiveOptions,
    mut compute: ComputeStage,
    sink: &mut dyn Write,
    recorder: Option<W>,
) -> Result<SessionStats, PipelineError> {
    let socket = Socket::bind(&opts.endpoint)?;
    let header = RecordHeader {
        transport: socket.transport(),
        devices: DEVICES_BOTH,
        start_unix_us: unix_time_us(),
        calibration: opts.calibration_snapshot.clone(),
    };
    let recorder = recorder.map(|w| RecordWriter::new(w, &header)).transpose()?;
    let queue = DropOldestQueue::new(opts.queue_capacity);
    let producer = queue.clone();
    let opts = Arc::new(opts);
    let thread_opts = Arc::clone(&opts);
    let handle = thread::spawn(move || receive_loop(socket, &thread_opts, Some(producer), recorder));
    let mut out = Vec::new();
    let io = |e: std::io::Error| PipelineError::Io(e.to_string());
    let mut failure = None;
    loop {
        match queue.receiver().recv_timeout(Duration::from_millis(50)) {
            Ok(Message::Packets(p)) => {
                if let Err(e) = compute.push(&p, &mut out) {
                    failure = Some(e);
                    opts.stop.store(true, Ordering::Relaxed);
                    break;
                }
                for r in out.drain(..) {
                    sink.write_all(r.to_json_line().as_bytes()).map_err(io)?;
                }
            }
            Err(RecvTimeoutError::Timeout) => {
                if handle.is_finished() && queue.receiver().is_empty() {
                    break;
                }
            }
            Err(RecvTimeoutError::Disconnected) => break,
        }
    }
    let outcome = handle.join().map_err(|_| PipelineError::Io("receive thread panicked".into()))?;
    if let Some(e) = failure {
        return Err(e);
    }
    while let Ok(Message::Packets(p)) = queue.receiver().try_recv() {
        compute.push(&p, &mut out)?;
    }
    compute.finish(&mut out)?;
    for r in out.drain(..) {
        sink.write_all(r.to_json_line().as_bytes()).map_err(io)?;
    }
    sink.flush().map_err(io)?;
    if let Some(r) = outcome.recorded {
        r?;
    }
    let mut stats = SessionStats::default();
    outcome.ingestor.fill_stats(&mut stats);
    compute.fill_stats(&mut stats);
    stats.queue_dropped = queue.dropped();
    Ok(stats)
}

/// Records raw traffic without running the engine. Returns the number of
/// entries written.
pub fn record_live<W: Write>(opts: &LiveOptions, writer: W) -> Result<u64, PipelineError> {
    let socket = Socket::bind(&opts.endpoint)?;
    let header = RecordHeader {
        transport: socket.transport(),
        devices: DEVICES_BOTH,
        start_unix_us: unix_time_us(),
        calibration: opts.calibration_snapshot.clone(),
    };
    let recorder = RecordWriter::new(writer, &header)?;
    let outcome = receive_loop(socket, opts, None, Some(recorder));
    Ok(outcome.recorded.expect("recorder present")?)
}

/// Convenience: the live output of `run_live` collected in memory.
pub fn collect_records(text: &str) -> Result<Vec<MotionRecord>, PipelineError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| PipelineError::Parse(format!("line {}: {e}", i + 1))))
        .collect()
}
