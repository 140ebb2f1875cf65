//! Session configuration file (TOML). Relative paths resolve against the
//! directory holding the file.
//!
//! ```toml
//! listen = "udp://0.0.0.0:9000"      # or tcp://host:port
//! calibration = "calib.toml"
//! checkpoint = "ckpt"                # directory with pose.mckp, velocity.mckp
//! output = "motion.jsonl"            # "-" for standard output
//! frame_rate = 30.0
//! queue_capacity = 1024
//! reorder_window_ms = 100
//! starvation_ms = 500
//! seed = 0
//!
//! [model]                            # used when no checkpoint is given
//! hidden = 512
//! layers = 2
//!
//! [filter]
//! q_accel = 0.5
//! r_meas = 0.0025
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::PipelineError;
use crate::baro::FilterParams;
use crate::neural::NetDims;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Udp(String),
    Tcp(String),
}

impl Endpoint {
    pub fn parse(s: &str) -> Result<Self, PipelineError> {
        let bad = || PipelineError::Config(format!("listen endpoint `{s}` must be udp://host:port or tcp://host:port"));
        let (scheme, addr) = s.split_once("://").ok_or_else(bad)?;
        if addr.rsplit_once(':').is_none_or(|(_, port)| port.parse::<u16>().is_err()) {
            return Err(bad());
        }
        match scheme {
            "udp" => Ok(Endpoint::Udp(addr.to_string())),
            "tcp" => Ok(Endpoint::Tcp(addr.to_string())),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OutputSink {
    Stdout,
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    hidden: usize,
    layers: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = NetDims::default();
        ModelSection { hidden: d.hidden, layers: d.layers }
    }
}

fn default_listen() -> String {
    "udp://0.0.0.0:9000".into()
}

fn default_frame_rate() -> f64 {
    30.0
}

fn default_queue() -> usize {
    1024
}

fn default_reorder_ms() -> u64 {
    100
}

fn default_starvation_ms() -> u64 {
    500
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default = "default_listen")]
    listen: String,
    calibration: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    skeleton: Option<PathBuf>,
    output: Option<String>,
    #[serde(default = "default_frame_rate")]
    frame_rate: f64,
    #[serde(default = "default_queue")]
    queue_capacity: usize,
    #[serde(default = "default_reorder_ms")]
    reorder_window_ms: u64,
    #[serde(default = "default_starvation_ms")]
    starvation_ms: u64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    model: ModelSection,
    #[serde(default)]
    filter: FilterParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub listen: Endpoint,
    pub calibration: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub skeleton: Option<PathBuf>,
    pub output: OutputSink,
    pub frame_rate: f64,
    pub queue_capacity: usize,
    pub reorder_window_us: u64,
    pub starvation_us: u64,
    pub seed: u64,
    pub model: NetDims,
    pub filter: FilterParams,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig::from_text("", Path::new(".")).expect("defaults are valid")
    }
}

impl SessionConfig {
    pub fn from_text(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let f: ConfigFile = toml::from_str(text).map_err(|e| PipelineError::Config(e.message().to_string()))?;
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base_dir.join(p) };
        let output = match f.output.as_deref() {
            None | Some("-") => OutputSink::Stdout,
            Some(p) => OutputSink::File(resolve(PathBuf::from(p))),
        };
        let cfg = SessionConfig {
            listen: Endpoint::parse(&f.listen)?,
            calibration: f.calibration.map(resolve),
            checkpoint: f.checkpoint.map(resolve),
            skeleton: f.skeleton.map(resolve),
            output,
            frame_rate: f.frame_rate,
            queue_capacity: f.queue_capacity,
            reorder_window_us: f.reorder_window_ms * 1000,
            starvation_us: f.starvation_ms * 1000,
            seed: f.seed,
            model: NetDims::new(f.model.hidden, f.model.layers),
            filter: f.filter,
        };
        cfg.validate_values()?;
        Ok(cfg)
    }

    /// Parses and checks that every referenced input path exists.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let cfg = SessionConfig::from_text(&text, base)?;
        cfg.check_paths()?;
        Ok(cfg)
    }

    fn validate_values(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return bad("frame_rate must be positive");
        }
        if self.queue_capacity == 0 {
            return bad("queue_capacity must be positive");
        }
        if self.model.hidden == 0 || self.model.layers == 0 {
            return bad("model sizes must be positive");
        }
        let f = &self.filter;
        if !(f.q_accel > 0.0 && f.r_meas > 0.0 && f.nominal_dt > 0.0) {
            return bad("filter variances and nominal_dt must be positive");
        }
        Ok(())
    }

    pub fn check_paths(&self) -> Result<(), PipelineError> {
        let missing = |what: &str, p: &Path| PipelineError::Config(format!("{what} not found: {}", p.display()));
        if let Some(p) = &self.calibration {
            if !p.is_file() {
                return Err(missing("calibration profile", p));
            }
        }
        if let Some(p) = &self.skeleton {
            if !p.is_file() {
                return Err(missing("skeleton", p));
            }
        }
        if let Some(dir) = &self.checkpoint {
            for name in [super::engine::POSE_CHECKPOINT_FILE, super::engine::VELOCITY_CHECKPOINT_FILE] {
                if !dir.join(name).is_file() {
                    return Err(missing("checkpoint", &dir.join(name)));
                }
            }
        }
        if let OutputSink::File(p) = &self.output {
            if p.parent().is_some_and(|d| !d.as_os_str().is_empty() && !d.is_dir()) {
                return Err(missing("output directory", p.parent().expect("checked")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_relative_paths() {
        let cfg = SessionConfig::from_text(
            "listen = \"tcp://127.0.0.1:7000\"\ncalibration = \"c.toml\"\noutput = \"/tmp/o.jsonl\"\n[filter]\nq_accel = 0.7\n",
            Path::new("/etc/mocap"),
        )
        .unwrap();
        assert_eq!(cfg.listen, Endpoint::Tcp("127.0.0.1:7000".into()));
        assert_eq!(cfg.calibration, Some(PathBuf::from("/etc/mocap/c.toml")));
        assert_eq!(cfg.output, OutputSink::File("/tmp/o.jsonl".into()));
        assert_eq!(cfg.frame_rate, 30.0);
        assert_eq!(cfg.reorder_window_us, 100_000);
        assert_eq!(cfg.filter.q_accel, 0.7);
        assert_eq!(cfg.filter.r_meas, 0.0025);
        assert_eq!(cfg.model, NetDims::default());
    }

    #[test]
    fn rejects_bad_values() {
        let base = Path::new(".");
        assert!(SessionConfig::from_text("frame_rate = 0.0", base).is_err());
        assert!(SessionConfig::from_text("listen = \"http://x:1\"", base).is_err());
        assert!(SessionConfig::from_text("listen = \"udp://nohost\"", base).is_err());
        assert!(SessionConfig::from_text("bogus = 1", base).is_err());
        let cfg = SessionConfig::from_text("calibration = \"/nonexistent/c.toml\"", base).unwrap();
        assert!(cfg.check_paths().is_err());
    }
}
