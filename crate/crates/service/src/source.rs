//! Packet sources: newline-delimited files, TCP streams and an embedded
//! simulator.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::net::TcpStream;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;
use xroads_core::protocol::{parse_frame_packet, PacketError};
use xroads_core::{ClassSet, FramePacket};
use xroads_sim::{presets, NoiseModel, Scenario, SimRun};

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("cannot open source {0}: {1}")]
    Open(String, String),
    #[error("source lost: {0}")]
    Lost(String),
    #[error("line {line}: {err}")]
    Record { line: u64, err: PacketError },
    #[error("{0}")]
    Unsupported(String),
}

/// Where a pipeline reads its packets from.
#[derive(Debug, Clone, PartialEq)]
pub enum InputSpec {
    File(PathBuf),
    /// `host:port` of a detector publishing newline-delimited packets.
    Tcp(String),
    /// A preset name or scenario file, simulated in process.
    Sim { scenario: String, seed: u64 },
}

impl fmt::Display for InputSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputSpec::File(p) => write!(f, "{}", p.display()),
            InputSpec::Tcp(a) => write!(f, "tcp://{a}"),
            InputSpec::Sim { scenario, seed } => write!(f, "sim:{scenario}?seed={seed}"),
        }
    }
}

impl FromStr for InputSpec {
    type Err = SourceError;

    /// `tcp://host:port`, `sim:<preset|file>[?seed=N]` or a file path.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(addr) = s.strip_prefix("tcp://") {
            if addr.is_empty() {
                return Err(SourceError::Unsupported("tcp:// needs host:port".into()));
            }
            return Ok(InputSpec::Tcp(addr.to_string()));
        }
        if let Some(rest) = s.strip_prefix("sim:") {
            let (scenario, seed) = match rest.split_once("?seed=") {
                Some((sc, seed)) => (
                    sc,
                    seed.parse()
                        .map_err(|_| SourceError::Unsupported(format!("bad seed in {s}")))?,
                ),
                None => (rest, 1),
            };
            return Ok(InputSpec::Sim { scenario: scenario.to_string(), seed });
        }
        Ok(InputSpec::File(PathBuf::from(s)))
    }
}

/// A preset name, or a path to a scenario file.
pub fn load_scenario(name: &str) -> Result<Scenario, SourceError> {
    if let Some(sc) = presets::by_name(name) {
        return Ok(sc);
    }
    Scenario::load(name).map_err(|e| SourceError::Open(name.to_string(), e.to_string()))
}

struct SimSource {
    run: SimRun,
    noise: Option<NoiseModel>,
}

enum Inner {
    Lines { reader: Box<dyn BufRead + Send>, line: u64, network: bool },
    Sim(Box<SimSource>),
}

/// An opened input. `next` yields packets until the stream ends.
pub struct PacketSource {
    inner: Inner,
    classes: ClassSet,
    paced: bool,
}

impl PacketSource {
    pub fn open(spec: &InputSpec, classes: ClassSet) -> Result<Self, SourceError> {
        let open_err = |e: String| SourceError::Open(spec.to_string(), e);
        let (inner, paced) = match spec {
            InputSpec::File(p) => {
                let f = File::open(p).map_err(|e| open_err(e.to_string()))?;
                (Inner::Lines { reader: Box::new(BufReader::new(f)), line: 0, network: false }, true)
            }
            InputSpec::Tcp(addr) => {
                let stream = TcpStream::connect(addr).map_err(|e| open_err(e.to_string()))?;
                stream.set_read_timeout(None).map_err(|e| open_err(e.to_string()))?;
                (Inner::Lines { reader: Box::new(BufReader::new(stream)), line: 0, network: true }, false)
            }
            InputSpec::Sim { scenario, seed } => {
                let sc = load_scenario(scenario)?;
                let noise = match &sc.noise {
                    Some(np) if !np.is_identity() => Some(
                        NoiseModel::new(np.clone(), sc.classes().map_err(|e| open_err(e.to_string()))?.len(), sc.camera.image_size, *seed)
                            .map_err(|e| open_err(e.to_string()))?,
                    ),
                    _ => None,
                };
                let run = SimRun::new(sc, *seed).map_err(|e| open_err(e.to_string()))?;
                (Inner::Sim(Box::new(SimSource { run, noise })), true)
            }
        };
        Ok(Self { inner, classes, paced })
    }

    /// Whether packets should be released at their timestamps (replays) or
    /// as they arrive (live streams).
    pub fn is_paced(&self) -> bool {
        self.paced
    }

    pub fn is_simulator(&self) -> bool {
        matches!(self.inner, Inner::Sim(_))
    }

    /// The scenario behind an embedded simulator.
    pub fn scenario(&self) -> Option<&Scenario> {
        match &self.inner {
            Inner::Sim(s) => Some(s.run.scenario()),
            Inner::Lines { .. } => None,
        }
    }

    /// Next packet; `Ok(None)` at the end of a file or simulation. A TCP peer
    /// closing the connection is [`SourceError::Lost`]. A malformed record is
    /// reported as [`SourceError::Record`] and the stream stays usable.
    pub fn next_packet(&mut self) -> Result<Option<FramePacket>, SourceError> {
        match &mut self.inner {
            Inner::Lines { reader, line, network } => {
                let mut buf = String::new();
                loop {
                    buf.clear();
                    let n = reader.read_line(&mut buf).map_err(|e| SourceError::Lost(e.to_string()))?;
                    if n == 0 {
                        if *network {
                            return Err(SourceError::Lost("connection closed by peer".into()));
                        }
                        return Ok(None);
                    }
                    *line += 1;
                    if buf.trim().is_empty() {
                        continue;
                    }
                    return parse_frame_packet(buf.trim_end(), &self.classes)
                        .map(Some)
                        .map_err(|err| SourceError::Record { line: *line, err });
                }
            }
            Inner::Sim(s) => {
                if s.run.is_finished() {
                    return Ok(None);
                }
                let out = s.run.step_frame();
                Ok(Some(match &mut s.noise {
                    Some(n) => n.apply(&out.packet),
                    None => out.packet,
                }))
            }
        }
    }

    /// Changes the simulated demand of one approach (or all).
    pub fn set_rate(&mut self, approach: Option<&str>, veh_per_s: f64) -> Result<(), SourceError> {
        match &mut self.inner {
            Inner::Sim(s) => s
                .run
                .set_rate(approach, veh_per_s)
                .map_err(|e| SourceError::Unsupported(e.to_string())),
            Inner::Lines { .. } => Err(SourceError::Unsupported("source is not a simulator".into())),
        }
    }
}

