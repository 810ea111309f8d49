use std::io::{BufRead, BufReader, ErrorKind, Read, Write};
use std::net::{Shutdown, TcpStream};
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use super::{resolve, ProbeConfig, ProbeError};

/// At most one bandwidth probe runs at a time in this process.
static PROBE_LOCK: Mutex<()> = Mutex::new(());

pub const ESTIMATOR_NAMES: &[&str] = &["bulk", "external"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "up" => Ok(Direction::Up),
            "down" => Ok(Direction::Down),
            _ => Err(format!("direction must be up or down, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthResult {
    pub target: String,
    pub direction: Direction,
    pub mbits_per_s: f64,
    pub bytes_moved: u64,
    pub duration_s: f64,
    /// The transfer ended early; the figures cover what was moved.
    pub partial: bool,
}

impl BandwidthResult {
    /// Derives the rate from the byte count. `duration_s` must be positive.
    pub fn new(
        target: &str,
        direction: Direction,
        bytes_moved: u64,
        duration_s: f64,
        partial: bool,
    ) -> Self {
        assert!(duration_s > 0.0, "duration must be positive");
        Self {
            target: target.to_owned(),
            direction,
            mbits_per_s: bytes_moved as f64 * 8.0 / duration_s / 1e6,
            bytes_moved,
            duration_s,
            partial,
        }
    }
}

/// A bandwidth measurement backend.
pub trait BandwidthEstimator: Send + Sync {
    fn name(&self) -> &str;

    /// Runs one measurement. Callers go through [`BandwidthEstimator::estimate`].
    fn measure(
        &self,
        target: &str,
        direction: Direction,
        cfg: &ProbeConfig,
    ) -> Result<BandwidthResult, ProbeError>;

    /// Runs one measurement while holding the process-wide probe lock.
    fn estimate(
        &self,
        target: &str,
        direction: Direction,
        cfg: &ProbeConfig,
    ) -> Result<BandwidthResult, ProbeError> {
        let _g = PROBE_LOCK.lock().unwrap_or_else(|e| e.into_inner());
        self.measure(target, direction, cfg)
    }
}

/// Bulk transfer against a [`super::ProbePeer`].
pub fn estimate_bandwidth(
    target: &str,
    direction: Direction,
    cfg: &ProbeConfig,
) -> Result<BandwidthResult, ProbeError> {
    BulkTransfer.estimate(target, direction, cfg)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BulkTransfer;

impl BandwidthEstimator for BulkTransfer {
    fn name(&self) -> &str {
        "bulk"
    }

    fn measure(
        &self,
        target: &str,
        direction: Direction,
        cfg: &ProbeConfig,
    ) -> Result<BandwidthResult, ProbeError> {
        let addr = resolve(target)?;
        let timeout = Duration::from_millis(cfg.rtt_timeout_ms());
        let mut s = TcpStream::connect_timeout(&addr, timeout)
            .map_err(|e| ProbeError::PeerUnavailable(target.to_owned(), e.to_string()))?;
        let _ = s.set_nodelay(true);
        let io_err =
            |e: std::io::Error| ProbeError::PeerUnavailable(target.to_owned(), e.to_string());
        s.set_write_timeout(Some(timeout)).map_err(io_err)?;
        s.set_read_timeout(Some(timeout)).map_err(io_err)?;
        let cmd = format!(
            "BW {} {}\n",
            direction.as_str().to_uppercase(),
            cfg.bw_duration_s()
        );
        s.write_all(cmd.as_bytes()).map_err(io_err)?;
        match direction {
            Direction::Up => upload(target, s, cfg),
            Direction::Down => download(target, s, cfg),
        }
    }
}

fn upload(
    target: &str,
    mut s: TcpStream,
    cfg: &ProbeConfig,
) -> Result<BandwidthResult, ProbeError> {
    let block = vec![0u8; cfg.bw_block_bytes()];
    let run_for = Duration::from_secs_f64(cfg.bw_duration_s());
    let start = Instant::now();
    let mut sent: u64 = 0;
    let mut broken = false;
    while start.elapsed() < run_for {
        if let Err(e) = s.write_all(&block) {
            log::debug!("bw up {target}: {e}");
            broken = true;
            break;
        }
        sent += block.len() as u64;
    }
    if broken {
        let d = start.elapsed().as_secs_f64();
        return Ok(BandwidthResult::new(target, Direction::Up, sent, d, true));
    }
    let _ = s.shutdown(Shutdown::Write);
    let mut line = String::new();
    let got = BufReader::new(&s).read_line(&mut line);
    let duration = start.elapsed().as_secs_f64();
    match got {
        Ok(n) if n > 0 => {
            let acked = line
                .trim_end()
                .strip_prefix("ACK ")
                .and_then(|v| v.parse::<u64>().ok())
                .ok_or_else(|| {
                    ProbeError::ProtocolError(
                        target.to_owned(),
                        format!("unexpected reply {:?}", line.trim_end()),
                    )
                })?;
            if acked > sent {
                return Err(ProbeError::ProtocolError(
                    target.to_owned(),
                    format!("peer acknowledged {acked} of {sent} bytes"),
                ));
            }
            Ok(BandwidthResult::new(
                target,
                Direction::Up,
                acked,
                duration,
                acked < sent,
            ))
        }
        // no acknowledgement: count what the socket accepted
        _ => Ok(BandwidthResult::new(
            target,
            Direction::Up,
            sent,
            duration,
            true,
        )),
    }
}

fn download(
    target: &str,
    mut s: TcpStream,
    cfg: &ProbeConfig,
) -> Result<BandwidthResult, ProbeError> {
    let start = Instant::now();
    let deadline = Duration::from_secs_f64(cfg.bw_duration_s())
        + 2 * Duration::from_millis(cfg.rtt_timeout_ms());
    let mut buf = vec![0u8; cfg.bw_block_bytes().max(4096)];
    let mut received: u64 = 0;
    let mut partial = false;
    loop {
        if start.elapsed() > deadline {
            partial = true;
            break;
        }
        match s.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => {
                // the peer streams zero bytes; anything else is a reply line
                if received == 0 && buf[0] != 0 {
                    let text = String::from_utf8_lossy(&buf[..n]);
                    return Err(ProbeError::ProtocolError(
                        target.to_owned(),
                        format!("unexpected reply {:?}", text.trim_end()),
                    ));
                }
                received += n as u64;
            }
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => {
                log::debug!("bw down {target}: {e}");
                partial = true;
                break;
            }
        }
    }
    let duration = start.elapsed().as_secs_f64();
    Ok(BandwidthResult::new(
        target,
        Direction::Down,
        received,
        duration,
        partial,
    ))
}

/// Runs an external measurement program and parses its rate output.
///
/// Arguments may contain `{host}`, `{port}`, `{duration}` and `{direction}`.
/// The rate is the number before the last `Mbits/sec`, or else the last
/// number printed.
#[derive(Debug, Clone)]
pub struct ExternalTool {
    pub program: String,
    pub args: Vec<String>,
}

impl ExternalTool {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        Self {
            program: program.into(),
            args,
        }
    }
}

pub(crate) fn parse_rate(output: &str) -> Option<f64> {
    let tokens: Vec<&str> = output.split_whitespace().collect();
    let num = |t: &str| t.parse::<f64>().ok().filter(|v| v.is_finite() && *v >= 0.0);
    for i in (1..tokens.len()).rev() {
        if tokens[i].eq_ignore_ascii_case("Mbits/sec") {
            if let Some(v) = num(tokens[i - 1]) {
                return Some(v);
            }
        }
    }
    tokens.iter().rev().find_map(|t| num(t))
}

impl BandwidthEstimator for ExternalTool {
    fn name(&self) -> &str {
        "external"
    }

    fn measure(
        &self,
        target: &str,
        direction: Direction,
        cfg: &ProbeConfig,
    ) -> Result<BandwidthResult, ProbeError> {
        let (host, port) = target
            .rsplit_once(':')
            .ok_or_else(|| ProbeError::Unresolvable(target.to_owned()))?;
        let duration = cfg.bw_duration_s();
        let args: Vec<String> = self
            .args
            .iter()
            .map(|a| {
                a.replace("{host}", host)
                    .replace("{port}", port)
                    .replace("{duration}", &duration.to_string())
                    .replace("{direction}", direction.as_str())
            })
            .collect();
        let start = Instant::now();
        let out = Command::new(&self.program)
            .args(&args)
            .output()
            .map_err(|e| ProbeError::Tool(format!("{}: {e}", self.program)))?;
        if !out.status.success() {
            return Err(ProbeError::Tool(format!(
                "{} exited with {}",
                self.program, out.status
            )));
        }
        let text = String::from_utf8_lossy(&out.stdout);
        let mbits = parse_rate(&text)
            .ok_or_else(|| ProbeError::Tool(format!("no rate in output of {}", self.program)))?;
        let elapsed = start.elapsed().as_secs_f64().max(1e-9);
        // the tool reports a rate over its own run; carry it over the nominal duration
        let d = if duration > 0.0 { duration } else { elapsed };
        let bytes = (mbits * 1e6 * d / 8.0).round() as u64;
        Ok(BandwidthResult::new(target, direction, bytes, d, false))
    }
}
