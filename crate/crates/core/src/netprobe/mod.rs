//! Round-trip time and bulk-throughput probes.
//!
//! RTT is the TCP connection-establishment time. Bandwidth is the achievable
//! bulk TCP throughput towards a cooperating [`ProbePeer`].

mod bandwidth;
mod peer;
mod rtt;

pub use bandwidth::{
    estimate_bandwidth, BandwidthEstimator, BandwidthResult, BulkTransfer, Direction, ExternalTool,
    ESTIMATOR_NAMES,
};
pub use peer::{ProbePeer, MAX_PEER_DURATION_S};
pub use rtt::{measure_rtt, median, RttProber, RttResult, TcpConnectProber};

use std::net::{SocketAddr, ToSocketAddrs};
use std::sync::Arc;

use thiserror::Error;

use crate::metrics::{sanitize_identifier, OffloadedCollector, Sample};

pub const MODULE_ID: &str = "netprobe";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProbeError {
    #[error("cannot resolve {0}")]
    Unresolvable(String),
    #[error("all {attempts} probes to {target} failed")]
    AllProbesFailed {
        target: String,
        attempts: u32,
        loss_count: u32,
    },
    #[error("peer {0} unavailable: {1}")]
    PeerUnavailable(String, String),
    #[error("protocol error from {0}: {1}")]
    ProtocolError(String, String),
    #[error("external tool: {0}")]
    Tool(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("probe setting {0} must be positive")]
pub struct InvalidProbeConfig(pub &'static str);

/// Probe tuning. All values are positive; see [`ProbeConfig::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    rtt_attempts: u32,
    rtt_timeout_ms: u64,
    bw_duration_s: f64,
    bw_block_bytes: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            rtt_attempts: 5,
            rtt_timeout_ms: 2000,
            bw_duration_s: 5.0,
            bw_block_bytes: 65536,
        }
    }
}

impl ProbeConfig {
    pub fn new(
        rtt_attempts: u32,
        rtt_timeout_ms: u64,
        bw_duration_s: f64,
        bw_block_bytes: usize,
    ) -> Result<Self, InvalidProbeConfig> {
        if rtt_attempts == 0 {
            return Err(InvalidProbeConfig("rtt_attempts"));
        }
        if rtt_timeout_ms == 0 {
            return Err(InvalidProbeConfig("rtt_timeout_ms"));
        }
        if !(bw_duration_s.is_finite() && bw_duration_s > 0.0) {
            return Err(InvalidProbeConfig("bw_duration_s"));
        }
        if bw_block_bytes == 0 {
            return Err(InvalidProbeConfig("bw_block_bytes"));
        }
        Ok(Self {
            rtt_attempts,
            rtt_timeout_ms,
            bw_duration_s,
            bw_block_bytes,
        })
    }

    pub fn rtt_attempts(&self) -> u32 {
        self.rtt_attempts
    }

    pub fn rtt_timeout_ms(&self) -> u64 {
        self.rtt_timeout_ms
    }

    pub fn bw_duration_s(&self) -> f64 {
        self.bw_duration_s
    }

    pub fn bw_block_bytes(&self) -> usize {
        self.bw_block_bytes
    }
}

pub(crate) fn resolve(target: &str) -> Result<SocketAddr, ProbeError> {
    target
        .to_socket_addrs()
        .ok()
        .and_then(|mut it| it.next())
        .ok_or_else(|| ProbeError::Unresolvable(target.to_owned()))
}

/// Probe targets of the `netprobe` collector module.
#[derive(Clone)]
pub struct ProbePlan {
    pub rtt_targets: Vec<String>,
    pub bw_targets: Vec<(String, Direction)>,
    pub config: ProbeConfig,
    pub estimator: Arc<dyn BandwidthEstimator>,
}

impl ProbePlan {
    pub fn new(config: ProbeConfig) -> Self {
        Self {
            rtt_targets: Vec::new(),
            bw_targets: Vec::new(),
            config,
            estimator: Arc::new(BulkTransfer),
        }
    }

    /// Runs every probe once, sequentially.
    pub fn run(&self) -> Vec<Sample> {
        let mut out = Vec::new();
        for t in &self.rtt_targets {
            let key = sanitize_identifier(t);
            match measure_rtt(t, &self.config) {
                Ok(r) => {
                    out.push(Sample::new(
                        format!("rtt.{key}.median_ms"),
                        r.median_ms(),
                        "ms",
                    ));
                    out.push(Sample::new(format!("rtt.{key}.min_ms"), r.min_ms(), "ms"));
                    out.push(Sample::new(
                        format!("rtt.{key}.loss"),
                        r.loss_count as i64,
                        "",
                    ));
                }
                Err(ProbeError::AllProbesFailed { loss_count, .. }) => {
                    out.push(Sample::new(
                        format!("rtt.{key}.loss"),
                        loss_count as i64,
                        "",
                    ));
                }
                Err(e) => log::warn!("rtt {t}: {e}"),
            }
        }
        for (t, dir) in &self.bw_targets {
            match self.estimator.estimate(t, *dir, &self.config) {
                Ok(r) => out.push(Sample::new(
                    format!("bw.{}.{}_mbps", sanitize_identifier(t), dir.as_str()),
                    r.mbits_per_s,
                    "Mbps",
                )),
                Err(e) => log::warn!("bandwidth {t} {}: {e}", dir.as_str()),
            }
        }
        out
    }
}

/// The `netprobe` collector: probes run on a worker thread, results are
/// published at the next collection.
pub fn collector(plan: ProbePlan) -> OffloadedCollector {
    OffloadedCollector::new(MODULE_ID, move || plan.run()).with_default_interval(60_000)
}
