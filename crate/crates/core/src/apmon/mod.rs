//! Reporting of metric batches to remote aggregators as XDR datagrams over
//! UDP, plus the matching receiver used by the mock aggregator.

mod datagram;
mod receiver;
pub mod xdr;

pub use datagram::{
    header_for, Datagram, EncodeError, Param, XdrValue, XdrValueType, DEFAULT_CLUSTER,
    MAX_DATAGRAM_BYTES, PROTOCOL_VERSION,
};
pub use receiver::AggregatorReceiver;
pub use xdr::{DecodeError, StringTooLong};

use std::fmt;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::metrics::{BatchSink, MetricRecord, MetricValue};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EndpointError {
    #[error("port must be in 1..=65535")]
    BadPort,
    #[error("expected host:port[/password], got {0:?}")]
    Syntax(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregatorEndpoint {
    pub host: String,
    pub port: u16,
    pub password: String,
}

impl AggregatorEndpoint {
    pub fn new(
        host: impl Into<String>,
        port: u16,
        password: impl Into<String>,
    ) -> Result<Self, EndpointError> {
        if port == 0 {
            return Err(EndpointError::BadPort);
        }
        Ok(Self {
            host: host.into(),
            port,
            password: password.into(),
        })
    }
}

impl fmt::Display for AggregatorEndpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.host.contains(':') {
            write!(f, "[{}]:{}", self.host, self.port)?;
        } else {
            write!(f, "{}:{}", self.host, self.port)?;
        }
        if !self.password.is_empty() {
            write!(f, "/{}", self.password)?;
        }
        Ok(())
    }
}

impl FromStr for AggregatorEndpoint {
    type Err = EndpointError;

    /// `host:port` or `host:port/password`; IPv6 hosts in brackets.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let syntax = || EndpointError::Syntax(s.to_owned());
        let (addr, password) = s.split_once('/').unwrap_or((s, ""));
        let (host, port) = addr.rsplit_once(':').ok_or_else(syntax)?;
        let host = host.trim_start_matches('[').trim_end_matches(']');
        if host.is_empty() {
            return Err(syntax());
        }
        let port: u32 = port.parse().map_err(|_| syntax())?;
        let port = u16::try_from(port).map_err(|_| EndpointError::BadPort)?;
        Self::new(host, port, password)
    }
}

/// Outcome of one `send_batch` for one endpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SendResult {
    pub endpoint: String,
    pub datagrams: usize,
    pub sent: usize,
    pub error: Option<String>,
}

impl SendResult {
    pub fn ok(&self) -> bool {
        self.error.is_none() && self.sent == self.datagrams
    }
}

/// Maps a record to an aggregator parameter named `module_id.parameter`.
/// Integers outside the int32 range travel as REAL64.
pub fn record_to_param(r: &MetricRecord) -> Param {
    let value = match r.value() {
        MetricValue::Real(v) => XdrValue::Real64(*v),
        MetricValue::Integer(v) => match i32::try_from(*v) {
            Ok(i) => XdrValue::Int32(i),
            Err(_) => XdrValue::Real64(*v as f64),
        },
        MetricValue::Text(s) => XdrValue::String(s.clone()),
    };
    Param::new(format!("{}.{}", r.module_id(), r.parameter()), value)
}

/// Packs parameters into as few datagrams as the size cap allows, keeping
/// their order. Parameters that cannot fit even alone are returned in the
/// second element.
pub fn pack_params(
    header: &str,
    cluster: &str,
    node: &str,
    params: Vec<Param>,
) -> (Vec<Datagram>, Vec<Param>) {
    let envelope = Datagram::envelope_len(header, cluster, node);
    let mut out = Vec::new();
    let mut rejected = Vec::new();
    let mut current: Vec<Param> = Vec::new();
    let mut size = envelope;
    let fits_alone = |p: &Param| {
        p.name.len() <= xdr::MAX_STRING_LEN
            && !matches!(&p.value, XdrValue::String(s) if s.len() > xdr::MAX_STRING_LEN)
            && envelope + p.encoded_len() <= MAX_DATAGRAM_BYTES
    };
    for p in params {
        if !fits_alone(&p) {
            rejected.push(p);
            continue;
        }
        let len = p.encoded_len();
        if !current.is_empty() && size + len > MAX_DATAGRAM_BYTES {
            out.push(Datagram {
                header: header.to_owned(),
                cluster: cluster.to_owned(),
                node: node.to_owned(),
                params: std::mem::take(&mut current),
            });
            size = envelope;
        }
        size += len;
        current.push(p);
    }
    if !current.is_empty() {
        out.push(Datagram {
            header: header.to_owned(),
            cluster: cluster.to_owned(),
            node: node.to_owned(),
            params: current,
        });
    }
    (out, rejected)
}

struct Target {
    endpoint: AggregatorEndpoint,
    v4: Option<UdpSocket>,
    v6: Option<UdpSocket>,
}

impl Target {
    fn socket_for(&self, addr: &SocketAddr) -> Option<&UdpSocket> {
        if addr.is_ipv4() {
            self.v4.as_ref()
        } else {
            self.v6.as_ref()
        }
    }
}

/// Fire-and-forget datagram sender. Failures are counted in
/// `apmon.send_errors` and never propagate to the caller.
pub struct ApmonSender {
    cluster: String,
    node: String,
    targets: Vec<Target>,
    send_errors: AtomicU64,
    datagrams_sent: AtomicU64,
}

impl ApmonSender {
    pub fn new(
        cluster: impl Into<String>,
        node: impl Into<String>,
        endpoints: Vec<AggregatorEndpoint>,
    ) -> Self {
        let targets = endpoints
            .into_iter()
            .map(|endpoint| Target {
                endpoint,
                v4: UdpSocket::bind("0.0.0.0:0").ok(),
                v6: UdpSocket::bind("[::]:0").ok(),
            })
            .collect();
        Self {
            cluster: cluster.into(),
            node: node.into(),
            targets,
            send_errors: AtomicU64::new(0),
            datagrams_sent: AtomicU64::new(0),
        }
    }

    pub fn endpoints(&self) -> impl Iterator<Item = &AggregatorEndpoint> {
        self.targets.iter().map(|t| &t.endpoint)
    }

    pub fn send_errors(&self) -> u64 {
        self.send_errors.load(Ordering::Relaxed)
    }

    pub fn datagrams_sent(&self) -> u64 {
        self.datagrams_sent.load(Ordering::Relaxed)
    }

    pub fn send_batch(&self, batch: &[MetricRecord]) -> Vec<SendResult> {
        if batch.is_empty() {
            return Vec::new();
        }
        let params: Vec<Param> = batch.iter().map(record_to_param).collect();
        self.targets
            .iter()
            .map(|t| self.send_to_target(t, params.clone()))
            .collect()
    }

    fn send_to_target(&self, t: &Target, params: Vec<Param>) -> SendResult {
        let header = header_for(&t.endpoint.password);
        let (datagrams, rejected) = pack_params(&header, &self.cluster, &self.node, params);
        let mut result = SendResult {
            endpoint: t.endpoint.to_string(),
            datagrams: datagrams.len(),
            sent: 0,
            error: None,
        };
        if !rejected.is_empty() {
            self.send_errors
                .fetch_add(rejected.len() as u64, Ordering::Relaxed);
            result.error = Some(format!("{} parameter(s) too large to send", rejected.len()));
        }
        let addr = match (t.endpoint.host.as_str(), t.endpoint.port)
            .to_socket_addrs()
            .map(|mut a| a.next())
        {
            Ok(Some(a)) => a,
            Ok(None) | Err(_) => {
                self.fail(&mut result, datagrams.len(), "cannot resolve endpoint");
                return result;
            }
        };
        let Some(sock) = t.socket_for(&addr) else {
            self.fail(&mut result, datagrams.len(), "no socket for address family");
            return result;
        };
        for d in &datagrams {
            let sent = d
                .encode()
                .map_err(|e| e.to_string())
                .and_then(|bytes| sock.send_to(&bytes, addr).map_err(|e| e.to_string()));
            match sent {
                Ok(_) => {
                    result.sent += 1;
                    self.datagrams_sent.fetch_add(1, Ordering::Relaxed);
                }
                Err(e) => self.fail(&mut result, 1, &e),
            }
        }
        result
    }

    fn fail(&self, result: &mut SendResult, n: usize, why: &str) {
        log::debug!("apmon send to {} failed: {why}", result.endpoint);
        self.send_errors.fetch_add(n as u64, Ordering::Relaxed);
        result.error = Some(why.to_owned());
    }
}

impl BatchSink for ApmonSender {
    fn publish(&self, batch: &[MetricRecord]) {
        self.send_batch(batch);
    }
}
