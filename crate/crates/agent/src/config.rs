//! Agent configuration: `key = value` lines with dotted section prefixes.
//!
//! ```text
//! # comments and blank lines are ignored
//! agent.id = station-1
//! listener.port = 8884
//! control.port = 8885
//! aggregator.endpoints = ml.example.org:8884/secret, 127.0.0.1:9000
//! source.kind = live
//! module.host.interval_ms = 5000
//! module.selector.enabled = true
//! repository.source = http://repo.example.org/catalog
//! ```
//!
//! Every key and its default is listed by [`AgentConfig::serialize`] applied
//! to [`AgentConfig::default`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lisa_core::apmon::AggregatorEndpoint;
use lisa_core::collectors::{LocalityFile, SourceSpec};
use lisa_core::metrics::{is_identifier, sanitize_identifier, MIN_INTERVAL_MS};
use lisa_core::netprobe::{Direction, ProbeConfig, ESTIMATOR_NAMES};
use lisa_core::selector::{RepositorySource, SelectionPolicy};
use thiserror::Error;

use crate::registry::MODULE_IDS;

pub const DEFAULT_LISTENER_PORT: u16 = 8884;
pub const DEFAULT_CONTROL_PORT: u16 = 8885;

/// Error with the 1-based line it refers to; line 0 means the file as a whole.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("config line {line}: {reason}")]
pub struct ConfigError {
    pub line: usize,
    pub reason: String,
}

fn err(line: usize, reason: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModuleSettings {
    pub enabled: bool,
    /// `None` keeps the module's own default.
    pub interval_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub agent_id: String,
    pub cluster: String,
    pub node: String,
    pub listener_address: IpAddr,
    pub listener_port: u16,
    pub control_address: IpAddr,
    pub control_port: u16,
    pub queue_capacity: usize,
    pub max_subscribers: usize,
    pub default_interval_ms: u64,
    pub aggregators: Vec<AggregatorEndpoint>,
    /// `live` or `fixture`.
    pub source: String,
    pub fixture_index: Option<PathBuf>,
    pub locality: LocalityFile,
    pub repository: Option<RepositorySource>,
    pub modules: BTreeMap<String, ModuleSettings>,
    pub probe: ProbeConfig,
    pub rtt_targets: Vec<String>,
    pub bw_targets: Vec<(String, Direction)>,
    /// `bulk` or `external`.
    pub bw_backend: String,
    pub bw_command: Vec<String>,
    pub policy: SelectionPolicy,
    pub current_service: Option<String>,
}

fn hostname() -> String {
    std::fs::read_to_string("/proc/sys/kernel/hostname")
        .map(|s| sanitize_identifier(s.trim()))
        .ok()
        .filter(|s| s != "_")
        .unwrap_or_else(|| "localhost".into())
}

impl Default for AgentConfig {
    fn default() -> Self {
        let host = hostname();
        let modules = MODULE_IDS
            .iter()
            .map(|&id| {
                // probing and selection need targets, so they start opt-in
                let enabled = !matches!(id, "netprobe" | "selector");
                (
                    id.to_owned(),
                    ModuleSettings {
                        enabled,
                        interval_ms: None,
                    },
                )
            })
            .collect();
        Self {
            agent_id: host.clone(),
            cluster: "LISA".into(),
            node: host,
            listener_address: IpAddr::from([0, 0, 0, 0]),
            listener_port: DEFAULT_LISTENER_PORT,
            control_address: IpAddr::from([127, 0, 0, 1]),
            control_port: DEFAULT_CONTROL_PORT,
            queue_capacity: 1024,
            max_subscribers: 64,
            default_interval_ms: 5000,
            aggregators: Vec::new(),
            source: "live".into(),
            fixture_index: None,
            locality: LocalityFile::default(),
            repository: None,
            modules,
            probe: ProbeConfig::default(),
            rtt_targets: Vec::new(),
            bw_targets: Vec::new(),
            bw_backend: "bulk".into(),
            bw_command: Vec::new(),
            policy: SelectionPolicy::default(),
            current_service: None,
        }
    }
}

fn parse<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse()
        .map_err(|_| err(line, format!("bad value {v:?} for {key}")))
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(err(line, format!("bad boolean {v:?} for {key}"))),
    }
}

fn list(v: &str) -> Vec<String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}

fn opt_str(v: &str) -> Option<String> {
    (!v.is_empty()).then(|| v.to_owned())
}

impl AgentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| err(0, format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = AgentConfig::default();
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        // composite settings are validated after all lines are read
        let mut probe = (
            c.probe.rtt_attempts(),
            c.probe.rtt_timeout_ms(),
            c.probe.bw_duration_s(),
            c.probe.bw_block_bytes(),
            0usize,
        );
        let p = &c.policy;
        let mut policy = (
            p.weights(),
            p.shortlist_size(),
            p.staleness_ms(),
            p.switch_margin(),
            p.switch_persistence(),
            0usize,
        );
        let mut port_lines = (0usize, 0usize);

        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(n, "expected key = value"))?;
            let (k, v) = (k.trim(), v.trim());
            if let Some(prev) = seen.insert(k.to_owned(), n) {
                return Err(err(n, format!("{k} already set on line {prev}")));
            }
            match k {
                "agent.id" => {
                    if !is_identifier(v) {
                        return Err(err(n, format!("agent.id {v:?} must match [A-Za-z0-9_.-]+")));
                    }
                    c.agent_id = v.to_owned();
                }
                "agent.cluster" => c.cluster = v.to_owned(),
                "agent.node" => c.node = v.to_owned(),
                "listener.address" => c.listener_address = parse(n, k, v)?,
                "listener.port" => {
                    c.listener_port = parse(n, k, v)?;
                    port_lines.0 = n;
                }
                "control.address" => c.control_address = parse(n, k, v)?,
                "control.port" => {
                    c.control_port = parse(n, k, v)?;
                    port_lines.1 = n;
                }
                "bus.queue_capacity" => {
                    c.queue_capacity = parse(n, k, v)?;
                    if c.queue_capacity == 0 {
                        return Err(err(n, "bus.queue_capacity must be positive"));
                    }
                }
                "bus.max_subscribers" => {
                    c.max_subscribers = parse(n, k, v)?;
                    if c.max_subscribers == 0 {
                        return Err(err(n, "bus.max_subscribers must be positive"));
                    }
                }
                "scheduler.default_interval_ms" => {
                    c.default_interval_ms = parse(n, k, v)?;
                    if c.default_interval_ms < MIN_INTERVAL_MS {
                        return Err(err(n, format!("interval below {MIN_INTERVAL_MS} ms")));
                    }
                }
                "aggregator.endpoints" => {
                    c.aggregators = list(v)
                        .iter()
                        .map(|e| e.parse().map_err(|x| err(n, format!("{e}: {x}"))))
                        .collect::<Result<_, _>>()?;
                }
                "source.kind" => {
                    if !SourceSpec::NAMES.contains(&v) {
                        return Err(err(
                            n,
                            format!(
                                "unknown source {v:?}, expected one of {:?}",
                                SourceSpec::NAMES
                            ),
                        ));
                    }
                    c.source = v.to_owned();
                }
                "source.fixture" => c.fixture_index = opt_str(v).map(PathBuf::from),
                "locality.network_domain" => c.locality.network_domain = opt_str(v),
                "locality.as_number" => {
                    c.locality.as_number = match v {
                        "" => None,
                        _ => Some(parse(n, k, v.trim_start_matches("AS"))?),
                    }
                }
                "locality.country" => c.locality.country = opt_str(&v.to_ascii_uppercase()),
                "locality.continent" => c.locality.continent = opt_str(&v.to_ascii_uppercase()),
                "locality.public_ip" => {
                    if !v.is_empty() {
                        parse::<IpAddr>(n, k, v)?;
                    }
                    c.locality.public_ip = opt_str(v);
                }
                "repository.source" => {
                    c.repository = opt_str(v).map(|s| RepositorySource::parse(&s))
                }
                "probe.rtt_attempts" => probe.0 = parse(n, k, v)?,
                "probe.rtt_timeout_ms" => probe.1 = parse(n, k, v)?,
                "probe.bw_duration_s" => probe.2 = parse(n, k, v)?,
                "probe.bw_block_bytes" => probe.3 = parse(n, k, v)?,
                "probe.rtt_targets" => c.rtt_targets = list(v),
                "probe.bw_targets" => {
                    c.bw_targets = list(v)
                        .into_iter()
                        .map(|t| {
                            let (addr, dir) = t.rsplit_once('/').ok_or_else(|| {
                                err(n, format!("{t}: expected host:port/up|down"))
                            })?;
                            let dir = dir.parse().map_err(|e: String| err(n, e))?;
                            Ok((addr.to_owned(), dir))
                        })
                        .collect::<Result<_, ConfigError>>()?;
                }
                "probe.bw_backend" => {
                    if !ESTIMATOR_NAMES.contains(&v) {
                        return Err(err(
                            n,
                            format!("unknown backend {v:?}, expected one of {ESTIMATOR_NAMES:?}"),
                        ));
                    }
                    c.bw_backend = v.to_owned();
                }
                "probe.bw_command" => {
                    c.bw_command = v.split_whitespace().map(str::to_owned).collect()
                }
                "selector.w_load" => policy.0 .0 = parse(n, k, v)?,
                "selector.w_clients" => policy.0 .1 = parse(n, k, v)?,
                "selector.w_traffic" => policy.0 .2 = parse(n, k, v)?,
                "selector.shortlist_size" => policy.1 = parse(n, k, v)?,
                "selector.staleness_ms" => policy.2 = parse(n, k, v)?,
                "selector.switch_margin" => policy.3 = parse(n, k, v)?,
                "selector.switch_persistence" => policy.4 = parse(n, k, v)?,
                "selector.current" => c.current_service = opt_str(v),
                _ => {
                    let Some(rest) = k.strip_prefix("module.") else {
                        return Err(err(n, format!("unknown key {k}")));
                    };
                    let (id, field) = rest
                        .rsplit_once('.')
                        .ok_or_else(|| err(n, format!("unknown key {k}")))?;
                    let Some(m) = c.modules.get_mut(id) else {
                        return Err(err(n, format!("unknown module {id}")));
                    };
                    match field {
                        "enabled" => m.enabled = parse_bool(n, k, v)?,
                        "interval_ms" => {
                            let ms: u64 = parse(n, k, v)?;
                            if ms < MIN_INTERVAL_MS {
                                return Err(err(n, format!("interval below {MIN_INTERVAL_MS} ms")));
                            }
                            m.interval_ms = Some(ms);
                        }
                        _ => return Err(err(n, format!("unknown key {k}"))),
                    }
                }
            }
            if k.starts_with("probe.") && k != "probe.rtt_targets" {
                probe.4 = n;
            }
            if k.starts_with("selector.") && k != "selector.current" {
                policy.5 = n;
            }
        }

        c.probe = ProbeConfig::new(probe.0, probe.1, probe.2, probe.3)
            .map_err(|e| err(probe.4, e.to_string()))?;
        c.policy = SelectionPolicy::new(policy.0, policy.1, policy.2, policy.3, policy.4)
            .map_err(|e| err(policy.5, e.to_string()))?;
        c.validate().map_err(|mut e| {
            if e.reason.contains("port") {
                e.line = port_lines.0.max(port_lines.1);
            }
            e
        })?;
        Ok(c)
    }

    /// Cross-field checks.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.listener_port != 0 && self.listener_port == self.control_port {
            return Err(err(
                0,
                format!(
                    "listener.port and control.port are both {}",
                    self.listener_port
                ),
            ));
        }
        if self.source == "fixture" && self.fixture_index.is_none() {
            return Err(err(0, "source.kind = fixture needs source.fixture"));
        }
        if self.bw_backend == "external" && self.bw_command.is_empty() {
            return Err(err(0, "probe.bw_backend = external needs probe.bw_command"));
        }
        if self.modules.get("selector").is_some_and(|m| m.enabled) && self.repository.is_none() {
            return Err(err(0, "module.selector.enabled needs repository.source"));
        }
        Ok(())
    }

    /// The source spec collectors are built from.
    pub fn source_spec(&self) -> SourceSpec {
        match (self.source.as_str(), &self.fixture_index) {
            ("fixture", Some(index)) => SourceSpec::Fixture {
                index: index.clone(),
            },
            _ => SourceSpec::Live {
                locality: self.locality.clone(),
            },
        }
    }

    /// Writes every effective setting; [`AgentConfig::parse`] of the output
    /// yields an equal config.
    pub fn serialize(&self) -> String {
        let mut o = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(o, "{k} = {v}");
        };
        let join = |v: &[String]| v.join(", ");
        let none = String::new();
        kv("agent.id", &self.agent_id);
        kv("agent.cluster", &self.cluster);
        kv("agent.node", &self.node);
        kv("listener.address", &self.listener_address);
        kv("listener.port", &self.listener_port);
        kv("control.address", &self.control_address);
        kv("control.port", &self.control_port);
        kv("bus.queue_capacity", &self.queue_capacity);
        kv("bus.max_subscribers", &self.max_subscribers);
        kv("scheduler.default_interval_ms", &self.default_interval_ms);
        let eps: Vec<String> = self.aggregators.iter().map(|e| e.to_string()).collect();
        kv("aggregator.endpoints", &join(&eps));
        kv("source.kind", &self.source);
        kv(
            "source.fixture",
            &self
                .fixture_index
                .as_ref()
                .map_or(none.clone(), |p| p.display().to_string()),
        );
        let l = &self.locality;
        kv(
            "locality.network_domain",
            l.network_domain.as_ref().unwrap_or(&none),
        );
        kv(
            "locality.as_number",
            &l.as_number.map_or(none.clone(), |a| a.to_string()),
        );
        kv("locality.country", l.country.as_ref().unwrap_or(&none));
        kv("locality.continent", l.continent.as_ref().unwrap_or(&none));
        kv("locality.public_ip", l.public_ip.as_ref().unwrap_or(&none));
        kv(
            "repository.source",
            &self
                .repository
                .as_ref()
                .map_or(none.clone(), |r| r.to_string()),
        );
        for (id, m) in &self.modules {
            kv(&format!("module.{id}.enabled"), &m.enabled);
            if let Some(ms) = m.interval_ms {
                kv(&format!("module.{id}.interval_ms"), &ms);
            }
        }
        kv("probe.rtt_attempts", &self.probe.rtt_attempts());
        kv("probe.rtt_timeout_ms", &self.probe.rtt_timeout_ms());
        kv(
            "probe.bw_duration_s",
            &format!("{:?}", self.probe.bw_duration_s()),
        );
        kv("probe.bw_block_bytes", &self.probe.bw_block_bytes());
        kv("probe.rtt_targets", &join(&self.rtt_targets));
        let bw: Vec<String> = self
            .bw_targets
            .iter()
            .map(|(t, d)| format!("{t}/{}", d.as_str()))
            .collect();
        kv("probe.bw_targets", &join(&bw));
        kv("probe.bw_backend", &self.bw_backend);
        kv("probe.bw_command", &self.bw_command.join(" "));
        let p = &self.policy;
        let (wl, wc, wt) = p.weights();
        kv("selector.w_load", &format!("{wl:?}"));
        kv("selector.w_clients", &format!("{wc:?}"));
        kv("selector.w_traffic", &format!("{wt:?}"));
        kv("selector.shortlist_size", &p.shortlist_size());
        kv("selector.staleness_ms", &p.staleness_ms());
        kv(
            "selector.switch_margin",
            &format!("{:?}", p.switch_margin()),
        );
        kv("selector.switch_persistence", &p.switch_persistence());
        kv(
            "selector.current",
            self.current_service.as_ref().unwrap_or(&none),
        );
        o
    }
}
