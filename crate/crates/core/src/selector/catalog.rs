use std::fmt;
use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;

use crate::metrics::is_identifier;

/// One candidate endpoint as published by a repository.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceDescriptor {
    pub service_id: String,
    pub address: String,
    pub network_domain: Option<String>,
    pub as_number: Option<u32>,
    pub country: Option<String>,
    pub continent: Option<String>,
    pub load1: f64,
    pub connected_clients: u64,
    pub traffic_mbps: f64,
    pub last_update_ms: u64,
}

fn opt(s: &str) -> Option<String> {
    (s != "-").then(|| s.to_owned())
}

fn nonneg(s: &str, what: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err(format!("bad {what} {s:?}")),
    }
}

fn valid_address(a: &str) -> bool {
    match a.rsplit_once(':') {
        Some((host, port)) => !host.is_empty() && matches!(port.parse::<u16>(), Ok(p) if p > 0),
        None => false,
    }
}

impl ServiceDescriptor {
    /// Parses one catalog line:
    /// `id address domain as country continent load1 clients traffic_mbps last_update_ms`.
    /// `-` marks an unknown locality field.
    pub fn parse_line(line: &str) -> Result<Self, String> {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 10 {
            return Err(format!("expected 10 fields, got {}", f.len()));
        }
        if !is_identifier(f[0]) {
            return Err(format!("bad service id {:?}", f[0]));
        }
        if !valid_address(f[1]) {
            return Err(format!("bad address {:?}", f[1]));
        }
        let as_number = match f[3] {
            "-" => None,
            s => Some(
                s.trim_start_matches("AS")
                    .parse()
                    .map_err(|_| format!("bad as_number {s:?}"))?,
            ),
        };
        let country = match f[4] {
            "-" => None,
            s if s.len() == 2 && s.bytes().all(|b| b.is_ascii_alphabetic()) => {
                Some(s.to_ascii_uppercase())
            }
            s => return Err(format!("bad country {s:?}")),
        };
        let continent = match f[5] {
            "-" => None,
            s if s.bytes().all(|b| b.is_ascii_alphabetic()) => Some(s.to_ascii_uppercase()),
            s => return Err(format!("bad continent {s:?}")),
        };
        let last_update_ms = f[9]
            .parse::<u64>()
            .ok()
            .filter(|&t| t > 0)
            .ok_or_else(|| format!("bad last_update_ms {:?}", f[9]))?;
        Ok(Self {
            service_id: f[0].to_owned(),
            address: f[1].to_owned(),
            network_domain: opt(f[2]),
            as_number,
            country,
            continent,
            load1: nonneg(f[6], "load1")?,
            connected_clients: f[7]
                .parse()
                .map_err(|_| format!("bad clients {:?}", f[7]))?,
            traffic_mbps: nonneg(f[8], "traffic_mbps")?,
            last_update_ms,
        })
    }

    /// Inverse of [`ServiceDescriptor::parse_line`].
    pub fn to_line(&self) -> String {
        let d = |o: &Option<String>| o.clone().unwrap_or_else(|| "-".into());
        format!(
            "{} {} {} {} {} {} {:?} {} {:?} {}",
            self.service_id,
            self.address,
            d(&self.network_domain),
            self.as_number.map_or("-".into(), |a| a.to_string()),
            d(&self.country),
            d(&self.continent),
            self.load1,
            self.connected_clients,
            self.traffic_mbps,
            self.last_update_ms
        )
    }
}

/// Parsed catalog: valid descriptors plus the count of skipped lines.
/// Repeated ids keep the first entry.
pub fn parse_catalog(text: &str) -> (Vec<ServiceDescriptor>, usize) {
    let mut out: Vec<ServiceDescriptor> = Vec::new();
    let mut skipped = 0;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match ServiceDescriptor::parse_line(line) {
            Ok(d) if out.iter().any(|o| o.service_id == d.service_id) => {
                log::debug!("catalog line {}: duplicate id {}", n + 1, d.service_id);
                skipped += 1;
            }
            Ok(d) => out.push(d),
            Err(e) => {
                log::debug!("catalog line {}: {e}", n + 1);
                skipped += 1;
            }
        }
    }
    (out, skipped)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("repository {source_name} unavailable: {reason}")]
pub struct RepositoryUnavailable {
    pub source_name: String,
    pub reason: String,
}

/// Where the catalog text comes from.
pub trait CatalogSource: Send {
    fn describe(&self) -> String;
    fn fetch_text(&mut self) -> Result<String, String>;
}

pub struct FileCatalog(pub PathBuf);

impl CatalogSource for FileCatalog {
    fn describe(&self) -> String {
        self.0.display().to_string()
    }

    fn fetch_text(&mut self) -> Result<String, String> {
        std::fs::read_to_string(&self.0).map_err(|e| e.to_string())
    }
}

pub struct HttpCatalog {
    url: String,
    agent: ureq::Agent,
}

impl HttpCatalog {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build();
        Self {
            url: url.into(),
            agent: ureq::Agent::new_with_config(config),
        }
    }
}

impl CatalogSource for HttpCatalog {
    fn describe(&self) -> String {
        self.url.clone()
    }

    fn fetch_text(&mut self) -> Result<String, String> {
        let mut resp = self
            .agent
            .get(&self.url)
            .call()
            .map_err(|e| e.to_string())?;
        resp.body_mut().read_to_string().map_err(|e| e.to_string())
    }
}

/// Repository location: an `http://` URL or a file path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RepositorySource {
    File(PathBuf),
    Http(String),
}

impl RepositorySource {
    pub fn parse(s: &str) -> Self {
        if s.starts_with("http://") || s.starts_with("https://") {
            RepositorySource::Http(s.to_owned())
        } else {
            RepositorySource::File(PathBuf::from(s))
        }
    }

    pub fn open(&self) -> Box<dyn CatalogSource> {
        match self {
            RepositorySource::File(p) => Box::new(FileCatalog(p.clone())),
            RepositorySource::Http(u) => {
                Box::new(HttpCatalog::new(u.clone(), Duration::from_secs(5)))
            }
        }
    }
}

impl fmt::Display for RepositorySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RepositorySource::File(p) => write!(f, "{}", p.display()),
            RepositorySource::Http(u) => f.write_str(u),
        }
    }
}

/// Cached candidate set fed by one catalog source.
pub struct Repository {
    source: Box<dyn CatalogSource>,
    cache: Vec<ServiceDescriptor>,
    last_skipped: usize,
    errors: u64,
}

impl Repository {
    pub fn new(source: Box<dyn CatalogSource>) -> Self {
        Self {
            source,
            cache: Vec::new(),
            last_skipped: 0,
            errors: 0,
        }
    }

    /// Re-reads the catalog. On failure the previous cache is kept.
    pub fn fetch_candidates(&mut self) -> Result<&[ServiceDescriptor], RepositoryUnavailable> {
        match self.source.fetch_text() {
            Ok(text) => {
                let (set, skipped) = parse_catalog(&text);
                self.cache = set;
                self.last_skipped = skipped;
                Ok(&self.cache)
            }
            Err(reason) => {
                self.errors += 1;
                Err(RepositoryUnavailable {
                    source_name: self.source.describe(),
                    reason,
                })
            }
        }
    }

    pub fn cached(&self) -> &[ServiceDescriptor] {
        &self.cache
    }

    pub fn last_skipped(&self) -> usize {
        self.last_skipped
    }

    pub fn errors(&self) -> u64 {
        self.errors
    }
}
