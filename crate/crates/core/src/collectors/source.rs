use std::net::IpAddr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}: value not available")]
    Missing(&'static str),
    #[error("parse error in {what}: {detail}")]
    Parse { what: String, detail: String },
}

impl SourceError {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        SourceError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: impl Into<String>, detail: impl Into<String>) -> Self {
        SourceError::Parse {
            what: what.into(),
            detail: detail.into(),
        }
    }
}

/// Cumulative CPU ticks split by user, system and idle time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CpuCounters {
    pub user: u64,
    pub system: u64,
    pub idle: u64,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryInfo {
    pub free_kb: u64,
    pub total_kb: u64,
    pub swap_in_pages: u64,
    pub swap_out_pages: u64,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiskInfo {
    pub mount: String,
    pub free_mb: u64,
    pub total_mb: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadAverages {
    pub load1: f64,
    pub load5: f64,
    pub load15: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetCounters {
    pub interface: String,
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub timestamp_ms: u64,
}

/// Identity fields as reported by the source. `local_ip` is kept as text so
/// a malformed address can be detected and dropped by the collector.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SystemIdentity {
    pub os_name: String,
    pub os_version: String,
    pub username: String,
    pub runtime_version: String,
    pub local_ip: String,
    pub public_ip: Option<String>,
    pub as_number: Option<u32>,
}

impl SystemIdentity {
    pub fn local_ip_addr(&self) -> Option<IpAddr> {
        self.local_ip.parse().ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardwareInfo {
    pub cpu_model: String,
    pub cpu_count: u32,
    pub total_memory_kb: u64,
}

/// Where collectors read the station's counters from. The live
/// implementation reads the running OS; the fixture implementation replays
/// recorded snapshots.
pub trait PlatformSource: Send {
    /// Moves to the next sample. Collectors call it once per collection pass
    /// so every read within a pass sees the same snapshot.
    fn advance(&mut self) -> Result<(), SourceError> {
        Ok(())
    }

    fn read_cpu_counters(&mut self) -> Result<CpuCounters, SourceError>;
    fn read_memory(&mut self) -> Result<MemoryInfo, SourceError>;
    fn read_disks(&mut self) -> Result<Vec<DiskInfo>, SourceError>;
    fn read_load(&mut self) -> Result<LoadAverages, SourceError>;
    fn read_process_count(&mut self) -> Result<i64, SourceError>;
    fn read_net_counters(&mut self) -> Result<Vec<NetCounters>, SourceError>;
    fn read_system_identity(&mut self) -> Result<SystemIdentity, SourceError>;
    fn read_hardware(&mut self) -> Result<HardwareInfo, SourceError>;
}
