use std::net::IpAddr;

use super::source::PlatformSource;
use crate::metrics::{Batch, BatchBuilder, CollectError, CollectorModule};

pub const SYSTEM_MODULE_ID: &str = "system";
pub const HARDWARE_MODULE_ID: &str = "hardware";

/// Hardware is close to static; it is sampled rarely unless configured.
pub const HARDWARE_DEFAULT_INTERVAL_MS: u64 = 300_000;

/// Operating system, user, runtime and network identity of the station.
/// Optional fields (`sys.public_ip`, `sys.as`) are only reported when known.
pub struct SystemInfoCollector {
    source: Box<dyn PlatformSource>,
}

impl SystemInfoCollector {
    pub fn new(source: Box<dyn PlatformSource>) -> Self {
        Self { source }
    }
}

impl CollectorModule for SystemInfoCollector {
    fn id(&self) -> &str {
        SYSTEM_MODULE_ID
    }

    fn collect(&mut self, now_ms: u64) -> Result<Batch, CollectError> {
        self.source
            .advance()
            .map_err(|e| CollectError::new(e.to_string()))?;
        let id = self
            .source
            .read_system_identity()
            .map_err(|e| CollectError::new(e.to_string()))?;
        let mut b = BatchBuilder::new(SYSTEM_MODULE_ID, now_ms);
        b.push("sys.os_name", id.os_name, "")
            .push("sys.os_version", id.os_version, "")
            .push("sys.username", id.username, "")
            .push("sys.runtime_version", id.runtime_version, "");
        match id.local_ip.parse::<IpAddr>() {
            Ok(ip) => b.push("sys.local_ip", ip.to_string(), ""),
            Err(_) => b.reject("malformed local_ip"),
        };
        if let Some(public) = id.public_ip {
            match public.parse::<IpAddr>() {
                Ok(ip) => b.push("sys.public_ip", ip.to_string(), ""),
                Err(_) => b.reject("malformed public_ip"),
            };
        }
        if let Some(asn) = id.as_number {
            b.push("sys.as", i64::from(asn), "");
        }
        Ok(b.finish())
    }
}

/// CPU model, CPU count and installed memory.
pub struct HardwareCollector {
    source: Box<dyn PlatformSource>,
}

impl HardwareCollector {
    pub fn new(source: Box<dyn PlatformSource>) -> Self {
        Self { source }
    }
}

impl CollectorModule for HardwareCollector {
    fn id(&self) -> &str {
        HARDWARE_MODULE_ID
    }

    fn default_interval_ms(&self) -> Option<u64> {
        Some(HARDWARE_DEFAULT_INTERVAL_MS)
    }

    fn collect(&mut self, now_ms: u64) -> Result<Batch, CollectError> {
        self.source
            .advance()
            .map_err(|e| CollectError::new(e.to_string()))?;
        let hw = self
            .source
            .read_hardware()
            .map_err(|e| CollectError::new(e.to_string()))?;
        let mut b = BatchBuilder::new(HARDWARE_MODULE_ID, now_ms);
        b.push("hw.cpu_model", hw.cpu_model, "");
        if hw.cpu_count >= 1 {
            b.push("hw.cpu_count", i64::from(hw.cpu_count), "");
        } else {
            b.reject("cpu_count must be at least 1");
        }
        b.push("hw.total_memory_kb", hw.total_memory_kb as i64, "KB");
        Ok(b.finish())
    }
}
