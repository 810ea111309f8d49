//! Station monitoring modules (system identity, host metrics, hardware) and
//! the platform sources they read from.

mod fixture;
mod host;
mod identity;
mod linux;
mod locality;
pub mod sample;
mod source;

pub use fixture::{FixtureSource, Snapshot};
pub use host::{HostCollector, HOST_MODULE_ID};
pub use identity::{
    HardwareCollector, SystemInfoCollector, HARDWARE_DEFAULT_INTERVAL_MS, HARDWARE_MODULE_ID,
    SYSTEM_MODULE_ID,
};
pub use linux::{live_source_available, LinuxSource};
pub use locality::LocalityFile;
pub use sample::NoSample;
pub use source::*;

use std::path::PathBuf;

/// Which platform source backs the collectors, selected by name in the
/// agent configuration (`live` or `fixture`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceSpec {
    Live { locality: LocalityFile },
    Fixture { index: PathBuf },
}

impl SourceSpec {
    pub const NAMES: &'static [&'static str] = &["live", "fixture"];

    pub fn name(&self) -> &'static str {
        match self {
            SourceSpec::Live { .. } => "live",
            SourceSpec::Fixture { .. } => "fixture",
        }
    }

    /// Opens a fresh source. Each collector gets its own instance so no
    /// state is shared between modules.
    pub fn open(&self) -> Result<Box<dyn PlatformSource>, SourceError> {
        Ok(match self {
            SourceSpec::Live { locality } => Box::new(LinuxSource::new(locality.clone())),
            SourceSpec::Fixture { index } => Box::new(FixtureSource::load(index)?),
        })
    }
}
