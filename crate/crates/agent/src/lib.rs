//! The deployable agent: configuration, module registry, runtime wiring,
//! control port, the `watch` view and the mock peers used for testing.

pub mod config;
pub mod control;
pub mod mockml;
pub mod mockrepo;
pub mod registry;
pub mod runtime;
pub mod stats;
pub mod watch;

pub use config::{AgentConfig, ConfigError};
pub use runtime::{Agent, StartError};
