//! Core of the localhost monitoring agent.
//!
//! - [`metrics`]: record model, collector contract, deadline scheduler
//! - [`collectors`]: system, host and hardware modules over a platform source
//! - [`bus`]: listener fan-out and the `REC` line protocol
//! - [`apmon`]: XDR datagram reporting to aggregators
//! - [`netprobe`]: connection RTT and bulk-transfer bandwidth probes
//! - [`selector`]: repository-fed reflector ranking and reconnect advice

pub mod apmon;
pub mod bus;
pub mod collectors;
pub mod metrics;
pub mod netprobe;
pub mod selector;
