use std::sync::Arc;
use std::time::Instant;

use lisa_core::apmon::ApmonSender;
use lisa_core::bus::ListenerBus;
use lisa_core::metrics::{Batch, BatchBuilder, CollectError, CollectorModule, SchedulerStats};

pub const AGENT_MODULE_ID: &str = "agent";

/// Handles on the agent's own counters.
#[derive(Clone)]
pub struct AgentCounters {
    pub bus: ListenerBus,
    pub apmon: Option<Arc<ApmonSender>>,
    pub scheduler: Arc<SchedulerStats>,
    pub started: Instant,
}

/// Publishes the agent's own counters as the `agent` module.
pub struct AgentStatsCollector {
    counters: AgentCounters,
}

impl AgentStatsCollector {
    pub fn new(counters: AgentCounters) -> Self {
        Self { counters }
    }
}

impl CollectorModule for AgentStatsCollector {
    fn id(&self) -> &str {
        AGENT_MODULE_ID
    }

    fn collect(&mut self, now_ms: u64) -> Result<Batch, CollectError> {
        use std::sync::atomic::Ordering::Relaxed;
        let c = &self.counters;
        let mut b = BatchBuilder::new(AGENT_MODULE_ID, now_ms);
        b.push("uptime_s", c.started.elapsed().as_secs() as i64, "s")
            .push("bus.published", c.bus.published() as i64, "")
            .push("bus.dropped", c.bus.dropped() as i64, "")
            .push("bus.subscribers", c.bus.subscriber_count() as i64, "")
            .push(
                "scheduler.batches",
                c.scheduler.batches.load(Relaxed) as i64,
                "",
            )
            .push(
                "scheduler.records",
                c.scheduler.records.load(Relaxed) as i64,
                "",
            );
        if let Some(a) = &c.apmon {
            b.push("apmon.datagrams", a.datagrams_sent() as i64, "")
                .push("apmon.send_errors", a.send_errors() as i64, "");
        }
        Ok(b.finish())
    }
}
