use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use lisa_core::apmon::ApmonSender;
use lisa_core::bus::{BusConfig, ListenerBus, ListenerServer};
use lisa_core::metrics::{
    BatchSink, Clock, MetricRecord, Scheduler, SchedulerConfig, SharedScheduler, SystemClock,
};
use thiserror::Error;

use crate::config::AgentConfig;
use crate::control::ControlServer;
use crate::registry::{BuildContext, ModuleRegistry, MODULE_IDS};
use crate::stats::AgentCounters;

/// Upper bound on a clean shutdown.
pub const SHUTDOWN_BUDGET: Duration = Duration::from_secs(2);

#[derive(Debug, Error)]
pub enum StartError {
    #[error("cannot bind {what} port {port}: {source}")]
    Bind {
        what: &'static str,
        port: u16,
        source: std::io::Error,
    },
    #[error("{0}")]
    Module(String),
    #[error("scheduler: {0}")]
    Scheduler(String),
}

/// Every published batch goes to the bus and, when configured, to the
/// aggregators.
struct FanOut {
    bus: ListenerBus,
    apmon: Option<Arc<ApmonSender>>,
}

impl BatchSink for FanOut {
    fn publish(&self, batch: &[MetricRecord]) {
        self.bus.publish(batch);
        if let Some(a) = &self.apmon {
            a.send_batch(batch);
        }
    }
}

/// A running agent: scheduler thread, listener port and control port.
pub struct Agent {
    bus: ListenerBus,
    scheduler: SharedScheduler,
    listener: ListenerServer,
    control: ControlServer,
    apmon: Option<Arc<ApmonSender>>,
    stop: Arc<AtomicBool>,
    tick_thread: Option<JoinHandle<()>>,
}

impl Agent {
    pub fn start(config: &AgentConfig) -> Result<Self, StartError> {
        Self::start_with(config, &ModuleRegistry::standard(), Arc::new(SystemClock))
    }

    pub fn start_with(
        config: &AgentConfig,
        registry: &ModuleRegistry,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, StartError> {
        let bus = ListenerBus::new(BusConfig {
            queue_capacity: config.queue_capacity,
            max_subscribers: config.max_subscribers,
        });
        let apmon = (!config.aggregators.is_empty()).then(|| {
            Arc::new(ApmonSender::new(
                config.cluster.clone(),
                config.node.clone(),
                config.aggregators.clone(),
            ))
        });
        let overrides = config
            .modules
            .iter()
            .filter_map(|(id, m)| m.interval_ms.map(|ms| (id.clone(), ms)))
            .collect();
        let sink = Arc::new(FanOut {
            bus: bus.clone(),
            apmon: apmon.clone(),
        });
        let scheduler = Scheduler::new(
            SchedulerConfig {
                default_interval_ms: config.default_interval_ms,
                overrides,
            },
            sink,
        )
        .map_err(|e| StartError::Scheduler(e.to_string()))?;
        let counters = AgentCounters {
            bus: bus.clone(),
            apmon: apmon.clone(),
            scheduler: scheduler.stats(),
            started: Instant::now(),
        };
        let scheduler = SharedScheduler::new(scheduler);
        {
            let ctx = BuildContext {
                config,
                clock: Arc::clone(&clock),
                counters: counters.clone(),
            };
            let mut s = scheduler.lock();
            for &id in MODULE_IDS {
                let m = registry.build(id, &ctx).map_err(StartError::Module)?;
                s.register_module(m)
                    .map_err(|e| StartError::Scheduler(e.to_string()))?;
            }
            for (id, m) in &config.modules {
                if m.enabled {
                    s.start_module(id)
                        .map_err(|e| StartError::Scheduler(e.to_string()))?;
                }
            }
        }

        let listener = ListenerServer::bind(
            (config.listener_address, config.listener_port),
            bus.clone(),
            config.agent_id.clone(),
        )
        .map_err(|source| StartError::Bind {
            what: "listener",
            port: config.listener_port,
            source,
        })?;
        let control = ControlServer::bind(
            (config.control_address, config.control_port),
            scheduler.clone(),
            counters,
        )
        .map_err(|source| StartError::Bind {
            what: "control",
            port: config.control_port,
            source,
        })?;

        let stop = Arc::new(AtomicBool::new(false));
        let s = scheduler.clone();
        let st = Arc::clone(&stop);
        let tick_thread = std::thread::Builder::new()
            .name("scheduler".into())
            .spawn(move || s.run(clock.as_ref(), &st))
            .map_err(|e| StartError::Scheduler(e.to_string()))?;
        log::info!(
            "agent {} listening on {}, control on {}",
            config.agent_id,
            listener.local_addr(),
            control.local_addr()
        );
        Ok(Self {
            bus,
            scheduler,
            listener,
            control,
            apmon,
            stop,
            tick_thread: Some(tick_thread),
        })
    }

    pub fn listener_addr(&self) -> SocketAddr {
        self.listener.local_addr()
    }

    pub fn control_addr(&self) -> SocketAddr {
        self.control.local_addr()
    }

    pub fn bus(&self) -> &ListenerBus {
        &self.bus
    }

    pub fn scheduler(&self) -> &SharedScheduler {
        &self.scheduler
    }

    pub fn apmon(&self) -> Option<&Arc<ApmonSender>> {
        self.apmon.as_ref()
    }

    /// Stops collection, answers in-flight control commands, drains
    /// subscriber queues and closes all ports within [`SHUTDOWN_BUDGET`].
    pub fn shutdown(mut self) {
        self.shutdown_inner();
    }

    fn shutdown_inner(&mut self) {
        let Some(h) = self.tick_thread.take() else {
            return;
        };
        let t = Instant::now();
        self.stop.store(true, Ordering::SeqCst);
        let _ = h.join();
        self.control.shutdown(Duration::from_millis(300));
        {
            let mut s = self.scheduler.lock();
            let running: Vec<String> = s
                .list_modules()
                .into_iter()
                .filter(|m| m.state.to_string() == "Running")
                .map(|m| m.id)
                .collect();
            for id in running {
                let _ = s.stop_module(&id);
            }
        }
        let left = SHUTDOWN_BUDGET.saturating_sub(t.elapsed());
        if !self.bus.flush(left / 2) {
            log::warn!("shutdown: subscriber queues not drained");
        }
        self.bus.close();
        let left = SHUTDOWN_BUDGET.saturating_sub(t.elapsed());
        self.listener
            .shutdown(left.saturating_sub(Duration::from_millis(50)));
        log::info!("agent stopped in {} ms", t.elapsed().as_millis());
    }
}

impl Drop for Agent {
    fn drop(&mut self) {
        self.shutdown_inner();
    }
}
