//! Name-keyed factories for the interchangeable parts of the agent:
//! collector modules, bandwidth backends and repository catalog sources.

use std::collections::BTreeMap;
use std::sync::Arc;

use lisa_core::collectors::{HardwareCollector, HostCollector, SystemInfoCollector};
use lisa_core::metrics::{Clock, CollectorModule};
use lisa_core::netprobe::{
    self, BandwidthEstimator, BulkTransfer, ExternalTool, ProbePlan, TcpConnectProber,
};
use lisa_core::selector::{self, CatalogSource, Repository, SelectionHistory, SelectorLoop};

use crate::config::AgentConfig;
use crate::stats::{AgentCounters, AgentStatsCollector};

/// Every module the agent knows, in registration order.
pub const MODULE_IDS: &[&str] = &[
    "system", "host", "hardware", "netprobe", "selector", "agent",
];

pub struct BuildContext<'a> {
    pub config: &'a AgentConfig,
    pub clock: Arc<dyn Clock>,
    pub counters: AgentCounters,
}

pub type ModuleFactory = fn(&BuildContext) -> Result<Box<dyn CollectorModule>, String>;

pub struct ModuleRegistry {
    factories: BTreeMap<&'static str, ModuleFactory>,
}

impl ModuleRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn standard() -> Self {
        let mut r = Self::empty();
        r.register("system", build_system);
        r.register("host", build_host);
        r.register("hardware", build_hardware);
        r.register("netprobe", build_netprobe);
        r.register("selector", build_selector);
        r.register("agent", build_agent);
        r
    }

    /// Adds or replaces a factory.
    pub fn register(&mut self, name: &'static str, f: ModuleFactory) {
        self.factories.insert(name, f);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn build(
        &self,
        name: &str,
        ctx: &BuildContext,
    ) -> Result<Box<dyn CollectorModule>, String> {
        let f = self
            .factories
            .get(name)
            .ok_or_else(|| format!("no module named {name}"))?;
        f(ctx).map_err(|e| format!("module {name}: {e}"))
    }
}

fn build_system(ctx: &BuildContext) -> Result<Box<dyn CollectorModule>, String> {
    let src = ctx.config.source_spec().open().map_err(|e| e.to_string())?;
    Ok(Box::new(SystemInfoCollector::new(src)))
}

fn build_host(ctx: &BuildContext) -> Result<Box<dyn CollectorModule>, String> {
    let src = ctx.config.source_spec().open().map_err(|e| e.to_string())?;
    Ok(Box::new(HostCollector::new(src)))
}

fn build_hardware(ctx: &BuildContext) -> Result<Box<dyn CollectorModule>, String> {
    let src = ctx.config.source_spec().open().map_err(|e| e.to_string())?;
    Ok(Box::new(HardwareCollector::new(src)))
}

/// Bandwidth backend selected by `probe.bw_backend`.
pub fn estimator(config: &AgentConfig) -> Result<Arc<dyn BandwidthEstimator>, String> {
    match config.bw_backend.as_str() {
        "bulk" => Ok(Arc::new(BulkTransfer)),
        "external" => {
            let (prog, args) = config
                .bw_command
                .split_first()
                .ok_or("external backend needs a command")?;
            Ok(Arc::new(ExternalTool::new(prog.clone(), args.to_vec())))
        }
        other => Err(format!("unknown bandwidth backend {other}")),
    }
}

fn build_netprobe(ctx: &BuildContext) -> Result<Box<dyn CollectorModule>, String> {
    let c = ctx.config;
    let plan = ProbePlan {
        rtt_targets: c.rtt_targets.clone(),
        bw_targets: c.bw_targets.clone(),
        config: c.probe.clone(),
        estimator: estimator(c)?,
    };
    Ok(Box::new(netprobe::collector(plan)))
}

struct Unconfigured;

impl CatalogSource for Unconfigured {
    fn describe(&self) -> String {
        "(none)".into()
    }

    fn fetch_text(&mut self) -> Result<String, String> {
        Err("no repository.source configured".into())
    }
}

/// Catalog source selected by `repository.source` (file path or URL).
pub fn catalog_source(config: &AgentConfig) -> Box<dyn CatalogSource> {
    match &config.repository {
        Some(r) => r.open(),
        None => Box::new(Unconfigured),
    }
}

fn build_selector(ctx: &BuildContext) -> Result<Box<dyn CollectorModule>, String> {
    let c = ctx.config;
    let state = SelectorLoop {
        repository: Repository::new(catalog_source(c)),
        locality: (&c.locality).into(),
        policy: c.policy.clone(),
        current: c.current_service.clone(),
        history: SelectionHistory::default(),
        prober: Arc::new(TcpConnectProber {
            config: c.probe.clone(),
        }),
        clock: Arc::clone(&ctx.clock),
    };
    Ok(Box::new(selector::collector(state)))
}

fn build_agent(ctx: &BuildContext) -> Result<Box<dyn CollectorModule>, String> {
    Ok(Box::new(AgentStatsCollector::new(ctx.counters.clone())))
}
