use std::collections::HashMap;

use super::sample::{self, LoadValue};
use super::source::{CpuCounters, MemoryInfo, NetCounters, PlatformSource, SourceError};
use crate::metrics::{sanitize_identifier, Batch, BatchBuilder, CollectError, CollectorModule};

pub const HOST_MODULE_ID: &str = "host";

type Part = fn(&mut HostCollector, &mut BatchBuilder) -> Result<(), SourceError>;

/// CPU, memory, swap, disk, load, process and per-interface network metrics.
///
/// Counter-derived values (CPU split, byte and page rates) need two
/// snapshots, so the first pass after start only reports gauges.
pub struct HostCollector {
    source: Box<dyn PlatformSource>,
    prev_cpu: Option<CpuCounters>,
    prev_mem: Option<MemoryInfo>,
    prev_net: HashMap<String, NetCounters>,
}

impl HostCollector {
    pub fn new(source: Box<dyn PlatformSource>) -> Self {
        Self {
            source,
            prev_cpu: None,
            prev_mem: None,
            prev_net: HashMap::new(),
        }
    }

    fn cpu(&mut self, b: &mut BatchBuilder) -> Result<(), SourceError> {
        let curr = self.source.read_cpu_counters()?;
        if let Some(prev) = self.prev_cpu.replace(curr) {
            if let Ok(p) = sample::sample_cpu(&prev, &curr) {
                b.push("cpu.usr", p.usr, "%")
                    .push("cpu.sys", p.sys, "%")
                    .push("cpu.idle", p.idle, "%");
            }
        }
        Ok(())
    }

    fn memory(&mut self, b: &mut BatchBuilder) -> Result<(), SourceError> {
        let curr = self.source.read_memory()?;
        let prev = self.prev_mem.replace(curr);
        match sample::sample_memory(prev.as_ref(), &curr) {
            Ok(m) => {
                b.push("mem.free_kb", m.free_kb as i64, "KB").push(
                    "mem.total_kb",
                    m.total_kb as i64,
                    "KB",
                );
                if let Ok(v) = m.used_pct {
                    b.push("mem.used_pct", v, "%");
                }
                if let Ok(v) = m.swap_in_rate {
                    b.push("swap.in_rate", v, "pages/s");
                }
                if let Ok(v) = m.swap_out_rate {
                    b.push("swap.out_rate", v, "pages/s");
                }
            }
            Err(_) => {
                self.prev_mem = prev;
                b.reject("memory reading has free > total");
            }
        }
        Ok(())
    }

    fn disks(&mut self, b: &mut BatchBuilder) -> Result<(), SourceError> {
        let (params, invalid) = sample::sample_disk(&self.source.read_disks()?);
        for (p, v) in params {
            b.push(p, v, "MB");
        }
        for _ in 0..invalid {
            b.reject("disk reading has free > total");
        }
        Ok(())
    }

    fn load(&mut self, b: &mut BatchBuilder) -> Result<(), SourceError> {
        let load = self.source.read_load()?;
        let procs = self.source.read_process_count()?;
        for (name, v) in sample::sample_load_and_processes(&load, procs) {
            match v {
                Ok(LoadValue::Real(x)) => b.push(name, x, ""),
                Ok(LoadValue::Count(n)) => b.push(name, n, ""),
                Err(_) => b.reject("negative or non-finite load value"),
            };
        }
        Ok(())
    }

    fn network(&mut self, b: &mut BatchBuilder) -> Result<(), SourceError> {
        for curr in self.source.read_net_counters()? {
            let iface = sanitize_identifier(&curr.interface);
            if let Some(prev) = self.prev_net.get(&curr.interface) {
                if let Ok(r) = sample::sample_network(prev, &curr) {
                    if let Ok(v) = r.in_bps {
                        b.push(format!("net.{iface}.in_Bps"), v, "B/s");
                    }
                    if let Ok(v) = r.out_bps {
                        b.push(format!("net.{iface}.out_Bps"), v, "B/s");
                    }
                }
            }
            self.prev_net.insert(curr.interface.clone(), curr);
        }
        Ok(())
    }
}

impl CollectorModule for HostCollector {
    fn id(&self) -> &str {
        HOST_MODULE_ID
    }

    fn collect(&mut self, now_ms: u64) -> Result<Batch, CollectError> {
        self.source
            .advance()
            .map_err(|e| CollectError::new(e.to_string()))?;
        let mut b = BatchBuilder::new(HOST_MODULE_ID, now_ms);
        let parts: [Part; 5] = [
            Self::cpu,
            Self::memory,
            Self::disks,
            Self::load,
            Self::network,
        ];
        let mut failures = Vec::new();
        for part in parts {
            if let Err(e) = part(self, &mut b) {
                failures.push(e.to_string());
            }
        }
        if failures.len() == parts.len() {
            return Err(CollectError::new(failures.join("; ")));
        }
        for f in &failures {
            b.reject(f);
        }
        Ok(b.finish())
    }

    fn on_start(&mut self) {
        // rates must not span a stopped period
        self.prev_cpu = None;
        self.prev_mem = None;
        self.prev_net.clear();
    }
}
