use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use thiserror::Error;

use super::{Batch, Clock, MetricRecord, CORE_MODULE_ID};

/// Lower bound for every sampling interval.
pub const MIN_INTERVAL_MS: u64 = 100;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchedulerError {
    #[error("module {0} is already registered")]
    DuplicateModule(String),
    #[error("unknown module {0}")]
    UnknownModule(String),
    #[error("interval {0} ms is below the {MIN_INTERVAL_MS} ms floor")]
    IntervalTooShort(u64),
}

/// Failure of a single `collect()` pass. The scheduler counts it and keeps
/// the module running.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct CollectError(pub String);

impl CollectError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

/// An independently controllable monitoring module.
///
/// `collect` is only ever called from the scheduler's execution context and
/// must not block for long; modules that need slow I/O (probes, repository
/// queries) do it on their own worker and return the latest results here.
pub trait CollectorModule: Send {
    fn id(&self) -> &str;

    /// Interval used when the configuration has no override.
    fn default_interval_ms(&self) -> Option<u64> {
        None
    }

    fn collect(&mut self, now_ms: u64) -> Result<Batch, CollectError>;

    fn on_start(&mut self) {}

    fn on_stop(&mut self) {}
}

/// Receiver of published batches.
pub trait BatchSink: Send + Sync {
    fn publish(&self, batch: &[MetricRecord]);
}

impl<F> BatchSink for F
where
    F: Fn(&[MetricRecord]) + Send + Sync,
{
    fn publish(&self, batch: &[MetricRecord]) {
        self(batch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModuleState {
    Stopped,
    Running,
}

impl fmt::Display for ModuleState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModuleState::Stopped => "Stopped",
            ModuleState::Running => "Running",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleInfo {
    pub id: String,
    pub state: ModuleState,
    pub interval_ms: u64,
    pub batches: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchedulerConfig {
    pub default_interval_ms: u64,
    pub overrides: BTreeMap<String, u64>,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            default_interval_ms: 5000,
            overrides: BTreeMap::new(),
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<(), SchedulerError> {
        std::iter::once(self.default_interval_ms)
            .chain(self.overrides.values().copied())
            .find(|&ms| ms < MIN_INTERVAL_MS)
            .map_or(Ok(()), |ms| Err(SchedulerError::IntervalTooShort(ms)))
    }
}

struct Slot {
    module: Box<dyn CollectorModule>,
    state: ModuleState,
    interval_ms: u64,
    generation: u64,
    last_run: Option<u64>,
    last_ts: HashMap<String, u64>,
    batches: u64,
}

/// Counters readable without taking the scheduler lock.
#[derive(Debug, Default)]
pub struct SchedulerStats {
    pub collect_errors: AtomicU64,
    pub batches: AtomicU64,
    pub records: AtomicU64,
}

/// Deadline-queue scheduler. Every call to [`Scheduler::tick`] runs each
/// Running module whose deadline has passed exactly once, in deadline order.
pub struct Scheduler {
    config: SchedulerConfig,
    modules: BTreeMap<String, Slot>,
    // (deadline, generation, id); entries whose generation no longer matches
    // the slot are stale and skipped.
    queue: BinaryHeap<Reverse<(u64, u64, String)>>,
    sink: Arc<dyn BatchSink>,
    stats: Arc<SchedulerStats>,
    errors_reported: u64,
    last_core_ts: u64,
}

impl Scheduler {
    pub fn new(config: SchedulerConfig, sink: Arc<dyn BatchSink>) -> Result<Self, SchedulerError> {
        config.validate()?;
        Ok(Self {
            config,
            modules: BTreeMap::new(),
            queue: BinaryHeap::new(),
            sink,
            stats: Arc::default(),
            errors_reported: 0,
            last_core_ts: 0,
        })
    }

    pub fn stats(&self) -> Arc<SchedulerStats> {
        Arc::clone(&self.stats)
    }

    pub fn collect_errors(&self) -> u64 {
        self.stats.collect_errors.load(Ordering::Relaxed)
    }

    pub fn register_module(
        &mut self,
        module: Box<dyn CollectorModule>,
    ) -> Result<String, SchedulerError> {
        let id = module.id().to_owned();
        if self.modules.contains_key(&id) {
            return Err(SchedulerError::DuplicateModule(id));
        }
        let interval_ms = self
            .config
            .overrides
            .get(&id)
            .copied()
            .or_else(|| module.default_interval_ms())
            .unwrap_or(self.config.default_interval_ms);
        if interval_ms < MIN_INTERVAL_MS {
            return Err(SchedulerError::IntervalTooShort(interval_ms));
        }
        self.modules.insert(
            id.clone(),
            Slot {
                module,
                state: ModuleState::Stopped,
                interval_ms,
                generation: 0,
                last_run: None,
                last_ts: HashMap::new(),
                batches: 0,
            },
        );
        Ok(id)
    }

    pub fn list_modules(&self) -> Vec<ModuleInfo> {
        self.modules
            .iter()
            .map(|(id, s)| ModuleInfo {
                id: id.clone(),
                state: s.state,
                interval_ms: s.interval_ms,
                batches: s.batches,
            })
            .collect()
    }

    pub fn module_state(&self, id: &str) -> Option<ModuleState> {
        self.modules.get(id).map(|s| s.state)
    }

    fn slot_mut(&mut self, id: &str) -> Result<&mut Slot, SchedulerError> {
        self.modules
            .get_mut(id)
            .ok_or_else(|| SchedulerError::UnknownModule(id.to_owned()))
    }

    /// Marks the module Running; it is collected on the next tick.
    pub fn start_module(&mut self, id: &str) -> Result<(), SchedulerError> {
        let slot = self.slot_mut(id)?;
        if slot.state == ModuleState::Running {
            return Ok(());
        }
        slot.state = ModuleState::Running;
        slot.generation += 1;
        slot.module.on_start();
        let generation = slot.generation;
        self.queue.push(Reverse((0, generation, id.to_owned())));
        Ok(())
    }

    pub fn stop_module(&mut self, id: &str) -> Result<(), SchedulerError> {
        let slot = self.slot_mut(id)?;
        if slot.state == ModuleState::Stopped {
            return Ok(());
        }
        slot.state = ModuleState::Stopped;
        slot.generation += 1;
        slot.module.on_stop();
        Ok(())
    }

    pub fn set_interval(&mut self, id: &str, interval_ms: u64) -> Result<(), SchedulerError> {
        if interval_ms < MIN_INTERVAL_MS {
            return Err(SchedulerError::IntervalTooShort(interval_ms));
        }
        let slot = self.slot_mut(id)?;
        slot.interval_ms = interval_ms;
        if slot.state == ModuleState::Running {
            slot.generation += 1;
            let deadline = slot.last_run.map_or(0, |t| t + interval_ms);
            let generation = slot.generation;
            self.queue
                .push(Reverse((deadline, generation, id.to_owned())));
        }
        Ok(())
    }

    /// Earliest pending deadline of a Running module.
    pub fn next_deadline(&mut self) -> Option<u64> {
        while let Some(Reverse((deadline, generation, id))) = self.queue.peek() {
            let live = self
                .modules
                .get(id)
                .is_some_and(|s| s.generation == *generation && s.state == ModuleState::Running);
            if live {
                return Some(*deadline);
            }
            self.queue.pop();
        }
        None
    }

    /// Runs every due module once and publishes its batch. Returns the number
    /// of batches published (the `core` self-metric batch included).
    pub fn tick(&mut self, now_ms: u64) -> usize {
        let mut due = Vec::new();
        while let Some(Reverse((deadline, _, _))) = self.queue.peek() {
            if *deadline > now_ms {
                break;
            }
            let Reverse(entry) = self.queue.pop().expect("peeked");
            due.push(entry);
        }

        let mut published = 0;
        for (deadline, generation, id) in due {
            let Some(slot) = self.modules.get_mut(&id) else {
                continue;
            };
            if slot.generation != generation || slot.state != ModuleState::Running {
                continue;
            }
            let (records, errors) = run_slot(&id, slot, now_ms);

            let next = if slot.last_run.is_none() || deadline == 0 {
                now_ms + slot.interval_ms
            } else {
                // keep the phase; skip whole intervals missed while stalled
                let behind = (now_ms - deadline) / slot.interval_ms;
                deadline + (behind + 1) * slot.interval_ms
            };
            slot.last_run = Some(now_ms);
            self.queue.push(Reverse((next, generation, id)));

            if errors > 0 {
                self.stats
                    .collect_errors
                    .fetch_add(errors, Ordering::Relaxed);
            }
            if !records.is_empty() {
                slot.batches += 1;
                self.stats.batches.fetch_add(1, Ordering::Relaxed);
                self.stats
                    .records
                    .fetch_add(records.len() as u64, Ordering::Relaxed);
                self.sink.publish(&records);
                published += 1;
            }
        }

        let total_errors = self.collect_errors();
        if total_errors > self.errors_reported && now_ms > self.last_core_ts {
            if let Ok(r) = MetricRecord::new(
                CORE_MODULE_ID,
                "core.collect_errors",
                total_errors as i64,
                "",
                now_ms,
            ) {
                self.sink.publish(std::slice::from_ref(&r));
                published += 1;
            }
            self.errors_reported = total_errors;
            self.last_core_ts = now_ms;
        }
        published
    }
}

fn run_slot(id: &str, slot: &mut Slot, now_ms: u64) -> (Vec<MetricRecord>, u64) {
    let batch = match slot.module.collect(now_ms) {
        Ok(b) => b,
        Err(e) => {
            log::warn!("module {id}: collect failed: {e}");
            return (Vec::new(), 1);
        }
    };
    let mut errors = batch.rejected;
    let mut records = Vec::with_capacity(batch.records.len());
    for r in batch.records {
        if r.module_id() != id {
            errors += 1;
            continue;
        }
        let last = slot.last_ts.entry(r.parameter().to_owned()).or_insert(0);
        if r.timestamp_ms() <= *last {
            errors += 1;
            continue;
        }
        *last = r.timestamp_ms();
        records.push(r);
    }
    (records, errors)
}

/// A scheduler shared between the tick loop and the control plane. Commands
/// take the lock, so they land between two ticks.
#[derive(Clone)]
pub struct SharedScheduler(Arc<Mutex<Scheduler>>);

impl SharedScheduler {
    pub fn new(scheduler: Scheduler) -> Self {
        Self(Arc::new(Mutex::new(scheduler)))
    }

    pub fn lock(&self) -> MutexGuard<'_, Scheduler> {
        self.0.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Drives the scheduler from `clock` until `shutdown` is set.
    pub fn run(&self, clock: &dyn Clock, shutdown: &AtomicBool) {
        const MAX_SLEEP_MS: u64 = 25;
        while !shutdown.load(Ordering::SeqCst) {
            let now = clock.now_ms();
            let next = {
                let mut s = self.lock();
                s.tick(now);
                s.next_deadline()
            };
            let wait = next
                .map(|d| d.saturating_sub(clock.now_ms()))
                .unwrap_or(MAX_SLEEP_MS)
                .clamp(1, MAX_SLEEP_MS);
            std::thread::sleep(Duration::from_millis(wait));
        }
    }
}
