use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};

use super::{Batch, BatchBuilder, CollectError, CollectorModule, MetricValue};

/// A value produced by a background job, stamped when it is collected.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub parameter: String,
    pub value: MetricValue,
    pub units: String,
}

impl Sample {
    pub fn new(parameter: impl Into<String>, value: impl Into<MetricValue>, units: &str) -> Self {
        Self {
            parameter: parameter.into(),
            value: value.into(),
            units: units.to_owned(),
        }
    }
}

/// Slow work (network probes, repository queries) run off the scheduler.
pub trait BackgroundJob: Send + 'static {
    fn run(&mut self) -> Vec<Sample>;
}

impl<F> BackgroundJob for F
where
    F: FnMut() -> Vec<Sample> + Send + 'static,
{
    fn run(&mut self) -> Vec<Sample> {
        self()
    }
}

type Results = Arc<Mutex<Vec<Vec<Sample>>>>;

/// Collector whose `collect` only triggers its job on a worker thread and
/// returns whatever earlier runs finished. It never blocks the scheduler.
pub struct OffloadedCollector {
    id: String,
    default_interval_ms: Option<u64>,
    job: Arc<Mutex<Box<dyn BackgroundJob>>>,
    results: Results,
    trigger: Option<SyncSender<()>>,
    stop: Arc<AtomicBool>,
}

impl OffloadedCollector {
    pub fn new(id: impl Into<String>, job: impl BackgroundJob) -> Self {
        Self {
            id: id.into(),
            default_interval_ms: None,
            job: Arc::new(Mutex::new(Box::new(job))),
            results: Arc::default(),
            trigger: None,
            stop: Arc::new(AtomicBool::new(false)),
        }
    }

    pub fn with_default_interval(mut self, ms: u64) -> Self {
        self.default_interval_ms = Some(ms);
        self
    }

    fn spawn_worker(&mut self) {
        let (tx, rx) = mpsc::sync_channel::<()>(1);
        let stop = Arc::new(AtomicBool::new(false));
        let job = Arc::clone(&self.job);
        let results = Arc::clone(&self.results);
        let worker_stop = Arc::clone(&stop);
        let spawned = std::thread::Builder::new()
            .name(format!("{}-worker", self.id))
            .spawn(move || worker(rx, job, results, worker_stop));
        match spawned {
            Ok(_) => {
                self.trigger = Some(tx);
                self.stop = stop;
            }
            Err(e) => log::error!("{}: cannot start worker: {e}", self.id),
        }
    }
}

fn worker(
    rx: Receiver<()>,
    job: Arc<Mutex<Box<dyn BackgroundJob>>>,
    results: Results,
    stop: Arc<AtomicBool>,
) {
    while rx.recv().is_ok() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let out = job.lock().unwrap_or_else(|e| e.into_inner()).run();
        if stop.load(Ordering::SeqCst) {
            break;
        }
        results.lock().unwrap_or_else(|e| e.into_inner()).push(out);
    }
}

impl CollectorModule for OffloadedCollector {
    fn id(&self) -> &str {
        &self.id
    }

    fn default_interval_ms(&self) -> Option<u64> {
        self.default_interval_ms
    }

    fn collect(&mut self, now_ms: u64) -> Result<Batch, CollectError> {
        if self.trigger.is_none() {
            self.spawn_worker();
        }
        if let Some(tx) = &self.trigger {
            match tx.try_send(()) {
                Ok(()) | Err(TrySendError::Full(())) => {}
                Err(TrySendError::Disconnected(())) => {
                    self.trigger = None;
                    return Err(CollectError::new("worker exited"));
                }
            }
        }
        let finished = std::mem::take(&mut *self.results.lock().unwrap_or_else(|e| e.into_inner()));
        // several finished runs collapse to the latest value per parameter
        let mut order = Vec::new();
        let mut latest: HashMap<String, Sample> = HashMap::new();
        for s in finished.into_iter().flatten() {
            if !latest.contains_key(&s.parameter) {
                order.push(s.parameter.clone());
            }
            latest.insert(s.parameter.clone(), s);
        }
        let mut b = BatchBuilder::new(self.id.clone(), now_ms);
        for p in order {
            let s = latest.remove(&p).expect("present");
            b.push(s.parameter, s.value, &s.units);
        }
        Ok(b.finish())
    }

    fn on_start(&mut self) {
        self.results
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .clear();
        self.spawn_worker();
    }

    fn on_stop(&mut self) {
        // a job in flight finishes on its own and its result is discarded
        self.stop.store(true, Ordering::SeqCst);
        self.trigger = None;
    }
}
