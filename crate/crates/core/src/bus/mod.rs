//! Fan-out of published batches to registered listeners.
//!
//! Every subscriber owns a bounded queue. [`ListenerBus::publish`] only
//! appends to those queues, so a slow consumer cannot hold up the
//! scheduler; when a queue is full its oldest records are discarded and
//! counted.

mod client;
mod server;
pub mod wire;

pub use client::{Hello, ListenerClient};
pub use server::ListenerServer;
pub use wire::{decode_record, encode_record, ParseError};

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock, Weak};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::metrics::{BatchSink, MetricRecord};

pub const DEFAULT_QUEUE_CAPACITY: usize = 1024;
pub const DEFAULT_MAX_SUBSCRIBERS: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BusError {
    #[error("subscriber limit of {0} reached")]
    TooManySubscribers(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BusConfig {
    pub queue_capacity: usize,
    pub max_subscribers: usize,
}

impl Default for BusConfig {
    fn default() -> Self {
        Self {
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            max_subscribers: DEFAULT_MAX_SUBSCRIBERS,
        }
    }
}

/// Per-subscriber accounting. At any instant
/// `enqueued == delivered + dropped + queued`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QueueStats {
    pub enqueued: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub queued: u64,
}

struct QueueState {
    buf: VecDeque<MetricRecord>,
    closed: bool,
}

pub(crate) struct SubscriberQueue {
    id: u64,
    filter: BTreeSet<String>,
    capacity: usize,
    state: Mutex<QueueState>,
    ready: Condvar,
    enqueued: AtomicU64,
    delivered: AtomicU64,
    dropped: AtomicU64,
}

impl SubscriberQueue {
    fn accepts(&self, r: &MetricRecord) -> bool {
        self.filter.is_empty() || self.filter.contains(r.module_id())
    }

    /// Appends the matching records, evicting the oldest on overflow.
    /// Returns (enqueued, dropped).
    fn push(&self, batch: &[MetricRecord]) -> (u64, u64) {
        let mut st = self.state.lock().unwrap_or_else(|e| e.into_inner());
        if st.closed {
            return (0, 0);
        }
        let (mut added, mut dropped) = (0, 0);
        for r in batch.iter().filter(|r| self.accepts(r)) {
            if st.buf.len() == self.capacity {
                st.buf.pop_front();
                dropped += 1;
            }
            st.buf.push_back(r.clone());
            added += 1;
        }
        drop(st);
        if added > 0 {
            self.enqueued.fetch_add(added, Ordering::Relaxed);
            self.dropped.fetch_add(dropped, Ordering::Relaxed);
            self.ready.notify_all();
        }
        (added, dropped)
    }

    /// Takes everything queued, waiting up to `timeout` for the first
    /// record. Returns `None` once the queue is closed and empty.
    fn pop_all(&self, timeout: Duration) -> Option<Vec<MetricRecord>> {
        let deadline = Instant::now() + timeout;
        let mut st = self.state.lock().unwrap_or_else(|e| e.into_inner());
        loop {
            if !st.buf.is_empty() {
                let out: Vec<_> = st.buf.drain(..).collect();
                self.delivered
                    .fetch_add(out.len() as u64, Ordering::Relaxed);
                return Some(out);
            }
            if st.closed {
                return None;
            }
            let now = Instant::now();
            if now >= deadline {
                return Some(Vec::new());
            }
            st = self
                .ready
                .wait_timeout(st, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }

    fn close(&self) {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).closed = true;
        self.ready.notify_all();
    }

    fn stats(&self) -> QueueStats {
        let st = self.state.lock().unwrap_or_else(|e| e.into_inner());
        QueueStats {
            enqueued: self.enqueued.load(Ordering::Relaxed),
            delivered: self.delivered.load(Ordering::Relaxed),
            dropped: self.dropped.load(Ordering::Relaxed),
            queued: st.buf.len() as u64,
        }
    }
}

struct BusInner {
    config: BusConfig,
    subs: RwLock<BTreeMap<u64, Arc<SubscriberQueue>>>,
    next_id: AtomicU64,
    published: AtomicU64,
    dropped: AtomicU64,
    closed: AtomicBool,
}

/// Summary of one [`ListenerBus::publish`] call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PublishReport {
    pub subscribers: usize,
    pub enqueued: u64,
    pub dropped: u64,
}

#[derive(Clone)]
pub struct ListenerBus {
    inner: Arc<BusInner>,
}

impl Default for ListenerBus {
    fn default() -> Self {
        Self::new(BusConfig::default())
    }
}

impl ListenerBus {
    pub fn new(config: BusConfig) -> Self {
        Self {
            inner: Arc::new(BusInner {
                config,
                subs: RwLock::new(BTreeMap::new()),
                next_id: AtomicU64::new(1),
                published: AtomicU64::new(0),
                dropped: AtomicU64::new(0),
                closed: AtomicBool::new(false),
            }),
        }
    }

    pub fn config(&self) -> BusConfig {
        self.inner.config
    }

    /// Registers a queue-backed listener. An empty filter matches every
    /// module. Only records published after this call are delivered.
    pub fn subscribe<I, S>(&self, filter: I) -> Result<Subscription, BusError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut subs = self.inner.subs.write().unwrap_or_else(|e| e.into_inner());
        if subs.len() >= self.inner.config.max_subscribers {
            return Err(BusError::TooManySubscribers(
                self.inner.config.max_subscribers,
            ));
        }
        let id = self.inner.next_id.fetch_add(1, Ordering::Relaxed);
        let queue = Arc::new(SubscriberQueue {
            id,
            filter: filter.into_iter().map(Into::into).collect(),
            capacity: self.inner.config.queue_capacity.max(1),
            state: Mutex::new(QueueState {
                buf: VecDeque::new(),
                closed: self.inner.closed.load(Ordering::SeqCst),
            }),
            ready: Condvar::new(),
            enqueued: AtomicU64::new(0),
            delivered: AtomicU64::new(0),
            dropped: AtomicU64::new(0),
        });
        subs.insert(id, Arc::clone(&queue));
        Ok(Subscription {
            queue,
            bus: Arc::downgrade(&self.inner),
        })
    }

    /// Registers a listener whose callback runs on its own thread for every
    /// matching record.
    pub fn subscribe_callback<I, S, F>(
        &self,
        filter: I,
        mut f: F,
    ) -> Result<CallbackListener, BusError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
        F: FnMut(&MetricRecord) + Send + 'static,
    {
        let sub = self.subscribe(filter)?;
        let id = sub.id();
        let handle = std::thread::Builder::new()
            .name(format!("listener-{id}"))
            .spawn(move || {
                while let Some(batch) = sub.recv_batch(Duration::from_millis(200)) {
                    batch.iter().for_each(&mut f);
                }
            })
            .expect("spawn listener thread");
        Ok(CallbackListener {
            id,
            bus: self.clone(),
            handle: Some(handle),
        })
    }

    pub fn unsubscribe(&self, id: u64) {
        remove(&self.inner, id);
    }

    pub fn subscriber_count(&self) -> usize {
        self.inner
            .subs
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .len()
    }

    pub fn publish(&self, batch: &[MetricRecord]) -> PublishReport {
        self.inner
            .published
            .fetch_add(batch.len() as u64, Ordering::Relaxed);
        let subs: Vec<_> = self
            .inner
            .subs
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .values()
            .cloned()
            .collect();
        let mut report = PublishReport {
            subscribers: subs.len(),
            ..Default::default()
        };
        for q in subs {
            let (added, dropped) = q.push(batch);
            report.enqueued += added;
            report.dropped += dropped;
        }
        if report.dropped > 0 {
            self.inner
                .dropped
                .fetch_add(report.dropped, Ordering::Relaxed);
        }
        report
    }

    /// Records accepted by `publish` since startup.
    pub fn published(&self) -> u64 {
        self.inner.published.load(Ordering::Relaxed)
    }

    /// Total records evicted from any subscriber queue (`bus.dropped`).
    pub fn dropped(&self) -> u64 {
        self.inner.dropped.load(Ordering::Relaxed)
    }

    pub fn queue_stats(&self, id: u64) -> Option<QueueStats> {
        self.inner
            .subs
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(&id)
            .map(|q| q.stats())
    }

    /// Stops accepting records. Subscribers drain what is queued and then
    /// see end-of-stream.
    pub fn close(&self) {
        self.inner.closed.store(true, Ordering::SeqCst);
        for q in self
            .inner
            .subs
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .values()
        {
            q.close();
        }
    }

    /// Waits until every queue is empty or `timeout` elapses. Returns true
    /// when all queues drained.
    pub fn flush(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        loop {
            let pending: u64 = self
                .inner
                .subs
                .read()
                .unwrap_or_else(|e| e.into_inner())
                .values()
                .map(|q| q.stats().queued)
                .sum();
            if pending == 0 {
                return true;
            }
            if Instant::now() >= deadline {
                return false;
            }
            std::thread::sleep(Duration::from_millis(5));
        }
    }
}

fn remove(inner: &BusInner, id: u64) {
    let q = inner
        .subs
        .write()
        .unwrap_or_else(|e| e.into_inner())
        .remove(&id);
    if let Some(q) = q {
        q.close();
    }
}

impl BatchSink for ListenerBus {
    fn publish(&self, batch: &[MetricRecord]) {
        ListenerBus::publish(self, batch);
    }
}

/// Queue-backed subscription. Dropping it unsubscribes.
pub struct Subscription {
    queue: Arc<SubscriberQueue>,
    bus: Weak<BusInner>,
}

impl Subscription {
    pub fn id(&self) -> u64 {
        self.queue.id
    }

    pub fn filter(&self) -> &BTreeSet<String> {
        &self.queue.filter
    }

    /// Everything queued, waiting up to `timeout` for at least one record.
    /// `None` means the subscription was closed and fully drained.
    pub fn recv_batch(&self, timeout: Duration) -> Option<Vec<MetricRecord>> {
        self.queue.pop_all(timeout)
    }

    pub fn try_recv_all(&self) -> Vec<MetricRecord> {
        self.queue.pop_all(Duration::ZERO).unwrap_or_default()
    }

    pub fn stats(&self) -> QueueStats {
        self.queue.stats()
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        if let Some(inner) = self.bus.upgrade() {
            remove(&inner, self.queue.id);
        }
    }
}

/// Handle of a callback listener; dropping it unsubscribes and joins the
/// dispatch thread.
pub struct CallbackListener {
    id: u64,
    bus: ListenerBus,
    handle: Option<JoinHandle<()>>,
}

impl CallbackListener {
    pub fn id(&self) -> u64 {
        self.id
    }
}

impl Drop for CallbackListener {
    fn drop(&mut self) {
        self.bus.unsubscribe(self.id);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
