//! One stalled and one healthy subscriber on the same bus under a steady
//! publish rate.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use lisa_core::bus::{BusConfig, ListenerBus, ListenerClient, ListenerServer};
use lisa_core::metrics::MetricRecord;

#[derive(Debug)]
pub struct IsolationReport {
    pub published: u64,
    pub healthy_received: u64,
    pub max_lag_ms: u64,
    pub capacity: u64,
    pub stalled_enqueued: u64,
    pub stalled_dropped: u64,
    pub bus_dropped: u64,
}

impl IsolationReport {
    pub fn check(&self) -> Result<(), String> {
        if self.healthy_received != self.published {
            return Err(format!(
                "healthy got {} of {}",
                self.healthy_received, self.published
            ));
        }
        if self.max_lag_ms >= 100 {
            return Err(format!("healthy lag reached {} ms", self.max_lag_ms));
        }
        let overflow = self.stalled_enqueued.saturating_sub(self.capacity);
        if self.stalled_dropped != overflow || self.bus_dropped != overflow {
            return Err(format!(
                "overflow {overflow}, stalled queue dropped {}, bus.dropped {}",
                self.stalled_dropped, self.bus_dropped
            ));
        }
        Ok(())
    }
}

fn epoch_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .expect("clock after 1970")
        .as_millis() as u64
}

/// Publishes `rate` records per second for `duration` in 10 ms batches.
/// The healthy subscriber reads over TCP through the listener port.
pub fn run(rate: u64, duration: Duration, capacity: usize) -> Result<IsolationReport, String> {
    let bus = ListenerBus::new(BusConfig {
        queue_capacity: capacity,
        max_subscribers: 8,
    });
    let mut server =
        ListenerServer::bind("127.0.0.1:0", bus.clone(), "iso").map_err(|e| e.to_string())?;
    let stalled = bus
        .subscribe(Vec::<String>::new())
        .map_err(|e| e.to_string())?;
    let mut client = ListenerClient::connect(server.local_addr(), &[], Duration::from_secs(2))
        .map_err(|e| e.to_string())?;
    let t = Instant::now();
    while bus.subscriber_count() < 2 {
        if t.elapsed() > Duration::from_secs(2) {
            return Err("healthy subscriber never registered".into());
        }
        std::thread::sleep(Duration::from_millis(1));
    }

    let received = Arc::new(AtomicU64::new(0));
    let max_lag = Arc::new(AtomicU64::new(0));
    let (rc, ml) = (Arc::clone(&received), Arc::clone(&max_lag));
    let reader = std::thread::spawn(move || -> Result<(), String> {
        while let Some(r) = client.next_record().map_err(|e| e.to_string())? {
            let r = r.map_err(|e| e.to_string())?;
            let lag = epoch_ms().saturating_sub(r.timestamp_ms());
            ml.fetch_max(lag, Ordering::Relaxed);
            rc.fetch_add(1, Ordering::Relaxed);
        }
        Ok(())
    });

    let per_batch = (rate / 100).max(1);
    let start = Instant::now();
    let mut published = 0u64;
    let mut k = 0u32;
    while start.elapsed() < duration {
        let ts = epoch_ms();
        let batch: Vec<MetricRecord> = (0..per_batch)
            .map(|i| {
                MetricRecord::new(
                    "load",
                    format!("p{}", i % 16),
                    (published + i) as i64,
                    "",
                    ts,
                )
                .expect("valid record")
            })
            .collect();
        bus.publish(&batch);
        published += per_batch;
        k += 1;
        let next = start + Duration::from_millis(10) * k;
        if let Some(d) = next.checked_duration_since(Instant::now()) {
            std::thread::sleep(d);
        }
    }

    let t = Instant::now();
    while received.load(Ordering::Relaxed) < published && t.elapsed() < Duration::from_secs(5) {
        std::thread::sleep(Duration::from_millis(5));
    }
    let s = stalled.stats();
    let report = IsolationReport {
        published,
        healthy_received: received.load(Ordering::Relaxed),
        max_lag_ms: max_lag.load(Ordering::Relaxed),
        capacity: capacity as u64,
        stalled_enqueued: s.enqueued,
        stalled_dropped: s.dropped,
        bus_dropped: bus.dropped(),
    };
    bus.close();
    server.shutdown(Duration::from_millis(500));
    reader.join().map_err(|_| "reader panicked".to_string())??;
    Ok(report)
}
