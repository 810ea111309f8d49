#![allow(dead_code)]

use std::collections::HashMap;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use lisa_agent::control::send_command;
use lisa_agent::watch::{watch, WatchOptions};
use lisa_agent::{Agent, AgentConfig};
use lisa_core::apmon::{AggregatorEndpoint, AggregatorReceiver, Datagram, XdrValue};
use lisa_core::bus::decode_record;
use lisa_core::metrics::{MetricRecord, MetricValue};

pub fn station_index() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/station/index")
}

pub fn epoch_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .expect("clock after 1970")
        .as_millis() as u64
}

/// Loopback-only agent replaying the station fixture.
pub fn fixture_config(interval_ms: u64, aggregator: Option<SocketAddr>) -> AgentConfig {
    let mut c = AgentConfig {
        agent_id: "test-station".into(),
        node: "test-station".into(),
        listener_address: [127, 0, 0, 1].into(),
        listener_port: 0,
        control_port: 0,
        source: "fixture".into(),
        fixture_index: Some(station_index()),
        default_interval_ms: interval_ms,
        ..AgentConfig::default()
    };
    if let Some(a) = aggregator {
        c.aggregators = vec![AggregatorEndpoint::new(a.ip().to_string(), a.port(), "").unwrap()];
    }
    c.validate().expect("valid test config");
    c
}

/// Writer that timestamps each complete line.
#[derive(Clone, Default)]
pub struct TimedLines(Arc<Mutex<Pending>>);

/// Partial line bytes and the completed lines.
type Pending = (Vec<u8>, Vec<(Instant, String)>);

impl TimedLines {
    pub fn lines(&self) -> Vec<(Instant, String)> {
        self.0.lock().unwrap().1.clone()
    }
}

impl Write for TimedLines {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let mut g = self.0.lock().unwrap();
        g.0.extend_from_slice(buf);
        while let Some(pos) = g.0.iter().position(|&b| b == b'\n') {
            let line: Vec<u8> = g.0.drain(..=pos).collect();
            let text = String::from_utf8_lossy(&line[..pos]).into_owned();
            g.1.push((Instant::now(), text));
        }
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

pub fn same_value(x: &XdrValue, m: &MetricValue) -> bool {
    match (x, m) {
        (XdrValue::Real64(a), MetricValue::Real(b)) => a.to_bits() == b.to_bits(),
        (XdrValue::Int32(a), MetricValue::Integer(b)) => i64::from(*a) == *b,
        (XdrValue::Real64(a), MetricValue::Integer(b)) => *a == *b as f64,
        (XdrValue::String(a), MetricValue::Text(b)) => a == b,
        _ => false,
    }
}

#[derive(Debug)]
pub struct LoopbackReport {
    pub first_load_after: Duration,
    pub interval: Duration,
    pub datagrams: usize,
    pub matching_datagrams: usize,
    pub load1: Option<MetricRecord>,
}

impl LoopbackReport {
    pub fn check(&self) -> Result<(), String> {
        if self.load1.is_none() {
            return Err("watch table has no host load.1".into());
        }
        if self.first_load_after > self.interval * 2 {
            return Err(format!(
                "load.1 first shown after {:?}, interval {:?}",
                self.first_load_after, self.interval
            ));
        }
        if self.matching_datagrams == 0 {
            return Err(format!(
                "none of {} datagrams matched the watch values",
                self.datagrams
            ));
        }
        Ok(())
    }
}

/// Agent + mock aggregator + watch client. A datagram matches when it
/// carries `host.load.1` and every one of its host parameters equals the
/// watched record with the same name from one collection pass.
pub fn loopback(interval_ms: u64) -> Result<LoopbackReport, String> {
    let rx = AggregatorReceiver::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    let cfg = fixture_config(interval_ms, Some(rx.local_addr()));
    let started = Instant::now();
    let agent = Agent::start(&cfg).map_err(|e| e.to_string())?;

    let stop = Arc::new(AtomicBool::new(false));
    let st = Arc::clone(&stop);
    let aggregator = std::thread::spawn(move || {
        let mut got: Vec<Datagram> = Vec::new();
        while !st.load(Ordering::SeqCst) {
            if let Some(Ok(d)) = rx.recv(Duration::from_millis(50)) {
                got.push(d);
            }
        }
        got
    });

    let interval = Duration::from_millis(interval_ms);
    let mut opts = WatchOptions::new(agent.listener_addr().to_string());
    opts.follow = true;
    opts.duration = Some(interval * 3);
    let out = TimedLines::default();
    let table = watch(&opts, &mut out.clone()).map_err(|e| e.to_string())?;
    // let the last datagram of the window arrive
    std::thread::sleep(Duration::from_millis(200));
    stop.store(true, Ordering::SeqCst);
    let datagrams = aggregator
        .join()
        .map_err(|_| "aggregator thread panicked")?;
    agent.shutdown();

    let lines = out.lines();
    let first_load_after = lines
        .iter()
        .find(|(_, l)| l.contains(" host load.1 "))
        .map(|(t, _)| t.duration_since(started))
        .unwrap_or(Duration::MAX);
    // host records grouped by collection timestamp
    let mut passes: HashMap<u64, HashMap<String, MetricValue>> = HashMap::new();
    for (_, l) in &lines {
        if let Ok(r) = decode_record(l) {
            if r.module_id() == "host" {
                passes
                    .entry(r.timestamp_ms())
                    .or_default()
                    .insert(r.parameter().to_owned(), r.value().clone());
            }
        }
    }
    let matching = datagrams
        .iter()
        .filter(|d| {
            let host: Vec<_> = d
                .params
                .iter()
                .filter_map(|p| p.name.strip_prefix("host.").map(|n| (n, &p.value)))
                .collect();
            host.iter().any(|(n, _)| *n == "load.1")
                && passes.values().any(|pass| {
                    host.iter()
                        .all(|(n, v)| pass.get(*n).is_some_and(|m| same_value(v, m)))
                })
        })
        .count();
    Ok(LoopbackReport {
        first_load_after,
        interval,
        datagrams: datagrams.len(),
        matching_datagrams: matching,
        load1: table.get("host", "load.1").cloned(),
    })
}

#[derive(Debug)]
pub struct GapReport {
    pub stop_reply: Duration,
    pub start_reply: Duration,
    /// Host records stamped strictly between the STOP reply and the START request.
    pub inside_gap: usize,
    pub before_stop: usize,
    pub after_start: usize,
    /// Delay from the START request to the first host record.
    pub resume_delay_ms: u64,
    /// Delay from the last host record before STOP to the STOP request.
    pub last_before_stop_ms: u64,
    pub interval_ms: u64,
    pub replies: (String, String),
}

impl GapReport {
    pub fn check(&self) -> Result<(), String> {
        let limit = Duration::from_millis(500);
        if self.replies != ("OK".into(), "OK".into()) {
            return Err(format!("replies {:?}", self.replies));
        }
        if self.stop_reply >= limit || self.start_reply >= limit {
            return Err(format!(
                "control replies took {:?} and {:?}",
                self.stop_reply, self.start_reply
            ));
        }
        if self.inside_gap != 0 {
            return Err(format!(
                "{} host records inside the stopped span",
                self.inside_gap
            ));
        }
        if self.before_stop == 0 || self.after_start == 0 {
            return Err(format!(
                "{} records before stop, {} after start",
                self.before_stop, self.after_start
            ));
        }
        // the gap ends with the first collection after START and begins
        // no earlier than one interval before STOP
        let slack = self.interval_ms + 250;
        if self.resume_delay_ms > slack || self.last_before_stop_ms > slack {
            return Err(format!(
                "gap edges {} ms / {} ms from the commands",
                self.last_before_stop_ms, self.resume_delay_ms
            ));
        }
        Ok(())
    }
}

/// STOP then START the host module while a publisher floods the bus and a
/// watch client consumes it.
pub fn control_gap(interval_ms: u64, stopped_for: Duration) -> Result<GapReport, String> {
    let mut cfg = fixture_config(interval_ms, None);
    for m in cfg.modules.values_mut() {
        m.interval_ms = Some(interval_ms);
    }
    let agent = Agent::start(&cfg).map_err(|e| e.to_string())?;
    let ctl = agent.control_addr().to_string();
    let host = agent.bus().subscribe(["host"]).map_err(|e| e.to_string())?;

    let stop = Arc::new(AtomicBool::new(false));
    let bus = agent.bus().clone();
    let st = Arc::clone(&stop);
    let flood = std::thread::spawn(move || {
        let mut n = 0i64;
        while !st.load(Ordering::SeqCst) {
            let ts = epoch_ms();
            let batch: Vec<_> = (0..50)
                .map(|i| MetricRecord::new("flood", format!("p{i}"), n + i, "", ts).unwrap())
                .collect();
            bus.publish(&batch);
            n += 50;
            std::thread::sleep(Duration::from_millis(5));
        }
    });
    let mut opts = WatchOptions::new(agent.listener_addr().to_string());
    opts.follow = true;
    opts.duration = Some(stopped_for * 2 + stopped_for / 4);
    opts.attempts = 1;
    let consumer = std::thread::spawn(move || watch(&opts, &mut io::sink()).map(|t| t.len()));

    std::thread::sleep(stopped_for);
    let stop_sent = epoch_ms();
    let t = Instant::now();
    let r1 = send_command(&ctl, "STOP host", Duration::from_secs(2)).map_err(|e| e.to_string())?;
    let stop_reply = t.elapsed();
    let stop_acked = epoch_ms();
    std::thread::sleep(stopped_for);
    let start_sent = epoch_ms();
    let t = Instant::now();
    let r2 = send_command(&ctl, "START host", Duration::from_secs(2)).map_err(|e| e.to_string())?;
    let start_reply = t.elapsed();
    std::thread::sleep(stopped_for / 2);

    stop.store(true, Ordering::SeqCst);
    flood.join().map_err(|_| "flood thread panicked")?;
    let records = host.try_recv_all();
    agent.shutdown();
    consumer
        .join()
        .map_err(|_| "consumer panicked")?
        .map_err(|e| e.to_string())?;

    let ts: Vec<u64> = records.iter().map(MetricRecord::timestamp_ms).collect();
    let before: Vec<u64> = ts.iter().copied().filter(|&t| t <= stop_acked).collect();
    let after: Vec<u64> = ts.iter().copied().filter(|&t| t >= start_sent).collect();
    Ok(GapReport {
        stop_reply,
        start_reply,
        inside_gap: ts
            .iter()
            .filter(|&&t| t > stop_acked && t < start_sent)
            .count(),
        before_stop: before.len(),
        after_start: after.len(),
        resume_delay_ms: after.iter().min().map_or(u64::MAX, |t| t - start_sent),
        last_before_stop_ms: before
            .iter()
            .max()
            .map_or(u64::MAX, |t| stop_sent.saturating_sub(*t)),
        interval_ms,
        replies: (r1.join(" "), r2.join(" ")),
    })
}
