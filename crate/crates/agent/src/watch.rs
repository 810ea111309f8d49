//! Live text view of an agent's records.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::net::Shutdown;
use std::sync::mpsc;
use std::time::{Duration, Instant};

use lisa_core::bus::{decode_record, ListenerClient};
use lisa_core::metrics::MetricRecord;
use thiserror::Error;

#[derive(Debug, Clone)]
pub struct WatchOptions {
    pub addr: String,
    pub modules: Vec<String>,
    /// Print every `REC` line instead of the table.
    pub follow: bool,
    pub refresh: Duration,
    /// Stop after this long; `None` runs until the agent goes away for good.
    pub duration: Option<Duration>,
    /// Consecutive failed connection attempts before giving up.
    pub attempts: u32,
    pub initial_backoff: Duration,
    /// Clear the terminal before each table.
    pub clear: bool,
}

impl WatchOptions {
    pub fn new(addr: impl Into<String>) -> Self {
        Self {
            addr: addr.into(),
            modules: Vec::new(),
            follow: false,
            refresh: Duration::from_secs(1),
            duration: None,
            attempts: 5,
            initial_backoff: Duration::from_millis(250),
            clear: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum WatchError {
    #[error("cannot reach {addr} after {attempts} attempts: {last}")]
    Unreachable {
        addr: String,
        attempts: u32,
        last: io::Error,
    },
    #[error("output: {0}")]
    Output(#[from] io::Error),
}

/// Latest value per (module, parameter).
#[derive(Debug, Default)]
pub struct Table {
    rows: BTreeMap<(String, String), MetricRecord>,
}

impl Table {
    pub fn update(&mut self, r: MetricRecord) {
        self.rows
            .insert((r.module_id().to_owned(), r.parameter().to_owned()), r);
    }

    pub fn get(&self, module: &str, parameter: &str) -> Option<&MetricRecord> {
        self.rows.get(&(module.to_owned(), parameter.to_owned()))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<10} {:<36} {:>20} {:<6} {}\n",
            "MODULE", "PARAMETER", "VALUE", "UNITS", "TIMESTAMP"
        );
        for ((m, p), r) in &self.rows {
            out.push_str(&format!(
                "{:<10} {:<36} {:>20} {:<6} {}\n",
                m,
                p,
                r.value().to_string(),
                r.units(),
                r.timestamp_ms()
            ));
        }
        out
    }
}

/// Runs the view, writing to `out`. Returns the final table.
pub fn watch(opts: &WatchOptions, out: &mut dyn Write) -> Result<Table, WatchError> {
    let started = Instant::now();
    let expired = || opts.duration.is_some_and(|d| started.elapsed() >= d);
    let mut table = Table::default();
    let mut failures = 0u32;
    let mut backoff = opts.initial_backoff;
    while !expired() {
        let client =
            match ListenerClient::connect(&opts.addr, &opts.modules, Duration::from_secs(2)) {
                Ok(c) => c,
                Err(e) => {
                    failures += 1;
                    if failures >= opts.attempts {
                        return Err(WatchError::Unreachable {
                            addr: opts.addr.clone(),
                            attempts: failures,
                            last: e,
                        });
                    }
                    eprintln!(
                        "watch: cannot reach {}: {e}; retrying in {} ms ({failures}/{})",
                        opts.addr,
                        backoff.as_millis(),
                        opts.attempts
                    );
                    std::thread::sleep(backoff);
                    backoff = (backoff * 2).min(Duration::from_secs(5));
                    continue;
                }
            };
        failures = 0;
        backoff = opts.initial_backoff;
        session(client, opts, &mut table, out, &expired)?;
    }
    Ok(table)
}

fn session(
    mut client: ListenerClient,
    opts: &WatchOptions,
    table: &mut Table,
    out: &mut dyn Write,
    expired: &dyn Fn() -> bool,
) -> Result<(), WatchError> {
    let stream = client.try_clone_stream()?;
    let (tx, rx) = mpsc::channel::<String>();
    let reader = std::thread::spawn(move || {
        while let Ok(Some(l)) = client.next_line() {
            if tx.send(l.to_owned()).is_err() {
                break;
            }
        }
    });
    let mut last_render = Instant::now();
    let mut dirty = false;
    let result = loop {
        if expired() {
            break Ok(());
        }
        match rx.recv_timeout(Duration::from_millis(50)) {
            Ok(line) => {
                if opts.follow {
                    writeln!(out, "{line}")?;
                }
                match decode_record(&line) {
                    Ok(r) => {
                        table.update(r);
                        dirty = true;
                    }
                    Err(e) => log::warn!("watch: {e}"),
                }
            }
            Err(mpsc::RecvTimeoutError::Timeout) => {}
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                eprintln!("watch: connection to {} closed", opts.addr);
                break Ok(());
            }
        }
        if !opts.follow && dirty && last_render.elapsed() >= opts.refresh {
            if opts.clear {
                write!(out, "\x1b[2J\x1b[H")?;
            }
            writeln!(out, "{}", table.render())?;
            out.flush()?;
            last_render = Instant::now();
            dirty = false;
        }
    };
    if !opts.follow && dirty {
        writeln!(out, "{}", table.render())?;
    }
    out.flush()?;
    let _ = stream.shutdown(Shutdown::Both);
    let _ = reader.join();
    result
}
