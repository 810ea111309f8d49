//! Control port: one command line in, one reply block out, each block
//! terminated by a lone `.` line.

use std::collections::HashMap;
use std::io::{self, BufRead, BufReader, ErrorKind, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use lisa_core::metrics::{SchedulerError, SharedScheduler};

use crate::stats::AgentCounters;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ControlCommand {
    List,
    Start(String),
    Stop(String),
    Interval(String, u64),
    Status,
}

impl ControlCommand {
    /// Parses one command line. `None` for anything outside the grammar.
    pub fn parse(line: &str) -> Option<Self> {
        let w: Vec<&str> = line.split_whitespace().collect();
        Some(match w[..] {
            ["LIST"] => ControlCommand::List,
            ["STATUS"] => ControlCommand::Status,
            ["START", m] => ControlCommand::Start(m.to_owned()),
            ["STOP", m] => ControlCommand::Stop(m.to_owned()),
            ["INTERVAL", m, ms] => ControlCommand::Interval(m.to_owned(), ms.parse().ok()?),
            _ => return None,
        })
    }
}

/// Applies a command and returns the reply lines, without the terminator.
pub fn execute(line: &str, scheduler: &SharedScheduler, counters: &AgentCounters) -> Vec<String> {
    let Some(cmd) = ControlCommand::parse(line) else {
        return vec!["ERR bad-command".into()];
    };
    let result = match cmd {
        ControlCommand::List => {
            return scheduler
                .lock()
                .list_modules()
                .into_iter()
                .map(|m| format!("{} {} {}", m.id, m.state, m.interval_ms))
                .collect();
        }
        ControlCommand::Status => return status(scheduler, counters),
        ControlCommand::Start(m) => scheduler.lock().start_module(&m),
        ControlCommand::Stop(m) => scheduler.lock().stop_module(&m),
        ControlCommand::Interval(m, ms) => scheduler.lock().set_interval(&m, ms),
    };
    vec![match result {
        Ok(()) => "OK".into(),
        Err(SchedulerError::UnknownModule(m)) => format!("ERR unknown-module {m}"),
        Err(_) => "ERR bad-command".into(),
    }]
}

fn status(scheduler: &SharedScheduler, c: &AgentCounters) -> Vec<String> {
    let (running, total, errors) = {
        let s = scheduler.lock();
        let mods = s.list_modules();
        let running = mods
            .iter()
            .filter(|m| m.state.to_string() == "Running")
            .count();
        (running, mods.len(), s.collect_errors())
    };
    let mut out = vec![
        format!("uptime_ms {}", c.started.elapsed().as_millis()),
        format!("modules_running {running}"),
        format!("modules_total {total}"),
        format!("batches {}", c.scheduler.batches.load(Ordering::Relaxed)),
        format!("records {}", c.scheduler.records.load(Ordering::Relaxed)),
        format!("collect_errors {errors}"),
        format!("bus_published {}", c.bus.published()),
        format!("bus_dropped {}", c.bus.dropped()),
        format!("subscribers {}", c.bus.subscriber_count()),
    ];
    if let Some(a) = &c.apmon {
        out.push(format!("apmon_datagrams {}", a.datagrams_sent()));
        out.push(format!("apmon_send_errors {}", a.send_errors()));
    }
    out
}

struct Shared {
    scheduler: SharedScheduler,
    counters: AgentCounters,
    stopping: AtomicBool,
    busy: AtomicUsize,
    conns: Mutex<HashMap<u64, TcpStream>>,
    next: AtomicU64,
}

pub struct ControlServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    accept: Option<JoinHandle<()>>,
}

impl ControlServer {
    pub fn bind(
        addr: impl ToSocketAddrs,
        scheduler: SharedScheduler,
        counters: AgentCounters,
    ) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            scheduler,
            counters,
            stopping: AtomicBool::new(false),
            busy: AtomicUsize::new(0),
            conns: Mutex::new(HashMap::new()),
            next: AtomicU64::new(0),
        });
        let s = Arc::clone(&shared);
        let accept = std::thread::Builder::new()
            .name("control-accept".into())
            .spawn(move || accept_loop(listener, s))?;
        Ok(Self {
            addr,
            shared,
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting, waits up to `grace` for commands being executed to
    /// finish replying, then closes every connection.
    pub fn shutdown(&mut self, grace: Duration) {
        self.shared.stopping.store(true, Ordering::SeqCst);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
        let t = Instant::now();
        while self.shared.busy.load(Ordering::SeqCst) > 0 && t.elapsed() < grace {
            std::thread::sleep(Duration::from_millis(2));
        }
        for (_, s) in self
            .shared
            .conns
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .drain()
        {
            let _ = s.shutdown(Shutdown::Both);
        }
    }
}

impl Drop for ControlServer {
    fn drop(&mut self) {
        if self.accept.is_some() {
            self.shutdown(Duration::from_millis(200));
        }
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    while !shared.stopping.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let _ = stream.set_nonblocking(false);
                let id = shared.next.fetch_add(1, Ordering::SeqCst);
                if let Ok(c) = stream.try_clone() {
                    shared
                        .conns
                        .lock()
                        .unwrap_or_else(|e| e.into_inner())
                        .insert(id, c);
                }
                let s = Arc::clone(&shared);
                let spawned = std::thread::Builder::new()
                    .name("control-conn".into())
                    .spawn(move || {
                        if let Err(e) = serve(stream, &s) {
                            log::debug!("control session {peer}: {e}");
                        }
                        s.conns
                            .lock()
                            .unwrap_or_else(|e| e.into_inner())
                            .remove(&id);
                    });
                if let Err(e) = spawned {
                    log::warn!("control: cannot spawn session: {e}");
                }
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                std::thread::sleep(Duration::from_millis(10))
            }
            Err(e) => {
                log::warn!("control accept: {e}");
                std::thread::sleep(Duration::from_millis(10));
            }
        }
    }
}

fn serve(stream: TcpStream, shared: &Shared) -> io::Result<()> {
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
        shared.busy.fetch_add(1, Ordering::SeqCst);
        let mut reply = String::new();
        for l in execute(line.trim_end(), &shared.scheduler, &shared.counters) {
            reply.push_str(&l);
            reply.push('\n');
        }
        reply.push_str(".\n");
        let r = writer
            .write_all(reply.as_bytes())
            .and_then(|_| writer.flush());
        shared.busy.fetch_sub(1, Ordering::SeqCst);
        r?;
        if shared.stopping.load(Ordering::SeqCst) {
            return Ok(());
        }
    }
}

/// Client side: sends one command and returns the reply lines.
pub fn send_command(addr: &str, command: &str, timeout: Duration) -> io::Result<Vec<String>> {
    let sa = addr
        .to_socket_addrs()?
        .next()
        .ok_or_else(|| io::Error::new(ErrorKind::NotFound, format!("cannot resolve {addr}")))?;
    let mut s = TcpStream::connect_timeout(&sa, timeout)?;
    s.set_read_timeout(Some(timeout))?;
    s.write_all(format!("{}\n", command.trim()).as_bytes())?;
    read_reply(&mut BufReader::new(s))
}

/// Reads one `.`-terminated reply block.
pub fn read_reply(r: &mut impl BufRead) -> io::Result<Vec<String>> {
    let mut out = Vec::new();
    loop {
        let mut l = String::new();
        if r.read_line(&mut l)? == 0 {
            return Err(io::Error::new(
                ErrorKind::UnexpectedEof,
                "reply not terminated",
            ));
        }
        let l = l.trim_end_matches(['\n', '\r']);
        if l == "." {
            return Ok(out);
        }
        out.push(l.to_owned());
    }
}
