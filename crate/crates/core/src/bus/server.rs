//! TCP front end of the listener bus.
//!
//! ```text
//! client: SUB [module_id ...]
//! server: HELLO lisa-agent 1 <agent_id>
//! server: REC ...            (streamed until either side goes away)
//! client: PING         -> PONG
//! client: <other>      -> ERR unknown-command
//! ```

use std::collections::HashMap;
use std::io::{self, BufRead, BufReader, ErrorKind, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::{encode_record, BusError, ListenerBus, Subscription};

pub const PROTOCOL_VERSION: u32 = 1;

struct Shared {
    bus: ListenerBus,
    agent_id: String,
    stopping: AtomicBool,
    active: AtomicUsize,
    conns: Mutex<HashMap<u64, TcpStream>>,
    next_conn: AtomicU64,
}

pub struct ListenerServer {
    local_addr: SocketAddr,
    shared: Arc<Shared>,
    accept: Option<JoinHandle<()>>,
}

impl ListenerServer {
    /// Binds the listener port and starts accepting subscribers.
    pub fn bind(
        addr: impl ToSocketAddrs,
        bus: ListenerBus,
        agent_id: impl Into<String>,
    ) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let local_addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            bus,
            agent_id: agent_id.into(),
            stopping: AtomicBool::new(false),
            active: AtomicUsize::new(0),
            conns: Mutex::new(HashMap::new()),
            next_conn: AtomicU64::new(0),
        });
        let s = Arc::clone(&shared);
        let accept = std::thread::Builder::new()
            .name("listener-accept".into())
            .spawn(move || accept_loop(listener, s))?;
        Ok(Self {
            local_addr,
            shared,
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn connections(&self) -> usize {
        self.shared.active.load(Ordering::SeqCst)
    }

    /// Stops accepting, lets connections drain their queues for up to
    /// `grace`, then closes whatever is left. The bus should be closed
    /// first so writers see end-of-stream.
    pub fn shutdown(&mut self, grace: Duration) {
        self.shared.stopping.store(true, Ordering::SeqCst);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
        let deadline = Instant::now() + grace;
        while self.shared.active.load(Ordering::SeqCst) > 0 && Instant::now() < deadline {
            std::thread::sleep(Duration::from_millis(5));
        }
        for (_, c) in self.shared.conns.lock().unwrap().drain() {
            let _ = c.shutdown(Shutdown::Both);
        }
    }
}

impl Drop for ListenerServer {
    fn drop(&mut self) {
        if self.accept.is_some() {
            self.shutdown(Duration::ZERO);
        }
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    while !shared.stopping.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let _ = stream.set_nonblocking(false);
                let _ = stream.set_nodelay(true);
                let id = shared.next_conn.fetch_add(1, Ordering::Relaxed);
                if let Ok(c) = stream.try_clone() {
                    shared.conns.lock().unwrap().insert(id, c);
                }
                shared.active.fetch_add(1, Ordering::SeqCst);
                let s = Arc::clone(&shared);
                let spawned = std::thread::Builder::new()
                    .name(format!("listener-conn-{id}"))
                    .spawn(move || {
                        if let Err(e) = serve(stream, &s) {
                            log::debug!("subscriber {peer}: {e}");
                        }
                        s.conns.lock().unwrap().remove(&id);
                        s.active.fetch_sub(1, Ordering::SeqCst);
                    });
                if spawned.is_err() {
                    shared.active.fetch_sub(1, Ordering::SeqCst);
                }
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                std::thread::sleep(Duration::from_millis(10));
            }
            Err(e) => {
                log::warn!("listener accept: {e}");
                std::thread::sleep(Duration::from_millis(50));
            }
        }
    }
}

type SharedWriter = Arc<Mutex<TcpStream>>;

fn send_line(w: &SharedWriter, line: &str) -> io::Result<()> {
    let mut s = w.lock().unwrap();
    s.write_all(line.as_bytes())?;
    s.write_all(b"\n")
}

fn serve(stream: TcpStream, shared: &Arc<Shared>) -> io::Result<()> {
    let writer: SharedWriter = Arc::new(Mutex::new(stream.try_clone()?));
    let mut reader = BufReader::new(stream);
    let mut streamer: Option<JoinHandle<()>> = None;
    let eof = Arc::new(AtomicBool::new(false));
    let result = command_loop(&mut reader, &writer, shared, &mut streamer, &eof);
    // end of the command stream ends the session once the queue is flushed
    eof.store(true, Ordering::SeqCst);
    if let Some(h) = streamer {
        let _ = h.join();
    }
    let _ = writer.lock().unwrap().shutdown(Shutdown::Both);
    result
}

fn command_loop(
    reader: &mut BufReader<TcpStream>,
    writer: &SharedWriter,
    shared: &Shared,
    streamer: &mut Option<JoinHandle<()>>,
    eof: &Arc<AtomicBool>,
) -> io::Result<()> {
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
        let mut words = line.split_whitespace();
        match words.next() {
            None => continue,
            Some("PING") => send_line(writer, "PONG")?,
            Some("SUB") if streamer.is_some() => send_line(writer, "ERR already-subscribed")?,
            Some("SUB") => match shared.bus.subscribe(words) {
                Ok(sub) => {
                    send_line(
                        writer,
                        &format!("HELLO lisa-agent {PROTOCOL_VERSION} {}", shared.agent_id),
                    )?;
                    let w = Arc::clone(writer);
                    let eof = Arc::clone(eof);
                    *streamer = Some(
                        std::thread::Builder::new()
                            .name(format!("listener-stream-{}", sub.id()))
                            .spawn(move || stream_records(sub, w, &eof))?,
                    );
                }
                Err(BusError::TooManySubscribers(_)) => {
                    send_line(writer, "ERR too-many-subscribers")?;
                    return Ok(());
                }
            },
            Some(_) => send_line(writer, "ERR unknown-command")?,
        }
    }
}

fn stream_records(sub: Subscription, writer: SharedWriter, eof: &AtomicBool) {
    let mut buf = String::new();
    while let Some(batch) = sub.recv_batch(Duration::from_millis(100)) {
        if batch.is_empty() {
            if eof.load(Ordering::SeqCst) {
                break;
            }
            continue;
        }
        buf.clear();
        for r in &batch {
            buf.push_str(&encode_record(r));
            buf.push('\n');
        }
        let mut s = writer.lock().unwrap();
        if s.write_all(buf.as_bytes()).is_err() {
            break;
        }
    }
    let _ = writer.lock().unwrap().shutdown(Shutdown::Both);
}
