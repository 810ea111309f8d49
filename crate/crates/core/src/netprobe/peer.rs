use std::io::{self, BufRead, BufReader, ErrorKind, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

/// Longest transfer a peer agrees to.
pub const MAX_PEER_DURATION_S: f64 = 600.0;

const IDLE_TIMEOUT: Duration = Duration::from_secs(30);

/// The cooperating endpoint for RTT and bandwidth probes.
pub struct ProbePeer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

enum Cmd {
    Echo,
    Up(f64),
    Down(f64),
}

fn parse_command(line: &str) -> Option<Cmd> {
    let mut it = line.split(' ');
    let cmd = match (it.next()?, it.next(), it.next()) {
        ("ECHO", None, _) => return Some(Cmd::Echo),
        ("BW", Some(dir), Some(d)) => {
            let d: f64 = d.parse().ok()?;
            if !(d > 0.0 && d <= MAX_PEER_DURATION_S) {
                return None;
            }
            match dir {
                "UP" => Cmd::Up(d),
                "DOWN" => Cmd::Down(d),
                _ => return None,
            }
        }
        _ => return None,
    };
    it.next().is_none().then_some(cmd)
}

impl ProbePeer {
    pub fn bind(addr: impl ToSocketAddrs, block_bytes: usize) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let s = Arc::clone(&stop);
        let block = block_bytes.max(1);
        let accept = std::thread::Builder::new()
            .name("probe-peer".into())
            .spawn(move || {
                for conn in listener.incoming() {
                    if s.load(Ordering::SeqCst) {
                        break;
                    }
                    match conn {
                        Ok(c) => {
                            let _ = std::thread::Builder::new()
                                .name("probe-peer-conn".into())
                                .spawn(move || {
                                    if let Err(e) = serve(c, block) {
                                        log::debug!("probe peer session: {e}");
                                    }
                                });
                        }
                        Err(e) => log::warn!("probe peer accept: {e}"),
                    }
                }
            })?;
        Ok(Self {
            addr,
            stop,
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting. Sessions in progress run to completion.
    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    fn stop_accepting(&mut self) {
        if let Some(h) = self.accept.take() {
            self.stop.store(true, Ordering::SeqCst);
            // wake the blocking accept
            let _ = TcpStream::connect_timeout(&self.addr, Duration::from_secs(1));
            let _ = h.join();
        }
    }

    /// Blocks serving forever.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ProbePeer {
    fn drop(&mut self) {
        self.stop_accepting();
    }
}

fn serve(stream: TcpStream, block: usize) -> io::Result<()> {
    stream.set_read_timeout(Some(IDLE_TIMEOUT))?;
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
        match parse_command(line.trim_end_matches(['\n', '\r'])) {
            Some(Cmd::Echo) => writer.write_all(b"ECHO\n")?,
            Some(Cmd::Up(d)) => {
                reader
                    .get_ref()
                    .set_read_timeout(Some(Duration::from_secs_f64(d) + IDLE_TIMEOUT))?;
                let mut total: u64 = 0;
                let mut buf = vec![0u8; 64 * 1024];
                loop {
                    match reader.read(&mut buf) {
                        Ok(0) => break,
                        Ok(n) => total += n as u64,
                        Err(e) if e.kind() == ErrorKind::Interrupted => {}
                        Err(e) => return Err(e),
                    }
                }
                writer.write_all(format!("ACK {total}\n").as_bytes())?;
                return Ok(());
            }
            Some(Cmd::Down(d)) => {
                let zeros = vec![0u8; block];
                let run_for = Duration::from_secs_f64(d);
                let start = Instant::now();
                while start.elapsed() < run_for {
                    writer.write_all(&zeros)?;
                }
                let _ = writer.shutdown(Shutdown::Write);
                return Ok(());
            }
            None => {
                writer.write_all(b"ERR\n")?;
                let _ = writer.shutdown(Shutdown::Both);
                return Ok(());
            }
        }
    }
}
