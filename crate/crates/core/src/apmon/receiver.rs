use std::io::{self, ErrorKind};
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::time::Duration;

use super::datagram::{Datagram, MAX_DATAGRAM_BYTES};
use super::xdr::DecodeError;

/// UDP endpoint that decodes incoming reporting datagrams.
pub struct AggregatorReceiver {
    socket: UdpSocket,
    buf: Vec<u8>,
}

impl AggregatorReceiver {
    pub fn bind(addr: impl ToSocketAddrs) -> io::Result<Self> {
        Ok(Self {
            socket: UdpSocket::bind(addr)?,
            // one extra byte so oversized datagrams are detected
            buf: vec![0; MAX_DATAGRAM_BYTES + 1],
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.socket
            .local_addr()
            .expect("bound socket has an address")
    }

    /// Waits up to `timeout` for one datagram. `None` on timeout.
    pub fn recv(&self, timeout: Duration) -> Option<Result<Datagram, DecodeError>> {
        self.recv_from(timeout).map(|(r, _)| r)
    }

    pub fn recv_from(
        &self,
        timeout: Duration,
    ) -> Option<(Result<Datagram, DecodeError>, SocketAddr)> {
        let mut buf = self.buf.clone();
        self.socket
            .set_read_timeout(Some(timeout.max(Duration::from_millis(1))))
            .ok()?;
        match self.socket.recv_from(&mut buf) {
            Ok((n, from)) => Some((Datagram::decode(&buf[..n]), from)),
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => None,
            Err(e) => {
                log::warn!("aggregator receive: {e}");
                None
            }
        }
    }

    /// Raw bytes of the next datagram, for tests that decode independently.
    pub fn recv_raw(&self, timeout: Duration) -> Option<Vec<u8>> {
        let mut buf = self.buf.clone();
        self.socket.set_read_timeout(Some(timeout)).ok()?;
        self.socket.recv(&mut buf).ok().map(|n| buf[..n].to_vec())
    }
}
