use std::io::{self, BufRead, BufReader, ErrorKind, Write};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::time::Duration;

use super::wire::{decode_record, ParseError};
use crate::metrics::MetricRecord;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hello {
    pub version: u32,
    pub agent_id: String,
}

/// Remote subscriber speaking the `SUB`/`REC` line protocol.
pub struct ListenerClient {
    reader: BufReader<TcpStream>,
    hello: Hello,
    buf: Vec<u8>,
    line: String,
}

fn protocol_error(msg: impl Into<String>) -> io::Error {
    io::Error::new(ErrorKind::InvalidData, msg.into())
}

impl ListenerClient {
    /// Connects, sends `SUB` with the given module filter and waits for the
    /// server greeting.
    pub fn connect<A: ToSocketAddrs>(
        addr: A,
        modules: &[String],
        timeout: Duration,
    ) -> io::Result<Self> {
        let addrs: Vec<SocketAddr> = addr.to_socket_addrs()?.collect();
        let mut last = io::Error::new(ErrorKind::NotFound, "address resolved to nothing");
        for a in addrs {
            match TcpStream::connect_timeout(&a, timeout) {
                Ok(s) => return Self::handshake(s, modules, timeout),
                Err(e) => last = e,
            }
        }
        Err(last)
    }

    fn handshake(mut stream: TcpStream, modules: &[String], timeout: Duration) -> io::Result<Self> {
        stream.set_nodelay(true)?;
        let mut cmd = String::from("SUB");
        for m in modules {
            cmd.push(' ');
            cmd.push_str(m);
        }
        cmd.push('\n');
        stream.write_all(cmd.as_bytes())?;
        stream.set_read_timeout(Some(timeout))?;
        let mut reader = BufReader::new(stream);
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Err(protocol_error("connection closed before greeting"));
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        let hello = match words[..] {
            ["HELLO", "lisa-agent", v, id] => Hello {
                version: v
                    .parse()
                    .map_err(|_| protocol_error(format!("bad greeting {line:?}")))?,
                agent_id: id.to_owned(),
            },
            _ => {
                return Err(protocol_error(format!(
                    "unexpected greeting {:?}",
                    line.trim_end()
                )))
            }
        };
        reader.get_ref().set_read_timeout(None)?;
        Ok(Self {
            reader,
            hello,
            buf: Vec::new(),
            line: String::new(),
        })
    }

    pub fn hello(&self) -> &Hello {
        &self.hello
    }

    pub fn set_read_timeout(&self, t: Option<Duration>) -> io::Result<()> {
        self.reader.get_ref().set_read_timeout(t)
    }

    /// A second handle on the socket, e.g. to shut it down from another thread.
    pub fn try_clone_stream(&self) -> io::Result<TcpStream> {
        self.reader.get_ref().try_clone()
    }

    /// Next raw line without the newline; `None` at end of stream. A read
    /// timeout leaves a partly received line buffered for the next call.
    pub fn next_line(&mut self) -> io::Result<Option<&str>> {
        let n = self.reader.read_until(b'\n', &mut self.buf)?;
        if n == 0 && self.buf.is_empty() {
            return Ok(None);
        }
        let bytes = std::mem::take(&mut self.buf);
        self.line = String::from_utf8(bytes).map_err(|_| protocol_error("line is not UTF-8"))?;
        Ok(Some(self.line.trim_end_matches(['\n', '\r'])))
    }

    /// Next decoded record; `None` at end of stream.
    pub fn next_record(&mut self) -> io::Result<Option<Result<MetricRecord, ParseError>>> {
        Ok(self.next_line()?.map(decode_record))
    }
}
