//! Length-prefixed framing over byte streams.
//!
//! A frame is a 4-byte big-endian payload length followed by the payload.
//! The same [`Endpoint`] drives TCP sockets, the in-process [`duplex`]
//! channel used by tests, and the one-byte-at-a-time [`Fragmenting`] shim.

use std::io::{self, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use thiserror::Error;

pub const DEFAULT_MAX_FRAME: usize = 64 << 20;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_PORT: u16 = 7341;
/// Environment variable overriding the frame size cap (bytes).
pub const MAX_FRAME_ENV: &str = "HESEARCH_MAX_FRAME";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("connection closed by peer")]
    Closed,
    #[error("stream ended mid-frame ({got} of {expected} bytes)")]
    Truncated { expected: usize, got: usize },
    #[error("frame of {len} bytes exceeds the {max}-byte limit")]
    Oversize { len: u64, max: usize },
    #[error("timed out waiting for data")]
    Timeout,
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<io::Error> for TransportError {
    fn from(e: io::Error) -> Self {
        match e.kind() {
            io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => TransportError::Timeout,
            io::ErrorKind::BrokenPipe | io::ErrorKind::ConnectionReset | io::ErrorKind::ConnectionAborted => {
                TransportError::Closed
            }
            _ => TransportError::Io(e.to_string()),
        }
    }
}

/// Reads the frame cap from [`MAX_FRAME_ENV`], falling back to the default.
pub fn max_frame_from_env() -> Result<usize, String> {
    match std::env::var(MAX_FRAME_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| format!("{MAX_FRAME_ENV} must be a byte count, got '{v}'")),
        Err(_) => Ok(DEFAULT_MAX_FRAME),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Client,
    Server,
}

/// Monotone traffic counters. Byte counts include the length prefixes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TrafficStats {
    pub frames_sent: u64,
    pub frames_received: u64,
    pub bytes_sent: u64,
    pub bytes_received: u64,
}

#[derive(Debug)]
pub struct Endpoint<S> {
    stream: S,
    role: Role,
    max_frame: usize,
    stats: TrafficStats,
}

impl<S: Read + Write> Endpoint<S> {
    pub fn new(stream: S, role: Role) -> Self {
        Self { stream, role, max_frame: DEFAULT_MAX_FRAME, stats: TrafficStats::default() }
    }

    pub fn with_max_frame(mut self, max_frame: usize) -> Self {
        self.max_frame = max_frame;
        self
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn max_frame(&self) -> usize {
        self.max_frame
    }

    pub fn stats(&self) -> TrafficStats {
        self.stats
    }

    pub fn get_ref(&self) -> &S {
        &self.stream
    }

    pub fn into_inner(self) -> S {
        self.stream
    }

    /// Writes the whole frame with a single `write_all`; nothing is written
    /// when the payload is over the cap.
    pub fn send_frame(&mut self, payload: &[u8]) -> Result<(), TransportError> {
        if payload.len() > self.max_frame || payload.len() > u32::MAX as usize {
            return Err(TransportError::Oversize { len: payload.len() as u64, max: self.max_frame });
        }
        let mut frame = Vec::with_capacity(4 + payload.len());
        frame.extend_from_slice(&(payload.len() as u32).to_be_bytes());
        frame.extend_from_slice(payload);
        self.stream.write_all(&frame)?;
        self.stream.flush()?;
        self.stats.frames_sent += 1;
        self.stats.bytes_sent += frame.len() as u64;
        Ok(())
    }

    pub fn recv_frame(&mut self) -> Result<Vec<u8>, TransportError> {
        let mut header = [0u8; 4];
        match read_full(&mut self.stream, &mut header)? {
            0 => return Err(TransportError::Closed),
            4 => {}
            got => return Err(TransportError::Truncated { expected: 4, got }),
        }
        let len = u32::from_be_bytes(header) as usize;
        if len > self.max_frame {
            return Err(TransportError::Oversize { len: len as u64, max: self.max_frame });
        }
        let mut payload = vec![0u8; len];
        let got = read_full(&mut self.stream, &mut payload)?;
        if got != len {
            return Err(TransportError::Truncated { expected: len, got });
        }
        self.stats.frames_received += 1;
        self.stats.bytes_received += 4 + len as u64;
        Ok(payload)
    }
}

/// Fills `buf` unless EOF comes first; returns the number of bytes read.
fn read_full(r: &mut impl Read, buf: &mut [u8]) -> Result<usize, TransportError> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(filled)
}

/// Sets read/write timeouts and disables Nagle on a TCP stream.
pub fn tcp_endpoint(stream: TcpStream, role: Role, timeout: Duration) -> Result<Endpoint<TcpStream>, TransportError> {
    stream.set_read_timeout(Some(timeout))?;
    stream.set_write_timeout(Some(timeout))?;
    stream.set_nodelay(true)?;
    Ok(Endpoint::new(stream, role))
}

pub fn tcp_connect(addr: &str, timeout: Duration) -> Result<Endpoint<TcpStream>, TransportError> {
    let mut last = TransportError::Io(format!("no address resolved for '{addr}'"));
    for sa in addr.to_socket_addrs()? {
        match TcpStream::connect_timeout(&sa, timeout) {
            Ok(s) => return tcp_endpoint(s, Role::Client, timeout),
            Err(e) => last = e.into(),
        }
    }
    Err(last)
}

/// One end of an in-process byte pipe.
#[derive(Debug)]
pub struct MemoryStream {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    pending: Vec<u8>,
    pos: usize,
    timeout: Duration,
}

/// Two connected in-process streams. Dropping one end reads as EOF on the
/// other.
pub fn duplex(timeout: Duration) -> (MemoryStream, MemoryStream) {
    let (atx, brx) = mpsc::channel();
    let (btx, arx) = mpsc::channel();
    let end = |tx, rx| MemoryStream { tx, rx, pending: Vec::new(), pos: 0, timeout };
    (end(atx, arx), end(btx, brx))
}

impl Read for MemoryStream {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if buf.is_empty() {
            return Ok(0);
        }
        while self.pos == self.pending.len() {
            match self.rx.recv_timeout(self.timeout) {
                Ok(chunk) => {
                    self.pending = chunk;
                    self.pos = 0;
                }
                Err(RecvTimeoutError::Disconnected) => return Ok(0),
                Err(RecvTimeoutError::Timeout) => return Err(io::ErrorKind::TimedOut.into()),
            }
        }
        let n = buf.len().min(self.pending.len() - self.pos);
        buf[..n].copy_from_slice(&self.pending[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

impl Write for MemoryStream {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        if buf.is_empty() {
            return Ok(0);
        }
        self.tx.send(buf.to_vec()).map_err(|_| io::Error::from(io::ErrorKind::BrokenPipe))?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Moves at most one byte per `read` or `write` call.
#[derive(Debug)]
pub struct Fragmenting<S>(pub S);

impl<S: Read> Read for Fragmenting<S> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = buf.len().min(1);
        self.0.read(&mut buf[..n])
    }
}

impl<S: Write> Write for Fragmenting<S> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = buf.len().min(1);
        self.0.write(&buf[..n])
    }

    fn flush(&mut self) -> io::Result<()> {
        self.0.flush()
    }
}
