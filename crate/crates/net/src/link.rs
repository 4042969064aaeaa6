use std::fmt;
use std::io::{self, ErrorKind};
use std::net::{Ipv4Addr, Ipv6Addr, SocketAddr, TcpStream, UdpSocket};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use socket2::{Domain, Socket, Type};

use crate::wire::{read_frame, write_frame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Proto {
    Tcp,
    Udp,
}

impl fmt::Display for Proto {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Proto::Tcp => "tcp",
            Proto::Udp => "udp",
        })
    }
}

impl FromStr for Proto {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tcp" => Ok(Proto::Tcp),
            "udp" => Ok(Proto::Udp),
            other => Err(format!("unknown protocol '{other}', expected tcp|udp")),
        }
    }
}

pub(crate) fn unspecified_for(addr: &SocketAddr) -> SocketAddr {
    match addr {
        SocketAddr::V4(_) => (Ipv4Addr::UNSPECIFIED, 0).into(),
        SocketAddr::V6(_) => (Ipv6Addr::UNSPECIFIED, 0).into(),
    }
}

pub(crate) fn is_timeout(e: &io::Error) -> bool {
    matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut)
}

/// Client end of a measurement path: a connected UDP socket or one TCP
/// connection carrying length-prefixed frames.
pub(crate) enum Link {
    Udp(UdpSocket),
    Tcp(TcpStream),
}

impl Link {
    pub(crate) fn connect(proto: Proto, endpoint: SocketAddr) -> io::Result<Self> {
        Self::connect_with(proto, endpoint, None)
    }

    /// `tcp_send_buffer` caps the kernel send buffer so a blocked write
    /// surfaces backpressure instead of queueing seconds of data.
    pub(crate) fn connect_with(
        proto: Proto,
        endpoint: SocketAddr,
        tcp_send_buffer: Option<usize>,
    ) -> io::Result<Self> {
        match proto {
            Proto::Udp => {
                let sock = UdpSocket::bind(unspecified_for(&endpoint))?;
                sock.connect(endpoint)?;
                Ok(Link::Udp(sock))
            }
            Proto::Tcp => {
                let sock = Socket::new(Domain::for_address(endpoint), Type::STREAM, None)?;
                if let Some(b) = tcp_send_buffer {
                    sock.set_send_buffer_size(b)?;
                }
                sock.connect(&endpoint.into())?;
                let stream: TcpStream = sock.into();
                stream.set_nodelay(true)?;
                Ok(Link::Tcp(stream))
            }
        }
    }

    pub(crate) fn send(&mut self, bytes: &[u8]) -> io::Result<()> {
        match self {
            Link::Udp(sock) => sock.send(bytes).map(|_| ()),
            Link::Tcp(stream) => write_frame(stream, bytes),
        }
    }

    /// `Ok(false)` when nothing arrived within `timeout`.
    pub(crate) fn recv(&mut self, buf: &mut Vec<u8>, timeout: Duration) -> io::Result<bool> {
        match self {
            Link::Udp(sock) => {
                sock.set_read_timeout(Some(timeout))?;
                buf.resize(crate::wire::MAX_FRAME, 0);
                match sock.recv(buf) {
                    Ok(n) => {
                        buf.truncate(n);
                        Ok(true)
                    }
                    Err(e) if is_timeout(&e) => Ok(false),
                    Err(e) => Err(e),
                }
            }
            Link::Tcp(stream) => {
                stream.set_read_timeout(Some(timeout))?;
                match read_frame(stream, buf) {
                    Ok(true) => Ok(true),
                    Ok(false) => Err(ErrorKind::UnexpectedEof.into()),
                    Err(e) if is_timeout(&e) => Ok(false),
                    Err(e) => Err(e),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proto_parse_and_display() {
        assert_eq!("udp".parse::<Proto>().unwrap(), Proto::Udp);
        assert_eq!(Proto::Tcp.to_string(), "tcp");
        assert!("sctp".parse::<Proto>().is_err());
    }
}
