//! Packet transports. Both carry the encoded wire bytes of each packet, so a
//! consumer cannot tell which one it is attached to.

use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::time::Duration;

use crossbeam_channel::{bounded, Receiver, RecvTimeoutError, Sender, TrySendError};

use super::{CaptureError, CapturePacket, MAX_PACKET_BYTES};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendOutcome {
    Sent,
    /// The consumer fell behind and the packet was discarded.
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecvOutcome {
    Packet(CapturePacket),
    Timeout,
    Closed,
}

pub trait PacketSink: Send {
    fn send(&mut self, packet: &CapturePacket) -> Result<SendOutcome, CaptureError>;
    /// Signals end of stream to the receiving side.
    fn close(&mut self) -> Result<(), CaptureError>;
}

pub trait PacketSource: Send {
    fn recv(&mut self, timeout: Duration) -> Result<RecvOutcome, CaptureError>;
}

/// In-process sink over a bounded queue; a full queue drops instead of blocking.
pub struct ChannelSink {
    tx: Option<Sender<Vec<u8>>>,
}

pub struct ChannelSource {
    rx: Receiver<Vec<u8>>,
}

pub fn channel(capacity: usize) -> (ChannelSink, ChannelSource) {
    let (tx, rx) = bounded(capacity);
    (ChannelSink { tx: Some(tx) }, ChannelSource { rx })
}

impl PacketSink for ChannelSink {
    fn send(&mut self, packet: &CapturePacket) -> Result<SendOutcome, CaptureError> {
        let tx = self.tx.as_ref().ok_or(CaptureError::Closed)?;
        match tx.try_send(packet.encode()) {
            Ok(()) => Ok(SendOutcome::Sent),
            Err(TrySendError::Full(_)) => Ok(SendOutcome::Dropped),
            Err(TrySendError::Disconnected(_)) => Err(CaptureError::Closed),
        }
    }

    fn close(&mut self) -> Result<(), CaptureError> {
        self.tx = None;
        Ok(())
    }
}

impl PacketSource for ChannelSource {
    fn recv(&mut self, timeout: Duration) -> Result<RecvOutcome, CaptureError> {
        match self.rx.recv_timeout(timeout) {
            Ok(bytes) => Ok(RecvOutcome::Packet(CapturePacket::decode(&bytes)?)),
            Err(RecvTimeoutError::Timeout) => Ok(RecvOutcome::Timeout),
            Err(RecvTimeoutError::Disconnected) => Ok(RecvOutcome::Closed),
        }
    }
}

/// Datagram sink. End of stream is a zero-length datagram, which can never
/// be a valid packet.
pub struct UdpSink {
    socket: UdpSocket,
    target: SocketAddr,
    buf: Vec<u8>,
}

impl UdpSink {
    pub fn connect(bind: impl ToSocketAddrs, target: impl ToSocketAddrs) -> Result<Self, CaptureError> {
        let socket = UdpSocket::bind(bind)?;
        let target = target.to_socket_addrs()?.next().ok_or_else(|| CaptureError::Transport("no target address".into()))?;
        Ok(Self { socket, target, buf: Vec::with_capacity(MAX_PACKET_BYTES) })
    }
}

impl PacketSink for UdpSink {
    fn send(&mut self, packet: &CapturePacket) -> Result<SendOutcome, CaptureError> {
        self.buf.clear();
        packet.encode_into(&mut self.buf);
        match self.socket.send_to(&self.buf, self.target) {
            Ok(_) => Ok(SendOutcome::Sent),
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => Ok(SendOutcome::Dropped),
            Err(e) => Err(e.into()),
        }
    }

    fn close(&mut self) -> Result<(), CaptureError> {
        self.socket.send_to(&[], self.target)?;
        Ok(())
    }
}

pub struct UdpSource {
    socket: UdpSocket,
    buf: Vec<u8>,
}

impl UdpSource {
    pub fn bind(addr: impl ToSocketAddrs) -> Result<Self, CaptureError> {
        Ok(Self { socket: UdpSocket::bind(addr)?, buf: vec![0; MAX_PACKET_BYTES + 1] })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, CaptureError> {
        Ok(self.socket.local_addr()?)
    }
}

impl PacketSource for UdpSource {
    fn recv(&mut self, timeout: Duration) -> Result<RecvOutcome, CaptureError> {
        self.socket.set_read_timeout(Some(timeout.max(Duration::from_micros(1))))?;
        match self.socket.recv_from(&mut self.buf) {
            Ok((0, _)) => Ok(RecvOutcome::Closed),
            Ok((n, _)) => Ok(RecvOutcome::Packet(CapturePacket::decode(&self.buf[..n])?)),
            Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {
                Ok(RecvOutcome::Timeout)
            }
            Err(e) => Err(e.into()),
        }
    }
}
