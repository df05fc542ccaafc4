//! Capture-card style framing: raw frames are cut into sequenced packets of
//! at most 1462 bytes, carried over a datagram socket or an in-process queue,
//! and reassembled into fixed-size frames with loss accounting.

mod assembler;
mod file;
mod packet;
mod replay;
mod transport;

use thiserror::Error;

pub use assembler::{AssembledFrame, FrameAssembler, StreamStats};
pub use file::{CaptureHeader, CaptureReader, CaptureWriter, CAPTURE_HEADER_BYTES, CAPTURE_MAGIC, CAPTURE_VERSION};
pub use packet::{packetize, CapturePacket, Packetizer, HEADER_BYTES, MAX_BYTE_OFFSET, MAX_PACKET_BYTES, MAX_PAYLOAD};
pub use replay::{stream_frames, stream_replay, LossInjector, ReplayOptions, ReplayReport};
pub use transport::{
    channel, ChannelSink, ChannelSource, PacketSink, PacketSource, RecvOutcome, SendOutcome, UdpSink, UdpSource,
};

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("packet of {0} bytes is outside (10, 1462]")]
    PacketLength(usize),
    #[error("max payload {0} must be in 1..=1452")]
    MaxPayload(usize),
    #[error("nothing to packetize")]
    EmptyInput,
    #[error("sequence or byte counter overflow")]
    CounterOverflow,
    #[error("sequence regression: got {got} after {last}; stream reset required")]
    SeqRegression { last: u32, got: u32 },
    #[error("byte offset regression: got {got}, expected at least {expected}")]
    OffsetRegression { expected: u64, got: u64 },
    #[error("malformed capture header: {0}")]
    Header(String),
    #[error("frame has {got} bytes, capture expects {expected}")]
    FrameShape { expected: usize, got: usize },
    #[error("truncated frame: {got} of {expected} bytes")]
    TruncatedFrame { expected: usize, got: usize },
    #[error("pace must be a positive frame rate (got {0})")]
    Pace(f64),
    #[error("transport closed")]
    Closed,
    #[error("transport: {0}")]
    Transport(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
