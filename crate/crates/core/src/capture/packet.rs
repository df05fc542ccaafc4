use super::CaptureError;

/// Largest datagram the capture card emits, header included.
pub const MAX_PACKET_BYTES: usize = 1462;
/// 4-byte little-endian sequence number + 6-byte little-endian byte count.
pub const HEADER_BYTES: usize = 10;
pub const MAX_PAYLOAD: usize = MAX_PACKET_BYTES - HEADER_BYTES;
/// `byte_offset` is carried in 48 bits.
pub const MAX_BYTE_OFFSET: u64 = (1 << 48) - 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapturePacket {
    pub seq: u32,
    /// Payload bytes sent before this packet in the session.
    pub byte_offset: u64,
    pub payload: Vec<u8>,
}

impl CapturePacket {
    pub fn wire_len(&self) -> usize {
        HEADER_BYTES + self.payload.len()
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.seq.to_le_bytes());
        out.extend_from_slice(&self.byte_offset.to_le_bytes()[..6]);
        out.extend_from_slice(&self.payload);
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_len());
        self.encode_into(&mut out);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CaptureError> {
        if bytes.len() <= HEADER_BYTES || bytes.len() > MAX_PACKET_BYTES {
            return Err(CaptureError::PacketLength(bytes.len()));
        }
        let seq = u32::from_le_bytes(bytes[..4].try_into().unwrap());
        let mut offset = [0u8; 8];
        offset[..6].copy_from_slice(&bytes[4..10]);
        Ok(Self { seq, byte_offset: u64::from_le_bytes(offset), payload: bytes[HEADER_BYTES..].to_vec() })
    }
}

/// Splits a byte stream into sequenced packets, continuing the sequence and
/// byte count across calls so consecutive frames form one session.
#[derive(Debug, Clone)]
pub struct Packetizer {
    max_payload: usize,
    next_seq: u32,
    next_offset: u64,
}

impl Packetizer {
    pub fn new(max_payload: usize) -> Result<Self, CaptureError> {
        if max_payload == 0 || max_payload > MAX_PAYLOAD {
            return Err(CaptureError::MaxPayload(max_payload));
        }
        Ok(Self { max_payload, next_seq: 0, next_offset: 0 })
    }

    pub fn max_payload(&self) -> usize {
        self.max_payload
    }

    pub fn next_seq(&self) -> u32 {
        self.next_seq
    }

    pub fn push(&mut self, bytes: &[u8]) -> Result<Vec<CapturePacket>, CaptureError> {
        if bytes.is_empty() {
            return Err(CaptureError::EmptyInput);
        }
        let count = bytes.len().div_ceil(self.max_payload);
        let end_offset = self.next_offset + bytes.len() as u64;
        if end_offset > MAX_BYTE_OFFSET + 1 {
            return Err(CaptureError::CounterOverflow);
        }
        if self.next_seq as u64 + count as u64 > u32::MAX as u64 + 1 {
            return Err(CaptureError::CounterOverflow);
        }
        let mut packets = Vec::with_capacity(count);
        for chunk in bytes.chunks(self.max_payload) {
            packets.push(CapturePacket { seq: self.next_seq, byte_offset: self.next_offset, payload: chunk.to_vec() });
            self.next_seq = self.next_seq.wrapping_add(1);
            self.next_offset += chunk.len() as u64;
        }
        Ok(packets)
    }
}

/// Packetizes one buffer as a fresh session starting at sequence 0.
pub fn packetize(frame_bytes: &[u8], max_payload: usize) -> Result<Vec<CapturePacket>, CaptureError> {
    Packetizer::new(max_payload)?.push(frame_bytes)
}
