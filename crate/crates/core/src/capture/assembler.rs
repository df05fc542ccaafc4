use super::{CaptureError, CapturePacket};

/// Session counters kept by the assembler.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StreamStats {
    pub packets_seen: u64,
    /// `(max seq + 1) - packets_seen`.
    pub packets_lost: u64,
    pub frames_completed: u64,
    pub frames_with_gaps: u64,
    pub payload_bytes: u64,
    /// Filled in by whoever owns the session clock.
    pub achieved_bit_rate: f64,
}

impl StreamStats {
    pub fn set_elapsed(&mut self, seconds: f64) {
        if seconds > 0.0 {
            self.achieved_bit_rate = self.payload_bytes as f64 * 8.0 / seconds;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledFrame {
    /// Position of the frame in the session, from byte offset 0.
    pub index: u64,
    pub bytes: Vec<u8>,
    /// Some bytes were never received and are zero-filled.
    pub has_gap: bool,
    pub missing_bytes: usize,
}

#[derive(Debug)]
struct Partial {
    index: u64,
    buf: Vec<u8>,
    received: usize,
}

/// Rebuilds fixed-size frames from an in-order packet stream with losses.
///
/// Missing byte ranges are zero-filled so the consumer sees one frame per
/// frame period regardless of drops. Frames whose packets were all lost are
/// still emitted, entirely zero and flagged.
#[derive(Debug)]
pub struct FrameAssembler {
    frame_bytes: usize,
    current: Option<Partial>,
    next_frame: u64,
    last_seq: Option<u32>,
    next_offset: u64,
    session_seen: u64,
    lost_prior: u64,
    stats: StreamStats,
}

impl FrameAssembler {
    pub fn new(frame_bytes: usize) -> Self {
        assert!(frame_bytes > 0, "frame size must be positive");
        Self {
            frame_bytes,
            current: None,
            next_frame: 0,
            last_seq: None,
            next_offset: 0,
            session_seen: 0,
            lost_prior: 0,
            stats: StreamStats::default(),
        }
    }

    pub fn frame_bytes(&self) -> usize {
        self.frame_bytes
    }

    pub fn stats(&self) -> &StreamStats {
        &self.stats
    }

    pub fn stats_mut(&mut self) -> &mut StreamStats {
        &mut self.stats
    }

    /// Counts packets lost after the last one received, which the sequence
    /// numbers alone cannot reveal. `total_packets` is the sender's count for
    /// the current session.
    pub fn account_tail(&mut self, total_packets: u64) {
        let lost = self.lost_prior + total_packets.saturating_sub(self.session_seen);
        self.stats.packets_lost = self.stats.packets_lost.max(lost);
    }

    /// Drops partial state after a protocol error and starts a new session;
    /// statistics keep accumulating.
    pub fn reset(&mut self) {
        self.session_seen = 0;
        self.lost_prior = self.stats.packets_lost;
        self.current = None;
        self.last_seq = None;
        self.next_offset = 0;
        self.next_frame = 0;
    }

    fn emit(&mut self, partial: Partial, out: &mut Vec<AssembledFrame>) {
        let missing = self.frame_bytes - partial.received;
        self.stats.frames_completed += 1;
        if missing > 0 {
            self.stats.frames_with_gaps += 1;
        }
        self.next_frame = partial.index + 1;
        out.push(AssembledFrame { index: partial.index, bytes: partial.buf, has_gap: missing > 0, missing_bytes: missing });
    }

    fn emit_empty_until(&mut self, index: u64, out: &mut Vec<AssembledFrame>) {
        while self.next_frame < index {
            let partial = Partial { index: self.next_frame, buf: vec![0; self.frame_bytes], received: 0 };
            self.emit(partial, out);
        }
    }

    pub fn push(&mut self, packet: &CapturePacket) -> Result<Vec<AssembledFrame>, CaptureError> {
        if let Some(last) = self.last_seq {
            if packet.seq <= last {
                return Err(CaptureError::SeqRegression { last, got: packet.seq });
            }
        }
        if packet.byte_offset < self.next_offset {
            return Err(CaptureError::OffsetRegression { expected: self.next_offset, got: packet.byte_offset });
        }
        self.last_seq = Some(packet.seq);
        self.stats.packets_seen += 1;
        self.session_seen += 1;
        self.stats.packets_lost = self.lost_prior + packet.seq as u64 + 1 - self.session_seen;
        self.stats.payload_bytes += packet.payload.len() as u64;
        self.next_offset = packet.byte_offset + packet.payload.len() as u64;

        let mut out = Vec::new();
        let fb = self.frame_bytes as u64;
        let mut pos = packet.byte_offset;
        let mut data = packet.payload.as_slice();
        while !data.is_empty() {
            let index = pos / fb;
            if self.current.as_ref().is_some_and(|c| c.index != index) {
                let done = self.current.take().unwrap();
                self.emit(done, &mut out);
            }
            if self.current.is_none() {
                self.emit_empty_until(index, &mut out);
                self.current = Some(Partial { index, buf: vec![0; self.frame_bytes], received: 0 });
            }
            let current = self.current.as_mut().unwrap();
            let start = (pos - index * fb) as usize;
            let n = data.len().min(self.frame_bytes - start);
            current.buf[start..start + n].copy_from_slice(&data[..n]);
            current.received += n;
            pos += n as u64;
            data = &data[n..];
            if current.received == self.frame_bytes {
                let done = self.current.take().unwrap();
                self.emit(done, &mut out);
            }
        }
        Ok(out)
    }

    /// Flushes the trailing partial frame; when the session length is known,
    /// also emits zero-filled frames up to `expected_frames`.
    pub fn finish(&mut self, expected_frames: Option<u64>) -> Vec<AssembledFrame> {
        let mut out = Vec::new();
        if let Some(partial) = self.current.take() {
            self.emit(partial, &mut out);
        }
        if let Some(total) = expected_frames {
            self.emit_empty_until(total, &mut out);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::super::packetize;
    use super::*;

    fn frames_bytes(n: usize, len: usize) -> Vec<u8> {
        (0..n * len).map(|i| (i * 31 % 251) as u8).collect()
    }

    #[test]
    fn lossless_two_frames() {
        let frame = 5000;
        let bytes = frames_bytes(2, frame);
        let mut asm = FrameAssembler::new(frame);
        let mut got = Vec::new();
        let packets = packetize(&bytes, 1452).unwrap();
        for p in &packets {
            got.extend(asm.push(p).unwrap());
        }
        got.extend(asm.finish(None));
        assert_eq!(got.len(), 2);
        assert!(got.iter().all(|f| !f.has_gap));
        assert_eq!(got[0].bytes, bytes[..frame]);
        assert_eq!(got[1].bytes, bytes[frame..]);
        assert_eq!(asm.stats().packets_lost, 0);
        assert_eq!(asm.stats().packets_seen, packets.len() as u64);
    }

    #[test]
    fn single_mid_frame_drop_is_zero_filled() {
        let frame = 1452 * 4;
        let bytes = frames_bytes(1, frame);
        let packets = packetize(&bytes, 1452).unwrap();
        let mut asm = FrameAssembler::new(frame);
        let mut got = Vec::new();
        for p in packets.iter().filter(|p| p.seq != 1) {
            got.extend(asm.push(p).unwrap());
        }
        got.extend(asm.finish(None));
        assert_eq!(got.len(), 1);
        let f = &got[0];
        assert!(f.has_gap);
        assert_eq!(f.missing_bytes, 1452);
        let mut expected = bytes.clone();
        expected[1452..2904].fill(0);
        assert_eq!(f.bytes, expected);
        assert_eq!(asm.stats().packets_lost, 1);
        assert_eq!(asm.stats().frames_with_gaps, 1);
    }

    #[test]
    fn fully_lost_frame_still_emitted() {
        let frame = 1000;
        let bytes = frames_bytes(3, frame);
        let mut asm = FrameAssembler::new(frame);
        let mut pk = super::super::Packetizer::new(1452).unwrap();
        let mut got = Vec::new();
        for (i, chunk) in bytes.chunks(frame).enumerate() {
            for p in pk.push(chunk).unwrap() {
                if i != 1 {
                    got.extend(asm.push(&p).unwrap());
                }
            }
        }
        got.extend(asm.finish(Some(4)));
        let indices: Vec<u64> = got.iter().map(|f| f.index).collect();
        assert_eq!(indices, [0, 1, 2, 3]);
        assert!(!got[0].has_gap && got[1].has_gap && !got[2].has_gap && got[3].has_gap);
        assert!(got[1].bytes.iter().all(|&b| b == 0));
        assert_eq!(asm.stats().packets_lost, 1);
    }

    #[test]
    fn packets_spanning_frame_boundaries() {
        let frame = 700;
        let bytes = frames_bytes(4, frame);
        let mut asm = FrameAssembler::new(frame);
        let mut got = Vec::new();
        for p in packetize(&bytes, 1000).unwrap() {
            got.extend(asm.push(&p).unwrap());
        }
        assert_eq!(got.len(), 4);
        for (i, f) in got.iter().enumerate() {
            assert_eq!(f.bytes, bytes[i * frame..(i + 1) * frame]);
        }
    }

    #[test]
    fn seq_regression_is_an_error() {
        let packets = packetize(&[1u8; 3000], 1000).unwrap();
        let mut asm = FrameAssembler::new(3000);
        asm.push(&packets[1]).unwrap();
        assert!(matches!(asm.push(&packets[0]), Err(CaptureError::SeqRegression { last: 1, got: 0 })));
        assert!(asm.push(&packets[1]).is_err());
        asm.reset();
        assert!(asm.push(&packets[0]).is_ok());
    }

    #[test]
    fn achieved_rate() {
        let mut asm = FrameAssembler::new(100);
        for p in packetize(&[0u8; 1000], 100).unwrap() {
            asm.push(&p).unwrap();
        }
        asm.stats_mut().set_elapsed(2.0);
        assert_eq!(asm.stats().achieved_bit_rate, 4000.0);
    }
}
