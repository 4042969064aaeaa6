//! Packet codec. All integers are big-endian.
//!
//! ```text
//! 0..4    magic "AOI1"
//! 4       ptype (0 UPDATE, 1 PROBE, 2 PROBE_ECHO)
//! 5..13   seq
//! 13..21  gen_ns
//! 21..29  reflector_recv_ns (PROBE_ECHO only)
//! ...     zero padding up to the configured size
//! ```
//!
//! Over TCP every packet is preceded by its length as a `u16`.

use std::io::{self, Read, Write};

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"AOI1";
pub const HEADER_LEN: usize = 21;
pub const ECHO_LEN: usize = 29;
/// Largest frame a `u16` length prefix can describe.
pub const MAX_FRAME: usize = u16::MAX as usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PacketType {
    Update = 0,
    Probe = 1,
    ProbeEcho = 2,
}

impl PacketType {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(PacketType::Update),
            1 => Some(PacketType::Probe),
            2 => Some(PacketType::ProbeEcho),
            _ => None,
        }
    }

    pub fn min_len(self) -> usize {
        match self {
            PacketType::ProbeEcho => ECHO_LEN,
            _ => HEADER_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("packet too short: {0} bytes")]
    TooShort(usize),
    #[error("bad magic")]
    BadMagic,
    #[error("unknown packet type {0}")]
    BadType(u8),
    #[error("frame of {0} bytes does not fit a u16 length prefix")]
    TooLong(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub ptype: PacketType,
    pub seq: u64,
    pub gen_ns: u64,
    /// Reflector receive stamp, present on `PROBE_ECHO` only.
    pub reflector_recv_ns: Option<u64>,
    /// Encoded size in bytes, padding included.
    pub size: usize,
}

impl Packet {
    pub fn update(seq: u64, gen_ns: u64, payload: usize) -> Self {
        Self {
            ptype: PacketType::Update,
            seq,
            gen_ns,
            reflector_recv_ns: None,
            size: payload.max(HEADER_LEN),
        }
    }

    pub fn probe(seq: u64, sent_ns: u64) -> Self {
        Self {
            ptype: PacketType::Probe,
            seq,
            gen_ns: sent_ns,
            reflector_recv_ns: None,
            size: HEADER_LEN,
        }
    }

    /// Echo of a probe carrying the reflector's receive stamp.
    pub fn echo(probe: &Packet, recv_ns: u64) -> Self {
        Self {
            ptype: PacketType::ProbeEcho,
            seq: probe.seq,
            gen_ns: probe.gen_ns,
            reflector_recv_ns: Some(recv_ns),
            size: ECHO_LEN,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.size);
        self.encode_into(&mut buf);
        buf
    }

    pub fn encode_into(&self, buf: &mut Vec<u8>) {
        buf.clear();
        buf.extend_from_slice(&MAGIC);
        buf.push(self.ptype as u8);
        buf.extend_from_slice(&self.seq.to_be_bytes());
        buf.extend_from_slice(&self.gen_ns.to_be_bytes());
        if self.ptype == PacketType::ProbeEcho {
            buf.extend_from_slice(&self.reflector_recv_ns.unwrap_or(0).to_be_bytes());
        }
        let size = self.size.max(buf.len());
        buf.resize(size, 0);
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.len() < HEADER_LEN {
            return Err(WireError::TooShort(bytes.len()));
        }
        if bytes[0..4] != MAGIC {
            return Err(WireError::BadMagic);
        }
        let ptype = PacketType::from_byte(bytes[4]).ok_or(WireError::BadType(bytes[4]))?;
        if bytes.len() < ptype.min_len() {
            return Err(WireError::TooShort(bytes.len()));
        }
        let u64_at = |at: usize| u64::from_be_bytes(bytes[at..at + 8].try_into().unwrap());
        Ok(Packet {
            ptype,
            seq: u64_at(5),
            gen_ns: u64_at(13),
            reflector_recv_ns: (ptype == PacketType::ProbeEcho).then(|| u64_at(21)),
            size: bytes.len(),
        })
    }
}

/// Writes one length-prefixed frame.
pub fn write_frame<W: Write>(out: &mut W, frame: &[u8]) -> io::Result<()> {
    let len = u16::try_from(frame.len())
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, WireError::TooLong(frame.len())))?;
    let mut buf = Vec::with_capacity(frame.len() + 2);
    buf.extend_from_slice(&len.to_be_bytes());
    buf.extend_from_slice(frame);
    out.write_all(&buf)
}

/// Reads one length-prefixed frame into `buf`. `Ok(false)` on clean EOF
/// before the prefix.
pub fn read_frame<R: Read>(input: &mut R, buf: &mut Vec<u8>) -> io::Result<bool> {
    let mut len = [0u8; 2];
    match input.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(false),
        Err(e) => return Err(e),
    }
    buf.resize(u16::from_be_bytes(len) as usize, 0);
    input.read_exact(buf)?;
    Ok(true)
}

/// Incremental splitter for a length-prefixed byte stream. Unlike
/// [`read_frame`] it survives read timeouts in the middle of a frame.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    pos: usize,
}

impl FrameDecoder {
    pub fn push(&mut self, data: &[u8]) {
        if self.pos > 0 {
            self.buf.drain(..self.pos);
            self.pos = 0;
        }
        self.buf.extend_from_slice(data);
    }

    /// Next complete frame, if buffered.
    pub fn next_frame(&mut self) -> Option<&[u8]> {
        let rest = &self.buf[self.pos..];
        if rest.len() < 2 {
            return None;
        }
        let len = u16::from_be_bytes([rest[0], rest[1]]) as usize;
        if rest.len() < 2 + len {
            return None;
        }
        let start = self.pos + 2;
        self.pos = start + len;
        Some(&self.buf[start..start + len])
    }

    /// Bytes buffered but not yet returned as frames.
    pub fn pending(&self) -> usize {
        self.buf.len() - self.pos
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_bit_exact() {
        let p = Packet::update(0x0102030405060708, 0x1112131415161718, 0);
        let b = p.encode();
        assert_eq!(b.len(), 21);
        assert_eq!(&b[0..4], &[0x41, 0x4F, 0x49, 0x31]);
        assert_eq!(b[4], 0);
        assert_eq!(&b[5..13], &[1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(&b[13..21], &[0x11, 0x12, 0x13, 0x14, 0x15, 0x16, 0x17, 0x18]);
    }

    #[test]
    fn echo_appends_reflector_stamp() {
        let e = Packet::echo(&Packet::probe(3, 100), 650);
        let b = e.encode();
        assert_eq!(b.len(), 29);
        assert_eq!(b[4], 2);
        assert_eq!(u64::from_be_bytes(b[21..29].try_into().unwrap()), 650);
        assert_eq!(Packet::decode(&b).unwrap(), e);
    }

    #[test]
    fn padding_is_zero() {
        let b = Packet::update(1, 2, 64).encode();
        assert_eq!(b.len(), 64);
        assert!(b[21..].iter().all(|&x| x == 0));
    }

    #[test]
    fn rejects_malformed() {
        let mut b = Packet::update(1, 2, 0).encode();
        assert_eq!(Packet::decode(&b[..20]), Err(WireError::TooShort(20)));
        b[4] = 9;
        assert_eq!(Packet::decode(&b), Err(WireError::BadType(9)));
        b[0] = b'X';
        assert_eq!(Packet::decode(&b), Err(WireError::BadMagic));
        let mut short_echo = Packet::echo(&Packet::probe(1, 1), 1).encode();
        short_echo.truncate(25);
        assert_eq!(Packet::decode(&short_echo), Err(WireError::TooShort(25)));
    }

    #[test]
    fn frames_round_trip() {
        let mut stream = Vec::new();
        write_frame(&mut stream, b"abc").unwrap();
        write_frame(&mut stream, b"").unwrap();
        assert_eq!(&stream[..2], &[0, 3]);
        let mut r = stream.as_slice();
        let mut buf = Vec::new();
        assert!(read_frame(&mut r, &mut buf).unwrap());
        assert_eq!(buf, b"abc");
        assert!(read_frame(&mut r, &mut buf).unwrap());
        assert!(buf.is_empty());
        assert!(!read_frame(&mut r, &mut buf).unwrap());
        assert!(write_frame(&mut Vec::new(), &vec![0; 70_000]).is_err());
    }

    #[test]
    fn decoder_handles_split_frames() {
        let mut stream = Vec::new();
        write_frame(&mut stream, &Packet::update(1, 2, 30).encode()).unwrap();
        write_frame(&mut stream, &Packet::update(2, 3, 21).encode()).unwrap();
        let mut d = FrameDecoder::default();
        let mut got = Vec::new();
        for chunk in stream.chunks(7) {
            d.push(chunk);
            while let Some(f) = d.next_frame() {
                got.push(Packet::decode(f).unwrap().seq);
            }
        }
        assert_eq!(got, [1, 2]);
        assert_eq!(d.pending(), 0);
    }

    fn packet_strategy() -> impl Strategy<Value = Packet> {
        (0u8..3, any::<u64>(), any::<u64>(), any::<u64>(), 0usize..1500).prop_map(
            |(t, seq, gen_ns, echo, size)| {
                let ptype = PacketType::from_byte(t).unwrap();
                Packet {
                    ptype,
                    seq,
                    gen_ns,
                    reflector_recv_ns: (ptype == PacketType::ProbeEcho).then_some(echo),
                    size: size.max(ptype.min_len()),
                }
            },
        )
    }

    proptest! {
        #[test]
        fn encode_decode_is_identity(p in packet_strategy()) {
            let bytes = p.encode();
            prop_assert_eq!(bytes.len(), p.size);
            prop_assert_eq!(Packet::decode(&bytes).unwrap(), p);
        }

        #[test]
        fn framed_stream_round_trip(ps in prop::collection::vec(packet_strategy(), 0..20)) {
            let mut stream = Vec::new();
            for p in &ps {
                write_frame(&mut stream, &p.encode()).unwrap();
            }
            let mut r = stream.as_slice();
            let mut buf = Vec::new();
            let mut back = Vec::new();
            while read_frame(&mut r, &mut buf).unwrap() {
                back.push(Packet::decode(&buf).unwrap());
            }
            prop_assert_eq!(back, ps);
        }
    }
}
