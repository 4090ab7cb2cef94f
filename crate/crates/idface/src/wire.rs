//! Length-prefixed binary framing and the protocol message codec.
//!
//! Every frame is `magic ‖ type ‖ length ‖ payload`:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "IDF1"
//! 4       1     message type byte
//! 5       8     payload length, big-endian u64
//! 13      len   payload
//! ```
//!
//! The codec is bijective on the message set: encoding then decoding returns
//! the identical message, and every byte of a valid frame is accounted for.
//! Canonical encodings are enforced on decode (pad bits zero, declared
//! lengths exact), so there is exactly one byte string per message.
//!
//! Messages:
//!
//! | type | message            | direction                     |
//! |------|--------------------|-------------------------------|
//! | 1    | ScoreBatchRequest  | local server → key server     |
//! | 2    | IdxResponse        | key server → local server     |
//! | 3    | EnrollBroadcast    | enrolling client → share server |
//! | 4    | IdentifyRequest    | client → local server         |
//! | 5    | IdentifyResult     | local server → client         |
//! | 6    | QueryShare         | initiating share server → peer |
//! | 7    | SharePartials      | peer → initiating share server |
//! | 8    | ErrorReply         | any server → requester        |
//!
//! A rejection `IdxResponse` is exactly 14 bytes — 13 of header plus a single
//! zero flag byte — which doubles as the codec's worked example.

use std::io::{Read, Write};

use crate::{Error, Result};

/// Frame magic, first four bytes of every frame.
pub const MAGIC: [u8; 4] = *b"IDF1";

/// Header size: magic + type byte + length word.
pub const HEADER_BYTES: usize = 13;

/// Upper bound on payload size (defends against garbage length words; the
/// largest legitimate payload, a full share-partials table for a million
/// identities, stays under 100 MiB).
pub const MAX_PAYLOAD_BYTES: u64 = 256 * 1024 * 1024;

/// One encrypted score pair as raw ciphertext wire bytes (parsed by whichever
/// role holds the matching backend).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireScorePair {
    /// Serialized ciphertext accumulating the positive sign combinations.
    pub plus: Vec<u8>,
    /// Serialized ciphertext accumulating the negative sign combinations.
    pub minus: Vec<u8>,
}

/// Every message the transports carry.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    /// All per-batch encrypted score pairs of one identification round.
    ScoreBatchRequest {
        /// One pair per enrolled batch, in batch order.
        pairs: Vec<WireScorePair>,
    },
    /// The key server's verdict: `None` rejects, `Some((batch, within))`
    /// points at the accepted position.
    IdxResponse {
        /// Accepted `(batch index, index within batch)`, if any.
        accept: Option<(u32, u32)>,
    },
    /// One identity's share material for one share server.
    EnrollBroadcast {
        /// Identity label.
        id: String,
        /// Template dimension (the bit vectors hold `d` bits each).
        d: u32,
        /// Packed positive-mask share bits, little-endian within bytes.
        plus: Vec<u8>,
        /// Packed negative-mask share bits.
        minus: Vec<u8>,
    },
    /// A client's plaintext query to its local server.
    IdentifyRequest {
        /// Feature coordinates.
        coords: Vec<f64>,
    },
    /// The local server's answer to a client.
    IdentifyResult {
        /// Accepted identity label, or `None` for rejection.
        identity: Option<String>,
    },
    /// The initiating share server broadcasts the query's sign supports.
    QueryShare {
        /// Template dimension.
        d: u32,
        /// Packed query positive-mask bits.
        plus: Vec<u8>,
        /// Packed query negative-mask bits.
        minus: Vec<u8>,
    },
    /// A peer share server's per-identity subvector table.
    SharePartials {
        /// Bits in the query's positive support.
        k_plus: u32,
        /// Bits in the query's negative support.
        k_minus: u32,
        /// Per identity: the four subvectors packed contiguously
        /// (`z⁺[y⁺] ‖ z⁻[y⁻] ‖ z⁺[y⁻] ‖ z⁻[y⁺]`, `2(k⁺+k⁻)` bits), padded to
        /// a whole number of bytes per row.
        rows: Vec<Vec<u8>>,
    },
    /// Failure report in place of a normal reply.
    ErrorReply {
        /// Human-readable cause.
        message: String,
    },
}

impl Message {
    /// Frame type byte.
    pub fn type_byte(&self) -> u8 {
        match self {
            Message::ScoreBatchRequest { .. } => 1,
            Message::IdxResponse { .. } => 2,
            Message::EnrollBroadcast { .. } => 3,
            Message::IdentifyRequest { .. } => 4,
            Message::IdentifyResult { .. } => 5,
            Message::QueryShare { .. } => 6,
            Message::SharePartials { .. } => 7,
            Message::ErrorReply { .. } => 8,
        }
    }
}

/// Bytes needed to pack `bits` bits.
pub fn packed_len(bits: usize) -> usize {
    (bits + 7) / 8
}

fn check_packed(bytes: &[u8], bits: u32, what: &str) -> Result<()> {
    let need = packed_len(bits as usize);
    if bytes.len() != need {
        return Err(Error::LengthMismatch(format!(
            "{what}: {bits} bits need {need} bytes, got {}",
            bytes.len()
        )));
    }
    let spare = need * 8 - bits as usize;
    if spare > 0 {
        let last = bytes[need - 1];
        if last >> (8 - spare as u32) != 0 {
            return Err(Error::MalformedFrame(format!(
                "{what}: nonzero pad bits break canonical encoding"
            )));
        }
    }
    Ok(())
}

struct PayloadWriter(Vec<u8>);

impl PayloadWriter {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_bits().to_be_bytes());
    }
    fn blob(&mut self, v: &[u8]) {
        self.u32(v.len() as u32);
        self.0.extend_from_slice(v);
    }
    fn raw(&mut self, v: &[u8]) {
        self.0.extend_from_slice(v);
    }
}

struct PayloadReader<'a> {
    bytes: &'a [u8],
    off: usize,
}

impl<'a> PayloadReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, off: 0 }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.off < n {
            return Err(Error::MalformedFrame(format!(
                "payload truncated: wanted {n} bytes, {} remain",
                self.bytes.len() - self.off
            )));
        }
        let s = &self.bytes[self.off..self.off + n];
        self.off += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(u64::from_be_bytes(
            self.take(8)?.try_into().unwrap(),
        )))
    }
    fn blob(&mut self) -> Result<Vec<u8>> {
        let len = self.u32()? as usize;
        Ok(self.take(len)?.to_vec())
    }
    fn finish(&self) -> Result<()> {
        if self.off != self.bytes.len() {
            return Err(Error::LengthMismatch(format!(
                "{} trailing payload bytes after a complete message",
                self.bytes.len() - self.off
            )));
        }
        Ok(())
    }
}

fn encode_payload(msg: &Message) -> Vec<u8> {
    let mut w = PayloadWriter(Vec::new());
    match msg {
        Message::ScoreBatchRequest { pairs } => {
            w.u32(pairs.len() as u32);
            for p in pairs {
                w.blob(&p.plus);
                w.blob(&p.minus);
            }
        }
        Message::IdxResponse { accept } => match accept {
            None => w.u8(0),
            Some((batch, within)) => {
                w.u8(1);
                w.u32(*batch);
                w.u32(*within);
            }
        },
        Message::EnrollBroadcast { id, d, plus, minus } => {
            w.blob(id.as_bytes());
            w.u32(*d);
            w.raw(plus);
            w.raw(minus);
        }
        Message::IdentifyRequest { coords } => {
            w.u32(coords.len() as u32);
            for &c in coords {
                w.f64(c);
            }
        }
        Message::IdentifyResult { identity } => match identity {
            None => w.u8(0),
            Some(id) => {
                w.u8(1);
                w.blob(id.as_bytes());
            }
        },
        Message::QueryShare { d, plus, minus } => {
            w.u32(*d);
            w.raw(plus);
            w.raw(minus);
        }
        Message::SharePartials {
            k_plus,
            k_minus,
            rows,
        } => {
            w.u32(rows.len() as u32);
            w.u32(*k_plus);
            w.u32(*k_minus);
            for r in rows {
                w.raw(r);
            }
        }
        Message::ErrorReply { message } => {
            w.blob(message.as_bytes());
        }
    }
    w.0
}

fn decode_payload(type_byte: u8, payload: &[u8]) -> Result<Message> {
    let mut r = PayloadReader::new(payload);
    let msg = match type_byte {
        1 => {
            let count = r.u32()? as usize;
            let mut pairs = Vec::with_capacity(count.min(1 << 20));
            for _ in 0..count {
                let plus = r.blob()?;
                let minus = r.blob()?;
                pairs.push(WireScorePair { plus, minus });
            }
            Message::ScoreBatchRequest { pairs }
        }
        2 => {
            let accept = match r.u8()? {
                0 => None,
                1 => Some((r.u32()?, r.u32()?)),
                other => {
                    return Err(Error::MalformedFrame(format!(
                        "IdxResponse flag must be 0 or 1, got {other}"
                    )))
                }
            };
            Message::IdxResponse { accept }
        }
        3 => {
            let id = String::from_utf8(r.blob()?)
                .map_err(|e| Error::MalformedFrame(format!("identity not UTF-8: {e}")))?;
            let d = r.u32()?;
            let len = packed_len(d as usize);
            let plus = r.take(len)?.to_vec();
            let minus = r.take(len)?.to_vec();
            check_packed(&plus, d, "enroll plus mask")?;
            check_packed(&minus, d, "enroll minus mask")?;
            Message::EnrollBroadcast { id, d, plus, minus }
        }
        4 => {
            let count = r.u32()? as usize;
            let mut coords = Vec::with_capacity(count.min(1 << 20));
            for _ in 0..count {
                coords.push(r.f64()?);
            }
            Message::IdentifyRequest { coords }
        }
        5 => {
            let identity = match r.u8()? {
                0 => None,
                1 => Some(String::from_utf8(r.blob()?).map_err(|e| {
                    Error::MalformedFrame(format!("identity not UTF-8: {e}"))
                })?),
                other => {
                    return Err(Error::MalformedFrame(format!(
                        "IdentifyResult flag must be 0 or 1, got {other}"
                    )))
                }
            };
            Message::IdentifyResult { identity }
        }
        6 => {
            let d = r.u32()?;
            let len = packed_len(d as usize);
            let plus = r.take(len)?.to_vec();
            let minus = r.take(len)?.to_vec();
            check_packed(&plus, d, "query plus mask")?;
            check_packed(&minus, d, "query minus mask")?;
            Message::QueryShare { d, plus, minus }
        }
        7 => {
            let count = r.u32()? as usize;
            let k_plus = r.u32()?;
            let k_minus = r.u32()?;
            let row_bits = 2 * (k_plus + k_minus);
            let row_len = packed_len(row_bits as usize);
            let mut rows = Vec::with_capacity(count.min(1 << 20));
            for _ in 0..count {
                let row = r.take(row_len)?.to_vec();
                check_packed(&row, row_bits, "share partial row")?;
                rows.push(row);
            }
            Message::SharePartials {
                k_plus,
                k_minus,
                rows,
            }
        }
        8 => {
            let message = String::from_utf8(r.blob()?)
                .map_err(|e| Error::MalformedFrame(format!("error text not UTF-8: {e}")))?;
            Message::ErrorReply { message }
        }
        other => return Err(Error::UnknownMessageType(other)),
    };
    r.finish()?;
    Ok(msg)
}

/// Encodes a message as one complete frame.
pub fn wire_encode(msg: &Message) -> Vec<u8> {
    let payload = encode_payload(msg);
    let mut frame = Vec::with_capacity(HEADER_BYTES + payload.len());
    frame.extend_from_slice(&MAGIC);
    frame.push(msg.type_byte());
    frame.extend_from_slice(&(payload.len() as u64).to_be_bytes());
    frame.extend_from_slice(&payload);
    frame
}

/// Decodes one frame from the front of `bytes`, returning the message and
/// the number of bytes consumed.
pub fn wire_decode(bytes: &[u8]) -> Result<(Message, usize)> {
    if bytes.len() < HEADER_BYTES {
        return Err(Error::MalformedFrame(format!(
            "frame header needs {HEADER_BYTES} bytes, got {}",
            bytes.len()
        )));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::MalformedFrame(format!(
            "bad magic {:02x}{:02x}{:02x}{:02x}",
            bytes[0], bytes[1], bytes[2], bytes[3]
        )));
    }
    let type_byte = bytes[4];
    let len = u64::from_be_bytes(bytes[5..13].try_into().unwrap());
    if len > MAX_PAYLOAD_BYTES {
        return Err(Error::LengthMismatch(format!(
            "declared payload of {len} bytes exceeds the {MAX_PAYLOAD_BYTES}-byte cap"
        )));
    }
    let len = len as usize;
    if bytes.len() < HEADER_BYTES + len {
        return Err(Error::MalformedFrame(format!(
            "frame declares {len} payload bytes, {} present",
            bytes.len() - HEADER_BYTES
        )));
    }
    let msg = decode_payload(type_byte, &bytes[HEADER_BYTES..HEADER_BYTES + len])?;
    Ok((msg, HEADER_BYTES + len))
}

/// Writes one frame to a stream.
pub fn write_message<W: Write>(w: &mut W, msg: &Message) -> Result<()> {
    w.write_all(&wire_encode(msg))?;
    w.flush()?;
    Ok(())
}

/// Reads one complete raw frame (header and payload) from a stream without
/// decoding it. Useful when the caller also wants the exact bytes, e.g. for
/// transcript capture.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Vec<u8>> {
    let mut header = [0u8; HEADER_BYTES];
    r.read_exact(&mut header)?;
    if header[..4] != MAGIC {
        return Err(Error::MalformedFrame("bad magic".into()));
    }
    let len = u64::from_be_bytes(header[5..13].try_into().unwrap());
    if len > MAX_PAYLOAD_BYTES {
        return Err(Error::LengthMismatch(format!(
            "declared payload of {len} bytes exceeds the {MAX_PAYLOAD_BYTES}-byte cap"
        )));
    }
    let mut frame = header.to_vec();
    frame.resize(HEADER_BYTES + len as usize, 0);
    r.read_exact(&mut frame[HEADER_BYTES..])?;
    Ok(frame)
}

/// Reads one complete frame from a stream.
pub fn read_message<R: Read>(r: &mut R) -> Result<Message> {
    let frame = read_frame(r)?;
    let (msg, _) = wire_decode(&frame)?;
    Ok(msg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(msg: Message) {
        let frame = wire_encode(&msg);
        let (back, used) = wire_decode(&frame).unwrap();
        assert_eq!(used, frame.len());
        assert_eq!(back, msg);
        // Stream path agrees with the buffer path.
        let mut cursor = std::io::Cursor::new(frame);
        assert_eq!(read_message(&mut cursor).unwrap(), msg);
    }

    #[test]
    fn rejection_is_exactly_fourteen_bytes() {
        let frame = wire_encode(&Message::IdxResponse { accept: None });
        assert_eq!(frame.len(), 14);
        assert_eq!(&frame[..4], b"IDF1");
        assert_eq!(frame[4], 2);
        assert_eq!(&frame[5..13], &1u64.to_be_bytes());
        assert_eq!(frame[13], 0);
    }

    #[test]
    fn all_message_kinds_round_trip() {
        roundtrip(Message::ScoreBatchRequest { pairs: vec![] });
        roundtrip(Message::ScoreBatchRequest {
            pairs: vec![
                WireScorePair {
                    plus: vec![0, 0, 0, 2, 0xAB, 0xCD],
                    minus: vec![0, 0, 0, 1, 0x7F],
                },
                WireScorePair {
                    plus: vec![0, 0, 0, 0],
                    minus: vec![0, 0, 0, 0],
                },
            ],
        });
        roundtrip(Message::IdxResponse { accept: None });
        roundtrip(Message::IdxResponse {
            accept: Some((3, 141)),
        });
        roundtrip(Message::EnrollBroadcast {
            id: "alice".into(),
            d: 12,
            plus: vec![0b1010_1010, 0b0000_1111],
            minus: vec![0b0101_0101, 0b0000_0000],
        });
        roundtrip(Message::IdentifyRequest {
            coords: vec![0.25, -1.5, 3.25e-3, 0.0],
        });
        roundtrip(Message::IdentifyResult { identity: None });
        roundtrip(Message::IdentifyResult {
            identity: Some("bob".into()),
        });
        roundtrip(Message::QueryShare {
            d: 9,
            plus: vec![0xFF, 0x01],
            minus: vec![0x00, 0x01],
        });
        roundtrip(Message::SharePartials {
            k_plus: 3,
            k_minus: 2,
            rows: vec![vec![0b0011_0101, 0b0000_0001], vec![0, 0]],
        });
        roundtrip(Message::ErrorReply {
            message: "parameter mismatch".into(),
        });
    }

    #[test]
    fn accepted_index_frame_is_twenty_two_bytes() {
        let frame = wire_encode(&Message::IdxResponse {
            accept: Some((7, 99)),
        });
        assert_eq!(frame.len(), 22);
    }

    #[test]
    fn decode_rejects_structural_corruption() {
        let good = wire_encode(&Message::IdxResponse { accept: None });

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            wire_decode(&bad_magic),
            Err(Error::MalformedFrame(_))
        ));

        let mut bad_type = good.clone();
        bad_type[4] = 200;
        assert!(matches!(
            wire_decode(&bad_type),
            Err(Error::UnknownMessageType(200))
        ));

        assert!(matches!(
            wire_decode(&good[..10]),
            Err(Error::MalformedFrame(_))
        ));

        // Declared length beyond the buffer.
        let mut short = good.clone();
        short[12] = 9;
        assert!(matches!(
            wire_decode(&short),
            Err(Error::MalformedFrame(_))
        ));

        // Absurd length word.
        let mut huge = good.clone();
        huge[5] = 0xFF;
        assert!(matches!(
            wire_decode(&huge),
            Err(Error::LengthMismatch(_))
        ));

        // Trailing garbage inside the declared payload.
        let mut padded = wire_encode(&Message::IdxResponse { accept: None });
        padded[12] = 2;
        padded.push(0);
        assert!(matches!(
            wire_decode(&padded),
            Err(Error::LengthMismatch(_))
        ));
    }

    #[test]
    fn decode_enforces_canonical_pad_bits() {
        let msg = Message::QueryShare {
            d: 9,
            plus: vec![0xFF, 0x01],
            minus: vec![0x00, 0x01],
        };
        let mut frame = wire_encode(&msg);
        // Set a pad bit beyond bit 9 in the plus mask (last byte holds bit 8
        // only; bit 7 of that byte is padding).
        let plus_last = HEADER_BYTES + 4 + 1;
        frame[plus_last] |= 0b1000_0000;
        assert!(matches!(
            wire_decode(&frame),
            Err(Error::MalformedFrame(_))
        ));
    }

    #[test]
    fn frames_parse_back_to_back_from_one_buffer() {
        let a = Message::IdxResponse {
            accept: Some((1, 2)),
        };
        let b = Message::ErrorReply {
            message: "x".into(),
        };
        let mut buf = wire_encode(&a);
        buf.extend_from_slice(&wire_encode(&b));
        let (m1, used) = wire_decode(&buf).unwrap();
        let (m2, used2) = wire_decode(&buf[used..]).unwrap();
        assert_eq!(m1, a);
        assert_eq!(m2, b);
        assert_eq!(used + used2, buf.len());
    }

    #[test]
    fn identify_request_preserves_exact_float_bits() {
        let coords = vec![f64::MIN_POSITIVE, -0.0, 1.0 / 3.0, f64::MAX];
        let msg = Message::IdentifyRequest {
            coords: coords.clone(),
        };
        let frame = wire_encode(&msg);
        let (back, _) = wire_decode(&frame).unwrap();
        match back {
            Message::IdentifyRequest { coords: got } => {
                for (a, b) in coords.iter().zip(&got) {
                    assert_eq!(a.to_bits(), b.to_bits());
                }
            }
            _ => panic!("wrong variant"),
        }
    }
}
