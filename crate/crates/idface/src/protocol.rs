//! The two-server identification protocol: a local server that stores only
//! the public key and the encrypted database, and a key server that stores
//! only the secret key.
//!
//! One identification round:
//!
//! 1. a client hands the local server a plaintext query template;
//! 2. the local server ternarizes it with `T_β`, computes one encrypted
//!    [`ScorePair`](crate::dbenc::ScorePair) per batch, and ships them to the
//!    key server;
//! 3. the key server decrypts, decodes every packed score, takes the global
//!    argmax, and answers with an index — or a rejection — never with a score;
//! 4. the local server maps the index back to an identity label.
//!
//! The split keeps either server from seeing templates *and* scores: the
//! local server handles plaintext queries but only ciphertext scores; the key
//! server sees plaintext scores but no templates and no identity labels
//! (indices only). Decode and argmax therefore run at the key server — the
//! only party with plaintexts — and its reply is index-or-reject by
//! construction.
//!
//! The acceptance rule compares the winning integer score strictly against
//! `τ_int = ⌈τ·√(αβ)⌉`, the integer image of a real cosine threshold `τ`
//! under the rescaling `s / √(αβ)`. The ceiling guarantees a real-valued τ is
//! never under-enforced. Ties in the argmax break toward the lowest
//! (batch, slot, digit) position, i.e. enrollment order.
//!
//! Padding caveat: unoccupied packed positions decode to score 0. For τ ≥ 0
//! a padding position can never be *accepted* (0 > τ_int ≥ 0 fails), and the
//! local server additionally maps any out-of-range index to a rejection. A
//! negative τ would accept paddings at the key server; the local server's
//! mask still turns those into rejections, at the price of diverging from a
//! pad-free plaintext reference — so exact-agreement guarantees are stated
//! for τ ≥ 0.
//!
//! Transports: an in-process channel (which still routes every message
//! through the byte codec, so transcripts and behavior match the network
//! exactly) and a length-prefixed TCP transport. Both can record transcripts
//! for the privacy assertions. No TLS — passive adversaries only.
//!
//! Concurrency: identification borrows the local server immutably (batches
//! score in parallel), enrollment borrows it mutably; Rust's borrow rules
//! are exactly the single-writer/multi-reader contract the roles need. The
//! key server processes each connection sequentially.

use std::net::{TcpListener, TcpStream};

use crate::ahe::Backend;
use crate::dbenc::{self, Database};
use crate::exec;
use crate::packing::PackingParams;
use crate::transform::{split, ternarize, FeatureTemplate};
use crate::wire::{self, Message, WireScorePair};
use crate::{Error, Result};

/// Parameters both roles must agree on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    /// Template dimension.
    pub d: usize,
    /// Enrollment sparsity α.
    pub alpha: usize,
    /// Query sparsity β.
    pub beta: usize,
    /// Real cosine acceptance threshold τ.
    pub tau: f64,
}

/// Integer threshold `⌈τ·√(αβ)⌉` the key server compares scores against.
pub fn integer_threshold(tau: f64, alpha: usize, beta: usize) -> i64 {
    (tau * ((alpha * beta) as f64).sqrt()).ceil() as i64
}

/// The outcome of one identification round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MatchResult {
    /// The winning score cleared the threshold; here is who it was.
    Accept(String),
    /// No enrolled identity scored above the threshold.
    Reject,
}

impl MatchResult {
    /// `true` for [`MatchResult::Accept`].
    pub fn is_accept(&self) -> bool {
        matches!(self, MatchResult::Accept(_))
    }

    /// Accepted identity, if any.
    pub fn identity(&self) -> Option<&str> {
        match self {
            MatchResult::Accept(id) => Some(id),
            MatchResult::Reject => None,
        }
    }
}

/// Which way a transcript frame traveled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Local server → key server.
    LocalToKey,
    /// Key server → local server.
    KeyToLocal,
}

/// One captured frame.
#[derive(Debug, Clone)]
pub struct TranscriptFrame {
    /// Travel direction.
    pub direction: Direction,
    /// The complete frame bytes (header and payload).
    pub bytes: Vec<u8>,
}

/// Every frame exchanged between the two servers during recorded rounds.
#[derive(Debug, Clone, Default)]
pub struct Transcript {
    /// Frames in exchange order.
    pub frames: Vec<TranscriptFrame>,
}

impl Transcript {
    /// `true` if `needle` occurs contiguously anywhere in any frame.
    pub fn contains_subslice(&self, needle: &[u8]) -> bool {
        if needle.is_empty() {
            return true;
        }
        self.frames
            .iter()
            .any(|f| f.bytes.windows(needle.len()).any(|w| w == needle))
    }

    /// Frames sent by the key server.
    pub fn frames_from_key(&self) -> impl Iterator<Item = &TranscriptFrame> {
        self.frames
            .iter()
            .filter(|f| f.direction == Direction::KeyToLocal)
    }

    /// Total captured bytes.
    pub fn total_bytes(&self) -> usize {
        self.frames.iter().map(|f| f.bytes.len()).sum()
    }
}

/// A request/reply channel from the local server to the key server.
pub trait KeyChannel {
    /// Sends one request and awaits the reply.
    fn exchange(&mut self, request: &Message) -> Result<Message>;
}

/// In-process channel: calls the key server directly, but still pushes every
/// message through the byte codec so behavior and transcripts are
/// indistinguishable from the TCP transport.
pub struct InProcessChannel<'a> {
    key: &'a KeyServer,
    transcript: Option<Transcript>,
}

impl<'a> InProcessChannel<'a> {
    /// Channel without transcript capture.
    pub fn new(key: &'a KeyServer) -> Self {
        Self {
            key,
            transcript: None,
        }
    }

    /// Channel that records all frames.
    pub fn recording(key: &'a KeyServer) -> Self {
        Self {
            key,
            transcript: Some(Transcript::default()),
        }
    }

    /// The transcript recorded so far.
    pub fn transcript(&self) -> Option<&Transcript> {
        self.transcript.as_ref()
    }

    /// Takes the transcript, leaving recording enabled but empty.
    pub fn take_transcript(&mut self) -> Option<Transcript> {
        self.transcript.replace(Transcript::default())
    }
}

impl KeyChannel for InProcessChannel<'_> {
    fn exchange(&mut self, request: &Message) -> Result<Message> {
        let req_bytes = wire::wire_encode(request);
        if let Some(t) = &mut self.transcript {
            t.frames.push(TranscriptFrame {
                direction: Direction::LocalToKey,
                bytes: req_bytes.clone(),
            });
        }
        let (decoded, used) = wire::wire_decode(&req_bytes)?;
        debug_assert_eq!(used, req_bytes.len());
        let reply = self.key.handle(&decoded);
        let rep_bytes = wire::wire_encode(&reply);
        if let Some(t) = &mut self.transcript {
            t.frames.push(TranscriptFrame {
                direction: Direction::KeyToLocal,
                bytes: rep_bytes.clone(),
            });
        }
        let (reply, _) = wire::wire_decode(&rep_bytes)?;
        Ok(reply)
    }
}

/// TCP channel to a remote key server.
pub struct TcpChannel {
    stream: TcpStream,
    transcript: Option<Transcript>,
}

impl TcpChannel {
    /// Connects without transcript capture.
    pub fn connect(addr: &str) -> Result<Self> {
        let stream = TcpStream::connect(addr)
            .map_err(|e| Error::TransportFailure(format!("connect {addr}: {e}")))?;
        Ok(Self {
            stream,
            transcript: None,
        })
    }

    /// Connects and records all frames.
    pub fn connect_recording(addr: &str) -> Result<Self> {
        let mut c = Self::connect(addr)?;
        c.transcript = Some(Transcript::default());
        Ok(c)
    }

    /// The transcript recorded so far.
    pub fn transcript(&self) -> Option<&Transcript> {
        self.transcript.as_ref()
    }

    /// Takes the transcript, leaving recording enabled but empty.
    pub fn take_transcript(&mut self) -> Option<Transcript> {
        self.transcript.replace(Transcript::default())
    }
}

impl KeyChannel for TcpChannel {
    fn exchange(&mut self, request: &Message) -> Result<Message> {
        let req_bytes = wire::wire_encode(request);
        self.stream
            .write_all_flush(&req_bytes)
            .map_err(|e| Error::TransportFailure(format!("send: {e}")))?;
        if let Some(t) = &mut self.transcript {
            t.frames.push(TranscriptFrame {
                direction: Direction::LocalToKey,
                bytes: req_bytes,
            });
        }
        let frame = wire::read_frame(&mut self.stream)?;
        let (reply, _) = wire::wire_decode(&frame)?;
        if let Some(t) = &mut self.transcript {
            t.frames.push(TranscriptFrame {
                direction: Direction::KeyToLocal,
                bytes: frame,
            });
        }
        Ok(reply)
    }
}

trait WriteAllFlush {
    fn write_all_flush(&mut self, bytes: &[u8]) -> std::io::Result<()>;
}

impl WriteAllFlush for TcpStream {
    fn write_all_flush(&mut self, bytes: &[u8]) -> std::io::Result<()> {
        use std::io::Write;
        self.write_all(bytes)?;
        self.flush()
    }
}

/// The local server: encrypted database, public key, protocol parameters —
/// and provably no secret key (construction refuses a decrypting backend).
#[derive(Debug)]
pub struct LocalServer {
    db: Database,
    backend: Backend,
    params: ProtocolParams,
}

impl LocalServer {
    /// Builds the local role. Fails with [`Error::KeyMismatch`] if the
    /// backend could decrypt — the local server must hold public material
    /// only — and checks the parameter set against the database geometry.
    pub fn new(db: Database, backend: Backend, params: ProtocolParams) -> Result<Self> {
        if backend.can_decrypt() {
            return Err(Error::KeyMismatch(
                "the local server must not hold a decryption capability".into(),
            ));
        }
        if params.d != db.d {
            return Err(Error::DimensionMismatch {
                expected: db.d,
                got: params.d,
            });
        }
        if params.alpha != db.alpha {
            return Err(Error::ParamMismatch(format!(
                "database enrolled at α = {}, protocol configured for α = {}",
                db.alpha, params.alpha
            )));
        }
        if params.alpha.min(params.beta) > db.packing.max_query_weight() {
            return Err(Error::ParamMismatch(format!(
                "β = {} can overflow packed digits sized for at most {}",
                params.beta,
                db.packing.max_query_weight()
            )));
        }
        if !params.tau.is_finite() {
            return Err(Error::RangeViolation("τ must be finite".into()));
        }
        Ok(Self {
            db,
            backend,
            params,
        })
    }

    /// The database (read-only).
    pub fn db(&self) -> &Database {
        &self.db
    }

    /// Protocol parameters.
    pub fn params(&self) -> ProtocolParams {
        self.params
    }

    /// The public-material backend.
    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    /// Enrolls templates (encrypt-and-append; exclusive borrow serializes
    /// against concurrent scoring).
    pub fn enroll(&mut self, templates: &[(String, FeatureTemplate)]) -> Result<usize> {
        self.db.enroll(templates, &self.backend)
    }

    /// Runs one identification round over the given channel.
    pub fn identify<C: KeyChannel + ?Sized>(
        &self,
        query: &FeatureTemplate,
        channel: &mut C,
    ) -> Result<MatchResult> {
        if self.db.batches.is_empty() {
            return Err(Error::RangeViolation(
                "cannot identify against an empty database".into(),
            ));
        }
        if query.dim() != self.params.d {
            return Err(Error::DimensionMismatch {
                expected: self.params.d,
                got: query.dim(),
            });
        }
        let z = split(&ternarize(query, self.params.beta)?);
        let pairs: Vec<WireScorePair> = exec::try_map_indexed(self.db.batches.len(), |i| {
            let batch = &self.db.batches[i];
            let pair = dbenc::idface_ip_db_ternary(&z, batch, &self.backend)?;
            Ok(WireScorePair {
                plus: self.backend.ciphertext_to_wire(&pair.ct_plus)?,
                minus: self.backend.ciphertext_to_wire(&pair.ct_minus)?,
            })
        })?;
        let reply = channel.exchange(&Message::ScoreBatchRequest { pairs })?;
        match reply {
            Message::IdxResponse { accept: None } => Ok(MatchResult::Reject),
            Message::IdxResponse {
                accept: Some((batch, within)),
            } => Ok(
                // Indices pointing at padding (or out of range) mask to a
                // rejection; only occupied positions carry identities.
                match self.db.identity_at(batch as usize, within as usize) {
                    Some(id) => MatchResult::Accept(id.to_string()),
                    None => MatchResult::Reject,
                },
            ),
            Message::ErrorReply { message } => Err(Error::TransportFailure(format!(
                "key server reported: {message}"
            ))),
            other => Err(Error::TransportFailure(format!(
                "unexpected reply type {}",
                other.type_byte()
            ))),
        }
    }
}

/// The key server: secret key, packing geometry, integer threshold — and no
/// database, templates, or identity labels.
#[derive(Debug)]
pub struct KeyServer {
    backend: Backend,
    packing: PackingParams,
    tau_int: i64,
}

impl KeyServer {
    /// Builds the key role; the backend must be able to decrypt.
    pub fn new(backend: Backend, packing: PackingParams, tau_int: i64) -> Result<Self> {
        if !backend.can_decrypt() {
            return Err(Error::KeyMismatch(
                "the key server needs the secret key".into(),
            ));
        }
        Ok(Self {
            backend,
            packing,
            tau_int,
        })
    }

    /// The integer threshold in force.
    pub fn tau_int(&self) -> i64 {
        self.tau_int
    }

    /// Handles one request. Never returns plaintext scores: every reply is
    /// an index-or-reject [`Message::IdxResponse`] or an [`Message::ErrorReply`].
    pub fn handle(&self, request: &Message) -> Message {
        match request {
            Message::ScoreBatchRequest { pairs } => match self.scan(pairs) {
                Ok(accept) => Message::IdxResponse { accept },
                Err(e) => Message::ErrorReply {
                    message: e.to_string(),
                },
            },
            other => Message::ErrorReply {
                message: format!("unexpected message type {}", other.type_byte()),
            },
        }
    }

    /// Decrypts every pair, decodes all packed positions (padding included),
    /// and returns the strict-threshold global argmax.
    fn scan(&self, pairs: &[WireScorePair]) -> Result<Option<(u32, u32)>> {
        let capacity = self.packing.m * self.backend.descriptor().slot_count;
        let mut best: Option<(u32, u32, i64)> = None;
        for (b, pair) in pairs.iter().enumerate() {
            let (ct_plus, used) = self.backend.ciphertext_from_wire(&pair.plus)?;
            if used != pair.plus.len() {
                return Err(Error::LengthMismatch(format!(
                    "{} trailing bytes after a plus ciphertext",
                    pair.plus.len() - used
                )));
            }
            let (ct_minus, used) = self.backend.ciphertext_from_wire(&pair.minus)?;
            if used != pair.minus.len() {
                return Err(Error::LengthMismatch(format!(
                    "{} trailing bytes after a minus ciphertext",
                    pair.minus.len() - used
                )));
            }
            let plus = self.backend.decrypt(&ct_plus)?;
            let minus = self.backend.decrypt(&ct_minus)?;
            let scores = dbenc::decode_score_slots(&plus, &minus, self.packing, capacity)?;
            for (w, &s) in scores.iter().enumerate() {
                // Strictly-greater update: ties keep the lowest
                // (batch, slot, digit), i.e. enrollment order.
                if best.map_or(true, |(_, _, bs)| s > bs) {
                    best = Some((b as u32, w as u32, s));
                }
            }
        }
        Ok(match best {
            Some((b, w, s)) if s > self.tau_int => Some((b, w)),
            _ => None,
        })
    }
}

/// Plaintext reference pipeline: ternarize → integer inner products → argmax
/// (strictly-greater, enrollment order) → strict integer threshold. The
/// encrypted protocol must agree with this exactly for τ ≥ 0.
pub fn plaintext_reference(
    enrolled: &[(String, FeatureTemplate)],
    query: &FeatureTemplate,
    alpha: usize,
    beta: usize,
    tau: f64,
) -> Result<MatchResult> {
    let tau_int = integer_threshold(tau, alpha, beta);
    let zy = ternarize(query, beta)?;
    let mut best: Option<(usize, i64)> = None;
    for (t, (_, x)) in enrolled.iter().enumerate() {
        let s = crate::transform::ternary_inner(&ternarize(x, alpha)?, &zy)?;
        if best.map_or(true, |(_, bs)| s > bs) {
            best = Some((t, s));
        }
    }
    Ok(match best {
        Some((t, s)) if s > tau_int => MatchResult::Accept(enrolled[t].0.clone()),
        _ => MatchResult::Reject,
    })
}

/// Serves the key role on a listener: per connection, frames are answered
/// sequentially until the peer closes. Runs until the listener fails.
pub fn serve_key(listener: TcpListener, key: &KeyServer) -> Result<()> {
    for stream in listener.incoming() {
        let stream = stream.map_err(|e| Error::TransportFailure(format!("accept: {e}")))?;
        if let Err(e) = handle_key_connection(stream, key) {
            // A broken connection ends that conversation, not the server.
            log_connection_error("key", &e);
        }
    }
    Ok(())
}

/// Answers frames on one key-server connection until EOF.
pub fn handle_key_connection(mut stream: TcpStream, key: &KeyServer) -> Result<()> {
    loop {
        let frame = match wire::read_frame(&mut stream) {
            Ok(f) => f,
            // Clean EOF between frames ends the conversation.
            Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(()),
            Err(e) => return Err(e),
        };
        let reply = match wire::wire_decode(&frame) {
            Ok((msg, _)) => key.handle(&msg),
            Err(e) => Message::ErrorReply {
                message: e.to_string(),
            },
        };
        stream
            .write_all_flush(&wire::wire_encode(&reply))
            .map_err(|e| Error::TransportFailure(format!("send reply: {e}")))?;
    }
}

/// Serves the local role on a listener: each client frame is an
/// `IdentifyRequest`; every round opens a fresh channel to the key server at
/// `key_addr`. Runs until the listener fails.
pub fn serve_local(listener: TcpListener, local: &LocalServer, key_addr: &str) -> Result<()> {
    for stream in listener.incoming() {
        let stream = stream.map_err(|e| Error::TransportFailure(format!("accept: {e}")))?;
        if let Err(e) = handle_local_connection(stream, local, key_addr) {
            log_connection_error("local", &e);
        }
    }
    Ok(())
}

/// Answers client frames on one local-server connection until EOF.
pub fn handle_local_connection(
    mut stream: TcpStream,
    local: &LocalServer,
    key_addr: &str,
) -> Result<()> {
    loop {
        let frame = match wire::read_frame(&mut stream) {
            Ok(f) => f,
            Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(()),
            Err(e) => return Err(e),
        };
        let reply = match wire::wire_decode(&frame) {
            Ok((Message::IdentifyRequest { coords }, _)) => {
                match FeatureTemplate::new(coords).and_then(|y| {
                    let mut channel = TcpChannel::connect(key_addr)?;
                    local.identify(&y, &mut channel)
                }) {
                    Ok(result) => Message::IdentifyResult {
                        identity: match result {
                            MatchResult::Accept(id) => Some(id),
                            MatchResult::Reject => None,
                        },
                    },
                    Err(e) => Message::ErrorReply {
                        message: e.to_string(),
                    },
                }
            }
            Ok((other, _)) => Message::ErrorReply {
                message: format!("unexpected message type {}", other.type_byte()),
            },
            Err(e) => Message::ErrorReply {
                message: e.to_string(),
            },
        };
        stream
            .write_all_flush(&wire::wire_encode(&reply))
            .map_err(|e| Error::TransportFailure(format!("send reply: {e}")))?;
    }
}

fn log_connection_error(role: &str, e: &Error) {
    eprintln!("{role} server: connection ended with error: {e}");
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ahe::paillier::KeyPair;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    struct Rig {
        enrolled: Vec<(String, FeatureTemplate)>,
        local: LocalServer,
        key: KeyServer,
    }

    fn build_rig(
        d: usize,
        alpha: usize,
        beta: usize,
        tau: f64,
        count: usize,
        seed: u64,
    ) -> Rig {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let keys = KeyPair::generate(64, &mut rng).unwrap();
        let packing =
            PackingParams::capacity(keys.public.modulus_bits(), alpha, beta).unwrap();
        let enrolled: Vec<(String, FeatureTemplate)> = (0..count)
            .map(|i| {
                let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (format!("person-{i}"), FeatureTemplate::new(x).unwrap())
            })
            .collect();

        let public = Backend::paillier_public(keys.public.clone(), seed ^ 1);
        let mut db = Database::new(d, alpha, packing);
        db.enroll(&enrolled, &public).unwrap();
        let local = LocalServer::new(
            db,
            public,
            ProtocolParams {
                d,
                alpha,
                beta,
                tau,
            },
        )
        .unwrap();
        let key = KeyServer::new(
            Backend::paillier_seeded(keys, seed ^ 2),
            packing,
            integer_threshold(tau, alpha, beta),
        )
        .unwrap();
        Rig {
            enrolled,
            local,
            key,
        }
    }

    fn noisy(x: &FeatureTemplate, sigma: f64, rng: &mut ChaCha20Rng) -> FeatureTemplate {
        let v: Vec<f64> = x
            .values()
            .iter()
            .map(|&c| c + sigma * rng.gen_range(-1.0..1.0))
            .collect();
        FeatureTemplate::new(v).unwrap()
    }

    #[test]
    fn self_match_accepts_with_full_score() {
        let rig = build_rig(16, 6, 6, 0.5, 5, 1);
        let mut channel = InProcessChannel::new(&rig.key);
        let result = rig
            .local
            .identify(&rig.enrolled[3].1, &mut channel)
            .unwrap();
        // Self-score α = 6, rescaled 1.0 > 0.5.
        assert_eq!(result, MatchResult::Accept("person-3".into()));
    }

    #[test]
    fn unreachable_threshold_rejects_even_exact_matches() {
        // τ = 1.0 → τ_int = α; the best possible score equals α and the
        // comparison is strict.
        let rig = build_rig(16, 6, 6, 1.0, 4, 2);
        let mut channel = InProcessChannel::new(&rig.key);
        for (_, x) in &rig.enrolled {
            assert_eq!(
                rig.local.identify(x, &mut channel).unwrap(),
                MatchResult::Reject
            );
        }
    }

    #[test]
    fn integer_threshold_uses_the_ceiling() {
        assert_eq!(integer_threshold(0.5, 16, 16), 8);
        assert_eq!(integer_threshold(0.5, 341, 63), 74); // √21483 ≈ 146.57
        assert_eq!(integer_threshold(1.0, 6, 6), 6);
        assert_eq!(integer_threshold(0.0, 341, 63), 0);
    }

    #[test]
    fn matches_the_plaintext_reference_under_noise() {
        let rig = build_rig(48, 31, 13, 0.45, 20, 3);
        let mut rng = ChaCha20Rng::seed_from_u64(303);
        let mut channel = InProcessChannel::new(&rig.key);
        let mut accepts = 0;
        for round in 0..60 {
            let query = if round % 3 == 2 {
                // An impostor: fresh random template.
                let v: Vec<f64> = (0..48).map(|_| rng.gen_range(-1.0..1.0)).collect();
                FeatureTemplate::new(v).unwrap()
            } else {
                let (_, x) = &rig.enrolled[rng.gen_range(0..rig.enrolled.len())];
                noisy(x, 0.05, &mut rng)
            };
            let over_protocol = rig.local.identify(&query, &mut channel).unwrap();
            let reference =
                plaintext_reference(&rig.enrolled, &query, 31, 13, 0.45).unwrap();
            assert_eq!(over_protocol, reference);
            if over_protocol.is_accept() {
                accepts += 1;
            }
        }
        // The test is vacuous if everything rejects; genuine noisy queries
        // must mostly clear τ = 0.45.
        assert!(accepts >= 30, "only {accepts}/60 rounds accepted");
    }

    #[test]
    fn key_server_replies_are_only_index_or_reject() {
        let rig = build_rig(24, 9, 9, 0.4, 7, 4);
        let mut channel = InProcessChannel::recording(&rig.key);
        let mut rng = ChaCha20Rng::seed_from_u64(404);
        for _ in 0..10 {
            let q = noisy(&rig.enrolled[rng.gen_range(0..7)].1, 0.1, &mut rng);
            rig.local.identify(&q, &mut channel).unwrap();
        }
        let transcript = channel.transcript().unwrap();
        let from_key: Vec<_> = transcript.frames_from_key().collect();
        assert_eq!(from_key.len(), 10);
        for f in from_key {
            // Type byte 2 (IdxResponse), frame length 14 (reject) or 22.
            assert_eq!(f.bytes[4], 2);
            assert!(f.bytes.len() == 14 || f.bytes.len() == 22);
        }
        // And the local→key direction carries score batches only.
        for f in transcript
            .frames
            .iter()
            .filter(|f| f.direction == Direction::LocalToKey)
        {
            assert_eq!(f.bytes[4], 1);
        }
    }

    #[test]
    fn local_server_refuses_a_decrypting_backend() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let keys = KeyPair::generate(64, &mut rng).unwrap();
        let packing = PackingParams::capacity(64, 4, 4).unwrap();
        let db = Database::new(8, 4, packing);
        let full = Backend::paillier(keys);
        assert!(matches!(
            LocalServer::new(
                db,
                full,
                ProtocolParams {
                    d: 8,
                    alpha: 4,
                    beta: 4,
                    tau: 0.5
                }
            ),
            Err(Error::KeyMismatch(_))
        ));
    }

    #[test]
    fn mismatched_roles_are_rejected_at_construction() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let keys = KeyPair::generate(64, &mut rng).unwrap();
        let packing = PackingParams::capacity(64, 4, 4).unwrap();
        let public = Backend::paillier_public(keys.public.clone(), 0);
        // α disagreement between params and database.
        let db = Database::new(8, 4, packing);
        assert!(matches!(
            LocalServer::new(
                db,
                public,
                ProtocolParams {
                    d: 8,
                    alpha: 5,
                    beta: 4,
                    tau: 0.5
                }
            ),
            Err(Error::ParamMismatch(_))
        ));
        // Key server without a secret key.
        let public2 = Backend::paillier_public(keys.public.clone(), 1);
        assert!(matches!(
            KeyServer::new(public2, packing, 2),
            Err(Error::KeyMismatch(_))
        ));
    }

    #[test]
    fn empty_database_cannot_identify() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let keys = KeyPair::generate(64, &mut rng).unwrap();
        let packing = PackingParams::capacity(64, 4, 4).unwrap();
        let public = Backend::paillier_public(keys.public.clone(), 0);
        let local = LocalServer::new(
            Database::new(8, 4, packing),
            public,
            ProtocolParams {
                d: 8,
                alpha: 4,
                beta: 4,
                tau: 0.5,
            },
        )
        .unwrap();
        let key = KeyServer::new(Backend::paillier(keys), packing, 2).unwrap();
        let mut channel = InProcessChannel::new(&key);
        let y = FeatureTemplate::new(vec![1.0, -1.0, 0.5, -0.5, 0.25, 0.5, 0.75, -0.25])
            .unwrap();
        assert!(matches!(
            local.identify(&y, &mut channel),
            Err(Error::RangeViolation(_))
        ));
    }

    #[test]
    fn padding_positions_never_accept_at_nonnegative_tau() {
        // One enrolled template in a packing with room for many: every other
        // position is padding and decodes to 0. A query anti-correlated with
        // the enrolled template makes the real score negative, so the global
        // argmax lands on a padding position; the final answer must still be
        // a rejection (0 never strictly exceeds τ_int = 0).
        let rig = build_rig(16, 6, 6, 0.0, 1, 8);
        let x = &rig.enrolled[0].1;
        let negated = FeatureTemplate::new(x.values().iter().map(|v| -v).collect()).unwrap();
        let mut channel = InProcessChannel::new(&rig.key);
        assert_eq!(
            rig.local.identify(&negated, &mut channel).unwrap(),
            MatchResult::Reject
        );
    }

    #[test]
    fn tcp_transport_agrees_with_in_process() {
        let rig = build_rig(32, 11, 7, 0.4, 9, 9);
        let mut rng = ChaCha20Rng::seed_from_u64(909);
        let queries: Vec<FeatureTemplate> = (0..12)
            .map(|i| {
                if i % 2 == 0 {
                    noisy(&rig.enrolled[i % 9].1, 0.08, &mut rng)
                } else {
                    let v: Vec<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    FeatureTemplate::new(v).unwrap()
                }
            })
            .collect();

        let mut in_process = Vec::new();
        {
            let mut channel = InProcessChannel::new(&rig.key);
            for q in &queries {
                in_process.push(rig.local.identify(q, &mut channel).unwrap());
            }
        }

        // Key server behind TCP.
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let key = rig.key;
        std::thread::spawn(move || {
            let _ = serve_key(listener, &key);
        });

        let mut channel = TcpChannel::connect(&addr).unwrap();
        for (q, expect) in queries.iter().zip(&in_process) {
            let got = rig.local.identify(q, &mut channel).unwrap();
            assert_eq!(&got, expect);
        }
    }

    #[test]
    fn full_chain_over_two_daemons() {
        let rig = build_rig(16, 6, 5, 0.45, 4, 10);
        let key_listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let key_addr = key_listener.local_addr().unwrap().to_string();
        let key = rig.key;
        std::thread::spawn(move || {
            let _ = serve_key(key_listener, &key);
        });

        let local_listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let local_addr = local_listener.local_addr().unwrap().to_string();
        let local = rig.local;
        std::thread::spawn(move || {
            let _ = serve_local(local_listener, &local, &key_addr);
        });

        // A client that speaks only IdentifyRequest/IdentifyResult.
        let mut stream = TcpStream::connect(&local_addr).unwrap();
        for (i, (id, x)) in rig.enrolled.iter().enumerate() {
            wire::write_message(
                &mut stream,
                &Message::IdentifyRequest {
                    coords: x.values().to_vec(),
                },
            )
            .unwrap();
            match wire::read_message(&mut stream).unwrap() {
                Message::IdentifyResult { identity } => {
                    assert_eq!(identity.as_deref(), Some(id.as_str()), "round {i}");
                }
                other => panic!("unexpected reply {other:?}"),
            }
        }
        // A malformed client frame gets an ErrorReply, not a hangup.
        wire::write_message(&mut stream, &Message::IdxResponse { accept: None }).unwrap();
        assert!(matches!(
            wire::read_message(&mut stream).unwrap(),
            Message::ErrorReply { .. }
        ));
    }
}
