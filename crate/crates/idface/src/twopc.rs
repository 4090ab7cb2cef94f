//! The secret-sharing variant of the pipeline and its μ-party extension:
//! no encryption at all, just XOR shares of the enrolled ternary templates
//! spread across servers that are assumed not to collude.
//!
//! Enrollment splits each template's sign masks into μ uniformly random bit
//! vectors whose XOR is the real mask (the first μ−1 drawn fresh, the last
//! the correction), so any μ−1 shares are information-theoretically
//! independent of the template. A query's sign supports are public to every
//! server: identification asks each peer for its shares restricted to those
//! supports (the *subvector* optimization — β bits instead of d per sign
//! product), XORs them at the initiating server, and reads the score off
//! four Hamming weights:
//!
//! ```text
//! ⟨z, y⟩ = HW(z⁺[y⁺]) + HW(z⁻[y⁻]) − HW(z⁺[y⁻]) − HW(z⁻[y⁺])
//! ```
//!
//! where `z^σ[y^τ]` is the XOR of all parties' `z^σ` shares at the support
//! of `y^τ`. The result equals the plaintext ternary inner product exactly,
//! so thresholding and argmax reuse the protocol module's rules unchanged.
//!
//! One two-party identification moves `2Dβ + 2d` semantic bits: the query's
//! two d-bit masks one way, and per identity four subvectors totalling `2β`
//! bits the other way. The μ-party star topology repeats the exchange with
//! each of the μ−1 peers, so costs scale by `μ−1`; partial results merge at
//! the initiating server only.
//!
//! Bit vectors are packed 64 to a word and Hamming weights are population
//! counts, which is what makes the "bitwise operations are considerably
//! cheaper than homomorphic ones" comparison measurable in the benches.
//!
//! Shares travel over the same framing and transport as the encrypted
//! protocol, with their own message types. The model assumes passive
//! adversaries and non-colluding servers; the uniformity of shares is a
//! property of XOR sharing itself, and the statistical test here is a smoke
//! test, not a proof.

use std::net::{TcpListener, TcpStream};
use std::sync::RwLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::exec;
use crate::protocol::{integer_threshold, KeyChannel, MatchResult};
use crate::transform::{split, ternarize, BinarySplit, FeatureTemplate};
use crate::wire::{self, packed_len, Message};
use crate::{Error, Result};

/// A bit vector packed 64 bits to a word, with word-wise XOR/AND and
/// population-count Hamming weight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitVec {
    bits: usize,
    words: Vec<u64>,
}

impl BitVec {
    /// All-zero vector of `bits` bits.
    pub fn zeros(bits: usize) -> Self {
        Self {
            bits,
            words: vec![0; bits.div_ceil(64)],
        }
    }

    /// Builds from a 0/1 mask slice (as produced by sign splitting).
    pub fn from_mask(mask: &[u8]) -> Self {
        let mut v = Self::zeros(mask.len());
        for (i, &b) in mask.iter().enumerate() {
            if b != 0 {
                v.set(i, true);
            }
        }
        v
    }

    /// Uniformly random vector.
    pub fn random<R: Rng + ?Sized>(bits: usize, rng: &mut R) -> Self {
        let mut v = Self::zeros(bits);
        for w in &mut v.words {
            *w = rng.gen();
        }
        v.mask_tail();
        v
    }

    fn mask_tail(&mut self) {
        let spare = self.words.len() * 64 - self.bits;
        if spare > 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= u64::MAX >> spare;
            }
        }
    }

    /// Number of bits.
    pub fn len(&self) -> usize {
        self.bits
    }

    /// `true` when the vector has zero bits.
    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    /// Bit `i`.
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.bits);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    /// Sets bit `i`.
    pub fn set(&mut self, i: usize, value: bool) {
        debug_assert!(i < self.bits);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    /// Word-wise XOR.
    pub fn xor(&self, other: &Self) -> Result<Self> {
        if self.bits != other.bits {
            return Err(Error::DimensionMismatch {
                expected: self.bits,
                got: other.bits,
            });
        }
        Ok(Self {
            bits: self.bits,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a ^ b)
                .collect(),
        })
    }

    /// In-place XOR.
    pub fn xor_assign(&mut self, other: &Self) -> Result<()> {
        if self.bits != other.bits {
            return Err(Error::DimensionMismatch {
                expected: self.bits,
                got: other.bits,
            });
        }
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
        Ok(())
    }

    /// Word-wise AND.
    pub fn and(&self, other: &Self) -> Result<Self> {
        if self.bits != other.bits {
            return Err(Error::DimensionMismatch {
                expected: self.bits,
                got: other.bits,
            });
        }
        Ok(Self {
            bits: self.bits,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a & b)
                .collect(),
        })
    }

    /// Hamming weight.
    pub fn popcount(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    /// Hamming weight of the bit range `[start, start + len)`.
    pub fn popcount_range(&self, start: usize, len: usize) -> u64 {
        debug_assert!(start + len <= self.bits);
        if len == 0 {
            return 0;
        }
        let end = start + len;
        let mut count = 0u64;
        for w in start / 64..end.div_ceil(64) {
            let mut word = self.words[w];
            let lo = w * 64;
            if start > lo {
                word &= u64::MAX << (start - lo);
            }
            if end < lo + 64 {
                word &= u64::MAX >> (lo + 64 - end);
            }
            count += u64::from(word.count_ones());
        }
        count
    }

    /// Indices of set bits, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.bits).filter(|&i| self.get(i)).collect()
    }

    /// Packs to bytes, least-significant bit first within each byte; pad
    /// bits in the final byte are zero (the canonical wire encoding).
    pub fn to_packed_bytes(&self) -> Vec<u8> {
        let mut out = vec![0u8; packed_len(self.bits)];
        for i in 0..self.bits {
            if self.get(i) {
                out[i / 8] |= 1 << (i % 8);
            }
        }
        out
    }

    /// Parses the packed form, enforcing exact length and zero pad bits.
    pub fn from_packed_bytes(bytes: &[u8], bits: usize) -> Result<Self> {
        let need = packed_len(bits);
        if bytes.len() != need {
            return Err(Error::LengthMismatch(format!(
                "{bits} bits need {need} packed bytes, got {}",
                bytes.len()
            )));
        }
        let spare = need * 8 - bits;
        if spare > 0 && bytes[need - 1] >> (8 - spare) != 0 {
            return Err(Error::MalformedFrame(
                "nonzero pad bits break canonical encoding".into(),
            ));
        }
        let mut v = Self::zeros(bits);
        for (i, &byte) in bytes.iter().enumerate() {
            for b in 0..8 {
                if byte >> b & 1 == 1 {
                    v.set(i * 8 + b, true);
                }
            }
        }
        Ok(v)
    }

    /// Concatenates vectors in order.
    pub fn concat(parts: &[&BitVec]) -> Self {
        let bits = parts.iter().map(|p| p.bits).sum();
        let mut out = Self::zeros(bits);
        let mut off = 0;
        for p in parts {
            for i in 0..p.bits {
                if p.get(i) {
                    out.set(off + i, true);
                }
            }
            off += p.bits;
        }
        out
    }
}

/// One party's pair of sign-mask shares for one identity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharePair {
    /// Share of the positive mask.
    pub plus: BitVec,
    /// Share of the negative mask.
    pub minus: BitVec,
}

/// All μ parties' shares of one template.
#[derive(Debug, Clone)]
pub struct ShareSet {
    /// Per-party share pairs, `parties[k]` for server `k`.
    pub parties: Vec<SharePair>,
}

impl ShareSet {
    /// Number of parties μ.
    pub fn party_count(&self) -> usize {
        self.parties.len()
    }

    /// XOR-reconstructs the two sign masks (test and audit use only — doing
    /// this in production would defeat the sharing).
    pub fn reconstruct(&self) -> Result<(BitVec, BitVec)> {
        let d = self.parties[0].plus.len();
        let mut plus = BitVec::zeros(d);
        let mut minus = BitVec::zeros(d);
        for p in &self.parties {
            plus.xor_assign(&p.plus)?;
            minus.xor_assign(&p.minus)?;
        }
        Ok((plus, minus))
    }
}

/// Splits `T_α(x)` into μ XOR shares: the first μ−1 uniformly random, the
/// last the correction so the XOR over all parties reproduces each sign
/// mask exactly.
pub fn gen_share<R: Rng + ?Sized>(
    x: &FeatureTemplate,
    alpha: usize,
    parties: usize,
    rng: &mut R,
) -> Result<ShareSet> {
    let z = ternarize(x, alpha)?;
    gen_share_split(&split(&z), parties, rng)
}

/// [`gen_share`] for a template that is already ternarized and split.
pub fn gen_share_split<R: Rng + ?Sized>(
    s: &BinarySplit,
    parties: usize,
    rng: &mut R,
) -> Result<ShareSet> {
    if parties < 2 {
        return Err(Error::RangeViolation(format!(
            "secret sharing needs at least 2 parties, got {parties}"
        )));
    }
    let d = s.dim();
    let mut plus_acc = BitVec::from_mask(&s.plus);
    let mut minus_acc = BitVec::from_mask(&s.minus);
    let mut out = Vec::with_capacity(parties);
    for _ in 0..parties - 1 {
        let plus = BitVec::random(d, rng);
        let minus = BitVec::random(d, rng);
        plus_acc.xor_assign(&plus)?;
        minus_acc.xor_assign(&minus)?;
        out.push(SharePair { plus, minus });
    }
    // The final share corrects the XOR back to the real masks.
    out.push(SharePair {
        plus: plus_acc,
        minus: minus_acc,
    });
    Ok(ShareSet { parties: out })
}

/// Bits of `share` at the set positions of `mask`, ascending.
pub fn subvector(share: &BitVec, mask: &BitVec) -> Result<BitVec> {
    if share.len() != mask.len() {
        return Err(Error::DimensionMismatch {
            expected: mask.len(),
            got: share.len(),
        });
    }
    subvector_at(share, &mask.support())
}

/// [`subvector`] with the mask's support precomputed.
pub fn subvector_at(share: &BitVec, support: &[usize]) -> Result<BitVec> {
    let mut out = BitVec::zeros(support.len());
    for (j, &i) in support.iter().enumerate() {
        if i >= share.len() {
            return Err(Error::DimensionMismatch {
                expected: share.len(),
                got: i + 1,
            });
        }
        if share.get(i) {
            out.set(j, true);
        }
    }
    Ok(out)
}

/// Scores one identity from all parties' shares against a split query, via
/// the subvector path. Equals `⟨T_α(x), T_β(y)⟩` exactly.
pub fn score_shares(parties: &[SharePair], query: &BinarySplit) -> Result<i64> {
    if parties.len() < 2 {
        return Err(Error::RangeViolation(
            "scoring needs the shares of at least 2 parties".into(),
        ));
    }
    let sp = BitVec::from_mask(&query.plus).support();
    let sm = BitVec::from_mask(&query.minus).support();
    let (k_plus, k_minus) = (sp.len(), sm.len());
    let mut acc = BitVec::zeros(2 * (k_plus + k_minus));
    for p in parties {
        acc.xor_assign(&share_row(p, &sp, &sm)?)?;
    }
    Ok(row_score(&acc, k_plus, k_minus))
}

/// One party's packed subvector row for a query:
/// `z⁺[y⁺] ‖ z⁻[y⁻] ‖ z⁺[y⁻] ‖ z⁻[y⁺]`, `2(k⁺ + k⁻)` bits.
fn share_row(share: &SharePair, sp: &[usize], sm: &[usize]) -> Result<BitVec> {
    Ok(BitVec::concat(&[
        &subvector_at(&share.plus, sp)?,
        &subvector_at(&share.minus, sm)?,
        &subvector_at(&share.plus, sm)?,
        &subvector_at(&share.minus, sp)?,
    ]))
}

/// Reads the score off a fully XOR-merged row.
fn row_score(acc: &BitVec, k_plus: usize, k_minus: usize) -> i64 {
    let a = acc.popcount_range(0, k_plus); // ⟨z⁺, y⁺⟩
    let b = acc.popcount_range(k_plus, k_minus); // ⟨z⁻, y⁻⟩
    let c = acc.popcount_range(k_plus + k_minus, k_minus); // ⟨z⁺, y⁻⟩
    let d = acc.popcount_range(k_plus + 2 * k_minus, k_plus); // ⟨z⁻, y⁺⟩
    a as i64 + b as i64 - c as i64 - d as i64
}

/// One server's share database: its shares of every enrolled identity.
#[derive(Debug, Clone)]
pub struct PartyDb {
    /// Template dimension.
    pub d: usize,
    /// Enrollment sparsity α.
    pub alpha: usize,
    /// Total party count μ.
    pub parties: usize,
    /// This server's index in `0..parties`.
    pub party_index: usize,
    /// Identity labels in enrollment order.
    pub ids: Vec<String>,
    /// This server's share pair per identity, same order as `ids`.
    pub shares: Vec<SharePair>,
}

impl PartyDb {
    /// Empty database for one party.
    pub fn new(d: usize, alpha: usize, parties: usize, party_index: usize) -> Result<Self> {
        if parties < 2 {
            return Err(Error::RangeViolation(format!(
                "secret sharing needs at least 2 parties, got {parties}"
            )));
        }
        if party_index >= parties {
            return Err(Error::RangeViolation(format!(
                "party index {party_index} out of range for {parties} parties"
            )));
        }
        Ok(Self {
            d,
            alpha,
            parties,
            party_index,
            ids: Vec::new(),
            shares: Vec::new(),
        })
    }

    /// Enrolled identity count.
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    /// `true` when nothing is enrolled.
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Appends one identity's share pair.
    pub fn enroll_one(&mut self, id: &str, share: SharePair) -> Result<()> {
        if self.ids.iter().any(|existing| existing == id) {
            return Err(Error::DuplicateId(id.to_string()));
        }
        if share.plus.len() != self.d || share.minus.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: share.plus.len(),
            });
        }
        self.ids.push(id.to_string());
        self.shares.push(share);
        Ok(())
    }
}

/// Deals fresh shares of every template to μ parties.
pub fn enroll_shared<R: Rng + ?Sized>(
    templates: &[(String, FeatureTemplate)],
    d: usize,
    alpha: usize,
    parties: usize,
    rng: &mut R,
) -> Result<Vec<PartyDb>> {
    let mut dbs = (0..parties)
        .map(|k| PartyDb::new(d, alpha, parties, k))
        .collect::<Result<Vec<_>>>()?;
    for (id, x) in templates {
        if x.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.dim(),
            });
        }
        let set = gen_share(x, alpha, parties, rng)?;
        for (db, share) in dbs.iter_mut().zip(set.parties) {
            db.enroll_one(id, share)?;
        }
    }
    Ok(dbs)
}

/// Semantic payload bits of a share-protocol message: the quantity the
/// published communication costs count (mask and subvector bits; framing,
/// padding, and counts excluded).
pub fn semantic_bits(msg: &Message) -> u64 {
    match msg {
        Message::QueryShare { d, .. } => 2 * u64::from(*d),
        Message::SharePartials {
            k_plus,
            k_minus,
            rows,
        } => rows.len() as u64 * 2 * (u64::from(*k_plus) + u64::from(*k_minus)),
        Message::EnrollBroadcast { d, .. } => 2 * u64::from(*d),
        _ => 0,
    }
}

/// Measured communication of one shared identification.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TwopcComm {
    /// Query mask bits sent to peers (`2d` per peer).
    pub query_bits: u64,
    /// Subvector bits received from peers (`2Dβ` per peer).
    pub partial_bits: u64,
}

impl TwopcComm {
    /// Total semantic bits moved.
    pub fn total_bits(&self) -> u64 {
        self.query_bits + self.partial_bits
    }
}

/// Answers one query message from this party's share database. The reply to
/// a `QueryShare` is a `SharePartials`; anything else is an error reply
/// (in-process peers are enrolled directly, not via broadcast).
pub fn peer_answer_query(db: &PartyDb, request: &Message) -> Message {
    match request {
        Message::QueryShare { d, plus, minus } => {
            match answer_share_partials(db, *d as usize, plus, minus) {
                Ok(m) => m,
                Err(e) => Message::ErrorReply {
                    message: e.to_string(),
                },
            }
        }
        other => Message::ErrorReply {
            message: format!("unexpected message type {}", other.type_byte()),
        },
    }
}

fn answer_share_partials(
    db: &PartyDb,
    d: usize,
    plus: &[u8],
    minus: &[u8],
) -> Result<Message> {
    if d != db.d {
        return Err(Error::DimensionMismatch {
            expected: db.d,
            got: d,
        });
    }
    let sp = BitVec::from_packed_bytes(plus, d)?.support();
    let sm = BitVec::from_packed_bytes(minus, d)?.support();
    let rows = exec::try_map_indexed(db.shares.len(), |i| {
        Ok(share_row(&db.shares[i], &sp, &sm)?.to_packed_bytes())
    })?;
    Ok(Message::SharePartials {
        k_plus: sp.len() as u32,
        k_minus: sm.len() as u32,
        rows,
    })
}

/// In-process peer channel: answers from a borrowed share database, routing
/// every message through the byte codec like the real transport.
pub struct InProcessPeer<'a> {
    db: &'a PartyDb,
}

impl<'a> InProcessPeer<'a> {
    /// Peer over a borrowed database.
    pub fn new(db: &'a PartyDb) -> Self {
        Self { db }
    }
}

impl KeyChannel for InProcessPeer<'_> {
    fn exchange(&mut self, request: &Message) -> Result<Message> {
        let bytes = wire::wire_encode(request);
        let (decoded, _) = wire::wire_decode(&bytes)?;
        let reply = peer_answer_query(self.db, &decoded);
        let bytes = wire::wire_encode(&reply);
        let (reply, _) = wire::wire_decode(&bytes)?;
        Ok(reply)
    }
}

/// Runs one μ-party identification from the initiating server `own`,
/// querying each peer channel in turn (star topology; peer `k` must hold
/// party `own.party_index`-distinct shares of the same identities in the
/// same order). Returns the match decision and the semantic bits moved.
pub fn identify_with_peers<C: KeyChannel>(
    own: &PartyDb,
    query: &FeatureTemplate,
    beta: usize,
    tau: f64,
    peers: &mut [C],
) -> Result<(MatchResult, TwopcComm)> {
    if peers.len() != own.parties - 1 {
        return Err(Error::ParamMismatch(format!(
            "{} parties need {} peers, got {}",
            own.parties,
            own.parties - 1,
            peers.len()
        )));
    }
    if query.dim() != own.d {
        return Err(Error::DimensionMismatch {
            expected: own.d,
            got: query.dim(),
        });
    }
    if own.is_empty() {
        return Err(Error::RangeViolation(
            "cannot identify against an empty share database".into(),
        ));
    }
    let s = split(&ternarize(query, beta)?);
    let plus_mask = BitVec::from_mask(&s.plus);
    let minus_mask = BitVec::from_mask(&s.minus);
    let (sp, sm) = (plus_mask.support(), minus_mask.support());
    let (k_plus, k_minus) = (sp.len(), sm.len());
    let row_bits = 2 * (k_plus + k_minus);

    // Own rows first, then XOR in each peer's.
    let mut acc: Vec<BitVec> =
        exec::try_map_indexed(own.shares.len(), |i| share_row(&own.shares[i], &sp, &sm))?;
    let mut comm = TwopcComm::default();
    let request = Message::QueryShare {
        d: own.d as u32,
        plus: plus_mask.to_packed_bytes(),
        minus: minus_mask.to_packed_bytes(),
    };
    for peer in peers.iter_mut() {
        comm.query_bits += semantic_bits(&request);
        let reply = peer.exchange(&request)?;
        match reply {
            Message::SharePartials {
                k_plus: kp,
                k_minus: km,
                rows,
            } => {
                if kp as usize != k_plus || km as usize != k_minus {
                    return Err(Error::ParamMismatch(format!(
                        "peer reports supports ({kp}, {km}), expected ({k_plus}, {k_minus})"
                    )));
                }
                if rows.len() != acc.len() {
                    return Err(Error::LengthMismatch(format!(
                        "peer holds {} identities, initiator holds {}",
                        rows.len(),
                        acc.len()
                    )));
                }
                comm.partial_bits += semantic_bits(&Message::SharePartials {
                    k_plus: kp,
                    k_minus: km,
                    rows: rows.clone(),
                });
                for (a, row) in acc.iter_mut().zip(&rows) {
                    a.xor_assign(&BitVec::from_packed_bytes(row, row_bits)?)?;
                }
            }
            Message::ErrorReply { message } => {
                return Err(Error::TransportFailure(format!(
                    "peer reported: {message}"
                )))
            }
            other => {
                return Err(Error::TransportFailure(format!(
                    "unexpected reply type {}",
                    other.type_byte()
                )))
            }
        }
    }

    // Same argmax and strict threshold as the encrypted protocol.
    let tau_int = integer_threshold(tau, own.alpha, beta);
    let mut best: Option<(usize, i64)> = None;
    for (i, a) in acc.iter().enumerate() {
        let score = row_score(a, k_plus, k_minus);
        if best.map_or(true, |(_, bs)| score > bs) {
            best = Some((i, score));
        }
    }
    let result = match best {
        Some((i, score)) if score > tau_int => MatchResult::Accept(own.ids[i].clone()),
        _ => MatchResult::Reject,
    };
    Ok((result, comm))
}

/// [`identify_with_peers`] with every party in one process.
pub fn identify_shared(
    dbs: &[PartyDb],
    query: &FeatureTemplate,
    beta: usize,
    tau: f64,
) -> Result<(MatchResult, TwopcComm)> {
    let (own, rest) = dbs.split_first().ok_or_else(|| {
        Error::RangeViolation("at least two share databases required".into())
    })?;
    let mut peers: Vec<InProcessPeer> = rest.iter().map(InProcessPeer::new).collect();
    identify_with_peers(own, query, beta, tau, &mut peers)
}

/// Serves one share party on a listener: answers `QueryShare` requests and
/// accepts `EnrollBroadcast`s (acknowledged with an empty `IdxResponse`).
/// Runs until the listener fails.
pub fn serve_party(listener: TcpListener, db: &RwLock<PartyDb>) -> Result<()> {
    for stream in listener.incoming() {
        let stream = stream.map_err(|e| Error::TransportFailure(format!("accept: {e}")))?;
        if let Err(e) = handle_party_connection(stream, db) {
            eprintln!("share server: connection ended with error: {e}");
        }
    }
    Ok(())
}

/// Answers frames on one share-party connection until EOF.
pub fn handle_party_connection(mut stream: TcpStream, db: &RwLock<PartyDb>) -> Result<()> {
    use std::io::Write;
    loop {
        let frame = match wire::read_frame(&mut stream) {
            Ok(f) => f,
            Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(()),
            Err(e) => return Err(e),
        };
        let reply = match wire::wire_decode(&frame) {
            Ok((Message::EnrollBroadcast { id, d, plus, minus }, _)) => {
                let enroll = || -> Result<()> {
                    let mut guard = db
                        .write()
                        .map_err(|_| Error::TransportFailure("lock poisoned".into()))?;
                    if d as usize != guard.d {
                        return Err(Error::DimensionMismatch {
                            expected: guard.d,
                            got: d as usize,
                        });
                    }
                    let share = SharePair {
                        plus: BitVec::from_packed_bytes(&plus, d as usize)?,
                        minus: BitVec::from_packed_bytes(&minus, d as usize)?,
                    };
                    guard.enroll_one(&id, share)
                };
                match enroll() {
                    // Acknowledged with an empty index response.
                    Ok(()) => Message::IdxResponse { accept: None },
                    Err(e) => Message::ErrorReply {
                        message: e.to_string(),
                    },
                }
            }
            Ok((msg, _)) => {
                let guard = db
                    .read()
                    .map_err(|_| Error::TransportFailure("lock poisoned".into()))?;
                peer_answer_query(&guard, &msg)
            }
            Err(e) => Message::ErrorReply {
                message: e.to_string(),
            },
        };
        stream.write_all(&wire::wire_encode(&reply))?;
        stream.flush()?;
    }
}

/// Persisted form of a [`PartyDb`] (hex-packed bit vectors in a JSON
/// document; shares are short, so readability wins over compactness).
#[derive(Serialize, Deserialize)]
struct PartyDbFile {
    format: u32,
    d: usize,
    alpha: usize,
    parties: usize,
    party_index: usize,
    ids: Vec<String>,
    plus_hex: Vec<String>,
    minus_hex: Vec<String>,
}

const PARTY_DB_FORMAT: u32 = 1;

/// Saves a party's share database to one JSON file.
pub fn save_party_db(path: &std::path::Path, db: &PartyDb) -> Result<()> {
    let file = PartyDbFile {
        format: PARTY_DB_FORMAT,
        d: db.d,
        alpha: db.alpha,
        parties: db.parties,
        party_index: db.party_index,
        ids: db.ids.clone(),
        plus_hex: db
            .shares
            .iter()
            .map(|s| hex::encode(s.plus.to_packed_bytes()))
            .collect(),
        minus_hex: db
            .shares
            .iter()
            .map(|s| hex::encode(s.minus.to_packed_bytes()))
            .collect(),
    };
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Persistence(format!("share db serialization: {e}")))?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Loads a party's share database.
pub fn load_party_db(path: &std::path::Path) -> Result<PartyDb> {
    let file: PartyDbFile = serde_json::from_str(&std::fs::read_to_string(path)?)
        .map_err(|e| Error::Persistence(format!("share db parse: {e}")))?;
    if file.format != PARTY_DB_FORMAT {
        return Err(Error::Persistence(format!(
            "unsupported share db format {}",
            file.format
        )));
    }
    if file.plus_hex.len() != file.ids.len() || file.minus_hex.len() != file.ids.len() {
        return Err(Error::Persistence(
            "share table lengths disagree with the id list".into(),
        ));
    }
    let mut db = PartyDb::new(file.d, file.alpha, file.parties, file.party_index)?;
    for (id, (p, m)) in file
        .ids
        .iter()
        .zip(file.plus_hex.iter().zip(&file.minus_hex))
    {
        let plus = BitVec::from_packed_bytes(
            &hex::decode(p).map_err(|e| Error::Persistence(format!("share hex: {e}")))?,
            file.d,
        )?;
        let minus = BitVec::from_packed_bytes(
            &hex::decode(m).map_err(|e| Error::Persistence(format!("share hex: {e}")))?,
            file.d,
        )?;
        db.enroll_one(id, SharePair { plus, minus })?;
    }
    Ok(db)
}
