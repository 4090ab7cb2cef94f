//! Additively homomorphic encryption backends.
//!
//! The scoring pipeline needs exactly four operations — encrypt, decrypt,
//! ciphertext addition, and plaintext-scalar multiplication — plus honest
//! accounting of how often each ran. Two backends provide them:
//!
//! * [`paillier`] — a real Paillier cryptosystem: one big-integer slot per
//!   ciphertext, randomized encryption, additively homomorphic modulo `n`.
//! * [`mock`] — an **insecure** plaintext stand-in shaped like a SIMD
//!   lattice scheme (4096 slots of 50 bits, 132 KiB ciphertexts). It exists
//!   so slot-capacity and cost accounting can be exercised at SIMD shapes
//!   without a lattice library, and it refuses to construct unless the caller
//!   passes the literal mode string `"insecure-mock"`.
//!
//! [`Backend`] is the closed sum of both, so pipeline code is generic without
//! trait objects, and every ciphertext carries a key fingerprint so mixing
//! keys fails loudly instead of decrypting garbage.

pub mod mock;
pub mod paillier;

use std::sync::atomic::{AtomicU64, Ordering};

use num_bigint::BigUint;

use crate::{Error, Result};

/// Shape and cost card of a backend, used by capacity planning and the
/// storage/communication accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackendDescriptor {
    /// Stable backend name (`"paillier"` or `"simd-mock"`).
    pub name: &'static str,
    /// Independent plaintext slots per ciphertext (`N_s`).
    pub slot_count: usize,
    /// Usable bits per slot.
    pub slot_bits: u32,
    /// Bytes one serialized ciphertext occupies in fixed-width storage.
    pub ciphertext_bytes: usize,
}

/// A ciphertext from one of the two backends.
///
/// Both variants carry a key fingerprint; operations on ciphertexts from
/// different keys (or different mock instances) fail with
/// [`Error::KeyMismatch`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ciphertext {
    /// One Paillier value per logical slot, each in `[0, n²)`.
    Paillier {
        /// Per-slot Paillier ciphertext values.
        values: Vec<BigUint>,
        /// Fingerprint of the public key that produced the values.
        key_id: u64,
    },
    /// Mock SIMD ciphertext: plaintext slots plus a freshness nonce.
    SimdMock {
        /// Plaintext slot values (the mock hides nothing).
        slots: Vec<u64>,
        /// Random nonce making equal plaintexts encrypt differently.
        nonce: u64,
        /// Instance fingerprint standing in for a key.
        key_id: u64,
    },
}

/// Running operation counts for one backend instance.
///
/// `additions` counts every ciphertext addition including the two that merge
/// the four sign-combination partial sums of a batch score;
/// `combine_additions` counts just those merge additions, so the raw
/// fold-only count is `additions − combine_additions`. `rotations` exists
/// because SIMD accounting tables have a rotation column: no operation here
/// rotates slots, so it stays 0 by construction.
#[derive(Debug, Default)]
pub struct OpCounters {
    additions: AtomicU64,
    combine_additions: AtomicU64,
    scalar_multiplications: AtomicU64,
    encryptions: AtomicU64,
    decryptions: AtomicU64,
    rotations: AtomicU64,
}

/// Point-in-time copy of [`OpCounters`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpCounts {
    /// Total ciphertext additions (folds + combines).
    pub additions: u64,
    /// Additions that merged sign-combination partial sums.
    pub combine_additions: u64,
    /// Plaintext-scalar multiplications.
    pub scalar_multiplications: u64,
    /// Encryptions performed.
    pub encryptions: u64,
    /// Decryptions performed.
    pub decryptions: u64,
    /// Slot rotations (no such operation exists; always 0).
    pub rotations: u64,
}

impl OpCounters {
    fn bump(counter: &AtomicU64) {
        counter.fetch_add(1, Ordering::Relaxed);
    }

    /// Records additions that merge partial sums (already counted in
    /// `additions`) so raw and combined totals are separable.
    pub fn note_combine(&self, count: u64) {
        self.combine_additions.fetch_add(count, Ordering::Relaxed);
    }

    /// Copies the current counts.
    pub fn snapshot(&self) -> OpCounts {
        OpCounts {
            additions: self.additions.load(Ordering::Relaxed),
            combine_additions: self.combine_additions.load(Ordering::Relaxed),
            scalar_multiplications: self.scalar_multiplications.load(Ordering::Relaxed),
            encryptions: self.encryptions.load(Ordering::Relaxed),
            decryptions: self.decryptions.load(Ordering::Relaxed),
            rotations: self.rotations.load(Ordering::Relaxed),
        }
    }

    /// Zeroes all counts.
    pub fn reset(&self) {
        for c in [
            &self.additions,
            &self.combine_additions,
            &self.scalar_multiplications,
            &self.encryptions,
            &self.decryptions,
            &self.rotations,
        ] {
            c.store(0, Ordering::Relaxed);
        }
    }
}

impl OpCounts {
    /// Additions excluding the sign-combination merges.
    pub fn raw_additions(&self) -> u64 {
        self.additions - self.combine_additions
    }

    /// Difference against an earlier snapshot.
    pub fn since(&self, earlier: &OpCounts) -> OpCounts {
        OpCounts {
            additions: self.additions - earlier.additions,
            combine_additions: self.combine_additions - earlier.combine_additions,
            scalar_multiplications: self.scalar_multiplications - earlier.scalar_multiplications,
            encryptions: self.encryptions - earlier.encryptions,
            decryptions: self.decryptions - earlier.decryptions,
            rotations: self.rotations - earlier.rotations,
        }
    }
}

/// An additively homomorphic backend: Paillier or the insecure SIMD mock.
#[derive(Debug)]
pub enum Backend {
    /// Real Paillier backend.
    Paillier(paillier::PaillierBackend),
    /// Insecure plaintext mock with SIMD shape.
    SimdMock(mock::SimdMockBackend),
}

impl Backend {
    /// Paillier backend holding both keys, with entropy-seeded encryption
    /// randomness.
    pub fn paillier(keys: paillier::KeyPair) -> Self {
        Backend::Paillier(paillier::PaillierBackend::new(keys))
    }

    /// Paillier backend with deterministic encryption randomness (for
    /// reproducible runs; ciphertext *values* depend on the seed, decrypted
    /// results never do).
    pub fn paillier_seeded(keys: paillier::KeyPair, seed: u64) -> Self {
        Backend::Paillier(paillier::PaillierBackend::new_seeded(keys, seed))
    }

    /// Public-half Paillier backend: can encrypt and operate on ciphertexts
    /// but every decryption fails with [`Error::KeyMismatch`]. This is the
    /// backend the ciphertext-holding server runs.
    pub fn paillier_public(public: paillier::PublicKey, seed: u64) -> Self {
        Backend::Paillier(paillier::PaillierBackend::public_only(public, seed))
    }

    /// Insecure SIMD mock; `mode` must be the literal `"insecure-mock"`.
    pub fn simd_mock(mode: &str, seed: u64) -> Result<Self> {
        Ok(Backend::SimdMock(mock::SimdMockBackend::new(mode, seed)?))
    }

    /// Shape and cost card.
    pub fn descriptor(&self) -> BackendDescriptor {
        match self {
            Backend::Paillier(b) => b.descriptor(),
            Backend::SimdMock(b) => b.descriptor(),
        }
    }

    /// Operation counters of this instance.
    pub fn counters(&self) -> &OpCounters {
        match self {
            Backend::Paillier(b) => b.counters(),
            Backend::SimdMock(b) => b.counters(),
        }
    }

    /// Encrypts one value per slot (`slots.len() ≤ slot_count`; missing
    /// trailing slots encrypt as zero).
    pub fn encrypt(&self, slots: &[BigUint]) -> Result<Ciphertext> {
        match self {
            Backend::Paillier(b) => b.encrypt(slots),
            Backend::SimdMock(b) => b.encrypt(slots),
        }
    }

    /// Encrypts an all-zero plaintext (used when a query sign support is
    /// empty and a fresh encryption of zero stands in for an empty sum).
    pub fn encrypt_zero(&self) -> Result<Ciphertext> {
        self.encrypt(&[])
    }

    /// Decrypts all slots.
    pub fn decrypt(&self, ct: &Ciphertext) -> Result<Vec<BigUint>> {
        match self {
            Backend::Paillier(b) => b.decrypt(ct),
            Backend::SimdMock(b) => b.decrypt(ct),
        }
    }

    /// Homomorphic addition (slot-wise).
    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        match self {
            Backend::Paillier(p) => p.add(a, b),
            Backend::SimdMock(m) => m.add(a, b),
        }
    }

    /// Homomorphic multiplication by a nonnegative plaintext scalar
    /// (broadcast over slots).
    pub fn scalar_mul(&self, k: &BigUint, ct: &Ciphertext) -> Result<Ciphertext> {
        match self {
            Backend::Paillier(p) => p.scalar_mul(k, ct),
            Backend::SimdMock(m) => m.scalar_mul(k, ct),
        }
    }

    /// `true` when this instance can decrypt.
    pub fn can_decrypt(&self) -> bool {
        match self {
            Backend::Paillier(b) => b.can_decrypt(),
            Backend::SimdMock(_) => true,
        }
    }

    /// Serializes a ciphertext in the wire form: per slot value, a 4-byte
    /// big-endian length followed by minimal big-endian magnitude bytes.
    pub fn ciphertext_to_wire(&self, ct: &Ciphertext) -> Result<Vec<u8>> {
        let values = self.ciphertext_values(ct)?;
        let mut out = Vec::new();
        for v in values {
            let bytes = v.to_bytes_be();
            let bytes = if v == BigUint::default() { Vec::new() } else { bytes };
            out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
            out.extend_from_slice(&bytes);
        }
        Ok(out)
    }

    /// Parses the wire form produced by [`Self::ciphertext_to_wire`].
    pub fn ciphertext_from_wire(&self, bytes: &[u8]) -> Result<(Ciphertext, usize)> {
        let slot_count = self.descriptor().slot_count;
        let mut values = Vec::with_capacity(slot_count);
        let mut off = 0usize;
        for _ in 0..slot_count {
            if bytes.len() < off + 4 {
                return Err(Error::MalformedFrame(
                    "ciphertext truncated before length prefix".into(),
                ));
            }
            let len = u32::from_be_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
            off += 4;
            if bytes.len() < off + len {
                return Err(Error::LengthMismatch(format!(
                    "ciphertext declares {len} bytes, {} remain",
                    bytes.len() - off
                )));
            }
            values.push(BigUint::from_bytes_be(&bytes[off..off + len]));
            off += len;
        }
        let ct = self.ciphertext_from_values(values)?;
        Ok((ct, off))
    }

    /// Serializes a ciphertext as a fixed-width storage record: a 4-byte
    /// big-endian length (always `ciphertext_bytes`) followed by each slot
    /// value zero-padded big-endian to `ciphertext_bytes / slot_count`.
    /// Fixed widths make database files byte-predictable.
    pub fn ciphertext_to_record(&self, ct: &Ciphertext) -> Result<Vec<u8>> {
        let desc = self.descriptor();
        let per_value = desc.ciphertext_bytes / desc.slot_count;
        let values = self.ciphertext_values(ct)?;
        let mut out = Vec::with_capacity(4 + desc.ciphertext_bytes);
        out.extend_from_slice(&(desc.ciphertext_bytes as u32).to_be_bytes());
        for v in values {
            let bytes = v.to_bytes_be();
            if bytes.len() > per_value {
                return Err(Error::Overflow(format!(
                    "ciphertext value needs {} bytes, record width is {per_value}",
                    bytes.len()
                )));
            }
            out.resize(out.len() + per_value - bytes.len(), 0);
            out.extend_from_slice(&bytes);
        }
        Ok(out)
    }

    /// Parses one fixed-width storage record.
    pub fn ciphertext_from_record(&self, bytes: &[u8]) -> Result<(Ciphertext, usize)> {
        let desc = self.descriptor();
        let per_value = desc.ciphertext_bytes / desc.slot_count;
        if bytes.len() < 4 {
            return Err(Error::MalformedFrame("record truncated".into()));
        }
        let len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
        if len != desc.ciphertext_bytes {
            return Err(Error::LengthMismatch(format!(
                "record declares {len} bytes, descriptor says {}",
                desc.ciphertext_bytes
            )));
        }
        if bytes.len() < 4 + len {
            return Err(Error::MalformedFrame("record payload truncated".into()));
        }
        let mut values = Vec::with_capacity(desc.slot_count);
        for s in 0..desc.slot_count {
            let start = 4 + s * per_value;
            values.push(BigUint::from_bytes_be(&bytes[start..start + per_value]));
        }
        let ct = self.ciphertext_from_values(values)?;
        Ok((ct, 4 + len))
    }

    fn ciphertext_values(&self, ct: &Ciphertext) -> Result<Vec<BigUint>> {
        match (self, ct) {
            (Backend::Paillier(b), Ciphertext::Paillier { values, key_id }) => {
                b.check_key(*key_id)?;
                Ok(values.clone())
            }
            (Backend::SimdMock(b), Ciphertext::SimdMock { slots, key_id, .. }) => {
                b.check_key(*key_id)?;
                // The freshness nonce is metadata, not content; serialized
                // forms carry the slots only and parsing draws a new nonce.
                Ok(slots.iter().map(|&s| BigUint::from(s)).collect())
            }
            _ => Err(Error::KeyMismatch(
                "ciphertext does not belong to this backend".into(),
            )),
        }
    }

    fn ciphertext_from_values(&self, values: Vec<BigUint>) -> Result<Ciphertext> {
        match self {
            Backend::Paillier(b) => b.ciphertext_from_values(values),
            Backend::SimdMock(b) => b.ciphertext_from_values(values),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn small_backend(seed: u64) -> Backend {
        let mut rng = ChaCha20Rng::seed_from_u64(9000 + seed);
        let keys = paillier::KeyPair::generate(128, &mut rng).unwrap();
        Backend::paillier_seeded(keys, seed)
    }

    #[test]
    fn counters_track_and_reset() {
        let b = small_backend(1);
        let one = BigUint::from(1u32);
        let c1 = b.encrypt(&[one.clone()]).unwrap();
        let c2 = b.encrypt(&[one.clone()]).unwrap();
        let sum = b.add(&c1, &c2).unwrap();
        let _ = b.scalar_mul(&BigUint::from(3u32), &sum).unwrap();
        let _ = b.decrypt(&sum).unwrap();
        let snap = b.counters().snapshot();
        assert_eq!(snap.encryptions, 2);
        assert_eq!(snap.additions, 1);
        assert_eq!(snap.scalar_multiplications, 1);
        assert_eq!(snap.decryptions, 1);
        assert_eq!(snap.rotations, 0);
        assert_eq!(snap.raw_additions(), 1);
        b.counters().reset();
        assert_eq!(b.counters().snapshot(), OpCounts::default());
    }

    #[test]
    fn wire_and_record_forms_round_trip() {
        let b = small_backend(2);
        let ct = b.encrypt(&[BigUint::from(12345u32)]).unwrap();

        let wire = b.ciphertext_to_wire(&ct).unwrap();
        let (back, used) = b.ciphertext_from_wire(&wire).unwrap();
        assert_eq!(used, wire.len());
        assert_eq!(b.decrypt(&back).unwrap(), b.decrypt(&ct).unwrap());

        let rec = b.ciphertext_to_record(&ct).unwrap();
        assert_eq!(rec.len(), 4 + b.descriptor().ciphertext_bytes);
        let (back, used) = b.ciphertext_from_record(&rec).unwrap();
        assert_eq!(used, rec.len());
        assert_eq!(b.decrypt(&back).unwrap(), b.decrypt(&ct).unwrap());
    }

    #[test]
    fn cross_backend_ciphertexts_are_rejected() {
        let b1 = small_backend(3);
        let b2 = small_backend(4);
        let ct = b1.encrypt(&[BigUint::from(7u32)]).unwrap();
        assert!(matches!(
            b2.add(&ct, &ct),
            Err(Error::KeyMismatch(_))
        ));
        let mock = Backend::simd_mock("insecure-mock", 5).unwrap();
        assert!(matches!(
            mock.add(&ct, &ct),
            Err(Error::KeyMismatch(_))
        ));
    }
}
