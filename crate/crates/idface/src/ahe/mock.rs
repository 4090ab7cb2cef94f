//! Insecure plaintext mock of a SIMD homomorphic scheme.
//!
//! Lattice SIMD schemes batch thousands of messages per ciphertext, and the
//! capacity/cost arithmetic of this crate depends only on that shape: 4096
//! slots, 50 usable bits per slot, 132 KiB per serialized ciphertext. The
//! mock reproduces the shape with plaintext arithmetic so the packing,
//! database, and accounting layers can be exercised at SIMD scale without a
//! lattice library.
//!
//! **There is no security here.** "Ciphertexts" store their slots in the
//! clear plus a nonce so equal plaintexts still compare unequal. The
//! constructor refuses to build the backend unless the caller passes the
//! literal mode string [`INSECURE_MODE`], so the mock cannot be reached
//! through configuration accidents.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{BackendDescriptor, Ciphertext, OpCounters};
use crate::{Error, Result};

/// The only mode string the constructor accepts.
pub const INSECURE_MODE: &str = "insecure-mock";

/// SIMD slots per ciphertext.
pub const MOCK_SLOT_COUNT: usize = 4096;
/// Usable plaintext bits per slot.
pub const MOCK_SLOT_BITS: u32 = 50;
/// Fixed serialized ciphertext size: 4096 slots × 33 bytes.
pub const MOCK_CIPHERTEXT_BYTES: usize = 135_168;

/// Largest value a slot may hold (exclusive).
const SLOT_LIMIT: u64 = 1 << MOCK_SLOT_BITS;

static INSTANCE_COUNTER: AtomicU64 = AtomicU64::new(1);

/// The mock backend instance.
#[derive(Debug)]
pub struct SimdMockBackend {
    instance_id: u64,
    rng: Mutex<ChaCha20Rng>,
    counters: OpCounters,
}

impl SimdMockBackend {
    /// Builds the mock. `mode` must equal [`INSECURE_MODE`]; anything else is
    /// refused so no configuration path can select the mock by accident.
    pub fn new(mode: &str, seed: u64) -> Result<Self> {
        if mode != INSECURE_MODE {
            return Err(Error::InsecureBackendRefused(format!(
                "the SIMD mock stores plaintext; pass mode \"{INSECURE_MODE}\" \
                 to acknowledge that (got \"{mode}\")"
            )));
        }
        Ok(Self {
            instance_id: INSTANCE_COUNTER.fetch_add(1, Ordering::Relaxed),
            rng: Mutex::new(ChaCha20Rng::seed_from_u64(seed)),
            counters: OpCounters::default(),
        })
    }

    /// Shape card matching a production SIMD parameter set.
    pub fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            name: "simd-mock",
            slot_count: MOCK_SLOT_COUNT,
            slot_bits: MOCK_SLOT_BITS,
            ciphertext_bytes: MOCK_CIPHERTEXT_BYTES,
        }
    }

    /// Operation counters.
    pub fn counters(&self) -> &OpCounters {
        &self.counters
    }

    pub(super) fn check_key(&self, key_id: u64) -> Result<()> {
        if key_id != self.instance_id {
            return Err(Error::KeyMismatch(
                "ciphertext belongs to a different mock instance".into(),
            ));
        }
        Ok(())
    }

    fn slot_value(v: &BigUint) -> Result<u64> {
        v.to_u64().filter(|&v| v < SLOT_LIMIT).ok_or_else(|| {
            Error::SlotOverflow(format!(
                "value of {} bits exceeds the {MOCK_SLOT_BITS}-bit mock slot",
                v.bits()
            ))
        })
    }

    /// "Encrypts" up to 4096 slot values.
    pub fn encrypt(&self, slots: &[BigUint]) -> Result<Ciphertext> {
        if slots.len() > MOCK_SLOT_COUNT {
            return Err(Error::SlotOverflow(format!(
                "{} values offered to a {MOCK_SLOT_COUNT}-slot ciphertext",
                slots.len()
            )));
        }
        let mut padded = Vec::with_capacity(MOCK_SLOT_COUNT);
        for v in slots {
            padded.push(Self::slot_value(v)?);
        }
        padded.resize(MOCK_SLOT_COUNT, 0);
        OpCounters::bump(&self.counters.encryptions);
        Ok(Ciphertext::SimdMock {
            slots: padded,
            nonce: self.rng.lock().expect("rng lock").next_u64(),
            key_id: self.instance_id,
        })
    }

    /// Returns the slots (the mock hides nothing).
    pub fn decrypt(&self, ct: &Ciphertext) -> Result<Vec<BigUint>> {
        let slots = self.slots_of(ct)?;
        OpCounters::bump(&self.counters.decryptions);
        Ok(slots.iter().map(|&s| BigUint::from(s)).collect())
    }

    /// Slot-wise addition with overflow detection.
    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        let av = self.slots_of(a)?;
        let bv = self.slots_of(b)?;
        let mut slots = Vec::with_capacity(MOCK_SLOT_COUNT);
        for (&x, &y) in av.iter().zip(bv) {
            let sum = x + y;
            if sum >= SLOT_LIMIT {
                return Err(Error::SlotOverflow(format!(
                    "slot sum {sum} exceeds the {MOCK_SLOT_BITS}-bit slot"
                )));
            }
            slots.push(sum);
        }
        OpCounters::bump(&self.counters.additions);
        Ok(Ciphertext::SimdMock {
            slots,
            nonce: self.rng.lock().expect("rng lock").next_u64(),
            key_id: self.instance_id,
        })
    }

    /// Slot-wise multiplication by a plaintext scalar.
    pub fn scalar_mul(&self, k: &BigUint, ct: &Ciphertext) -> Result<Ciphertext> {
        let k = Self::slot_value(k)?;
        let slots = self
            .slots_of(ct)?
            .iter()
            .map(|&s| {
                let prod = (s as u128) * (k as u128);
                if prod >= SLOT_LIMIT as u128 {
                    Err(Error::SlotOverflow(format!(
                        "slot product {prod} exceeds the {MOCK_SLOT_BITS}-bit slot"
                    )))
                } else {
                    Ok(prod as u64)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        OpCounters::bump(&self.counters.scalar_multiplications);
        Ok(Ciphertext::SimdMock {
            slots,
            nonce: self.rng.lock().expect("rng lock").next_u64(),
            key_id: self.instance_id,
        })
    }

    pub(super) fn ciphertext_from_values(&self, values: Vec<BigUint>) -> Result<Ciphertext> {
        if values.len() != MOCK_SLOT_COUNT {
            return Err(Error::LengthMismatch(format!(
                "expected {MOCK_SLOT_COUNT} slot values, got {}",
                values.len()
            )));
        }
        let mut slots = Vec::with_capacity(MOCK_SLOT_COUNT);
        for v in &values {
            slots.push(Self::slot_value(v)?);
        }
        Ok(Ciphertext::SimdMock {
            slots,
            nonce: self.rng.lock().expect("rng lock").next_u64(),
            key_id: self.instance_id,
        })
    }

    fn slots_of<'c>(&self, ct: &'c Ciphertext) -> Result<&'c [u64]> {
        match ct {
            Ciphertext::SimdMock { slots, key_id, .. } => {
                self.check_key(*key_id)?;
                Ok(slots)
            }
            Ciphertext::Paillier { .. } => Err(Error::KeyMismatch(
                "Paillier ciphertext offered to the mock backend".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refuses_to_start_without_the_insecure_flag() {
        for mode in ["", "mock", "simd", "secure", "insecure_mock", "INSECURE-MOCK"] {
            assert!(
                matches!(
                    SimdMockBackend::new(mode, 1),
                    Err(Error::InsecureBackendRefused(_))
                ),
                "mode {mode:?} must be refused"
            );
        }
        assert!(SimdMockBackend::new(INSECURE_MODE, 1).is_ok());
    }

    #[test]
    fn descriptor_matches_the_simd_parameter_card() {
        let b = SimdMockBackend::new(INSECURE_MODE, 2).unwrap();
        let d = b.descriptor();
        assert_eq!(d.name, "simd-mock");
        assert_eq!(d.slot_count, 4096);
        assert_eq!(d.slot_bits, 50);
        assert_eq!(d.ciphertext_bytes, 135_168);
        // The fixed record width decomposes into whole bytes per slot.
        assert_eq!(d.ciphertext_bytes % d.slot_count, 0);
        assert!(d.ciphertext_bytes / d.slot_count >= (d.slot_bits as usize + 7) / 8);
    }

    #[test]
    fn arithmetic_is_slotwise_with_overflow_checks() {
        let b = SimdMockBackend::new(INSECURE_MODE, 3).unwrap();
        let a = b.encrypt(&[BigUint::from(5u32), BigUint::from(9u32)]).unwrap();
        let c = b.encrypt(&[BigUint::from(2u32)]).unwrap();
        let sum = b.add(&a, &c).unwrap();
        let dec = b.decrypt(&sum).unwrap();
        assert_eq!(dec[0], BigUint::from(7u32));
        assert_eq!(dec[1], BigUint::from(9u32));
        assert_eq!(dec[2], BigUint::from(0u32));

        let doubled = b.scalar_mul(&BigUint::from(2u32), &sum).unwrap();
        assert_eq!(b.decrypt(&doubled).unwrap()[0], BigUint::from(14u32));

        let big = BigUint::from((1u64 << 50) - 1);
        let near = b.encrypt(&[big.clone()]).unwrap();
        assert!(matches!(b.add(&near, &near), Err(Error::SlotOverflow(_))));
        assert!(matches!(
            b.encrypt(&[&big + 1u32]),
            Err(Error::SlotOverflow(_))
        ));
    }

    #[test]
    fn equal_plaintexts_encrypt_differently() {
        let b = SimdMockBackend::new(INSECURE_MODE, 4).unwrap();
        let a = b.encrypt(&[BigUint::from(1u32)]).unwrap();
        let c = b.encrypt(&[BigUint::from(1u32)]).unwrap();
        assert_ne!(a, c);
        assert_eq!(b.decrypt(&a).unwrap(), b.decrypt(&c).unwrap());
    }
}
