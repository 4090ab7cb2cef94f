//! Paillier cryptosystem: keys, primitives, and the backend wrapper.
//!
//! Standard construction with the `g = n + 1` generator:
//!
//! * keygen — primes `p, q` of equal size, `n = pq`, `λ = lcm(p−1, q−1)`,
//!   `μ = L(g^λ mod n²)^{−1} mod n` where `L(u) = (u−1)/n`. With `g = n+1`,
//!   `g^λ = 1 + λn (mod n²)`, so `μ` is simply `λ^{−1} mod n`; the code still
//!   computes it through `L` to keep the published form testable.
//! * encrypt — `c = (1 + m·n) · r^n mod n²` for uniform `r ∈ [1, n)` coprime
//!   to `n` (the `g = n+1` shortcut avoids one exponentiation).
//! * decrypt — `m = L(c^λ mod n²) · μ mod n`.
//! * homomorphisms — `E(a)·E(b) = E(a+b)` and `E(a)^k = E(k·a)`, both mod `n²`.
//!
//! Primality testing is Miller-Rabin with 40 random rounds after trial
//! division by small primes; at 40 rounds the false-positive probability is
//! below 2⁻⁸⁰ per candidate.
//!
//! The backend view supports an optional slot-count override: a logical
//! ciphertext becomes a vector of independent Paillier ciphertexts, which
//! lets small-key tests exercise multi-slot batching exactly as a SIMD
//! scheme would while the production descriptor stays `slot_count = 1`.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Mutex;

use num_bigint::{BigInt, BigUint, RandBigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{BackendDescriptor, Ciphertext, OpCounters};
use crate::{Error, Result};

/// Public half of a Paillier key: the modulus (and its square, cached).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    n: BigUint,
    n_squared: BigUint,
}

/// Secret half: Carmichael exponent and decryption cofactor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecretKey {
    lambda: BigUint,
    mu: BigUint,
}

/// A full Paillier key pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPair {
    /// Public encryption key.
    pub public: PublicKey,
    /// Secret decryption key.
    pub secret: SecretKey,
}

impl PublicKey {
    /// Modulus `n`.
    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    /// `n²`, the ciphertext modulus.
    pub fn modulus_squared(&self) -> &BigUint {
        &self.n_squared
    }

    /// Bit length of `n` — the plaintext slot width.
    pub fn modulus_bits(&self) -> u32 {
        self.n.bits() as u32
    }

    /// Bytes needed for any ciphertext value in `[0, n²)`.
    pub fn ciphertext_value_bytes(&self) -> usize {
        ((self.n_squared.bits() as usize) + 7) / 8
    }

    /// Short fingerprint used to detect cross-key ciphertext mixing.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.n.to_bytes_be().hash(&mut h);
        h.finish()
    }
}

impl SecretKey {
    /// Carmichael exponent `λ = lcm(p−1, q−1)`.
    pub fn lambda(&self) -> &BigUint {
        &self.lambda
    }

    /// Decryption cofactor `μ = L(g^λ mod n²)^{−1} mod n`.
    pub fn mu(&self) -> &BigUint {
        &self.mu
    }

    /// Rebuilds a secret key from its serialized fields.
    pub fn from_parts(lambda: BigUint, mu: BigUint) -> Self {
        Self { lambda, mu }
    }
}

impl KeyPair {
    /// Generates a key pair with a modulus of (at least) `modulus_bits` bits
    /// from two random primes of `modulus_bits / 2` bits each.
    pub fn generate<R: Rng + ?Sized>(modulus_bits: u32, rng: &mut R) -> Result<Self> {
        if modulus_bits < 16 || modulus_bits % 2 != 0 {
            return Err(Error::RangeViolation(format!(
                "modulus bits must be an even number ≥ 16, got {modulus_bits}"
            )));
        }
        let half = modulus_bits / 2;
        let p = generate_prime(half, rng)?;
        let q = loop {
            let q = generate_prime(half, rng)?;
            if q != p {
                break q;
            }
        };
        Self::from_primes(&p, &q)
    }

    /// Builds a key pair from two known primes (testing and worked examples).
    pub fn from_primes(p: &BigUint, q: &BigUint) -> Result<Self> {
        if p == q {
            return Err(Error::RangeViolation("primes must differ".into()));
        }
        let one = BigUint::one();
        let n = p * q;
        let n_squared = &n * &n;
        let p1 = p - &one;
        let q1 = q - &one;
        // gcd(n, φ(n)) = 1 is required for L to be well defined; equal-size
        // random primes satisfy it, tiny handpicked ones might not.
        if n.gcd(&(&p1 * &q1)) != one {
            return Err(Error::RangeViolation(
                "n shares a factor with φ(n); pick different primes".into(),
            ));
        }
        let lambda = p1.lcm(&q1);
        let public = PublicKey { n, n_squared };
        // μ = L(g^λ mod n²)^{−1} mod n with g = n + 1.
        let g = public.modulus() + &one;
        let glambda = g.modpow(&lambda, public.modulus_squared());
        let l = l_function(&glambda, public.modulus())?;
        let mu = mod_inverse(&l, public.modulus()).ok_or_else(|| {
            Error::RangeViolation("λ is not invertible modulo n; invalid primes".into())
        })?;
        Ok(Self {
            public,
            secret: SecretKey { lambda, mu },
        })
    }

    /// Rebuilds a key pair from serialized fields without re-deriving them.
    pub fn from_parts(n: BigUint, lambda: BigUint, mu: BigUint) -> Self {
        let n_squared = &n * &n;
        Self {
            public: PublicKey { n, n_squared },
            secret: SecretKey { lambda, mu },
        }
    }
}

/// `L(u) = (u − 1) / n`; errors if `u ≢ 1 (mod n)` would make the division
/// inexact, which indicates a corrupted ciphertext or wrong key.
fn l_function(u: &BigUint, n: &BigUint) -> Result<BigUint> {
    let minus_one = u - BigUint::one();
    let (quot, rem) = minus_one.div_rem(n);
    if !rem.is_zero() {
        return Err(Error::KeyMismatch(
            "L-function input is not ≡ 1 mod n (wrong key or corrupted ciphertext)".into(),
        ));
    }
    Ok(quot)
}

/// Modular inverse via extended Euclid; `None` when `gcd(a, m) ≠ 1`.
fn mod_inverse(a: &BigUint, m: &BigUint) -> Option<BigUint> {
    let a = BigInt::from_biguint(Sign::Plus, a.clone());
    let m_int = BigInt::from_biguint(Sign::Plus, m.clone());
    let e = a.extended_gcd(&m_int);
    if !e.gcd.is_one() {
        return None;
    }
    let mut x = e.x % &m_int;
    if x.is_negative() {
        x += &m_int;
    }
    x.to_biguint()
}

/// Uniform random integer in `[1, n)` coprime to `n`.
fn random_coprime<R: Rng + ?Sized>(n: &BigUint, rng: &mut R) -> BigUint {
    loop {
        let r = rng.gen_biguint_below(n);
        if !r.is_zero() && r.gcd(n).is_one() {
            return r;
        }
    }
}

/// Encrypts `m < n` under `pk` with explicit randomness source.
pub fn encrypt<R: Rng + ?Sized>(pk: &PublicKey, m: &BigUint, rng: &mut R) -> Result<BigUint> {
    if m >= pk.modulus() {
        return Err(Error::SlotOverflow(format!(
            "plaintext of {} bits exceeds the {}-bit modulus",
            m.bits(),
            pk.modulus_bits()
        )));
    }
    let n = pk.modulus();
    let n2 = pk.modulus_squared();
    let r = random_coprime(n, rng);
    // (1 + m·n) · r^n mod n², using g = n + 1 so g^m = 1 + m·n (mod n²).
    let gm = (BigUint::one() + m * n) % n2;
    Ok((gm * r.modpow(n, n2)) % n2)
}

/// Decrypts a ciphertext value.
pub fn decrypt(pk: &PublicKey, sk: &SecretKey, c: &BigUint) -> Result<BigUint> {
    if c >= pk.modulus_squared() || c.is_zero() {
        return Err(Error::RangeViolation(
            "ciphertext value outside [1, n²)".into(),
        ));
    }
    let u = c.modpow(&sk.lambda, pk.modulus_squared());
    let l = l_function(&u, pk.modulus())?;
    Ok((l * &sk.mu) % pk.modulus())
}

/// Homomorphic addition: `E(a)·E(b) mod n²`.
pub fn add(pk: &PublicKey, a: &BigUint, b: &BigUint) -> BigUint {
    (a * b) % pk.modulus_squared()
}

/// Homomorphic scalar multiplication: `E(a)^k mod n²`.
pub fn scalar_mul(pk: &PublicKey, k: &BigUint, c: &BigUint) -> BigUint {
    c.modpow(k, pk.modulus_squared())
}

const MILLER_RABIN_ROUNDS: u32 = 40;
const PRIME_SEARCH_BUDGET: usize = 100_000;

/// Random probable prime with exactly `bits` bits (top two bits set so a
/// product of two such primes has full width).
fn generate_prime<R: Rng + ?Sized>(bits: u32, rng: &mut R) -> Result<BigUint> {
    if bits < 8 {
        return Err(Error::RangeViolation(format!(
            "prime width must be ≥ 8 bits, got {bits}"
        )));
    }
    // The budget is unreachable in practice (prime density ~2/ln N), but a
    // bounded loop means key generation cannot hang on a broken RNG.
    for _ in 0..PRIME_SEARCH_BUDGET {
        let mut candidate = rng.gen_biguint(bits as u64);
        candidate.set_bit(bits as u64 - 1, true);
        candidate.set_bit(bits as u64 - 2, true);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate, rng) {
            return Ok(candidate);
        }
    }
    Err(Error::PrimeGenerationFailure {
        attempts: PRIME_SEARCH_BUDGET,
    })
}

/// Small primes for cheap trial division before Miller-Rabin.
const SMALL_PRIMES: [u32; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

/// Miller-Rabin with random bases (plus small-prime trial division).
fn is_probable_prime<R: Rng + ?Sized>(n: &BigUint, rng: &mut R) -> bool {
    let one = BigUint::one();
    let two = &one + &one;
    for sp in SMALL_PRIMES {
        let sp = BigUint::from(sp);
        if *n == sp {
            return true;
        }
        if (n % &sp).is_zero() {
            return false;
        }
    }
    if n < &two {
        return false;
    }
    // n − 1 = 2^s · d with d odd.
    let n_minus_one = n - &one;
    let n_minus_two = &n_minus_one - &one;
    let s = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> s;
    'witness: for _ in 0..MILLER_RABIN_ROUNDS {
        // Uniform base in [2, n−2].
        let a = loop {
            let a = rng.gen_biguint_below(n);
            if a >= two && a <= n_minus_two {
                break a;
            }
        };
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// The Paillier backend: keys, encryption randomness, counters, and the
/// optional multi-slot view.
#[derive(Debug)]
pub struct PaillierBackend {
    public: PublicKey,
    secret: Option<SecretKey>,
    slot_count: usize,
    rng: Mutex<ChaCha20Rng>,
    counters: OpCounters,
}

impl PaillierBackend {
    /// Backend holding both key halves, entropy-seeded randomness.
    pub fn new(keys: KeyPair) -> Self {
        Self::build(keys.public, Some(keys.secret), 1, rand::random())
    }

    /// Backend holding both key halves with deterministic randomness.
    pub fn new_seeded(keys: KeyPair, seed: u64) -> Self {
        Self::build(keys.public, Some(keys.secret), 1, seed)
    }

    /// Encrypt/add-only backend (the ciphertext-holding server's view).
    pub fn public_only(public: PublicKey, seed: u64) -> Self {
        Self::build(public, None, 1, seed)
    }

    /// Multi-slot test view: a logical ciphertext is `slot_count`
    /// independent Paillier ciphertexts.
    pub fn with_slot_count(keys: KeyPair, slot_count: usize, seed: u64) -> Result<Self> {
        if slot_count == 0 {
            return Err(Error::RangeViolation("slot count must be ≥ 1".into()));
        }
        Ok(Self::build(keys.public, Some(keys.secret), slot_count, seed))
    }

    fn build(public: PublicKey, secret: Option<SecretKey>, slot_count: usize, seed: u64) -> Self {
        Self {
            public,
            secret,
            slot_count,
            rng: Mutex::new(ChaCha20Rng::seed_from_u64(seed)),
            counters: OpCounters::default(),
        }
    }

    /// Public key in use.
    pub fn public_key(&self) -> &PublicKey {
        &self.public
    }

    /// `true` when the secret key is present.
    pub fn can_decrypt(&self) -> bool {
        self.secret.is_some()
    }

    /// Shape card: `slot_count` slots of `modulus_bits` plaintext bits.
    pub fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            name: "paillier",
            slot_count: self.slot_count,
            slot_bits: self.public.modulus_bits(),
            ciphertext_bytes: self.slot_count * self.public.ciphertext_value_bytes(),
        }
    }

    /// Operation counters.
    pub fn counters(&self) -> &OpCounters {
        &self.counters
    }

    pub(super) fn check_key(&self, key_id: u64) -> Result<()> {
        if key_id != self.public.fingerprint() {
            return Err(Error::KeyMismatch(
                "ciphertext was produced under a different key".into(),
            ));
        }
        Ok(())
    }

    /// Encrypts up to `slot_count` values (missing trailing slots become 0).
    pub fn encrypt(&self, slots: &[BigUint]) -> Result<Ciphertext> {
        if slots.len() > self.slot_count {
            return Err(Error::SlotOverflow(format!(
                "{} values offered to a {}-slot ciphertext",
                slots.len(),
                self.slot_count
            )));
        }
        let zero = BigUint::zero();
        let mut rng = self.rng.lock().expect("rng lock");
        let values = (0..self.slot_count)
            .map(|i| encrypt(&self.public, slots.get(i).unwrap_or(&zero), &mut *rng))
            .collect::<Result<Vec<_>>>()?;
        OpCounters::bump(&self.counters.encryptions);
        Ok(Ciphertext::Paillier {
            values,
            key_id: self.public.fingerprint(),
        })
    }

    /// Decrypts all slots; fails without the secret key.
    pub fn decrypt(&self, ct: &Ciphertext) -> Result<Vec<BigUint>> {
        let sk = self.secret.as_ref().ok_or_else(|| {
            Error::KeyMismatch("this backend holds no secret key".into())
        })?;
        let values = self.values_of(ct)?;
        let out = values
            .iter()
            .map(|v| decrypt(&self.public, sk, v))
            .collect::<Result<Vec<_>>>()?;
        OpCounters::bump(&self.counters.decryptions);
        Ok(out)
    }

    /// Slot-wise homomorphic addition.
    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        let av = self.values_of(a)?;
        let bv = self.values_of(b)?;
        let values = av
            .iter()
            .zip(bv)
            .map(|(x, y)| add(&self.public, x, y))
            .collect();
        OpCounters::bump(&self.counters.additions);
        Ok(Ciphertext::Paillier {
            values,
            key_id: self.public.fingerprint(),
        })
    }

    /// Slot-wise homomorphic scalar multiplication.
    pub fn scalar_mul(&self, k: &BigUint, ct: &Ciphertext) -> Result<Ciphertext> {
        let values = self
            .values_of(ct)?
            .iter()
            .map(|v| scalar_mul(&self.public, k, v))
            .collect();
        OpCounters::bump(&self.counters.scalar_multiplications);
        Ok(Ciphertext::Paillier {
            values,
            key_id: self.public.fingerprint(),
        })
    }

    pub(super) fn ciphertext_from_values(&self, values: Vec<BigUint>) -> Result<Ciphertext> {
        if values.len() != self.slot_count {
            return Err(Error::LengthMismatch(format!(
                "expected {} ciphertext values, got {}",
                self.slot_count,
                values.len()
            )));
        }
        for v in &values {
            if v >= self.public.modulus_squared() {
                return Err(Error::RangeViolation(
                    "ciphertext value outside [0, n²)".into(),
                ));
            }
        }
        Ok(Ciphertext::Paillier {
            values,
            key_id: self.public.fingerprint(),
        })
    }

    fn values_of<'c>(&self, ct: &'c Ciphertext) -> Result<&'c [BigUint]> {
        match ct {
            Ciphertext::Paillier { values, key_id } => {
                self.check_key(*key_id)?;
                if values.len() != self.slot_count {
                    return Err(Error::LengthMismatch(format!(
                        "ciphertext has {} slots, backend expects {}",
                        values.len(),
                        self.slot_count
                    )));
                }
                Ok(values)
            }
            Ciphertext::SimdMock { .. } => Err(Error::KeyMismatch(
                "mock ciphertext offered to the Paillier backend".into(),
            )),
        }
    }
}
