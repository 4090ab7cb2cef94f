//! Database encryption schemes: the column-wise baseline and the packed
//! variant that scores a whole batch with `2(β−1)` additions.
//!
//! **Baseline** ([`enc_db_base`] / [`ip_db_base`]): each of the `d` feature
//! columns becomes one ciphertext whose slots hold that column across up to
//! `N_s` enrolled rows. An encrypted inner product multiplies column `i` by
//! the query weight `y_i` and folds the results, costing a scalar
//! multiplication per nonzero weight — acceptable for one-shot verification,
//! wasteful for identification.
//!
//! **Packed variant** ([`idface_enc_db`] / [`idface_ip_db`]): rows are
//! ternarized, sign-split, and stacked `m` to a slot by the packing layer, so
//! a batch holds `m · N_s` templates in `2d` ciphertexts. Because a ternary
//! query's sign supports are binary masks, the inner product needs no scalar
//! multiplications at all — only support lookups and additions:
//!
//! ```text
//! ct⁺ = IP(y⁺, C⁺) ⊕ IP(y⁻, C⁻)      ct⁻ = IP(y⁺, C⁻) ⊕ IP(y⁻, C⁺)
//! ```
//!
//! With both sign supports nonempty that is exactly `2(β−1)` additions per
//! batch — `2β − 4` inside the four folds plus the `2` combining additions —
//! and decryption of the [`ScorePair`] recovers every enrolled template's
//! exact integer score at once. (If one support is empty, its two folds are
//! replaced by fresh encryptions of zero to keep the pair well-formed; the
//! addition count is then `2β` with two extra encryptions, and the counter
//! separates raw from combining additions so either convention is readable.)
//!
//! Batches are immutable once built; growing a database appends batches.

use std::fs;
use std::path::Path;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::ahe::{Backend, BackendDescriptor, Ciphertext};
use crate::exec;
use crate::packing::{self, PackingParams};
use crate::transform::{split, ternarize, BinarySplit, FeatureTemplate};
use crate::{Error, Result};

/// Fixed-point scale (bits) for real-valued weights in the baseline scheme.
/// The packed variant needs no quantization — its values are already integer.
pub const BASE_FIXED_POINT_BITS: u32 = 15;

/// One encrypted batch of up to `m · N_s` templates.
#[derive(Debug, Clone)]
pub struct EncryptedBatch {
    /// Identity labels; position `(slot j, digit i)` maps to `ids[i + m·j]`.
    pub ids: Vec<String>,
    /// Per-coordinate ciphertexts of the stacked `+` masks (`d` entries).
    pub c_plus: Vec<Ciphertext>,
    /// Per-coordinate ciphertexts of the stacked `−` masks (`d` entries).
    pub c_minus: Vec<Ciphertext>,
    /// Packing geometry used at enrollment.
    pub packing: PackingParams,
    /// Backend shape the batch was encrypted under.
    pub descriptor: BackendDescriptor,
    /// Template dimension.
    pub d: usize,
    /// Enrollment sparsity α.
    pub alpha: usize,
}

impl EncryptedBatch {
    /// Templates this batch can hold (`m · N_s`).
    pub fn capacity(&self) -> usize {
        self.packing.m * self.descriptor.slot_count
    }

    /// Identity at a decoded position, if it is not padding.
    pub fn identity_at(&self, within_idx: usize) -> Option<&str> {
        self.ids.get(within_idx).map(String::as_str)
    }
}

/// The pair of ciphertexts accumulating one batch's scores by sign.
#[derive(Debug, Clone)]
pub struct ScorePair {
    /// Positive sign combinations (`⟨y⁺,C⁺⟩ + ⟨y⁻,C⁻⟩`).
    pub ct_plus: Ciphertext,
    /// Negative sign combinations (`⟨y⁺,C⁻⟩ + ⟨y⁻,C⁺⟩`).
    pub ct_minus: Ciphertext,
}

fn check_backend(batch_desc: &BackendDescriptor, backend: &Backend) -> Result<()> {
    let desc = backend.descriptor();
    if *batch_desc != desc {
        return Err(Error::ParamMismatch(format!(
            "batch was built for backend {}/{} slots/{} bits, offered {}/{}/{}",
            batch_desc.name,
            batch_desc.slot_count,
            batch_desc.slot_bits,
            desc.name,
            desc.slot_count,
            desc.slot_bits
        )));
    }
    Ok(())
}

/// Quantizes a real weight to `BASE_FIXED_POINT_BITS` fixed point.
pub fn quantize_base(v: f64) -> i64 {
    (v * f64::from(1u32 << BASE_FIXED_POINT_BITS)).round() as i64
}

fn slot_encode_signed(v: i64, backend: &Backend) -> Result<BigUint> {
    if v >= 0 {
        return Ok(BigUint::from(v as u64));
    }
    // Negative values are representable only where subtraction wraps a
    // modulus (Paillier); the mock's slots are plain nonnegative integers.
    match backend {
        Backend::Paillier(b) => {
            let n = b.public_key().modulus();
            Ok(n - BigUint::from(v.unsigned_abs()))
        }
        Backend::SimdMock(_) => Err(Error::SlotOverflow(format!(
            "negative value {v} cannot be represented in mock slots"
        ))),
    }
}

/// Centered lift of a decrypted slot back to a signed integer (inverse of
/// [`slot_encode_signed`] under addition, as long as magnitudes stay below
/// half the plaintext modulus).
pub fn slot_decode_signed(v: &BigUint, backend: &Backend) -> Result<i64> {
    match backend {
        Backend::Paillier(b) => {
            let n = b.public_key().modulus();
            let half = n >> 1u32;
            let signed = if v > &half {
                let mag = n - v;
                -(i64::try_from(u64::try_from(mag).map_err(|_| lift_overflow())?)
                    .map_err(|_| lift_overflow())?)
            } else {
                i64::try_from(u64::try_from(v.clone()).map_err(|_| lift_overflow())?)
                    .map_err(|_| lift_overflow())?
            };
            Ok(signed)
        }
        Backend::SimdMock(_) => {
            i64::try_from(u64::try_from(v.clone()).map_err(|_| lift_overflow())?)
                .map_err(|_| lift_overflow())
        }
    }
}

fn lift_overflow() -> Error {
    Error::Overflow("decrypted value exceeds the signed 64-bit lift range".into())
}

/// Baseline bulk encryption: column `i` of the `rows × d` matrix becomes
/// ciphertext `i`, one row per slot. Real entries are quantized to fixed
/// point; negative values require the Paillier backend.
pub fn enc_db_base(matrix: &[Vec<f64>], backend: &Backend) -> Result<Vec<Ciphertext>> {
    let desc = backend.descriptor();
    if matrix.is_empty() {
        return Err(Error::RangeViolation("matrix must have rows".into()));
    }
    if matrix.len() > desc.slot_count {
        return Err(Error::SlotOverflow(format!(
            "{} rows exceed the backend's {} slots",
            matrix.len(),
            desc.slot_count
        )));
    }
    let d = matrix[0].len();
    for row in matrix {
        if row.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
    }
    exec::try_map_indexed(d, |col| {
        let slots = matrix
            .iter()
            .map(|row| slot_encode_signed(quantize_base(row[col]), backend))
            .collect::<Result<Vec<_>>>()?;
        backend.encrypt(&slots)
    })
}

/// Baseline encrypted inner product with nonnegative integer weights.
///
/// Zero weights are skipped entirely (a table lookup, not a homomorphic
/// operation), unit weights fold by addition, and only weights above one pay
/// for a scalar multiplication — the packed variant arranges for every
/// weight to be 0 or 1 precisely to stay in the cheap cases.
pub fn ip_db_base(weights: &[u64], columns: &[Ciphertext], backend: &Backend) -> Result<Ciphertext> {
    if weights.len() != columns.len() {
        return Err(Error::DimensionMismatch {
            expected: columns.len(),
            got: weights.len(),
        });
    }
    let mut acc: Option<Ciphertext> = None;
    for (w, ct) in weights.iter().zip(columns) {
        let term = match w {
            0 => continue,
            1 => ct.clone(),
            k => backend.scalar_mul(&BigUint::from(*k), ct)?,
        };
        acc = Some(match acc {
            None => term,
            Some(a) => backend.add(&a, &term)?,
        });
    }
    match acc {
        Some(ct) => Ok(ct),
        // All-zero weights: a fresh encryption of zero keeps the result a
        // well-formed ciphertext.
        None => backend.encrypt_zero(),
    }
}

/// Packed enrollment: ternarize rows with `T_α`, sign-split, stack groups of
/// `m` per slot, and encrypt the packed columns per sign.
pub fn idface_enc_db(
    templates: &[(String, FeatureTemplate)],
    d: usize,
    alpha: usize,
    packing: PackingParams,
    backend: &Backend,
) -> Result<EncryptedBatch> {
    let desc = backend.descriptor();
    let capacity = packing.m * desc.slot_count;
    if templates.is_empty() {
        return Err(Error::RangeViolation(
            "cannot build a batch from zero templates".into(),
        ));
    }
    if templates.len() > capacity {
        return Err(Error::TooManyTemplates {
            capacity,
            got: templates.len(),
        });
    }
    if packing.slot_bits > desc.slot_bits {
        return Err(Error::ParamMismatch(format!(
            "packing sized for {}-bit slots, backend offers {} bits",
            packing.slot_bits, desc.slot_bits
        )));
    }
    let splits: Vec<BinarySplit> = templates
        .iter()
        .map(|(_, x)| {
            if x.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: x.dim(),
                });
            }
            Ok(split(&ternarize(x, alpha)?))
        })
        .collect::<Result<_>>()?;

    // Pack groups of m templates, one group per SIMD slot.
    let groups: Vec<packing::PackedColumns> = splits
        .chunks(packing.m)
        .map(|chunk| packing::encode(chunk, packing))
        .collect::<Result<_>>()?;

    // One packed value per occupied slot; the backend encrypts missing
    // trailing slots as zero, which is exactly the padding semantics.
    let gather = |sign_plus: bool, col: usize| -> Vec<BigUint> {
        groups
            .iter()
            .map(|g| if sign_plus { g.plus[col].clone() } else { g.minus[col].clone() })
            .collect()
    };
    let c_plus = exec::try_map_indexed(d, |col| backend.encrypt(&gather(true, col)))?;
    let c_minus = exec::try_map_indexed(d, |col| backend.encrypt(&gather(false, col)))?;

    Ok(EncryptedBatch {
        ids: templates.iter().map(|(id, _)| id.clone()).collect(),
        c_plus,
        c_minus,
        packing,
        descriptor: desc,
        d,
        alpha,
    })
}

/// Packed encrypted inner product: ternarize the query with `T_β`, then fold
/// the batch columns over the two sign supports and combine.
pub fn idface_ip_db(
    query: &FeatureTemplate,
    batch: &EncryptedBatch,
    beta: usize,
    backend: &Backend,
) -> Result<ScorePair> {
    let z = ternarize(query, beta)?;
    idface_ip_db_ternary(&split(&z), batch, backend)
}

/// [`idface_ip_db`] for a query that is already ternarized and split.
pub fn idface_ip_db_ternary(
    query: &BinarySplit,
    batch: &EncryptedBatch,
    backend: &Backend,
) -> Result<ScorePair> {
    check_backend(&batch.descriptor, backend)?;
    if query.dim() != batch.d {
        return Err(Error::DimensionMismatch {
            expected: batch.d,
            got: query.dim(),
        });
    }
    let beta = query.count_plus() + query.count_minus();
    if batch.alpha.min(beta) > batch.packing.max_query_weight() {
        return Err(Error::ParamMismatch(format!(
            "query sparsity {beta} can accumulate {} into one digit, packing allows {}",
            batch.alpha.min(beta),
            batch.packing.max_query_weight()
        )));
    }

    let fold = |support: &[usize], columns: &[Ciphertext]| -> Result<Option<Ciphertext>> {
        let mut acc: Option<Ciphertext> = None;
        for &j in support {
            acc = Some(match acc {
                None => columns[j].clone(),
                Some(a) => backend.add(&a, &columns[j])?,
            });
        }
        Ok(acc)
    };
    let combine = |a: Option<Ciphertext>, b: Option<Ciphertext>| -> Result<Ciphertext> {
        match (a, b) {
            (Some(a), Some(b)) => {
                let merged = backend.add(&a, &b)?;
                backend.counters().note_combine(1);
                Ok(merged)
            }
            // One sign support is empty: its fold contributes a fresh
            // encryption of zero so the pair stays well-formed.
            (Some(a), None) => backend.add(&a, &backend.encrypt_zero()?).map(|ct| {
                backend.counters().note_combine(1);
                ct
            }),
            (None, Some(b)) => backend.add(&backend.encrypt_zero()?, &b).map(|ct| {
                backend.counters().note_combine(1);
                ct
            }),
            (None, None) => Err(Error::DegenerateInput(
                "query has an empty ternarization".into(),
            )),
        }
    };

    let sp = query.plus_support();
    let sm = query.minus_support();
    let ct_plus = combine(fold(&sp, &batch.c_plus)?, fold(&sm, &batch.c_minus)?)?;
    let ct_minus = combine(fold(&sp, &batch.c_minus)?, fold(&sm, &batch.c_plus)?)?;
    Ok(ScorePair { ct_plus, ct_minus })
}

/// Decrypts and decodes a [`ScorePair`] into per-template integer scores, in
/// enrollment order (padding positions trimmed).
pub fn decrypt_scores(
    pair: &ScorePair,
    batch: &EncryptedBatch,
    backend: &Backend,
) -> Result<Vec<i64>> {
    check_backend(&batch.descriptor, backend)?;
    let plus_slots = backend.decrypt(&pair.ct_plus)?;
    let minus_slots = backend.decrypt(&pair.ct_minus)?;
    decode_score_slots(&plus_slots, &minus_slots, batch.packing, batch.ids.len())
}

/// Decodes decrypted slot values into scores for the first `count` positions
/// (position `i + m·j` = digit `i` of slot `j`).
pub fn decode_score_slots(
    plus_slots: &[BigUint],
    minus_slots: &[BigUint],
    packing: PackingParams,
    count: usize,
) -> Result<Vec<i64>> {
    if plus_slots.len() != minus_slots.len() {
        return Err(Error::LengthMismatch(format!(
            "sign slot counts differ: {} vs {}",
            plus_slots.len(),
            minus_slots.len()
        )));
    }
    let mut scores = Vec::with_capacity(count);
    'outer: for (sp, sm) in plus_slots.iter().zip(minus_slots) {
        for s in packing::decode(sp, sm, packing)? {
            scores.push(s);
            if scores.len() == count {
                break 'outer;
            }
        }
    }
    if scores.len() < count {
        return Err(Error::LengthMismatch(format!(
            "{} slots decode to {} scores, {count} requested",
            plus_slots.len(),
            scores.len()
        )));
    }
    Ok(scores)
}

/// Closed-form encrypted-database payload size in bytes:
/// `2 · ⌈D / (m·N_s)⌉ · d · ciphertext_bytes`.
pub fn encrypted_db_bytes(
    d: usize,
    total_templates: usize,
    packing: PackingParams,
    descriptor: &BackendDescriptor,
) -> u128 {
    let per_batch = packing.m * descriptor.slot_count;
    let batches = total_templates.div_ceil(per_batch) as u128;
    2 * batches * d as u128 * descriptor.ciphertext_bytes as u128
}

/// On-disk size of the same database: payload plus the 4-byte length framing
/// every stored ciphertext record carries.
pub fn encrypted_db_file_bytes(
    d: usize,
    total_templates: usize,
    packing: PackingParams,
    descriptor: &BackendDescriptor,
) -> u128 {
    let per_batch = packing.m * descriptor.slot_count;
    let batches = total_templates.div_ceil(per_batch) as u128;
    encrypted_db_bytes(d, total_templates, packing, descriptor) + 2 * batches * d as u128 * 4
}

/// A growable encrypted database: an append-only sequence of batches.
#[derive(Debug)]
pub struct Database {
    /// Template dimension.
    pub d: usize,
    /// Enrollment sparsity α.
    pub alpha: usize,
    /// Packing geometry shared by all batches.
    pub packing: PackingParams,
    /// Enrolled batches, oldest first.
    pub batches: Vec<EncryptedBatch>,
}

impl Database {
    /// Empty database with fixed geometry.
    pub fn new(d: usize, alpha: usize, packing: PackingParams) -> Self {
        Self {
            d,
            alpha,
            packing,
            batches: Vec::new(),
        }
    }

    /// Total enrolled templates.
    pub fn total_enrolled(&self) -> usize {
        self.batches.iter().map(|b| b.ids.len()).sum()
    }

    /// Resolves a protocol index pair to an identity (None for padding or
    /// out-of-range indices).
    pub fn identity_at(&self, batch_idx: usize, within_idx: usize) -> Option<&str> {
        self.batches.get(batch_idx)?.identity_at(within_idx)
    }

    /// Enrolls templates, appending as many new batches as needed. Batches
    /// already present are immutable: a partially filled final batch is never
    /// topped up, matching an append-only audit model.
    pub fn enroll(
        &mut self,
        templates: &[(String, FeatureTemplate)],
        backend: &Backend,
    ) -> Result<usize> {
        let mut seen: std::collections::HashSet<&str> = self
            .batches
            .iter()
            .flat_map(|b| b.ids.iter().map(String::as_str))
            .collect();
        for (id, _) in templates {
            if !seen.insert(id) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        let per_batch = self.packing.m * backend.descriptor().slot_count;
        let before = self.batches.len();
        for chunk in templates.chunks(per_batch) {
            self.batches
                .push(idface_enc_db(chunk, self.d, self.alpha, self.packing, backend)?);
        }
        Ok(self.batches.len() - before)
    }
}

#[derive(Serialize, Deserialize)]
struct BatchMeta {
    ids: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct DbMeta {
    format: u32,
    d: usize,
    alpha: usize,
    p: u64,
    digit_bits: u32,
    m: usize,
    slot_bits: u32,
    n_s: usize,
    backend: String,
    backend_slot_bits: u32,
    ciphertext_bytes: usize,
    /// Paillier public modulus (hex), absent for the mock.
    #[serde(skip_serializing_if = "Option::is_none")]
    public_modulus_hex: Option<String>,
    batches: Vec<BatchMeta>,
}

const DB_FORMAT: u32 = 1;

/// Persists a database: a metadata document plus two fixed-width ciphertext
/// record files per batch.
pub fn save_database(dir: &Path, db: &Database, backend: &Backend) -> Result<()> {
    fs::create_dir_all(dir)?;
    let desc = backend.descriptor();
    let meta = DbMeta {
        format: DB_FORMAT,
        d: db.d,
        alpha: db.alpha,
        p: db.packing.p,
        digit_bits: db.packing.digit_bits,
        m: db.packing.m,
        slot_bits: db.packing.slot_bits,
        n_s: desc.slot_count,
        backend: desc.name.to_string(),
        backend_slot_bits: desc.slot_bits,
        ciphertext_bytes: desc.ciphertext_bytes,
        public_modulus_hex: match backend {
            Backend::Paillier(b) => Some(hex::encode(b.public_key().modulus().to_bytes_be())),
            Backend::SimdMock(_) => None,
        },
        batches: db
            .batches
            .iter()
            .map(|b| BatchMeta { ids: b.ids.clone() })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::Persistence(format!("metadata serialization: {e}")))?;
    fs::write(dir.join("metadata.json"), json)?;
    for (i, batch) in db.batches.iter().enumerate() {
        for (suffix, columns) in [("plus", &batch.c_plus), ("minus", &batch.c_minus)] {
            let mut bytes = Vec::new();
            for ct in columns.iter() {
                bytes.extend_from_slice(&backend.ciphertext_to_record(ct)?);
            }
            fs::write(dir.join(format!("batch_{i:06}.{suffix}.bin")), bytes)?;
        }
    }
    Ok(())
}

/// Loads a persisted database, validating it against the offered backend.
pub fn load_database(dir: &Path, backend: &Backend) -> Result<Database> {
    let meta: DbMeta = serde_json::from_str(&fs::read_to_string(dir.join("metadata.json"))?)
        .map_err(|e| Error::Persistence(format!("metadata parse: {e}")))?;
    if meta.format != DB_FORMAT {
        return Err(Error::Persistence(format!(
            "unsupported database format {}",
            meta.format
        )));
    }
    let desc = backend.descriptor();
    if meta.backend != desc.name
        || meta.n_s != desc.slot_count
        || meta.backend_slot_bits != desc.slot_bits
        || meta.ciphertext_bytes != desc.ciphertext_bytes
    {
        return Err(Error::ParamMismatch(format!(
            "database was written for backend {}/{} slots, offered {}/{}",
            meta.backend, meta.n_s, desc.name, desc.slot_count
        )));
    }
    if let (Some(hex_n), Backend::Paillier(b)) = (&meta.public_modulus_hex, backend) {
        let stored = hex::decode(hex_n)
            .map_err(|e| Error::Persistence(format!("modulus hex: {e}")))?;
        if BigUint::from_bytes_be(&stored) != *b.public_key().modulus() {
            return Err(Error::KeyMismatch(
                "database was encrypted under a different public key".into(),
            ));
        }
    }
    let packing = PackingParams {
        p: meta.p,
        digit_bits: meta.digit_bits,
        m: meta.m,
        slot_bits: meta.slot_bits,
    };
    let mut db = Database::new(meta.d, meta.alpha, packing);
    for (i, bm) in meta.batches.iter().enumerate() {
        let mut signs = Vec::with_capacity(2);
        for suffix in ["plus", "minus"] {
            let bytes = fs::read(dir.join(format!("batch_{i:06}.{suffix}.bin")))?;
            let mut columns = Vec::with_capacity(meta.d);
            let mut off = 0usize;
            for _ in 0..meta.d {
                let (ct, used) = backend.ciphertext_from_record(&bytes[off..])?;
                columns.push(ct);
                off += used;
            }
            if off != bytes.len() {
                return Err(Error::LengthMismatch(format!(
                    "batch file {i} ({suffix}) has {} trailing bytes",
                    bytes.len() - off
                )));
            }
            signs.push(columns);
        }
        let c_minus = signs.pop().expect("two sign files");
        let c_plus = signs.pop().expect("two sign files");
        db.batches.push(EncryptedBatch {
            ids: bm.ids.clone(),
            c_plus,
            c_minus,
            packing,
            descriptor: desc,
            d: meta.d,
            alpha: meta.alpha,
        });
    }
    Ok(db)
}
