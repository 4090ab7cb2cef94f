//! Space-efficient encoding: many ternary templates per plaintext slot.
//!
//! A sign-split template is a pair of binary vectors, so a coordinate of `m`
//! stacked templates holds `m` bits plus whatever headroom score accumulation
//! needs. Scoring a query of sparsity β against an enrolled template of
//! sparsity α accumulates at most `p − 1 = min(α, β)` into any one digit, so
//! a digit of `w = ⌈log₂ p⌉` bits can absorb a full inner product without
//! carrying into its neighbor. Packing therefore stacks template `i` at bit
//! offset `w·i`:
//!
//! ```text
//! x⁺[j] = Σ_i  b⁺_i[j] · 2^{w·i}        (one integer per coordinate j)
//! ```
//!
//! A power-of-two radix (rather than radix `p` itself) makes digit extraction
//! a shift-and-mask and costs at most one bit per template of slot capacity.
//! One homomorphic inner product of packed coordinates then scores all `m`
//! templates at once, and decoding splits the accumulated integer back into
//! per-template digits. The signed score of template `i` is
//! `digit_i(s⁺) − digit_i(s⁻)`.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::transform::BinarySplit;
use crate::{Error, Result};

/// Geometry of a packing: digit modulus, digit width, and slot capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackingParams {
    /// Digit modulus `p = min(α, β) + 1`: one more than the largest value
    /// score accumulation can place in a digit.
    pub p: u64,
    /// Digit width `w = ⌈log₂ p⌉` in bits.
    pub digit_bits: u32,
    /// Templates per slot, `m = ⌊slot_bits / w⌋`.
    pub m: usize,
    /// Plaintext slot width this packing was sized for.
    pub slot_bits: u32,
}

impl PackingParams {
    /// Sizes a packing for a plaintext slot of `slot_bits` bits and the given
    /// enrollment/query sparsities.
    pub fn capacity(slot_bits: u32, alpha: usize, beta: usize) -> Result<Self> {
        if alpha == 0 || beta == 0 {
            return Err(Error::RangeViolation(
                "sparsities must be at least 1".into(),
            ));
        }
        let p = alpha.min(beta) as u64 + 1;
        let digit_bits = 64 - (p - 1).leading_zeros();
        let m = (slot_bits / digit_bits) as usize;
        if m == 0 {
            return Err(Error::CapacityTooSmall(format!(
                "slot of {slot_bits} bits cannot hold even one {digit_bits}-bit digit \
                 (p = {p} for sparsities {alpha}/{beta})"
            )));
        }
        Ok(Self {
            p,
            digit_bits,
            m,
            slot_bits,
        })
    }

    /// Total bits a fully packed slot value may occupy (`w · m`).
    pub fn packed_bits(&self) -> u32 {
        self.digit_bits * self.m as u32
    }

    /// Largest query sparsity this packing can score without digit carries.
    pub fn max_query_weight(&self) -> usize {
        (self.p - 1) as usize
    }

    fn validate(&self) -> Result<()> {
        if self.p < 2 || self.m == 0 || self.digit_bits == 0 {
            return Err(Error::RangeViolation(format!(
                "packing parameters out of range: {self:?}"
            )));
        }
        if self.digit_bits != 64 - (self.p - 1).leading_zeros() {
            return Err(Error::ParamMismatch(format!(
                "digit width {} does not match modulus {}",
                self.digit_bits, self.p
            )));
        }
        if self.packed_bits() > self.slot_bits {
            return Err(Error::Overflow(format!(
                "{} templates of {} bits exceed the {}-bit slot",
                self.m, self.digit_bits, self.slot_bits
            )));
        }
        Ok(())
    }
}

/// Per-coordinate packed integers for one batch of up to `m` templates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedColumns {
    /// One integer per coordinate holding the stacked `+` masks.
    pub plus: Vec<BigUint>,
    /// One integer per coordinate holding the stacked `−` masks.
    pub minus: Vec<BigUint>,
    /// Number of templates actually packed (`≤ m`; the rest is zero padding).
    pub count: usize,
}

/// Packs sign-split templates into per-coordinate integers.
///
/// Template `i` occupies bit offset `digit_bits · i`; positions `count..m`
/// stay zero and decode to score 0.
pub fn encode(splits: &[BinarySplit], params: PackingParams) -> Result<PackedColumns> {
    params.validate()?;
    if splits.is_empty() {
        return Err(Error::RangeViolation(
            "cannot encode an empty template batch".into(),
        ));
    }
    if splits.len() > params.m {
        return Err(Error::TooManyTemplates {
            capacity: params.m,
            got: splits.len(),
        });
    }
    let d = splits[0].dim();
    for s in splits {
        if s.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: s.dim(),
            });
        }
    }
    let mut plus = vec![BigUint::zero(); d];
    let mut minus = vec![BigUint::zero(); d];
    for (i, s) in splits.iter().enumerate() {
        let shift = params.digit_bits as usize * i;
        let unit = BigUint::one() << shift;
        for j in 0..d {
            if s.plus[j] == 1 {
                plus[j] += &unit;
            }
            if s.minus[j] == 1 {
                minus[j] += &unit;
            }
        }
    }
    Ok(PackedColumns {
        plus,
        minus,
        count: splits.len(),
    })
}

/// Splits one accumulated slot value into its `m` digits.
pub fn digits(s: &BigUint, params: PackingParams) -> Result<Vec<u64>> {
    params.validate()?;
    if s.bits() > params.packed_bits() as u64 {
        return Err(Error::Overflow(format!(
            "accumulated value of {} bits exceeds the {}-bit packed range",
            s.bits(),
            params.packed_bits()
        )));
    }
    let mask = BigUint::from((1u64 << params.digit_bits) - 1);
    let mut out = Vec::with_capacity(params.m);
    for i in 0..params.m {
        let digit = (s >> (params.digit_bits as usize * i)) & &mask;
        out.push(digit.to_u64().expect("digit fits in 64 bits by the mask"));
    }
    Ok(out)
}

/// Decodes a pair of accumulated slot values into `m` signed per-template
/// scores `digit_i(s⁺) − digit_i(s⁻)`.
pub fn decode(s_plus: &BigUint, s_minus: &BigUint, params: PackingParams) -> Result<Vec<i64>> {
    let dp = digits(s_plus, params)?;
    let dm = digits(s_minus, params)?;
    Ok(dp
        .iter()
        .zip(&dm)
        .map(|(&a, &b)| a as i64 - b as i64)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::{split, ternarize, ternary_inner, FeatureTemplate, TernaryTemplate};
    use num_traits::FromPrimitive;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn params(slot_bits: u32, alpha: usize, beta: usize) -> PackingParams {
        PackingParams::capacity(slot_bits, alpha, beta).unwrap()
    }

    /// Plaintext mirror of encrypted scoring: accumulate packed columns over
    /// the query supports, then decode.
    fn plain_scores(
        batch: &[TernaryTemplate],
        query: &TernaryTemplate,
        pk: PackingParams,
    ) -> Vec<i64> {
        let splits: Vec<_> = batch.iter().map(split).collect();
        let cols = encode(&splits, pk).unwrap();
        let q = split(query);
        let mut s_plus = BigUint::zero();
        let mut s_minus = BigUint::zero();
        for j in q.plus_support() {
            s_plus += &cols.plus[j];
            s_minus += &cols.minus[j];
        }
        for j in q.minus_support() {
            s_plus += &cols.minus[j];
            s_minus += &cols.plus[j];
        }
        decode(&s_plus, &s_minus, pk).unwrap()[..batch.len()].to_vec()
    }

    #[test]
    fn capacity_reproduces_standard_parameter_table() {
        // 2048-bit slots (Paillier plaintext space) at α = 341.
        for (beta, m, p, w) in [(63, 341, 64, 6), (127, 292, 128, 7), (341, 227, 342, 9)] {
            let got = params(2048, 341, beta);
            assert_eq!((got.m, got.p, got.digit_bits), (m, p, w), "beta {beta}");
        }
        // 50-bit slots (SIMD-mock message space).
        for (beta, m) in [(63, 8), (127, 7), (341, 5)] {
            assert_eq!(params(50, 341, beta).m, m, "beta {beta}");
        }
        // Oversparse queries clamp at α: min(α, β) drives the modulus.
        assert_eq!(params(2048, 1365, 63).m, 341);
        // Minimal geometry: p = 2 packs one bit per template.
        let tiny = params(2, 1, 1);
        assert_eq!((tiny.p, tiny.digit_bits, tiny.m), (2, 1, 2));
    }

    #[test]
    fn capacity_rejects_hopeless_slots() {
        assert!(matches!(
            PackingParams::capacity(5, 341, 63),
            Err(Error::CapacityTooSmall(_))
        ));
        assert!(matches!(
            PackingParams::capacity(2048, 0, 63),
            Err(Error::RangeViolation(_))
        ));
    }

    #[test]
    fn encode_decode_worked_example() {
        // Two d = 3 templates packed at 3-bit digits.
        let pk = PackingParams {
            p: 8,
            digit_bits: 3,
            m: 2,
            slot_bits: 6,
        };
        let z1 = TernaryTemplate::from_values(vec![1, 0, -1]).unwrap();
        let z2 = TernaryTemplate::from_values(vec![-1, 1, 0]).unwrap();
        let cols = encode(&[split(&z1), split(&z2)], pk).unwrap();
        let as_u64 =
            |v: &[BigUint]| -> Vec<u64> { v.iter().map(|b| b.to_u64().unwrap()).collect() };
        assert_eq!(as_u64(&cols.plus), vec![1, 8, 0]);
        assert_eq!(as_u64(&cols.minus), vec![8, 0, 1]);

        // Score y = (1, −1, 0): s⁺ = x⁺[0] + x⁻[1], s⁻ = x⁻[0] + x⁺[1].
        let s_plus = &cols.plus[0] + &cols.minus[1];
        let s_minus = &cols.minus[0] + &cols.plus[1];
        assert_eq!(s_plus, BigUint::from_u64(1).unwrap());
        assert_eq!(s_minus, BigUint::from_u64(16).unwrap());
        assert_eq!(decode(&s_plus, &s_minus, pk).unwrap(), vec![1, -2]);

        // Matches the direct ternary inner products.
        let y = TernaryTemplate::from_values(vec![1, -1, 0]).unwrap();
        assert_eq!(ternary_inner(&z1, &y).unwrap(), 1);
        assert_eq!(ternary_inner(&z2, &y).unwrap(), -2);
    }

    #[test]
    fn encode_rejects_overfull_and_mismatched_batches() {
        let pk = params(6, 2, 2); // w = 2, m = 3
        let z = TernaryTemplate::from_values(vec![1, -1, 0]).unwrap();
        let s = split(&z);
        assert!(matches!(
            encode(&vec![s.clone(); 4], pk),
            Err(Error::TooManyTemplates { capacity: 3, got: 4 })
        ));
        let z4 = TernaryTemplate::from_values(vec![1, -1, 0, 1]).unwrap();
        assert!(matches!(
            encode(&[s.clone(), split(&z4)], pk),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            encode(&[], pk),
            Err(Error::RangeViolation(_))
        ));
    }

    #[test]
    fn decode_rejects_out_of_range_accumulations() {
        let pk = params(6, 2, 2); // packed_bits = 6
        let too_big = BigUint::one() << 6;
        assert!(matches!(
            decode(&too_big, &BigUint::zero(), pk),
            Err(Error::Overflow(_))
        ));
    }

    /// Exhaustive no-carry sweeps at the small-parameter boundary: every
    /// template tuple × every query in each configuration, packed scoring
    /// must equal per-template ternary inner products exactly.
    #[test]
    fn packed_scoring_matches_per_template_scoring_exhaustively() {
        fn all_weight(d: usize, k: usize) -> Vec<TernaryTemplate> {
            let mut out = Vec::new();
            // Every ternary vector of dimension d via base-3 counting, keep
            // the ones with exactly k nonzeros.
            for code in 0..3usize.pow(d as u32) {
                let mut c = code;
                let mut values = Vec::with_capacity(d);
                for _ in 0..d {
                    values.push([0i8, 1, -1][c % 3]);
                    c /= 3;
                }
                if values.iter().filter(|&&v| v != 0).count() == k {
                    out.push(TernaryTemplate::from_values(values).unwrap());
                }
            }
            out
        }

        // (d, α, β, m) corners within d ≤ 6, α,β ≤ 3, m ≤ 3. Slot width is
        // chosen so capacity yields exactly the target m.
        let configs: [(usize, usize, usize, usize); 3] =
            [(3, 2, 2, 3), (4, 3, 3, 2), (6, 3, 3, 1)];
        for (d, alpha, beta, m) in configs {
            let w = 64 - ((alpha.min(beta) as u64).leading_zeros());
            let pk = params(w * m as u32, alpha, beta);
            assert_eq!(pk.m, m);
            let enrolled = all_weight(d, alpha);
            let queries = all_weight(d, beta);
            // Every ordered m-tuple of enrolled templates (with repetition).
            let tuple_count = enrolled.len().pow(m as u32);
            for t in 0..tuple_count {
                let mut idx = t;
                let mut batch = Vec::with_capacity(m);
                for _ in 0..m {
                    batch.push(enrolled[idx % enrolled.len()].clone());
                    idx /= enrolled.len();
                }
                for y in &queries {
                    let packed = plain_scores(&batch, y, pk);
                    for (b, s) in batch.iter().zip(&packed) {
                        assert_eq!(*s, ternary_inner(b, y).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn packed_scoring_matches_on_random_large_batches() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let pk = params(64, 5, 3); // p = 4, w = 2, m = 32
        for _ in 0..50 {
            let batch: Vec<TernaryTemplate> = (0..pk.m)
                .map(|_| {
                    let x = FeatureTemplate::new(
                        (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    )
                    .unwrap();
                    ternarize(&x, 5).unwrap()
                })
                .collect();
            let y = {
                let x =
                    FeatureTemplate::new((0..16).map(|_| rng.gen_range(-1.0..1.0)).collect())
                        .unwrap();
                ternarize(&x, 3).unwrap()
            };
            let packed = plain_scores(&batch, &y, pk);
            for (b, s) in batch.iter().zip(&packed) {
                assert_eq!(*s, ternary_inner(b, &y).unwrap());
            }
        }
    }

    use rand::Rng;

    #[test]
    fn padded_positions_decode_to_zero() {
        let pk = params(12, 2, 2); // m = 6
        let z = TernaryTemplate::from_values(vec![1, -1, 0]).unwrap();
        let cols = encode(&[split(&z)], pk).unwrap();
        assert_eq!(cols.count, 1);
        let scores = decode(&cols.plus[0], &cols.minus[0], pk).unwrap();
        assert_eq!(scores.len(), pk.m);
        assert!(scores[1..].iter().all(|&s| s == 0));
    }
}
