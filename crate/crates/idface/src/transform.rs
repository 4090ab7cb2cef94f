//! Ternary almost-isometric transform, sign splitting, and angle-controlled
//! pair samplers.
//!
//! `T_k` keeps the `k` coordinates of largest absolute value as their signs
//! and zeroes the rest, mapping a real feature vector into the ternary
//! codebook `Z^d_k` (exactly `k` nonzero entries in `{−1,+1}`). Inner
//! products of ternarized vectors track the cosine of the originals up to a
//! small, analytically bounded deviation, which is what lets the rest of the
//! pipeline match identities on integers instead of reals.
//!
//! A ternary vector `z` splits into disjoint binary masks `z = z⁺ − z⁻`, so
//! every downstream consumer (packing, encryption, secret sharing) works on
//! nonnegative values, and the signed inner product is recovered from four
//! nonnegative ones:
//! `⟨a,b⟩ = (⟨a⁺,b⁺⟩ + ⟨a⁻,b⁻⟩) − (⟨a⁺,b⁻⟩ + ⟨a⁻,b⁺⟩)`.
//!
//! The two samplers produce vector pairs with a controlled angle — one
//! exactly on the unit sphere, one from the Gaussian construction whose
//! concentration the analysis module measures.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// A real-valued feature vector as produced by an embedding model.
///
/// Invariants: dimension ≥ 2 and every entry finite. Construction enforces
/// both, so downstream sorting and arithmetic never meet NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTemplate {
    values: Vec<f64>,
}

impl FeatureTemplate {
    /// Validates and wraps raw feature values.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::RangeViolation(format!(
                "feature dimension must be at least 2, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput(format!(
                "non-finite feature value {bad}"
            )));
        }
        Ok(Self { values })
    }

    /// Dimension `d`.
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Raw coordinates.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Unit-normalized copy; fails on (numerically) zero vectors.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::DegenerateInput(
                "cannot normalize a zero vector".into(),
            ));
        }
        Ok(Self {
            values: self.values.iter().map(|v| v / n).collect(),
        })
    }

    /// Plain dot product with another template of the same dimension.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum())
    }
}

/// A ternary template: entries in `{−1, 0, +1}` with exactly `k` nonzeros.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TernaryTemplate {
    values: Vec<i8>,
    k: usize,
}

impl TernaryTemplate {
    /// Validates raw ternary values (entries in `{−1,0,+1}`, at least one
    /// nonzero) and records the nonzero count.
    pub fn from_values(values: Vec<i8>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::RangeViolation(format!(
                "ternary dimension must be at least 2, got {}",
                values.len()
            )));
        }
        let mut k = 0usize;
        for &v in &values {
            match v {
                -1 | 1 => k += 1,
                0 => {}
                other => {
                    return Err(Error::RangeViolation(format!(
                        "ternary entry must be in {{-1,0,1}}, got {other}"
                    )))
                }
            }
        }
        if k == 0 {
            return Err(Error::DegenerateInput(
                "ternary template must have at least one nonzero entry".into(),
            ));
        }
        Ok(Self { values, k })
    }

    /// Dimension `d`.
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Nonzero count `k` (the sparsity the template was built with).
    pub fn weight(&self) -> usize {
        self.k
    }

    /// Raw entries.
    pub fn values(&self) -> &[i8] {
        &self.values
    }
}

/// Sign-split form of a ternary template: `z = plus − minus` with disjoint
/// supports; `popcount(plus) + popcount(minus) = k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinarySplit {
    /// Indicator of the `+1` entries.
    pub plus: Vec<u8>,
    /// Indicator of the `−1` entries.
    pub minus: Vec<u8>,
}

impl BinarySplit {
    /// Dimension `d`.
    pub fn dim(&self) -> usize {
        self.plus.len()
    }

    /// Number of `+1` entries.
    pub fn count_plus(&self) -> usize {
        self.plus.iter().map(|&b| b as usize).sum()
    }

    /// Number of `−1` entries.
    pub fn count_minus(&self) -> usize {
        self.minus.iter().map(|&b| b as usize).sum()
    }

    /// Indices where `plus` is set, ascending.
    pub fn plus_support(&self) -> Vec<usize> {
        support(&self.plus)
    }

    /// Indices where `minus` is set, ascending.
    pub fn minus_support(&self) -> Vec<usize> {
        support(&self.minus)
    }

    /// Reassembles the ternary template `plus − minus`.
    pub fn recombine(&self) -> Result<TernaryTemplate> {
        let values = self
            .plus
            .iter()
            .zip(&self.minus)
            .map(|(&p, &m)| p as i8 - m as i8)
            .collect();
        TernaryTemplate::from_values(values)
    }
}

fn support(bits: &[u8]) -> Vec<usize> {
    bits.iter()
        .enumerate()
        .filter_map(|(i, &b)| (b == 1).then_some(i))
        .collect()
}

/// `T_k`: keep the `k` largest-magnitude coordinates as their signs, zero the
/// rest. Ties in magnitude are broken toward the lower index, making the
/// output a deterministic function of the input.
pub fn ternarize(x: &FeatureTemplate, k: usize) -> Result<TernaryTemplate> {
    let d = x.dim();
    if k == 0 {
        return Err(Error::RangeViolation(
            "sparsity k must be at least 1".into(),
        ));
    }
    if k > d {
        return Err(Error::DimensionMismatch { expected: d, got: k });
    }
    let mut order: Vec<usize> = (0..d).collect();
    // Stable sort by descending |x|: equal magnitudes keep ascending index
    // order, which is exactly the lower-index-first tie-break.
    order.sort_by(|&i, &j| {
        x.values[j]
            .abs()
            .partial_cmp(&x.values[i].abs())
            .expect("finite by construction")
    });
    if x.values[order[k - 1]] == 0.0 {
        return Err(Error::DegenerateInput(format!(
            "fewer than k = {k} nonzero coordinates"
        )));
    }
    let mut values = vec![0i8; d];
    for &idx in &order[..k] {
        values[idx] = if x.values[idx] > 0.0 { 1 } else { -1 };
    }
    Ok(TernaryTemplate { values, k })
}

/// Splits a ternary template into its disjoint positive and negative masks.
pub fn split(z: &TernaryTemplate) -> BinarySplit {
    let mut plus = vec![0u8; z.dim()];
    let mut minus = vec![0u8; z.dim()];
    for (i, &v) in z.values.iter().enumerate() {
        match v {
            1 => plus[i] = 1,
            -1 => minus[i] = 1,
            _ => {}
        }
    }
    BinarySplit { plus, minus }
}

/// Exact integer inner product of two ternary templates.
pub fn ternary_inner(a: &TernaryTemplate, b: &TernaryTemplate) -> Result<i64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(&x, &y)| (x as i64) * (y as i64))
        .sum())
}

/// Maps an integer ternary score into cosine range: `s / √(k_enroll·k_query)`.
///
/// Monotone in `s`, so argmax decisions are unchanged; the scale constant
/// makes thresholds comparable to plain cosine thresholds.
pub fn rescaled_cosine(score: i64, k_enroll: usize, k_query: usize) -> Result<f64> {
    if k_enroll == 0 || k_query == 0 {
        return Err(Error::RangeViolation(
            "sparsities must be at least 1".into(),
        ));
    }
    let cap = k_enroll.min(k_query) as i64;
    if score.abs() > cap {
        return Err(Error::RangeViolation(format!(
            "score {score} exceeds the attainable bound ±{cap}"
        )));
    }
    Ok(score as f64 / ((k_enroll as f64) * (k_query as f64)).sqrt())
}

/// Samples a standard Gaussian vector of dimension `d`.
pub fn gaussian_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

/// Draws a uniformly random unit pair `(x, w)` with `⟨x, w⟩ = cos θ` exactly
/// (to floating-point error): `x` uniform on the sphere, `w = cosθ·x +
/// sinθ·u` for a uniform unit `u` orthogonal to `x`.
pub fn sample_pair_exact_angle<R: Rng + ?Sized>(
    d: usize,
    theta: f64,
    rng: &mut R,
) -> Result<(FeatureTemplate, FeatureTemplate)> {
    if d < 2 {
        return Err(Error::RangeViolation(format!(
            "need dimension at least 2 to realize an angle, got {d}"
        )));
    }
    if !(theta > 0.0 && theta < std::f64::consts::PI) {
        return Err(Error::InvalidAngle(format!(
            "theta must lie in (0, π), got {theta}"
        )));
    }
    let x = random_unit(d, rng);
    // Gram-Schmidt a second Gaussian draw against x; the result is uniform on
    // the orthogonal sphere. Zero-norm rejections have probability 0 but keep
    // the loop total anyway.
    let u = loop {
        let v = gaussian_vector(d, rng);
        let proj: f64 = v.iter().zip(&x).map(|(a, b)| a * b).sum();
        let mut u: Vec<f64> = v.iter().zip(&x).map(|(a, b)| a - proj * b).collect();
        let n = norm(&u);
        if n > 1e-12 {
            u.iter_mut().for_each(|c| *c /= n);
            break u;
        }
    };
    let (s, c) = theta.sin_cos();
    let w: Vec<f64> = x.iter().zip(&u).map(|(xi, ui)| c * xi + s * ui).collect();
    Ok((FeatureTemplate { values: x }, FeatureTemplate { values: w }))
}

/// Draws the Gaussian construction `(X, W)` with `X, Y` independent standard
/// Gaussian vectors and `W = cosθ·X + sinθ·Y`, whose normalized inner
/// product concentrates near `cos θ` as `d` grows. Defined for all angles in
/// `(0, π)` except `π/2` (where the construction's variance parameter
/// `tan θ` is undefined).
pub fn sample_pair_gaussian<R: Rng + ?Sized>(
    d: usize,
    theta: f64,
    rng: &mut R,
) -> Result<(FeatureTemplate, FeatureTemplate)> {
    if d < 2 {
        return Err(Error::RangeViolation(format!(
            "need dimension at least 2, got {d}"
        )));
    }
    if !(theta > 0.0 && theta < std::f64::consts::PI) || theta == std::f64::consts::FRAC_PI_2 {
        return Err(Error::InvalidAngle(format!(
            "theta must lie in (0, π/2) ∪ (π/2, π), got {theta}"
        )));
    }
    let x = gaussian_vector(d, rng);
    let y = gaussian_vector(d, rng);
    let (s, c) = theta.sin_cos();
    let w: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| c * xi + s * yi).collect();
    Ok((FeatureTemplate { values: x }, FeatureTemplate { values: w }))
}

/// Cosine of the angle between two templates.
pub fn normalized_inner(a: &FeatureTemplate, b: &FeatureTemplate) -> Result<f64> {
    let num = a.dot(b)?;
    let den = a.norm() * b.norm();
    if den == 0.0 {
        return Err(Error::DegenerateInput("zero-norm operand".into()));
    }
    Ok(num / den)
}

fn random_unit<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut v = gaussian_vector(d, rng);
        let n = norm(&v);
        if n > 1e-12 {
            v.iter_mut().for_each(|c| *c /= n);
            return v;
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tolerances::{EXACT_ANGLE_DOT_TOL, GAUSS_PAIR_MEAN_TOL, GAUSS_PAIR_SMALL_ANGLE_MIN};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};

    fn feat(values: &[f64]) -> FeatureTemplate {
        FeatureTemplate::new(values.to_vec()).unwrap()
    }

    fn tern(values: &[i8]) -> TernaryTemplate {
        TernaryTemplate::from_values(values.to_vec()).unwrap()
    }

    #[test]
    fn ternarize_keeps_top_magnitudes_with_signs() {
        let z = ternarize(&feat(&[0.8, -0.5, 0.2, -0.1]), 2).unwrap();
        assert_eq!(z.values(), &[1, -1, 0, 0]);
        assert_eq!(z.weight(), 2);
    }

    #[test]
    fn ternarize_breaks_magnitude_ties_toward_lower_index() {
        let z = ternarize(&feat(&[0.3, 0.3, -0.3, 0.1]), 2).unwrap();
        assert_eq!(z.values(), &[1, 1, 0, 0]);
    }

    #[test]
    fn ternarize_rejects_degenerate_and_out_of_range_inputs() {
        assert!(matches!(
            ternarize(&feat(&[1.0, 0.0, 0.0]), 2),
            Err(Error::DegenerateInput(_))
        ));
        assert!(matches!(
            ternarize(&feat(&[1.0, 2.0]), 3),
            Err(Error::DimensionMismatch { expected: 2, got: 3 })
        ));
        assert!(matches!(
            ternarize(&feat(&[1.0, 2.0]), 0),
            Err(Error::RangeViolation(_))
        ));
    }

    #[test]
    fn ternarize_matches_sort_oracle_on_gaussians() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..50 {
            let x = feat(&gaussian_vector(512, &mut rng));
            let z = ternarize(&x, 341).unwrap();
            assert_eq!(z.weight(), 341);
            assert_eq!(z.values().iter().filter(|&&v| v != 0).count(), 341);
            // Signs agree with the source on the support, and the support
            // magnitude floor dominates every off-support magnitude.
            let mut kept: Vec<f64> = Vec::new();
            let mut dropped: Vec<f64> = Vec::new();
            for (xv, &zv) in x.values().iter().zip(z.values()) {
                if zv != 0 {
                    assert_eq!(zv as f64, xv.signum());
                    kept.push(xv.abs());
                } else {
                    dropped.push(xv.abs());
                }
            }
            let floor = kept.iter().cloned().fold(f64::INFINITY, f64::min);
            let ceil = dropped.iter().cloned().fold(0.0, f64::max);
            assert!(floor >= ceil);
        }
    }

    #[test]
    fn split_separates_signs_and_recombines() {
        let z = tern(&[1, -1, 0]);
        let s = split(&z);
        assert_eq!(s.plus, vec![1, 0, 0]);
        assert_eq!(s.minus, vec![0, 1, 0]);
        assert_eq!(s.recombine().unwrap(), z);

        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let x = feat(&gaussian_vector(24, &mut rng));
            let z = ternarize(&x, 7).unwrap();
            let s = split(&z);
            assert_eq!(s.recombine().unwrap(), z);
            assert_eq!(s.count_plus() + s.count_minus(), 7);
            // Disjoint supports.
            assert!(s.plus.iter().zip(&s.minus).all(|(&p, &m)| p & m == 0));
        }
    }

    #[test]
    fn ternary_inner_examples_and_split_identity() {
        assert_eq!(
            ternary_inner(&tern(&[1, -1, 0, 0]), &tern(&[0, -1, 1, 0])).unwrap(),
            1
        );
        let z = tern(&[1, 0, -1, 1, -1, 0]);
        assert_eq!(ternary_inner(&z, &z).unwrap(), z.weight() as i64);

        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..500 {
            let a = ternarize(&feat(&gaussian_vector(32, &mut rng)), 9).unwrap();
            let b = ternarize(&feat(&gaussian_vector(32, &mut rng)), 5).unwrap();
            let (sa, sb) = (split(&a), split(&b));
            let dot = |p: &[u8], q: &[u8]| -> i64 {
                p.iter().zip(q).map(|(&x, &y)| (x & y) as i64).sum()
            };
            let four_way = dot(&sa.plus, &sb.plus) + dot(&sa.minus, &sb.minus)
                - dot(&sa.plus, &sb.minus)
                - dot(&sa.minus, &sb.plus);
            assert_eq!(ternary_inner(&a, &b).unwrap(), four_way);
        }
    }

    #[test]
    fn rescaled_cosine_hits_closed_forms() {
        assert_eq!(rescaled_cosine(341, 341, 341).unwrap(), 1.0);
        assert_eq!(rescaled_cosine(0, 341, 63).unwrap(), 0.0);
        // Full overlap at mixed sparsities caps the attainable cosine at
        // √(63/341) ≈ 0.4298.
        let cap = rescaled_cosine(63, 341, 63).unwrap();
        assert!((cap - (63f64 / 341f64).sqrt()).abs() < 1e-15);
        assert!((cap - 0.4298).abs() < 5e-5);
        assert!(matches!(
            rescaled_cosine(64, 341, 63),
            Err(Error::RangeViolation(_))
        ));
    }

    #[test]
    fn exact_angle_pairs_realize_the_requested_cosine() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let (x, w) = sample_pair_exact_angle(512, FRAC_PI_2, &mut rng).unwrap();
        assert!(x.dot(&w).unwrap().abs() < EXACT_ANGLE_DOT_TOL);

        let (x, w) = sample_pair_exact_angle(512, FRAC_PI_3, &mut rng).unwrap();
        assert!((x.dot(&w).unwrap() - 0.5).abs() < EXACT_ANGLE_DOT_TOL);

        let mut mean = 0.0;
        for _ in 0..100 {
            let (x, w) = sample_pair_exact_angle(512, 1.0, &mut rng).unwrap();
            assert!((x.norm() - 1.0).abs() < EXACT_ANGLE_DOT_TOL);
            assert!((w.norm() - 1.0).abs() < EXACT_ANGLE_DOT_TOL);
            mean += x.dot(&w).unwrap();
        }
        mean /= 100.0;
        assert!((mean - 1.0f64.cos()).abs() < EXACT_ANGLE_DOT_TOL);
    }

    #[test]
    fn exact_angle_rejects_out_of_domain_angles() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        for bad in [0.0, -0.5, PI, PI + 0.1, f64::NAN] {
            assert!(matches!(
                sample_pair_exact_angle(8, bad, &mut rng),
                Err(Error::InvalidAngle(_))
            ));
        }
    }

    #[test]
    fn gaussian_pairs_concentrate_near_cos_theta() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let mut mean = 0.0;
        for _ in 0..1000 {
            let (x, w) = sample_pair_gaussian(2048, FRAC_PI_3, &mut rng).unwrap();
            mean += normalized_inner(&x, &w).unwrap();
        }
        mean /= 1000.0;
        assert!((mean - 0.5).abs() < GAUSS_PAIR_MEAN_TOL);

        let mut small = 0.0;
        for _ in 0..200 {
            let (x, w) = sample_pair_gaussian(1024, 0.05, &mut rng).unwrap();
            small += normalized_inner(&x, &w).unwrap();
        }
        small /= 200.0;
        assert!(small > GAUSS_PAIR_SMALL_ANGLE_MIN);
    }

    #[test]
    fn gaussian_pair_error_shrinks_with_dimension() {
        // Mean |cos deviation| averaged over 5 seeds must strictly drop from
        // d = 64 to d = 4096 at a fixed angle.
        let theta: f64 = 1.1;
        let mean_abs_err = |d: usize, seed: u64| -> f64 {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let mut acc = 0.0;
            for _ in 0..200 {
                let (x, w) = sample_pair_gaussian(d, theta, &mut rng).unwrap();
                acc += (normalized_inner(&x, &w).unwrap() - theta.cos()).abs();
            }
            acc / 200.0
        };
        let avg =
            |d: usize| -> f64 { (0..5).map(|s| mean_abs_err(d, 100 + s)).sum::<f64>() / 5.0 };
        assert!(avg(4096) < avg(64));
    }

    #[test]
    fn gaussian_pair_handles_obtuse_angles() {
        // The signed construction must land near cos θ (negative), not |cos θ|.
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let theta: f64 = 2.2;
        let mut mean = 0.0;
        for _ in 0..500 {
            let (x, w) = sample_pair_gaussian(1024, theta, &mut rng).unwrap();
            mean += normalized_inner(&x, &w).unwrap();
        }
        mean /= 500.0;
        assert!((mean - theta.cos()).abs() < GAUSS_PAIR_MEAN_TOL);
        assert!(mean < 0.0);
    }

    #[test]
    fn gaussian_pair_rejects_right_angle() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        assert!(matches!(
            sample_pair_gaussian(8, FRAC_PI_2, &mut rng),
            Err(Error::InvalidAngle(_))
        ));
    }

    #[test]
    fn feature_template_validation() {
        assert!(matches!(
            FeatureTemplate::new(vec![1.0]),
            Err(Error::RangeViolation(_))
        ));
        assert!(matches!(
            FeatureTemplate::new(vec![1.0, f64::NAN]),
            Err(Error::DegenerateInput(_))
        ));
        assert!(matches!(
            FeatureTemplate::new(vec![1.0, f64::INFINITY]),
            Err(Error::DegenerateInput(_))
        ));
        let t = feat(&[3.0, 4.0]);
        assert_eq!(t.norm(), 5.0);
        assert!((t.normalized().unwrap().norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ternary_template_validation() {
        assert!(matches!(
            TernaryTemplate::from_values(vec![0, 2, 0]),
            Err(Error::RangeViolation(_))
        ));
        assert!(matches!(
            TernaryTemplate::from_values(vec![0, 0, 0]),
            Err(Error::DegenerateInput(_))
        ));
    }
}
