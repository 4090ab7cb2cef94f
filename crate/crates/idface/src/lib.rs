//! Privacy-preserving biometric identification over additively homomorphic
//! encryption.
//!
//! The pipeline turns real-valued feature templates into ternary vectors that
//! approximately preserve angles, splits them into sign-disjoint binary masks,
//! packs many templates into few plaintext slots, and scores an encrypted
//! database against a plaintext query using only homomorphic additions. A
//! two-server protocol separates the party that stores ciphertexts from the
//! party that holds the decryption key, so neither ever sees both templates
//! and scores; an XOR secret-sharing variant offers the same matching decision
//! without any encryption.
//!
//! Modules, in pipeline order:
//!
//! * [`transform`] — ternarization `T_α`, sign splitting, ternary inner
//!   products, and angle-controlled samplers for the numerical experiments.
//! * [`packing`] — base-`2^w` digit packing of many ternary templates into one
//!   integer slot, with capacity arithmetic and exact decoding.
//! * [`ahe`] — additively homomorphic backends: a real Paillier cryptosystem
//!   and an explicitly insecure plaintext mock that imitates a large-slot SIMD
//!   scheme for shape and cost experiments.
//! * [`dbenc`] — encrypted-database construction and encrypted inner products,
//!   both the one-slot-per-value baseline and the packed variant that scores a
//!   whole batch with `2(β−1)` additions.
//! * [`protocol`] — the two-server enrollment/identification protocol over an
//!   in-process or TCP transport, with framed messages and transcripts.
//! * [`twopc`] — the XOR secret-sharing variant: share generation, Hamming
//!   weight scoring, subvector compression, and the μ-server generalization.
//! * [`analysis`] — numerical toolkit: the theoretical deviation bound
//!   `ε_{α,θ}` by adaptive quadrature, Monte-Carlo isometry checks, codebook
//!   size, order-statistic concentration, and communication/storage costs.
//!
//! Supporting modules: [`wire`] (framing and message codec), [`io`] (template
//! and key file formats), [`exec`] (data-parallel helpers with a sequential
//! fallback), and [`tolerances`] (every numeric tolerance used by tests, each
//! with its justification).
//!
//! # Example
//!
//! ```
//! use idface::{ahe, dbenc, packing, transform};
//! use rand::SeedableRng;
//!
//! // Small parameters so the doctest runs fast; defaults are d=512, α=341, β=63.
//! let (d, alpha, beta) = (16, 10, 6);
//! let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(7);
//!
//! // Keys and packing geometry.
//! let keys = ahe::paillier::KeyPair::generate(64, &mut rng).unwrap();
//! let backend = ahe::Backend::paillier(keys);
//! let params = packing::PackingParams::capacity(16, alpha, beta).unwrap();
//!
//! // Enroll two identities into one encrypted batch.
//! let x0 = transform::FeatureTemplate::new(vec![0.9, -0.1, 0.4, -0.7, 0.2, 0.6, -0.3, 0.8,
//!                                               0.1, -0.5, 0.35, 0.45, -0.25, 0.15, 0.55, -0.65]).unwrap();
//! let x1 = transform::FeatureTemplate::new(vec![-0.2, 0.7, -0.4, 0.3, -0.9, 0.25, 0.5, -0.1,
//!                                               0.6, 0.05, -0.45, 0.85, 0.4, -0.35, 0.2, -0.15]).unwrap();
//! let batch = dbenc::idface_enc_db(
//!     &[("ana".into(), x0.clone()), ("bo".into(), x1)],
//!     d, alpha, params, &backend,
//! ).unwrap();
//!
//! // Score a probe of the first identity; the query is ternarized with T_β
//! // inside the inner-product operation.
//! let pair = dbenc::idface_ip_db(&x0, &batch, beta, &backend).unwrap();
//! let scores = dbenc::decrypt_scores(&pair, &batch, &backend).unwrap();
//!
//! // The genuine identity scores the full β overlap.
//! assert_eq!(scores[0], beta as i64);
//! assert!(scores[0] > scores[1]);
//! ```
#![forbid(unsafe_code)]
#![warn(missing_docs)]

pub mod ahe;
pub mod analysis;
pub mod dbenc;
mod error;
pub mod exec;
pub mod io;
pub mod packing;
pub mod protocol;
pub mod tolerances;
pub mod transform;
pub mod twopc;
pub mod wire;

pub use error::{Error, Result};

/// Default embedding dimension of the face-recognition feature extractor.
pub const DEFAULT_DIM: usize = 512;
/// Default enrollment sparsity α (the codebook-optimal ⌊2d/3⌋ for d = 512).
pub const DEFAULT_ALPHA: usize = 341;
/// Default query sparsity β.
pub const DEFAULT_BETA: usize = 63;
/// Default acceptance threshold τ on the rescaled cosine score.
pub const DEFAULT_TAU: f64 = 0.5;
