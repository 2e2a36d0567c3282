//! Minimal leveled CKKS over a single encoded scalar.
//!
//! Values are encoded in the constant coefficient of the plaintext
//! polynomial. Ciphertexts are pairs `(c0, c1)` with `c0 + c1·s ≈ Δ·m`;
//! multiplication tensors, relinearizes with a base-2^20 RNS gadget, and
//! rescales by the top prime of the chain.

pub mod arith;
pub mod ntt;
pub mod params;
pub mod ring;
mod scheme;
mod serial;

use thiserror::Error;

pub use params::CkksParams;
pub use ring::{MulPath, RingContext, RingElem};
pub use scheme::{CkksCiphertext, CkksContext, CkksPublicKey, CkksRelinKey, CkksSecretKey, RELIN_BASE_BITS};
pub use serial::PAYLOAD_FORMAT;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum CkksError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("level mismatch: {left} vs {right}")]
    LevelMismatch { left: usize, right: usize },
    #[error("no modulus left to drop")]
    LevelExhausted,
    #[error("scale mismatch: {left} vs {right}")]
    ScaleMismatch { left: f64, right: f64 },
    #[error("value {value} times scale overflows the {bits:.1}-bit level modulus")]
    EncodeOverflow { value: f64, bits: f64 },
    #[error("expected {expected} ciphertext components, found {found}")]
    ComponentCount { expected: usize, found: usize },
    #[error("constant {0} rounds to zero or is not finite")]
    BadConstant(f64),
    #[error("the modulus chain is not NTT-friendly")]
    NoFastPath,
    #[error("malformed ckks payload: {0}")]
    Malformed(String),
}
