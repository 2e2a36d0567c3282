//! Homomorphic-encryption capability shared by the tree and the protocol.
//!
//! [`HeContext`] binds one parameter set and dispatches every operation to
//! either the exact `plain` reference backend or the leveled `ckks` scheme.
//! Ciphertexts, keys and contexts are immutable values; every operation is
//! a pure function of its inputs apart from encryption randomness.

mod depth;
mod eval;
mod keys;
pub mod plain;
mod wire;

use std::fmt;

use rand::{CryptoRng, Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::ckks::{CkksCiphertext, CkksContext, CkksError, CkksParams, CkksPublicKey, CkksRelinKey, CkksSecretKey};
use plain::{PlainCiphertext, WideFloat};

pub use depth::{depth_error_bound, product_tree_error, DESK_DEPTH_ERROR};
pub use eval::{Evaluator, OpCounts};
pub use keys::{KeyFile, KEY_MAGIC};
pub use wire::CIPHERTEXT_MAGIC;

/// Remaining depth reported for plain ciphertexts, whose depth is unbounded.
pub const UNBOUNDED_DEPTH: u32 = 1 << 30;

/// Default bound B on plaintext magnitudes accepted by `encrypt`.
pub const DEFAULT_PLAINTEXT_BOUND: f64 = (1u64 << 20) as f64;

/// Names accepted by [`SchemeParams::preset`].
pub const PRESETS: &[&str] =
    &["plain", "toy-insecure", "desk", "desk-1", "desk-2", "desk-3", "desk-4", "desk-5", "desk-6", "desk-7", "desk-8"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("plaintext {value} exceeds the bound {bound}")]
    OutOfRange { value: f64, bound: f64 },
    #[error("non-finite value")]
    NonFinite,
    #[error("backend mismatch: {left:?} vs {right:?}")]
    TagMismatch { left: BackendTag, right: BackendTag },
    #[error("level mismatch: {left} vs {right}")]
    LevelMismatch { left: u32, right: u32 },
    #[error("multiplicative depth exhausted")]
    DepthExhausted,
    #[error("parameter mismatch: expected '{expected}', found '{found}'")]
    ParamsMismatch { expected: String, found: String },
    #[error("scalar multiplier must be nonzero")]
    ZeroScalar,
    #[error("key file holds no secret key")]
    MissingSecretKey,
    #[error("malformed data: {0}")]
    Malformed(String),
    #[error(transparent)]
    Ckks(CkksError),
}

impl From<CkksError> for HeError {
    fn from(e: CkksError) -> Self {
        match e {
            CkksError::InvalidParams(m) => HeError::InvalidParams(m),
            CkksError::LevelMismatch { left, right } => {
                HeError::LevelMismatch { left: left as u32, right: right as u32 }
            }
            CkksError::LevelExhausted => HeError::DepthExhausted,
            CkksError::Malformed(m) => HeError::Malformed(m),
            other => HeError::Ckks(other),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BackendTag {
    Plain,
    Ckks,
}

impl BackendTag {
    pub fn code(self) -> u8 {
        match self {
            BackendTag::Plain => 0,
            BackendTag::Ckks => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(BackendTag::Plain),
            1 => Some(BackendTag::Ckks),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BackendTag::Plain => "plain",
            BackendTag::Ckks => "ckks",
        }
    }
}

impl fmt::Display for BackendTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A finite real plaintext.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Plaintext(f64);

impl Plaintext {
    pub fn new(value: f64) -> Result<Self, HeError> {
        if value.is_finite() {
            Ok(Self(value))
        } else {
            Err(HeError::NonFinite)
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Body {
    Plain(PlainCiphertext),
    Ckks(CkksCiphertext),
}

/// Encrypted scalar with level and scale metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Ciphertext {
    level: u32,
    scale: f64,
    body: Body,
}

impl Ciphertext {
    pub fn tag(&self) -> BackendTag {
        match self.body {
            Body::Plain(_) => BackendTag::Plain,
            Body::Ckks(_) => BackendTag::Ckks,
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    fn from_ckks(ct: CkksCiphertext) -> Self {
        Self { level: ct.level() as u32, scale: ct.scale(), body: Body::Ckks(ct) }
    }

    fn from_plain(ct: PlainCiphertext) -> Self {
        Self { level: UNBOUNDED_DEPTH, scale: 1.0, body: Body::Plain(ct) }
    }

    pub fn as_ckks(&self) -> Option<&CkksCiphertext> {
        match &self.body {
            Body::Ckks(ct) => Some(ct),
            Body::Plain(_) => None,
        }
    }
}

/// Remaining multiplicative depth of `c`.
pub fn remaining_depth(c: &Ciphertext) -> u32 {
    c.level
}

/// Which scheme to run, and with which parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum SchemeParams {
    Plain,
    Ckks(CkksParams),
}

impl SchemeParams {
    pub fn tag(&self) -> BackendTag {
        match self {
            SchemeParams::Plain => BackendTag::Plain,
            SchemeParams::Ckks(_) => BackendTag::Ckks,
        }
    }

    pub fn max_depth(&self) -> u32 {
        match self {
            SchemeParams::Plain => UNBOUNDED_DEPTH,
            SchemeParams::Ckks(p) => p.max_depth as u32,
        }
    }

    pub fn id(&self) -> String {
        match self {
            SchemeParams::Plain => "plain".to_string(),
            SchemeParams::Ckks(p) => p.id(),
        }
    }

    pub fn from_id(id: &str) -> Result<Self, HeError> {
        if id == "plain" {
            Ok(SchemeParams::Plain)
        } else {
            Ok(SchemeParams::Ckks(CkksParams::from_id(id)?))
        }
    }

    /// Named presets: `plain`, `toy-insecure`, `desk` (depth 6) and
    /// `desk-<d>` for depth 1 to 8.
    pub fn preset(name: &str) -> Option<Self> {
        use crate::ckks::params::{DESK_DEFAULT_DEPTH, DESK_MAX_DEPTH};
        match name {
            "plain" => Some(SchemeParams::Plain),
            "toy-insecure" => Some(SchemeParams::Ckks(CkksParams::toy_insecure())),
            "desk" => Some(SchemeParams::Ckks(CkksParams::desk(DESK_DEFAULT_DEPTH))),
            _ => {
                let depth: usize = name.strip_prefix("desk-")?.parse().ok()?;
                (1..=DESK_MAX_DEPTH).contains(&depth).then(|| SchemeParams::Ckks(CkksParams::desk(depth)))
            }
        }
    }

    pub fn is_insecure(&self) -> bool {
        match self {
            SchemeParams::Plain => true,
            SchemeParams::Ckks(p) => p.ring_degree < 8192,
        }
    }
}

/// Error thresholds of a backend. Configuration values, not constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub encrypt: f64,
    pub add: f64,
    pub mul: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { encrypt: 1e-6, add: 1e-6, mul: 1e-4 }
    }
}

#[derive(Clone, PartialEq)]
enum PublicInner {
    Plain([u8; 16]),
    Ckks(CkksPublicKey),
}

#[derive(Clone, PartialEq)]
enum SecretInner {
    Plain([u8; 16]),
    Ckks(CkksSecretKey),
}

#[derive(Clone, PartialEq)]
enum RelinInner {
    Plain,
    Ckks(CkksRelinKey),
}

#[derive(Clone, PartialEq)]
pub struct PublicKey {
    params_id: String,
    inner: PublicInner,
}

#[derive(Clone, PartialEq)]
pub struct SecretKey {
    params_id: String,
    inner: SecretInner,
}

#[derive(Clone, PartialEq)]
pub struct RelinKey {
    params_id: String,
    inner: RelinInner,
}

impl PublicKey {
    pub fn params_id(&self) -> &str {
        &self.params_id
    }
}

impl SecretKey {
    pub fn params_id(&self) -> &str {
        &self.params_id
    }
}

impl RelinKey {
    pub fn params_id(&self) -> &str {
        &self.params_id
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.params_id)
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretKey({}, <redacted>)", self.params_id)
    }
}

impl fmt::Debug for RelinKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RelinKey({})", self.params_id)
    }
}

/// Public, secret and relinearization keys for one parameter set. The
/// secret half is absent in public-only key files.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyPair {
    pub public: PublicKey,
    pub secret: Option<SecretKey>,
    pub relin: RelinKey,
}

impl KeyPair {
    pub fn params_id(&self) -> &str {
        &self.public.params_id
    }

    pub fn secret(&self) -> Result<&SecretKey, HeError> {
        self.secret.as_ref().ok_or(HeError::MissingSecretKey)
    }

    /// Copy without the secret key.
    pub fn public_only(&self) -> KeyPair {
        KeyPair { public: self.public.clone(), secret: None, relin: self.relin.clone() }
    }
}

/// A parameter set together with its precomputation.
pub struct HeContext {
    params: SchemeParams,
    id: String,
    plaintext_bound: f64,
    tolerances: Tolerances,
    ckks: Option<CkksContext>,
}

impl fmt::Debug for HeContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HeContext").field("params_id", &self.id).finish_non_exhaustive()
    }
}

impl HeContext {
    pub fn new(params: SchemeParams) -> Result<Self, HeError> {
        let ckks = match &params {
            SchemeParams::Plain => None,
            SchemeParams::Ckks(p) => Some(CkksContext::new(p.clone())?),
        };
        let id = params.id();
        Ok(Self { params, id, plaintext_bound: DEFAULT_PLAINTEXT_BOUND, tolerances: Tolerances::default(), ckks })
    }

    pub fn from_params_id(id: &str) -> Result<Self, HeError> {
        Self::new(SchemeParams::from_id(id)?)
    }

    pub fn with_plaintext_bound(mut self, bound: f64) -> Self {
        self.plaintext_bound = bound;
        self
    }

    pub fn with_tolerances(mut self, tolerances: Tolerances) -> Self {
        self.tolerances = tolerances;
        self
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn params_id(&self) -> &str {
        &self.id
    }

    pub fn tag(&self) -> BackendTag {
        self.params.tag()
    }

    pub fn max_depth(&self) -> u32 {
        self.params.max_depth()
    }

    pub fn plaintext_bound(&self) -> f64 {
        self.plaintext_bound
    }

    pub fn tolerances(&self) -> Tolerances {
        self.tolerances
    }

    pub fn ckks(&self) -> Option<&CkksContext> {
        self.ckks.as_ref()
    }

    fn ckks_ctx(&self) -> &CkksContext {
        self.ckks.as_ref().expect("ckks context present for ckks params")
    }

    pub fn check_id(&self, found: &str) -> Result<(), HeError> {
        if found != self.id {
            return Err(HeError::ParamsMismatch { expected: self.id.clone(), found: found.to_string() });
        }
        Ok(())
    }

    fn check_tag(&self, c: &Ciphertext) -> Result<(), HeError> {
        if c.tag() != self.tag() {
            return Err(HeError::TagMismatch { left: self.tag(), right: c.tag() });
        }
        Ok(())
    }

    /// Deterministic in `(params, seed)`.
    pub fn keygen(&self, seed: u64) -> Result<KeyPair, HeError> {
        self.keygen_with_rng(&mut ChaCha20Rng::seed_from_u64(seed))
    }

    pub fn keygen_with_rng<R: RngCore + CryptoRng>(&self, rng: &mut R) -> Result<KeyPair, HeError> {
        let params_id = self.id.clone();
        let keys = match &self.ckks {
            None => {
                let nonce: [u8; 16] = rng.gen();
                KeyPair {
                    public: PublicKey { params_id: params_id.clone(), inner: PublicInner::Plain(nonce) },
                    secret: Some(SecretKey { params_id: params_id.clone(), inner: SecretInner::Plain(nonce) }),
                    relin: RelinKey { params_id, inner: RelinInner::Plain },
                }
            }
            Some(ctx) => {
                let (sk, pk, rlk) = ctx.keygen(rng);
                KeyPair {
                    public: PublicKey { params_id: params_id.clone(), inner: PublicInner::Ckks(pk) },
                    secret: Some(SecretKey { params_id: params_id.clone(), inner: SecretInner::Ckks(sk) }),
                    relin: RelinKey { params_id, inner: RelinInner::Ckks(rlk) },
                }
            }
        };
        Ok(keys)
    }

    /// Randomized encryption using the thread-local CSPRNG.
    pub fn encrypt(&self, pk: &PublicKey, m: f64) -> Result<Ciphertext, HeError> {
        self.encrypt_with_rng(pk, m, &mut rand::thread_rng())
    }

    pub fn encrypt_with_rng<R: RngCore + CryptoRng>(
        &self,
        pk: &PublicKey,
        m: f64,
        rng: &mut R,
    ) -> Result<Ciphertext, HeError> {
        self.check_id(&pk.params_id)?;
        let m = Plaintext::new(m)?.value();
        if m.abs() > self.plaintext_bound {
            return Err(HeError::OutOfRange { value: m, bound: self.plaintext_bound });
        }
        match &pk.inner {
            PublicInner::Plain(_) => {
                Ok(Ciphertext::from_plain(PlainCiphertext { value: WideFloat::from_f64(m), nonce: rng.gen() }))
            }
            PublicInner::Ckks(pk) => Ok(Ciphertext::from_ckks(self.ckks_ctx().encrypt(pk, m, rng)?)),
        }
    }

    pub fn decrypt(&self, sk: &SecretKey, c: &Ciphertext) -> Result<Plaintext, HeError> {
        self.check_id(&sk.params_id)?;
        self.check_tag(c)?;
        match (&sk.inner, &c.body) {
            (SecretInner::Plain(_), Body::Plain(p)) => Plaintext::new(p.value.to_f64()),
            (SecretInner::Ckks(sk), Body::Ckks(ct)) => Plaintext::new(self.ckks_ctx().decrypt(sk, ct)?),
            _ => Err(HeError::TagMismatch { left: self.tag(), right: c.tag() }),
        }
    }

    fn check_pair(&self, a: &Ciphertext, b: &Ciphertext) -> Result<(), HeError> {
        if a.tag() != b.tag() {
            return Err(HeError::TagMismatch { left: a.tag(), right: b.tag() });
        }
        self.check_tag(a)?;
        if a.level != b.level {
            return Err(HeError::LevelMismatch { left: a.level, right: b.level });
        }
        Ok(())
    }

    /// `Dec(result) ≈ Dec(a) - Dec(b)`; level unchanged.
    pub fn hsub(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
        self.check_pair(a, b)?;
        match (&a.body, &b.body) {
            (Body::Plain(x), Body::Plain(y)) => Ok(Ciphertext::from_plain(PlainCiphertext {
                value: x.value.sub(&y.value),
                nonce: PlainCiphertext::mix_nonce(&x.nonce, &y.nonce),
            })),
            (Body::Ckks(x), Body::Ckks(y)) => Ok(Ciphertext::from_ckks(self.ckks_ctx().sub(x, y)?)),
            _ => unreachable!("tags checked"),
        }
    }

    /// `Dec(result) ≈ Dec(a)·Dec(b)`; consumes one level on ckks.
    pub fn hmul(&self, a: &Ciphertext, b: &Ciphertext, rlk: &RelinKey) -> Result<Ciphertext, HeError> {
        self.check_pair(a, b)?;
        self.check_id(&rlk.params_id)?;
        match (&a.body, &b.body, &rlk.inner) {
            (Body::Plain(x), Body::Plain(y), _) => Ok(Ciphertext::from_plain(PlainCiphertext {
                value: x.value.mul(&y.value),
                nonce: PlainCiphertext::mix_nonce(&y.nonce, &x.nonce),
            })),
            (Body::Ckks(x), Body::Ckks(y), RelinInner::Ckks(rlk)) => {
                if x.level() == 0 {
                    return Err(HeError::DepthExhausted);
                }
                Ok(Ciphertext::from_ckks(self.ckks_ctx().mul(x, y, rlk)?))
            }
            _ => Err(HeError::ParamsMismatch { expected: self.id.clone(), found: "plain relinearization key".into() }),
        }
    }

    /// `Dec(result) ≈ k·Dec(a)` for a public nonzero constant.
    pub fn hmul_plain(&self, a: &Ciphertext, k: f64) -> Result<Ciphertext, HeError> {
        self.check_tag(a)?;
        if !k.is_finite() {
            return Err(HeError::NonFinite);
        }
        if k == 0.0 {
            return Err(HeError::ZeroScalar);
        }
        match &a.body {
            Body::Plain(x) => Ok(Ciphertext::from_plain(PlainCiphertext {
                value: x.value.mul(&WideFloat::from_f64(k)),
                nonce: x.nonce,
            })),
            Body::Ckks(x) => {
                if x.level() == 0 {
                    return Err(HeError::DepthExhausted);
                }
                Ok(Ciphertext::from_ckks(self.ckks_ctx().mul_const(x, k)?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain() -> (HeContext, KeyPair) {
        let ctx = HeContext::new(SchemeParams::Plain).unwrap();
        let keys = ctx.keygen(7).unwrap();
        (ctx, keys)
    }

    fn toy() -> (HeContext, KeyPair) {
        let ctx = HeContext::new(SchemeParams::preset("toy-insecure").unwrap()).unwrap();
        let keys = ctx.keygen(1).unwrap();
        (ctx, keys)
    }

    #[test]
    fn plain_keygen_and_ids() {
        let (ctx, keys) = plain();
        assert_eq!(keys.params_id(), "plain");
        assert_eq!(ctx.keygen(7).unwrap(), keys);
        assert_ne!(ctx.keygen(8).unwrap(), keys);
    }

    #[test]
    fn ckks_keygen_depth() {
        let params = SchemeParams::Ckks(CkksParams::from_bit_sizes(4096, &[60, 40, 40, 40], 40, 3));
        let ctx = HeContext::new(params).unwrap();
        assert_eq!(ctx.max_depth(), 3);
        let keys = ctx.keygen(1).unwrap();
        let c = ctx.encrypt(&keys.public, 1.5).unwrap();
        assert_eq!(remaining_depth(&c), 3);
        let d = ctx.decrypt(keys.secret().unwrap(), &c).unwrap().value();
        assert!((d - 1.5).abs() < 1e-6);

        let short = SchemeParams::Ckks(CkksParams::from_bit_sizes(4096, &[60], 40, 3));
        assert!(matches!(HeContext::new(short), Err(HeError::InvalidParams(_))));
    }

    #[test]
    fn plain_ops_are_exact() {
        let (ctx, keys) = plain();
        let sk = keys.secret().unwrap();
        let e = |v| ctx.encrypt(&keys.public, v).unwrap();
        let d = |c: &Ciphertext| ctx.decrypt(sk, c).unwrap().value();
        assert_eq!(d(&e(0.0)), 0.0);
        assert_eq!(d(&ctx.hsub(&e(5.0), &e(3.0)).unwrap()), 2.0);
        assert_eq!(d(&ctx.hmul(&e(0.1), &e(0.3), &keys.relin).unwrap()), 0.1 * 0.3);
        assert_eq!(d(&ctx.hmul_plain(&e(4.0), 0.5).unwrap()), 2.0);
        let c = e(3.25);
        assert_eq!(remaining_depth(&c), UNBOUNDED_DEPTH);
        let c2 = ctx.hmul(&c, &c, &keys.relin).unwrap();
        assert_eq!(remaining_depth(&c2), UNBOUNDED_DEPTH);
    }

    #[test]
    fn plain_encryption_is_randomized() {
        let (ctx, keys) = plain();
        let payloads: std::collections::HashSet<Vec<u8>> =
            (0..100).map(|_| ctx.ciphertext_to_bytes(&ctx.encrypt(&keys.public, 3.25).unwrap())).collect();
        assert_eq!(payloads.len(), 100);
    }

    #[test]
    fn encrypt_guards() {
        let (ctx, keys) = plain();
        assert!(matches!(ctx.encrypt(&keys.public, f64::NAN), Err(HeError::NonFinite)));
        assert!(matches!(ctx.encrypt(&keys.public, 2f64.powi(30)), Err(HeError::OutOfRange { .. })));
        assert!(ctx.encrypt(&keys.public, 2f64.powi(20)).is_ok());
        let c = ctx.encrypt(&keys.public, 1.0).unwrap();
        assert!(matches!(ctx.hmul_plain(&c, 0.0), Err(HeError::ZeroScalar)));
    }

    #[test]
    fn mixed_backends_rejected() {
        let (pctx, pkeys) = plain();
        let (cctx, ckeys) = toy();
        let p = pctx.encrypt(&pkeys.public, 1.0).unwrap();
        let c = cctx.encrypt(&ckeys.public, 1.0).unwrap();
        assert!(matches!(pctx.hsub(&p, &c), Err(HeError::TagMismatch { .. })));
        assert!(matches!(cctx.hsub(&c, &p), Err(HeError::TagMismatch { .. })));
        assert!(matches!(cctx.decrypt(pkeys.secret().unwrap(), &c), Err(HeError::ParamsMismatch { .. })));
        assert!(matches!(cctx.encrypt(&pkeys.public, 1.0), Err(HeError::ParamsMismatch { .. })));
    }

    #[test]
    fn ckks_homomorphic_basics() {
        let (ctx, keys) = toy();
        let sk = keys.secret().unwrap();
        let tol = ctx.tolerances();
        let e = |v| ctx.encrypt(&keys.public, v).unwrap();
        let d = |c: &Ciphertext| ctx.decrypt(sk, c).unwrap().value();
        assert!(d(&e(0.0)).abs() <= tol.encrypt);
        assert!((d(&e(3.25)) - 3.25).abs() <= tol.encrypt);
        assert_ne!(ctx.ciphertext_to_bytes(&e(3.25)), ctx.ciphertext_to_bytes(&e(3.25)));
        assert!(d(&ctx.hsub(&e(7.0), &e(7.0)).unwrap()).abs() <= tol.add);
        assert!((d(&ctx.hsub(&e(5.0), &e(3.0)).unwrap()) - 2.0).abs() <= tol.add);
        let six = ctx.hmul(&e(2.0), &e(3.0), &keys.relin).unwrap();
        assert!((d(&six) - 6.0).abs() <= tol.mul);
        assert_eq!(remaining_depth(&six), 1);
        assert!(d(&ctx.hmul(&e(1.7), &e(0.0), &keys.relin).unwrap()).abs() <= tol.mul);
        let one = ctx.hmul_plain(&e(1.25), 1.0).unwrap();
        assert!((d(&one) - 1.25).abs() <= tol.mul);
        // Level mismatch between a fresh and a multiplied ciphertext.
        assert!(matches!(ctx.hsub(&e(1.0), &six), Err(HeError::LevelMismatch { .. })));
    }

    #[test]
    fn ckks_depth_accounting() {
        let (ctx, keys) = toy();
        let mut c = ctx.encrypt(&keys.public, 1.1).unwrap();
        for expected in (0..ctx.max_depth()).rev() {
            c = ctx.hmul(&c, &c, &keys.relin).unwrap();
            assert_eq!(remaining_depth(&c), expected);
        }
        assert!(matches!(ctx.hmul(&c, &c, &keys.relin), Err(HeError::DepthExhausted)));
        assert!(matches!(ctx.hmul_plain(&c, 2.0), Err(HeError::DepthExhausted)));
    }

    #[test]
    fn presets() {
        for name in PRESETS {
            assert!(SchemeParams::preset(name).is_some(), "{name}");
        }
        assert!(SchemeParams::preset("nope").is_none());
        assert!(SchemeParams::preset("desk-9").is_none());
        assert_eq!(SchemeParams::preset("desk").unwrap().max_depth(), 6);
    }
}
