//! Exact-arithmetic reference backend.
//!
//! A plain "ciphertext" is the plaintext itself plus 16 random nonce bytes so
//! that re-encryptions differ. It offers no secrecy whatsoever and exists as
//! the correctness oracle for the encrypted backend.
//!
//! Values are held as an `f64` mantissa with a separate 64-bit exponent, so
//! products of many differences never overflow to infinity or flush to zero.
//! In the normal `f64` range every operation rounds exactly like the
//! corresponding `f64` operation.

/// Finite real number with an unbounded binary exponent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WideFloat {
    /// Zero, or a value with magnitude in [0.5, 1).
    mantissa: f64,
    exponent: i64,
}

fn frexp(v: f64) -> (f64, i64) {
    if v == 0.0 || !v.is_finite() {
        return (v, 0);
    }
    let bits = v.to_bits();
    let raw = ((bits >> 52) & 0x7ff) as i64;
    if raw == 0 {
        let (m, e) = frexp(v * 2f64.powi(64));
        return (m, e - 64);
    }
    let m = f64::from_bits((bits & !(0x7ffu64 << 52)) | (1022u64 << 52));
    (m, raw - 1022)
}

/// `x · 2^e` without intermediate overflow of the exponent argument.
fn ldexp(mut x: f64, mut e: i64) -> f64 {
    while e > 1000 && x.is_finite() && x != 0.0 {
        x *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 && x != 0.0 && x.is_finite() {
        x *= 2f64.powi(-1000);
        e += 1000;
    }
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    x * 2f64.powi(e as i32)
}

impl WideFloat {
    pub const ZERO: Self = Self { mantissa: 0.0, exponent: 0 };

    pub fn from_f64(v: f64) -> Self {
        debug_assert!(v.is_finite());
        let (mantissa, exponent) = frexp(v);
        Self { mantissa, exponent }
    }

    pub fn from_parts(mantissa: f64, exponent: i64) -> Option<Self> {
        if !mantissa.is_finite() {
            return None;
        }
        if mantissa == 0.0 {
            return Some(Self::ZERO);
        }
        let (m, e) = frexp(mantissa);
        Some(Self { mantissa: m, exponent: exponent.checked_add(e)? })
    }

    pub fn mantissa(&self) -> f64 {
        self.mantissa
    }

    pub fn exponent(&self) -> i64 {
        self.exponent
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa == 0.0
    }

    fn normalized(mantissa: f64, exponent: i64) -> Self {
        if mantissa == 0.0 {
            return Self::ZERO;
        }
        let (m, e) = frexp(mantissa);
        Self { mantissa: m, exponent: exponent.saturating_add(e) }
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self::normalized(self.mantissa * other.mantissa, self.exponent.saturating_add(other.exponent))
    }

    pub fn sub(&self, other: &Self) -> Self {
        if other.is_zero() {
            return *self;
        }
        if self.is_zero() {
            return Self { mantissa: -other.mantissa, exponent: other.exponent };
        }
        let e = self.exponent.max(other.exponent);
        let a = ldexp(self.mantissa, self.exponent - e);
        let b = ldexp(other.mantissa, other.exponent - e);
        Self::normalized(a - b, e)
    }

    /// Nearest `f64`, saturating: values beyond the range become `±f64::MAX`
    /// and nonzero values below it become the smallest subnormal of the same
    /// sign, so zero decrypts as zero exactly when it is zero.
    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let v = ldexp(self.mantissa, self.exponent);
        if v.is_infinite() {
            f64::MAX.copysign(self.mantissa)
        } else if v == 0.0 {
            f64::from_bits(1).copysign(self.mantissa)
        } else {
            v
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlainCiphertext {
    pub value: WideFloat,
    pub nonce: [u8; 16],
}

pub const PLAIN_PAYLOAD_LEN: usize = 32;

impl PlainCiphertext {
    /// `mantissa (8, IEEE-754 BE) | exponent (8, BE) | nonce (16)`.
    pub fn payload(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(PLAIN_PAYLOAD_LEN);
        out.extend_from_slice(&self.value.mantissa().to_be_bytes());
        out.extend_from_slice(&self.value.exponent().to_be_bytes());
        out.extend_from_slice(&self.nonce);
        out
    }

    pub fn from_payload(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != PLAIN_PAYLOAD_LEN {
            return None;
        }
        let mantissa = f64::from_be_bytes(bytes[0..8].try_into().ok()?);
        let exponent = i64::from_be_bytes(bytes[8..16].try_into().ok()?);
        let value = WideFloat::from_parts(mantissa, exponent)?;
        Some(Self { value, nonce: bytes[16..32].try_into().ok()? })
    }

    /// Nonce of a derived ciphertext; any deterministic mix works.
    pub fn mix_nonce(a: &[u8; 16], b: &[u8; 16]) -> [u8; 16] {
        let mut out = [0u8; 16];
        for i in 0..16 {
            out[i] = a[i] ^ b[(i + 1) % 16].rotate_left(3);
        }
        out
    }
}
