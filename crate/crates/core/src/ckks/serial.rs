//! Byte layouts for ciphertext payloads and key blobs.
//!
//! Ciphertext payload, format 1:
//! `format (1) | components (1) | N (4, BE) | components × N × coefficient`,
//! where each coefficient is the centered integer as
//! `sign (1: 0 = nonnegative, 1 = negative) | length (2, BE) | magnitude (BE)`.
//! Key blobs store raw RNS limbs as big-endian `u64` words.

use num_bigint::{BigInt, BigUint, Sign};

use super::ring::RingElem;
use super::scheme::{CkksCiphertext, CkksContext, CkksPublicKey, CkksRelinKey, CkksSecretKey, GadgetRow};
use super::CkksError;

pub const PAYLOAD_FORMAT: u8 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CkksError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CkksError::Malformed("unexpected end of data".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, CkksError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CkksError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CkksError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CkksError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn finish(self) -> Result<(), CkksError> {
        if self.pos != self.bytes.len() {
            return Err(CkksError::Malformed(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

impl CkksContext {
    pub fn ciphertext_payload(&self, ct: &CkksCiphertext) -> Vec<u8> {
        let n = self.params().ring_degree;
        let mut out = Vec::with_capacity(6 + ct.components() * n * 8 * (ct.level() + 1));
        out.push(PAYLOAD_FORMAT);
        out.push(ct.components() as u8);
        out.extend_from_slice(&(n as u32).to_be_bytes());
        for part in ct.parts() {
            for i in 0..n {
                let coeff = self.ring().lift_coefficient(part, i);
                let (sign, magnitude) = coeff.to_bytes_be();
                let magnitude: &[u8] = if coeff.sign() == Sign::NoSign { &[] } else { &magnitude };
                out.push(u8::from(sign == Sign::Minus));
                out.extend_from_slice(&(magnitude.len() as u16).to_be_bytes());
                out.extend_from_slice(magnitude);
            }
        }
        out
    }

    /// Parses a payload; `level` and `scale` come from the outer envelope.
    pub fn ciphertext_from_payload(&self, bytes: &[u8], level: usize, scale: f64) -> Result<CkksCiphertext, CkksError> {
        if level > self.max_level() {
            return Err(CkksError::Malformed(format!("level {level} exceeds chain top {}", self.max_level())));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(CkksError::Malformed(format!("bad scale {scale}")));
        }
        let mut r = Reader::new(bytes);
        let format = r.u8()?;
        if format != PAYLOAD_FORMAT {
            return Err(CkksError::Malformed(format!("unsupported payload format {format}")));
        }
        let components = r.u8()? as usize;
        if !(2..=3).contains(&components) {
            return Err(CkksError::ComponentCount { expected: 2, found: components });
        }
        let n = r.u32()? as usize;
        if n != self.params().ring_degree {
            return Err(CkksError::Malformed(format!(
                "ring degree {n} does not match parameters ({})",
                self.params().ring_degree
            )));
        }
        let level_modulus = self.ring().level_modulus(level);
        let mut parts = Vec::with_capacity(components);
        for _ in 0..components {
            let mut limbs = vec![vec![0u64; n]; level + 1];
            for i in 0..n {
                let sign = r.u8()?;
                let len = r.u16()? as usize;
                let magnitude = BigUint::from_bytes_be(r.take(len)?);
                if sign > 1 || &magnitude * 2u8 > *level_modulus {
                    return Err(CkksError::Malformed("coefficient outside the level modulus".into()));
                }
                let sign = if sign == 1 { Sign::Minus } else { Sign::Plus };
                let value = BigInt::from_biguint(sign, magnitude);
                for (limb, residue) in limbs.iter_mut().zip(self.ring().residues_of(&value, level)) {
                    limb[i] = residue;
                }
            }
            parts.push(RingElem::from_limbs(limbs));
        }
        r.finish()?;
        Ok(CkksCiphertext { parts, scale })
    }

    pub fn secret_key_bytes(&self, sk: &CkksSecretKey) -> Vec<u8> {
        sk.coeffs.iter().map(|&c| c as u8).collect()
    }

    pub fn secret_key_from_bytes(&self, bytes: &[u8]) -> Result<CkksSecretKey, CkksError> {
        if bytes.len() != self.params().ring_degree {
            return Err(CkksError::Malformed("secret key length does not match ring degree".into()));
        }
        let coeffs: Vec<i8> = bytes.iter().map(|&b| b as i8).collect();
        if coeffs.iter().any(|c| !(-1..=1).contains(c)) {
            return Err(CkksError::Malformed("secret key is not ternary".into()));
        }
        Ok(CkksSecretKey { coeffs })
    }

    fn write_elem(&self, out: &mut Vec<u8>, e: &RingElem) {
        for limb in e.limbs() {
            for &c in limb {
                out.extend_from_slice(&c.to_be_bytes());
            }
        }
    }

    fn read_elem(&self, r: &mut Reader<'_>) -> Result<RingElem, CkksError> {
        let n = self.params().ring_degree;
        let mut limbs = Vec::with_capacity(self.max_level() + 1);
        for m in &self.ring().moduli()[..=self.max_level()] {
            let mut limb = Vec::with_capacity(n);
            for _ in 0..n {
                let c = r.u64()?;
                if c >= m.value() {
                    return Err(CkksError::Malformed("key residue out of range".into()));
                }
                limb.push(c);
            }
            limbs.push(limb);
        }
        Ok(RingElem::from_limbs(limbs))
    }

    pub fn public_key_bytes(&self, pk: &CkksPublicKey) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_elem(&mut out, &pk.b);
        self.write_elem(&mut out, &pk.a);
        out
    }

    pub fn public_key_from_bytes(&self, bytes: &[u8]) -> Result<CkksPublicKey, CkksError> {
        let mut r = Reader::new(bytes);
        let b = self.read_elem(&mut r)?;
        let a = self.read_elem(&mut r)?;
        r.finish()?;
        Ok(CkksPublicKey { b, a })
    }

    pub fn relin_key_bytes(&self, rlk: &CkksRelinKey) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(rlk.rows.len() as u16).to_be_bytes());
        for row in &rlk.rows {
            out.push(row.prime as u8);
            out.push(row.digit as u8);
            self.write_elem(&mut out, &row.b);
            self.write_elem(&mut out, &row.a);
        }
        out
    }

    pub fn relin_key_from_bytes(&self, bytes: &[u8]) -> Result<CkksRelinKey, CkksError> {
        let mut r = Reader::new(bytes);
        let count = r.u16()? as usize;
        let mut rows = Vec::with_capacity(count);
        for _ in 0..count {
            let prime = r.u8()? as usize;
            let digit = r.u8()? as u32;
            if prime > self.max_level() {
                return Err(CkksError::Malformed("gadget row references an unknown prime".into()));
            }
            let b = self.read_elem(&mut r)?;
            let a = self.read_elem(&mut r)?;
            rows.push(GadgetRow { prime, digit, b, a });
        }
        r.finish()?;
        Ok(CkksRelinKey { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ckks::CkksParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn payload_roundtrip_and_layout() {
        let ctx = CkksContext::new(CkksParams::toy_insecure()).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let (sk, pk, rlk) = ctx.keygen(&mut rng);
        let ct = ctx.encrypt(&pk, -1.25, &mut rng).unwrap();
        let bytes = ctx.ciphertext_payload(&ct);
        assert_eq!(&bytes[..6], &[1, 2, 0, 0, 4, 0]);
        let back = ctx.ciphertext_from_payload(&bytes, ct.level(), ct.scale()).unwrap();
        assert_eq!(back, ct);
        assert!((ctx.decrypt(&sk, &back).unwrap() + 1.25).abs() < 1e-6);

        let mut bad = bytes.clone();
        bad[0] = 2;
        assert!(ctx.ciphertext_from_payload(&bad, ct.level(), ct.scale()).is_err());
        assert!(ctx.ciphertext_from_payload(&bytes[..bytes.len() - 1], ct.level(), ct.scale()).is_err());

        let rlk2 = ctx.relin_key_from_bytes(&ctx.relin_key_bytes(&rlk)).unwrap();
        assert_eq!(rlk2, rlk);
        assert_eq!(ctx.public_key_from_bytes(&ctx.public_key_bytes(&pk)).unwrap(), pk);
        assert_eq!(ctx.secret_key_from_bytes(&ctx.secret_key_bytes(&sk)).unwrap(), sk);
    }

    #[test]
    fn zero_coefficient_encoding() {
        let ctx = CkksContext::new(CkksParams::toy_insecure()).unwrap();
        let zero = RingElem::zero(ctx.ring(), 0);
        let ct = CkksCiphertext { parts: vec![zero.clone(), zero], scale: 1.0 };
        let bytes = ctx.ciphertext_payload(&ct);
        // Every coefficient is `00 00 00`.
        assert_eq!(bytes.len(), 6 + 2 * 1024 * 3);
        assert!(bytes[6..].iter().all(|&b| b == 0));
    }
}
