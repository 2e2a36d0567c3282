use std::fmt;

use num_bigint::BigInt;
use num_traits::{FromPrimitive, ToPrimitive};
use rand::{CryptoRng, Rng, RngCore};

use super::params::CkksParams;
use super::ring::{MulPath, RingContext, RingElem};
use super::CkksError;

/// Width of one relinearization digit.
pub const RELIN_BASE_BITS: u32 = 20;

/// Relative scale difference below which two ciphertexts count as aligned.
const SCALE_TOLERANCE: f64 = 1e-9;

/// Scheme context: parameters plus the shared ring precomputation.
///
/// Immutable after construction and shared read-only between threads.
pub struct CkksContext {
    params: CkksParams,
    ring: RingContext,
    cbd_width: u32,
}

impl fmt::Debug for CkksContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CkksContext").field("params", &self.params).finish_non_exhaustive()
    }
}

/// Ternary secret polynomial.
#[derive(Clone, PartialEq, Eq)]
pub struct CkksSecretKey {
    pub(super) coeffs: Vec<i8>,
}

impl fmt::Debug for CkksSecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CkksSecretKey(<redacted>)")
    }
}

/// `(b, a)` with `b = -a·s + e`, stored in the transformed domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CkksPublicKey {
    pub(super) b: RingElem,
    pub(super) a: RingElem,
}

/// One gadget row: encrypts `2^(20·digit) · s^2` on the limb of `prime`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(super) struct GadgetRow {
    pub(super) prime: usize,
    pub(super) digit: u32,
    pub(super) b: RingElem,
    pub(super) a: RingElem,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CkksRelinKey {
    pub(super) rows: Vec<GadgetRow>,
}

impl CkksRelinKey {
    pub fn rows(&self) -> usize {
        self.rows.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CkksCiphertext {
    pub(super) parts: Vec<RingElem>,
    pub(super) scale: f64,
}

impl CkksCiphertext {
    pub fn level(&self) -> usize {
        self.parts[0].level()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn components(&self) -> usize {
        self.parts.len()
    }

    pub fn parts(&self) -> &[RingElem] {
        &self.parts
    }
}

fn digits_for(bits: u32) -> u32 {
    bits.div_ceil(RELIN_BASE_BITS)
}

impl CkksContext {
    pub fn new(params: CkksParams) -> Result<Self, CkksError> {
        params.validate()?;
        let ring = RingContext::new(params.ring_degree, &params.moduli[..=params.max_depth]);
        if !ring.has_fast_path() {
            return Err(CkksError::InvalidParams(format!("every modulus must be 1 mod {}", 2 * params.ring_degree)));
        }
        // A centered binomial of width k has variance k/2.
        let cbd_width = ((2.0 * params.noise_stddev * params.noise_stddev).round() as u32).clamp(1, 64);
        Ok(Self { params, ring, cbd_width })
    }

    pub fn params(&self) -> &CkksParams {
        &self.params
    }

    pub fn ring(&self) -> &RingContext {
        &self.ring
    }

    pub fn max_level(&self) -> usize {
        self.params.max_depth
    }

    fn degree(&self) -> usize {
        self.params.ring_degree
    }

    fn sample_ternary<R: RngCore>(&self, rng: &mut R) -> Vec<i64> {
        (0..self.degree()).map(|_| rng.gen_range(-1i64..=1)).collect()
    }

    /// Centered binomial approximation of a discrete Gaussian.
    fn sample_noise<R: RngCore>(&self, rng: &mut R) -> Vec<i64> {
        let mask = if self.cbd_width == 64 { u64::MAX } else { (1u64 << self.cbd_width) - 1 };
        (0..self.degree())
            .map(|_| {
                let x = (rng.next_u64() & mask).count_ones() as i64;
                let y = (rng.next_u64() & mask).count_ones() as i64;
                x - y
            })
            .collect()
    }

    fn sample_uniform<R: RngCore>(&self, level: usize, rng: &mut R) -> RingElem {
        let limbs = self.ring.moduli()[..=level]
            .iter()
            .map(|m| (0..self.degree()).map(|_| rng.gen_range(0..m.value())).collect())
            .collect();
        RingElem::from_limbs(limbs)
    }

    fn ntt_of(&self, mut e: RingElem) -> RingElem {
        e.forward(&self.ring);
        e
    }

    fn coeff_of(&self, mut e: RingElem) -> RingElem {
        e.inverse(&self.ring);
        e
    }

    /// Deterministic for a given RNG state.
    pub fn keygen<R: RngCore + CryptoRng>(&self, rng: &mut R) -> (CkksSecretKey, CkksPublicKey, CkksRelinKey) {
        let top = self.max_level();
        let ring = &self.ring;
        let s = self.sample_ternary(rng);
        let s_ntt = self.ntt_of(RingElem::from_signed(ring, top, &s));

        let a = self.sample_uniform(top, rng);
        let e = self.ntt_of(RingElem::from_signed(ring, top, &self.sample_noise(rng)));
        let a_ntt = self.ntt_of(a);
        let b_ntt = e.sub(&a_ntt.pointwise(&s_ntt, ring), ring).expect("same level");
        let public = CkksPublicKey { b: b_ntt, a: a_ntt };

        let s2_ntt = s_ntt.pointwise(&s_ntt, ring);
        let mut rows = Vec::new();
        for (prime, modulus) in ring.moduli()[..=top].iter().enumerate() {
            for digit in 0..digits_for(modulus.bits()) {
                // Uniform in either domain, so sample `a` directly transformed.
                let a = self.sample_uniform(top, rng);
                let e = self.ntt_of(RingElem::from_signed(ring, top, &self.sample_noise(rng)));
                let mut b = e.sub(&a.pointwise(&s_ntt, ring), ring).expect("same level");
                let g = modulus.pow(2, (RELIN_BASE_BITS * digit) as u64);
                let g_s = modulus.shoup(g);
                let limb = &mut b.limbs_mut()[prime];
                for (x, &y) in limb.iter_mut().zip(&s2_ntt.limbs()[prime]) {
                    *x = modulus.add(*x, modulus.mul_shoup(y, g, g_s));
                }
                rows.push(GadgetRow { prime, digit, b, a });
            }
        }
        (CkksSecretKey { coeffs: s.iter().map(|&c| c as i8).collect() }, public, CkksRelinKey { rows })
    }

    /// Constant polynomial `round(v·scale)` at `level`.
    pub fn encode(&self, value: f64, scale: f64, level: usize) -> Result<RingElem, CkksError> {
        let bits = self.ring.level_bits(level);
        let scaled = (value * scale).round();
        if !scaled.is_finite() || scaled.abs().log2() >= bits - 1.0 {
            return Err(CkksError::EncodeOverflow { value, bits });
        }
        let big = BigInt::from_f64(scaled).expect("finite");
        let residues = self.ring.residues_of(&big, level);
        let mut elem = RingElem::zero(&self.ring, level);
        for (limb, r) in elem.limbs_mut().iter_mut().zip(residues) {
            limb[0] = r;
        }
        Ok(elem)
    }

    /// Centered lift of the constant coefficient divided by `scale`.
    pub fn decode(&self, elem: &RingElem, scale: f64) -> f64 {
        self.ring.lift_coefficient(elem, 0).to_f64().unwrap_or(f64::NAN) / scale
    }

    pub fn encrypt<R: RngCore + CryptoRng>(
        &self,
        pk: &CkksPublicKey,
        value: f64,
        rng: &mut R,
    ) -> Result<CkksCiphertext, CkksError> {
        let top = self.max_level();
        let ring = &self.ring;
        let m = self.encode(value, self.params.scale, top)?;
        let u = self.ntt_of(RingElem::from_signed(ring, top, &self.sample_ternary(rng)));
        let e0 = RingElem::from_signed(ring, top, &self.sample_noise(rng));
        let e1 = RingElem::from_signed(ring, top, &self.sample_noise(rng));
        let c0 = self.coeff_of(pk.b.pointwise(&u, ring)).add(&e0, ring)?.add(&m, ring)?;
        let c1 = self.coeff_of(pk.a.pointwise(&u, ring)).add(&e1, ring)?;
        Ok(CkksCiphertext { parts: vec![c0, c1], scale: self.params.scale })
    }

    /// Decrypts a 2- or 3-component ciphertext. Only the constant coefficient
    /// of `c0 + c1·s (+ c2·s^2)` is evaluated.
    pub fn decrypt(&self, sk: &CkksSecretKey, ct: &CkksCiphertext) -> Result<f64, CkksError> {
        if sk.coeffs.len() != self.degree() {
            return Err(CkksError::InvalidParams("secret key ring degree mismatch".into()));
        }
        if !(2..=3).contains(&ct.components()) {
            return Err(CkksError::ComponentCount { expected: 2, found: ct.components() });
        }
        let ring = &self.ring;
        let level = ct.level();
        let signed: Vec<i64> = sk.coeffs.iter().map(|&c| c as i64).collect();
        let mut powers = vec![RingElem::from_signed(ring, level, &signed)];
        if ct.components() == 3 {
            powers.push(powers[0].mul(&powers[0], ring, MulPath::Ntt)?);
        }
        let residues: Vec<u64> = ring.moduli()[..=level]
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let mut acc = ct.parts[0].limbs()[i][0];
                for (part, power) in ct.parts[1..].iter().zip(&powers) {
                    acc = m.add(acc, constant_term(&part.limbs()[i], &power.limbs()[i], m));
                }
                acc
            })
            .collect();
        let mut elem = RingElem::zero(ring, level);
        for (limb, r) in elem.limbs_mut().iter_mut().zip(residues) {
            limb[0] = r;
        }
        Ok(self.decode(&elem, ct.scale))
    }

    fn check_pair(&self, a: &CkksCiphertext, b: &CkksCiphertext) -> Result<(), CkksError> {
        if a.level() != b.level() {
            return Err(CkksError::LevelMismatch { left: a.level(), right: b.level() });
        }
        Ok(())
    }

    pub fn sub(&self, a: &CkksCiphertext, b: &CkksCiphertext) -> Result<CkksCiphertext, CkksError> {
        self.check_pair(a, b)?;
        if a.components() != b.components() {
            return Err(CkksError::ComponentCount { expected: a.components(), found: b.components() });
        }
        if ((a.scale / b.scale) - 1.0).abs() > SCALE_TOLERANCE {
            return Err(CkksError::ScaleMismatch { left: a.scale, right: b.scale });
        }
        let parts = a.parts.iter().zip(&b.parts).map(|(x, y)| x.sub(y, &self.ring)).collect::<Result<Vec<_>, _>>()?;
        Ok(CkksCiphertext { parts, scale: a.scale })
    }

    /// Tensor product without relinearization or rescaling.
    pub fn mul_raw(&self, a: &CkksCiphertext, b: &CkksCiphertext) -> Result<CkksCiphertext, CkksError> {
        let [d0, d1, d2] = self.tensor(a, b)?;
        Ok(CkksCiphertext { parts: vec![self.coeff_of(d0), self.coeff_of(d1), d2], scale: a.scale * b.scale })
    }

    /// `d0` and `d1` stay in the transformed domain; `d2` is returned in
    /// coefficient form, ready for digit decomposition.
    fn tensor(&self, a: &CkksCiphertext, b: &CkksCiphertext) -> Result<[RingElem; 3], CkksError> {
        self.check_pair(a, b)?;
        for ct in [a, b] {
            if ct.components() != 2 {
                return Err(CkksError::ComponentCount { expected: 2, found: ct.components() });
            }
        }
        let ring = &self.ring;
        let a0 = self.ntt_of(a.parts[0].clone());
        let a1 = self.ntt_of(a.parts[1].clone());
        let b0 = self.ntt_of(b.parts[0].clone());
        let b1 = self.ntt_of(b.parts[1].clone());
        let d0 = a0.pointwise(&b0, ring);
        let d1 = a0.pointwise(&b1, ring).add(&a1.pointwise(&b0, ring), ring)?;
        let d2 = a1.pointwise(&b1, ring);
        Ok([d0, d1, self.coeff_of(d2)])
    }

    /// Folds the `s^2` component back into a pair using the gadget key.
    pub fn relinearize(&self, ct: &CkksCiphertext, rlk: &CkksRelinKey) -> Result<CkksCiphertext, CkksError> {
        if ct.components() != 3 {
            return Err(CkksError::ComponentCount { expected: 3, found: ct.components() });
        }
        let ring = &self.ring;
        let [k0, k1] = self.key_switch(&ct.parts[2], rlk)?;
        let c0 = ct.parts[0].add(&self.coeff_of(k0), ring)?;
        let c1 = ct.parts[1].add(&self.coeff_of(k1), ring)?;
        Ok(CkksCiphertext { parts: vec![c0, c1], scale: ct.scale })
    }

    /// Gadget product of `c2` (coefficient form) with the relinearization
    /// key, returned in the transformed domain.
    fn key_switch(&self, c2: &RingElem, rlk: &CkksRelinKey) -> Result<[RingElem; 2], CkksError> {
        let ring = &self.ring;
        let level = c2.level();
        let n = self.degree();
        let mask = (1u64 << RELIN_BASE_BITS) - 1;
        let mut acc0 = vec![vec![0u128; n]; level + 1];
        let mut acc1 = vec![vec![0u128; n]; level + 1];
        let mut pending = 0;
        let mut digit_poly = vec![0u64; n];
        let mut used_rows = 0;
        for row in rlk.rows.iter().filter(|r| r.prime <= level) {
            used_rows += 1;
            let shift = RELIN_BASE_BITS * row.digit;
            for m in 0..=level {
                for (d, &c) in digit_poly.iter_mut().zip(&c2.limbs()[row.prime]) {
                    *d = (c >> shift) & mask;
                }
                ring.ntt_table(m).expect("fast path").forward(&mut digit_poly);
                let rows = row.b.limbs()[m].iter().zip(&row.a.limbs()[m]);
                for (((x0, x1), &d), (&kb, &ka)) in
                    acc0[m].iter_mut().zip(acc1[m].iter_mut()).zip(&digit_poly).zip(rows)
                {
                    *x0 += d as u128 * kb as u128;
                    *x1 += d as u128 * ka as u128;
                }
            }
            pending += 1;
            // Each product is below 2^124; flush before the sum can overflow.
            if pending == 7 {
                for (m, modulus) in ring.moduli()[..=level].iter().enumerate() {
                    for x in acc0[m].iter_mut().chain(acc1[m].iter_mut()) {
                        *x = modulus.reduce_u128(*x) as u128;
                    }
                }
                pending = 0;
            }
        }
        let expected_rows: u32 = ring.moduli()[..=level].iter().map(|m| digits_for(m.bits())).sum();
        if used_rows != expected_rows as usize {
            return Err(CkksError::InvalidParams("relinearization key does not match the chain".into()));
        }
        let fold = |acc: Vec<Vec<u128>>| {
            let limbs = acc
                .into_iter()
                .zip(ring.moduli())
                .map(|(limb, m)| limb.into_iter().map(|x| m.reduce_u128(x)).collect())
                .collect();
            RingElem::from_limbs(limbs)
        };
        Ok([fold(acc0), fold(acc1)])
    }

    /// Drops the top prime and divides the scale by it.
    pub fn rescale(&self, ct: &CkksCiphertext) -> Result<CkksCiphertext, CkksError> {
        let level = ct.level();
        if level == 0 {
            return Err(CkksError::LevelExhausted);
        }
        let dropped = self.ring.modulus(level).value() as f64;
        let parts = ct.parts.iter().map(|p| p.divide_and_round_top(&self.ring)).collect::<Result<Vec<_>, _>>()?;
        Ok(CkksCiphertext { parts, scale: ct.scale / dropped })
    }

    /// Full homomorphic product: tensor, relinearize, rescale.
    pub fn mul(&self, a: &CkksCiphertext, b: &CkksCiphertext, rlk: &CkksRelinKey) -> Result<CkksCiphertext, CkksError> {
        if a.level() == 0 {
            return Err(CkksError::LevelExhausted);
        }
        // Same result as mul_raw, relinearize and rescale, with the key
        // switch added before leaving the transformed domain.
        let ring = &self.ring;
        let [d0, d1, d2] = self.tensor(a, b)?;
        let [k0, k1] = self.key_switch(&d2, rlk)?;
        let relin = CkksCiphertext {
            parts: vec![self.coeff_of(d0.add(&k0, ring)?), self.coeff_of(d1.add(&k1, ring)?)],
            scale: a.scale * b.scale,
        };
        self.rescale(&relin)
    }

    /// Multiplies by a public real constant encoded at the scale of the top
    /// prime, then rescales; the ciphertext scale is unchanged.
    pub fn mul_const(&self, a: &CkksCiphertext, k: f64) -> Result<CkksCiphertext, CkksError> {
        let level = a.level();
        if level == 0 {
            return Err(CkksError::LevelExhausted);
        }
        let q = self.ring.modulus(level).value() as f64;
        let scaled = (k * q).round();
        if !scaled.is_finite() || scaled == 0.0 || scaled.abs() >= 2f64.powi(100) {
            return Err(CkksError::BadConstant(k));
        }
        let parts = a.parts.iter().map(|p| p.mul_scalar(scaled as i128, &self.ring)).collect();
        let mut out = self.rescale(&CkksCiphertext { parts, scale: a.scale * q })?;
        out.scale = a.scale;
        Ok(out)
    }
}

/// Constant coefficient of the negacyclic product `a·b` in one limb:
/// `a_0 b_0 - Σ_{i≥1} a_i b_{N-i}`.
fn constant_term(a: &[u64], b: &[u64], m: &super::arith::Modulus) -> u64 {
    let n = a.len();
    let mut neg: u128 = 0;
    for i in 1..n {
        neg += m.mul(a[i], b[n - i]) as u128;
    }
    m.sub(m.mul(a[0], b[0]), m.reduce_u128(neg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn toy() -> (CkksContext, CkksSecretKey, CkksPublicKey, CkksRelinKey, ChaCha20Rng) {
        let ctx = CkksContext::new(CkksParams::toy_insecure()).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let (sk, pk, rlk) = ctx.keygen(&mut rng);
        (ctx, sk, pk, rlk, rng)
    }

    #[test]
    fn encode_decode_rounding() {
        let (ctx, ..) = toy();
        let scale = 2f64.powi(40);
        assert!(ctx.encode(0.0, scale, 2).unwrap().limbs().iter().all(|l| l.iter().all(|&c| c == 0)));
        let e = ctx.encode(1.5, scale, 2).unwrap();
        assert!((ctx.decode(&e, scale) - 1.5).abs() <= 2f64.powi(-40));
        assert!(matches!(ctx.encode(1e30, scale, 2), Err(CkksError::EncodeOverflow { .. })));
        assert!(ctx.encode(f64::NAN, scale, 2).is_err());
    }

    #[test]
    fn decode_grid_within_one_over_scale() {
        let (ctx, ..) = toy();
        let scale = ctx.params().scale;
        let bound = (1u64 << 20) as f64;
        for i in 0..10_000 {
            let x = -bound + 2.0 * bound * (i as f64) / 9_999.0;
            let got = ctx.decode(&ctx.encode(x, scale, 2).unwrap(), scale);
            assert!((got - x).abs() <= 1.0 / scale + x.abs() * f64::EPSILON, "x={x} got={got}");
        }
    }

    #[test]
    fn relinearize_preserves_plaintext() {
        let (ctx, sk, pk, rlk, mut rng) = toy();
        let a = ctx.encrypt(&pk, 2.0, &mut rng).unwrap();
        let b = ctx.encrypt(&pk, 3.0, &mut rng).unwrap();
        let raw = ctx.mul_raw(&a, &b).unwrap();
        assert_eq!(raw.components(), 3);
        let before = ctx.decrypt(&sk, &raw).unwrap();
        let relin = ctx.relinearize(&raw, &rlk).unwrap();
        assert_eq!(relin.components(), 2);
        let after = ctx.decrypt(&sk, &relin).unwrap();
        assert!((before - after).abs() <= 1e-6, "before={before} after={after}");
        let out = ctx.rescale(&relin).unwrap();
        assert_eq!(out.level(), 1);
        assert!((ctx.decrypt(&sk, &out).unwrap() - 6.0).abs() <= 1e-4);
        assert!(matches!(ctx.relinearize(&relin, &rlk), Err(CkksError::ComponentCount { .. })));
    }

    #[test]
    fn fused_mul_matches_separate_steps() {
        let (ctx, _, pk, rlk, mut rng) = toy();
        let a = ctx.encrypt(&pk, 1.25, &mut rng).unwrap();
        let b = ctx.encrypt(&pk, -0.5, &mut rng).unwrap();
        let steps = ctx.rescale(&ctx.relinearize(&ctx.mul_raw(&a, &b).unwrap(), &rlk).unwrap()).unwrap();
        let fused = ctx.mul(&a, &b, &rlk).unwrap();
        assert_eq!(fused.parts, steps.parts);
        assert_eq!(fused.scale, steps.scale);
    }

    #[test]
    fn rescale_keeps_scale_near_delta() {
        let (ctx, _, pk, rlk, mut rng) = toy();
        let a = ctx.encrypt(&pk, 1.0, &mut rng).unwrap();
        let raw = ctx.relinearize(&ctx.mul_raw(&a, &a).unwrap(), &rlk).unwrap();
        let delta = ctx.params().scale;
        assert!((raw.scale() / (delta * delta) - 1.0).abs() < 1e-12);
        let r = ctx.rescale(&raw).unwrap();
        assert!((r.scale() / delta - 1.0).abs() < 1e-3);
        let r = ctx.rescale(&r).unwrap();
        assert_eq!(r.level(), 0);
        assert!(matches!(ctx.rescale(&r), Err(CkksError::LevelExhausted)));
    }

    #[test]
    fn constant_multiplication() {
        let (ctx, sk, pk, _, mut rng) = toy();
        let c = ctx.encrypt(&pk, 4.0, &mut rng).unwrap();
        let half = ctx.mul_const(&c, 0.5).unwrap();
        assert_eq!(half.level(), 1);
        assert_eq!(half.scale(), c.scale());
        assert!((ctx.decrypt(&sk, &half).unwrap() - 2.0).abs() <= 1e-4);
        assert!(matches!(ctx.mul_const(&c, 0.0), Err(CkksError::BadConstant(_))));
        assert!(ctx.mul_const(&c, f64::INFINITY).is_err());
    }

    #[test]
    fn keygen_is_deterministic() {
        let ctx = CkksContext::new(CkksParams::toy_insecure()).unwrap();
        let k1 = ctx.keygen(&mut ChaCha20Rng::seed_from_u64(5));
        let k2 = ctx.keygen(&mut ChaCha20Rng::seed_from_u64(5));
        assert_eq!(k1.0, k2.0);
        assert_eq!(k1.1, k2.1);
        assert_eq!(k1.2, k2.2);
        // 60-bit base prime: 3 digits; two 40-bit primes: 2 digits each.
        assert_eq!(k1.2.rows(), 7);
    }
}
