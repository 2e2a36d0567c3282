//! Residue-number-system polynomials in Z[X]/(X^N + 1).
//!
//! A [`RingElem`] at level `l` stores one limb of N residues for each of the
//! primes `q_0..=q_l`; together the limbs represent the coefficients modulo
//! the product `Q_l`. Elements are always kept in coefficient form outside
//! this module.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{ToPrimitive, Zero};

use super::arith::Modulus;
use super::ntt::NttTable;
use super::CkksError;

/// Polynomial multiplication strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MulPath {
    /// Direct O(N^2) negacyclic convolution; the reference route.
    Schoolbook,
    /// O(N log N) route through the negacyclic NTT.
    Ntt,
}

#[derive(Clone, Debug)]
struct CrtLevel {
    product: BigUint,
    half: BigUint,
    basis: Vec<BigUint>,
}

/// Moduli, transform tables and CRT constants for one ring degree and chain.
#[derive(Debug)]
pub struct RingContext {
    degree: usize,
    moduli: Vec<Modulus>,
    ntt: Option<Vec<NttTable>>,
    crt: Vec<CrtLevel>,
}

impl RingContext {
    pub fn new(degree: usize, primes: &[u64]) -> Self {
        assert!(degree.is_power_of_two() && degree >= 2, "ring degree must be a power of two");
        assert!(!primes.is_empty());
        let moduli: Vec<Modulus> = primes.iter().map(|&q| Modulus::new(q)).collect();
        let ntt = moduli.iter().map(|&m| NttTable::new(m, degree)).collect::<Option<Vec<_>>>();
        let crt = (0..moduli.len())
            .map(|level| {
                let active = &moduli[..=level];
                let product = active.iter().fold(BigUint::from(1u8), |acc, m| acc * m.value());
                let basis = active
                    .iter()
                    .map(|m| {
                        let cofactor = &product / m.value();
                        let residue = (&cofactor % m.value()).to_u64().unwrap();
                        let inv = m.inv(residue).expect("moduli must be distinct primes");
                        cofactor * inv
                    })
                    .collect();
                let half = &product >> 1;
                CrtLevel { product, half, basis }
            })
            .collect();
        Self { degree, moduli, ntt, crt }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn moduli(&self) -> &[Modulus] {
        &self.moduli
    }

    pub fn modulus(&self, index: usize) -> &Modulus {
        &self.moduli[index]
    }

    pub fn max_level(&self) -> usize {
        self.moduli.len() - 1
    }

    pub fn has_fast_path(&self) -> bool {
        self.ntt.is_some()
    }

    pub fn ntt_table(&self, index: usize) -> Option<&NttTable> {
        self.ntt.as_ref().map(|t| &t[index])
    }

    /// Product of the active moduli at `level`.
    pub fn level_modulus(&self, level: usize) -> &BigUint {
        &self.crt[level].product
    }

    /// log2 of the active modulus at `level`.
    pub fn level_bits(&self, level: usize) -> f64 {
        self.moduli[..=level].iter().map(|m| (m.value() as f64).log2()).sum()
    }

    pub fn default_path(&self) -> MulPath {
        if self.has_fast_path() {
            MulPath::Ntt
        } else {
            MulPath::Schoolbook
        }
    }

    /// Centered CRT reconstruction of one coefficient.
    pub fn lift_coefficient(&self, elem: &RingElem, index: usize) -> BigInt {
        let crt = &self.crt[elem.level()];
        let mut acc = BigUint::zero();
        for (limb, basis) in elem.limbs.iter().zip(&crt.basis) {
            acc += basis * limb[index];
        }
        acc %= &crt.product;
        if acc > crt.half {
            BigInt::from_biguint(Sign::Minus, &crt.product - acc)
        } else {
            BigInt::from_biguint(Sign::Plus, acc)
        }
    }

    /// Reduces a signed integer coefficient into every active limb.
    pub fn residues_of(&self, value: &BigInt, level: usize) -> Vec<u64> {
        let magnitude = value.magnitude();
        self.moduli[..=level]
            .iter()
            .map(|m| {
                let r = (magnitude % m.value()).to_u64().unwrap();
                if value.sign() == Sign::Minus {
                    m.neg(r)
                } else {
                    r
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RingElem {
    limbs: Vec<Vec<u64>>,
}

impl RingElem {
    pub fn zero(ctx: &RingContext, level: usize) -> Self {
        Self { limbs: vec![vec![0u64; ctx.degree]; level + 1] }
    }

    /// Builds an element from small signed coefficients.
    pub fn from_signed(ctx: &RingContext, level: usize, coeffs: &[i64]) -> Self {
        assert_eq!(coeffs.len(), ctx.degree);
        let limbs = ctx.moduli[..=level].iter().map(|m| coeffs.iter().map(|&c| m.from_i64(c)).collect()).collect();
        Self { limbs }
    }

    pub fn from_limbs(limbs: Vec<Vec<u64>>) -> Self {
        assert!(!limbs.is_empty());
        Self { limbs }
    }

    pub fn level(&self) -> usize {
        self.limbs.len() - 1
    }

    pub fn limbs(&self) -> &[Vec<u64>] {
        &self.limbs
    }

    pub fn limbs_mut(&mut self) -> &mut [Vec<u64>] {
        &mut self.limbs
    }

    pub fn into_limbs(self) -> Vec<Vec<u64>> {
        self.limbs
    }

    /// Keeps only the limbs of `q_0..=q_level`.
    pub fn truncated(&self, level: usize) -> Self {
        assert!(level <= self.level());
        Self { limbs: self.limbs[..=level].to_vec() }
    }

    fn check_level(&self, other: &Self) -> Result<(), CkksError> {
        if self.level() != other.level() {
            return Err(CkksError::LevelMismatch { left: self.level(), right: other.level() });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self, ctx: &RingContext) -> Result<Self, CkksError> {
        self.check_level(other)?;
        Ok(self.zip_with(other, ctx, |m, a, b| m.add(a, b)))
    }

    pub fn sub(&self, other: &Self, ctx: &RingContext) -> Result<Self, CkksError> {
        self.check_level(other)?;
        Ok(self.zip_with(other, ctx, |m, a, b| m.sub(a, b)))
    }

    pub fn neg(&self, ctx: &RingContext) -> Self {
        let limbs =
            self.limbs.iter().zip(&ctx.moduli).map(|(limb, m)| limb.iter().map(|&a| m.neg(a)).collect()).collect();
        Self { limbs }
    }

    /// Multiplies by a signed integer constant.
    pub fn mul_scalar(&self, k: i128, ctx: &RingContext) -> Self {
        let limbs = self
            .limbs
            .iter()
            .zip(&ctx.moduli)
            .map(|(limb, m)| {
                let k = m.from_i128(k);
                let ks = m.shoup(k);
                limb.iter().map(|&a| m.mul_shoup(a, k, ks)).collect()
            })
            .collect();
        Self { limbs }
    }

    fn zip_with(&self, other: &Self, ctx: &RingContext, f: impl Fn(&Modulus, u64, u64) -> u64) -> Self {
        let limbs = self
            .limbs
            .iter()
            .zip(&other.limbs)
            .zip(&ctx.moduli)
            .map(|((a, b), m)| a.iter().zip(b).map(|(&x, &y)| f(m, x, y)).collect())
            .collect();
        Self { limbs }
    }

    /// Negacyclic product, using the requested route.
    pub fn mul(&self, other: &Self, ctx: &RingContext, path: MulPath) -> Result<Self, CkksError> {
        self.check_level(other)?;
        match path {
            MulPath::Schoolbook => Ok(self.mul_schoolbook(other, ctx)),
            MulPath::Ntt => {
                if !ctx.has_fast_path() {
                    return Err(CkksError::NoFastPath);
                }
                let mut a = self.clone();
                let mut b = other.clone();
                a.forward(ctx);
                b.forward(ctx);
                let mut c = a.pointwise(&b, ctx);
                c.inverse(ctx);
                Ok(c)
            }
        }
    }

    fn mul_schoolbook(&self, other: &Self, ctx: &RingContext) -> Self {
        let n = ctx.degree;
        let limbs = self
            .limbs
            .iter()
            .zip(&other.limbs)
            .zip(&ctx.moduli)
            .map(|((a, b), m)| {
                let mut pos = vec![0u128; n];
                let mut neg = vec![0u128; n];
                for (i, &ai) in a.iter().enumerate() {
                    if ai == 0 {
                        continue;
                    }
                    for (j, &bj) in b.iter().enumerate() {
                        let p = m.mul(ai, bj) as u128;
                        let k = i + j;
                        // X^N = -1: terms past degree N wrap with a sign flip.
                        if k < n {
                            pos[k] += p;
                        } else {
                            neg[k - n] += p;
                        }
                    }
                }
                pos.iter().zip(&neg).map(|(&p, &q)| m.sub(m.reduce_u128(p), m.reduce_u128(q))).collect()
            })
            .collect();
        Self { limbs }
    }

    /// In-place forward transform of every limb. Requires the fast path.
    pub(crate) fn forward(&mut self, ctx: &RingContext) {
        for (i, limb) in self.limbs.iter_mut().enumerate() {
            ctx.ntt_table(i).expect("fast path unavailable").forward(limb);
        }
    }

    pub(crate) fn inverse(&mut self, ctx: &RingContext) {
        for (i, limb) in self.limbs.iter_mut().enumerate() {
            ctx.ntt_table(i).expect("fast path unavailable").inverse(limb);
        }
    }

    /// Coefficientwise product; meaningful in the transformed domain.
    pub(crate) fn pointwise(&self, other: &Self, ctx: &RingContext) -> Self {
        self.zip_with(other, ctx, |m, a, b| m.mul(a, b))
    }

    /// Drops the top limb and divides by its prime with rounding:
    /// `x' = (x - [x]_{q_l}) / q_l` where `[x]_{q_l}` is the centered residue.
    pub fn divide_and_round_top(&self, ctx: &RingContext) -> Result<Self, CkksError> {
        let level = self.level();
        if level == 0 {
            return Err(CkksError::LevelExhausted);
        }
        let top_mod = &ctx.moduli[level];
        let top = &self.limbs[level];
        let limbs = self.limbs[..level]
            .iter()
            .zip(&ctx.moduli)
            .map(|(limb, m)| {
                let inv = m.inv(top_mod.value() % m.value()).expect("distinct primes");
                let inv_s = m.shoup(inv);
                limb.iter()
                    .zip(top)
                    .map(|(&x, &t)| {
                        let r = m.from_i64(top_mod.center(t));
                        m.mul_shoup(m.sub(x, r), inv, inv_s)
                    })
                    .collect()
            })
            .collect();
        Ok(Self { limbs })
    }
}
