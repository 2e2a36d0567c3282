//! Word-sized modular arithmetic for the RNS limbs.
//!
//! Every modulus is an odd prime below 2^62, so sums of two residues fit in a
//! `u64` and products fit in a `u128` with headroom for lazy accumulation.

/// Largest supported prime width in bits.
pub const MAX_MODULUS_BITS: u32 = 62;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Modulus {
    value: u64,
    /// floor(2^128 / q), split into (low, high) words.
    ratio: (u64, u64),
}

impl Modulus {
    pub fn new(value: u64) -> Self {
        assert!(value > 2 && value < (1u64 << MAX_MODULUS_BITS), "modulus out of range");
        // floor(2^128 / q) = floor((2^128 - 1) / q) unless q divides 2^128, impossible for odd q.
        let ratio = u128::MAX / value as u128;
        Self { value, ratio: (ratio as u64, (ratio >> 64) as u64) }
    }

    #[inline]
    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn bits(&self) -> u32 {
        64 - self.value.leading_zeros()
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.value {
            s - self.value
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.value - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.value - a
        }
    }

    /// Barrett reduction of any 128-bit value.
    #[inline]
    pub fn reduce_u128(&self, x: u128) -> u64 {
        let (xl, xh) = (x as u64, (x >> 64) as u64);
        let (rl, rh) = self.ratio;
        let ll = (xl as u128 * rl as u128) >> 64;
        let lh = xl as u128 * rh as u128;
        let hl = xh as u128 * rl as u128;
        let hh = xh as u128 * rh as u128;
        let mid = ll + (lh as u64 as u128) + (hl as u64 as u128);
        let qhat = hh + (lh >> 64) + (hl >> 64) + (mid >> 64);
        // qhat underestimates floor(x / q) by at most 3.
        let mut r = x.wrapping_sub(qhat.wrapping_mul(self.value as u128));
        let q = self.value as u128;
        while r >= q {
            r -= q;
        }
        r as u64
    }

    #[inline]
    pub fn reduce(&self, x: u64) -> u64 {
        if x < self.value {
            x
        } else {
            x % self.value
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        self.reduce_u128(a as u128 * b as u128)
    }

    /// Reduces a signed integer into [0, q).
    #[inline]
    pub fn from_i64(&self, x: i64) -> u64 {
        if x >= 0 {
            self.reduce(x as u64)
        } else {
            self.neg(self.reduce(x.unsigned_abs()))
        }
    }

    pub fn from_i128(&self, x: i128) -> u64 {
        let r = self.reduce_u128(x.unsigned_abs());
        if x < 0 {
            self.neg(r)
        } else {
            r
        }
    }

    /// Residue mapped to the symmetric interval (-q/2, q/2].
    #[inline]
    pub fn center(&self, a: u64) -> i64 {
        if a > self.value / 2 {
            a as i64 - self.value as i64
        } else {
            a as i64
        }
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1u64;
        base = self.reduce(base);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse; the modulus is prime so Fermat applies.
    pub fn inv(&self, a: u64) -> Option<u64> {
        let a = self.reduce(a);
        if a == 0 {
            None
        } else {
            Some(self.pow(a, self.value - 2))
        }
    }

    /// Precomputed companion for Shoup multiplication by a fixed operand `w < q`.
    #[inline]
    pub fn shoup(&self, w: u64) -> u64 {
        (((w as u128) << 64) / self.value as u128) as u64
    }

    #[inline]
    pub fn mul_shoup(&self, a: u64, w: u64, w_shoup: u64) -> u64 {
        let qhat = ((a as u128 * w_shoup as u128) >> 64) as u64;
        let r = a.wrapping_mul(w).wrapping_sub(qhat.wrapping_mul(self.value));
        if r >= self.value {
            r - self.value
        } else {
            r
        }
    }
}

fn mul_mod_u64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod_u64(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod_u64(acc, base, m);
        }
        base = mul_mod_u64(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &WITNESSES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &a in &WITNESSES {
        let mut x = pow_mod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod_u64(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// The `count` largest primes `q ≡ 1 (mod 2n)` below `2^bits`, skipping any
/// listed in `exclude`. Staying below the power of two keeps every limb
/// under `bits` bits, which fixes the relinearization digit count.
pub fn ntt_primes(bits: u32, count: usize, ring_degree: usize, exclude: &[u64]) -> Vec<u64> {
    assert!((20..=MAX_MODULUS_BITS).contains(&bits));
    let step = 2 * ring_degree as u64;
    let mut candidate = ((1u64 << bits) - 1) / step * step + 1;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if is_prime(candidate) && !exclude.contains(&candidate) {
            out.push(candidate);
        }
        candidate = candidate.checked_sub(step).expect("ran out of NTT-friendly primes");
    }
    out
}

/// Primitive 2n-th root of unity modulo a prime `q ≡ 1 (mod 2n)`.
pub fn primitive_root_2n(modulus: &Modulus, ring_degree: usize) -> Option<u64> {
    let q = modulus.value();
    let order = 2 * ring_degree as u64;
    if !(q - 1).is_multiple_of(order) {
        return None;
    }
    let cofactor = (q - 1) / order;
    (2..q.min(10_000)).find_map(|x| {
        let psi = modulus.pow(x, cofactor);
        // psi has order exactly 2n iff psi^n = -1.
        (modulus.pow(psi, ring_degree as u64) == q - 1).then_some(psi)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const Q60: u64 = 1152921504606584833;

    #[test]
    fn small_primes() {
        let primes: Vec<u64> = (0..50).filter(|&n| is_prime(n)).collect();
        assert_eq!(primes, vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47]);
        assert!(!is_prime(3215031751)); // strong pseudoprime to bases 2,3,5,7
        assert!(is_prime(Q60));
    }

    #[test]
    fn ntt_prime_shape() {
        let ps = ntt_primes(40, 6, 1024, &[]);
        assert_eq!(ps.len(), 6);
        for &p in &ps {
            assert!(is_prime(p));
            assert_eq!(p % 2048, 1);
            assert!(p < 1 << 40);
            assert!(p as f64 / (1u64 << 40) as f64 > 0.999);
        }
        assert!(ps.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn root_has_exact_order() {
        let q = Modulus::new(ntt_primes(40, 1, 64, &[])[0]);
        let psi = primitive_root_2n(&q, 64).unwrap();
        assert_eq!(q.pow(psi, 64), q.value() - 1);
        assert_eq!(q.pow(psi, 128), 1);
    }

    proptest! {
        #[test]
        fn barrett_matches_division(x in any::<u128>(), q in 3u64..(1 << 62)) {
            let q = q | 1;
            let m = Modulus::new(q);
            prop_assert_eq!(m.reduce_u128(x) as u128, x % q as u128);
        }

        #[test]
        fn shoup_matches_mul(a in 0u64..Q60, w in 0u64..Q60) {
            let m = Modulus::new(Q60);
            prop_assert_eq!(m.mul_shoup(a, w, m.shoup(w)), mul_mod_u64(a, w, Q60));
        }

        #[test]
        fn signed_reduction(x in any::<i64>()) {
            let m = Modulus::new(Q60);
            prop_assert_eq!(m.from_i64(x) as i128, (x as i128).rem_euclid(Q60 as i128));
            prop_assert_eq!(m.from_i128(x as i128 * 1000), (x as i128 * 1000).rem_euclid(Q60 as i128) as u64);
        }
    }
}
