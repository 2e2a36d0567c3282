//! Negacyclic number-theoretic transform over Z_q[X]/(X^N + 1).
//!
//! Forward transform is Cooley-Tukey with bit-reversed powers of a primitive
//! 2N-th root psi (output in bit-reversed order); the inverse is
//! Gentleman-Sande. Pointwise products in the transformed domain are
//! negacyclic convolutions, so no explicit twist pass is needed.

use std::hint::black_box;

use super::arith::{primitive_root_2n, Modulus};

#[derive(Clone, Debug)]
pub struct NttTable {
    modulus: Modulus,
    degree: usize,
    psi_rev: Vec<u64>,
    psi_rev_shoup: Vec<u64>,
    psi_inv_rev: Vec<u64>,
    psi_inv_rev_shoup: Vec<u64>,
    degree_inv: u64,
    degree_inv_shoup: u64,
}

fn bit_reverse(x: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        x.reverse_bits() >> (usize::BITS - bits)
    }
}

impl NttTable {
    /// Returns `None` when `q` is not congruent to 1 modulo 2N.
    pub fn new(modulus: Modulus, degree: usize) -> Option<Self> {
        assert!(degree.is_power_of_two() && degree >= 2);
        let psi = primitive_root_2n(&modulus, degree)?;
        let psi_inv = modulus.inv(psi)?;
        let bits = degree.trailing_zeros();
        let mut psi_rev = vec![0u64; degree];
        let mut psi_inv_rev = vec![0u64; degree];
        let (mut p, mut pi) = (1u64, 1u64);
        for k in 0..degree {
            let r = bit_reverse(k, bits);
            psi_rev[r] = p;
            psi_inv_rev[r] = pi;
            p = modulus.mul(p, psi);
            pi = modulus.mul(pi, psi_inv);
        }
        let psi_rev_shoup = psi_rev.iter().map(|&w| modulus.shoup(w)).collect();
        let psi_inv_rev_shoup = psi_inv_rev.iter().map(|&w| modulus.shoup(w)).collect();
        let degree_inv = modulus.inv(degree as u64)?;
        Some(Self {
            modulus,
            degree,
            psi_rev,
            psi_rev_shoup,
            psi_inv_rev,
            psi_inv_rev_shoup,
            degree_inv,
            degree_inv_shoup: modulus.shoup(degree_inv),
        })
    }

    pub fn modulus(&self) -> &Modulus {
        &self.modulus
    }

    /// Harvey-style butterflies: intermediate values stay in [0, 4q) and are
    /// fully reduced once at the end.
    pub fn forward(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.degree);
        let q = self.modulus.value();
        let two_q = 2 * q;
        let n = self.degree;
        let mut t = n;
        let mut m = 1;
        while m < n {
            t >>= 1;
            let twiddles = self.psi_rev[m..2 * m].iter().zip(&self.psi_rev_shoup[m..2 * m]);
            for (block, (&w, &ws)) in a.chunks_exact_mut(2 * t).zip(twiddles) {
                let (lo, hi) = block.split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    // Keeps LLVM from vectorizing: 64-bit high multiplies
                    // emulated in SIMD lanes are slower than scalar code.
                    black_box(());
                    let u = reduce_once(*x, two_q);
                    let v = mul_shoup_lazy(*y, w, ws, q);
                    *x = u + v;
                    *y = u + two_q - v;
                }
            }
            m <<= 1;
        }
        for x in a.iter_mut() {
            *x = reduce_once(reduce_once(*x, two_q), q);
        }
    }

    pub fn inverse(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.degree);
        let q = self.modulus.value();
        let two_q = 2 * q;
        let n = self.degree;
        let mut t = 1;
        let mut m = n;
        // Inputs and outputs of every butterfly stay in [0, 2q).
        while m > 1 {
            let h = m >> 1;
            let twiddles = self.psi_inv_rev[h..m].iter().zip(&self.psi_inv_rev_shoup[h..m]);
            for (block, (&w, &ws)) in a.chunks_exact_mut(2 * t).zip(twiddles) {
                let (lo, hi) = block.split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    black_box(());
                    let u = *x;
                    let v = *y;
                    *x = reduce_once(u + v, two_q);
                    *y = mul_shoup_lazy(u + two_q - v, w, ws, q);
                }
            }
            t <<= 1;
            m = h;
        }
        for x in a.iter_mut() {
            let v = mul_shoup_lazy(*x, self.degree_inv, self.degree_inv_shoup, q);
            *x = reduce_once(v, q);
        }
    }
}

/// `x mod m` for `x < 2m`, without a data-dependent branch.
#[inline(always)]
fn reduce_once(x: u64, m: u64) -> u64 {
    x.min(x.wrapping_sub(m))
}

/// `a·w mod q` up to one extra multiple of q, for any `a < 2^64`.
#[inline(always)]
fn mul_shoup_lazy(a: u64, w: u64, w_shoup: u64, q: u64) -> u64 {
    let qhat = ((a as u128 * w_shoup as u128) >> 64) as u64;
    a.wrapping_mul(w).wrapping_sub(qhat.wrapping_mul(q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ckks::arith::ntt_primes;

    #[test]
    fn forward_inverse_identity() {
        let q = Modulus::new(ntt_primes(50, 1, 256, &[])[0]);
        let table = NttTable::new(q, 256).unwrap();
        let orig: Vec<u64> = (0..256u64).map(|i| (i * 7919 + 13) % q.value()).collect();
        let mut a = orig.clone();
        table.forward(&mut a);
        assert_ne!(a, orig);
        table.inverse(&mut a);
        assert_eq!(a, orig);
    }

    #[test]
    fn rejects_unfriendly_prime() {
        // 2^31 - 1 is prime but not 1 mod 128.
        assert!(NttTable::new(Modulus::new(2147483647), 64).is_none());
    }
}
