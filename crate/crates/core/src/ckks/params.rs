use std::fmt::Write as _;

use super::arith::{is_prime, ntt_primes, MAX_MODULUS_BITS};
use super::CkksError;

/// Parameter set of the leveled scheme.
///
/// `moduli[0]` is the base prime that remains after every rescale; the
/// primes `moduli[1..=max_depth]` are consumed one per multiplication.
#[derive(Clone, Debug, PartialEq)]
pub struct CkksParams {
    pub ring_degree: usize,
    pub moduli: Vec<u64>,
    pub scale: f64,
    pub noise_stddev: f64,
    pub max_depth: usize,
}

pub const DEFAULT_SCALE_BITS: u32 = 40;
pub const DEFAULT_NOISE_STDDEV: f64 = 3.2;
/// Deepest product tree the desk preset family supports.
pub const DESK_MAX_DEPTH: usize = 8;
pub const DESK_DEFAULT_DEPTH: usize = 6;

impl CkksParams {
    /// Builds a chain from prime widths: `bit_sizes[0]` is the base prime,
    /// the rest are the rescaling primes. Primes are chosen deterministically.
    pub fn from_bit_sizes(ring_degree: usize, bit_sizes: &[u32], scale_bits: u32, max_depth: usize) -> Self {
        let mut moduli: Vec<u64> = Vec::with_capacity(bit_sizes.len());
        for &bits in bit_sizes {
            let bits = bits.clamp(20, MAX_MODULUS_BITS);
            let prime = ntt_primes(bits, 1, ring_degree, &moduli)[0];
            moduli.push(prime);
        }
        Self { ring_degree, moduli, scale: 2f64.powi(scale_bits as i32), noise_stddev: DEFAULT_NOISE_STDDEV, max_depth }
    }

    /// N = 1024 with three primes. Far below any security target; for tests only.
    pub fn toy_insecure() -> Self {
        Self::from_bit_sizes(1024, &[60, 40, 40], DEFAULT_SCALE_BITS, 2)
    }

    /// N = 8192, a 60-bit base prime and `depth` 40-bit rescaling primes.
    pub fn desk(depth: usize) -> Self {
        let mut bits = vec![60u32];
        bits.extend(std::iter::repeat_n(DEFAULT_SCALE_BITS, depth));
        Self::from_bit_sizes(8192, &bits, DEFAULT_SCALE_BITS, depth)
    }

    pub fn chain_len(&self) -> usize {
        self.moduli.len()
    }

    pub fn validate(&self) -> Result<(), CkksError> {
        let bad = |msg: String| Err(CkksError::InvalidParams(msg));
        if !self.ring_degree.is_power_of_two() || self.ring_degree < 2 {
            return bad(format!("ring degree {} is not a power of two", self.ring_degree));
        }
        if self.max_depth < 1 {
            return bad("max depth must be at least 1".into());
        }
        if self.moduli.len() < self.max_depth + 1 {
            return bad(format!(
                "modulus chain of length {} cannot support depth {} (needs {})",
                self.moduli.len(),
                self.max_depth,
                self.max_depth + 1
            ));
        }
        for (i, &q) in self.moduli.iter().enumerate() {
            if q >= 1u64 << MAX_MODULUS_BITS || !is_prime(q) {
                return bad(format!("modulus {q} is not a prime below 2^{MAX_MODULUS_BITS}"));
            }
            if self.moduli[..i].contains(&q) {
                return bad(format!("modulus {q} appears twice"));
            }
        }
        if !(self.scale.is_finite() && self.scale > 1.0) {
            return bad(format!("scale {} must be finite and > 1", self.scale));
        }
        if !(self.noise_stddev.is_finite() && self.noise_stddev > 0.0) {
            return bad(format!("noise stddev {} must be positive", self.noise_stddev));
        }
        for &q in &self.moduli[1..=self.max_depth] {
            let ratio = q as f64 / self.scale;
            if !(0.5..=2.0).contains(&ratio) {
                return bad(format!("rescaling prime {q} is not within a factor of 2 of the scale"));
            }
        }
        Ok(())
    }

    /// Textual identifier that fully determines the parameter set.
    pub fn id(&self) -> String {
        let mut s = format!(
            "ckks/n={}/depth={}/scale={}/sigma={}/q=",
            self.ring_degree, self.max_depth, self.scale, self.noise_stddev
        );
        for (i, q) in self.moduli.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            let _ = write!(s, "{q}");
        }
        s
    }

    pub fn from_id(id: &str) -> Result<Self, CkksError> {
        let bad = || CkksError::InvalidParams(format!("malformed ckks params id '{id}'"));
        let mut parts = id.split('/');
        if parts.next() != Some("ckks") {
            return Err(bad());
        }
        let (mut n, mut depth, mut scale, mut sigma, mut moduli) = (None, None, None, None, None);
        for part in parts {
            let (key, value) = part.split_once('=').ok_or_else(bad)?;
            match key {
                "n" => n = value.parse::<usize>().ok(),
                "depth" => depth = value.parse::<usize>().ok(),
                "scale" => scale = value.parse::<f64>().ok(),
                "sigma" => sigma = value.parse::<f64>().ok(),
                "q" => {
                    moduli = value.split(',').map(|q| q.parse::<u64>().ok()).collect::<Option<Vec<_>>>();
                }
                _ => return Err(bad()),
            }
        }
        let params = Self {
            ring_degree: n.ok_or_else(bad)?,
            moduli: moduli.ok_or_else(bad)?,
            scale: scale.ok_or_else(bad)?,
            noise_stddev: sigma.ok_or_else(bad)?,
            max_depth: depth.ok_or_else(bad)?,
        };
        params.validate()?;
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        let toy = CkksParams::toy_insecure();
        assert_eq!(toy.chain_len(), 3);
        toy.validate().unwrap();
        for d in 1..=DESK_MAX_DEPTH {
            let desk = CkksParams::desk(d);
            assert_eq!(desk.max_depth, d);
            assert_eq!(desk.chain_len(), d + 1);
            desk.validate().unwrap();
            for &q in &desk.moduli {
                assert_eq!(q % 16384, 1);
            }
        }
    }

    #[test]
    fn short_chain_rejected() {
        let mut p = CkksParams::from_bit_sizes(4096, &[60], 40, 3);
        assert!(matches!(p.validate(), Err(CkksError::InvalidParams(_))));
        p.max_depth = 0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn id_roundtrip() {
        let p = CkksParams::from_bit_sizes(4096, &[60, 40, 40, 40], 40, 3);
        assert_eq!(CkksParams::from_id(&p.id()).unwrap(), p);
        assert!(CkksParams::from_id("ckks/n=4096").is_err());
        assert!(CkksParams::from_id("plain").is_err());
    }
}
