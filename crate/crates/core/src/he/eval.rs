use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::{Ciphertext, HeContext, HeError, KeyPair, PublicKey, RelinKey};

/// Snapshot of the operations an [`Evaluator`] has performed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub hsub: u64,
    pub hmul: u64,
    pub hmul_plain: u64,
    pub encrypt: u64,
}

#[derive(Debug, Default)]
struct Counters {
    hsub: AtomicU64,
    hmul: AtomicU64,
    hmul_plain: AtomicU64,
    encrypt: AtomicU64,
}

/// Evaluation-side view of a key set: public and relinearization keys only,
/// with per-instance operation counters. It cannot decrypt.
#[derive(Debug)]
pub struct Evaluator {
    ctx: Arc<HeContext>,
    public: Arc<PublicKey>,
    relin: Arc<RelinKey>,
    counters: Counters,
}

impl Evaluator {
    pub fn new(ctx: Arc<HeContext>, public: PublicKey, relin: RelinKey) -> Result<Self, HeError> {
        ctx.check_id(public.params_id())?;
        ctx.check_id(relin.params_id())?;
        Ok(Self { ctx, public: Arc::new(public), relin: Arc::new(relin), counters: Counters::default() })
    }

    pub fn from_keys(ctx: Arc<HeContext>, keys: &KeyPair) -> Result<Self, HeError> {
        Self::new(ctx, keys.public.clone(), keys.relin.clone())
    }

    /// Fresh evaluator sharing the same keys, with zeroed counters.
    pub fn fork(&self) -> Self {
        Self {
            ctx: Arc::clone(&self.ctx),
            public: Arc::clone(&self.public),
            relin: Arc::clone(&self.relin),
            counters: Counters::default(),
        }
    }

    pub fn context(&self) -> &Arc<HeContext> {
        &self.ctx
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.public
    }

    pub fn counts(&self) -> OpCounts {
        OpCounts {
            hsub: self.counters.hsub.load(Ordering::Relaxed),
            hmul: self.counters.hmul.load(Ordering::Relaxed),
            hmul_plain: self.counters.hmul_plain.load(Ordering::Relaxed),
            encrypt: self.counters.encrypt.load(Ordering::Relaxed),
        }
    }

    pub fn encrypt(&self, m: f64) -> Result<Ciphertext, HeError> {
        let c = self.ctx.encrypt(&self.public, m)?;
        self.counters.encrypt.fetch_add(1, Ordering::Relaxed);
        Ok(c)
    }

    pub fn hsub(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
        let c = self.ctx.hsub(a, b)?;
        self.counters.hsub.fetch_add(1, Ordering::Relaxed);
        Ok(c)
    }

    pub fn hmul(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
        let c = self.ctx.hmul(a, b, &self.relin)?;
        self.counters.hmul.fetch_add(1, Ordering::Relaxed);
        Ok(c)
    }

    pub fn hmul_plain(&self, a: &Ciphertext, k: f64) -> Result<Ciphertext, HeError> {
        let c = self.ctx.hmul_plain(a, k)?;
        self.counters.hmul_plain.fetch_add(1, Ordering::Relaxed);
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::he::SchemeParams;

    #[test]
    fn counts_successful_operations_only() {
        let ctx = Arc::new(HeContext::new(SchemeParams::Plain).unwrap());
        let keys = ctx.keygen(1).unwrap();
        let ev = Evaluator::from_keys(Arc::clone(&ctx), &keys).unwrap();
        let a = ev.encrypt(2.0).unwrap();
        let b = ev.encrypt(3.0).unwrap();
        ev.hsub(&a, &b).unwrap();
        ev.hmul(&a, &b).unwrap();
        ev.hmul(&a, &b).unwrap();
        assert!(ev.hmul_plain(&a, 0.0).is_err());
        assert_eq!(ev.counts(), OpCounts { hsub: 1, hmul: 2, hmul_plain: 0, encrypt: 2 });
        assert_eq!(ev.fork().counts(), OpCounts::default());
    }
}
