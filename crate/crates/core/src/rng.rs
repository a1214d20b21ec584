//! Keyed, order-independent random streams.
//!
//! Every stream is a ChaCha12 keystream whose 256-bit key is the SHA-256 of
//! `(global seed, image id, corruption kind, severity)`. ChaCha is a
//! counter-mode generator, so a stream depends only on its key and never on
//! how many other streams were drawn before it or on which thread.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

use crate::corruption::{CorruptionKind, Severity};

const DOMAIN: &[u8] = b"reobench.stream.v1";

#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha12Rng,
}

/// Derives the stream for one `(seed, image, kind, severity)` cell.
pub fn derive_stream(global_seed: u64, image_id: &str, kind: CorruptionKind, severity: Severity) -> RngStream {
    let mut h = Sha256::new();
    h.update(DOMAIN);
    h.update(global_seed.to_le_bytes());
    h.update((image_id.len() as u64).to_le_bytes());
    h.update(image_id.as_bytes());
    let name = kind.name();
    h.update((name.len() as u64).to_le_bytes());
    h.update(name.as_bytes());
    h.update(severity.level().to_le_bytes());
    let key: [u8; 32] = h.finalize().into();
    RngStream::from_key(key)
}

impl RngStream {
    pub fn from_key(key: [u8; 32]) -> Self {
        Self {
            inner: ChaCha12Rng::from_seed(key),
        }
    }

    /// Convenience for tests and ad-hoc use outside the keyed pipeline.
    pub fn from_seed(seed: u64) -> Self {
        Self {
            inner: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int_inclusive(&mut self, lo: i64, hi: i64) -> i64 {
        self.inner.random_range(lo..=hi)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
