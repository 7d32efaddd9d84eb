//! Counter-based random streams.
//!
//! A [`Stream`] is a pair `(key, counter)`; each draw hashes the pair with the
//! SplitMix64 finalizer and bumps the counter. Streams for independent runs
//! are obtained with [`derive_seed`], which folds a path of indices (grid cell,
//! replication, role) into a fresh key. Both functions are part of the
//! reproducibility contract and must not change between versions.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `seed XOR hash(path)`, where the hash folds each index through [`mix64`].
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut h = 0xD134_2543_DE82_EF95u64;
    for &x in path {
        h = mix64(h ^ mix64(x.wrapping_add(GOLDEN)));
    }
    seed ^ h
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stream {
    key: u64,
    counter: u64,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self {
            key: mix64(seed ^ 0x6A09_E667_F3BC_C908),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key ^ mix64(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn next_f64(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        (self.next_u64() >> 11) as f64 * SCALE
    }

    /// Number of draws taken so far.
    pub fn position(&self) -> u64 {
        self.counter
    }
}
