//! Seeded random streams.
//!
//! A run has a single master seed. Every consumer of randomness asks for its
//! own stream, addressed by a path of integers (a domain tag followed by
//! indices such as epoch, batch or row). The master seed keys a ChaCha8
//! generator and the hashed path selects its stream, so two consumers never
//! share generator state and results do not depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Domain tags for the first path element.
pub mod domain {
    pub const BATCH_ORDER: u64 = 1;
    pub const INIT_WEIGHTS: u64 = 2;
    pub const CD_CHAIN: u64 = 3;
    pub const BOOTSTRAP: u64 = 4;
    pub const REPLICATE: u64 = 5;
    pub const GIBBS: u64 = 6;
    pub const FULL_FIT: u64 = 7;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a stream path into a 64-bit stream id.
pub fn stream_id(path: &[u64]) -> u64 {
    path.iter()
        .fold(0x6A09_E667_F3BC_C908, |h, &p| splitmix64(h ^ splitmix64(p)))
}

/// Derives a child seed, e.g. the master seed of one bootstrap replicate.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    splitmix64(seed ^ stream_id(path))
}

/// Opens the stream `path` under `seed`.
pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(path));
    rng
}

/// A family of per-row streams sharing a common path prefix.
#[derive(Debug, Clone)]
pub struct RowStreams {
    seed: u64,
    prefix: Vec<u64>,
}

impl RowStreams {
    pub fn new(seed: u64, prefix: &[u64]) -> Self {
        Self {
            seed,
            prefix: prefix.to_vec(),
        }
    }

    pub fn row(&self, index: usize) -> StreamRng {
        let mut path = self.prefix.clone();
        path.push(index as u64);
        stream(self.seed, &path)
    }
}
