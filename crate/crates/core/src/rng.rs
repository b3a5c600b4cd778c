//! Seeded random streams.
//!
//! Every path owns a ChaCha8 stream selected by `(seed, stream)`. ChaCha
//! streams with distinct indices never overlap, so path `i` of a Monte Carlo
//! run can be generated on any thread without coordination.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used by all samplers.
pub type PathRng = ChaCha8Rng;

/// Stream bit reserved for the external arrivals of a thinning path.
const EXTERNAL_BIT: u64 = 1 << 63;

/// Explicit seed plus stream index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamSeed {
    pub seed: u64,
    pub stream: u64,
}

impl StreamSeed {
    pub fn new(seed: u64, stream: u64) -> Self {
        debug_assert!(stream & EXTERNAL_BIT == 0, "stream index uses the reserved bit");
        Self { seed, stream }
    }

    pub fn rng(&self) -> PathRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// Sibling stream for materialising the external path ahead of time.
    pub fn external(&self) -> Self {
        Self {
            seed: self.seed,
            stream: self.stream | EXTERNAL_BIT,
        }
    }
}

impl From<u64> for StreamSeed {
    fn from(seed: u64) -> Self {
        Self::new(seed, 0)
    }
}
