//! Reproducible random streams.
//!
//! Every simulated path draws from its own ChaCha stream, addressed by
//! `(seed, purpose, index)`. Work can therefore be split across any number of
//! workers and still produce the same ensemble.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type PathRng = ChaCha8Rng;

/// What a family of streams is used for. Distinct purposes never share a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Pilot,
    Initialization,
    Training,
    Companion,
    Distortion,
    MonteCarlo,
    Custom(u32),
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Pilot => 1,
            Purpose::Initialization => 2,
            Purpose::Training => 3,
            Purpose::Companion => 4,
            Purpose::Distortion => 5,
            Purpose::MonteCarlo => 6,
            Purpose::Custom(c) => 0x1000 + u64::from(c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamFactory {
    seed: u64,
}

impl StreamFactory {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, purpose: Purpose, index: u64) -> PathRng {
        let mut state = self.seed ^ purpose.tag().wrapping_mul(0xA076_1D64_78BD_642F);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(index);
        rng
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw on (0, 1], suitable for inverse-transform sampling with logarithms.
pub fn open_unit(rng: &mut (impl rand::Rng + ?Sized)) -> f64 {
    1.0 - rng.random::<f64>()
}
