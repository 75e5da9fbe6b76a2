//! Seed derivation. Every random stream in a run is a ChaCha8 generator keyed
//! by `(master seed, purpose, index)`, so results do not depend on the order
//! in which agents are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags for derived streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Environment = 1,
    Encoder = 2,
    /// Context and reward draws of a participating agent.
    Agent = 3,
    /// Participation coin flips of a participating agent.
    Report = 4,
    Shuffler = 5,
    /// Context and reward draws of a held-out evaluation agent.
    Evaluation = 6,
    Dataset = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(stream as u64)) ^ index)
}

pub fn rng_for(master: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, index))
}
