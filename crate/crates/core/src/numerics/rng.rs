//! Seeded, named random streams.
//!
//! Every consumer derives its generator from the run seed and a stable name,
//! so adding a consumer never perturbs the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RunRng = ChaCha8Rng;

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn seeded(seed: u64) -> RunRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for the substream `name` of `seed`.
pub fn substream(seed: u64, name: &str) -> RunRng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a(name))
}

/// Counter-based split: stream `index` of substream `name`.
pub fn indexed(seed: u64, name: &str, index: u64) -> RunRng {
    let mut rng = substream(seed, name);
    rng.set_stream(index);
    rng
}
