//! Keyed random substreams.
//!
//! Every random draw in a run comes from a ChaCha8 stream addressed by
//! `(seed, domain, loop, iteration, sample)`. The key is the run seed, the
//! stream id mixes domain/loop/iteration, and each sample starts at its own
//! offset in the keystream. Two draws with the same address are identical no
//! matter which worker thread performs them or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Words of keystream reserved per sample index.
const SAMPLE_STRIDE_BITS: u32 = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Domain {
    Init = 1,
    Select = 2,
    Mutate = 3,
    ModelInit = 4,
    Train = 5,
    Test = 255,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Substream for a single `(seed, domain, loop, iteration, sample)` address.
pub fn substream(seed: u64, domain: Domain, loop_index: u64, iteration: u64, sample: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stream = splitmix64(
        splitmix64(splitmix64(domain as u64) ^ loop_index).wrapping_add(iteration.rotate_left(17)),
    );
    rng.set_stream(stream);
    rng.set_word_pos((sample as u128) << SAMPLE_STRIDE_BITS);
    rng
}

/// Convenience generator for tests and examples.
pub fn seeded(seed: u64) -> Rng {
    substream(seed, Domain::Test, 0, 0, 0)
}
