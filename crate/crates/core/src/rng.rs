//! Seeded substreams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by the
//! run seed, with the 64-bit stream id selecting an independent substream.
//! The top 16 bits of the stream id carry a purpose tag so that, say, the
//! physics points of epoch 7 can never collide with the noise of function 7.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum Stream {
    Init = 1,
    ConfigPoints = 2,
    Mask = 3,
    Function = 4,
    Physics = 5,
    Shuffle = 6,
    Scenario = 7,
}

pub fn substream(seed: u64, purpose: Stream, index: u64) -> Rng {
    debug_assert!(index < (1 << 48));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) | (index & ((1 << 48) - 1)));
    rng
}
