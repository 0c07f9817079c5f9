//! Counter-based random substreams.
//!
//! Every stage of the pipeline draws from its own ChaCha stream selected by
//! `(stage, block)`, so switching one stage on or off never shifts another
//! stage's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Pipeline stages that own a random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u16)]
pub enum Stage {
    PairSource = 1,
    PairCorrelation = 2,
    Fiber = 3,
    Converter = 4,
    BeamSplitter = 5,
    HeraldNoise = 6,
    SignalNoise = 7,
    Shutter = 8,
    Memory = 9,
    HeraldDetector = 10,
    SignalDetector = 11,
    Lock = 12,
    Sweep = 13,
    Test = 100,
}

/// Independent stream for `stage` in block `index` under `seed`.
pub fn substream(seed: u64, stage: Stage, index: u64) -> SimRng {
    debug_assert!(index < 1 << 48);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stage as u64) << 48) | (index & ((1 << 48) - 1)));
    rng
}

/// Seed derived from `seed` for the `index`-th child run (sweeps, trials).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
