//! Deterministic random streams keyed by `(seed, round, purpose, index)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a random stream is used for; each purpose draws independently.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    ModelInit,
    Compromised,
    Partition,
    Selection,
    LocalShuffle,
    Poison,
    QEstimate,
    Data,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::ModelInit => 0x11,
            Purpose::Compromised => 0x22,
            Purpose::Partition => 0x33,
            Purpose::Selection => 0x44,
            Purpose::LocalShuffle => 0x55,
            Purpose::Poison => 0x66,
            Purpose::QEstimate => 0x77,
            Purpose::Data => 0x88,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub fn derive_seed(seed: u64, round: u64, purpose: Purpose, index: u64) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ round);
    h = splitmix64(h ^ purpose.tag());
    splitmix64(h ^ index)
}

pub fn stream(seed: u64, round: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, round, purpose, index))
}
