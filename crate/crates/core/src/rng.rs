//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! addressed by `(master seed, purpose tag, indices)`, so draws never depend
//! on evaluation order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a master seed together with a purpose tag and any number of
/// indices into a new 64-bit seed.
pub fn derive_seed(master: u64, tag: &str, indices: &[u64]) -> u64 {
    let mut h = splitmix64(master);
    for b in tag.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    for &i in indices {
        h = splitmix64(h ^ splitmix64(i.wrapping_add(0x5851_F42D_4C95_7F2D)));
    }
    h
}

pub fn stream(master: u64, tag: &str, indices: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(master, tag, indices))
}

/// Counter-based stream: one generator per `(seed, key)` with the member
/// index selecting the ChaCha stream id.
pub fn member_stream(master: u64, tag: &str, key: u64, member: usize) -> Rng {
    let mut rng = Rng::seed_from_u64(derive_seed(master, tag, &[key]));
    rng.set_stream(member as u64);
    rng
}
