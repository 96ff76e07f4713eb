//! Counter-based random streams.
//!
//! Every draw is addressed by a tuple of integers rather than by the position
//! in a shared sequence: the master seed and a domain tag select the ChaCha
//! key, the second component selects the ChaCha stream, and an optional
//! third component selects a fixed-size window inside that stream. Draws for
//! different tuples are therefore independent and reproducible in any order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Domain tag for per-state scheduler choices.
pub const DOMAIN_SCHEDULER: u64 = 0x5343_4845_4455_4c45;
/// Domain tag for trace sampling.
pub const DOMAIN_TRACE: u64 = 0x5452_4143_4553_0000;

// Words reserved per addressed window; rejection sampling in `gen_range`
// consumes two words per attempt, so overrunning a window is negligible.
const WINDOW_WORDS: u128 = 64;

fn splitmix64(x: &mut u64) -> u64 {
    *x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn key(master_seed: u64, domain: u64) -> [u8; 32] {
    let mut state = master_seed ^ domain.rotate_left(17);
    let mut out = [0u8; 32];
    for chunk in out.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    out
}

/// Stream `stream` of the generator keyed by `(master_seed, domain)`.
pub fn stream(master_seed: u64, domain: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(key(master_seed, domain));
    rng.set_stream(stream);
    rng
}

/// Window `window` of [`stream`], positioned at its first word.
pub fn window(master_seed: u64, domain: u64, stream_id: u64, window: u64) -> ChaCha8Rng {
    let mut rng = stream(master_seed, domain, stream_id);
    rng.set_word_pos(u128::from(window) * WINDOW_WORDS);
    rng
}

/// Uniform index in `0..n` addressed by `(master_seed, seed, state)`.
pub fn uniform_choice(master_seed: u64, seed: u64, state: u64, n: usize) -> usize {
    assert!(n > 0, "cannot choose among zero options");
    if n == 1 {
        return 0;
    }
    window(master_seed, DOMAIN_SCHEDULER, seed, state).gen_range(0..n)
}
