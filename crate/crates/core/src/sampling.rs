//! Seed expansion for reproducible sampling.
//!
//! A single 64-bit seed selects a ChaCha20 key; draw `i` reads from stream
//! `i` of that key. Every draw therefore owns an independent, addressable
//! random sequence and the output does not depend on how draws are split
//! across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Random stream for draw number `index` under `seed`.
pub fn draw_stream(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws `n` values with `draw`, one stream per value.
pub fn sample_n<F>(seed: u64, n: usize, exec: crate::par::Execution, draw: F) -> Vec<f64>
where
    F: Fn(&mut ChaCha20Rng) -> f64 + Sync + Send,
{
    const CHUNK: u64 = 4096;
    let chunks: Vec<u64> = (0..(n as u64).div_ceil(CHUNK)).collect();
    let parts = crate::par::map(&chunks, exec, |&c| {
        let start = c * CHUNK;
        let end = ((c + 1) * CHUNK).min(n as u64);
        (start..end).map(|i| draw(&mut draw_stream(seed, i))).collect::<Vec<f64>>()
    });
    parts.into_iter().flatten().collect()
}
