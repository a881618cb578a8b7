//! Deterministic RNG streams for reproducible parallel runs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The engine-wide generator. ChaCha8 is counter-based, so independent
/// streams can be derived from one seed without overlap.
pub type EngineRng = ChaCha8Rng;

/// Derives the stream for one worker of one simulation phase.
///
/// Streams are keyed by (seed, phase, worker): the same triple always
/// produces the same draws, and distinct triples never share a stream.
pub fn stream_rng(seed: u64, phase: u32, worker: u32) -> EngineRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((phase as u64) << 32) | worker as u64);
    rng
}
