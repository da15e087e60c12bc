//! Deterministic RNG stream derivation.
//!
//! Every random draw in the pipeline comes from a ChaCha stream addressed by
//! (global seed, domain, a, b). Splitting streams this way keeps parallel
//! evaluation deterministic: the draw for (iteration, frame) never depends on
//! scheduling order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Fixed stream domains; keep the numbers stable, they are part of the
/// reproducibility contract of saved artifacts.
#[derive(Debug, Clone, Copy)]
pub enum StreamDomain {
    AcquisitionNoise = 1,
    GeneratorInit = 2,
    LatentInit = 3,
    TrainBatch = 4,
    TrainEps = 5,
    EvalSampling = 6,
}

/// RNG for `(seed, domain, a, b)`. `a` and `b` must fit in 28 bits each
/// (slice/frame/iteration indices at desk scale do by a wide margin).
pub fn stream_rng(seed: u64, domain: StreamDomain, a: u64, b: u64) -> ChaCha8Rng {
    debug_assert!(a < (1 << 28) && b < (1 << 28));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 56) | (a << 28) | b);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_independent_and_reproducible() {
        let mut a = stream_rng(7, StreamDomain::TrainEps, 3, 5);
        let mut a2 = stream_rng(7, StreamDomain::TrainEps, 3, 5);
        let mut b = stream_rng(7, StreamDomain::TrainEps, 3, 6);
        let xa: f64 = a.gen();
        let xa2: f64 = a2.gen();
        let xb: f64 = b.gen();
        assert_eq!(xa, xa2);
        assert_ne!(xa, xb);
    }
}
