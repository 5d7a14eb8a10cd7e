//! Named random streams derived from a single run seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Env = 1,
    Policy = 2,
    Latent = 3,
    Init = 4,
    Buffer = 5,
    Demo = 6,
    Eval = 7,
}

/// Independent generator for `stream` under `seed`; same inputs give the same sequence.
pub fn stream(seed: u64, stream: Stream) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream(7, Stream::Env).gen();
        let b: u64 = stream(7, Stream::Env).gen();
        let c: u64 = stream(7, Stream::Policy).gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
