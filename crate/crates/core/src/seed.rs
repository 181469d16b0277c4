//! Deterministic splitting of one master seed into independent random streams.
//!
//! Every stream is a ChaCha8 generator keyed by the master seed, with the
//! ChaCha stream id selecting the purpose. Streams with different ids never
//! overlap, so adding draws to one stream cannot perturb another.
//!
//! | purpose            | stream id        |
//! |--------------------|------------------|
//! | dataset generation | 0                |
//! | chain state        | 2                |
//! | minibatch shuffle  | 3                |
//! | hidden unit `j` init | `0x100 + j`    |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data,
    Chains,
    Shuffle,
    /// Initial weights of one hidden unit.
    HiddenInit(usize),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Data => 0,
            Stream::Chains => 2,
            Stream::Shuffle => 3,
            Stream::HiddenInit(j) => 0x100 + j as u64,
        }
    }
}

/// Generator for `stream` derived from `master`.
pub fn stream_rng(master: u64, stream: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream.id());
    rng
}
