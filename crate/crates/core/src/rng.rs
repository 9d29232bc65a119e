//! Counter-based random streams.
//!
//! A single master seed keys a ChaCha8 generator; every consumer gets its own
//! stream id built from a [`StreamKind`] tag and two indices (for example
//! instance and batch). Streams are independent, and a stream's contents do
//! not depend on which thread asks for it or in what order, so parallel runs
//! reproduce sequential ones exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tag occupying the top byte of a stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum StreamKind {
    Instance = 1,
    Batch = 2,
    Human = 3,
    Selection = 4,
    Estimation = 5,
    Task = 6,
    Schedule = 7,
    Participant = 8,
    Resolve = 9,
    Misc = 255,
}

const INDEX_BITS: u32 = 28;
const INDEX_LIMIT: u64 = 1 << INDEX_BITS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    master: u64,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        SeedTree { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Stream `(kind, a, b)`. Both indices must be below `2^28`.
    pub fn stream(&self, kind: StreamKind, a: u64, b: u64) -> StreamRng {
        assert!(a < INDEX_LIMIT && b < INDEX_LIMIT, "stream index out of range: ({a}, {b})");
        let id = ((kind as u64) << (2 * INDEX_BITS)) | (a << INDEX_BITS) | b;
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(id);
        rng
    }

    /// A child tree whose master seed is drawn from stream `(kind, a, b)`.
    pub fn child(&self, kind: StreamKind, a: u64, b: u64) -> SeedTree {
        use rand::RngCore;
        SeedTree::new(self.stream(kind, a, b).next_u64())
    }
}
