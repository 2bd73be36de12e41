//! Counter-based random streams.
//!
//! Every draw made by a solver is addressed by `(seed, iteration, half-step)`
//! and the position of the draw inside that stream, so a trace can be
//! replayed exactly and two trials never share randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Which of the two mini-batches of an iteration a stream feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Base,
    Half,
}

const INIT_STREAM: u64 = u64::MAX;
const SCENARIO_STREAM: u64 = u64::MAX - 1;
const PROBE_STREAM: u64 = u64::MAX - 2;
const INSTANCE_STREAM: u64 = u64::MAX - 3;

fn keyed(seed: u64, stream: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream for the estimator of iteration `k` in the given phase.
pub fn iteration_stream(seed: u64, k: u64, phase: Phase) -> Stream {
    let idx = k.checked_mul(2).expect("iteration index overflow");
    keyed(
        seed,
        match phase {
            Phase::Base => idx,
            Phase::Half => idx + 1,
        },
    )
}

/// Stream used to draw the starting point.
pub fn init_stream(seed: u64) -> Stream {
    keyed(seed, INIT_STREAM)
}

/// Stream used to draw fixed scenario sets (sample-average approximation).
pub fn scenario_stream(seed: u64) -> Stream {
    keyed(seed, SCENARIO_STREAM)
}

/// Stream used by problem generators for instance data.
pub fn instance_stream(seed: u64) -> Stream {
    keyed(seed, INSTANCE_STREAM)
}

/// Stream used by randomized metrics such as the gap estimate.
pub fn probe_stream(seed: u64) -> Stream {
    keyed(seed, PROBE_STREAM)
}
