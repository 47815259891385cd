//! Deterministic, replayable randomness.
//!
//! Every trial draws from ChaCha8 streams keyed by `(master seed, trial,
//! purpose)`: the master seed fixes the key, and the stream id is
//! `trial * 4 + purpose`. Streams never overlap, so trials can run in any
//! order — or in parallel — and reproduce bit-identical transcripts.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purposes multiplexed onto one trial's stream block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    /// Which pairs get checked.
    PlanSelection = 0,
    /// Basis choice per checked pair.
    BasisChoice = 1,
    /// Measurement outcome sampling.
    OutcomeSampling = 2,
    /// Experiment-specific draws (e.g. random attack generation).
    Auxiliary = 3,
}

/// One ChaCha8 stream for `(seed, trial, purpose)`.
pub fn substream(master_seed: u64, trial: u64, purpose: StreamPurpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial.wrapping_mul(4).wrapping_add(purpose as u64));
    rng
}

/// The independent streams one protocol trial consumes.
#[derive(Debug, Clone)]
pub struct TrialRng {
    pub plan: ChaCha8Rng,
    pub basis: ChaCha8Rng,
    pub outcome: ChaCha8Rng,
}

impl TrialRng {
    pub fn new(master_seed: u64, trial: u64) -> Self {
        TrialRng {
            plan: substream(master_seed, trial, StreamPurpose::PlanSelection),
            basis: substream(master_seed, trial, StreamPurpose::BasisChoice),
            outcome: substream(master_seed, trial, StreamPurpose::OutcomeSampling),
        }
    }
}
