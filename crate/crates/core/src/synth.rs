//! Seeded synthetic MDPs with sparse random transitions.
//!
//! For every `(s, a)` a set of `support_size` target states is drawn uniformly
//! without replacement (self-transitions allowed) and each gets probability
//! `1/support_size`. Rewards are `r[s][a] = U[s][a] * U[s]` with independent
//! `U[0, 1)` draws.
//!
//! # Random stream (`chacha20-le64-v1`)
//!
//! The generator is ChaCha20 keyed with the seed as 8 little-endian bytes
//! followed by 24 zero bytes. Stream 0 drives the transition supports, stream
//! 1 the rewards, so either can be reproduced independently.
//!
//! * `u64` draws are consecutive 64-bit words of the ChaCha20 keystream.
//! * A uniform double is `(x >> 11) * 2^-53`.
//! * A uniform integer below `n` rejects words `x >= n * floor(2^64 / n)` and
//!   returns `x mod n`.
//! * Supports use a partial Fisher-Yates shuffle: start from `[0, 1, ..., |S|-1]`
//!   for each `(s, a)` (in order `s` major, `a` minor) and for
//!   `i in 0..support_size` swap position `i` with `i + uniform(|S| - i)`. The
//!   first `support_size` entries, sorted ascending, are the support.
//! * Probabilities are `1/support_size` rounded to the nearest double except
//!   the last (largest index), which is `1 - (sum of the others)` so that the
//!   left-to-right sum of the row is exactly `1.0`.
//! * Rewards draw `U[s][a]` in row-major order, then `U[s]` for each `s`.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{GeneratorInfo, MdpModel};
use crate::sparse::CsrMatrix;
use crate::table::Table;

pub const RNG_ID: &str = "chacha20-le64-v1";

const TRANSITION_STREAM: u64 = 0;
const REWARD_STREAM: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_states: usize,
    pub num_actions: usize,
    pub support_size: usize,
    /// Stored as `f64` bits so the spec stays `Eq`.
    discount_bits: u64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self::new(200, 50, 20, 0.99, 0)
    }
}

impl SynthSpec {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        support_size: usize,
        discount: f64,
        seed: u64,
    ) -> Self {
        Self {
            num_states,
            num_actions,
            support_size,
            discount_bits: discount.to_bits(),
            seed,
        }
    }

    pub fn discount(&self) -> f64 {
        f64::from_bits(self.discount_bits)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_states == 0 || self.num_actions == 0 {
            return Err(Error::Spec("need at least one state and one action".into()));
        }
        if self.support_size == 0 || self.support_size > self.num_states {
            return Err(Error::Spec(format!(
                "support size {} must lie in 1..={}",
                self.support_size, self.num_states
            )));
        }
        let g = self.discount();
        if !(g > 0.0 && g < 1.0) {
            return Err(Error::Spec(format!("discount {g} outside (0, 1)")));
        }
        Ok(())
    }
}

/// The ChaCha20 stream used by the generator.
pub struct SynthRng(ChaCha20Rng);

impl SynthRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(stream);
        Self(rng)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `0..n`, `n >= 1`.
    pub fn below(&mut self, n: u64) -> u64 {
        let limit = n * (u64::MAX / n);
        loop {
            let x = self.next_u64();
            if x < limit {
                return x % n;
            }
        }
    }
}

/// One transition row with exactly-summing probabilities.
fn support_row(rng: &mut SynthRng, scratch: &mut [usize], k: usize) -> Vec<(usize, f64)> {
    let n = scratch.len();
    for (i, v) in scratch.iter_mut().enumerate() {
        *v = i;
    }
    for i in 0..k {
        let j = i + rng.below((n - i) as u64) as usize;
        scratch.swap(i, j);
    }
    let mut targets = scratch[..k].to_vec();
    targets.sort_unstable();
    let p = 1.0 / k as f64;
    let mut sum = 0.0;
    let mut row = Vec::with_capacity(k);
    for (i, &t) in targets.iter().enumerate() {
        let v = if i + 1 == k { 1.0 - sum } else { p };
        sum += v;
        row.push((t, v));
    }
    row
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<MdpModel> {
    spec.validate()?;
    let (ns, na, k) = (spec.num_states, spec.num_actions, spec.support_size);

    let mut rng = SynthRng::new(spec.seed, TRANSITION_STREAM);
    let mut scratch = vec![0usize; ns];
    // rows[a][s]
    let mut rows = vec![Vec::with_capacity(ns); na];
    for _s in 0..ns {
        for per_action in rows.iter_mut() {
            per_action.push(support_row(&mut rng, &mut scratch, k));
        }
    }
    let transitions = rows
        .iter()
        .map(|r| CsrMatrix::from_rows(ns, r))
        .collect::<Result<Vec<_>>>()?;

    let mut rng = SynthRng::new(spec.seed, REWARD_STREAM);
    let per_pair: Vec<f64> = (0..ns * na).map(|_| rng.unit()).collect();
    let per_state: Vec<f64> = (0..ns).map(|_| rng.unit()).collect();
    let rewards: Vec<f64> = per_pair
        .iter()
        .enumerate()
        .map(|(i, u)| u * per_state[i / na])
        .collect();

    Ok(MdpModel {
        num_states: ns,
        num_actions: na,
        transitions,
        rewards: Table::from_vec(ns, na, rewards)?,
        discount: spec.discount(),
        generator: Some(GeneratorInfo {
            seed: spec.seed,
            support_size: k as u64,
            rng: RNG_ID.to_string(),
        }),
    })
}
