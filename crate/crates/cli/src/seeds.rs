// SPDX-License-Identifier: Apache-2.0

//! Named random substreams derived from the run seed.
//!
//! Each consumer (instance generation, rounding, audits) reads its own ChaCha
//! stream, so adding draws to one never shifts another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const INSTANCE: &str = "instance";
pub const ROUNDING: &str = "rounding";
pub const AUDIT: &str = "audit";

/// FNV-1a; stable across platforms and compiler versions, unlike `DefaultHasher`.
fn stream_id(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

/// Seed for item `index` of the stream `name`.
pub fn substream(seed: u64, name: &str, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(name));
    rng.set_word_pos(u128::from(index) * 2);
    rng.next_u64()
}
