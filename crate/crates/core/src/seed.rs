//! Stable sub-seed derivation.
//!
//! Parallel and serial execution must see identical randomness, so every
//! unit of work (a rollout group member, a TTS round sample, a difficulty
//! rollout) derives its own seed from the run seed plus its coordinates.
//! The hash is a fixed FNV-1a so derived seeds never change across Rust
//! releases or platforms.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(state: u64, bytes: &[u8]) -> u64 {
    let mut h = state;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Derives a sub-seed from a base seed and a list of labelled parts.
///
/// Parts are length-prefixed so `["ab", "c"]` and `["a", "bc"]` hash
/// differently.
pub fn derive_seed(base: u64, parts: &[&[u8]]) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &base.to_le_bytes());
    for part in parts {
        h = fnv1a(h, &(part.len() as u64).to_le_bytes());
        h = fnv1a(h, part);
    }
    h
}

/// Sub-seed for member `index` of the rollout group for `question_id`.
pub fn group_member_seed(base: u64, question_id: &str, index: usize) -> u64 {
    derive_seed(base, &[b"group", question_id.as_bytes(), &(index as u64).to_le_bytes()])
}

/// Sub-seed for sample `index` of TTS round `round` on `sample_id`.
pub fn tts_member_seed(base: u64, sample_id: &str, round: usize, index: usize) -> u64 {
    derive_seed(
        base,
        &[b"tts", sample_id.as_bytes(), &(round as u64).to_le_bytes(), &(index as u64).to_le_bytes()],
    )
}

/// Sub-seed for difficulty rollout `index` on `sample_id`.
pub fn difficulty_seed(base: u64, sample_id: &str, index: usize) -> u64 {
    derive_seed(base, &[b"difficulty", sample_id.as_bytes(), &(index as u64).to_le_bytes()])
}
