//! Frame-index selection for a given budget.

use serde::{Deserialize, Serialize};

/// How frame indices are chosen for a budget of `n` frames.
///
/// `UniformStride` is the default and matches stated experimental practice;
/// `FirstN` is kept behind this switch for fidelity experiments with the
/// take-the-prefix rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameSelection {
    #[default]
    UniformStride,
    FirstN,
}

/// Uniform-stride frame selection: `index_k = floor(k * total / n)` for
/// `k = 0..n-1`, deduplicated when `total < n`.
///
/// Deterministic, strictly increasing, and — when `total` is a multiple of
/// both budgets — the index set for budget `n` is a subset of the set for
/// `2n`, so doubling the budget only ever adds information.
pub fn frame_indices(total_frames: usize, n: usize) -> Vec<usize> {
    if total_frames == 0 || n == 0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(n.min(total_frames));
    let mut last = usize::MAX;
    for k in 0..n {
        let idx = k * total_frames / n;
        if idx != last {
            out.push(idx);
            last = idx;
        }
    }
    out
}

/// Frame selection under an explicit rule.
pub fn frame_indices_with(rule: FrameSelection, total_frames: usize, n: usize) -> Vec<usize> {
    match rule {
        FrameSelection::UniformStride => frame_indices(total_frames, n),
        FrameSelection::FirstN => (0..n.min(total_frames)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    #[test]
    fn uniform_stride_examples() {
        assert_eq!(frame_indices(128, 4), vec![0, 32, 64, 96]);
        assert_eq!(frame_indices(10, 10), (0..10).collect::<Vec<_>>());
        assert_eq!(frame_indices(3, 8), vec![0, 1, 2]);
    }

    #[test]
    fn first_n_rule() {
        assert_eq!(frame_indices_with(FrameSelection::FirstN, 128, 4), vec![0, 1, 2, 3]);
        assert_eq!(frame_indices_with(FrameSelection::FirstN, 3, 8), vec![0, 1, 2]);
    }

    #[test]
    fn empty_inputs() {
        assert!(frame_indices(0, 4).is_empty());
        assert!(frame_indices(4, 0).is_empty());
    }

    proptest! {
        #[test]
        fn strictly_increasing_and_in_range(total in 1usize..512, n in 1usize..512) {
            let idx = frame_indices(total, n);
            prop_assert_eq!(idx.len(), n.min(total));
            prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(idx.iter().all(|&i| i < total));
        }

        /// Doubling the budget refines the index set when the total divides
        /// cleanly, so later TTS rounds see a superset of earlier frames.
        #[test]
        fn doubling_nests_for_divisible_totals(pow in 1u32..6, mult in 1usize..8) {
            let n = 1usize << pow;
            let total = n * 2 * mult;
            let sparse: BTreeSet<_> = frame_indices(total, n).into_iter().collect();
            let dense: BTreeSet<_> = frame_indices(total, 2 * n).into_iter().collect();
            prop_assert!(sparse.is_subset(&dense));
        }
    }
}
