//! DTW alignment checked against exhaustive enumeration of monotone paths.

use proptest::prelude::*;
use tss_core::continuity::{continuity_loss, dtw_align, ActionSequence};
use tss_core::losses::{classification_loss, Targets};
use tss_core::seqcore::{clamped_ln, ProbabilityMatrix};
use tss_core::Matrix;

/// Walks every path that starts at the first action, ends at the last and at
/// each frame either stays or moves one action forward.
fn best_path_cost(actions: &[usize], probs: &ProbabilityMatrix) -> f64 {
    fn walk(
        t: usize,
        l: usize,
        actions: &[usize],
        probs: &ProbabilityMatrix,
        acc: f64,
        best: &mut f64,
    ) {
        let acc = acc - clamped_ln(probs.get(t, actions[l]));
        if t + 1 == probs.frames() {
            if l + 1 == actions.len() {
                *best = best.min(acc);
            }
            return;
        }
        // Too few frames left to reach the last action.
        if actions.len() - 1 - l > probs.frames() - 1 - t {
            return;
        }
        walk(t + 1, l, actions, probs, acc, best);
        if l + 1 < actions.len() {
            walk(t + 1, l + 1, actions, probs, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(0, 0, actions, probs, 0.0, &mut best);
    best
}

fn probs_strategy() -> impl Strategy<Value = ProbabilityMatrix> {
    (1usize..=10, 2usize..=4).prop_flat_map(|(t, k)| {
        prop::collection::vec(-4.0f64..4.0, t * k)
            .prop_map(move |v| ProbabilityMatrix::softmax(&Matrix::from_vec(t, k, v).unwrap()))
    })
}

fn actions_for(probs: &ProbabilityMatrix, raw: &[usize]) -> Vec<usize> {
    let k = probs.num_classes();
    let mut out: Vec<usize> = Vec::new();
    for &r in raw {
        let a = r % k;
        if out.last() != Some(&a) && out.len() < probs.frames() {
            out.push(a);
        }
    }
    out
}

proptest! {
    #[test]
    fn dtw_cost_is_optimal(probs in probs_strategy(), raw in prop::collection::vec(0usize..4, 1..=4)) {
        let actions = actions_for(&probs, &raw);
        let alignment = dtw_align(&ActionSequence::new(actions.clone()).unwrap(), &probs).unwrap();
        let expected = best_path_cost(&actions, &probs);
        prop_assert!((alignment.cost - expected).abs() <= 1e-12);
        // The labels realize the reported cost and visit every action in order.
        let realized: f64 = alignment.labels.iter().enumerate().map(|(t, &a)| -clamped_ln(probs.get(t, a))).sum();
        prop_assert!((realized - alignment.cost).abs() <= 1e-12);
        let mut visited = alignment.labels.clone();
        visited.dedup();
        prop_assert_eq!(visited, actions);
    }

    #[test]
    fn continuity_value_is_cross_entropy_on_alignment(probs in probs_strategy(), stride in 1usize..6) {
        let out = continuity_loss(&probs, stride).unwrap();
        let ce = classification_loss(&probs, Targets::Hard(out.labels())).unwrap();
        prop_assert!((out.loss.value - ce.value).abs() <= 1e-12);
    }
}
