//! Deterministic inputs for the benchmarks.

use tss_core::seqcore::ProbabilityMatrix;
use tss_core::{LabelSequence, Matrix};

/// Pseudo-random values in `[-1, 1)` from a fixed linear congruential stream.
pub fn values(len: usize, seed: u64) -> Vec<f64> {
    let mut state = seed
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    (0..len)
        .map(|_| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect()
}

pub fn matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    Matrix::from_vec(rows, cols, values(rows * cols, seed)).unwrap()
}

pub fn probs(frames: usize, classes: usize, seed: u64) -> ProbabilityMatrix {
    let mut logits = matrix(frames, classes, seed);
    logits.as_mut_slice().iter_mut().for_each(|v| *v *= 4.0);
    ProbabilityMatrix::softmax(&logits)
}

/// Labels in runs of `run` frames cycling through the classes.
pub fn labels(frames: usize, classes: usize, run: usize) -> LabelSequence {
    LabelSequence::new((0..frames).map(|t| (t / run) % classes).collect(), classes).unwrap()
}
