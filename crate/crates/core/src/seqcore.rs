//! Domain value types shared by every other module: label sequences and
//! their run-length segment form, row-stochastic probability matrices,
//! action-frequency vectors and the KL primitive used by both the affinity
//! and continuity losses.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TssError};
use crate::matrix::Matrix;

/// Floor applied to every probability before a logarithm is taken.
pub const PROB_FLOOR: f64 = 1e-8;

/// Tolerance on row sums accepted by [`ProbabilityMatrix::new`] and
/// [`ActionFrequency::new`].
pub const SIMPLEX_TOL: f64 = 1e-6;

/// `ln(max(p, PROB_FLOOR))`.
#[inline]
pub fn clamped_ln(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

/// Per-frame class ids in `[0, K)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSequence {
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabelSequence {
    pub fn new(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(TssError::EmptySequence);
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(TssError::LabelOutOfRange { label, num_classes });
        }
        Ok(Self {
            labels,
            num_classes,
        })
    }

    #[inline]
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    #[inline]
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// Always false; a `LabelSequence` holds at least one frame.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn segments(&self) -> Vec<Segment> {
        run_length(&self.labels)
    }

    pub fn into_labels(self) -> Vec<usize> {
        self.labels
    }
}

/// A maximal run of one label over frames `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub label: usize,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    #[inline]
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// Run-length encodes a label slice.
pub fn segments_from_labels(labels: &[usize]) -> Result<Vec<Segment>> {
    if labels.is_empty() {
        return Err(TssError::EmptySequence);
    }
    Ok(run_length(labels))
}

fn run_length(labels: &[usize]) -> Vec<Segment> {
    let mut segments: Vec<Segment> = Vec::new();
    for (t, &label) in labels.iter().enumerate() {
        match segments.last_mut() {
            Some(seg) if seg.label == label => seg.end = t + 1,
            _ => segments.push(Segment {
                label,
                start: t,
                end: t + 1,
            }),
        }
    }
    segments
}

/// Inverse of [`segments_from_labels`].
pub fn expand_segments(segments: &[Segment]) -> Vec<usize> {
    let mut labels = Vec::with_capacity(segments.last().map_or(0, |s| s.end));
    for seg in segments {
        labels.extend(std::iter::repeat_n(seg.label, seg.len()));
    }
    labels
}

/// `T×K` matrix whose rows are probability distributions over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix(Matrix);

impl ProbabilityMatrix {
    /// Validates non-negativity and unit row sums (within [`SIMPLEX_TOL`]).
    pub fn new(matrix: Matrix) -> Result<Self> {
        if matrix.rows() == 0 {
            return Err(TssError::EmptySequence);
        }
        if matrix.cols() == 0 {
            return Err(TssError::DimensionMismatch("zero classes".into()));
        }
        for (t, row) in matrix.iter_rows().enumerate() {
            if let Some(&v) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(TssError::InvalidProbability(format!(
                    "entry {v} in row {t}"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(TssError::InvalidProbability(format!(
                    "row {t} sums to {sum}"
                )));
            }
        }
        Ok(Self(matrix))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    /// Wraps a matrix without checking the simplex constraint.
    ///
    /// Finite-difference gradient checks perturb single entries, which
    /// pushes row sums off 1 by the step size; they go through this.
    pub fn from_matrix_unchecked(matrix: Matrix) -> Self {
        Self(matrix)
    }

    pub fn one_hot(labels: &LabelSequence) -> Self {
        let mut m = Matrix::zeros(labels.len(), labels.num_classes());
        for (t, &l) in labels.labels().iter().enumerate() {
            m.set(t, l, 1.0);
        }
        Self(m)
    }

    pub fn uniform(frames: usize, num_classes: usize) -> Self {
        Self(Matrix::filled(
            frames,
            num_classes,
            1.0 / num_classes as f64,
        ))
    }

    /// Row-wise softmax of raw scores.
    pub fn softmax(logits: &Matrix) -> Self {
        let mut out = logits.clone();
        for t in 0..out.rows() {
            softmax_in_place(out.row_mut(t));
        }
        Self(out)
    }

    #[inline]
    pub fn frames(&self) -> usize {
        self.0.rows()
    }

    #[inline]
    pub fn num_classes(&self) -> usize {
        self.0.cols()
    }

    #[inline]
    pub fn get(&self, t: usize, k: usize) -> f64 {
        self.0.get(t, k)
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[f64] {
        self.0.row(t)
    }

    #[inline]
    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// Per-frame argmax, ties resolved to the lowest class id.
    pub fn argmax_labels(&self) -> Vec<usize> {
        self.0.iter_rows().map(argmax).collect()
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Length-K vector of per-class temporal proportions of a video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionFrequency(Vec<f64>);

impl ActionFrequency {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(TssError::EmptySequence);
        }
        if let Some(&v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(TssError::InvalidProbability(format!("frequency entry {v}")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(TssError::InvalidProbability(format!(
                "frequencies sum to {sum}"
            )));
        }
        Ok(Self(values))
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    #[inline]
    pub fn num_classes(&self) -> usize {
        self.0.len()
    }
}

/// Hard action frequency: the fraction of frames carrying each label.
pub fn action_frequency_from_labels(
    labels: &[usize],
    num_classes: usize,
) -> Result<ActionFrequency> {
    if labels.is_empty() {
        return Err(TssError::EmptySequence);
    }
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        if l >= num_classes {
            return Err(TssError::LabelOutOfRange {
                label: l,
                num_classes,
            });
        }
        counts[l] += 1;
    }
    let total = labels.len() as f64;
    Ok(ActionFrequency(
        counts.into_iter().map(|c| c as f64 / total).collect(),
    ))
}

/// Soft action frequency: the column means of the prediction matrix.
pub fn soft_action_frequency(probs: &ProbabilityMatrix) -> ActionFrequency {
    let frames = probs.frames();
    let mut sums = vec![0.0; probs.num_classes()];
    for t in 0..frames {
        for (s, &p) in sums.iter_mut().zip(probs.row(t)) {
            *s += p;
        }
    }
    let scale = 1.0 / frames as f64;
    ActionFrequency(sums.into_iter().map(|s| s * scale).collect())
}

/// `KL(q || p) = Σ q(k) ln(q(k) / p(k))`, with `p` floored at
/// [`PROB_FLOOR`] and `0 · ln 0 = 0` for zero entries of `q`.
pub fn kl_divergence(q: &ActionFrequency, p: &ActionFrequency) -> Result<f64> {
    kl_divergence_slices(q.values(), p.values())
}

pub(crate) fn kl_divergence_slices(q: &[f64], p: &[f64]) -> Result<f64> {
    if q.len() != p.len() {
        return Err(TssError::DimensionMismatch(format!(
            "KL between {} and {} classes",
            q.len(),
            p.len()
        )));
    }
    let kl: f64 = q
        .iter()
        .zip(p)
        .filter(|(&qk, _)| qk > 0.0)
        .map(|(&qk, &pk)| qk * (qk.ln() - clamped_ln(pk)))
        .sum();
    // The floor can lift p above q by a hair when both are tiny.
    Ok(kl.max(0.0))
}
