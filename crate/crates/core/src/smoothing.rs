//! Adaptive boundary smoothing.
//!
//! Around every boundary between two segments, a vicinity proportional to
//! each segment's duration receives soft targets: an adaptive sigmoid in the
//! distance to the boundary splits the mass between the two adjacent labels.
//! Longer segments get wider vicinities and therefore a gentler decay. A
//! fixed-width linear ramp is provided as the baseline it is compared with.

use serde::Serialize;

use crate::error::{Result, TssError};
use crate::matrix::Matrix;
use crate::seqcore::{LabelSequence, Segment};

/// Default fraction of a segment's length used as its boundary vicinity.
pub const DEFAULT_VICINITY: f64 = 0.05;
/// Default sigmoid steepness; the farthest vicinity frame keeps σ(ε) of its own label.
pub const DEFAULT_EPSILON: f64 = 5.0;

/// Row-stochastic `T×K` soft targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelMatrix(Matrix);

impl SoftLabelMatrix {
    pub fn one_hot(labels: &LabelSequence) -> Self {
        let mut m = Matrix::zeros(labels.len(), labels.num_classes());
        for (t, &l) in labels.labels().iter().enumerate() {
            m.set(t, l, 1.0);
        }
        Self(m)
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
    pub fn row(&self, t: usize) -> &[f64] {
        self.0.row(t)
    }

    #[inline]
    pub fn get(&self, t: usize, k: usize) -> f64 {
        self.0.get(t, k)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// Frames `[start, end)` next to `boundary`, inside the segment labelled `own_label`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Vicinity {
    pub side: Side,
    pub start: usize,
    pub end: usize,
    pub boundary: usize,
    pub own_label: usize,
    pub other_label: usize,
}

impl Vicinity {
    #[inline]
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    /// Own-label target probability for frame `t` of this vicinity.
    ///
    /// Left vicinities end just before the boundary, so their farthest frame
    /// `boundary - len` gets σ(ε) and the nearest σ(ε/len). Right vicinities
    /// start on the boundary frame, which gets σ(0) = 0.5.
    pub fn own_probability(&self, t: usize, epsilon: f64) -> f64 {
        let rate = epsilon / self.len() as f64;
        let distance = match self.side {
            Side::Left => (self.boundary - t) as f64,
            Side::Right => (t - self.boundary) as f64,
        };
        sigmoid(rate * distance)
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Frames of a segment that may be smoothed at one of its ends.
///
/// `round(v · len)`, capped at half the segment so the vicinities at its two
/// ends never overlap. Segments shorter than two frames get none.
fn vicinity_len(segment: &Segment, v: f64) -> usize {
    let len = segment.len();
    if len < 2 {
        return 0;
    }
    ((v * len as f64).round() as usize).min(len / 2)
}

fn check_vicinity(v: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&v) {
        return Err(TssError::InvalidVicinity(v));
    }
    Ok(())
}

/// Duration-proportional vicinities on both sides of every internal boundary.
pub fn vicinities(segments: &[Segment], v: f64) -> Result<Vec<Vicinity>> {
    check_vicinity(v)?;
    let mut out = Vec::new();
    for pair in segments.windows(2) {
        let (left, right) = (&pair[0], &pair[1]);
        let boundary = right.start;
        let n_left = vicinity_len(left, v);
        if n_left > 0 {
            out.push(Vicinity {
                side: Side::Left,
                start: boundary - n_left,
                end: boundary,
                boundary,
                own_label: left.label,
                other_label: right.label,
            });
        }
        let n_right = vicinity_len(right, v);
        if n_right > 0 {
            out.push(Vicinity {
                side: Side::Right,
                start: boundary,
                end: boundary + n_right,
                boundary,
                own_label: right.label,
                other_label: left.label,
            });
        }
    }
    Ok(out)
}

/// Adaptive-sigmoid soft labels. `v = 0` reproduces the one-hot encoding.
pub fn smooth_labels(labels: &LabelSequence, v: f64, epsilon: f64) -> Result<SoftLabelMatrix> {
    check_vicinity(v)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(TssError::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let mut soft = SoftLabelMatrix::one_hot(labels);
    for vic in vicinities(&labels.segments(), v)? {
        for t in vic.start..vic.end {
            let own = vic.own_probability(t, epsilon);
            let row = soft.0.row_mut(t);
            row[vic.own_label] = own;
            row[vic.other_label] = 1.0 - own;
        }
    }
    Ok(soft)
}

/// Fixed-slope linear mixing over `2 · half_width` frames centred on each
/// boundary, independent of segment duration.
///
/// The right label's share rises by `1 / (2 · half_width)` per frame and is
/// exactly 0.5 on the boundary frame. The ramp is clipped to half of each
/// adjacent segment.
pub fn smooth_fixed_linear(labels: &LabelSequence, half_width: usize) -> SoftLabelMatrix {
    let mut soft = SoftLabelMatrix::one_hot(labels);
    if half_width == 0 {
        return soft;
    }
    let slope = 1.0 / (2.0 * half_width as f64);
    let segments = labels.segments();
    for pair in segments.windows(2) {
        let (left, right) = (&pair[0], &pair[1]);
        let boundary = right.start;
        let reach_left = (half_width - 1).min(left.len() / 2);
        let reach_right = half_width.min(right.len() / 2);
        for t in boundary - reach_left..boundary + reach_right {
            let right_share = (0.5 + (t as f64 - boundary as f64) * slope).clamp(0.0, 1.0);
            let row = soft.0.row_mut(t);
            row[left.label] = 1.0 - right_share;
            row[right.label] = right_share;
        }
    }
    soft
}
