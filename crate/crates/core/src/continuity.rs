//! Action continuity: sub-sample an ordered action sequence from windowed
//! predictions, align it monotonically to every frame with dynamic time
//! warping, and train towards the resulting piecewise-constant labels.

use serde::Serialize;

use crate::error::{Result, TssError};
use crate::losses::{classification_loss, LossResult, Targets};
use crate::seqcore::{argmax, clamped_ln, ProbabilityMatrix, Segment};

/// Default sub-sampling stride in frames.
pub const DEFAULT_STRIDE: usize = 20;

/// Ordered action ids with no two adjacent entries equal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct ActionSequence(Vec<usize>);

impl ActionSequence {
    pub fn new(actions: Vec<usize>) -> Result<Self> {
        if actions.is_empty() {
            return Err(TssError::EmptySequence);
        }
        if actions.windows(2).any(|w| w[0] == w[1]) {
            return Err(TssError::InvalidParameter(
                "action sequence has adjacent repetitions".into(),
            ));
        }
        Ok(Self(actions))
    }

    /// Builds a sequence by collapsing adjacent repetitions.
    pub fn dedup_from(mut actions: Vec<usize>) -> Result<Self> {
        actions.dedup();
        Self::new(actions)
    }

    #[inline]
    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Cut points `0 = c_0 < c_1 < … < c_L = T`; element `l` owns frames `[c_l, c_{l+1})`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AssignmentPath {
    boundaries: Vec<usize>,
}

impl AssignmentPath {
    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    /// Frame range owned by each element, in order.
    pub fn spans(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.boundaries.windows(2).map(|w| (w[0], w[1]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Alignment {
    pub path: AssignmentPath,
    /// Sum of `-ln p^t(o^l)` over the assignment.
    pub cost: f64,
    /// Per-frame labels read off the assignment.
    pub labels: Vec<usize>,
}

impl Alignment {
    pub fn segments(&self, actions: &ActionSequence) -> Vec<Segment> {
        self.path
            .spans()
            .zip(actions.actions())
            .map(|((start, end), &label)| Segment { label, start, end })
            .collect()
    }
}

/// Dominant action of each non-overlapping window of `stride` frames
/// (the last window may be shorter), with adjacent repeats removed.
pub fn subsample_actions(probs: &ProbabilityMatrix, stride: usize) -> Result<ActionSequence> {
    if stride < 1 {
        return Err(TssError::InvalidStride(stride));
    }
    let (frames, classes) = (probs.frames(), probs.num_classes());
    let mut actions = Vec::with_capacity(frames.div_ceil(stride));
    let mut sums = vec![0.0; classes];
    for start in (0..frames).step_by(stride) {
        let end = (start + stride).min(frames);
        sums.iter_mut().for_each(|s| *s = 0.0);
        for t in start..end {
            for (s, &p) in sums.iter_mut().zip(probs.row(t)) {
                *s += p;
            }
        }
        // Dividing by the window width does not change the argmax.
        actions.push(argmax(&sums));
    }
    ActionSequence::dedup_from(actions)
}

/// Minimum-cost monotone partition of the frames into `actions.len()`
/// consecutive non-empty segments, labelled with the actions in order.
///
/// Frame cost is `KL(onehot(o) || p^t) = -ln max(p^t(o), 1e-8)`. Solved with
/// the recurrence `E(l,t) = d(l,t) + min(E(l,t-1), E(l-1,t-1))`. When
/// backtracking, ties keep the frame in the current element.
pub fn dtw_align(actions: &ActionSequence, probs: &ProbabilityMatrix) -> Result<Alignment> {
    let n_actions = actions.len();
    let frames = probs.frames();
    if n_actions == 0 {
        return Err(TssError::EmptySequence);
    }
    if n_actions > frames {
        return Err(TssError::InfeasibleAlignment {
            actions: n_actions,
            frames,
        });
    }
    if let Some(&bad) = actions
        .actions()
        .iter()
        .find(|&&a| a >= probs.num_classes())
    {
        return Err(TssError::LabelOutOfRange {
            label: bad,
            num_classes: probs.num_classes(),
        });
    }
    let cost = |l: usize, t: usize| -clamped_ln(probs.get(t, actions.0[l]));

    // acc[l * frames + t]; element l can only occupy frames l..=frames-n_actions+l.
    let mut acc = vec![f64::INFINITY; n_actions * frames];
    acc[0] = cost(0, 0);
    for t in 1..frames {
        let l_lo = (t + n_actions).saturating_sub(frames);
        let l_hi = t.min(n_actions - 1);
        for l in l_lo..=l_hi {
            let stay = acc[l * frames + t - 1];
            let advance = if l > 0 {
                acc[(l - 1) * frames + t - 1]
            } else {
                f64::INFINITY
            };
            acc[l * frames + t] = cost(l, t) + stay.min(advance);
        }
    }
    let total = acc[n_actions * frames - 1];

    let mut boundaries = vec![0; n_actions + 1];
    boundaries[n_actions] = frames;
    let mut labels = vec![0; frames];
    let mut l = n_actions - 1;
    for t in (0..frames).rev() {
        labels[t] = actions.0[l];
        if t == 0 {
            break;
        }
        if l > 0 {
            let stay = acc[l * frames + t - 1];
            let advance = acc[(l - 1) * frames + t - 1];
            if advance < stay {
                boundaries[l] = t;
                l -= 1;
            }
        }
    }
    debug_assert_eq!(l, 0);

    Ok(Alignment {
        path: AssignmentPath { boundaries },
        cost: total,
        labels,
    })
}

/// Output of [`continuity_loss`].
#[derive(Debug, Clone)]
pub struct ContinuityOutput {
    pub loss: LossResult,
    pub actions: ActionSequence,
    pub alignment: Alignment,
}

impl ContinuityOutput {
    /// The temporally continuous pseudo-labels.
    pub fn labels(&self) -> &[usize] {
        &self.alignment.labels
    }
}

/// Average alignment cost, `(1/T) Σ_t -ln p^t(ỹ^t)`, with ỹ from
/// [`dtw_align`] over [`subsample_actions`]. ỹ is held fixed when
/// differentiating.
pub fn continuity_loss(probs: &ProbabilityMatrix, stride: usize) -> Result<ContinuityOutput> {
    let actions = subsample_actions(probs, stride)?;
    let alignment = dtw_align(&actions, probs)?;
    let mut loss = classification_loss(probs, Targets::Hard(&alignment.labels))?;
    loss.value = alignment.cost / probs.frames() as f64;
    Ok(ContinuityOutput {
        loss,
        actions,
        alignment,
    })
}
