//! Frame-level and video-level losses.
//!
//! Every loss returns its value together with the gradient with respect to
//! the probabilities it was given, so the model can back-propagate without
//! an autodiff engine. Discrete selections (the anchor argmin, the
//! pseudo-label argmax) are treated as constants when differentiating.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TssError};
use crate::matrix::Matrix;
use crate::seqcore::{
    clamped_ln, kl_divergence_slices, soft_action_frequency, ActionFrequency, ProbabilityMatrix,
    PROB_FLOOR,
};
use crate::smoothing::SoftLabelMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    /// `∂loss/∂p^t(k)`, same shape as the input.
    pub grad: Matrix,
}

impl LossResult {
    pub fn zero(frames: usize, num_classes: usize) -> Self {
        Self {
            value: 0.0,
            grad: Matrix::zeros(frames, num_classes),
        }
    }
}

/// Trade-off weights of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    /// Affinity weight.
    pub alpha: f64,
    /// Continuity weight.
    pub beta: f64,
    /// Smoothing weight.
    pub gamma: f64,
    /// Truncation threshold of the smoothing loss.
    pub tau: f64,
    /// Frame-wise entropy weight; only the affinity ablation adds that term.
    pub entropy: f64,
    /// Weight of the argmax pseudo-label loss in the naive baseline.
    pub pseudo: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 0.01,
            gamma: 0.15,
            tau: 4.0,
            entropy: 0.01,
            pseudo: 0.01,
        }
    }
}

/// Classification targets: hard labels or soft rows.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Hard(&'a [usize]),
    Soft(&'a SoftLabelMatrix),
}

/// Mean cross-entropy `-(1/T) Σ_t Σ_k y^t(k) ln p^t(k)`.
pub fn classification_loss(probs: &ProbabilityMatrix, targets: Targets<'_>) -> Result<LossResult> {
    let (frames, classes) = (probs.frames(), probs.num_classes());
    let inv_t = 1.0 / frames as f64;
    let mut grad = Matrix::zeros(frames, classes);
    let mut total = 0.0;
    match targets {
        Targets::Hard(labels) => {
            if labels.len() != frames {
                return Err(TssError::DimensionMismatch(format!(
                    "{} targets for {frames} frames",
                    labels.len()
                )));
            }
            for (t, &y) in labels.iter().enumerate() {
                if y >= classes {
                    return Err(TssError::LabelOutOfRange {
                        label: y,
                        num_classes: classes,
                    });
                }
                let p = probs.get(t, y);
                total -= clamped_ln(p);
                grad.set(t, y, -inv_t / p.max(PROB_FLOOR));
            }
        }
        Targets::Soft(soft) => {
            if soft.frames() != frames || soft.num_classes() != classes {
                return Err(TssError::DimensionMismatch(format!(
                    "{}x{} soft targets for {frames}x{classes} predictions",
                    soft.frames(),
                    soft.num_classes()
                )));
            }
            for t in 0..frames {
                let g = grad.row_mut(t);
                for (k, (&y, &p)) in soft.row(t).iter().zip(probs.row(t)).enumerate() {
                    if y != 0.0 {
                        total -= y * clamped_ln(p);
                        g[k] = -y * inv_t / p.max(PROB_FLOOR);
                    }
                }
            }
        }
    }
    Ok(LossResult {
        value: total * inv_t,
        grad,
    })
}

/// Truncated mean-squared difference of consecutive log-probabilities,
/// `(1/(TK)) Σ_{t≥1,k} min(|Δ_{t,k}|, τ)²`.
///
/// Takes log-probabilities and returns the gradient with respect to them;
/// see [`smoothing_loss_on_probs`] for the probability-space version.
pub fn smoothing_loss(log_probs: &Matrix, tau: f64) -> Result<LossResult> {
    let (frames, classes) = log_probs.shape();
    if frames < 2 {
        return Err(TssError::SequenceTooShort {
            len: frames,
            min: 2,
        });
    }
    let scale = 1.0 / (frames * classes) as f64;
    let mut grad = Matrix::zeros(frames, classes);
    let mut total = 0.0;
    for t in 1..frames {
        for k in 0..classes {
            let delta = log_probs.get(t, k) - log_probs.get(t - 1, k);
            if delta.abs() < tau {
                total += delta * delta;
                let g = 2.0 * delta * scale;
                grad.row_mut(t)[k] += g;
                grad.row_mut(t - 1)[k] -= g;
            } else {
                total += tau * tau;
            }
        }
    }
    Ok(LossResult {
        value: total * scale,
        grad,
    })
}

/// [`smoothing_loss`] applied to `ln max(p, 1e-8)`, with the gradient
/// mapped back to probability space.
pub fn smoothing_loss_on_probs(probs: &ProbabilityMatrix, tau: f64) -> Result<LossResult> {
    let mut log_probs = probs.as_matrix().clone();
    log_probs
        .as_mut_slice()
        .iter_mut()
        .for_each(|p| *p = clamped_ln(*p));
    let mut result = smoothing_loss(&log_probs, tau)?;
    for (g, &p) in result
        .grad
        .as_mut_slice()
        .iter_mut()
        .zip(probs.as_matrix().as_slice())
    {
        *g = if p > PROB_FLOOR { *g / p } else { 0.0 };
    }
    Ok(result)
}

/// Naive pseudo-labelling: cross-entropy against the per-frame argmax.
pub fn pseudo_label_loss(probs: &ProbabilityMatrix) -> LossResult {
    let labels = probs.argmax_labels();
    // argmax labels always match the frame count and class range.
    classification_loss(probs, Targets::Hard(&labels)).expect("argmax labels are valid targets")
}

/// Mean frame-wise entropy `-(1/T) Σ_t Σ_k p ln p`.
pub fn entropy_loss(probs: &ProbabilityMatrix) -> LossResult {
    let (frames, classes) = (probs.frames(), probs.num_classes());
    let inv_t = 1.0 / frames as f64;
    let mut grad = Matrix::zeros(frames, classes);
    let mut total = 0.0;
    for t in 0..frames {
        let g = grad.row_mut(t);
        for (k, &p) in probs.row(t).iter().enumerate() {
            let ln_p = clamped_ln(p);
            if p > 0.0 {
                total -= p * ln_p;
            }
            g[k] = -(ln_p + 1.0) * inv_t;
        }
    }
    LossResult {
        value: total * inv_t,
        grad,
    }
}

/// Action frequency of a labelled video, optionally tagged with its activity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub frequency: ActionFrequency,
    pub activity: Option<String>,
}

impl Anchor {
    pub fn new(frequency: ActionFrequency, activity: Option<String>) -> Self {
        Self {
            frequency,
            activity,
        }
    }
}

/// Index of the anchor whose frequency is KL-closest to `freq`.
///
/// With `activity` set, only anchors carrying that tag are searched. Ties go
/// to the lowest index.
pub fn associate_anchor<'a>(
    freq: &ActionFrequency,
    anchors: &'a [Anchor],
    activity: Option<&str>,
) -> Result<(usize, &'a ActionFrequency)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, anchor) in anchors.iter().enumerate() {
        if let Some(tag) = activity {
            if anchor.activity.as_deref() != Some(tag) {
                continue;
            }
        }
        let d = kl_divergence_slices(anchor.frequency.values(), freq.values())?;
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((i, d));
        }
    }
    let (index, _) = best.ok_or_else(|| TssError::NoAnchorAvailable {
        activity: activity.map(str::to_owned),
    })?;
    Ok((index, &anchors[index].frequency))
}

/// KL from the associated anchor's frequency to the video's soft frequency.
///
/// Returns the loss and the chosen anchor index.
pub fn affinity_loss(
    probs: &ProbabilityMatrix,
    anchors: &[Anchor],
    activity: Option<&str>,
) -> Result<(LossResult, usize)> {
    let soft = soft_action_frequency(probs);
    let (index, anchor) = associate_anchor(&soft, anchors, activity)?;
    let value = kl_divergence_slices(anchor.values(), soft.values())?;
    let (frames, classes) = (probs.frames(), probs.num_classes());
    let inv_t = 1.0 / frames as f64;
    let col_grad: Vec<f64> = anchor
        .values()
        .iter()
        .zip(soft.values())
        .map(|(&a, &p)| -a * inv_t / p.max(PROB_FLOOR))
        .collect();
    let mut grad = Matrix::zeros(frames, classes);
    for t in 0..frames {
        grad.row_mut(t).copy_from_slice(&col_grad);
    }
    Ok((LossResult { value, grad }, index))
}

/// The individual loss terms computed for one video (and one model stage).
#[derive(Debug, Clone, Default)]
pub struct LossParts {
    pub cls: Option<LossResult>,
    pub sm: Option<LossResult>,
    pub aff: Option<LossResult>,
    pub cont: Option<LossResult>,
    pub pse: Option<LossResult>,
    pub ent: Option<LossResult>,
}

impl LossParts {
    /// Weighted sum of whichever terms are present.
    pub fn combine(&self, w: &LossWeights) -> Result<LossResult> {
        let terms = [
            (&self.cls, 1.0),
            (&self.sm, w.gamma),
            (&self.aff, w.alpha),
            (&self.cont, w.beta),
            (&self.pse, w.pseudo),
            (&self.ent, w.entropy),
        ];
        let mut out: Option<LossResult> = None;
        for (term, weight) in terms {
            let Some(term) = term else { continue };
            match out.as_mut() {
                None => {
                    let mut grad = term.grad.clone();
                    grad.scale(weight);
                    out = Some(LossResult {
                        value: weight * term.value,
                        grad,
                    });
                }
                Some(acc) => {
                    acc.value += weight * term.value;
                    acc.grad.add_scaled(&term.grad, weight)?;
                }
            }
        }
        out.ok_or(TssError::MissingLossTerm("any"))
    }
}

/// The combined objective for one video.
///
/// Labelled videos need the classification and smoothing terms; unlabelled
/// videos need affinity, continuity and smoothing. Optional extra terms
/// (pseudo-label, entropy) are added with their own weights.
pub fn total_objective(parts: &LossParts, w: &LossWeights, labelled: bool) -> Result<LossResult> {
    if parts.sm.is_none() {
        return Err(TssError::MissingLossTerm("sm"));
    }
    if labelled {
        if parts.cls.is_none() {
            return Err(TssError::MissingLossTerm("cls"));
        }
    } else {
        if parts.aff.is_none() {
            return Err(TssError::MissingLossTerm("aff"));
        }
        if parts.cont.is_none() {
            return Err(TssError::MissingLossTerm("cont"));
        }
    }
    parts.combine(w)
}
