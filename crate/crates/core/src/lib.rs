//! Semi-supervised temporal action segmentation.
//!
//! Labelled videos train a small multi-stage temporal convolutional network
//! with frame-wise cross-entropy. Unlabelled videos contribute two losses:
//! an *affinity* loss pulling their predicted action frequencies towards the
//! nearest labelled video, and a *continuity* loss training towards
//! temporally continuous pseudo-labels found by aligning a sub-sampled
//! action sequence with dynamic time warping. Adaptive boundary smoothing
//! softens those pseudo-labels near action boundaries.

pub mod continuity;
pub mod data;
pub mod error;
pub mod losses;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod seqcore;
pub mod smoothing;
pub mod trainer;

pub use continuity::{
    continuity_loss, dtw_align, subsample_actions, ActionSequence, Alignment, AssignmentPath,
};
pub use error::{Result, TssError};
pub use losses::{
    affinity_loss, associate_anchor, classification_loss, entropy_loss, pseudo_label_loss,
    smoothing_loss, smoothing_loss_on_probs, total_objective, Anchor, LossParts, LossResult,
    LossWeights, Targets,
};
pub use matrix::Matrix;
pub use metrics::{
    corpus_report, edit_score, f1_at_overlap, frame_accuracy, total_variance, MetricReport,
};
pub use model::{backward, forward, init_params, ModelConfig, ModelParams};
pub use optim::{adam_step, AdamState};
pub use seqcore::{
    action_frequency_from_labels, kl_divergence, segments_from_labels, soft_action_frequency,
    ActionFrequency, LabelSequence, ProbabilityMatrix, Segment,
};
pub use smoothing::{smooth_fixed_linear, smooth_labels, vicinities, SoftLabelMatrix, Vicinity};
pub use trainer::{evaluate, predict, train, EpochLog, Mode, TrainConfig};
