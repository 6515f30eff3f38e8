//! The training loop.
//!
//! Training runs in two phases. The warmup phase fits the labelled videos
//! alone with cross-entropy and smoothing. The joint phase then visits
//! labelled and unlabelled videos in one shuffled pass per epoch; the losses
//! applied to unlabelled videos depend on the [`Mode`]. Every step uses a
//! single video.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::continuity::{continuity_loss, DEFAULT_STRIDE};
use crate::data::{Dataset, SplitSpec, Video};
use crate::error::{Result, TssError};
use crate::losses::{
    affinity_loss, classification_loss, entropy_loss, pseudo_label_loss, smoothing_loss_on_probs,
    Anchor, LossParts, LossWeights, Targets,
};
use crate::metrics::{corpus_report, MetricReport};
use crate::model::{backward, forward, init_params, ModelConfig, ModelParams};
use crate::optim::{adam_step, AdamState};
use crate::seqcore::{action_frequency_from_labels, LabelSequence, ProbabilityMatrix};
use crate::smoothing::{smooth_labels, SoftLabelMatrix, DEFAULT_EPSILON, DEFAULT_VICINITY};

/// Which losses the training run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Labelled videos only.
    Base,
    /// Unlabelled videos trained on their own argmax predictions.
    Pseudo,
    /// Affinity plus frame-wise entropy on unlabelled videos.
    Affinity,
    /// Affinity and continuity.
    AffCont,
    /// Affinity and continuity with boundary-smoothed pseudo-labels.
    Full,
    /// Labelled videos only, trained on boundary-smoothed ground truth.
    SupAbs,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Base,
        Mode::Pseudo,
        Mode::Affinity,
        Mode::AffCont,
        Mode::Full,
        Mode::SupAbs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Base => "base",
            Mode::Pseudo => "pseudo",
            Mode::Affinity => "aff",
            Mode::AffCont => "aff_cont",
            Mode::Full => "full",
            Mode::SupAbs => "sup_abs",
        }
    }

    /// Whether the joint phase runs at all.
    pub fn uses_unlabelled(self) -> bool {
        !matches!(self, Mode::Base | Mode::SupAbs)
    }

    /// Whether pseudo-labels come from the continuity alignment rather than
    /// the per-frame argmax.
    pub fn aligned_pseudo_labels(self) -> bool {
        matches!(self, Mode::AffCont | Mode::Full)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = TssError;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| TssError::InvalidParameter(format!("unknown mode `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    pub warmup_epochs: usize,
    /// Ignored by the modes that never use unlabelled videos.
    pub joint_epochs: usize,
    pub learning_rate: f64,
    pub weights: LossWeights,
    /// Window length of the action sub-sampling.
    pub omega: usize,
    /// Boundary vicinity fraction.
    pub vicinity: f64,
    /// Boundary smoothing sharpness.
    pub epsilon: f64,
    pub seed: u64,
    pub stages: usize,
    pub layers_per_stage: usize,
    pub channels: usize,
    /// Add the smoothing loss during warmup too.
    pub smooth_in_warmup: bool,
    /// Apply the unlabelled losses to every stage, not just the last.
    pub unsup_all_stages: bool,
    /// Only associate unlabelled videos with anchors of the same activity.
    pub activity_anchors: bool,
    /// Evaluate every this many epochs; the last epoch is always evaluated.
    pub eval_every: usize,
}

impl TrainConfig {
    pub fn new(mode: Mode, seed: u64) -> Self {
        Self {
            mode,
            warmup_epochs: 30,
            joint_epochs: 20,
            learning_rate: 5e-4,
            weights: LossWeights::default(),
            omega: DEFAULT_STRIDE,
            vicinity: DEFAULT_VICINITY,
            epsilon: DEFAULT_EPSILON,
            seed,
            stages: 2,
            layers_per_stage: 6,
            channels: 32,
            smooth_in_warmup: true,
            unsup_all_stages: true,
            activity_anchors: false,
            eval_every: 1,
        }
    }

    pub fn model_config(&self, feature_dim: usize, num_classes: usize) -> ModelConfig {
        ModelConfig {
            stages: self.stages,
            layers_per_stage: self.layers_per_stage,
            channels: self.channels,
            feature_dim,
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TssError::InvalidParameter(format!(
                "learning rate {} must be > 0",
                self.learning_rate
            )));
        }
        if self.omega == 0 {
            return Err(TssError::InvalidStride(0));
        }
        if !(0.0..=0.5).contains(&self.vicinity) {
            return Err(TssError::InvalidVicinity(self.vicinity));
        }
        if self.eval_every == 0 {
            return Err(TssError::InvalidParameter(
                "eval_every must be at least 1".into(),
            ));
        }
        let w = &self.weights;
        for (name, v) in [
            ("alpha", w.alpha),
            ("beta", w.beta),
            ("gamma", w.gamma),
            ("tau", w.tau),
            ("entropy", w.entropy),
            ("pseudo", w.pseudo),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(TssError::InvalidParameter(format!(
                    "weight {name} = {v} must be ≥ 0"
                )));
            }
        }
        Ok(())
    }
}

/// One row of the training log.
///
/// Loss columns are means over the videos that used the term in that epoch,
/// summed over stages and unweighted; `None` when no video used it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    /// 1-based, counted across both phases.
    pub epoch: usize,
    pub l_cls: Option<f64>,
    pub l_sm: Option<f64>,
    pub l_aff: Option<f64>,
    pub l_cont: Option<f64>,
    pub l_pse: Option<f64>,
    pub l_ent: Option<f64>,
    /// Frame accuracy of the unlabelled videos' pseudo-labels.
    pub pseudo_acc: Option<f64>,
    /// Held-out metrics.
    pub report: Option<MetricReport>,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str =
        "epoch,l_cls,l_sm,l_aff,l_cont,l_pse,pseudo_acc,acc,edit,f1_10,f1_25,f1_50";

    pub fn csv_row(&self) -> String {
        let opt =
            |v: Option<f64>, digits: usize| v.map(|v| format!("{v:.digits$}")).unwrap_or_default();
        let mut cells = vec![
            self.epoch.to_string(),
            opt(self.l_cls, 6),
            opt(self.l_sm, 6),
            opt(self.l_aff, 6),
            opt(self.l_cont, 6),
            opt(self.l_pse, 6),
            opt(self.pseudo_acc, 4),
        ];
        match &self.report {
            Some(r) => {
                cells.extend([r.acc, r.edit, r.f1[0], r.f1[1], r.f1[2]].map(|v| format!("{v:.4}")))
            }
            None => cells.extend(std::iter::repeat_n(String::new(), 5)),
        }
        cells.join(",")
    }
}

/// Parameters, optimizer state and logs between phases.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: ModelParams,
    pub adam: AdamState,
    pub logs: Vec<EpochLog>,
}

/// Per-frame argmax of the final stage.
pub fn predict(params: &ModelParams, video: &Video) -> Result<Vec<usize>> {
    Ok(forward(params, &video.features)?
        .final_probs()
        .argmax_labels())
}

/// Corpus metrics of the final-stage argmax predictions.
pub fn evaluate<'a, I>(params: &ModelParams, videos: I) -> Result<MetricReport>
where
    I: IntoIterator<Item = &'a Video>,
{
    let pairs = videos
        .into_iter()
        .map(|v| Ok((predict(params, v)?, v.labels.labels())))
        .collect::<Result<Vec<_>>>()?;
    corpus_report(pairs.iter().map(|(p, g)| (p.as_slice(), *g)))
}

/// Warmup followed by the joint phase.
pub fn train(
    dataset: &Dataset,
    split: &SplitSpec,
    config: &TrainConfig,
) -> Result<(ModelParams, Vec<EpochLog>)> {
    let state = warmup(dataset, split, config)?;
    let state = joint(dataset, split, config, state)?;
    Ok((state.params, state.logs))
}

/// Fresh model trained on the labelled videos for `warmup_epochs` epochs.
pub fn warmup(dataset: &Dataset, split: &SplitSpec, config: &TrainConfig) -> Result<TrainState> {
    let run = Run::new(dataset, split, config)?;
    let params = init_params(
        config.model_config(dataset.feature_dim, dataset.num_classes),
        config.seed,
    )?;
    let mut state = TrainState {
        adam: AdamState::new(params.len()),
        params,
        logs: Vec::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order = split.labelled.clone();
    let total = config.warmup_epochs + run.joint_epochs();
    for _ in 0..config.warmup_epochs {
        order.shuffle(&mut rng);
        run.epoch(&mut state, &order, total)?;
    }
    Ok(state)
}

/// Continues `state` with labelled and unlabelled videos for `joint_epochs`
/// epochs. Does nothing for the supervised-only modes.
pub fn joint(
    dataset: &Dataset,
    split: &SplitSpec,
    config: &TrainConfig,
    mut state: TrainState,
) -> Result<TrainState> {
    let run = Run::new(dataset, split, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(2);
    let mut order: Vec<usize> = split
        .labelled
        .iter()
        .chain(&split.unlabelled)
        .copied()
        .collect();
    order.sort_unstable();
    let total = config.warmup_epochs + run.joint_epochs();
    for _ in 0..run.joint_epochs() {
        order.shuffle(&mut rng);
        run.epoch(&mut state, &order, total)?;
    }
    Ok(state)
}

/// Unweighted loss values of one step, summed over stages.
#[derive(Debug, Default, Clone, Copy)]
struct StepValues {
    cls: Option<f64>,
    sm: Option<f64>,
    aff: Option<f64>,
    cont: Option<f64>,
    pse: Option<f64>,
    ent: Option<f64>,
}

fn accumulate(slot: &mut Option<f64>, v: f64) {
    *slot = Some(slot.unwrap_or(0.0) + v);
}

#[derive(Default)]
struct EpochSums {
    sums: [f64; 6],
    counts: [usize; 6],
}

impl EpochSums {
    fn add(&mut self, step: &StepValues) {
        let values = [step.cls, step.sm, step.aff, step.cont, step.pse, step.ent];
        for (i, v) in values.into_iter().enumerate() {
            if let Some(v) = v {
                self.sums[i] += v;
                self.counts[i] += 1;
            }
        }
    }

    fn mean(&self, i: usize) -> Option<f64> {
        (self.counts[i] > 0).then(|| self.sums[i] / self.counts[i] as f64)
    }
}

/// Shared, read-only context of a training run.
struct Run<'a> {
    dataset: &'a Dataset,
    split: &'a SplitSpec,
    config: &'a TrainConfig,
    labelled: Vec<bool>,
    anchors: Vec<Anchor>,
    /// Classification targets of the labelled videos when they are smoothed.
    soft_targets: Vec<Option<SoftLabelMatrix>>,
}

impl<'a> Run<'a> {
    fn new(dataset: &'a Dataset, split: &'a SplitSpec, config: &'a TrainConfig) -> Result<Self> {
        config.validate()?;
        let n = dataset.train.len();
        let mut labelled = vec![false; n];
        for &i in split.labelled.iter().chain(&split.unlabelled) {
            if i >= n {
                return Err(TssError::InvalidParameter(format!(
                    "split index {i} with {n} training videos"
                )));
            }
        }
        for &i in &split.labelled {
            labelled[i] = true;
        }
        if split.unlabelled.iter().any(|&i| labelled[i]) {
            return Err(TssError::InvalidParameter(
                "a video is both labelled and unlabelled".into(),
            ));
        }
        if split.labelled.is_empty() {
            return Err(TssError::InsufficientData("no labelled videos".into()));
        }
        // Ground-truth frequencies are static, so the anchors are too.
        let anchors = split
            .labelled
            .iter()
            .map(|&i| {
                let v = &dataset.train[i];
                Ok(Anchor::new(
                    action_frequency_from_labels(v.labels.labels(), dataset.num_classes)?,
                    v.activity.clone(),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let soft_targets = dataset
            .train
            .iter()
            .enumerate()
            .map(|(i, v)| {
                if labelled[i] && config.mode == Mode::SupAbs {
                    smooth_labels(&v.labels, config.vicinity, config.epsilon).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dataset,
            split,
            config,
            labelled,
            anchors,
            soft_targets,
        })
    }

    fn joint_epochs(&self) -> usize {
        if self.config.mode.uses_unlabelled() {
            self.config.joint_epochs
        } else {
            0
        }
    }

    fn epoch(&self, state: &mut TrainState, order: &[usize], total_epochs: usize) -> Result<()> {
        let epoch = state.logs.len() + 1;
        let in_warmup = epoch <= self.config.warmup_epochs;
        let mut sums = EpochSums::default();
        for (step, &i) in order.iter().enumerate() {
            let video = &self.dataset.train[i];
            let values = self.step(state, i, in_warmup).map_err(|e| match e {
                TssError::DivergenceDetected(msg) => TssError::DivergenceDetected(format!(
                    "epoch {epoch}, step {}, video {}: {msg}",
                    step + 1,
                    video.id
                )),
                other => other,
            })?;
            sums.add(&values);
        }
        let evaluate_now = epoch.is_multiple_of(self.config.eval_every) || epoch == total_epochs;
        let (pseudo_acc, report) = if evaluate_now {
            (
                self.pseudo_accuracy(&state.params)?,
                self.held_out_report(&state.params)?,
            )
        } else {
            (None, None)
        };
        state.logs.push(EpochLog {
            epoch,
            l_cls: sums.mean(0),
            l_sm: sums.mean(1),
            l_aff: sums.mean(2),
            l_cont: sums.mean(3),
            l_pse: sums.mean(4),
            l_ent: sums.mean(5),
            pseudo_acc,
            report,
        });
        Ok(())
    }

    /// One forward/backward pass and optimizer update on training video `i`.
    fn step(&self, state: &mut TrainState, i: usize, in_warmup: bool) -> Result<StepValues> {
        let cfg = self.config;
        let w = &cfg.weights;
        let video = &self.dataset.train[i];
        let out = forward(&state.params, &video.features)?;
        let stages = out.probs.len();
        let mut values = StepValues::default();
        let mut grads = Vec::with_capacity(stages);
        let mut total = 0.0;
        for (s, probs) in out.probs.iter().enumerate() {
            let mut parts = LossParts::default();
            if !in_warmup || cfg.smooth_in_warmup {
                parts.sm = Some(smoothing_loss_on_probs(probs, w.tau)?);
            }
            if self.labelled[i] {
                let targets = match &self.soft_targets[i] {
                    Some(soft) => Targets::Soft(soft),
                    None => Targets::Hard(video.labels.labels()),
                };
                parts.cls = Some(classification_loss(probs, targets)?);
            } else if cfg.unsup_all_stages || s + 1 == stages {
                self.unlabelled_terms(probs, video, &mut parts)?;
            }
            let combined = parts.combine(w)?;
            total += combined.value;
            for (slot, term) in [
                (&mut values.cls, &parts.cls),
                (&mut values.sm, &parts.sm),
                (&mut values.aff, &parts.aff),
                (&mut values.cont, &parts.cont),
                (&mut values.pse, &parts.pse),
                (&mut values.ent, &parts.ent),
            ] {
                if let Some(term) = term {
                    accumulate(slot, term.value);
                }
            }
            grads.push(combined.grad);
        }
        if !total.is_finite() {
            return Err(TssError::DivergenceDetected(format!("loss is {total}")));
        }
        let g = backward(&state.params, &out.cache, &grads)?;
        adam_step(
            state.params.values_mut(),
            g.values(),
            &mut state.adam,
            cfg.learning_rate,
        )?;
        Ok(values)
    }

    fn unlabelled_terms(
        &self,
        probs: &ProbabilityMatrix,
        video: &Video,
        parts: &mut LossParts,
    ) -> Result<()> {
        let cfg = self.config;
        let activity = if cfg.activity_anchors {
            video.activity.as_deref()
        } else {
            None
        };
        match cfg.mode {
            Mode::Base | Mode::SupAbs => {}
            Mode::Pseudo => parts.pse = Some(pseudo_label_loss(probs)),
            Mode::Affinity => {
                parts.aff = Some(affinity_loss(probs, &self.anchors, activity)?.0);
                parts.ent = Some(entropy_loss(probs));
            }
            Mode::AffCont | Mode::Full => {
                parts.aff = Some(affinity_loss(probs, &self.anchors, activity)?.0);
                let cont = continuity_loss(probs, cfg.omega)?;
                parts.cont = Some(if cfg.mode == Mode::Full {
                    let pseudo = LabelSequence::new(cont.labels().to_vec(), probs.num_classes())?;
                    let soft = smooth_labels(&pseudo, cfg.vicinity, cfg.epsilon)?;
                    classification_loss(probs, Targets::Soft(&soft))?
                } else {
                    cont.loss
                });
            }
        }
        Ok(())
    }

    /// Frame accuracy of the mode's pseudo-labels over all unlabelled videos.
    fn pseudo_accuracy(&self, params: &ModelParams) -> Result<Option<f64>> {
        let mut correct = 0usize;
        let mut frames = 0usize;
        for &i in &self.split.unlabelled {
            let video = &self.dataset.train[i];
            let out = forward(params, &video.features)?;
            let probs = out.final_probs();
            let pseudo = if self.config.mode.aligned_pseudo_labels() {
                continuity_loss(probs, self.config.omega)?.alignment.labels
            } else {
                probs.argmax_labels()
            };
            correct += pseudo
                .iter()
                .zip(video.labels.labels())
                .filter(|(a, b)| a == b)
                .count();
            frames += pseudo.len();
        }
        Ok((frames > 0).then(|| 100.0 * correct as f64 / frames as f64))
    }

    /// Metrics on the test videos, or on the unlabelled videos without a test set.
    fn held_out_report(&self, params: &ModelParams) -> Result<Option<MetricReport>> {
        if !self.dataset.test.is_empty() {
            return evaluate(params, &self.dataset.test).map(Some);
        }
        if self.split.unlabelled.is_empty() {
            return Ok(None);
        }
        evaluate(
            params,
            self.split
                .unlabelled
                .iter()
                .map(|&i| &self.dataset.train[i]),
        )
        .map(Some)
    }
}
