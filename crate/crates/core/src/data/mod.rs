//! Synthetic procedural videos, dataset splits and on-disk formats.
//!
//! An [`ActivityGrammar`] fixes the order in which an activity's actions
//! happen. Each generated video picks a grammar, optionally swaps adjacent
//! template actions, draws a duration per action and emits Gaussian features
//! around a per-action mean vector. The generating labels are kept as the
//! ground truth of every video.

mod io;

pub use io::{
    load_dataset, read_features, read_groundtruth_dir, read_groundtruth_file, read_mapping,
    save_dataset, write_features, write_groundtruth, write_mapping, DatasetManifest, Mapping,
    VideoEntry,
};

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TssError};
use crate::matrix::Matrix;
use crate::seqcore::LabelSequence;

/// Uniform duration law over `[mean - spread, mean + spread]` frames, at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DurationLaw {
    pub mean: f64,
    #[serde(default)]
    pub spread: f64,
}

impl DurationLaw {
    fn bounds(&self) -> (usize, usize) {
        let lo = (self.mean - self.spread).round().max(1.0) as usize;
        let hi = (self.mean + self.spread).round().max(1.0) as usize;
        (lo, hi.max(lo))
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let (lo, hi) = self.bounds();
        rng.random_range(lo..=hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivityGrammar {
    pub activity: String,
    /// Action ids in their canonical order.
    pub template: Vec<usize>,
    /// One law per template entry, or a single law shared by all entries.
    pub durations: Vec<DurationLaw>,
    /// Template positions `(i, i + 1)` that trade places with probability 0.5.
    #[serde(default)]
    pub swaps: Vec<(usize, usize)>,
}

impl ActivityGrammar {
    fn duration(&self, position: usize) -> &DurationLaw {
        if self.durations.len() == 1 {
            &self.durations[0]
        } else {
            &self.durations[position]
        }
    }

    pub fn validate(&self, index: usize, num_classes: usize) -> Result<()> {
        let field = |name: &str| format!("grammars[{index}].{name}");
        if self.template.is_empty() {
            return Err(TssError::grammar(field("template"), "must not be empty"));
        }
        if let Some(&a) = self.template.iter().find(|&&a| a >= num_classes) {
            return Err(TssError::grammar(
                field("template"),
                format!("action {a} not below num_classes = {num_classes}"),
            ));
        }
        let distinct: BTreeSet<_> = self.template.iter().collect();
        if distinct.len() != self.template.len() {
            return Err(TssError::grammar(
                field("template"),
                "actions must be distinct",
            ));
        }
        if self.durations.len() != 1 && self.durations.len() != self.template.len() {
            return Err(TssError::grammar(
                field("durations"),
                format!(
                    "expected 1 or {} laws, got {}",
                    self.template.len(),
                    self.durations.len()
                ),
            ));
        }
        for law in &self.durations {
            if !(law.mean.is_finite() && law.spread.is_finite() && law.spread >= 0.0) {
                return Err(TssError::grammar(
                    field("durations"),
                    "mean and spread must be finite, spread ≥ 0",
                ));
            }
            if (law.mean - law.spread).round() < 1.0 {
                return Err(TssError::grammar(
                    field("durations"),
                    "durations must be at least 1 frame",
                ));
            }
        }
        let mut touched = BTreeSet::new();
        for &(i, j) in &self.swaps {
            if j != i + 1 || j >= self.template.len() {
                return Err(TssError::grammar(
                    field("swaps"),
                    format!("({i}, {j}) is not a pair of adjacent template positions"),
                ));
            }
            if !touched.insert(i) || !touched.insert(j) {
                return Err(TssError::grammar(
                    field("swaps"),
                    "swap pairs must not overlap",
                ));
            }
        }
        Ok(())
    }
}

/// The contents of a grammar file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrammarSet {
    pub num_classes: usize,
    /// Optional action names, one per class.
    #[serde(default)]
    pub actions: Option<Vec<String>>,
    pub grammars: Vec<ActivityGrammar>,
}

impl GrammarSet {
    pub fn from_json(text: &str) -> Result<Self> {
        let set: GrammarSet = serde_json::from_str(text)
            .map_err(|e| TssError::grammar(json_field(&e.to_string()), e.to_string()))?;
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(TssError::grammar("num_classes", "must be at least 1"));
        }
        if self.grammars.is_empty() {
            return Err(TssError::grammar(
                "grammars",
                "at least one grammar is required",
            ));
        }
        if let Some(names) = &self.actions {
            if names.len() != self.num_classes {
                return Err(TssError::grammar(
                    "actions",
                    format!("{} names for {} classes", names.len(), self.num_classes),
                ));
            }
            let distinct: BTreeSet<_> = names.iter().collect();
            if distinct.len() != names.len()
                || names
                    .iter()
                    .any(|n| n.is_empty() || n.contains(char::is_whitespace))
            {
                return Err(TssError::grammar(
                    "actions",
                    "names must be distinct, non-empty and without whitespace",
                ));
            }
        }
        for (i, g) in self.grammars.iter().enumerate() {
            g.validate(i, self.num_classes)?;
        }
        Ok(())
    }

    pub fn action_names(&self) -> Vec<String> {
        self.actions.clone().unwrap_or_else(|| {
            (0..self.num_classes)
                .map(|k| format!("action_{k:02}"))
                .collect()
        })
    }
}

// serde_json reports e.g. "missing field `template` at line 3": pull out the name.
fn json_field(message: &str) -> String {
    message
        .split('`')
        .nth(1)
        .map(str::to_owned)
        .unwrap_or_else(|| "<json>".to_owned())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Training videos.
    pub n_videos: usize,
    /// Held-out test videos generated alongside.
    pub n_test: usize,
    pub feature_dim: usize,
    pub noise_sigma: f64,
    /// Standard deviation of a per-video offset added to every frame.
    #[serde(default)]
    pub video_shift: f64,
    /// Half-width of a box filter over the per-frame action means, so that
    /// features near a boundary mix both actions. 0 keeps boundaries sharp.
    #[serde(default)]
    pub feature_window: usize,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn new(n_videos: usize, feature_dim: usize, noise_sigma: f64, seed: u64) -> Self {
        Self {
            n_videos,
            n_test: 0,
            feature_dim,
            noise_sigma,
            video_shift: 0.0,
            feature_window: 0,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub id: String,
    pub activity: Option<String>,
    pub features: Matrix,
    pub labels: LabelSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub action_names: Vec<String>,
    pub train: Vec<Video>,
    pub test: Vec<Video>,
    /// Generator settings when the dataset is synthetic.
    pub generator: Option<GeneratorConfig>,
}

/// Samples videos from the grammars. Fully determined by `config.seed`.
///
/// Features are rounded to `f32` so that a dataset written to disk and read
/// back is bit-identical to the generated one.
pub fn generate(grammars: &GrammarSet, config: &GeneratorConfig) -> Result<Dataset> {
    grammars.validate()?;
    if config.n_videos == 0 {
        return Err(TssError::InvalidParameter(
            "n_videos must be at least 1".into(),
        ));
    }
    if config.feature_dim == 0 {
        return Err(TssError::InvalidParameter(
            "feature dimension must be at least 1".into(),
        ));
    }
    for (name, v) in [
        ("noise", config.noise_sigma),
        ("video_shift", config.video_shift),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(TssError::InvalidParameter(format!(
                "{name} must be ≥ 0, got {v}"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.feature_dim;
    let means: Vec<Vec<f64>> = (0..grammars.num_classes)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();

    let mut make_video = |id: String| -> Result<Video> {
        let grammar = &grammars.grammars[rng.random_range(0..grammars.grammars.len())];
        let mut order: Vec<usize> = (0..grammar.template.len()).collect();
        for &(i, j) in &grammar.swaps {
            if rng.random_bool(0.5) {
                order.swap(i, j);
            }
        }
        let mut labels = Vec::new();
        for &pos in &order {
            let frames = grammar.duration(pos).sample(&mut rng);
            labels.extend(std::iter::repeat_n(grammar.template[pos], frames));
        }
        let shift: Vec<f64> = (0..dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                config.video_shift * z
            })
            .collect();
        let centres = blurred_means(&labels, &means, config.feature_window);
        let mut features = Matrix::zeros(labels.len(), dim);
        for (t, centre) in centres.iter().enumerate() {
            for (d, v) in features.row_mut(t).iter_mut().enumerate() {
                let noise: f64 = StandardNormal.sample(&mut rng);
                *v = (centre[d] + shift[d] + config.noise_sigma * noise) as f32 as f64;
            }
        }
        Ok(Video {
            id,
            activity: Some(grammar.activity.clone()),
            features,
            labels: LabelSequence::new(labels, grammars.num_classes)?,
        })
    };
    let train = (0..config.n_videos)
        .map(|i| make_video(format!("train_{i:04}")))
        .collect::<Result<Vec<_>>>()?;
    let test = (0..config.n_test)
        .map(|i| make_video(format!("test_{i:04}")))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        num_classes: grammars.num_classes,
        feature_dim: dim,
        action_names: grammars.action_names(),
        train,
        test,
        generator: Some(*config),
    })
}

/// Per-frame feature centres: the action mean, averaged over the frames
/// within `window` of `t` that exist.
fn blurred_means(labels: &[usize], means: &[Vec<f64>], window: usize) -> Vec<Vec<f64>> {
    if window == 0 {
        return labels.iter().map(|&l| means[l].clone()).collect();
    }
    let dim = means.first().map_or(0, Vec::len);
    (0..labels.len())
        .map(|t| {
            let lo = t.saturating_sub(window);
            let hi = (t + window).min(labels.len() - 1);
            let mut centre = vec![0.0; dim];
            for &l in &labels[lo..=hi] {
                centre.iter_mut().zip(&means[l]).for_each(|(c, m)| *c += m);
            }
            let n = (hi - lo + 1) as f64;
            centre.iter_mut().for_each(|c| *c /= n);
            centre
        })
        .collect()
}

/// Labelled/unlabelled partition of a dataset's training videos.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub fraction: f64,
    pub seed: u64,
    /// Sorted indices into `Dataset::train`.
    pub labelled: Vec<usize>,
    pub unlabelled: Vec<usize>,
}

const MAX_SPLIT_TRIES: usize = 1000;

/// `⌈fraction · n⌉` labelled videos drawn uniformly, resampled until every
/// class occurs in at least one of them.
pub fn sample_split(dataset: &Dataset, fraction: f64, seed: u64) -> Result<SplitSpec> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(TssError::InvalidParameter(format!(
            "labelled fraction {fraction} outside (0, 1]"
        )));
    }
    let n = dataset.train.len();
    if n == 0 {
        return Err(TssError::InsufficientData("no training videos".into()));
    }
    // Guard against 0.1 · 60 = 6.000000000000001 rounding up to 7.
    let count = ((fraction * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    let class_sets: Vec<BTreeSet<usize>> = dataset
        .train
        .iter()
        .map(|v| v.labels.labels().iter().copied().collect())
        .collect();
    let present: BTreeSet<usize> = class_sets.iter().flatten().copied().collect();
    let infeasible = TssError::CoverageInfeasible {
        num_classes: dataset.num_classes,
        labelled: count,
    };
    if present.len() < dataset.num_classes {
        return Err(infeasible);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_SPLIT_TRIES {
        let mut labelled = sample(&mut rng, n, count).into_vec();
        labelled.sort_unstable();
        let covered: BTreeSet<usize> = labelled
            .iter()
            .flat_map(|&i| class_sets[i].iter().copied())
            .collect();
        if covered.len() == dataset.num_classes {
            let chosen: BTreeSet<usize> = labelled.iter().copied().collect();
            let unlabelled = (0..n).filter(|i| !chosen.contains(i)).collect();
            return Ok(SplitSpec {
                fraction,
                seed,
                labelled,
                unlabelled,
            });
        }
    }
    Err(infeasible)
}
