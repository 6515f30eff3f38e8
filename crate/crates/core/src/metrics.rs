//! Segmentation metrics: frame accuracy, segmental edit score, segmental
//! F1 at IoU thresholds, and the total variance of action frequencies.
//!
//! Corpus aggregation: accuracy counts frames over all videos; edit and F1
//! are plain means of per-video scores.

use serde::Serialize;

use crate::error::{Result, TssError};
use crate::seqcore::{segments_from_labels, ActionFrequency, Segment};

/// IoU thresholds reported for F1.
pub const F1_THRESHOLDS: [f64; 3] = [0.10, 0.25, 0.50];

/// Metric percentages for one video or a whole evaluation set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    pub acc: f64,
    pub edit: f64,
    /// F1 at [`F1_THRESHOLDS`], in order.
    pub f1: [f64; 3],
}

impl MetricReport {
    pub fn f1_at(&self, threshold: f64) -> Option<f64> {
        F1_THRESHOLDS
            .iter()
            .position(|&k| (k - threshold).abs() < 1e-12)
            .map(|i| self.f1[i])
    }

    /// CSV header matching [`MetricReport::csv_row`].
    pub const CSV_HEADER: &'static str = "split,seed,method,acc,edit,f1_10,f1_25,f1_50";

    pub fn csv_row(&self, split: &str, seed: &str, method: &str) -> String {
        format!(
            "{split},{seed},{method},{:.4},{:.4},{:.4},{:.4},{:.4}",
            self.acc, self.edit, self.f1[0], self.f1[1], self.f1[2]
        )
    }
}

fn check_lengths(pred: &[usize], gt: &[usize]) -> Result<()> {
    if pred.is_empty() || gt.is_empty() {
        return Err(TssError::EmptySequence);
    }
    if pred.len() != gt.len() {
        return Err(TssError::DimensionMismatch(format!(
            "{} predicted frames vs {} ground-truth frames",
            pred.len(),
            gt.len()
        )));
    }
    Ok(())
}

fn matching_frames(pred: &[usize], gt: &[usize]) -> usize {
    pred.iter().zip(gt).filter(|(a, b)| a == b).count()
}

/// Percentage of frames whose labels agree.
pub fn frame_accuracy(pred: &[usize], gt: &[usize]) -> Result<f64> {
    check_lengths(pred, gt)?;
    Ok(100.0 * matching_frames(pred, gt) as f64 / gt.len() as f64)
}

/// Accuracy of pseudo-labels against held-out ground truth.
pub fn pseudo_label_accuracy(pseudo: &[usize], gt: &[usize]) -> Result<f64> {
    frame_accuracy(pseudo, gt)
}

fn levenshtein(a: &[usize], b: &[usize]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &y) in b.iter().enumerate() {
            let substitute = prev[j] + usize::from(x != y);
            cur[j + 1] = substitute.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `100 · (1 − lev(pred segments, gt segments) / max(|pred|, |gt|))` over
/// the segment label strings.
pub fn edit_score(pred: &[usize], gt: &[usize]) -> Result<f64> {
    if pred.is_empty() || gt.is_empty() {
        return Err(TssError::EmptySequence);
    }
    let p: Vec<usize> = segments_from_labels(pred)?
        .iter()
        .map(|s| s.label)
        .collect();
    let g: Vec<usize> = segments_from_labels(gt)?.iter().map(|s| s.label).collect();
    let dist = levenshtein(&p, &g) as f64;
    Ok(100.0 * (1.0 - dist / p.len().max(g.len()) as f64))
}

fn iou(a: &Segment, b: &Segment) -> f64 {
    let inter = a.end.min(b.end).saturating_sub(a.start.max(b.start));
    let union = a.end.max(b.end) - a.start.min(b.start);
    inter as f64 / union as f64
}

fn f1_counts(pred: &[Segment], gt: &[Segment], threshold: f64) -> (usize, usize, usize) {
    let mut used = vec![false; gt.len()];
    let mut tp = 0;
    for p in pred {
        let best = gt
            .iter()
            .enumerate()
            .filter(|(j, g)| !used[*j] && g.label == p.label)
            .map(|(j, g)| (j, iou(p, g)))
            .fold(None::<(usize, f64)>, |acc, (j, v)| match acc {
                Some((_, b)) if b >= v => acc,
                _ => Some((j, v)),
            });
        if let Some((j, v)) = best {
            if v >= threshold {
                used[j] = true;
                tp += 1;
            }
        }
    }
    let fp = pred.len() - tp;
    let fn_ = gt.len() - tp;
    (tp, fp, fn_)
}

/// Segmental F1 at IoU threshold `k`, as a percentage.
///
/// Predicted segments are visited in temporal order; each is a true
/// positive when its best same-class IoU among still-unmatched ground-truth
/// segments reaches `k`, and that ground-truth segment is then consumed.
pub fn f1_at_overlap(pred: &[usize], gt: &[usize], k: f64) -> Result<f64> {
    if !(k > 0.0 && k <= 1.0) {
        return Err(TssError::InvalidParameter(format!(
            "overlap threshold {k} outside (0, 1]"
        )));
    }
    check_lengths(pred, gt)?;
    let (tp, fp, fn_) = f1_counts(&segments_from_labels(pred)?, &segments_from_labels(gt)?, k);
    let denom = 2 * tp + fp + fn_;
    Ok(if denom == 0 {
        0.0
    } else {
        100.0 * 2.0 * tp as f64 / denom as f64
    })
}

/// All metrics for a single video.
pub fn video_report(pred: &[usize], gt: &[usize]) -> Result<MetricReport> {
    let mut f1 = [0.0; 3];
    for (slot, &k) in f1.iter_mut().zip(&F1_THRESHOLDS) {
        *slot = f1_at_overlap(pred, gt, k)?;
    }
    Ok(MetricReport {
        acc: frame_accuracy(pred, gt)?,
        edit: edit_score(pred, gt)?,
        f1,
    })
}

/// Corpus-level report over `(prediction, ground truth)` pairs.
pub fn corpus_report<'a, I>(pairs: I) -> Result<MetricReport>
where
    I: IntoIterator<Item = (&'a [usize], &'a [usize])>,
{
    let mut correct = 0usize;
    let mut frames = 0usize;
    let mut edit = 0.0;
    let mut f1 = [0.0; 3];
    let mut videos = 0usize;
    for (pred, gt) in pairs {
        let report = video_report(pred, gt)?;
        correct += matching_frames(pred, gt);
        frames += gt.len();
        edit += report.edit;
        for (acc, v) in f1.iter_mut().zip(report.f1) {
            *acc += v;
        }
        videos += 1;
    }
    if videos == 0 {
        return Err(TssError::InsufficientData("no videos to evaluate".into()));
    }
    let n = videos as f64;
    Ok(MetricReport {
        acc: 100.0 * correct as f64 / frames as f64,
        edit: edit / n,
        f1: f1.map(|v| v / n),
    })
}

/// Trace of the population covariance of the frequency vectors divided by K.
pub fn total_variance(freqs: &[ActionFrequency], num_classes: usize) -> Result<f64> {
    if freqs.len() < 2 {
        return Err(TssError::InsufficientData(format!(
            "total variance needs at least 2 vectors, got {}",
            freqs.len()
        )));
    }
    if let Some(f) = freqs.iter().find(|f| f.num_classes() != num_classes) {
        return Err(TssError::DimensionMismatch(format!(
            "frequency of length {} with K = {num_classes}",
            f.num_classes()
        )));
    }
    let n = freqs.len() as f64;
    let mut trace = 0.0;
    for k in 0..num_classes {
        let mean = freqs.iter().map(|f| f.values()[k]).sum::<f64>() / n;
        trace += freqs
            .iter()
            .map(|f| (f.values()[k] - mean).powi(2))
            .sum::<f64>()
            / n;
    }
    Ok(trace / num_classes as f64)
}
