use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use tss_core::continuity::{continuity_loss, ContinuityOutput, DEFAULT_STRIDE};
use tss_core::data::{load_dataset, Dataset};
use tss_core::model::{forward, read_checkpoint};
use tss_core::TssError;

use crate::error::CliResult;

#[derive(Debug, Clone, Args)]
pub struct PseudoArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory holding the video.
    #[arg(long)]
    pub data: PathBuf,
    /// Video id, e.g. `train_0003`.
    #[arg(long)]
    pub video: String,
    /// Sub-sampling window.
    #[arg(long, default_value_t = DEFAULT_STRIDE)]
    pub omega: usize,
}

/// Sub-sampled actions, aligned segments and alignment cost as text.
pub fn render(video: &str, names: &[String], frames: usize, out: &ContinuityOutput) -> String {
    let name = |k: usize| names.get(k).map(String::as_str).unwrap_or("?");
    let mut s = String::new();
    writeln!(s, "video {video} ({frames} frames)").unwrap();
    let actions: Vec<String> = out
        .actions
        .actions()
        .iter()
        .map(|&k| format!("{k}:{}", name(k)))
        .collect();
    writeln!(s, "actions {}", actions.join(" ")).unwrap();
    writeln!(s, "segments").unwrap();
    writeln!(s, "  label  start  end  name").unwrap();
    for seg in out.alignment.segments(&out.actions) {
        writeln!(
            s,
            "  {:>5}  {:>5}  {:>3}  {}",
            seg.label,
            seg.start,
            seg.end,
            name(seg.label)
        )
        .unwrap();
    }
    writeln!(s, "cost {:.6}", out.alignment.cost).unwrap();
    writeln!(s, "loss {:.6}", out.loss.value).unwrap();
    s
}

fn find_video<'a>(data: &'a Dataset, id: &str) -> Option<&'a tss_core::data::Video> {
    data.train.iter().chain(&data.test).find(|v| v.id == id)
}

pub fn run(args: &PseudoArgs) -> CliResult<String> {
    let params = read_checkpoint(&args.checkpoint)?;
    let data = load_dataset(&args.data)?;
    let video = find_video(&data, &args.video).ok_or_else(|| {
        TssError::InvalidParameter(format!(
            "no video `{}` in {}",
            args.video,
            args.data.display()
        ))
    })?;
    let probs = forward(&params, &video.features)?;
    let out = continuity_loss(probs.final_probs(), args.omega)?;
    Ok(render(
        &video.id,
        &data.action_names,
        video.features.rows(),
        &out,
    ))
}
