use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::Args;
use tss_core::data::{read_groundtruth_file, read_mapping};
use tss_core::smoothing::{smooth_labels, vicinities, Side, DEFAULT_EPSILON, DEFAULT_VICINITY};
use tss_core::{LabelSequence, TssError};

use crate::error::CliResult;

#[derive(Debug, Clone, Args)]
pub struct SmoothArgs {
    /// Label file: one action name per line with `--mapping`, one integer id otherwise.
    #[arg(long)]
    pub labels: PathBuf,
    /// Mapping file with `name id` lines.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_VICINITY)]
    pub v: f64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub eps: f64,
}

fn read_ids(path: &PathBuf) -> CliResult<LabelSequence> {
    let text = fs::read_to_string(path).map_err(|e| TssError::io(path, e))?;
    let labels = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.parse::<usize>().map_err(|_| TssError::Parse {
                path: path.clone(),
                reason: format!("`{l}` is not a label id; pass --mapping for named labels"),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let k = labels.iter().max().map_or(0, |m| m + 1);
    Ok(LabelSequence::new(labels, k)?)
}

/// Vicinity table followed by the soft rows inside each vicinity.
pub fn render(labels: &LabelSequence, names: &[String], v: f64, eps: f64) -> CliResult<String> {
    let name = |k: usize| names.get(k).cloned().unwrap_or_else(|| k.to_string());
    let table = vicinities(&labels.segments(), v)?;
    let soft = smooth_labels(labels, v, eps)?;
    let mut s = String::new();
    writeln!(
        s,
        "frames {}  segments {}  v {v}  eps {eps}",
        labels.len(),
        labels.segments().len()
    )
    .unwrap();
    writeln!(s, "vicinities {}", table.len()).unwrap();
    writeln!(s, "  side   boundary  start  end  own  other").unwrap();
    for vc in &table {
        let side = match vc.side {
            Side::Left => "left",
            Side::Right => "right",
        };
        writeln!(
            s,
            "  {side:<5}  {:>8}  {:>5}  {:>3}  {}  {}",
            vc.boundary,
            vc.start,
            vc.end,
            name(vc.own_label),
            name(vc.other_label)
        )
        .unwrap();
    }
    writeln!(s, "soft rows").unwrap();
    for vc in &table {
        for t in vc.start..vc.end {
            writeln!(
                s,
                "  {t:>6}  {}={:.6}  {}={:.6}",
                name(vc.own_label),
                soft.get(t, vc.own_label),
                name(vc.other_label),
                soft.get(t, vc.other_label)
            )
            .unwrap();
        }
    }
    Ok(s)
}

pub fn run(args: &SmoothArgs) -> CliResult<String> {
    let (labels, names) = match &args.mapping {
        Some(path) => {
            let mapping = read_mapping(path)?;
            (
                read_groundtruth_file(&args.labels, &mapping)?,
                mapping.names().to_vec(),
            )
        }
        None => (read_ids(&args.labels)?, Vec::new()),
    };
    render(&labels, &names, args.v, args.eps)
}
