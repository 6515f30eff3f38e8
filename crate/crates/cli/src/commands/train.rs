use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use serde_json::json;
use tss_core::data::{load_dataset, sample_split, Dataset};
use tss_core::metrics::MetricReport;
use tss_core::model::write_checkpoint;
use tss_core::trainer::{train, EpochLog, Mode, TrainConfig};
use tss_core::TssError;

use crate::error::{CliError, CliResult};
use crate::manifest::{create_dir, hash_inputs, write_file, RunManifest};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const EPOCHS_FILE: &str = "epochs.csv";
pub const CHECKPOINT_FILE: &str = "model.tssm";

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Dataset directory written by `generate`.
    #[arg(long)]
    pub data: PathBuf,
    /// Fraction of training videos that keep their labels.
    #[arg(long)]
    pub labelled_frac: f64,
    /// Comma-separated modes: base, pseudo, aff, aff_cont, full, sup_abs.
    #[arg(long, value_delimiter = ',', default_value = "full")]
    pub mode: Vec<String>,
    /// Comma-separated seeds; each picks its own labelled subset.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    pub seeds: Vec<u64>,
    /// Output directory for logs, checkpoints and the summary.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub warmup_epochs: usize,
    #[arg(long, default_value_t = 20)]
    pub joint_epochs: usize,
    #[arg(long, default_value_t = 5e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.01)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.15)]
    pub gamma: f64,
    #[arg(long, default_value_t = 4.0)]
    pub tau: f64,
    /// Sub-sampling window of the continuity loss.
    #[arg(long, default_value_t = 20)]
    pub omega: usize,
    /// Boundary vicinity fraction.
    #[arg(long, default_value_t = 0.05)]
    pub v: f64,
    /// Boundary smoothing sharpness.
    #[arg(long, default_value_t = 5.0)]
    pub eps: f64,
    #[arg(long, default_value_t = 2)]
    pub stages: usize,
    #[arg(long, default_value_t = 6)]
    pub layers: usize,
    #[arg(long, default_value_t = 32)]
    pub channels: usize,
    /// Leave the smoothing loss out of the warmup phase.
    #[arg(long)]
    pub no_warmup_smoothing: bool,
    /// Apply the unlabelled losses to the last stage only.
    #[arg(long)]
    pub final_stage_only: bool,
    /// Only match unlabelled videos with labelled videos of the same activity.
    #[arg(long)]
    pub activity_anchors: bool,
    /// Evaluate every this many epochs.
    #[arg(long, default_value_t = 1)]
    pub eval_every: usize,
}

impl TrainArgs {
    pub fn modes(&self) -> CliResult<Vec<Mode>> {
        let mut modes: Vec<Mode> = Vec::new();
        for name in &self.mode {
            let mode: Mode = name.trim().parse()?;
            if modes.contains(&mode) {
                return Err(CliError::Usage(format!("mode `{mode}` given twice")));
            }
            modes.push(mode);
        }
        if modes.is_empty() {
            return Err(CliError::Usage("no mode given".into()));
        }
        Ok(modes)
    }

    pub fn config(&self, mode: Mode, seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig::new(mode, seed);
        cfg.warmup_epochs = self.warmup_epochs;
        cfg.joint_epochs = self.joint_epochs;
        cfg.learning_rate = self.lr;
        cfg.weights.alpha = self.alpha;
        cfg.weights.beta = self.beta;
        cfg.weights.gamma = self.gamma;
        cfg.weights.tau = self.tau;
        cfg.omega = self.omega;
        cfg.vicinity = self.v;
        cfg.epsilon = self.eps;
        cfg.stages = self.stages;
        cfg.layers_per_stage = self.layers;
        cfg.channels = self.channels;
        cfg.smooth_in_warmup = !self.no_warmup_smoothing;
        cfg.unsup_all_stages = !self.final_stage_only;
        cfg.activity_anchors = self.activity_anchors;
        cfg.eval_every = self.eval_every;
        cfg
    }
}

/// Label fraction as shown in the summary's `split` column, e.g. `10%`.
pub fn split_label(fraction: f64) -> String {
    let pct = (fraction * 100.0 * 1e6).round() / 1e6;
    format!("{pct}%")
}

/// One trained (mode, seed) pair.
#[derive(Debug, Clone)]
pub struct SeedResult {
    pub mode: Mode,
    pub seed: u64,
    pub logs: Vec<EpochLog>,
    pub report: MetricReport,
}

fn run_one(
    data: &Dataset,
    args: &TrainArgs,
    mode: Mode,
    seed: u64,
    dir: &Path,
) -> CliResult<SeedResult> {
    let split = sample_split(data, args.labelled_frac, seed)?;
    let config = args.config(mode, seed);
    let (params, logs) = train(data, &split, &config)?;
    let report = logs.last().and_then(|l| l.report).ok_or_else(|| {
        TssError::InsufficientData("no held-out or unlabelled videos to evaluate on".into())
    })?;
    create_dir(dir)?;
    let mut csv = String::from(EpochLog::CSV_HEADER);
    csv.push('\n');
    for log in &logs {
        csv.push_str(&log.csv_row());
        csv.push('\n');
    }
    write_file(&dir.join(EPOCHS_FILE), csv.as_bytes())?;
    write_checkpoint(&dir.join(CHECKPOINT_FILE), &params)?;
    Ok(SeedResult {
        mode,
        seed,
        logs,
        report,
    })
}

fn mean_report(reports: &[MetricReport]) -> MetricReport {
    let n = reports.len() as f64;
    let mut out = MetricReport {
        acc: 0.0,
        edit: 0.0,
        f1: [0.0; 3],
    };
    for r in reports {
        out.acc += r.acc / n;
        out.edit += r.edit / n;
        for (a, b) in out.f1.iter_mut().zip(r.f1) {
            *a += b / n;
        }
    }
    out
}

fn difference(a: &MetricReport, b: &MetricReport) -> MetricReport {
    MetricReport {
        acc: a.acc - b.acc,
        edit: a.edit - b.edit,
        f1: [a.f1[0] - b.f1[0], a.f1[1] - b.f1[1], a.f1[2] - b.f1[2]],
    }
}

/// Per-seed rows, a `mean` row per mode, and `gain` rows (mode mean minus
/// base mean) when `base` was trained.
pub fn summary_csv(fraction: f64, modes: &[Mode], results: &[SeedResult]) -> String {
    let split = split_label(fraction);
    let mut out = String::from(MetricReport::CSV_HEADER);
    out.push('\n');
    let mut means = Vec::new();
    for &mode in modes {
        let reports: Vec<MetricReport> = results
            .iter()
            .filter(|r| r.mode == mode)
            .map(|r| r.report)
            .collect();
        for r in results.iter().filter(|r| r.mode == mode) {
            out.push_str(&r.report.csv_row(&split, &r.seed.to_string(), mode.as_str()));
            out.push('\n');
        }
        let mean = mean_report(&reports);
        out.push_str(&mean.csv_row(&split, "mean", mode.as_str()));
        out.push('\n');
        means.push((mode, mean));
    }
    if let Some((_, base)) = means.iter().find(|(m, _)| *m == Mode::Base) {
        for (mode, mean) in means.iter().filter(|(m, _)| *m != Mode::Base) {
            out.push_str(&difference(mean, base).csv_row(&split, "gain", mode.as_str()));
            out.push('\n');
        }
    }
    out
}

pub fn run_dir(out: &Path, mode: Mode, seed: u64) -> PathBuf {
    out.join(mode.as_str()).join(format!("seed_{seed}"))
}

pub fn run(args: &TrainArgs) -> CliResult<Vec<SeedResult>> {
    let modes = args.modes()?;
    if args.seeds.is_empty() {
        return Err(CliError::Usage("no seeds given".into()));
    }
    let data = load_dataset(&args.data)?;
    let jobs: Vec<(Mode, u64)> = modes
        .iter()
        .flat_map(|&m| args.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(mode, seed)| {
            run_one(&data, args, mode, seed, &run_dir(&args.out, mode, seed))
                .map_err(|e| e.context(format!("mode {mode}, seed {seed}")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    write_file(
        &args.out.join(SUMMARY_FILE),
        summary_csv(args.labelled_frac, &modes, &results).as_bytes(),
    )?;
    let mut outputs = vec![SUMMARY_FILE.to_owned()];
    for &(mode, seed) in &jobs {
        let rel = format!("{}/seed_{seed}", mode.as_str());
        outputs.push(format!("{rel}/{EPOCHS_FILE}"));
        outputs.push(format!("{rel}/{CHECKPOINT_FILE}"));
    }
    let configs: Vec<_> = modes.iter().map(|&m| args.config(m, 0)).collect();
    RunManifest {
        command: "train".into(),
        config: json!({
            "labelled_frac": args.labelled_frac,
            "modes": modes,
            "train": configs,
        }),
        seeds: args.seeds.clone(),
        inputs: vec![args.data.display().to_string()],
        outputs,
        input_hash: hash_inputs(&[args.data.as_path()])?,
    }
    .write(&args.out)?;
    for r in results.iter() {
        println!(
            "{:<8} seed {:<4} acc {:.2} edit {:.2} f1@50 {:.2}",
            r.mode.as_str(),
            r.seed,
            r.report.acc,
            r.report.edit,
            r.report.f1[2]
        );
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(mode: Mode, seed: u64, acc: f64) -> SeedResult {
        SeedResult {
            mode,
            seed,
            logs: Vec::new(),
            report: MetricReport {
                acc,
                edit: acc / 2.0,
                f1: [acc, acc, acc],
            },
        }
    }

    #[test]
    fn split_labels() {
        assert_eq!(split_label(0.1), "10%");
        assert_eq!(split_label(0.05), "5%");
        assert_eq!(split_label(1.0), "100%");
    }

    #[test]
    fn summary_has_means_and_gains() {
        let results = vec![
            result(Mode::Base, 1, 50.0),
            result(Mode::Base, 2, 60.0),
            result(Mode::Full, 1, 70.0),
            result(Mode::Full, 2, 72.0),
        ];
        let csv = summary_csv(0.1, &[Mode::Base, Mode::Full], &results);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], MetricReport::CSV_HEADER);
        assert_eq!(
            lines[3],
            "10%,mean,base,55.0000,27.5000,55.0000,55.0000,55.0000"
        );
        assert_eq!(
            lines[6],
            "10%,mean,full,71.0000,35.5000,71.0000,71.0000,71.0000"
        );
        assert_eq!(
            lines[7],
            "10%,gain,full,16.0000,8.0000,16.0000,16.0000,16.0000"
        );
        assert_eq!(lines.len(), 8);
    }

    #[test]
    fn no_gain_rows_without_base() {
        let results = vec![result(Mode::Full, 1, 70.0)];
        let csv = summary_csv(0.1, &[Mode::Full], &results);
        assert!(!csv.contains("gain"));
    }
}
