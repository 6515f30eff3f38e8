use std::fs;
use std::path::PathBuf;

use clap::Args;
use serde_json::json;
use tss_core::data::{generate, save_dataset, GeneratorConfig, GrammarSet};
use tss_core::TssError;

use crate::error::CliResult;
use crate::manifest::{hash_inputs, RunManifest};

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    /// Grammar file (JSON).
    #[arg(long)]
    pub grammars: PathBuf,
    /// Training videos to generate.
    #[arg(long)]
    pub n_videos: usize,
    /// Held-out test videos to generate.
    #[arg(long, default_value_t = 0)]
    pub n_test: usize,
    /// Feature dimension.
    #[arg(long)]
    pub dim: usize,
    /// Standard deviation of the per-frame Gaussian noise.
    #[arg(long)]
    pub noise: f64,
    /// Standard deviation of a per-video feature offset.
    #[arg(long, default_value_t = 0.0)]
    pub video_shift: f64,
    /// Half-width of the window that blends action means across boundaries.
    #[arg(long, default_value_t = 0)]
    pub feature_window: usize,
    #[arg(long)]
    pub seed: u64,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &GenerateArgs) -> CliResult<()> {
    let text = fs::read_to_string(&args.grammars).map_err(|e| TssError::io(&args.grammars, e))?;
    let grammars = GrammarSet::from_json(&text)?;
    let config = GeneratorConfig {
        n_videos: args.n_videos,
        n_test: args.n_test,
        feature_dim: args.dim,
        noise_sigma: args.noise,
        video_shift: args.video_shift,
        feature_window: args.feature_window,
        seed: args.seed,
    };
    let dataset = generate(&grammars, &config)?;
    let manifest = save_dataset(&args.out, &dataset)?;
    let mut outputs = vec!["manifest.json".to_owned(), manifest.mapping.clone()];
    for v in &manifest.videos {
        outputs.push(v.features.clone());
        outputs.push(v.groundtruth.clone());
    }
    RunManifest {
        command: "generate".into(),
        config: json!({ "generator": config, "grammars": grammars }),
        seeds: vec![args.seed],
        inputs: vec![args.grammars.display().to_string()],
        outputs,
        input_hash: hash_inputs(&[args.grammars.as_path()])?,
    }
    .write(&args.out)?;
    println!(
        "wrote {} training and {} test videos to {}",
        dataset.train.len(),
        dataset.test.len(),
        args.out.display()
    );
    Ok(())
}
