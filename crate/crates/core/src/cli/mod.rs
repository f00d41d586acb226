//! Command-line entry point. Every stage reads and writes a run directory:
//!
//! ```text
//! data/       manifest.csv, dataset.json, images/*.axf
//! train/      model.axm, history.csv, train.json
//! explain/    index.csv, maps/<sample>_<label>.axf
//! aggregate/  label_<name>.axf + .meta, overall.axf + .meta
//! peppr/      curves.csv
//! report/     summary.txt and 8-bit renderings
//! ```
//!
//! Each stage also writes a `files.txt` inventory of its own directory.

mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::aggregate::Weighting;
use crate::error::{Error, Result};
use crate::gradcam::Normalization;
use crate::model::Precision;
use crate::peppr::{Fill, NoiseDraw};
use crate::synthdata::Split;

pub use stages::{
    run_aggregate, run_all, run_explain, run_generate, run_peppr_stage, run_report, run_train,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FillArg {
    Noise,
    TrainMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseArg {
    PerStep,
    PerSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    MaxOne,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightingArg {
    Prob,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

/// Options shared by all stages. Defaults follow the documented design.
#[derive(Debug, Clone, clap::Args)]
pub struct RunConfig {
    /// Master seed for every random stream
    #[arg(long, env = "ALIGNED_XAI_SEED", default_value_t = 7, global = true)]
    pub seed: u64,
    /// Image size as N or HxW
    #[arg(long, default_value = "64", global = true, value_parser = parse_size)]
    pub image_size: (usize, usize),
    /// Comma-separated label subset, in generator order
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "glaucoma_like,dr_like,rd_like",
        global = true
    )]
    pub labels: Vec<String>,
    /// Number of subjects to generate
    #[arg(long, default_value_t = 2000, global = true)]
    pub subjects: usize,
    #[arg(long, default_value_t = 12, global = true)]
    pub epochs: usize,
    /// Adam learning rate
    #[arg(long, default_value_t = 1e-3, global = true)]
    pub lr: f64,
    /// L2 penalty on weights (biases excluded)
    #[arg(long, default_value_t = 5e-5, global = true)]
    pub l2: f64,
    #[arg(long, default_value_t = 32, global = true)]
    pub batch_size: usize,
    /// RandomErasing probability during training
    #[arg(long, default_value_t = 0.3, global = true)]
    pub erasing_prob: f64,
    /// PEPPR quantile step
    #[arg(long, default_value_t = 0.05, global = true)]
    pub peppr_step: f64,
    /// Fill for erased pixels
    #[arg(long, value_enum, default_value = "noise", global = true)]
    pub fill: FillArg,
    /// Redraw the noise fill at every quantile step, or once per image
    #[arg(long, value_enum, default_value = "per-step", global = true)]
    pub peppr_noise: NoiseArg,
    /// Per-image GradCAM normalization
    #[arg(long, value_enum, default_value = "max-one", global = true)]
    pub gradcam_norm: NormArg,
    /// Weighting of image-wise maps in the label-wise mean
    #[arg(long, value_enum, default_value = "prob", global = true)]
    pub weighting: WeightingArg,
    /// Split the global explanations are built on
    #[arg(long, value_enum, default_value = "val", global = true)]
    pub split: SplitArg,
    /// Disable the right-eye mirroring at load time
    #[arg(long, global = true)]
    pub no_flip: bool,
    /// Run directory
    #[arg(long, default_value = "run", global = true)]
    pub out: PathBuf,
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, default_value_t = 0, global = true)]
    pub threads: usize,
    #[arg(long, value_enum, default_value = "f32", global = true)]
    pub precision: PrecisionArg,
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let parse = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| format!("bad size {s:?}"))
    };
    match s.split_once(['x', 'X']) {
        Some((h, w)) => Ok((parse(h)?, parse(w)?)),
        None => parse(s).map(|n| (n, n)),
    }
}

impl RunConfig {
    pub fn fill(&self) -> Fill {
        match self.fill {
            FillArg::Noise => Fill::RandomNoise,
            FillArg::TrainMean => Fill::TrainMean,
        }
    }
    pub fn peppr_noise(&self) -> NoiseDraw {
        match self.peppr_noise {
            NoiseArg::PerStep => NoiseDraw::PerStep,
            NoiseArg::PerSample => NoiseDraw::PerSample,
        }
    }
    pub fn normalization(&self) -> Normalization {
        match self.gradcam_norm {
            NormArg::MaxOne => Normalization::MaxOne,
            NormArg::Raw => Normalization::Raw,
        }
    }
    pub fn weighting(&self) -> Weighting {
        match self.weighting {
            WeightingArg::Prob => Weighting::Prob,
            WeightingArg::Uniform => Weighting::Uniform,
        }
    }
    pub fn split(&self) -> Split {
        match self.split {
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
    pub fn precision(&self) -> Precision {
        match self.precision {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        }
    }
    pub fn flip(&self) -> bool {
        !self.no_flip
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Cli::parse_from(["aligned-xai", "report"]).config
    }
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Generate the synthetic dataset into <out>/data
    GenerateData,
    /// Train the classifier on <out>/data
    Train,
    /// Image-wise GradCAM maps for the positives of the chosen split
    Explain,
    /// Label-wise and overall global explanations from <out>/explain
    Aggregate,
    /// Erasure and restoration curves on the test split
    Peppr,
    /// Plain-text summary and renderings
    Report,
    /// All stages in order
    RunAll,
}

#[derive(Debug, Clone, Parser)]
#[command(
    name = "aligned-xai",
    version,
    about = "Global explanations and PEPPR validation for aligned images"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub config: RunConfig,
}

/// Exit code for an error class.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Prerequisite(_) => 2,
        Error::Config(_) => 3,
        Error::Numeric(_) | Error::Training { .. } | Error::Metric(_) => 4,
        _ => 1,
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    if cli.config.threads > 0 {
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.config.threads)
            .build_global();
    }
    let c = &cli.config;
    match cli.command {
        Command::GenerateData => run_generate(c),
        Command::Train => run_train(c),
        Command::Explain => run_explain(c),
        Command::Aggregate => run_aggregate(c),
        Command::Peppr => run_peppr_stage(c),
        Command::Report => run_report(c),
        Command::RunAll => run_all(c),
    }
}

/// Parses `args`, runs the command and maps errors to a one-line
/// `error[<class>]: message` on stderr.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            eprintln!("error[config]: {first}");
            return ExitCode::from(3);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.class());
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_defaults() {
        assert_eq!(parse_size("64").unwrap(), (64, 64));
        assert_eq!(parse_size("32x48").unwrap(), (32, 48));
        assert!(parse_size("x").is_err());
        let c = Cli::parse_from(["a", "train", "--labels", "dr_like,rd_like", "--seed", "3"]);
        assert_eq!(c.config.labels, ["dr_like", "rd_like"]);
        assert_eq!(c.config.seed, 3);
        assert_eq!(c.config.fill(), Fill::RandomNoise);
        assert!(c.config.flip());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Prerequisite("x".into())), 2);
        assert_eq!(exit_code(&Error::Config("x".into())), 3);
        assert_eq!(exit_code(&Error::Numeric("x".into())), 4);
        assert_eq!(exit_code(&Error::Contract("x".into())), 1);
    }
}
