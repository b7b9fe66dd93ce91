//! Command-line experiment harness.
//!
//! Exit status: 0 on success, 1 on configuration errors (bad flags,
//! malformed config file), 2 on runtime failures.

pub mod commands;
pub mod config;
pub mod report;
pub mod trials;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{ConfigFile, ExperimentConfig, Preset};
use rffp_core::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "rffp",
    version,
    about = "Simulate RF-fingerprinted transmitters and train a classifier on them semi-supervised"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// JSON config file; unknown keys are rejected.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Base defaults: `desk` (minutes-scale) or `paper` (full regime).
    #[arg(long, default_value = "desk")]
    preset: String,
    /// Master seed; all randomness derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Training mode: supervised, proposal, or fixmatch.
    #[arg(long)]
    mode: Option<String>,
    /// Labeled examples per device.
    #[arg(long = "M", value_name = "M")]
    labeled: Option<usize>,
    /// Unlabeled samples per device.
    #[arg(long = "N", value_name = "N")]
    unlabeled: Option<usize>,
    /// Simulated device count.
    #[arg(long)]
    devices: Option<usize>,
    /// Records per device when simulating.
    #[arg(long)]
    per_device: Option<usize>,
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Trials per method.
    #[arg(long)]
    trials: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let preset: Preset = self.preset.parse()?;
        let mut config = ExperimentConfig::preset(preset);
        if let Some(path) = &self.config {
            config = ConfigFile::load(path)?.apply(config);
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(mode) = &self.mode {
            config.mode = mode.parse()?;
        }
        if let Some(m) = self.labeled {
            config.labeled_per_device = m;
        }
        if let Some(n) = self.unlabeled {
            config.unlabeled_per_device = n;
        }
        if let Some(d) = self.devices {
            config.devices = d;
        }
        if let Some(p) = self.per_device {
            config.per_device = p;
        }
        if let Some(e) = self.epochs {
            config.epochs = e;
        }
        if let Some(t) = self.trials {
            config.trials = t;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a fingerprinted dataset and write it as an RFSD file.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output dataset path.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Split a dataset into train/val/test files.
    Split {
        #[command(flatten)]
        config: ConfigArgs,
        /// Input dataset.
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        /// Directory for train.rfsd, val.rfsd, test.rfsd.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Train with repeated trials and write result CSVs plus the best
    /// checkpoint.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Directory holding train/val/test.rfsd.
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Output directory.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset.
    Eval {
        /// Checkpoint file from `train`.
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        /// Dataset to evaluate on.
        #[arg(long, value_name = "FILE")]
        dataset: PathBuf,
        /// Output directory for confusion.csv.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Sweep the kappa/tau grid in proposal mode.
    Gridsearch {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Comma-separated kappa values.
        #[arg(long, default_value = "0.0,0.25,0.5")]
        kappas: String,
        /// Comma-separated tau values.
        #[arg(long, default_value = "0.7,0.75,0.8")]
        taus: String,
    },
    /// Compare augmentation variants under supervised training.
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Comma-separated variants: none, rotation, flipping, noise,
        /// permutation, composite.
        #[arg(long, default_value = "none,rotation,flipping,noise,permutation,composite")]
        variants: String,
        /// Segment counts expanded for the permutation variant.
        #[arg(long, default_value = "2,4,8,16")]
        k_list: String,
        /// Noise standard deviation for the noise variant.
        #[arg(long, default_value_t = 0.1)]
        noise_sigma: f64,
    },
}

fn parse_f64_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::config(format!("bad {what} value `{s}`")))
        })
        .collect()
}

fn parse_usize_list(text: &str, what: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::config(format!("bad {what} value `{s}`")))
        })
        .collect()
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate { config, out } => commands::cmd_simulate(&config.resolve()?, &out),
        Command::Split { config, input, out } => {
            commands::cmd_split(&config.resolve()?, &input, &out)
        }
        Command::Train { config, data, out } => {
            commands::cmd_train(&config.resolve()?, &data, &out)
        }
        Command::Eval {
            checkpoint,
            dataset,
            out,
        } => commands::cmd_eval(&checkpoint, &dataset, &out),
        Command::Gridsearch {
            config,
            data,
            out,
            kappas,
            taus,
        } => {
            let kappas = parse_f64_list(&kappas, "kappa")?;
            let taus = parse_f64_list(&taus, "tau")?;
            commands::cmd_gridsearch(&config.resolve()?, &data, &out, &kappas, &taus)
        }
        Command::Ablate {
            config,
            data,
            out,
            variants,
            k_list,
            noise_sigma,
        } => {
            let k_list = parse_usize_list(&k_list, "k")?;
            commands::cmd_ablate(&config.resolve()?, &data, &out, &variants, &k_list, noise_sigma)
        }
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e @ Error::Config(_)) => {
            eprintln!("{e}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
