//! Repeated-trial execution with derived seeds.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use rffp_core::dataio::{load_dataset, select_semisup};
use rffp_core::semisup::{train_from_seed, EpochRecord, TrainerConfig};
use rffp_core::signal::ComplexSignal;
use rffp_core::{
    Dataset, Error, LabeledSet, Parameters, Resnet1d, Result, UnlabeledSet,
};

use crate::report::ResultRow;

/// RNG stream offset reserved for per-trial seeds.
const TRIAL_STREAM_BASE: u64 = 0x7472_0000;

/// The three split files produced by the `split` subcommand.
pub struct SplitData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

pub fn load_split_dir(dir: &Path) -> Result<SplitData> {
    let load = |name: &str| -> Result<Dataset> {
        let path = dir.join(name);
        load_dataset(&path).map_err(|e| match e {
            Error::Io(io) => Error::config(format!(
                "cannot read split file {}: {io} (run `rffp split` first)",
                path.display()
            )),
            other => other,
        })
    };
    let data = SplitData {
        train: load("train.rfsd")?,
        val: load("val.rfsd")?,
        test: load("test.rfsd")?,
    };
    for part in [&data.val, &data.test] {
        if part.num_devices != data.train.num_devices
            || part.sample_len != data.train.sample_len
        {
            return Err(Error::config("split files disagree on devices or sample length"));
        }
    }
    Ok(data)
}

/// Everything one method needs to run its trials.
pub struct TrialPlan<'a> {
    pub method: String,
    pub model: &'a Resnet1d,
    pub labeled: &'a LabeledSet,
    pub unlabeled: &'a UnlabeledSet,
    pub test_signals: &'a [&'a ComplexSignal],
    pub test_labels: &'a [u16],
    pub trainer: TrainerConfig,
}

pub struct TrialOutcome {
    pub rows: Vec<ResultRow>,
    pub logs: Vec<(usize, Vec<EpochRecord>)>,
    /// Highest-accuracy successful trial, with its parameters.
    pub best: Option<(usize, f64, Parameters<f32>)>,
}

/// The deterministic seed of trial `trial` under `master`.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    use rand::Rng;
    rffp_core::seed::derive_rng(master, TRIAL_STREAM_BASE + trial as u64).random()
}

/// Runs `trials` independently seeded trainings. Failed trials (non-finite
/// loss) are recorded, not fatal; any other error aborts.
pub fn run_trials(plan: &TrialPlan<'_>, trials: usize, master_seed: u64) -> Result<TrialOutcome> {
    let results: Vec<(ResultRow, Vec<EpochRecord>, Option<Parameters<f32>>)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let seed = trial_seed(master_seed, trial);
            let started = Instant::now();
            let outcome = train_from_seed(
                plan.model,
                plan.labeled,
                plan.unlabeled,
                Some((plan.test_signals, plan.test_labels)),
                &plan.trainer,
                seed,
            );
            let wall_secs = started.elapsed().as_secs_f64();
            match outcome {
                Ok(out) => Ok((
                    ResultRow {
                        method: plan.method.clone(),
                        labeled_per_device: plan.labeled.len()
                            / plan.labeled.num_classes.max(1),
                        unlabeled_per_device: plan.unlabeled.len()
                            / plan.labeled.num_classes.max(1),
                        trial,
                        seed,
                        accuracy: out.final_eval_accuracy,
                        wall_secs,
                    },
                    out.log,
                    Some(out.params),
                )),
                Err(Error::TrainingFailed { epoch }) => {
                    eprintln!(
                        "trial {trial} ({}) failed at epoch {epoch}: non-finite loss",
                        plan.method
                    );
                    Ok((
                        ResultRow {
                            method: plan.method.clone(),
                            labeled_per_device: plan.labeled.len()
                                / plan.labeled.num_classes.max(1),
                            unlabeled_per_device: plan.unlabeled.len()
                                / plan.labeled.num_classes.max(1),
                            trial,
                            seed,
                            accuracy: None,
                            wall_secs,
                        },
                        Vec::new(),
                        None,
                    ))
                }
                Err(other) => Err(other),
            }
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(trials);
    let mut logs = Vec::with_capacity(trials);
    let mut best: Option<(usize, f64, Parameters<f32>)> = None;
    for (row, log, params) in results {
        if let (Some(acc), Some(p)) = (row.accuracy, params) {
            let better = match &best {
                Some((_, best_acc, _)) => acc > *best_acc,
                None => true,
            };
            if better {
                best = Some((row.trial, acc, p));
            }
        }
        logs.push((row.trial, log));
        rows.push(row);
    }
    Ok(TrialOutcome { rows, logs, best })
}

/// Builds the labeled/unlabeled selection and test view for a split.
pub struct PreparedData<'a> {
    pub labeled: LabeledSet,
    pub unlabeled: UnlabeledSet,
    pub test_signals: Vec<&'a ComplexSignal>,
    pub test_labels: Vec<u16>,
}

/// Selection RNG stream (distinct from trial seeds).
const SELECT_STREAM: u64 = 0x5e1e_c700;

pub fn prepare(data: &SplitData, m: usize, n: usize, master_seed: u64) -> Result<PreparedData<'_>> {
    use rand::Rng;
    let select_seed: u64 = rffp_core::seed::derive_rng(master_seed, SELECT_STREAM).random();
    let (labeled, unlabeled) = select_semisup(&data.train, m, n, select_seed)?;
    let test_signals: Vec<&ComplexSignal> =
        data.test.records.iter().map(|r| &r.signal).collect();
    let test_labels: Vec<u16> = data.test.records.iter().map(|r| r.label).collect();
    Ok(PreparedData {
        labeled,
        unlabeled,
        test_signals,
        test_labels,
    })
}
