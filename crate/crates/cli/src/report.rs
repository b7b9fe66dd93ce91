//! Result rows and CSV emission.
//!
//! Every CSV row carries a schema tag so files stay append-safe across
//! versions. Floats are written with Rust's shortest round-trip
//! formatting, so a summary recomputed from parsed rows is bit-identical.

use std::io::Write;
use std::path::Path;

use rffp_core::semisup::EpochRecord;
use rffp_core::{Error, Result};

pub const TRIAL_SCHEMA: &str = "trial-v1";
pub const SUMMARY_SCHEMA: &str = "summary-v1";
pub const EPOCH_SCHEMA: &str = "epoch-v1";

/// One trial's outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: String,
    pub labeled_per_device: usize,
    pub unlabeled_per_device: usize,
    pub trial: usize,
    pub seed: u64,
    /// `None` when the trial failed.
    pub accuracy: Option<f64>,
    pub wall_secs: f64,
}

impl ResultRow {
    pub fn failed(&self) -> bool {
        self.accuracy.is_none()
    }
}

/// Sample mean and standard deviation (n - 1 denominator; zero for a
/// single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_trials_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut out = String::from("schema,method,M,N,trial,seed,accuracy,failed,wall_secs\n");
    for r in rows {
        out.push_str(&format!(
            "{TRIAL_SCHEMA},{},{},{},{},{},{},{},{}\n",
            r.method,
            r.labeled_per_device,
            r.unlabeled_per_device,
            r.trial,
            r.seed,
            opt(r.accuracy),
            r.failed(),
            r.wall_secs
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Per-method mean and std over successful trials.
pub fn write_summary_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut methods: Vec<String> = rows.iter().map(|r| r.method.clone()).collect();
    methods.dedup();
    let mut out =
        String::from("schema,method,M,N,trials,failures,mean_accuracy,std_accuracy\n");
    for method in methods {
        let group: Vec<&ResultRow> = rows.iter().filter(|r| r.method == method).collect();
        let ok: Vec<f64> = group.iter().filter_map(|r| r.accuracy).collect();
        let failures = group.len() - ok.len();
        let (mean, std) = if ok.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            mean_std(&ok)
        };
        let first = group[0];
        out.push_str(&format!(
            "{SUMMARY_SCHEMA},{method},{},{},{},{failures},{mean},{std}\n",
            first.labeled_per_device,
            first.unlabeled_per_device,
            group.len()
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Parses a trials CSV back into rows (used to verify summaries).
pub fn read_trials_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 || fields[0] != TRIAL_SCHEMA {
            return Err(Error::format(0, format!("bad trial row {i}: `{line}`")));
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::format(0, format!("bad {what} in row {i}")))
        };
        rows.push(ResultRow {
            method: fields[1].to_string(),
            labeled_per_device: fields[2].parse().map_err(|_| Error::format(0, "bad M"))?,
            unlabeled_per_device: fields[3].parse().map_err(|_| Error::format(0, "bad N"))?,
            trial: fields[4].parse().map_err(|_| Error::format(0, "bad trial"))?,
            seed: fields[5].parse().map_err(|_| Error::format(0, "bad seed"))?,
            accuracy: if fields[6].is_empty() {
                None
            } else {
                Some(parse(fields[6], "accuracy")?)
            },
            wall_secs: parse(fields[8], "wall_secs")?,
        });
    }
    Ok(rows)
}

pub fn write_epochs_csv(path: &Path, logs: &[(usize, &[EpochRecord])]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        file,
        "schema,trial,epoch,loss_supervised,loss_unsupervised,pseudo_count,pseudo_accuracy,eval_accuracy"
    )?;
    for (trial, log) in logs {
        for r in *log {
            writeln!(
                file,
                "{EPOCH_SCHEMA},{trial},{},{},{},{},{},{}",
                r.epoch,
                r.loss_supervised,
                r.loss_unsupervised,
                r.pseudo_count,
                opt(r.pseudo_accuracy),
                opt(r.eval_accuracy)
            )?;
        }
    }
    Ok(())
}
