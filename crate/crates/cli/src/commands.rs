//! Subcommand implementations.

use std::path::Path;

use rffp_core::augment::{AugmentationSpec, Augmentor};
use rffp_core::dataio::{save_dataset, split_dataset, SplitSpec};
use rffp_core::nn::{load_checkpoint, save_checkpoint};
use rffp_core::semisup::{confusion_matrix, evaluate, TrainingMode};
use rffp_core::sigsim::{build_dataset, perturb_profiles, DeviceProfile};
use rffp_core::{Error, Resnet1d, Result};

use crate::config::{ExperimentConfig, ProfileSource};
use crate::report::{
    mean_std, write_epochs_csv, write_summary_csv, write_trials_csv, ResultRow,
};
use crate::trials::{load_split_dir, prepare, run_trials, TrialPlan};

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Builds the device profile list for a configuration.
pub fn profiles_for(config: &ExperimentConfig) -> Result<Vec<DeviceProfile>> {
    match &config.profile_source {
        ProfileSource::Reference => DeviceProfile::reference_set(config.devices),
        ProfileSource::ReferenceRows { rows } => rows[..config.devices]
            .iter()
            .enumerate()
            .map(|(id, &row)| {
                let reference = DeviceProfile::reference(row)?;
                DeviceProfile::new(id as u16, reference.alpha, reference.beta)
            })
            .collect(),
        ProfileSource::Perturbed { offset_scale } => {
            let base = DeviceProfile::reference(0)?;
            let mut rng = rffp_core::seed::derive_rng(config.seed, 0xdef1_ce00);
            perturb_profiles(&base, *offset_scale, config.devices, &mut rng)
        }
    }
}

pub fn cmd_simulate(config: &ExperimentConfig, out: &Path) -> Result<()> {
    config.validate()?;
    let profiles = profiles_for(config)?;
    let sim = config.simulation();
    let dataset = build_dataset(&profiles, &sim, config.per_device)?.with_provenance(format!(
        "simulated: {} devices x {} records, {} @ sps {}, SNR {}, seed {}",
        config.devices,
        config.per_device,
        config.modulation,
        config.sps,
        config
            .snr_db
            .map(|v| format!("{v} dB"))
            .unwrap_or_else(|| "off".into()),
        config.seed,
    ));
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    save_dataset(&dataset, out)?;
    println!(
        "wrote {} ({} records, {} devices, {} samples each)",
        out.display(),
        dataset.records.len(),
        dataset.num_devices,
        dataset.sample_len
    );
    Ok(())
}

pub fn cmd_split(config: &ExperimentConfig, input: &Path, out_dir: &Path) -> Result<()> {
    let dataset = rffp_core::dataio::load_dataset(input)?;
    let spec = SplitSpec {
        ratios: config.ratios,
        labeled_per_device: config.labeled_per_device,
        unlabeled_per_device: config.unlabeled_per_device,
        seed: config.seed,
    };
    let (train, val, test) = split_dataset(&dataset, &spec)?;
    ensure_dir(out_dir)?;
    for (name, part) in [("train", train), ("val", val), ("test", test)] {
        let part = part.with_provenance(format!(
            "{} [{name} split {}:{}:{} seed {}]",
            dataset.provenance, config.ratios.0, config.ratios.1, config.ratios.2, config.seed
        ));
        save_dataset(&part, &out_dir.join(format!("{name}.rfsd")))?;
        println!("wrote {}/{name}.rfsd ({} records)", out_dir.display(), part.records.len());
    }
    Ok(())
}

pub fn cmd_train(config: &ExperimentConfig, data_dir: &Path, out_dir: &Path) -> Result<()> {
    let data = load_split_dir(data_dir)?;
    let prepared = prepare(
        &data,
        config.labeled_per_device,
        config.unlabeled_per_device,
        config.seed,
    )?;
    let model = Resnet1d::new(config.model(
        data.train.num_devices as usize,
        data.train.sample_len,
    ))?;
    let trainer = config.trainer(config.composite_augmentor()?);
    let plan = TrialPlan {
        method: config.mode.to_string(),
        model: &model,
        labeled: &prepared.labeled,
        unlabeled: &prepared.unlabeled,
        test_signals: &prepared.test_signals,
        test_labels: &prepared.test_labels,
        trainer,
    };
    let outcome = run_trials(&plan, config.trials, config.seed)?;

    ensure_dir(out_dir)?;
    write_trials_csv(&out_dir.join("trials.csv"), &outcome.rows)?;
    write_summary_csv(&out_dir.join("summary.csv"), &outcome.rows)?;
    let log_refs: Vec<(usize, &[rffp_core::semisup::EpochRecord])> = outcome
        .logs
        .iter()
        .map(|(t, l)| (*t, l.as_slice()))
        .collect();
    write_epochs_csv(&out_dir.join("epochs.csv"), &log_refs)?;

    let ok: Vec<f64> = outcome.rows.iter().filter_map(|r| r.accuracy).collect();
    if let Some((trial, acc, params)) = &outcome.best {
        save_checkpoint(&out_dir.join("checkpoint.ckpt"), model.config(), params)?;
        println!("best trial {trial}: accuracy {acc:.4} (checkpoint.ckpt)");
    }
    if ok.is_empty() {
        return Err(Error::config(format!(
            "all {} trials failed; see epochs.csv",
            outcome.rows.len()
        )));
    }
    let (mean, std) = mean_std(&ok);
    println!(
        "{}: accuracy {:.2} +/- {:.2} % over {} trials ({} failed)",
        config.mode,
        100.0 * mean,
        100.0 * std,
        outcome.rows.len(),
        outcome.rows.len() - ok.len()
    );
    Ok(())
}

pub fn cmd_eval(checkpoint: &Path, dataset_path: &Path, out_dir: &Path) -> Result<()> {
    let (model, params) = load_checkpoint(checkpoint)?;
    let dataset = rffp_core::dataio::load_dataset(dataset_path)?;
    if dataset.sample_len != model.config().input_len {
        return Err(Error::config(format!(
            "dataset sample length {} does not match model input {}",
            dataset.sample_len,
            model.config().input_len
        )));
    }
    if dataset.num_devices as usize != model.config().num_classes {
        return Err(Error::config(format!(
            "dataset has {} devices, model has {} classes",
            dataset.num_devices,
            model.config().num_classes
        )));
    }
    let signals: Vec<&rffp_core::ComplexSignal> =
        dataset.records.iter().map(|r| &r.signal).collect();
    let labels: Vec<u16> = dataset.records.iter().map(|r| r.label).collect();
    let accuracy = evaluate(&model, &params, &signals, &labels)?;
    let confusion = confusion_matrix(&model, &params, &signals, &labels)?;

    ensure_dir(out_dir)?;
    let classes = model.config().num_classes;
    let mut csv = String::from("truth");
    for c in 0..classes {
        csv.push_str(&format!(",pred_{c}"));
    }
    csv.push('\n');
    for truth in 0..classes {
        csv.push_str(&truth.to_string());
        for pred in 0..classes {
            csv.push_str(&format!(",{}", confusion[[truth, pred]]));
        }
        csv.push('\n');
    }
    std::fs::write(out_dir.join("confusion.csv"), csv)?;
    println!("accuracy {:.4} over {} records", accuracy, dataset.records.len());
    Ok(())
}

pub fn cmd_gridsearch(
    config: &ExperimentConfig,
    data_dir: &Path,
    out_dir: &Path,
    kappas: &[f64],
    taus: &[f64],
) -> Result<()> {
    if kappas.is_empty() || taus.is_empty() {
        return Err(Error::config("kappa and tau grids must be non-empty"));
    }
    let data = load_split_dir(data_dir)?;
    let prepared = prepare(
        &data,
        config.labeled_per_device,
        config.unlabeled_per_device,
        config.seed,
    )?;
    let model = Resnet1d::new(config.model(
        data.train.num_devices as usize,
        data.train.sample_len,
    ))?;

    ensure_dir(out_dir)?;
    let mut all_rows: Vec<ResultRow> = Vec::new();
    let mut cells = String::from("schema,kappa,tau,trials,failures,mean_accuracy,std_accuracy\n");
    let mut matrix = vec![vec![f64::NAN; taus.len()]; kappas.len()];
    let mut best: Option<(f64, f64, f64)> = None;

    for (ki, &kappa) in kappas.iter().enumerate() {
        for (ti, &tau) in taus.iter().enumerate() {
            let mut cell_config = config.clone();
            cell_config.mode = TrainingMode::Proposal;
            cell_config.kappa = kappa;
            cell_config.tau = tau;
            let trainer = cell_config.trainer(cell_config.composite_augmentor()?);
            trainer.validate()?;
            let plan = TrialPlan {
                method: format!("proposal[kappa={kappa},tau={tau}]"),
                model: &model,
                labeled: &prepared.labeled,
                unlabeled: &prepared.unlabeled,
                test_signals: &prepared.test_signals,
                test_labels: &prepared.test_labels,
                trainer,
            };
            // Identical per-trial seeds in every cell: paired comparisons.
            let outcome = run_trials(&plan, config.trials, config.seed)?;
            let ok: Vec<f64> = outcome.rows.iter().filter_map(|r| r.accuracy).collect();
            let failures = outcome.rows.len() - ok.len();
            let (mean, std) = if ok.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                mean_std(&ok)
            };
            matrix[ki][ti] = mean;
            cells.push_str(&format!(
                "grid-v1,{kappa},{tau},{},{failures},{mean},{std}\n",
                outcome.rows.len()
            ));
            println!("kappa={kappa} tau={tau}: mean accuracy {mean:.4} ({failures} failed)");
            // Ties break toward lower kappa, then lower tau (iteration
            // order guarantees it with a strict comparison).
            if mean.is_finite() && best.map_or(true, |(_, _, b)| mean > b) {
                best = Some((kappa, tau, mean));
            }
            all_rows.extend(outcome.rows);
        }
    }

    let mut grid = String::from("kappa\\tau");
    for &tau in taus {
        grid.push_str(&format!(",{tau}"));
    }
    grid.push('\n');
    for (ki, &kappa) in kappas.iter().enumerate() {
        grid.push_str(&kappa.to_string());
        for ti in 0..taus.len() {
            grid.push_str(&format!(",{}", matrix[ki][ti]));
        }
        grid.push('\n');
    }
    std::fs::write(out_dir.join("grid.csv"), grid)?;
    std::fs::write(out_dir.join("grid_cells.csv"), cells)?;
    write_trials_csv(&out_dir.join("trials.csv"), &all_rows)?;
    match best {
        Some((kappa, tau, mean)) => {
            std::fs::write(
                out_dir.join("best.json"),
                serde_json::to_vec_pretty(&serde_json::json!({
                    "kappa": kappa, "tau": tau, "mean_accuracy": mean
                }))?,
            )?;
            println!("best cell: kappa={kappa} tau={tau} (mean accuracy {mean:.4})");
        }
        None => println!("no cell produced a successful trial"),
    }
    Ok(())
}

/// Ablation variants accepted on the command line.
pub fn parse_variants(names: &str, k_list: &[usize], noise_sigma: f64) -> Result<Vec<(String, Augmentor)>> {
    let mut out = Vec::new();
    for name in names.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match name {
            "none" => out.push(("none".into(), Augmentor::None)),
            "rotation" => out.push((
                "rotation".into(),
                Augmentor::Rotation {
                    modulation: rffp_core::Modulation::Qpsk,
                },
            )),
            "flipping" => out.push(("flipping".into(), Augmentor::Flipping)),
            "noise" => out.push((
                format!("noise(sigma={noise_sigma})"),
                Augmentor::Noise { sigma: noise_sigma },
            )),
            "permutation" => {
                for &k in k_list {
                    out.push((
                        format!("permutation(k={k})"),
                        Augmentor::Permutation { k },
                    ));
                }
            }
            "composite" => out.push(("composite".into(), Augmentor::None)), // spec filled in below
            other => {
                return Err(Error::config(format!("unknown ablation variant `{other}`")))
            }
        }
    }
    if out.is_empty() {
        return Err(Error::config("variant list is empty"));
    }
    Ok(out)
}

pub fn cmd_ablate(
    config: &ExperimentConfig,
    data_dir: &Path,
    out_dir: &Path,
    variants: &str,
    k_list: &[usize],
    noise_sigma: f64,
) -> Result<()> {
    let data = load_split_dir(data_dir)?;
    let prepared = prepare(
        &data,
        config.labeled_per_device,
        config.unlabeled_per_device,
        config.seed,
    )?;
    let model = Resnet1d::new(config.model(
        data.train.num_devices as usize,
        data.train.sample_len,
    ))?;

    let mut parsed = parse_variants(variants, k_list, noise_sigma)?;
    for (name, augmentor) in &mut parsed {
        if name == "composite" {
            let spec = AugmentationSpec::new(config.modulation, config.k_segments, false)?;
            spec.validate_for(data.train.sample_len, config.sps)?;
            *augmentor = Augmentor::Composite(spec);
        }
        if let Augmentor::Rotation { modulation } = augmentor {
            *modulation = config.modulation;
        }
        if let Augmentor::Permutation { k } = augmentor {
            if *k > data.train.sample_len / config.sps {
                return Err(Error::config(format!(
                    "permutation k = {k} exceeds sample_len/sps"
                )));
            }
        }
    }

    ensure_dir(out_dir)?;
    let mut all_rows = Vec::new();
    for (name, augmentor) in parsed {
        let mut variant_config = config.clone();
        variant_config.mode = TrainingMode::Supervised;
        let trainer = variant_config.trainer(augmentor);
        let plan = TrialPlan {
            method: name.clone(),
            model: &model,
            labeled: &prepared.labeled,
            unlabeled: &prepared.unlabeled,
            test_signals: &prepared.test_signals,
            test_labels: &prepared.test_labels,
            trainer,
        };
        // Same seeds for every variant: paired comparisons.
        let outcome = run_trials(&plan, config.trials, config.seed)?;
        let ok: Vec<f64> = outcome.rows.iter().filter_map(|r| r.accuracy).collect();
        let mean = if ok.is_empty() {
            f64::NAN
        } else {
            mean_std(&ok).0
        };
        println!("{name}: mean accuracy {mean:.4}");
        all_rows.extend(outcome.rows);
    }
    write_trials_csv(&out_dir.join("ablate_trials.csv"), &all_rows)?;
    write_summary_csv(&out_dir.join("ablate_summary.csv"), &all_rows)?;
    Ok(())
}
