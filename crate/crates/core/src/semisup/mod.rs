//! Semi-supervised training.
//!
//! Each step sums a supervised cross-entropy over augmented labeled
//! examples and an unsupervised cross-entropy over the current
//! pseudo-labeled set (unit weighting). The pseudo-labeled set is rebuilt
//! at every epoch end: each unlabeled sample is perturbed, its prediction
//! blended with the previous epoch's via the kappa weighting, and kept
//! when the blended confidence clears the threshold. A supervised-only
//! mode and a FixMatch-style mode exist for comparisons.

use ndarray::{Array1, Array2, Array3};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{AugmentationSpec, Augmentor};
use crate::error::{Error, Result};
use crate::nn::{cross_entropy, AdamState, Gradients, Parameters, Resnet1d};
use crate::seed::{derive_rng, stream_id};
use crate::signal::ComplexSignal;

/// Thresholding is strict (`confidence > tau`); a threshold of 1.0 is a
/// sentinel that retains nothing.
pub const PSEUDO_LABEL_STRICT: bool = true;

fn passes_threshold(confidence: f64, tau: f64) -> bool {
    if PSEUDO_LABEL_STRICT {
        confidence > tau
    } else {
        confidence >= tau
    }
}

/// A signal with its ground-truth label.
#[derive(Debug, Clone)]
pub struct LabeledExample {
    pub signal: ComplexSignal,
    pub label: u16,
}

/// The labeled set S (M examples per device).
#[derive(Debug, Clone)]
pub struct LabeledSet {
    pub examples: Vec<LabeledExample>,
    pub num_classes: usize,
}

impl LabeledSet {
    pub fn new(examples: Vec<LabeledExample>, num_classes: usize) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::config("labeled set is empty"));
        }
        let mut counts = vec![0usize; num_classes];
        for e in &examples {
            if e.label as usize >= num_classes {
                return Err(Error::config("labeled example with out-of-range label"));
            }
            counts[e.label as usize] += 1;
        }
        if counts.iter().any(|&c| c != counts[0]) {
            return Err(Error::config("labeled set must be class-balanced"));
        }
        Ok(Self {
            examples,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// An unlabeled sample; the true label, when known, is used only for
/// diagnostic logging.
#[derive(Debug, Clone)]
pub struct UnlabeledSample {
    pub id: u32,
    pub signal: ComplexSignal,
    pub withheld_label: Option<u16>,
}

/// The unlabeled set U with stable sample ids.
#[derive(Debug, Clone)]
pub struct UnlabeledSet {
    pub samples: Vec<UnlabeledSample>,
}

impl UnlabeledSet {
    pub fn new(samples: Vec<UnlabeledSample>) -> Result<Self> {
        let mut ids: Vec<u32> = samples.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != samples.len() {
            return Err(Error::config("unlabeled sample ids must be unique"));
        }
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// One retained pseudo-label.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabel {
    /// Index into the unlabeled set.
    pub sample_index: usize,
    pub label: u16,
    pub confidence: f64,
}

/// The pseudo-labeled set rebuilt at each epoch end.
#[derive(Debug, Clone, Default)]
pub struct PseudoLabeledSet {
    pub entries: Vec<PseudoLabel>,
}

impl PseudoLabeledSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Previous-epoch perturbed predictions, indexed by unlabeled sample
/// position. Starts at the zero vector, which suppresses epoch-one
/// pseudo-labels whenever `kappa >= 1 - tau`.
#[derive(Debug, Clone)]
pub struct PredictionMemory {
    predictions: Vec<Array1<f32>>,
}

impl PredictionMemory {
    pub fn zeros(num_samples: usize, num_classes: usize) -> Self {
        Self {
            predictions: vec![Array1::zeros(num_classes); num_samples],
        }
    }

    pub fn get(&self, index: usize) -> &Array1<f32> {
        &self.predictions[index]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    Supervised,
    Proposal,
    Fixmatch,
}

impl std::fmt::Display for TrainingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TrainingMode::Supervised => "supervised",
            TrainingMode::Proposal => "proposal",
            TrainingMode::Fixmatch => "fixmatch",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for TrainingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "supervised" => Ok(TrainingMode::Supervised),
            "proposal" => Ok(TrainingMode::Proposal),
            "fixmatch" => Ok(TrainingMode::Fixmatch),
            other => Err(Error::config(format!("unknown training mode `{other}`"))),
        }
    }
}

/// Hyper-parameters of the training loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    pub mode: TrainingMode,
    /// Prediction-memory weighting, in [0, 1).
    pub kappa: f64,
    /// Pseudo-label confidence threshold, in [0.5, 1].
    pub tau: f64,
    pub epochs: usize,
    pub labeled_batch: usize,
    pub pseudo_batch: usize,
    pub learning_rate: f64,
    /// Labeled-data augmentation and unlabeled perturbation (identity
    /// rotation is excluded automatically for the perturbation).
    pub augment: Augmentor,
    /// FixMatch weak branch.
    pub weak_augment: Augmentor,
    /// Evaluate on the held-out set every epoch (slower) instead of only
    /// at the end.
    pub eval_every_epoch: bool,
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.kappa) {
            return Err(Error::config("kappa must lie in [0, 1)"));
        }
        if !(0.5..=1.0).contains(&self.tau) {
            return Err(Error::config("tau must lie in [0.5, 1]"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be positive"));
        }
        if self.labeled_batch == 0 || self.pseudo_batch == 0 {
            return Err(Error::config("batch sizes must be positive"));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::config("learning rate must be positive"));
        }
        Ok(())
    }
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            mode: TrainingMode::Proposal,
            kappa: 0.5,
            tau: 0.7,
            epochs: 40,
            labeled_batch: 8,
            pseudo_batch: 32,
            learning_rate: 3e-4,
            augment: Augmentor::None,
            weak_augment: Augmentor::None,
            eval_every_epoch: false,
        }
    }
}

/// One epoch of the structured training log.
#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_supervised: f64,
    pub loss_unsupervised: f64,
    pub pseudo_count: usize,
    /// Fraction of retained pseudo-labels matching withheld truth, when
    /// available.
    pub pseudo_accuracy: Option<f64>,
    pub eval_accuracy: Option<f64>,
}

/// Trained parameters plus the per-epoch log.
pub struct TrainOutput {
    pub params: Parameters<f32>,
    pub log: Vec<EpochRecord>,
    pub final_eval_accuracy: Option<f64>,
}

/// Converts signals to the network's `(batch, 2, len)` input layout.
pub fn signals_to_batch(signals: &[&ComplexSignal]) -> Array3<f32> {
    let bsz = signals.len();
    let len = signals[0].len();
    let mut x = Array3::zeros((bsz, 2, len));
    for (b, s) in signals.iter().enumerate() {
        for (t, v) in s.samples().iter().enumerate() {
            x[[b, 0, t]] = v.re as f32;
            x[[b, 1, t]] = v.im as f32;
        }
    }
    x
}

/// Mean cross-entropy of the model on freshly-augmented labeled examples,
/// with its gradient contribution and pending running-stat updates.
pub fn supervised_loss<R: Rng + ?Sized>(
    model: &Resnet1d,
    params: &Parameters<f32>,
    batch: &[&LabeledExample],
    augment: &Augmentor,
    rng: &mut R,
) -> Result<(f64, Gradients<f32>, Vec<crate::nn::RunningUpdate<f32>>)> {
    let augmented: Vec<ComplexSignal> = batch
        .iter()
        .map(|e| augment.apply(&e.signal, rng))
        .collect::<Result<_>>()?;
    let refs: Vec<&ComplexSignal> = augmented.iter().collect();
    let x = signals_to_batch(&refs);
    let targets: Vec<usize> = batch.iter().map(|e| e.label as usize).collect();
    let pass = model.forward_cached(params, &x)?;
    let loss = cross_entropy(&pass.probs, &targets);
    let grads = model.backward(params, &pass.cache, &targets);
    Ok((loss, grads, pass.running_updates))
}

/// Mean cross-entropy of the model on unaugmented pseudo-labeled samples
/// (consistency is enforced against the sample itself).
pub fn unsupervised_loss(
    model: &Resnet1d,
    params: &Parameters<f32>,
    pseudo_batch: &[&PseudoLabel],
    unlabeled: &UnlabeledSet,
) -> Result<(f64, Gradients<f32>, Vec<crate::nn::RunningUpdate<f32>>)> {
    if pseudo_batch.is_empty() {
        return Ok((0.0, Gradients::zeros_like(params), Vec::new()));
    }
    let refs: Vec<&ComplexSignal> = pseudo_batch
        .iter()
        .map(|p| &unlabeled.samples[p.sample_index].signal)
        .collect();
    let x = signals_to_batch(&refs);
    let targets: Vec<usize> = pseudo_batch.iter().map(|p| p.label as usize).collect();
    let pass = model.forward_cached(params, &x)?;
    let loss = cross_entropy(&pass.probs, &targets);
    let grads = model.backward(params, &pass.cache, &targets);
    Ok((loss, grads, pass.running_updates))
}

/// Rebuilds the pseudo-labeled set from scratch.
///
/// For sample `i`: perturb with the identity-excluded composite transform,
/// predict, blend `kappa * previous + (1 - kappa) * current`, and retain
/// the argmax when the blended confidence clears `tau`. The memory is
/// updated to the current prediction for every sample, retained or not.
pub fn rebuild_pseudo_labels(
    model: &Resnet1d,
    params: &Parameters<f32>,
    unlabeled: &UnlabeledSet,
    memory: &PredictionMemory,
    kappa: f64,
    tau: f64,
    perturb: &AugmentationSpec,
    epoch: u32,
    seed: u64,
) -> Result<(PseudoLabeledSet, PredictionMemory)> {
    let perturb = AugmentationSpec {
        exclude_identity_rotation: true,
        ..perturb.clone()
    };
    let n = unlabeled.len();
    let classes = model.config().num_classes;

    // Chunked inference; per-sample perturbation RNG streams keyed by
    // (epoch, sample index) keep the result independent of chunking.
    const CHUNK: usize = 256;
    use rayon::prelude::*;
    let chunk_preds: Vec<Array2<f32>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk_idx| {
            let lo = chunk_idx * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let perturbed: Vec<ComplexSignal> = (lo..hi)
                .map(|i| {
                    let mut rng: ChaCha8Rng = derive_rng(seed, stream_id(epoch, i as u32));
                    crate::augment::composite_augment(
                        &unlabeled.samples[i].signal,
                        &perturb,
                        &mut rng,
                    )
                })
                .collect::<Result<_>>()?;
            let refs: Vec<&ComplexSignal> = perturbed.iter().collect();
            model.predict(params, &signals_to_batch(&refs))
        })
        .collect::<Result<_>>()?;

    let kappa_f = kappa as f32;
    let mut entries = Vec::new();
    let mut new_memory = Vec::with_capacity(n);
    for i in 0..n {
        let current = chunk_preds[i / CHUNK].row(i % CHUNK).to_owned();
        let previous = memory.get(i);
        let mut best_class = 0usize;
        let mut best = f32::NEG_INFINITY;
        for c in 0..classes {
            let blended = kappa_f * previous[c] + (1.0 - kappa_f) * current[c];
            if blended > best {
                best = blended;
                best_class = c;
            }
        }
        if passes_threshold(best as f64, tau) {
            entries.push(PseudoLabel {
                sample_index: i,
                label: best_class as u16,
                confidence: best as f64,
            });
        }
        new_memory.push(current);
    }
    Ok((
        PseudoLabeledSet { entries },
        PredictionMemory {
            predictions: new_memory,
        },
    ))
}

/// One FixMatch step's unsupervised contribution: pseudo-labels from the
/// weak branch, consistency cross-entropy on the strong branch, averaged
/// over the full unlabeled batch.
pub fn fixmatch_step<R: Rng + ?Sized>(
    model: &Resnet1d,
    params: &Parameters<f32>,
    unlabeled_batch: &[&ComplexSignal],
    weak: &Augmentor,
    strong: &Augmentor,
    tau: f64,
    rng: &mut R,
) -> Result<(f64, Gradients<f32>, Vec<crate::nn::RunningUpdate<f32>>)> {
    let batch = unlabeled_batch.len();
    let weak_signals: Vec<ComplexSignal> = unlabeled_batch
        .iter()
        .map(|s| weak.apply(s, rng))
        .collect::<Result<_>>()?;
    let weak_refs: Vec<&ComplexSignal> = weak_signals.iter().collect();
    let weak_probs = model.predict(params, &signals_to_batch(&weak_refs))?;

    let mut mask = vec![false; batch];
    let mut labels = vec![0usize; batch];
    let mut retained = 0usize;
    for b in 0..batch {
        let row = weak_probs.row(b);
        let (mut best_c, mut best) = (0usize, f32::NEG_INFINITY);
        for (c, &p) in row.iter().enumerate() {
            if p > best {
                best = p;
                best_c = c;
            }
        }
        if passes_threshold(best as f64, tau) {
            mask[b] = true;
            labels[b] = best_c;
            retained += 1;
        }
    }
    if retained == 0 {
        return Ok((0.0, Gradients::zeros_like(params), Vec::new()));
    }

    let strong_signals: Vec<ComplexSignal> = unlabeled_batch
        .iter()
        .map(|s| strong.apply(s, rng))
        .collect::<Result<_>>()?;
    let strong_refs: Vec<&ComplexSignal> = strong_signals.iter().collect();
    let pass = model.forward_cached(params, &signals_to_batch(&strong_refs))?;

    // Masked cross-entropy normalized by the full batch size.
    let mut loss = 0.0;
    let mut dlogits = pass.probs.clone();
    for b in 0..batch {
        if mask[b] {
            let p = pass.probs[[b, labels[b]]] as f64;
            loss -= p.max(crate::nn::PROB_CLAMP).ln();
            dlogits[[b, labels[b]]] -= 1.0;
        } else {
            for c in 0..model.config().num_classes {
                dlogits[[b, c]] = 0.0;
            }
        }
    }
    loss /= batch as f64;
    let scale = 1.0 / batch as f32;
    dlogits.mapv_inplace(|v| v * scale);
    let grads = model.backward_from_dlogits(params, &pass.cache, &dlogits);
    Ok((loss, grads, pass.running_updates))
}

/// Argmax accuracy on a held-out set; ties break toward the lowest class
/// index.
pub fn evaluate(
    model: &Resnet1d,
    params: &Parameters<f32>,
    signals: &[&ComplexSignal],
    labels: &[u16],
) -> Result<f64> {
    if signals.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    assert_eq!(signals.len(), labels.len());
    const CHUNK: usize = 256;
    use rayon::prelude::*;
    let hits: Vec<usize> = signals
        .par_chunks(CHUNK)
        .zip(labels.par_chunks(CHUNK))
        .map(|(sig_chunk, label_chunk)| {
            let probs = model.predict(params, &signals_to_batch(sig_chunk))?;
            let mut hits = 0usize;
            for (b, &truth) in label_chunk.iter().enumerate() {
                let row = probs.row(b);
                let (mut best_c, mut best) = (0usize, f32::NEG_INFINITY);
                for (c, &p) in row.iter().enumerate() {
                    if p > best {
                        best = p;
                        best_c = c;
                    }
                }
                if best_c == truth as usize {
                    hits += 1;
                }
            }
            Ok(hits)
        })
        .collect::<Result<_>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / signals.len() as f64)
}

/// Per-class confusion counts; rows are truth, columns are predictions.
pub fn confusion_matrix(
    model: &Resnet1d,
    params: &Parameters<f32>,
    signals: &[&ComplexSignal],
    labels: &[u16],
) -> Result<Array2<u64>> {
    if signals.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let classes = model.config().num_classes;
    let mut matrix = Array2::zeros((classes, classes));
    const CHUNK: usize = 256;
    for (sig_chunk, label_chunk) in signals.chunks(CHUNK).zip(labels.chunks(CHUNK)) {
        let probs = model.predict(params, &signals_to_batch(sig_chunk))?;
        for (b, &truth) in label_chunk.iter().enumerate() {
            let row = probs.row(b);
            let (mut best_c, mut best) = (0usize, f32::NEG_INFINITY);
            for (c, &p) in row.iter().enumerate() {
                if p > best {
                    best = p;
                    best_c = c;
                }
            }
            matrix[[truth as usize, best_c]] += 1;
        }
    }
    Ok(matrix)
}

/// Draws class-balanced pseudo-label mini-batches.
///
/// Each batch reserves an equal share of slots per class; classes with no
/// retained pseudo-labels leave their slots empty. The filled fraction
/// weights the unsupervised term, so its strength ramps with class
/// coverage and a single over-confident class cannot monopolize the
/// gradient (which otherwise captures the classifier at small scales).
/// At full coverage this is an even-prior estimator of the pseudo-label
/// objective, matching the class-balanced unlabeled pool.
struct StratifiedPseudoSampler {
    by_class: Vec<Vec<usize>>,
    cursors: Vec<usize>,
}

impl StratifiedPseudoSampler {
    fn new<R: Rng + ?Sized>(pseudo: &PseudoLabeledSet, num_classes: usize, rng: &mut R) -> Self {
        let mut by_class = vec![Vec::new(); num_classes];
        for (i, entry) in pseudo.entries.iter().enumerate() {
            by_class[entry.label as usize].push(i);
        }
        for class in &mut by_class {
            class.shuffle(rng);
        }
        Self {
            cursors: vec![0; num_classes],
            by_class,
        }
    }

    /// The next batch of entry indices plus the weight `filled / batch`.
    fn draw(&mut self, batch: usize) -> Option<(Vec<usize>, f64)> {
        let classes = self.by_class.len();
        let mut out = Vec::with_capacity(batch);
        for k in 0..batch {
            let class = k % classes;
            let pool = &self.by_class[class];
            if pool.is_empty() {
                continue;
            }
            let cursor = &mut self.cursors[class];
            out.push(pool[*cursor % pool.len()]);
            *cursor += 1;
        }
        if out.is_empty() {
            return None;
        }
        let weight = out.len() as f64 / batch as f64;
        Some((out, weight))
    }
}

/// The full training loop (Algorithm-1 style for the proposal mode).
///
/// Runs `config.epochs` epochs of `ceil(|S| / labeled_batch)` steps. Each
/// step sums the supervised loss and, in proposal mode, the unsupervised
/// loss over a pseudo-labeled mini-batch; the total gradient drives one
/// Adam update. Proposal mode rebuilds the pseudo-labeled set at each
/// epoch end. A non-finite loss aborts the trial with the failing epoch.
pub fn train(
    model: &Resnet1d,
    init_params: Parameters<f32>,
    labeled: &LabeledSet,
    unlabeled: &UnlabeledSet,
    eval_set: Option<(&[&ComplexSignal], &[u16])>,
    config: &TrainerConfig,
    seed: u64,
) -> Result<TrainOutput> {
    config.validate()?;
    let perturb_spec = match &config.augment {
        Augmentor::Composite(spec) => spec.clone(),
        _ => AugmentationSpec::new(crate::sigsim::Modulation::Qpsk, 2, true)?,
    };

    let mut params = init_params;
    let mut adam = AdamState::new(&params);
    let mut shuffle_rng = derive_rng(seed, 1);
    let mut aug_rng = derive_rng(seed, 2);
    let rebuild_seed = derive_seed(seed, 3);

    let mut memory = PredictionMemory::zeros(unlabeled.len(), model.config().num_classes);
    let mut pseudo = PseudoLabeledSet::default();
    let mut log = Vec::with_capacity(config.epochs);

    let steps_per_epoch = labeled.len().div_ceil(config.labeled_batch);
    let mut labeled_order: Vec<usize> = (0..labeled.len()).collect();
    let mut unlabeled_cursor = 0usize;
    let mut unlabeled_order: Vec<usize> = (0..unlabeled.len()).collect();

    for epoch in 1..=config.epochs {
        labeled_order.shuffle(&mut shuffle_rng);
        let mut pseudo_sampler =
            StratifiedPseudoSampler::new(&pseudo, model.config().num_classes, &mut shuffle_rng);

        let mut epoch_ls = 0.0;
        let mut epoch_lu = 0.0;
        for step in 0..steps_per_epoch {
            let lo = step * config.labeled_batch;
            let hi = (lo + config.labeled_batch).min(labeled.len());
            let batch: Vec<&LabeledExample> = labeled_order[lo..hi]
                .iter()
                .map(|&i| &labeled.examples[i])
                .collect();
            let (ls, mut grads, updates) =
                supervised_loss(model, &params, &batch, &config.augment, &mut aug_rng)
                    .map_err(|e| mark_failed(e, epoch))?;
            model.apply_running_updates(&mut params, &updates);

            let lu = match config.mode {
                TrainingMode::Supervised => 0.0,
                TrainingMode::Proposal => match pseudo_sampler.draw(config.pseudo_batch) {
                    None => 0.0,
                    Some((batch_indices, weight)) => {
                        let batch: Vec<&PseudoLabel> =
                            batch_indices.iter().map(|&i| &pseudo.entries[i]).collect();
                        let (lu, mut g_u, updates) =
                            unsupervised_loss(model, &params, &batch, unlabeled)
                                .map_err(|e| mark_failed(e, epoch))?;
                        model.apply_running_updates(&mut params, &updates);
                        g_u.scale(weight as f32);
                        grads.add_assign(&g_u);
                        lu * weight
                    }
                },
                TrainingMode::Fixmatch => {
                    if unlabeled.is_empty() {
                        0.0
                    } else {
                        let take = config.pseudo_batch.min(unlabeled.len());
                        if unlabeled_cursor == 0 {
                            unlabeled_order.shuffle(&mut shuffle_rng);
                        }
                        let batch: Vec<&ComplexSignal> = (0..take)
                            .map(|k| {
                                let idx = unlabeled_order[(unlabeled_cursor + k) % unlabeled.len()];
                                &unlabeled.samples[idx].signal
                            })
                            .collect();
                        unlabeled_cursor = (unlabeled_cursor + take) % unlabeled.len();
                        let (lu, g_u, updates) = fixmatch_step(
                            model,
                            &params,
                            &batch,
                            &config.weak_augment,
                            &config.augment,
                            config.tau,
                            &mut aug_rng,
                        )
                        .map_err(|e| mark_failed(e, epoch))?;
                        model.apply_running_updates(&mut params, &updates);
                        grads.add_assign(&g_u);
                        lu
                    }
                }
            };

            let total = ls + lu;
            if !total.is_finite() {
                return Err(Error::TrainingFailed { epoch });
            }
            adam.step(&mut params, &grads, config.learning_rate);
            epoch_ls += ls;
            epoch_lu += lu;
        }

        let mut pseudo_accuracy = None;
        if config.mode == TrainingMode::Proposal {
            let (new_pseudo, new_memory) = rebuild_pseudo_labels(
                model,
                &params,
                unlabeled,
                &memory,
                config.kappa,
                config.tau,
                &perturb_spec,
                epoch as u32,
                rebuild_seed,
            )
            .map_err(|e| mark_failed(e, epoch))?;
            pseudo = new_pseudo;
            memory = new_memory;
            pseudo_accuracy = diagnostic_accuracy(&pseudo, unlabeled);
        }

        let eval_accuracy = match (&eval_set, config.eval_every_epoch || epoch == config.epochs) {
            (Some((signals, labels)), true) => Some(evaluate(model, &params, signals, labels)?),
            _ => None,
        };

        log.push(EpochRecord {
            epoch,
            loss_supervised: epoch_ls / steps_per_epoch as f64,
            loss_unsupervised: epoch_lu / steps_per_epoch as f64,
            pseudo_count: pseudo.len(),
            pseudo_accuracy,
            eval_accuracy,
        });
    }

    let final_eval_accuracy = log.last().and_then(|r| r.eval_accuracy);
    Ok(TrainOutput {
        params,
        log,
        final_eval_accuracy,
    })
}

/// A non-finite activation or loss inside an epoch marks the trial
/// failed at that epoch.
fn mark_failed(err: Error, epoch: usize) -> Error {
    match err {
        Error::NumericFailure { .. } => Error::TrainingFailed { epoch },
        other => other,
    }
}

/// Fraction of retained pseudo-labels that match withheld ground truth.
fn diagnostic_accuracy(pseudo: &PseudoLabeledSet, unlabeled: &UnlabeledSet) -> Option<f64> {
    if pseudo.is_empty() {
        return None;
    }
    let mut known = 0usize;
    let mut correct = 0usize;
    for p in &pseudo.entries {
        if let Some(truth) = unlabeled.samples[p.sample_index].withheld_label {
            known += 1;
            if truth == p.label {
                correct += 1;
            }
        }
    }
    (known > 0).then(|| correct as f64 / known as f64)
}

fn derive_seed(master: u64, stream: u64) -> u64 {
    use rand::Rng;
    derive_rng(master, stream).random()
}

/// [`train`] with parameters freshly initialized from stream 0 of `seed`.
pub fn train_from_seed(
    model: &Resnet1d,
    labeled: &LabeledSet,
    unlabeled: &UnlabeledSet,
    eval_set: Option<(&[&ComplexSignal], &[u16])>,
    config: &TrainerConfig,
    seed: u64,
) -> Result<TrainOutput> {
    let params: Parameters<f32> = model.init_params(&mut derive_rng(seed, 0));
    train(model, params, labeled, unlabeled, eval_set, config, seed)
}

/// The spec'd total objective: supervised plus unsupervised, unit
/// weighting.
pub fn total_loss(loss_supervised: f64, loss_unsupervised: f64) -> f64 {
    loss_supervised + loss_unsupervised
}

#[cfg(test)]
mod tests;
