use super::*;
use crate::nn::{Mode, ModelConfig, Scalar};
use crate::sigsim::Modulation;
use num_complex::Complex64;

fn tiny_model(classes: usize) -> Resnet1d {
    Resnet1d::new(ModelConfig {
        num_conv_blocks: 1,
        stem_kernels: 8,
        base_channels: 8,
        num_classes: classes,
        input_len: 64,
        ..ModelConfig::default()
    })
    .unwrap()
}

/// Class `c` is a complex tone at its own frequency plus light noise.
fn toy_signal(class: usize, len: usize, rng: &mut ChaCha8Rng) -> ComplexSignal {
    let freq = 0.05 + 0.11 * class as f64;
    ComplexSignal::new(
        (0..len)
            .map(|t| {
                let tone = Complex64::from_polar(1.0, std::f64::consts::TAU * freq * t as f64);
                let noise = Complex64::new(
                    0.05 * f64::randn(rng),
                    0.05 * f64::randn(rng),
                );
                tone + noise
            })
            .collect(),
    )
    .unwrap()
}

fn toy_labeled(per_class: usize, classes: usize, len: usize, seed: u64) -> LabeledSet {
    let mut rng = derive_rng(seed, 0);
    let mut examples = Vec::new();
    for c in 0..classes {
        for _ in 0..per_class {
            examples.push(LabeledExample {
                signal: toy_signal(c, len, &mut rng),
                label: c as u16,
            });
        }
    }
    LabeledSet::new(examples, classes).unwrap()
}

fn toy_unlabeled(per_class: usize, classes: usize, len: usize, seed: u64) -> UnlabeledSet {
    let mut rng = derive_rng(seed, 1);
    let mut samples = Vec::new();
    for c in 0..classes {
        for _ in 0..per_class {
            samples.push(UnlabeledSample {
                id: samples.len() as u32,
                signal: toy_signal(c, len, &mut rng),
                withheld_label: Some(c as u16),
            });
        }
    }
    UnlabeledSet::new(samples).unwrap()
}

fn base_config(mode: TrainingMode) -> TrainerConfig {
    TrainerConfig {
        mode,
        epochs: 5,
        labeled_batch: 8,
        pseudo_batch: 8,
        learning_rate: 3e-3,
        augment: Augmentor::None,
        ..TrainerConfig::default()
    }
}

#[test]
fn supervised_loss_with_identity_augment_is_plain_cross_entropy() {
    let model = tiny_model(3);
    let params: Parameters<f32> = model.init_params(&mut derive_rng(1, 0));
    let labeled = toy_labeled(4, 3, 64, 2);
    let batch: Vec<&LabeledExample> = labeled.examples.iter().collect();
    let (loss, _, _) = supervised_loss(
        &model,
        &params,
        &batch,
        &Augmentor::None,
        &mut derive_rng(1, 1),
    )
    .unwrap();

    let refs: Vec<&ComplexSignal> = labeled.examples.iter().map(|e| &e.signal).collect();
    let pass = model
        .forward_cached(&params, &signals_to_batch(&refs))
        .unwrap();
    let targets: Vec<usize> = labeled.examples.iter().map(|e| e.label as usize).collect();
    let direct = cross_entropy(&pass.probs, &targets);
    assert!((loss - direct).abs() < 1e-12);
}

#[test]
fn supervised_loss_is_batch_order_invariant() {
    let model = tiny_model(3);
    let params: Parameters<f32> = model.init_params(&mut derive_rng(3, 0));
    let labeled = toy_labeled(4, 3, 64, 4);
    let forward: Vec<&LabeledExample> = labeled.examples.iter().collect();
    let reversed: Vec<&LabeledExample> = labeled.examples.iter().rev().collect();
    let (a, _, _) = supervised_loss(&model, &params, &forward, &Augmentor::None, &mut derive_rng(3, 1)).unwrap();
    let (b, _, _) = supervised_loss(&model, &params, &reversed, &Augmentor::None, &mut derive_rng(3, 2)).unwrap();
    assert!((a - b).abs() < 1e-9);
}

#[test]
fn supervised_training_drives_loss_down_on_separable_toy() {
    let model = tiny_model(2);
    let labeled = toy_labeled(8, 2, 64, 5);
    let unlabeled = toy_unlabeled(1, 2, 64, 5);
    let config = TrainerConfig {
        epochs: 60,
        ..base_config(TrainingMode::Supervised)
    };
    let out = train_from_seed(&model, &labeled, &unlabeled, None, &config, 7).unwrap();
    let first = out.log.first().unwrap().loss_supervised;
    let last = out.log.last().unwrap().loss_supervised;
    assert!(
        last < 0.1 * first,
        "loss went {first} -> {last} over 60 epochs"
    );
}

#[test]
fn empty_pseudo_set_contributes_exactly_zero() {
    let model = tiny_model(3);
    let params: Parameters<f32> = model.init_params(&mut derive_rng(8, 0));
    let unlabeled = toy_unlabeled(2, 3, 64, 8);
    let (loss, grads, updates) = unsupervised_loss(&model, &params, &[], &unlabeled).unwrap();
    assert_eq!(loss, 0.0);
    assert!(updates.is_empty());
    for g in grads.iter() {
        assert!(g.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn unsupervised_loss_equals_supervised_with_substituted_labels() {
    let model = tiny_model(3);
    let params: Parameters<f32> = model.init_params(&mut derive_rng(9, 0));
    let unlabeled = toy_unlabeled(3, 3, 64, 9);
    let pseudo: Vec<PseudoLabel> = (0..unlabeled.len())
        .map(|i| PseudoLabel {
            sample_index: i,
            label: (i % 3) as u16,
            confidence: 0.9,
        })
        .collect();
    let pseudo_refs: Vec<&PseudoLabel> = pseudo.iter().collect();
    let (lu, _, _) = unsupervised_loss(&model, &params, &pseudo_refs, &unlabeled).unwrap();

    let as_labeled: Vec<LabeledExample> = pseudo
        .iter()
        .map(|p| LabeledExample {
            signal: unlabeled.samples[p.sample_index].signal.clone(),
            label: p.label,
        })
        .collect();
    let refs: Vec<&LabeledExample> = as_labeled.iter().collect();
    let (ls, _, _) =
        supervised_loss(&model, &params, &refs, &Augmentor::None, &mut derive_rng(9, 1)).unwrap();
    assert!((lu - ls).abs() < 1e-12);
}

#[test]
fn confident_self_labels_give_near_zero_loss() {
    // Overfit the toy set, then pseudo-label each sample with the model's
    // own argmax; the unsupervised loss must be near zero.
    let model = tiny_model(2);
    let labeled = toy_labeled(8, 2, 64, 10);
    let unlabeled = toy_unlabeled(1, 2, 64, 10);
    let config = TrainerConfig {
        epochs: 60,
        ..base_config(TrainingMode::Supervised)
    };
    let out = train_from_seed(&model, &labeled, &unlabeled, None, &config, 11).unwrap();

    let refs: Vec<&ComplexSignal> = labeled.examples.iter().map(|e| &e.signal).collect();
    let probs = model.predict(&out.params, &signals_to_batch(&refs)).unwrap();
    let store = UnlabeledSet::new(
        labeled
            .examples
            .iter()
            .enumerate()
            .map(|(i, e)| UnlabeledSample {
                id: i as u32,
                signal: e.signal.clone(),
                withheld_label: None,
            })
            .collect(),
    )
    .unwrap();
    let pseudo: Vec<PseudoLabel> = (0..store.len())
        .map(|i| {
            let row = probs.row(i);
            let (mut c_best, mut best) = (0usize, f32::NEG_INFINITY);
            for (c, &p) in row.iter().enumerate() {
                if p > best {
                    best = p;
                    c_best = c;
                }
            }
            PseudoLabel {
                sample_index: i,
                label: c_best as u16,
                confidence: best as f64,
            }
        })
        .collect();
    let pseudo_refs: Vec<&PseudoLabel> = pseudo.iter().collect();
    let (lu, _, _) = unsupervised_loss(&model, &out.params, &pseudo_refs, &store).unwrap();
    assert!(lu < 0.05, "self-consistent loss {lu}");
}

#[test]
fn threshold_is_strict() {
    assert!(passes_threshold(0.8, 0.75));
    assert!(!passes_threshold(0.8, 0.85));
    assert!(!passes_threshold(0.8, 0.8));
    assert!(!passes_threshold(1.0, 1.0));
}

#[test]
fn first_epoch_with_half_kappa_retains_nothing() {
    // Zero-initialized memory caps the blended confidence at
    // (1 - kappa) * 1 = 0.5 < tau = 0.7.
    let model = tiny_model(4);
    let params: Parameters<f32> = model.init_params(&mut derive_rng(12, 0));
    let unlabeled = toy_unlabeled(4, 4, 64, 12);
    let memory = PredictionMemory::zeros(unlabeled.len(), 4);
    let spec = AugmentationSpec::new(Modulation::Qpsk, 2, true).unwrap();
    let (pseudo, new_memory) = rebuild_pseudo_labels(
        &model, &params, &unlabeled, &memory, 0.5, 0.7, &spec, 1, 99,
    )
    .unwrap();
    assert!(pseudo.is_empty());
    // Memory was still updated to the current predictions for every sample.
    for i in 0..unlabeled.len() {
        let sum: f32 = new_memory.get(i).sum();
        assert!((sum - 1.0).abs() < 1e-5);
    }
}

#[test]
fn kappa_zero_is_single_pass_thresholded_pseudo_labeling() {
    // Oracle equivalence on a frozen model: with kappa = 0 the decision
    // depends only on the current perturbed prediction, which the rebuild
    // also returns as the new memory.
    let model = tiny_model(3);
    let mut params: Parameters<f32> = model.init_params(&mut derive_rng(13, 0));
    // Give the head some signal so predictions are not uniform.
    {
        let ids: Vec<_> = params.tensor_ids().collect();
        let mut rng = derive_rng(13, 1);
        for id in ids {
            if params.spec(id).name.starts_with("head.") {
                for v in params.get_mut(id).iter_mut() {
                    *v += 0.5 * f32::randn(&mut rng);
                }
            }
        }
    }
    let unlabeled = toy_unlabeled(5, 3, 64, 13);
    let memory = PredictionMemory::zeros(unlabeled.len(), 3);
    let spec = AugmentationSpec::new(Modulation::Qpsk, 2, true).unwrap();
    let tau = 0.5;
    let (pseudo, new_memory) = rebuild_pseudo_labels(
        &model, &params, &unlabeled, &memory, 0.0, tau, &spec, 1, 42,
    )
    .unwrap();

    // Independent single-pass oracle over the recorded predictions.
    let mut expected = Vec::new();
    for i in 0..unlabeled.len() {
        let p = new_memory.get(i);
        let (mut c_best, mut best) = (0usize, f32::NEG_INFINITY);
        for (c, &v) in p.iter().enumerate() {
            if v > best {
                best = v;
                c_best = c;
            }
        }
        if best as f64 > tau {
            expected.push((i, c_best as u16));
        }
    }
    let got: Vec<(usize, u16)> = pseudo
        .entries
        .iter()
        .map(|p| (p.sample_index, p.label))
        .collect();
    assert_eq!(got, expected);
    assert!(!pseudo.is_empty() || expected.is_empty());
}

#[test]
fn retained_confidences_exceed_tau() {
    let model = tiny_model(3);
    let params: Parameters<f32> = model.init_params(&mut derive_rng(14, 0));
    let unlabeled = toy_unlabeled(5, 3, 64, 14);
    let memory = PredictionMemory::zeros(unlabeled.len(), 3);
    let spec = AugmentationSpec::new(Modulation::Qpsk, 2, true).unwrap();
    // tau = 0.5 with kappa = 0 lets uniform-ish predictions through only
    // when genuinely above threshold.
    let (pseudo, _) =
        rebuild_pseudo_labels(&model, &params, &unlabeled, &memory, 0.0, 0.5, &spec, 1, 7)
            .unwrap();
    for p in &pseudo.entries {
        assert!(p.confidence > 0.5);
    }
}

#[test]
fn supervised_mode_ignores_unlabeled_contents() {
    let model = tiny_model(2);
    let labeled = toy_labeled(4, 2, 64, 15);
    let unlabeled_a = toy_unlabeled(3, 2, 64, 16);
    let unlabeled_b = toy_unlabeled(3, 2, 64, 17); // different samples
    let config = base_config(TrainingMode::Supervised);
    let a = train_from_seed(&model, &labeled, &unlabeled_a, None, &config, 20).unwrap();
    let b = train_from_seed(&model, &labeled, &unlabeled_b, None, &config, 20).unwrap();
    for (ra, rb) in a.log.iter().zip(&b.log) {
        assert_eq!(ra.loss_supervised, rb.loss_supervised);
        assert_eq!(ra.pseudo_count, 0);
        assert_eq!(rb.pseudo_count, 0);
    }
    for id in a.params.tensor_ids() {
        assert_eq!(a.params.get(id), b.params.get(id));
    }
}

#[test]
fn training_is_deterministic_given_seed() {
    let model = tiny_model(2);
    let labeled = toy_labeled(4, 2, 64, 18);
    let unlabeled = toy_unlabeled(4, 2, 64, 18);
    let config = TrainerConfig {
        epochs: 4,
        tau: 0.5,
        ..base_config(TrainingMode::Proposal)
    };
    let a = train_from_seed(&model, &labeled, &unlabeled, None, &config, 33).unwrap();
    let b = train_from_seed(&model, &labeled, &unlabeled, None, &config, 33).unwrap();
    assert_eq!(a.log.len(), b.log.len());
    for (ra, rb) in a.log.iter().zip(&b.log) {
        assert_eq!(ra.loss_supervised.to_bits(), rb.loss_supervised.to_bits());
        assert_eq!(ra.loss_unsupervised.to_bits(), rb.loss_unsupervised.to_bits());
        assert_eq!(ra.pseudo_count, rb.pseudo_count);
    }
    for id in a.params.tensor_ids() {
        assert_eq!(a.params.get(id), b.params.get(id));
    }
}

#[test]
fn total_loss_is_additive() {
    let ls = 1.2345678901234;
    let lu = 0.9876543210987;
    assert!((total_loss(ls, lu) - (ls + lu)).abs() < 1e-9);
}

#[test]
fn fixmatch_tau_one_sentinel_yields_zero_unsupervised_term() {
    let model = tiny_model(3);
    let params: Parameters<f32> = model.init_params(&mut derive_rng(21, 0));
    let unlabeled = toy_unlabeled(4, 3, 64, 21);
    let refs: Vec<&ComplexSignal> = unlabeled.samples.iter().map(|s| &s.signal).collect();
    let (loss, grads, _) = fixmatch_step(
        &model,
        &params,
        &refs,
        &Augmentor::None,
        &Augmentor::None,
        1.0,
        &mut derive_rng(21, 1),
    )
    .unwrap();
    assert_eq!(loss, 0.0);
    for g in grads.iter() {
        assert!(g.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn fixmatch_with_identity_branches_is_thresholded_self_training() {
    // With weak = strong = identity, retained samples contribute the
    // cross-entropy of the model against its own confident argmax.
    let model = tiny_model(2);
    let labeled = toy_labeled(8, 2, 64, 22);
    let unlabeled = toy_unlabeled(2, 2, 64, 22);
    let config = TrainerConfig {
        epochs: 40,
        ..base_config(TrainingMode::Supervised)
    };
    let trained = train_from_seed(&model, &labeled, &unlabeled, None, &config, 23).unwrap();
    let refs: Vec<&ComplexSignal> = unlabeled.samples.iter().map(|s| &s.signal).collect();
    let (loss, _, _) = fixmatch_step(
        &model,
        &trained.params,
        &refs,
        &Augmentor::None,
        &Augmentor::None,
        0.7,
        &mut derive_rng(23, 1),
    )
    .unwrap();
    // Confident self-labels: small but positive loss.
    assert!(loss >= 0.0 && loss < 0.5, "loss {loss}");
}

#[test]
fn evaluate_perfect_and_tie_breaking() {
    let model = tiny_model(2);
    let labeled = toy_labeled(8, 2, 64, 24);
    let unlabeled = toy_unlabeled(1, 2, 64, 24);
    let config = TrainerConfig {
        epochs: 60,
        ..base_config(TrainingMode::Supervised)
    };
    let out = train_from_seed(&model, &labeled, &unlabeled, None, &config, 25).unwrap();
    let signals: Vec<&ComplexSignal> = labeled.examples.iter().map(|e| &e.signal).collect();
    let labels: Vec<u16> = labeled.examples.iter().map(|e| e.label).collect();
    let acc = evaluate(&model, &out.params, &signals, &labels).unwrap();
    assert_eq!(acc, 1.0);

    // A fresh model emits exactly uniform rows; ties resolve to class 0.
    let fresh: Parameters<f32> = model.init_params(&mut derive_rng(26, 0));
    let confusion = confusion_matrix(&model, &fresh, &signals, &labels).unwrap();
    for truth in 0..2 {
        assert_eq!(confusion[[truth, 0]], 8);
        assert_eq!(confusion[[truth, 1]], 0);
    }
}

#[test]
fn near_random_predictor_scores_near_chance() {
    // Binomial oracle: p = 1/10, n = 2000, 3 sigma ~ 0.02.
    let model = tiny_model(10);
    let mut params: Parameters<f32> = model.init_params(&mut derive_rng(27, 0));
    {
        let ids: Vec<_> = params.tensor_ids().collect();
        let mut rng = derive_rng(27, 1);
        for id in ids {
            if params.spec(id).name.starts_with("head.") {
                for v in params.get_mut(id).iter_mut() {
                    *v += 2.0 * f32::randn(&mut rng);
                }
            }
        }
    }
    let mut rng = derive_rng(27, 2);
    let signals: Vec<ComplexSignal> = (0..2000)
        .map(|i| toy_signal(i % 7, 64, &mut rng))
        .collect();
    let labels: Vec<u16> = (0..2000).map(|i| (i % 10) as u16).collect();
    let refs: Vec<&ComplexSignal> = signals.iter().collect();
    let acc = evaluate(&model, &params, &refs, &labels).unwrap();
    assert!(
        (acc - 0.10).abs() <= 0.02,
        "near-random accuracy {acc} not within 0.10 +/- 0.02"
    );
}

#[test]
fn evaluate_is_order_invariant_and_rejects_empty() {
    let model = tiny_model(2);
    let params: Parameters<f32> = model.init_params(&mut derive_rng(28, 0));
    let labeled = toy_labeled(4, 2, 64, 28);
    let signals: Vec<&ComplexSignal> = labeled.examples.iter().map(|e| &e.signal).collect();
    let labels: Vec<u16> = labeled.examples.iter().map(|e| e.label).collect();
    let forward = evaluate(&model, &params, &signals, &labels).unwrap();
    let rev_signals: Vec<&ComplexSignal> = signals.iter().rev().copied().collect();
    let rev_labels: Vec<u16> = labels.iter().rev().copied().collect();
    let backward = evaluate(&model, &params, &rev_signals, &rev_labels).unwrap();
    assert_eq!(forward, backward);
    assert!(matches!(
        evaluate(&model, &params, &[], &[]),
        Err(Error::EmptyTestSet)
    ));
}

#[test]
fn pseudo_set_grows_through_early_epochs() {
    // Seed-averaged |pseudo| over the first 10 epochs is non-decreasing on
    // a small separable task.
    let model = tiny_model(2);
    let mut sizes = vec![0.0f64; 10];
    for seed in 0..5u64 {
        let labeled = toy_labeled(6, 2, 64, 300 + seed);
        let unlabeled = toy_unlabeled(40, 2, 64, 300 + seed);
        let config = TrainerConfig {
            epochs: 10,
            tau: 0.55,
            kappa: 0.25,
            augment: Augmentor::Composite(
                AugmentationSpec::new(Modulation::Qpsk, 2, false).unwrap(),
            ),
            ..base_config(TrainingMode::Proposal)
        };
        let out = train_from_seed(&model, &labeled, &unlabeled, None, &config, 400 + seed).unwrap();
        for (e, rec) in out.log.iter().enumerate() {
            sizes[e] += rec.pseudo_count as f64 / 5.0;
        }
    }
    for e in 1..10 {
        assert!(
            sizes[e] + 1e-9 >= sizes[e - 1],
            "mean pseudo-set size dipped at epoch {}: {:?}",
            e + 1,
            sizes
        );
    }
    assert!(sizes[9] > sizes[0]);
}

#[test]
fn non_finite_weights_fail_the_trial_with_epoch() {
    let model = tiny_model(2);
    let labeled = toy_labeled(4, 2, 64, 31);
    let unlabeled = toy_unlabeled(1, 2, 64, 31);
    let config = base_config(TrainingMode::Supervised);
    let mut params: Parameters<f32> = model.init_params(&mut derive_rng(32, 0));
    let first = params.tensor_ids().next().unwrap();
    params.get_mut(first)[[0, 0, 0]] = f32::NAN;
    match train(&model, params, &labeled, &unlabeled, None, &config, 32) {
        Err(Error::TrainingFailed { epoch }) => assert_eq!(epoch, 1),
        Err(other) => panic!("expected TrainingFailed at epoch 1, got {other:?}"),
        Ok(_) => panic!("training survived a NaN weight"),
    }
}

#[test]
fn forward_mode_dispatch_matches_predict() {
    let model = tiny_model(2);
    let mut params: Parameters<f32> = model.init_params(&mut derive_rng(33, 0));
    let labeled = toy_labeled(2, 2, 64, 33);
    let refs: Vec<&ComplexSignal> = labeled.examples.iter().map(|e| &e.signal).collect();
    let x = signals_to_batch(&refs);
    let via_dispatch = model.forward(&mut params, &x, Mode::Infer).unwrap();
    let direct = model.predict(&params, &x).unwrap();
    assert_eq!(via_dispatch, direct);
}
