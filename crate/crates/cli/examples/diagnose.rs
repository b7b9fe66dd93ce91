// scratch diagnostic: per-class pseudo-label coverage after supervised training
use rffp_cli::trials::{load_split_dir, prepare};
use rffp_core::augment::AugmentationSpec;
use rffp_core::semisup::*;
use rffp_core::nn::{ModelConfig, Resnet1d};
use rffp_core::augment::Augmentor;
use rffp_core::Modulation;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let dir = std::path::PathBuf::from(&args[1]);
    let epochs: usize = args[2].parse().unwrap();
    let lr: f64 = args[3].parse().unwrap();
    let m: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(10);

    let data = load_split_dir(&dir).unwrap();
    let n = (600usize.saturating_sub(m)).min(500).max(1);
    let prepared = prepare(&data, m, n, 11).unwrap();
    let model = Resnet1d::new(ModelConfig {
        num_conv_blocks: 1,
        num_classes: data.train.num_devices as usize,
        input_len: data.train.sample_len,
        ..ModelConfig::default()
    }).unwrap();
    let spec = AugmentationSpec::new(Modulation::Qpsk, 16, false).unwrap();
    let config = TrainerConfig {
        mode: TrainingMode::Supervised,
        epochs,
        labeled_batch: 8,
        pseudo_batch: 32,
        learning_rate: lr,
        augment: Augmentor::Composite(spec.clone()),
        kappa: 0.5, tau: 0.7,
        weak_augment: Augmentor::None,
        eval_every_epoch: false,
    };
    let test_refs: Vec<&rffp_core::ComplexSignal> = prepared.test_signals.clone();
    let out = train_from_seed(&model, &prepared.labeled, &prepared.unlabeled,
        Some((&test_refs, &prepared.test_labels)), &config, 42).unwrap();
    println!("supervised acc after {epochs} epochs lr {lr} M {m}: {:?}", out.final_eval_accuracy);

    // per-class confidence of perturbed predictions (kappa=0 single pass)
    let memory = PredictionMemory::zeros(prepared.unlabeled.len(), model.config().num_classes);
    let (pseudo, mem) = rebuild_pseudo_labels(&model, &out.params, &prepared.unlabeled,
        &memory, 0.0, 0.5, &spec, 1, 777).unwrap();
    let classes = model.config().num_classes;
    for tau in [0.5f64, 0.6, 0.7, 0.8, 0.9] {
        let mut per_class = vec![0usize; classes];
        let mut correct = vec![0usize; classes];
        for i in 0..prepared.unlabeled.len() {
            let p = mem.get(i);
            let (mut c_best, mut best) = (0usize, f32::MIN);
            for (c, &v) in p.iter().enumerate() {
                if v > best { best = v; c_best = c; }
            }
            if best as f64 > tau {
                per_class[c_best] += 1;
                if prepared.unlabeled.samples[i].withheld_label == Some(c_best as u16) {
                    correct[c_best] += 1;
                }
            }
        }
        println!("tau {tau}: retained per predicted class {per_class:?} correct {correct:?}");
    }
    let _ = pseudo;
}
