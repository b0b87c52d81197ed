mod common;

use cake::datamodel::{encode_features, Av};
use cake::model::{init_params, predict, AvSource, Linear, ModelConfig, Variant};
use cake::numerics::SeededRng;
use cake::optim::AdamConfig;
use cake::trainer::{
    evaluate, fit_av_regressor, make_batches, sweep_representation_size, train, train_full, TrainConfig, TrainError,
};
use cake::{EmotionClass, FeatureRecord};

fn quick(variant: Variant, k: usize, dim: usize, n_domains: usize, epochs: usize) -> TrainConfig {
    let mut cfg = TrainConfig::new(ModelConfig {
        seed: 11,
        ..ModelConfig::new(variant, k, dim, n_domains)
    });
    cfg.max_epochs = epochs;
    cfg.batch_size = 32;
    cfg.av_regressor_epochs = 20;
    cfg
}

#[test]
fn separable_two_class_problem_is_learned() {
    let mut rng = SeededRng::new(3);
    let records: Vec<FeatureRecord> = (0..200)
        .map(|i| {
            let label = if i % 2 == 0 {
                EmotionClass::Neutral
            } else {
                EmotionClass::Happiness
            };
            let center = if i % 2 == 0 { -1.0 } else { 1.0 };
            FeatureRecord {
                id: format!("s{i}"),
                domain_id: 0,
                features: (0..8).map(|_| center + 0.3 * rng.normal()).collect(),
                label,
                av: None,
            }
        })
        .collect();
    let bundle = common::bundle_of(8, &["only"], records);
    let mut cfg = quick(Variant::Cake, 2, 8, 1, 50);
    cfg.patience = 50;
    let (params, _) = train(&bundle, &bundle, &cfg).unwrap();
    let hits = bundle
        .records()
        .iter()
        .filter(|r| predict(&params, &cfg.model, r, 0).unwrap() == r.label)
        .count();
    assert_eq!(hits, bundle.len());
}

#[test]
fn training_is_deterministic() {
    let (tr, te) = common::small_synth(12, 5);
    for variant in [Variant::Cake, Variant::AvK, Variant::CakeNorm] {
        let cfg = quick(variant, if variant == Variant::AvK { 1 } else { 3 }, 12, 3, 6);
        let a = train_full(&tr, &te, &cfg).unwrap();
        let b = train_full(&tr, &te, &cfg).unwrap();
        assert_eq!(a, b, "{variant}");
    }
}

#[test]
fn best_evaluated_parameters_are_kept() {
    let (tr, te) = common::small_synth(12, 6);
    let mut cfg = quick(Variant::Cake, 3, 12, 3, 25);
    cfg.eval_every = 2;
    cfg.patience = 100;
    let r = train_full(&tr, &te, &cfg).unwrap();
    let best = r.history.best_epoch.unwrap();
    let logged = r
        .history
        .epochs
        .iter()
        .find(|e| e.epoch == best)
        .unwrap()
        .weighted_f1
        .unwrap();
    assert_eq!(logged, r.history.best_weighted_f1().unwrap());
    // re-evaluating the returned parameters reproduces the logged score
    assert_eq!(evaluate(&r.params, &cfg.model, &te).unwrap().weighted_f1, logged);
    for e in &r.history.epochs {
        assert_eq!(e.weighted_f1.is_some(), e.epoch % 2 == 0 || e.epoch == 25);
    }
    // strictly better only: the earliest epoch with the maximum wins
    let first_max = r
        .history
        .epochs
        .iter()
        .find(|e| e.weighted_f1 == Some(logged))
        .unwrap()
        .epoch;
    assert_eq!(first_max, best);
}

#[test]
fn patience_stops_training() {
    let (tr, te) = common::small_synth(12, 7);
    for patience in [0, 2] {
        let mut cfg = quick(Variant::Cake, 2, 12, 3, 200);
        cfg.patience = patience;
        let r = train_full(&tr, &te, &cfg).unwrap();
        let last = r.history.epochs.last().unwrap().epoch;
        let best = r.history.best_epoch.unwrap();
        assert!(last < 200);
        assert_eq!(last - best, patience + 1);
    }
}

#[test]
fn every_sample_appears_once_per_epoch() {
    let (tr, _) = common::small_synth(4, 8);
    let mut rng = SeededRng::new(1);
    for batch_size in [1, 7, 64, 10_000] {
        let batches = make_batches(&tr, batch_size, &mut rng);
        let mut seen: Vec<usize> = batches.iter().flatten().copied().collect();
        assert!(batches.iter().all(|b| b.len() <= batch_size && !b.is_empty()));
        assert!(batches[..batches.len() - 1].iter().all(|b| b.len() == batch_size));
        seen.sort_unstable();
        assert_eq!(seen, (0..tr.len()).collect::<Vec<_>>());
    }
}

#[test]
fn av_regressor_recovers_a_noiseless_linear_map() {
    let mut rng = SeededRng::new(17);
    let records: Vec<FeatureRecord> = (0..256)
        .map(|i| {
            let x: Vec<f64> = (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect();
            FeatureRecord {
                id: format!("{i}"),
                domain_id: 0,
                av: Some(Av::new(
                    0.3 * x[0] - 0.2 * x[1] + 0.1,
                    0.25 * x[2] + 0.15 * x[3] - 0.3 * x[0] - 0.05,
                )),
                features: x,
                label: EmotionClass::Neutral,
            }
        })
        .collect();
    let bundle = common::bundle_of(4, &["d"], records);
    let mut head = Linear::zeros(2, 4);
    let adam = AdamConfig {
        lr: 1e-2,
        ..AdamConfig::default()
    };
    let mse = fit_av_regressor(&mut head, &bundle, 400, 32, adam, &mut SeededRng::new(2)).unwrap();
    assert!(mse < 1e-6, "{mse}");
}

#[test]
fn av_variants_require_av_values() {
    let (tr, te) = common::small_synth(8, 9);
    let strip = |b: &cake::DatasetBundle| {
        let recs = b
            .records()
            .iter()
            .cloned()
            .map(|r| FeatureRecord { av: None, ..r })
            .collect();
        common::bundle_of(8, &["domain0", "domain1", "domain2"], recs)
    };
    let bare_tr = strip(&tr);
    let bare_te = strip(&te);
    for variant in [Variant::Av, Variant::AvK] {
        let cfg = quick(variant, if variant == Variant::Av { 0 } else { 1 }, 8, 3, 2);
        let err = train(&bare_tr, &te, &cfg).unwrap_err();
        assert!(matches!(err, TrainError::MissingAv { split: "train", .. }), "{err}");
        // regressed AV needs no test labels
        assert!(train(&tr, &bare_te, &cfg).is_ok());
        let mut gt = cfg.clone();
        gt.model.av_source = AvSource::GroundTruth;
        assert!(matches!(
            train(&tr, &bare_te, &gt),
            Err(TrainError::MissingAv { split: "test", .. })
        ));
    }
    assert!(train(&bare_tr, &bare_te, &quick(Variant::Cake, 2, 8, 3, 2)).is_ok());
}

#[test]
fn incompatible_inputs_are_rejected() {
    let (tr, te) = common::small_synth(8, 10);
    assert!(matches!(
        train(&tr, &te, &quick(Variant::Cake, 2, 9, 3, 1)),
        Err(TrainError::Incompatible(_))
    ));
    assert!(matches!(
        train(&tr, &te, &quick(Variant::Cake, 2, 8, 2, 1)),
        Err(TrainError::Incompatible(_))
    ));
    let mut cfg = quick(Variant::Cake, 2, 8, 3, 1);
    cfg.batch_size = 0;
    assert!(matches!(train(&tr, &te, &cfg), Err(TrainError::InvalidConfig(_))));
}

#[test]
fn zero_epochs_returns_the_initialization() {
    let (tr, te) = common::small_synth(8, 12);
    let cfg = quick(Variant::Cake, 2, 8, 3, 0);
    let (params, hist) = train(&tr, &te, &cfg).unwrap();
    assert_eq!(params, init_params(&cfg.model).unwrap());
    assert!(hist.epochs.is_empty());
}

#[test]
fn training_leaves_inputs_untouched() {
    let (tr, te) = common::small_synth(8, 13);
    let (a, b) = (encode_features(&tr), encode_features(&te));
    train(&tr, &te, &quick(Variant::AvK, 1, 8, 3, 2)).unwrap();
    assert_eq!(encode_features(&tr), a);
    assert_eq!(encode_features(&te), b);
}

#[test]
fn sweep_does_not_depend_on_parallelism() {
    let (tr, te) = common::small_synth(8, 14);
    let cfg = quick(Variant::Cake, 2, 8, 3, 3);
    let serial = sweep_representation_size(&[2, 3], Variant::Cake, &tr, &te, &cfg, 2, 1).unwrap();
    let parallel = sweep_representation_size(&[2, 3], Variant::Cake, &tr, &te, &cfg, 2, 3).unwrap();
    assert_eq!(serial, parallel);
    assert_eq!(serial.rows.len(), 2);
    // run r of every k reuses the same seeds as a direct call
    let mut one = cfg.clone();
    one.model.k = 3;
    one.model.seed += 1;
    one.seed += 1;
    let (_, h) = train(&tr, &te, &one).unwrap();
    assert_eq!(serial.rows[1].run_f1[1], h.best_weighted_f1().unwrap());
    assert!(sweep_representation_size(&[], Variant::Cake, &tr, &te, &cfg, 1, 1).is_err());
}
