use suml::data::{carve_meta_test, train_val_split, Dataset, SplitSpec};
use suml::eval::evaluate;
use suml::model::EncodeMode;
use suml::synth::{generate_synthetic, tag_by_cue, GenConfig, Synthetic};
use suml::text::build_vocab;
use suml::train::{train_adversarial, train_contextless_probe, train_erm, train_suml, TrainConfig, TrainHistory};

fn world(rule_strength: f64) -> Synthetic {
    generate_synthetic(&GenConfig {
        n_train: 400,
        n_test_easy: 80,
        n_test_hard: 80,
        m: 3,
        n_keys: 8,
        n_fillers: 20,
        rule_strength,
        seed: 11,
        ..GenConfig::default()
    })
    .unwrap()
}

fn cfg() -> TrainConfig {
    TrainConfig {
        outer_lr: 0.03,
        max_epochs: 8,
        max_choices: 3,
        lambda_loss: 0.5,
        lambda_enc: 0.5,
        ..TrainConfig::default()
    }
}

fn best_is_minimal(h: &TrainHistory) {
    let best = h.best_val_loss.expect("a best record");
    assert!(h.records.iter().all(|r| best <= r.val_loss));
    assert_eq!(h.best_record().map(|r| r.val_loss), Some(best));
}

#[test]
fn every_method_keeps_its_lowest_validation_loss() {
    let w = world(0.95);
    let (train, val) = train_val_split(&w.train, SplitSpec::nine_to_one(0)).unwrap();
    let (meta, residual) = carve_meta_test(&tag_by_cue(&train), 40, 0).unwrap();
    let vocab = build_vocab(&[&train, &meta], 1).unwrap();
    let cfg = cfg();
    best_is_minimal(&train_erm(&residual, &val, &vocab, &cfg).unwrap().1);
    best_is_minimal(&train_adversarial(&residual, &val, &vocab, &cfg).unwrap().1);
    best_is_minimal(&train_suml(&residual, &meta, &val, &vocab, &cfg).unwrap().1);
}

#[test]
fn probes_solve_the_cued_subset_when_the_rule_is_exact() {
    let w = world(1.0);
    let vocab = build_vocab(&[&w.train], 1).unwrap();
    let empty = Dataset::new("", Vec::new());
    let probes = train_contextless_probe(&w.train, &empty, &vocab, &cfg(), &[0, 1, 2]).unwrap();
    for p in &probes {
        let r = evaluate(p, &w.test_easy, EncodeMode::Contextless).unwrap();
        let acc = r.accuracy_overall().unwrap();
        assert!(acc >= 0.9, "probe {} easy accuracy {acc}", p.config.seed);
    }
}
