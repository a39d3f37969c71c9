mod common;

use depsrl::autodiff::Tape;
use depsrl::classifier::{argmax, predict_roles, role_distributions};
use depsrl::conll::extract_instances;
use depsrl::encoder::{encode, represent_words};
use depsrl::train::{predict_corpus, train};
use depsrl::vocab::{dropout_probability, word_dropout};
use depsrl::{Checkpoint, ClassifierVariant, PretrainedTable, SrlModel, TrainSchedule, Vocabulary};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{mixed, small_config};

fn model_for(variant: ClassifierVariant, flag: bool) -> SrlModel {
    let sents = mixed();
    let cfg = depsrl::ModelConfig {
        variant,
        use_predicate_flag: flag,
        ..small_config(6, 2)
    };
    let vocab = Vocabulary::build(&sents, 1).unwrap();
    SrlModel::new(cfg, vocab, PretrainedTable::empty(4)).unwrap()
}

fn inputs_for(model: &SrlModel, rank: usize) -> Vec<Vec<f64>> {
    let sents = mixed();
    let inst = &extract_instances(&sents[2])[rank];
    let feats = model.features(inst);
    let mut tape = Tape::with_params(&model.params);
    let xs = represent_words(&mut tape, model, &feats, None).unwrap();
    xs.iter().map(|&x| tape.value(x).to_vec()).collect()
}

#[test]
fn two_predicates_differ_only_in_lemma_and_flag() {
    let model = model_for(ClassifierVariant::Compositional, true);
    let cfg = &model.config;
    let lemma_start = cfg.d_word + cfg.d_pretrained + cfg.d_pos;
    let a = inputs_for(&model, 0);
    let b = inputs_for(&model, 1);
    let (pa, pb) = (1, 3);
    for (i, (xa, xb)) in a.iter().zip(&b).enumerate() {
        assert_eq!(xa.len(), cfg.input_width());
        assert_eq!(xa[..lemma_start], xb[..lemma_start], "token {i}");
        if i != pa && i != pb {
            assert_eq!(xa, xb, "token {i}");
        }
    }
    assert_eq!(*a[pa].last().unwrap(), 1.0);
    assert_eq!(*a[pb].last().unwrap(), 0.0);
    assert_eq!(*b[pb].last().unwrap(), 1.0);
    assert!(a[pb][lemma_start..lemma_start + cfg.d_lemma].iter().all(|&v| v == 0.0));
    assert!(b[pb][lemma_start..lemma_start + cfg.d_lemma].iter().any(|&v| v != 0.0));
}

#[test]
fn without_the_flag_every_predicate_sees_the_same_input() {
    let model = model_for(ClassifierVariant::Compositional, false);
    let a = inputs_for(&model, 0);
    for rank in 1..3 {
        assert_eq!(inputs_for(&model, rank), a);
    }
    assert!(a.iter().all(|x| *x.last().unwrap() == 0.0));
}

#[test]
fn encoder_states_depend_on_the_current_predicate() {
    let sents = mixed();
    let insts = extract_instances(&sents[2]);
    let states = |model: &SrlModel, rank: usize| {
        let feats = model.features(&insts[rank]);
        let mut tape = Tape::with_params(&model.params);
        let enc = encode(&mut tape, model, &feats, None).unwrap();
        enc.states.iter().map(|&v| tape.value(v).to_vec()).collect::<Vec<_>>()
    };
    let flagged = model_for(ClassifierVariant::Compositional, true);
    assert_ne!(states(&flagged, 0), states(&flagged, 1));
    let plain = model_for(ClassifierVariant::Compositional, false);
    assert_eq!(states(&plain, 0), states(&plain, 1));
}

#[test]
fn distributions_are_normalized_for_every_variant() {
    let sents = mixed();
    for variant in [
        ClassifierVariant::Basic,
        ClassifierVariant::PredicateState,
        ClassifierVariant::Compositional,
    ] {
        let model = model_for(variant, true);
        for s in &sents {
            for inst in extract_instances(s) {
                let dists = role_distributions(&model, &inst).unwrap();
                assert_eq!(dists.len(), s.len());
                for d in &dists {
                    assert_eq!(d.len(), model.vocab.role_count());
                    assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
                let roles = predict_roles(&model, &inst).unwrap();
                for (r, d) in roles.iter().zip(&dists) {
                    assert_eq!(*r, argmax(d));
                }
            }
        }
    }
}

#[test]
fn checkpoint_reload_predicts_the_same_bits() {
    let model = model_for(ClassifierVariant::Compositional, true);
    let sents = mixed();
    let bytes = Checkpoint::new(model.clone()).to_bytes();
    let loaded = Checkpoint::from_bytes(&bytes).unwrap().model;
    assert_eq!(loaded, model);
    for s in &sents {
        for inst in extract_instances(s) {
            let a = role_distributions(&model, &inst).unwrap();
            let b = role_distributions(&loaded, &inst).unwrap();
            let bits = |d: &Vec<Vec<f64>>| d.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a), bits(&b));
        }
    }
    assert_eq!(
        predict_corpus(&model, &sents).unwrap(),
        predict_corpus(&loaded, &sents).unwrap()
    );
}

#[test]
fn training_leaves_pretrained_vectors_alone() {
    let sents = mixed();
    let table = PretrainedTable::load("company 0.1 0.2 0.3 0.4\nshares -0.5 0.5 0.25 0.0\n".as_bytes(), 4).unwrap();
    let schedule = TrainSchedule {
        max_epochs: 3,
        ..TrainSchedule::default()
    };
    let outcome = train(&sents, &sents, &small_config(4, 1), table.clone(), &schedule).unwrap();
    assert_eq!(outcome.checkpoint.model.pretrained, table);
    assert!(outcome
        .checkpoint
        .model
        .params
        .iter()
        .all(|(_, name, _)| !name.contains("pretrained")));
}

#[test]
fn dropout_draws_one_number_per_token() {
    let vocab = Vocabulary::build(&mixed(), 1).unwrap();
    let ids: Vec<usize> = (0..vocab.words.len()).collect();
    let mut a = ChaCha8Rng::seed_from_u64(3);
    let mut b = ChaCha8Rng::seed_from_u64(3);
    let none = word_dropout(&ids, &vocab, 0.0, &mut a);
    assert_eq!(none, ids);
    let _ = word_dropout(&ids, &vocab, 10.0, &mut b);
    assert_eq!(rand::Rng::random::<u64>(&mut a), rand::Rng::random::<u64>(&mut b));
}

#[test]
fn unknown_words_are_always_dropped() {
    assert_eq!(dropout_probability(0, 0.25), 1.0);
    assert_eq!(dropout_probability(7, 0.0), 0.0);
}

proptest! {
    #[test]
    fn argmax_ignores_a_constant_shift(values in prop::collection::vec(-50.0f64..50.0, 1..12), shift in -100.0f64..100.0) {
        let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
        let a = argmax(&values);
        let b = argmax(&shifted);
        // Rounding may merge near-ties, so compare the values picked.
        prop_assert!((values[a] - values[b]).abs() < 1e-9);
    }

    #[test]
    fn argmax_takes_the_first_maximum(values in prop::collection::vec(0u8..4, 1..12)) {
        let v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
        let best = v.iter().cloned().fold(f64::MIN, f64::max);
        prop_assert_eq!(argmax(&v), v.iter().position(|&x| x == best).unwrap());
    }

    #[test]
    fn dropout_probability_falls_with_frequency(freq in 0u64..1000, alpha in 0.01f64..5.0) {
        let p = dropout_probability(freq, alpha);
        prop_assert!(p > 0.0 && p <= 1.0);
        prop_assert!(dropout_probability(freq + 1, alpha) < p);
    }
}
