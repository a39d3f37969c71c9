//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

mod common;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use depsrl::autodiff::Tape;
use depsrl::classifier::role_distributions;
use depsrl::conll::{extract_instances, read_conll2009_str, to_conll2009_string};
use depsrl::encoder::encode;
use depsrl::eval::{
    argument_recognition, distance_f1, edges, score_labeled, verbal_nominal_split, Buckets, Counts, PredicateClass,
};
use depsrl::gradcheck::{check_model, fixture, max_error, DEFAULT_STEP, DEFAULT_TOLERANCE};
use depsrl::model::ClassifierParams;
use depsrl::synthetic::SyntheticKind;
use depsrl::train::{cell_accuracy, evaluate_model, predict_corpus, train};
use depsrl::vocab::{dropout_probability, word_dropout};
use depsrl::{
    AblationPreset, Checkpoint, ClassifierVariant, ModelConfig, PretrainedTable, Sentence, SrlModel, TrainSchedule,
    Vocabulary,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{mixed, random_pair, random_sentence, small_config};

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn schedule(epochs: usize, seed: u64) -> TrainSchedule {
    TrainSchedule {
        max_epochs: epochs,
        patience: epochs,
        seed,
        stop_at_f1: Some(1.0),
        ..TrainSchedule::default()
    }
}

fn dev_f1(train_set: &[Sentence], dev: &[Sentence], cfg: &ModelConfig, epochs: usize) -> f64 {
    let out = train(
        train_set,
        dev,
        cfg,
        PretrainedTable::empty(cfg.d_pretrained),
        &schedule(epochs, cfg.seed),
    )
    .unwrap();
    evaluate_model(&out.checkpoint.model, dev).unwrap().f1()
}

fn gradient_fidelity() -> Check {
    let mut worst: f64 = 0.0;
    let mut groups = 0;
    for variant in [
        ClassifierVariant::Basic,
        ClassifierVariant::PredicateState,
        ClassifierVariant::Compositional,
    ] {
        let (model, feats) = fixture(variant, 1).unwrap();
        assert_eq!((model.config.d_hidden, model.config.layers, feats.len()), (8, 2, 5));
        let report = check_model(&model, &feats, DEFAULT_STEP, None).unwrap();
        assert_eq!(report.len(), model.params.len());
        groups += report.len();
        worst = worst.max(max_error(&report));
    }
    ensure(
        worst < DEFAULT_TOLERANCE,
        format!("max relative error {worst:.2e} over {groups} groups"),
    )
}

fn overfit_oracle() -> Check {
    let train_set = SyntheticKind::Positional.generate(20, 1);
    let held_out = SyntheticKind::Positional.generate(20, 2);
    let cfg = ModelConfig {
        seed: 1,
        ..small_config(32, 2)
    };
    let out = train(
        &train_set,
        &train_set,
        &cfg,
        PretrainedTable::empty(cfg.d_pretrained),
        &schedule(200, 1),
    )
    .unwrap();
    let model = &out.checkpoint.model;
    let accuracy = cell_accuracy(model, &train_set).unwrap();
    let f1 = evaluate_model(model, &held_out).unwrap().f1();
    ensure(
        accuracy == 1.0 && f1 >= 0.95,
        format!(
            "train accuracy {accuracy:.4} after {} epochs, held-out F1 {f1:.4}",
            out.log.len()
        ),
    )
}

fn ablation_flag() -> Check {
    let kind = SyntheticKind::SharedArgument;
    let (train_set, dev) = (kind.generate(60, 1), kind.generate(60, 1001));
    let base = ModelConfig {
        seed: 1,
        ..small_config(16, 2)
    };
    let full = dev_f1(&train_set, &dev, &AblationPreset::Full.apply(&base), 30);
    let no_flag = dev_f1(&train_set, &dev, &AblationPreset::NoPredicateFlag.apply(&base), 30);
    let gap = 100.0 * (full - no_flag);
    ensure(
        gap >= 10.0,
        format!("full {:.2} vs no flag {:.2} ({gap:+.2})", 100.0 * full, 100.0 * no_flag),
    )
}

fn ablation_classifier() -> Check {
    let kind = SyntheticKind::LemmaDependent;
    let (train_set, dev) = (kind.generate(60, 1), kind.generate(60, 1001));
    let base = ModelConfig {
        seed: 1,
        ..small_config(16, 2)
    };
    let comp = dev_f1(&train_set, &dev, &AblationPreset::Full.apply(&base), 10);
    let basic = dev_f1(&train_set, &dev, &AblationPreset::BasicClassifier.apply(&base), 10);
    let gap = 100.0 * (comp - basic);
    ensure(
        gap >= 5.0,
        format!(
            "compositional {:.2} vs basic {:.2} ({gap:+.2})",
            100.0 * comp,
            100.0 * basic
        ),
    )
}

fn scorer_equivalence() -> Check {
    let buckets: Buckets = "1,2,3,4+".parse().unwrap();
    let mut mismatches = 0;
    for seed in 0..1000 {
        let (gold, pred) = random_pair(seed);
        let (g, p) = (edges(&gold), edges(&pred));
        let mut labeled = Counts::default();
        let mut unlabeled = Counts::default();
        let mut by_bucket = vec![Counts::default(); buckets.len()];
        let mut by_class = [Counts::default(); 3];
        for (gs, ps) in gold.iter().zip(&pred) {
            for (rank, &pp) in gs.predicate_positions().iter().enumerate() {
                let class = PredicateClass::of_pos(&gs.tokens()[pp].ppos) as usize;
                for i in 0..gs.len() {
                    let (a, b) = (&gs.tokens()[i].apreds[rank], &ps.tokens()[i].apreds[rank]);
                    let bucket = &mut by_bucket[buckets.bucket_of(i.abs_diff(pp))];
                    for c in [&mut labeled, &mut unlabeled, bucket, &mut by_class[class]] {
                        c.gold += a.is_some() as usize;
                        c.predicted += b.is_some() as usize;
                    }
                    if a.is_some() && b.is_some() {
                        unlabeled.correct += 1;
                    }
                    if a.is_some() && a == b {
                        labeled.correct += 1;
                        by_bucket[buckets.bucket_of(i.abs_diff(pp))].correct += 1;
                        by_class[class].correct += 1;
                    }
                }
            }
        }
        let split = verbal_nominal_split(&g, &p, &gold);
        let same = score_labeled(&g, &p, None) == labeled
            && argument_recognition(&g, &p) == unlabeled
            && distance_f1(&g, &p, &buckets).iter().map(|b| b.counts).eq(by_bucket)
            && [split.verbal.labeled, split.nominal.labeled, split.other.labeled] == by_class;
        mismatches += !same as usize;
    }
    ensure(
        mismatches == 0,
        format!("{mismatches} of 1000 corpora disagree with cell counting"),
    )
}

fn dropout_statistics() -> Check {
    let alpha = 0.25;
    let trials = 100_000;
    let mut text = String::new();
    for freq in [1u64, 3, 10] {
        for i in 0..freq {
            text.push_str(&format!(
                "{}\tf{freq}\tf{freq}\tf{freq}\tNN\tNN\t_\t_\t0\t0\t_\t_\t_\t_\n",
                i + 1
            ));
        }
        text.push('\n');
    }
    let vocab = Vocabulary::build(&read_conll2009_str(&text).unwrap(), 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut parts = Vec::new();
    let mut ok = true;
    for freq in [1u64, 3, 10] {
        let id = vocab.word_id(&format!("f{freq}"));
        assert_eq!(vocab.word_freq(id), freq);
        let ids = vec![id; trials];
        let dropped = word_dropout(&ids, &vocab, alpha, &mut rng)
            .iter()
            .filter(|&&w| w != id)
            .count();
        let p = dropout_probability(freq, alpha);
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        let rate = dropped as f64 / trials as f64;
        ok &= (rate - p).abs() <= 3.0 * sigma;
        parts.push(format!("fr={freq}: {rate:.4} vs {p:.4}"));
    }
    ensure(ok, parts.join(", "))
}

fn format_closure() -> Check {
    let sents = mixed();
    let counts: Vec<usize> = sents.iter().map(|s| s.predicate_positions().len()).collect();
    assert_eq!(counts, [0, 1, 3]);
    let text = to_conll2009_string(&sents).unwrap();
    let again = read_conll2009_str(&text).unwrap();
    let fixpoint = again == sents && to_conll2009_string(&again).unwrap() == text;

    let vocab = Vocabulary::build(&sents, 1).unwrap();
    let model = SrlModel::new(small_config(4, 1), vocab, PretrainedTable::empty(4)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut corpora = vec![sents.clone()];
    corpora.extend((0..50).map(|_| (0..3).map(|_| random_sentence(&mut rng, 4)).collect::<Vec<_>>()));
    let mut reparsed = 0;
    for corpus in &corpora {
        let predicted = predict_corpus(&model, corpus).unwrap();
        let back = read_conll2009_str(&to_conll2009_string(&predicted).unwrap()).unwrap();
        let aligned = back.len() == corpus.len()
            && back
                .iter()
                .zip(corpus)
                .all(|(b, c)| b.len() == c.len() && b.predicate_positions() == c.predicate_positions());
        reparsed += (back == predicted && aligned) as usize;
    }
    ensure(
        fixpoint && reparsed == corpora.len(),
        format!("fixpoint {fixpoint}, {reparsed}/{} predictions re-parse", corpora.len()),
    )
}

fn checkpoint_round_trip() -> Check {
    let sents = mixed();
    let out = train(
        &sents,
        &sents,
        &small_config(6, 2),
        PretrainedTable::empty(4),
        &schedule(3, 1),
    )
    .unwrap();
    let mut bytes = Vec::new();
    out.checkpoint.save(&mut bytes).unwrap();
    let loaded = Checkpoint::load(bytes.as_slice()).unwrap();
    let bits = |m: &SrlModel| -> Vec<u64> {
        sents
            .iter()
            .flat_map(extract_instances)
            .flat_map(|inst| role_distributions(m, &inst).unwrap())
            .flatten()
            .map(f64::to_bits)
            .collect()
    };
    let same_bits = bits(&out.checkpoint.model) == bits(&loaded.model);
    let same_files =
        predict_corpus(&out.checkpoint.model, &sents).unwrap() == predict_corpus(&loaded.model, &sents).unwrap();
    ensure(
        same_bits && same_files,
        format!("{} bytes, identical distributions {same_bits}", bytes.len()),
    )
}

fn determinism() -> Check {
    let sents = SyntheticKind::SharedArgument.generate(12, 3);
    let run = || {
        let out = train(
            &sents,
            &sents,
            &small_config(8, 2),
            PretrainedTable::empty(4),
            &schedule(4, 7),
        )
        .unwrap();
        let log: Vec<String> = out.log.iter().map(ToString::to_string).collect();
        (log, out.checkpoint.to_bytes())
    };
    let (a, b) = (run(), run());
    ensure(
        a == b,
        format!(
            "{} epochs, logs equal {}, checkpoints equal {}",
            a.0.len(),
            a.0 == b.0,
            a.1 == b.1
        ),
    )
}

fn dimension_audit() -> Check {
    let cfg = ModelConfig::default();
    let sents = mixed();
    let model = SrlModel::new(
        cfg.clone(),
        Vocabulary::build(&sents, 1).unwrap(),
        PretrainedTable::empty(cfg.d_pretrained),
    )
    .unwrap();
    let ClassifierParams::Compositional { combine, .. } = model.layout.classifier else {
        return Err("default classifier is not compositional".into());
    };
    let u_shape = model.params.get(combine).shape().to_vec();
    let first_layer = model.layout.layers[0].input_width;
    let inst = &extract_instances(&sents[1])[0];
    let feats = model.features(inst);
    let mut tape = Tape::with_params(&model.params);
    let enc = encode(&mut tape, &model, &feats, None).unwrap();
    let v_i = tape.value(enc.states[0]).len();
    ensure(
        cfg.input_width() == 317 && first_layer == 317 && v_i == 1024 && u_shape == [2048, 256],
        format!("input {first_layer}, v_i {v_i}, U {}x{}", u_shape[0], u_shape[1]),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("gradient fidelity", gradient_fidelity),
        ("overfit oracle", overfit_oracle),
        ("ablation: predicate flag", ablation_flag),
        ("ablation: compositional classifier", ablation_classifier),
        ("scorer equivalence", scorer_equivalence),
        ("word dropout statistics", dropout_statistics),
        ("format closure", format_closure),
        ("checkpoint round trip", checkpoint_round_trip),
        ("determinism", determinism),
        ("dimension audit", dimension_audit),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut out = std::io::stdout().lock();
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let (status, detail) = match result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        let _ = writeln!(
            out,
            "{status} {:>2} {name}: {detail} [{:.1}s]",
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    let _ = out.flush();
    if failed > 0 {
        std::process::exit(1);
    }
}
