#![allow(dead_code)]

use depsrl::conll::read_conll2009_str;
use depsrl::{ModelConfig, Sentence, Token};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MIXED: &str = include_str!("../fixtures/mixed.conll");

pub fn mixed() -> Vec<Sentence> {
    read_conll2009_str(MIXED).unwrap()
}

/// Narrow widths so training runs in well under a second per epoch.
pub fn small_config(d_hidden: usize, layers: usize) -> ModelConfig {
    ModelConfig {
        d_word: 16,
        d_pretrained: 4,
        d_pos: 8,
        d_lemma: 8,
        d_hidden,
        d_role: 8,
        d_lemma_out: 8,
        layers,
        min_lemma_freq: 1,
        ..ModelConfig::default()
    }
}

const ROLES: [&str; 4] = ["A0", "A1", "A2", "AM-TMP"];
const PRED_POS: [&str; 3] = ["VBD", "NN", "JJ"];

/// A random sentence of 1..=8 tokens with up to 3 predicates, a random
/// (acyclic) head tree and roles drawn from `role_count` labels.
pub fn random_sentence(rng: &mut ChaCha8Rng, role_count: usize) -> Sentence {
    let n = rng.random_range(1..=8);
    let n_pred = rng.random_range(0..=3.min(n));
    let mut positions: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        positions.swap(i, rng.random_range(0..=i));
    }
    let mut preds = positions[..n_pred].to_vec();
    preds.sort_unstable();
    let tokens = (0..n)
        .map(|i| {
            let form = format!("w{}", rng.random_range(0..6));
            let is_pred = preds.contains(&i);
            let pos = if is_pred {
                PRED_POS[rng.random_range(0..3)]
            } else {
                "DT"
            };
            let mut t = Token::new(i + 1, &form, &form, pos);
            t.head = Some(if i == 0 { 0 } else { rng.random_range(0..=i) });
            if is_pred {
                t.fill_pred = true;
                t.pred_sense = Some(format!("{form}.0{}", rng.random_range(1..=2)));
            }
            t.apreds = (0..n_pred)
                .map(|_| {
                    rng.random_bool(0.4)
                        .then(|| ROLES[rng.random_range(0..role_count)].to_string())
                })
                .collect();
            t
        })
        .collect();
    Sentence::new(tokens).unwrap()
}

/// Gold corpus and an aligned prediction that reuses gold cells with
/// probability one half and otherwise redraws them.
pub fn random_pair(seed: u64) -> (Vec<Sentence>, Vec<Sentence>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let role_count = rng.random_range(1..=4);
    let gold: Vec<Sentence> = (0..rng.random_range(0..=5))
        .map(|_| random_sentence(&mut rng, role_count))
        .collect();
    let pred = gold
        .iter()
        .map(|s| {
            let roles: Vec<Vec<Option<String>>> = (0..s.predicate_positions().len())
                .map(|k| {
                    s.roles_of(k)
                        .into_iter()
                        .map(|cell| {
                            if rng.random_bool(0.5) {
                                cell
                            } else {
                                rng.random_bool(0.4)
                                    .then(|| ROLES[rng.random_range(0..role_count)].to_string())
                            }
                        })
                        .collect()
                })
                .collect();
            s.with_roles(&roles).unwrap()
        })
        .collect();
    (gold, pred)
}
