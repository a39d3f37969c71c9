//! Generated corpora with known role rules, for smoke tests and for
//! checking that the ablations move in the expected direction.

use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conll::{Sentence, Token};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticKind {
    /// One predicate per sentence. The word before it is A0, the word after
    /// it A1 and the one after that A2.
    Positional,
    /// Two predicates with the same lemma, `L P X P R`: X is A1 of the first
    /// and A0 of the second. Telling the two apart needs to know which
    /// predicate is being labeled.
    SharedArgument,
    /// One predicate whose lemma decides whether a distant argument is A1
    /// or A2.
    LemmaDependent,
}

impl SyntheticKind {
    pub const ALL: [SyntheticKind; 3] = [
        SyntheticKind::Positional,
        SyntheticKind::SharedArgument,
        SyntheticKind::LemmaDependent,
    ];

    pub fn generate(self, sentences: usize, seed: u64) -> Vec<Sentence> {
        match self {
            SyntheticKind::Positional => positional(sentences, seed),
            SyntheticKind::SharedArgument => shared_argument(sentences, seed),
            SyntheticKind::LemmaDependent => lemma_dependent(sentences, seed),
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyntheticKind::Positional => "positional",
            SyntheticKind::SharedArgument => "shared-argument",
            SyntheticKind::LemmaDependent => "lemma-dependent",
        })
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SyntheticKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown synthetic corpus {s:?}")))
    }
}

/// Size of the word inventory of the positional corpus.
pub const POSITIONAL_WORDS: usize = 30;

struct Draft {
    words: Vec<(String, String)>,
    predicates: Vec<(usize, String)>,
    /// `(predicate rank, token, role)`
    args: Vec<(usize, usize, &'static str)>,
}

impl Draft {
    fn build(self) -> Sentence {
        let n = self.words.len();
        let head_of = self.predicates.first().map_or(0, |(p, _)| p + 1);
        let tokens = self
            .words
            .iter()
            .enumerate()
            .map(|(i, (form, pos))| {
                let pred = self.predicates.iter().find(|(p, _)| *p == i);
                let lemma = pred.map_or(form.as_str(), |(_, l)| l.as_str());
                let mut t = Token::new(i + 1, form, lemma, pos);
                t.head = Some(if i + 1 == head_of { 0 } else { head_of });
                if let Some((_, l)) = pred {
                    t.fill_pred = true;
                    t.pred_sense = Some(format!("{l}.01"));
                }
                t.apreds = (0..self.predicates.len())
                    .map(|rank| {
                        self.args
                            .iter()
                            .find(|(r, a, _)| *r == rank && *a == i)
                            .map(|(_, _, role)| role.to_string())
                    })
                    .collect();
                t
            })
            .collect::<Vec<_>>();
        debug_assert_eq!(tokens.len(), n);
        Sentence::new(tokens).expect("generated sentence is well formed")
    }
}

fn filler(rng: &mut impl Rng, vocab: usize) -> (String, String) {
    let w = rng.random_range(0..vocab);
    (format!("w{w:02}"), ["DT", "JJ", "NN", "RB"][w % 4].to_string())
}

pub fn positional(sentences: usize, seed: u64) -> Vec<Sentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..sentences)
        .map(|_| {
            let n = rng.random_range(5..=9);
            let p = rng.random_range(1..=n - 3);
            let mut words: Vec<(String, String)> = (0..n).map(|_| filler(&mut rng, POSITIONAL_WORDS)).collect();
            words[p].1 = "VB".into();
            let lemma = words[p].0.clone();
            Draft {
                words,
                predicates: vec![(p, lemma)],
                args: vec![(0, p - 1, "A0"), (0, p + 1, "A1"), (0, p + 2, "A2")],
            }
            .build()
        })
        .collect()
}

const PREDICATE_LEMMAS: [&str; 8] = ["make", "take", "give", "sell", "hold", "keep", "send", "find"];

pub fn shared_argument(sentences: usize, seed: u64) -> Vec<Sentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..sentences)
        .map(|_| {
            let before = rng.random_range(0..=2);
            let after = rng.random_range(0..=2);
            let lemma = PREDICATE_LEMMAS.choose(&mut rng).unwrap().to_string();
            let mut words: Vec<(String, String)> = (0..before).map(|_| filler(&mut rng, 20)).collect();
            let l = words.len();
            words.push(filler(&mut rng, 20));
            let p1 = words.len();
            words.push((lemma.clone(), "VB".into()));
            let x = words.len();
            words.push(filler(&mut rng, 20));
            let p2 = words.len();
            words.push((lemma.clone(), "VB".into()));
            let r = words.len();
            words.push(filler(&mut rng, 20));
            words.extend((0..after).map(|_| filler(&mut rng, 20)));
            Draft {
                words,
                predicates: vec![(p1, lemma.clone()), (p2, lemma)],
                args: vec![(0, l, "A0"), (0, x, "A1"), (1, x, "A0"), (1, r, "A1")],
            }
            .build()
        })
        .collect()
}

/// Lemmas of the lemma-dependent corpus; even indices take A1, odd A2.
pub const LEMMA_POOL: usize = 40;

pub fn lemma_dependent(sentences: usize, seed: u64) -> Vec<Sentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..sentences)
        .map(|_| {
            let k = rng.random_range(0..LEMMA_POOL);
            let lemma = format!("pred{k:02}");
            let role = if k % 2 == 0 { "A1" } else { "A2" };
            let gap = rng.random_range(4..=8);
            let before = rng.random_range(1..=2);
            let after = rng.random_range(0..=2);
            let mut words: Vec<(String, String)> = (0..before).map(|_| filler(&mut rng, 20)).collect();
            let p = words.len();
            words.push((lemma.clone(), "VB".into()));
            words.extend((1..gap).map(|_| filler(&mut rng, 20)));
            let a = words.len();
            words.push((format!("obj{:02}", rng.random_range(0..10)), "NNP".into()));
            words.extend((0..after).map(|_| filler(&mut rng, 20)));
            Draft {
                words,
                predicates: vec![(p, lemma)],
                args: vec![(0, p - 1, "A0"), (0, a, role)],
            }
            .build()
        })
        .collect()
}
