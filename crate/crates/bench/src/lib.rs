//! Shared inputs for the benchmarks.

use depsrl::synthetic::SyntheticKind;
use depsrl::{ModelConfig, PretrainedTable, Sentence, SrlModel, Vocabulary};

/// Model with English default widths except for `d_hidden` and `layers`,
/// built over a generated corpus.
pub fn model(d_hidden: usize, layers: usize, corpus: &[Sentence]) -> SrlModel {
    let cfg = ModelConfig {
        d_hidden,
        layers,
        min_lemma_freq: 1,
        ..ModelConfig::default()
    };
    let vocab = Vocabulary::build(corpus, 1).expect("corpus is not empty");
    SrlModel::new(cfg, vocab, PretrainedTable::empty(100)).expect("valid config")
}

pub fn corpus(sentences: usize) -> Vec<Sentence> {
    SyntheticKind::LemmaDependent.generate(sentences, 1)
}
