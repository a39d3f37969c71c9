//! Finite-difference check of the full model's gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::gradcheck::relative_error;
use crate::autodiff::{Fault, Tape};
use crate::config::{ClassifierVariant, ModelConfig};
use crate::conll::{extract_instances, Sentence, Token};
use crate::error::Result;
use crate::model::{InstanceFeatures, SrlModel};
use crate::train::instance_loss;
use crate::vocab::{PretrainedTable, Vocabulary};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Worst relative error over the scalars of one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupError {
    pub name: String,
    pub scalars: usize,
    pub max_relative_error: f64,
}

/// A five-token sentence with one predicate and random symbols.
pub fn fixture_sentence(seed: u64) -> Sentence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = ["the", "firm", "builds", "small", "engines", "fast", "parts"];
    let tags = ["DT", "NN", "VBZ", "JJ", "NNS"];
    let roles = [None, Some("A0"), Some("A1"), Some("AM-MNR")];
    let pred = 2;
    let tokens = (0..5)
        .map(|i| {
            let form = words[rng.random_range(0..words.len())];
            let mut t = Token::new(i + 1, form, form, tags[rng.random_range(0..tags.len())]);
            t.head = Some(if i == pred { 0 } else { pred + 1 });
            if i == pred {
                t.fill_pred = true;
                t.pred_sense = Some(format!("{form}.01"));
                t.apreds = vec![None];
            } else {
                t.apreds = vec![roles[rng.random_range(0..roles.len())].map(str::to_string)];
            }
            t
        })
        .collect();
    Sentence::new(tokens).expect("fixture is well formed")
}

/// Small configuration with `d_h = 8` and two layers.
pub fn fixture_config(variant: ClassifierVariant, seed: u64) -> ModelConfig {
    ModelConfig {
        d_word: 4,
        d_pretrained: 3,
        d_pos: 3,
        d_lemma: 3,
        d_hidden: 8,
        d_role: 3,
        d_lemma_out: 3,
        layers: 2,
        min_lemma_freq: 1,
        variant,
        seed,
        ..ModelConfig::default()
    }
}

/// Random tiny model plus the features of its one instance. The pretrained
/// table knows one word of the sentence so that block is not all zero.
pub fn fixture(variant: ClassifierVariant, seed: u64) -> Result<(SrlModel, InstanceFeatures)> {
    let sentence = fixture_sentence(seed);
    let vocab = Vocabulary::build(std::slice::from_ref(&sentence), 1)?;
    let line = format!("{} 0.3 -0.2 0.1\n", sentence.tokens()[0].form);
    let pretrained = PretrainedTable::load(line.as_bytes(), 3)?;
    let model = SrlModel::new(fixture_config(variant, seed), vocab, pretrained)?;
    let feats = model.features(&extract_instances(&sentence)[0]);
    Ok((model, feats))
}

fn loss_value(model: &SrlModel, feats: &InstanceFeatures, fault: Option<Fault>) -> Result<f64> {
    let mut tape = Tape::with_params(&model.params);
    tape.inject_fault(fault);
    let loss = instance_loss(&mut tape, model, feats, None)?;
    Ok(tape.scalar(loss))
}

/// Compares analytic gradients of the summed cross-entropy against central
/// differences for every scalar of every trainable tensor. `fault` corrupts
/// a backward rule so callers can see the check fail.
pub fn check_model(
    model: &SrlModel,
    feats: &InstanceFeatures,
    step: f64,
    fault: Option<Fault>,
) -> Result<Vec<GroupError>> {
    let analytic = {
        let mut tape = Tape::with_params(&model.params);
        tape.inject_fault(fault);
        let loss = instance_loss(&mut tape, model, feats, None)?;
        tape.backward(loss)?.into_params()
    };
    let mut probe = model.clone();
    let mut report = Vec::new();
    for (id, name, tensor) in model.params.iter() {
        if !tensor.requires_grad() {
            continue;
        }
        let cols = *tensor.shape().last().unwrap_or(&1);
        let grad = analytic
            .get(id)
            .map(|g| g.to_dense(tensor.len(), cols))
            .unwrap_or_else(|| vec![0.0; tensor.len()]);
        let mut worst: f64 = 0.0;
        for k in 0..tensor.len() {
            let original = tensor.values()[k];
            probe.params.get_mut(id).values_mut()[k] = original + step;
            let up = loss_value(&probe, feats, None)?;
            probe.params.get_mut(id).values_mut()[k] = original - step;
            let down = loss_value(&probe, feats, None)?;
            probe.params.get_mut(id).values_mut()[k] = original;
            let numeric = (up - down) / (2.0 * step);
            worst = worst.max(relative_error(grad[k], numeric));
        }
        report.push(GroupError {
            name: name.to_string(),
            scalars: tensor.len(),
            max_relative_error: worst,
        });
    }
    Ok(report)
}

pub fn max_error(report: &[GroupError]) -> f64 {
    report.iter().map(|g| g.max_relative_error).fold(0.0, f64::max)
}
