//! The four-way ablation grid on a development set.

use std::fmt::Write as _;

use crate::autodiff::Tape;
use crate::config::{AblationPreset, ClassifierVariant, ModelConfig};
use crate::conll::{extract_all, Sentence};
use crate::encoder::represent_words;
use crate::error::{Error, Result};
use crate::eval::Counts;
use crate::model::SrlModel;
use crate::train::{evaluate_model, train_with_progress, TrainSchedule};
use crate::vocab::{PretrainedTable, Vocabulary};

#[derive(Clone, Debug)]
pub struct AblationResult {
    pub preset: AblationPreset,
    pub dev: Counts,
    pub best_epoch: usize,
    pub parameters: usize,
}

/// Checks that a preset switches exactly what it claims, on a model built
/// for `sentences`: POS block zeroed, flag held at 0, classifier swapped.
pub fn check_wiring(
    preset: AblationPreset,
    base: &ModelConfig,
    sentences: &[Sentence],
    pretrained: &PretrainedTable,
) -> Result<()> {
    let cfg = preset.apply(base);
    let vocab = Vocabulary::build(sentences, cfg.min_lemma_freq)?;
    let full = SrlModel::new(AblationPreset::Full.apply(base), vocab.clone(), pretrained.clone())?;
    let model = SrlModel::new(cfg.clone(), vocab, pretrained.clone())?;
    let fail = |what: &str| Err(Error::Config(format!("preset {:?}: {what}", preset.label())));

    let wanted_variant = match preset {
        AblationPreset::BasicClassifier => ClassifierVariant::Basic,
        _ => ClassifierVariant::Compositional,
    };
    if cfg.variant != wanted_variant {
        return fail("wrong classifier variant");
    }
    if cfg.input_width() != full.config.input_width() {
        return fail("input width changed");
    }
    let encoder_params = |m: &SrlModel| {
        m.params
            .iter()
            .filter(|(_, n, _)| !n.starts_with("cls."))
            .map(|(_, _, t)| t.len())
            .sum::<usize>()
    };
    if encoder_params(&model) != encoder_params(&full) {
        return fail("encoder parameter count changed");
    }

    let Some(inst) = extract_all(sentences).into_iter().next() else {
        return Ok(());
    };
    let feats = model.features(&inst);
    let mut tape = Tape::with_params(&model.params);
    let xs = represent_words(&mut tape, &model, &feats, None)?;
    let d = &cfg;
    let pos_start = d.d_word + d.d_pretrained;
    for x in &xs {
        let v = tape.value(*x);
        if !cfg.use_pos && v[pos_start..pos_start + d.d_pos].iter().any(|&e| e != 0.0) {
            return fail("POS block is not zero");
        }
        if !cfg.use_predicate_flag && v[v.len() - 1] != 0.0 {
            return fail("predicate flag is not held at zero");
        }
    }
    Ok(())
}

/// Trains every preset with the same seed and schedule and scores it on
/// `dev`.
pub fn run_ablation(
    train_set: &[Sentence],
    dev_set: &[Sentence],
    base: &ModelConfig,
    pretrained: &PretrainedTable,
    schedule: &TrainSchedule,
    mut progress: impl FnMut(AblationPreset, &str),
) -> Result<Vec<AblationResult>> {
    for preset in AblationPreset::ALL {
        check_wiring(preset, base, train_set, pretrained)?;
    }
    let mut out = Vec::new();
    for preset in AblationPreset::ALL {
        let cfg = preset.apply(base);
        let outcome = train_with_progress(train_set, dev_set, &cfg, pretrained.clone(), schedule, |r| {
            progress(preset, &r.to_string())
        })?;
        let model = &outcome.checkpoint.model;
        out.push(AblationResult {
            preset,
            dev: evaluate_model(model, dev_set)?,
            best_epoch: outcome.checkpoint.best_epoch,
            parameters: model.params.scalar_count(),
        });
    }
    Ok(out)
}

/// Dev P/R/F1 per preset with the F1 change against the full model.
pub fn format_ablation_table(results: &[AblationResult]) -> String {
    let full_f1 = results
        .iter()
        .find(|r| r.preset == AblationPreset::Full)
        .map(|r| r.dev.f1());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<34} {:>7} {:>7} {:>7} {:>7} {:>11}",
        "configuration", "P", "R", "F1", "dF1", "parameters"
    );
    for r in results {
        let delta = full_f1.map_or(String::from("-"), |f| format!("{:+.2}", 100.0 * (r.dev.f1() - f)));
        let _ = writeln!(
            out,
            "{:<34} {:>7.2} {:>7.2} {:>7.2} {:>7} {:>11}",
            r.preset.label(),
            100.0 * r.dev.precision(),
            100.0 * r.dev.recall(),
            100.0 * r.dev.f1(),
            delta,
            r.parameters
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::positional;

    fn base() -> ModelConfig {
        ModelConfig {
            d_word: 4,
            d_pretrained: 2,
            d_pos: 3,
            d_lemma: 3,
            d_hidden: 4,
            d_role: 3,
            d_lemma_out: 3,
            layers: 1,
            min_lemma_freq: 1,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn presets_are_wired() {
        let sents = positional(4, 1);
        for preset in AblationPreset::ALL {
            check_wiring(preset, &base(), &sents, &PretrainedTable::empty(2)).unwrap();
        }
    }

    #[test]
    fn grid_has_four_rows() {
        let sents = positional(4, 1);
        let schedule = TrainSchedule {
            max_epochs: 1,
            ..TrainSchedule::default()
        };
        let results = run_ablation(
            &sents,
            &sents,
            &base(),
            &PretrainedTable::empty(2),
            &schedule,
            |_, _| {},
        )
        .unwrap();
        assert_eq!(results.len(), 4);
        let table = format_ablation_table(&results);
        assert!(table.contains("w/o predicate-specific encoding"));
        assert!(table.lines().nth(1).unwrap().contains("+0.00"));
    }
}
