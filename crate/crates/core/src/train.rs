//! Cross-entropy training with Adam and dev-set model selection.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::{adam_step, clip_grad_norm, AdamState, ParamGrads, Tape, Var};
use crate::checkpoint::Checkpoint;
use crate::classifier::{instance_logits, predict_labels};
use crate::config::ModelConfig;
use crate::conll::{extract_all, extract_instances, Sentence};
use crate::encoder::{encode, DroppedWords};
use crate::error::{Error, Result};
use crate::eval::{edges, score_labeled, Counts};
use crate::model::{InstanceFeatures, SrlModel};
use crate::vocab::{word_dropout, PretrainedTable, Vocabulary};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSchedule {
    pub max_epochs: usize,
    /// Epochs without dev F1 improvement before stopping.
    pub patience: usize,
    /// Instances per Adam step.
    pub batch_size: usize,
    /// Seeds shuffling and word dropout.
    pub seed: u64,
    /// 1 runs sequentially. More threads compute the instances of a batch
    /// concurrently; gradients are still summed in instance order.
    pub threads: usize,
    pub clip_norm: Option<f64>,
    /// Word dropout also replaces the pretrained vector with its UNK row.
    pub drop_pretrained: bool,
    /// Stop as soon as dev F1 reaches this value.
    pub stop_at_f1: Option<f64>,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            max_epochs: 30,
            patience: 5,
            batch_size: 1,
            seed: 1,
            threads: 1,
            clip_norm: None,
            drop_pretrained: true,
            stop_at_f1: None,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.patience == 0 || self.batch_size == 0 || self.threads == 0 {
            return Err(Error::Config(
                "max_epochs, patience, batch_size and threads must be positive".into(),
            ));
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
        }
        match key {
            "max_epochs" => self.max_epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            "clip_norm" => {
                self.clip_norm = match value {
                    "none" | "" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "drop_pretrained" => self.drop_pretrained = parse(key, value)?,
            "stop_at_f1" => {
                self.stop_at_f1 = match value {
                    "none" | "" => None,
                    v => Some(parse(key, v)?),
                }
            }
            _ => return Err(Error::Config(format!("unknown schedule key {key:?}"))),
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x:?}"));
        vec![
            ("max_epochs", self.max_epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("threads", self.threads.to_string()),
            ("clip_norm", opt(self.clip_norm)),
            ("drop_pretrained", self.drop_pretrained.to_string()),
            ("stop_at_f1", opt(self.stop_at_f1)),
        ]
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub dev: Counts,
}

impl fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={} loss={:.6} dev_p={:.4} dev_r={:.4} dev_f1={:.4}",
            self.epoch,
            self.mean_loss,
            self.dev.precision(),
            self.dev.recall(),
            self.dev.f1()
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best dev F1.
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochRecord>,
}

/// Summed cross-entropy over every token of one instance.
pub fn instance_loss(
    tape: &mut Tape,
    model: &SrlModel,
    feats: &InstanceFeatures,
    dropped: Option<DroppedWords<'_>>,
) -> Result<Var> {
    let states = encode(tape, model, feats, dropped)?;
    let logits = instance_logits(tape, model, feats, &states)?;
    let losses = logits
        .iter()
        .zip(&feats.gold)
        .map(|(&l, &g)| tape.softmax_cross_entropy(l, g))
        .collect::<Result<Vec<_>>>()?;
    tape.sum_scalars(&losses)
}

/// Loss value and parameter gradients of one instance.
pub fn loss_and_gradients(
    model: &SrlModel,
    feats: &InstanceFeatures,
    dropped: Option<DroppedWords<'_>>,
) -> Result<(f64, ParamGrads)> {
    let mut tape = Tape::with_params(&model.params);
    let loss = instance_loss(&mut tape, model, feats, dropped)?;
    let value = tape.scalar(loss);
    let grads = tape.backward(loss)?;
    Ok((value, grads.into_params()))
}

/// Copy of `sentences` with every APRED column replaced by predictions.
pub fn predict_corpus(model: &SrlModel, sentences: &[Sentence]) -> Result<Vec<Sentence>> {
    sentences
        .par_iter()
        .map(|s| {
            let roles = extract_instances(s)
                .iter()
                .map(|inst| predict_labels(model, inst))
                .collect::<Result<Vec<_>>>()?;
            s.with_roles(&roles)
        })
        .collect()
}

/// Labeled counts of the model's predictions against the gold roles.
pub fn evaluate_model(model: &SrlModel, gold: &[Sentence]) -> Result<Counts> {
    let pred = predict_corpus(model, gold)?;
    Ok(score_labeled(&edges(gold), &edges(&pred), None))
}

/// Fraction of (token, predicate) cells whose predicted role equals the
/// gold one, NULL included.
pub fn cell_accuracy(model: &SrlModel, gold: &[Sentence]) -> Result<f64> {
    let pred = predict_corpus(model, gold)?;
    let mut total = 0usize;
    let mut right = 0usize;
    for (g, p) in gold.iter().zip(&pred) {
        for (gt, pt) in g.tokens().iter().zip(p.tokens()) {
            total += gt.apreds.len();
            right += gt.apreds.iter().zip(&pt.apreds).filter(|(a, b)| a == b).count();
        }
    }
    Ok(if total == 0 { 1.0 } else { right as f64 / total as f64 })
}

pub fn train(
    train_set: &[Sentence],
    dev_set: &[Sentence],
    config: &ModelConfig,
    pretrained: PretrainedTable,
    schedule: &TrainSchedule,
) -> Result<TrainOutcome> {
    train_with_progress(train_set, dev_set, config, pretrained, schedule, |_| {})
}

/// As [`train`], calling `progress` after every epoch.
pub fn train_with_progress(
    train_set: &[Sentence],
    dev_set: &[Sentence],
    config: &ModelConfig,
    pretrained: PretrainedTable,
    schedule: &TrainSchedule,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    schedule.validate()?;
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Data("training corpus is empty".into()));
    }
    if edges(dev_set).is_empty() {
        return Err(Error::Data(
            "development set has no gold arguments, so F1 is undefined".into(),
        ));
    }
    let vocab = Vocabulary::build(train_set, config.min_lemma_freq)?;
    let mut model = SrlModel::new(config.clone(), vocab, pretrained)?;
    let instances: Vec<InstanceFeatures> = extract_all(train_set).iter().map(|inst| model.features(inst)).collect();
    if instances.is_empty() {
        return Err(Error::Data("training corpus has no predicates".into()));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(schedule.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut adam = AdamState::new(&model.params, config.learning_rate);
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut best = Checkpoint::new(model.clone());
    best.best_f1 = f64::NEG_INFINITY;
    let mut log = Vec::new();
    let mut stale = 0;

    for epoch in 1..=schedule.max_epochs {
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        for batch in order.chunks(schedule.batch_size) {
            let masks: Vec<Vec<bool>> = batch
                .iter()
                .map(|&i| {
                    let words = &instances[i].words;
                    let kept = word_dropout(words, &model.vocab, config.alpha, &mut rng);
                    kept.iter().zip(words).map(|(k, w)| k != w).collect()
                })
                .collect();
            let run = |(&i, mask): (&usize, &Vec<bool>)| {
                let dropped = DroppedWords {
                    mask,
                    pretrained: schedule.drop_pretrained,
                };
                loss_and_gradients(&model, &instances[i], Some(dropped))
            };
            let results: Vec<Result<(f64, ParamGrads)>> = if schedule.threads > 1 {
                pool.install(|| batch.par_iter().zip(masks.par_iter()).map(run).collect())
            } else {
                batch.iter().zip(&masks).map(run).collect()
            };
            let mut merged = ParamGrads::default();
            for r in results {
                let (loss, grads) = r?;
                if !loss.is_finite() {
                    return Err(Error::Graph(format!("loss became {loss} in epoch {epoch}")));
                }
                total_loss += loss;
                merged.merge(&grads);
            }
            model.params.accumulate(&merged);
            if let Some(max) = schedule.clip_norm {
                clip_grad_norm(&mut model.params, max);
            }
            adam_step(&mut model.params, &mut adam)?;
            model.params.zero_grads();
        }

        let dev = pool.install(|| evaluate_model(&model, dev_set))?;
        let record = EpochRecord {
            epoch,
            mean_loss: total_loss / instances.len() as f64,
            dev,
        };
        progress(&record);
        log.push(record);

        let f1 = dev.f1();
        if f1 > best.best_f1 {
            best = Checkpoint {
                model: model.clone(),
                adam: Some(adam.clone()),
                best_f1: f1,
                best_epoch: epoch,
            };
            stale = 0;
        } else {
            stale += 1;
        }
        if stale >= schedule.patience || schedule.stop_at_f1.is_some_and(|t| f1 >= t) {
            break;
        }
    }
    Ok(TrainOutcome { checkpoint: best, log })
}
