//! Parameter layout of the role labeler and the mapping from CoNLL
//! instances to symbol ids.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ParamId, ParamStore, Tensor};
use crate::config::{ClassifierVariant, ModelConfig};
use crate::conll::PredicateInstance;
use crate::error::{Error, Result};
use crate::vocab::{PretrainedTable, Vocabulary, NULL_ROLE};

/// Half-width of the uniform range used for embedding tables.
pub const EMBEDDING_INIT_RANGE: f64 = 0.01;
pub const FORGET_BIAS: f64 = 1.0;

/// Weights of one LSTM direction. Gate blocks are stacked in the order
/// input, forget, cell candidate, output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmDirection {
    /// `[4·d_h × input_width]`
    pub w_input: ParamId,
    /// `[4·d_h × d_h]`
    pub w_hidden: ParamId,
    /// `[4·d_h]`
    pub bias: ParamId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmLayer {
    pub forward: LstmDirection,
    pub backward: LstmDirection,
    pub input_width: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassifierParams {
    /// `W_r`: `[R × 2·d_h]`
    Basic { weights: ParamId },
    /// `W_r`: `[R × 4·d_h]`
    PredicateState { weights: ParamId },
    Compositional {
        /// `U`: `[4·d_h × (d'_l + d_r)]`
        combine: ParamId,
        /// `v_r`: `[R × d_r]`
        roles: ParamId,
        /// `u_l`: `[L × d'_l]`
        lemmas: ParamId,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    pub word: ParamId,
    pub pos: ParamId,
    pub lemma: ParamId,
    pub layers: Vec<LstmLayer>,
    pub classifier: ClassifierParams,
}

#[derive(Clone, Copy)]
enum Init {
    Embedding,
    Xavier,
    LstmBias,
}

fn build_layout(config: &ModelConfig, vocab: &Vocabulary) -> (ParamStore, ParamLayout, Vec<Init>) {
    let mut store = ParamStore::new();
    let mut inits = Vec::new();
    let mut add = |name: String, shape: &[usize], init: Init| {
        inits.push(init);
        store.add(name, Tensor::zeros(shape).with_grad())
    };
    let h = config.d_hidden;
    let word = add("emb.word".into(), &[vocab.words.len(), config.d_word], Init::Embedding);
    let pos = add("emb.pos".into(), &[vocab.pos.len(), config.d_pos], Init::Embedding);
    let lemma = add(
        "emb.lemma".into(),
        &[vocab.lemmas.len(), config.d_lemma],
        Init::Embedding,
    );
    let mut layers = Vec::with_capacity(config.layers);
    for l in 0..config.layers {
        let input_width = if l == 0 { config.input_width() } else { 2 * h };
        let mut direction = |dir: &str| LstmDirection {
            w_input: add(format!("lstm.{l}.{dir}.w_input"), &[4 * h, input_width], Init::Xavier),
            w_hidden: add(format!("lstm.{l}.{dir}.w_hidden"), &[4 * h, h], Init::Xavier),
            bias: add(format!("lstm.{l}.{dir}.bias"), &[4 * h], Init::LstmBias),
        };
        let forward = direction("fwd");
        let backward = direction("bwd");
        layers.push(LstmLayer {
            forward,
            backward,
            input_width,
        });
    }
    let r = vocab.role_count();
    let classifier = match config.variant {
        ClassifierVariant::Basic => ClassifierParams::Basic {
            weights: add("cls.weights".into(), &[r, 2 * h], Init::Xavier),
        },
        ClassifierVariant::PredicateState => ClassifierParams::PredicateState {
            weights: add("cls.weights".into(), &[r, 4 * h], Init::Xavier),
        },
        ClassifierVariant::Compositional => ClassifierParams::Compositional {
            combine: add(
                "cls.combine".into(),
                &[4 * h, config.d_lemma_out + config.d_role],
                Init::Xavier,
            ),
            roles: add("cls.roles".into(), &[r, config.d_role], Init::Embedding),
            lemmas: add(
                "cls.lemmas".into(),
                &[vocab.lemmas.len(), config.d_lemma_out],
                Init::Embedding,
            ),
        },
    };
    (
        store,
        ParamLayout {
            word,
            pos,
            lemma,
            layers,
            classifier,
        },
        inits,
    )
}

fn initialize(store: &mut ParamStore, inits: &[Init], hidden: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<ParamId> = store.ids().collect();
    for (id, init) in ids.into_iter().zip(inits) {
        let t = store.get_mut(id);
        let shape = t.shape().to_vec();
        match init {
            Init::Embedding => t
                .values_mut()
                .iter_mut()
                .for_each(|v| *v = rng.random_range(-EMBEDDING_INIT_RANGE..EMBEDDING_INIT_RANGE)),
            Init::Xavier => {
                let bound = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                t.values_mut()
                    .iter_mut()
                    .for_each(|v| *v = rng.random_range(-bound..bound));
            }
            Init::LstmBias => {
                let vals = t.values_mut();
                vals.iter_mut().for_each(|v| *v = 0.0);
                vals[hidden..2 * hidden].iter_mut().for_each(|v| *v = FORGET_BIAS);
            }
        }
    }
}

/// All learned parameters plus what is needed to map raw input onto them.
#[derive(Clone, Debug, PartialEq)]
pub struct SrlModel {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub pretrained: PretrainedTable,
    pub params: ParamStore,
    pub layout: ParamLayout,
}

impl SrlModel {
    /// Fresh model with randomly initialized parameters drawn from
    /// `config.seed`.
    pub fn new(config: ModelConfig, vocab: Vocabulary, pretrained: PretrainedTable) -> Result<Self> {
        config.validate()?;
        if pretrained.dim() != config.d_pretrained {
            return Err(Error::Config(format!(
                "pretrained vectors have {} dimensions, model expects {}",
                pretrained.dim(),
                config.d_pretrained
            )));
        }
        let (mut params, layout, inits) = build_layout(&config, &vocab);
        initialize(&mut params, &inits, config.d_hidden, config.seed);
        Ok(SrlModel {
            config,
            vocab,
            pretrained,
            params,
            layout,
        })
    }

    /// Reassembles a model from stored parameters, checking every name and
    /// shape against the layout implied by `config` and `vocab`.
    pub fn from_parts(
        config: ModelConfig,
        vocab: Vocabulary,
        pretrained: PretrainedTable,
        stored: Vec<(String, Tensor)>,
    ) -> Result<Self> {
        config.validate()?;
        let (mut params, layout, _) = build_layout(&config, &vocab);
        if stored.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                params.len(),
                stored.len()
            )));
        }
        for ((name, tensor), id) in stored.into_iter().zip(params.ids().collect::<Vec<_>>()) {
            let slot = params.get_mut(id);
            if slot.shape() != tensor.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} has shape {:?}, layout expects {:?}",
                    tensor.shape(),
                    slot.shape()
                )));
            }
            slot.values_mut().copy_from_slice(tensor.values());
            if params.name(id) != name {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} found where {} was expected",
                    params.name(id)
                )));
            }
        }
        if pretrained.dim() != config.d_pretrained {
            return Err(Error::Checkpoint("pretrained width does not match config".into()));
        }
        Ok(SrlModel {
            config,
            vocab,
            pretrained,
            params,
            layout,
        })
    }

    /// Parameter tensors grouped for reporting: every name with its scalar
    /// count.
    pub fn parameter_groups(&self) -> Vec<(String, usize)> {
        self.params.iter().map(|(_, n, t)| (n.to_string(), t.len())).collect()
    }

    pub fn features(&self, instance: &PredicateInstance) -> InstanceFeatures {
        let tokens = instance.sentence.tokens();
        InstanceFeatures {
            words: tokens.iter().map(|t| self.vocab.word_id(&t.form)).collect(),
            pretrained: tokens.iter().map(|t| self.pretrained.row(&t.form)).collect(),
            pos: tokens.iter().map(|t| self.vocab.pos_id(&t.ppos)).collect(),
            lemmas: tokens
                .iter()
                .map(|t| t.fill_pred.then(|| self.vocab.lemma_id(&t.plemma)))
                .collect(),
            predicate: instance.predicate_index,
            gold: instance
                .gold_roles
                .iter()
                .map(|r| self.vocab.role_id(r.as_deref()).unwrap_or(NULL_ROLE))
                .collect(),
        }
    }
}

/// Symbol ids of one predicate instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceFeatures {
    pub words: Vec<usize>,
    /// Row in the pretrained table; `None` selects its UNK vector.
    pub pretrained: Vec<Option<usize>>,
    pub pos: Vec<usize>,
    /// Lemma id at every predicate token of the sentence, `None` elsewhere.
    pub lemmas: Vec<Option<usize>>,
    pub predicate: usize,
    /// Gold role ids. Labels never seen in training count as NULL.
    pub gold: Vec<usize>,
}

impl InstanceFeatures {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Lemma id of the current predicate.
    pub fn predicate_lemma(&self) -> usize {
        self.lemmas[self.predicate].expect("predicate token carries a lemma")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Lang;
    use crate::conll::{extract_instances, read_conll2009_str};

    const TEXT: &str = "\
1\tSequa\t_\tsequa\t_\tNNP\t_\t_\t2\t_\t_\t_\t_\t_\tA0
2\tmakes\t_\tmake\t_\tVBZ\t_\t_\t0\t_\t_\t_\tY\tmake.01\t_
3\tengines\t_\tengine\t_\tNNS\t_\t_\t2\t_\t_\t_\t_\t_\tA1
";

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            d_word: 3,
            d_pretrained: 2,
            d_pos: 2,
            d_lemma: 2,
            d_hidden: 4,
            d_role: 3,
            d_lemma_out: 3,
            layers: 2,
            min_lemma_freq: 1,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn layout_shapes() {
        let sents = read_conll2009_str(TEXT).unwrap();
        let vocab = Vocabulary::build(&sents, 1).unwrap();
        let cfg = tiny_config();
        let m = SrlModel::new(cfg.clone(), vocab, PretrainedTable::empty(2)).unwrap();
        let l0 = m.layout.layers[0];
        assert_eq!(m.params.get(l0.forward.w_input).shape(), &[16, 10]);
        assert_eq!(m.params.get(m.layout.layers[1].backward.w_input).shape(), &[16, 8]);
        let bias = m.params.get(l0.backward.bias).values();
        assert_eq!(&bias[..4], &[0.0; 4]);
        assert_eq!(&bias[4..8], &[1.0; 4]);
        assert_eq!(&bias[8..], &[0.0; 8]);
        match m.layout.classifier {
            ClassifierParams::Compositional { combine, roles, lemmas } => {
                assert_eq!(m.params.get(combine).shape(), &[16, 6]);
                assert_eq!(m.params.get(roles).shape(), &[3, 3]);
                assert_eq!(m.params.get(lemmas).shape(), &[3, 3]);
            }
            other => panic!("unexpected classifier {other:?}"),
        }
        let emb = m.params.get(m.layout.word).values();
        assert!(emb.iter().all(|v| v.abs() <= EMBEDDING_INIT_RANGE));
        let w = m.params.get(l0.forward.w_hidden).values();
        let bound = (6.0f64 / 20.0).sqrt();
        assert!(w.iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn english_default_dimensions() {
        let sents = read_conll2009_str(TEXT).unwrap();
        let vocab = Vocabulary::build(&sents, 1).unwrap();
        let cfg = ModelConfig::for_lang(Lang::English);
        let m = SrlModel::new(cfg, vocab, PretrainedTable::empty(100)).unwrap();
        assert_eq!(m.layout.layers[0].input_width, 317);
        assert_eq!(m.layout.layers[1].input_width, 1024);
        if let ClassifierParams::Compositional { combine, .. } = m.layout.classifier {
            assert_eq!(m.params.get(combine).shape(), &[2048, 256]);
        } else {
            panic!("default variant must be compositional");
        }
    }

    #[test]
    fn pretrained_width_must_match() {
        let sents = read_conll2009_str(TEXT).unwrap();
        let vocab = Vocabulary::build(&sents, 1).unwrap();
        assert!(SrlModel::new(tiny_config(), vocab, PretrainedTable::empty(5)).is_err());
    }

    #[test]
    fn same_seed_same_parameters() {
        let sents = read_conll2009_str(TEXT).unwrap();
        let vocab = Vocabulary::build(&sents, 1).unwrap();
        let a = SrlModel::new(tiny_config(), vocab.clone(), PretrainedTable::empty(2)).unwrap();
        let b = SrlModel::new(tiny_config(), vocab.clone(), PretrainedTable::empty(2)).unwrap();
        assert_eq!(a.params, b.params);
        let mut cfg = tiny_config();
        cfg.seed = 99;
        let c = SrlModel::new(cfg, vocab, PretrainedTable::empty(2)).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn features_map_symbols() {
        let sents = read_conll2009_str(TEXT).unwrap();
        let vocab = Vocabulary::build(&sents, 1).unwrap();
        let m = SrlModel::new(tiny_config(), vocab, PretrainedTable::empty(2)).unwrap();
        let inst = extract_instances(&sents[0]);
        let f = m.features(&inst[0]);
        assert_eq!(f.predicate, 1);
        assert_eq!(f.lemmas[0], None);
        assert_eq!(f.predicate_lemma(), m.vocab.lemma_id("make"));
        let a0 = m.vocab.role_id(Some("A0")).unwrap();
        let a1 = m.vocab.role_id(Some("A1")).unwrap();
        assert_eq!(f.gold, vec![a0, NULL_ROLE, a1]);
        assert_eq!(f.pretrained, vec![None; 3]);
    }

    #[test]
    fn from_parts_rejects_wrong_shapes() {
        let sents = read_conll2009_str(TEXT).unwrap();
        let vocab = Vocabulary::build(&sents, 1).unwrap();
        let m = SrlModel::new(tiny_config(), vocab.clone(), PretrainedTable::empty(2)).unwrap();
        let mut stored: Vec<(String, Tensor)> = m.params.iter().map(|(_, n, t)| (n.to_string(), t.clone())).collect();
        let back =
            SrlModel::from_parts(tiny_config(), vocab.clone(), PretrainedTable::empty(2), stored.clone()).unwrap();
        assert_eq!(back.params, m.params);
        stored[0].1 = Tensor::zeros(&[1, 1]);
        assert!(SrlModel::from_parts(tiny_config(), vocab, PretrainedTable::empty(2), stored).is_err());
    }
}
