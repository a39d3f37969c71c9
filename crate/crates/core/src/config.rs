use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lang {
    English,
    Chinese,
    Czech,
    Spanish,
}

impl Lang {
    /// Default word-embedding width for the language.
    pub fn word_dim(self) -> usize {
        match self {
            Lang::English => 100,
            Lang::Chinese => 128,
            Lang::Czech | Lang::Spanish => 300,
        }
    }
}

impl FromStr for Lang {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "en" | "eng" | "english" => Ok(Lang::English),
            "zh" | "chi" | "chinese" => Ok(Lang::Chinese),
            "cs" | "cze" | "czech" => Ok(Lang::Czech),
            "es" | "spa" | "spanish" => Ok(Lang::Spanish),
            _ => Err(Error::Config(format!("unknown language {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassifierVariant {
    /// `W_r v_i`
    Basic,
    /// `W_r (v_i ∘ v_p)`
    PredicateState,
    /// `ReLU(U (u_l ∘ v_r)) · (v_i ∘ v_p)`
    Compositional,
}

impl fmt::Display for ClassifierVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierVariant::Basic => "basic",
            ClassifierVariant::PredicateState => "predicate-state",
            ClassifierVariant::Compositional => "compositional",
        })
    }
}

impl FromStr for ClassifierVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(ClassifierVariant::Basic),
            "predicate-state" | "predicate_state" => Ok(ClassifierVariant::PredicateState),
            "compositional" => Ok(ClassifierVariant::Compositional),
            _ => Err(Error::Config(format!("unknown classifier variant {s:?}"))),
        }
    }
}

/// Architecture and optimisation hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub d_word: usize,
    pub d_pretrained: usize,
    pub d_pos: usize,
    pub d_lemma: usize,
    pub d_hidden: usize,
    pub d_role: usize,
    pub d_lemma_out: usize,
    pub layers: usize,
    pub alpha: f64,
    pub learning_rate: f64,
    pub variant: ClassifierVariant,
    pub use_pos: bool,
    pub use_predicate_flag: bool,
    pub min_lemma_freq: u64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::for_lang(Lang::English)
    }
}

impl ModelConfig {
    pub fn for_lang(lang: Lang) -> Self {
        ModelConfig {
            d_word: lang.word_dim(),
            d_pretrained: lang.word_dim(),
            d_pos: 16,
            d_lemma: 100,
            d_hidden: 512,
            d_role: 128,
            d_lemma_out: 128,
            layers: 4,
            alpha: 0.25,
            learning_rate: 0.01,
            variant: ClassifierVariant::Compositional,
            use_pos: true,
            use_predicate_flag: true,
            min_lemma_freq: 2,
            seed: 1,
        }
    }

    /// Width of one word representation, flag dimension included.
    pub fn input_width(&self) -> usize {
        self.d_word + self.d_pretrained + self.d_pos + self.d_lemma + 1
    }

    /// Width of one encoder output state `v_i`.
    pub fn state_width(&self) -> usize {
        2 * self.d_hidden
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_word", self.d_word),
            ("d_pretrained", self.d_pretrained),
            ("d_pos", self.d_pos),
            ("d_lemma", self.d_lemma),
            ("d_hidden", self.d_hidden),
            ("d_role", self.d_role),
            ("d_lemma_out", self.d_lemma_out),
            ("layers", self.layers),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config("alpha must be a finite non-negative number".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("d_word", self.d_word.to_string()),
            ("d_pretrained", self.d_pretrained.to_string()),
            ("d_pos", self.d_pos.to_string()),
            ("d_lemma", self.d_lemma.to_string()),
            ("d_hidden", self.d_hidden.to_string()),
            ("d_role", self.d_role.to_string()),
            ("d_lemma_out", self.d_lemma_out.to_string()),
            ("layers", self.layers.to_string()),
            ("alpha", format_f64(self.alpha)),
            ("learning_rate", format_f64(self.learning_rate)),
            ("variant", self.variant.to_string()),
            ("use_pos", self.use_pos.to_string()),
            ("use_predicate_flag", self.use_predicate_flag.to_string()),
            ("min_lemma_freq", self.min_lemma_freq.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    /// `key = value` lines, one per field.
    pub fn to_text(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Overrides fields from `key = value` pairs; unknown keys are errors.
    pub fn apply(&mut self, pairs: &BTreeMap<String, String>) -> Result<()> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
        }
        match key {
            "d_word" => self.d_word = parse(key, value)?,
            "d_pretrained" => self.d_pretrained = parse(key, value)?,
            "d_pos" => self.d_pos = parse(key, value)?,
            "d_lemma" => self.d_lemma = parse(key, value)?,
            "d_hidden" => self.d_hidden = parse(key, value)?,
            "d_role" => self.d_role = parse(key, value)?,
            "d_lemma_out" => self.d_lemma_out = parse(key, value)?,
            "layers" => self.layers = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "variant" => self.variant = value.parse()?,
            "use_pos" => self.use_pos = parse(key, value)?,
            "use_predicate_flag" => self.use_predicate_flag = parse(key, value)?,
            "min_lemma_freq" => self.min_lemma_freq = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown model key {key:?}"))),
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        cfg.apply(&parse_key_values(text)?)?;
        Ok(cfg)
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub(crate) fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected `key = value`, found {line:?}"),
        })?;
        let k = k.trim().replace('-', "_");
        if out.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("duplicate key {k:?}"),
            });
        }
    }
    Ok(out)
}

/// The four ablation configurations compared on the development set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationPreset {
    Full,
    NoPos,
    NoPredicateFlag,
    BasicClassifier,
}

impl AblationPreset {
    pub const ALL: [AblationPreset; 4] = [
        AblationPreset::Full,
        AblationPreset::NoPos,
        AblationPreset::NoPredicateFlag,
        AblationPreset::BasicClassifier,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AblationPreset::Full => "full model",
            AblationPreset::NoPos => "w/o POS tags",
            AblationPreset::NoPredicateFlag => "w/o predicate-specific encoding",
            AblationPreset::BasicClassifier => "with basic classifier",
        }
    }

    pub fn apply(self, base: &ModelConfig) -> ModelConfig {
        let mut cfg = base.clone();
        cfg.use_pos = true;
        cfg.use_predicate_flag = true;
        cfg.variant = ClassifierVariant::Compositional;
        match self {
            AblationPreset::Full => {}
            AblationPreset::NoPos => cfg.use_pos = false,
            AblationPreset::NoPredicateFlag => cfg.use_predicate_flag = false,
            AblationPreset::BasicClassifier => cfg.variant = ClassifierVariant::Basic,
        }
        cfg
    }
}
