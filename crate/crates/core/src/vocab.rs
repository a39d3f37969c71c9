//! Symbol inventories, fixed pretrained vectors and frequency-based word
//! dropout.

use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;

use rand::Rng;

use crate::codec::{ByteReader, ByteWriter};
use crate::conll::Sentence;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
/// Role id of the "not an argument" class.
pub const NULL_ROLE: usize = 0;

const PAD_SYMBOL: &str = "<pad>";
const UNK_SYMBOL: &str = "<unk>";
const NULL_SYMBOL: &str = "<null>";

/// Dense string ↔ id map with per-symbol counts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Inventory {
    symbols: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Inventory {
    fn with_reserved(reserved: &[&str]) -> Self {
        let mut inv = Inventory::default();
        for s in reserved {
            inv.push(s, 0);
        }
        inv
    }

    fn push(&mut self, symbol: &str, count: u64) -> usize {
        let id = self.symbols.len();
        self.symbols.push(symbol.to_string());
        self.counts.push(count);
        self.index.insert(symbol.to_string(), id);
        id
    }

    fn observe(&mut self, symbol: &str) {
        match self.index.get(symbol) {
            Some(&id) => self.counts[id] += 1,
            None => {
                self.push(symbol, 1);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn get(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, id: usize) -> &str {
        &self.symbols[id]
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts[id]
    }

    fn encode(&self, w: &mut ByteWriter) {
        w.usize(self.symbols.len());
        for (s, &c) in self.symbols.iter().zip(&self.counts) {
            w.str(s);
            w.u64(c);
        }
    }

    fn decode(r: &mut ByteReader) -> Result<Self> {
        let n = r.usize()?;
        let mut inv = Inventory::default();
        for _ in 0..n {
            let s = r.str()?;
            let c = r.u64()?;
            if inv.index.contains_key(&s) {
                return Err(Error::Checkpoint(format!("duplicate symbol {s:?}")));
            }
            inv.push(&s, c);
        }
        Ok(inv)
    }
}

/// Word, POS, predicate-lemma and role inventories of a training corpus.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    pub words: Inventory,
    pub pos: Inventory,
    pub lemmas: Inventory,
    pub roles: Inventory,
}

impl Vocabulary {
    /// Builds all inventories from training sentences. Lemmas are counted
    /// over predicate tokens only; those seen fewer than `min_lemma_freq`
    /// times are left out and map to UNK.
    pub fn build(sentences: &[Sentence], min_lemma_freq: u64) -> Result<Self> {
        if sentences.iter().all(Sentence::is_empty) {
            return Err(Error::Data("cannot build a vocabulary from an empty corpus".into()));
        }
        let mut words = Inventory::with_reserved(&[PAD_SYMBOL, UNK_SYMBOL]);
        let mut pos = Inventory::with_reserved(&[PAD_SYMBOL, UNK_SYMBOL]);
        let mut lemma_counts = Inventory::default();
        let mut roles = BTreeSet::new();
        for s in sentences {
            for t in s.tokens() {
                words.observe(&t.form);
                pos.observe(&t.ppos);
                if t.fill_pred {
                    lemma_counts.observe(&t.plemma);
                }
                roles.extend(t.apreds.iter().flatten().cloned());
            }
        }
        let mut lemmas = Inventory::with_reserved(&[PAD_SYMBOL, UNK_SYMBOL]);
        for id in 0..lemma_counts.len() {
            let c = lemma_counts.count(id);
            if c >= min_lemma_freq {
                lemmas.push(lemma_counts.symbol(id), c);
            }
        }
        let mut role_inv = Inventory::with_reserved(&[NULL_SYMBOL]);
        for r in &roles {
            role_inv.push(r, 0);
        }
        for s in sentences {
            for t in s.tokens() {
                for r in t.apreds.iter().flatten() {
                    let id = role_inv.get(r).expect("collected above");
                    role_inv.counts[id] += 1;
                }
            }
        }
        Ok(Vocabulary {
            words,
            pos,
            lemmas,
            roles: role_inv,
        })
    }

    pub fn word_id(&self, form: &str) -> usize {
        self.words.get(form).unwrap_or(UNK)
    }

    /// Training frequency fr(w); 0 for UNK and PAD.
    pub fn word_freq(&self, id: usize) -> u64 {
        self.words.count(id)
    }

    pub fn pos_id(&self, tag: &str) -> usize {
        self.pos.get(tag).unwrap_or(UNK)
    }

    pub fn lemma_id(&self, lemma: &str) -> usize {
        self.lemmas.get(lemma).unwrap_or(UNK)
    }

    /// `None` (no role) maps to [`NULL_ROLE`]; an unseen label maps to `None`.
    pub fn role_id(&self, role: Option<&str>) -> Option<usize> {
        match role {
            None => Some(NULL_ROLE),
            Some(r) => self.roles.get(r).filter(|&id| id != NULL_ROLE),
        }
    }

    /// Label of a role id, `None` for the NULL role.
    pub fn role_label(&self, id: usize) -> Option<&str> {
        (id != NULL_ROLE).then(|| self.roles.symbol(id))
    }

    pub fn role_count(&self) -> usize {
        self.roles.len()
    }

    pub(crate) fn encode(&self, w: &mut ByteWriter) {
        self.words.encode(w);
        self.pos.encode(w);
        self.lemmas.encode(w);
        self.roles.encode(w);
    }

    pub(crate) fn decode(r: &mut ByteReader) -> Result<Self> {
        Ok(Vocabulary {
            words: Inventory::decode(r)?,
            pos: Inventory::decode(r)?,
            lemmas: Inventory::decode(r)?,
            roles: Inventory::decode(r)?,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        self.encode(&mut w);
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let v = Vocabulary::decode(&mut r)?;
        if !r.is_done() {
            return Err(Error::Checkpoint("trailing bytes after vocabulary".into()));
        }
        Ok(v)
    }
}

/// Fixed word vectors loaded from a text file; never trained.
#[derive(Clone, Debug, PartialEq)]
pub struct PretrainedTable {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    matrix: Vec<f64>,
    unk: Vec<f64>,
}

impl PretrainedTable {
    /// A table that knows no words; every lookup yields a zero vector.
    pub fn empty(dim: usize) -> Self {
        PretrainedTable {
            dim,
            words: Vec::new(),
            index: HashMap::new(),
            matrix: Vec::new(),
            unk: vec![0.0; dim],
        }
    }

    /// Reads `word v1 … vd` lines. A leading `count dim` header is
    /// recognised and skipped. The UNK vector is the mean of all rows.
    pub fn load<R: BufRead>(reader: R, expected_dim: usize) -> Result<Self> {
        let mut table = PretrainedTable::empty(expected_dim);
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = i + 1;
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else { continue };
            let rest: Vec<&str> = fields.collect();
            if line_no == 1 && rest.len() == 1 && word.parse::<u64>().is_ok() {
                if let Ok(dim) = rest[0].parse::<usize>() {
                    if dim != expected_dim {
                        return Err(Error::Parse {
                            line: line_no,
                            message: format!("header declares {dim} dimensions, expected {expected_dim}"),
                        });
                    }
                    continue;
                }
            }
            if rest.len() != expected_dim {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!(
                        "vector for {word:?} has {} dimensions, expected {expected_dim}",
                        rest.len()
                    ),
                });
            }
            let values = rest
                .iter()
                .map(|v| {
                    v.parse::<f64>().map_err(|_| Error::Parse {
                        line: line_no,
                        message: format!("invalid number {v:?}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if table.index.contains_key(word) {
                continue;
            }
            table.index.insert(word.to_string(), table.words.len());
            table.words.push(word.to_string());
            table.matrix.extend(values);
        }
        table.unk = table.mean_row();
        Ok(table)
    }

    fn mean_row(&self) -> Vec<f64> {
        let n = self.words.len();
        let mut mean = vec![0.0; self.dim];
        if n == 0 {
            return mean;
        }
        for row in self.matrix.chunks(self.dim) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        mean
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Row of `word`: exact match first, then its lowercase form.
    pub fn row(&self, word: &str) -> Option<usize> {
        self.index
            .get(word)
            .or_else(|| self.index.get(&word.to_lowercase()))
            .copied()
    }

    /// Vector of a row, or the UNK vector for `None`.
    pub fn vector(&self, row: Option<usize>) -> &[f64] {
        match row {
            Some(r) => &self.matrix[r * self.dim..(r + 1) * self.dim],
            None => &self.unk,
        }
    }

    pub fn lookup(&self, word: &str) -> &[f64] {
        self.vector(self.row(word))
    }

    pub fn unk(&self) -> &[f64] {
        &self.unk
    }

    pub(crate) fn encode(&self, w: &mut ByteWriter) {
        w.usize(self.dim);
        w.usize(self.words.len());
        for word in &self.words {
            w.str(word);
        }
        for &v in &self.matrix {
            w.f64(v);
        }
        for &v in &self.unk {
            w.f64(v);
        }
    }

    pub(crate) fn decode(r: &mut ByteReader) -> Result<Self> {
        let dim = r.usize()?;
        let n = r.usize()?;
        let mut table = PretrainedTable::empty(dim);
        for i in 0..n {
            let word = r.str()?;
            table.index.insert(word.clone(), i);
            table.words.push(word);
        }
        table.matrix = (0..n * dim).map(|_| r.f64()).collect::<Result<_>>()?;
        table.unk = (0..dim).map(|_| r.f64()).collect::<Result<_>>()?;
        Ok(table)
    }
}

/// α / (fr(w) + α); zero when α is zero.
pub fn dropout_probability(freq: u64, alpha: f64) -> f64 {
    if alpha <= 0.0 {
        0.0
    } else {
        alpha / (freq as f64 + alpha)
    }
}

/// Replaces each word id by UNK with probability α / (fr(w) + α).
/// One uniform draw is consumed per token regardless of α.
pub fn word_dropout<R: Rng>(ids: &[usize], vocab: &Vocabulary, alpha: f64, rng: &mut R) -> Vec<usize> {
    ids.iter()
        .map(|&id| {
            let p = dropout_probability(vocab.word_freq(id), alpha);
            if rng.random::<f64>() < p {
                UNK
            } else {
                id
            }
        })
        .collect()
}
