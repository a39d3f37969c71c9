//! Reading and writing the CoNLL-2009 tab-separated format.
//!
//! Each token row has 14 fixed columns followed by one APRED column per
//! predicate of the sentence:
//!
//! ```text
//! ID FORM LEMMA PLEMMA POS PPOS FEAT PFEAT HEAD PHEAD DEPREL PDEPREL FILLPRED PRED APRED...
//! ```
//!
//! Only ID, FORM, PLEMMA, PPOS, HEAD, FILLPRED, PRED and the APRED columns
//! are interpreted. The remaining columns are carried through verbatim.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

const FIXED_COLUMNS: usize = 14;
const EMPTY: &str = "_";

/// Columns kept verbatim: LEMMA, POS, FEAT, PFEAT, PHEAD, DEPREL, PDEPREL.
pub type OpaqueColumns = [String; 7];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    /// 1-based position in the sentence.
    pub id: usize,
    pub form: String,
    pub plemma: String,
    pub ppos: String,
    /// Gold syntactic head, 0 for the root, `None` when the column is `_`.
    /// Used for analysis only.
    pub head: Option<usize>,
    pub fill_pred: bool,
    pub pred_sense: Option<String>,
    /// One cell per predicate of the sentence; `None` is the NULL role.
    pub apreds: Vec<Option<String>>,
    pub opaque: OpaqueColumns,
}

impl Token {
    /// Minimal token with `_` in every uninterpreted column.
    pub fn new(id: usize, form: &str, plemma: &str, ppos: &str) -> Self {
        Token {
            id,
            form: form.to_string(),
            plemma: plemma.to_string(),
            ppos: ppos.to_string(),
            head: None,
            fill_pred: false,
            pred_sense: None,
            apreds: Vec::new(),
            opaque: Default::default(),
        }
        .with_opaque_defaults()
    }

    fn with_opaque_defaults(mut self) -> Self {
        for c in self.opaque.iter_mut() {
            if c.is_empty() {
                *c = EMPTY.to_string();
            }
        }
        self
    }

    /// Lemma part of the sense label: everything before the last `.`.
    pub fn sense_lemma(&self) -> Option<&str> {
        self.pred_sense
            .as_deref()
            .map(|s| s.rsplit_once('.').map_or(s, |(lemma, _)| lemma))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    tokens: Vec<Token>,
    predicate_positions: Vec<usize>,
}

impl Sentence {
    /// Validates and wraps a token list; ids must already run 1..=n.
    pub fn new(tokens: Vec<Token>) -> Result<Self> {
        let predicate_positions: Vec<usize> = tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| t.fill_pred)
            .map(|(i, _)| i)
            .collect();
        let n = tokens.len();
        for (i, t) in tokens.iter().enumerate() {
            if t.id != i + 1 {
                return Err(Error::Format(format!(
                    "token {} has id {}, expected {}",
                    i + 1,
                    t.id,
                    i + 1
                )));
            }
            if t.fill_pred != t.pred_sense.is_some() {
                return Err(Error::Format(format!("token {}: FILLPRED and PRED disagree", t.id)));
            }
            if t.apreds.len() != predicate_positions.len() {
                return Err(Error::Format(format!(
                    "token {} has {} argument cells for {} predicates",
                    t.id,
                    t.apreds.len(),
                    predicate_positions.len()
                )));
            }
            if matches!(t.head, Some(h) if h > n) {
                return Err(Error::Format(format!(
                    "token {} has head {} outside the sentence",
                    t.id,
                    t.head.unwrap()
                )));
            }
        }
        Ok(Sentence {
            tokens,
            predicate_positions,
        })
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// 0-based token indices of the predicates, increasing.
    pub fn predicate_positions(&self) -> &[usize] {
        &self.predicate_positions
    }

    /// Argument cells of predicate `rank` (its index among the predicates).
    pub fn roles_of(&self, rank: usize) -> Vec<Option<String>> {
        self.tokens.iter().map(|t| t.apreds[rank].clone()).collect()
    }

    /// Copy with every APRED column replaced. `roles[k][i]` is the role of
    /// token `i` for the `k`-th predicate.
    pub fn with_roles(&self, roles: &[Vec<Option<String>>]) -> Result<Sentence> {
        if roles.len() != self.predicate_positions.len() || roles.iter().any(|r| r.len() != self.tokens.len()) {
            return Err(Error::Format(
                "missing prediction cell: need one role per token and predicate".into(),
            ));
        }
        let mut tokens = self.tokens.clone();
        for (i, t) in tokens.iter_mut().enumerate() {
            t.apreds = roles.iter().map(|col| col[i].clone()).collect();
        }
        Ok(Sentence {
            tokens,
            predicate_positions: self.predicate_positions.clone(),
        })
    }
}

/// One predicate of a sentence with its gold argument column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredicateInstance<'s> {
    pub sentence: &'s Sentence,
    /// 0-based token position of the predicate.
    pub predicate_index: usize,
    /// Rank of the predicate among the sentence's predicates, which is also
    /// the APRED column it owns.
    pub rank: usize,
    /// Per token, `None` for the NULL role.
    pub gold_roles: Vec<Option<String>>,
}

impl PredicateInstance<'_> {
    pub fn predicate(&self) -> &Token {
        &self.sentence.tokens[self.predicate_index]
    }
}

pub fn extract_instances(sentence: &Sentence) -> Vec<PredicateInstance<'_>> {
    sentence
        .predicate_positions
        .iter()
        .enumerate()
        .map(|(rank, &p)| PredicateInstance {
            sentence,
            predicate_index: p,
            rank,
            gold_roles: sentence.roles_of(rank),
        })
        .collect()
}

pub fn extract_all(sentences: &[Sentence]) -> Vec<PredicateInstance<'_>> {
    sentences.iter().flat_map(extract_instances).collect()
}

fn cell(s: &str) -> Option<String> {
    (s != EMPTY).then(|| s.to_string())
}

fn parse_row(line: &str, line_no: usize) -> Result<Token> {
    let cols: Vec<&str> = line.split('\t').collect();
    let err = |message: String| Error::Parse { line: line_no, message };
    if cols.len() < FIXED_COLUMNS {
        return Err(err(format!(
            "expected at least {FIXED_COLUMNS} tab-separated columns, found {}",
            cols.len()
        )));
    }
    let id = cols[0]
        .parse::<usize>()
        .map_err(|_| err(format!("invalid ID {:?}", cols[0])))?;
    let head = match cols[8] {
        EMPTY => None,
        h => Some(h.parse::<usize>().map_err(|_| err(format!("invalid HEAD {h:?}")))?),
    };
    let fill_pred = match cols[12] {
        "Y" => true,
        EMPTY => false,
        other => return Err(err(format!("invalid FILLPRED {other:?}"))),
    };
    let pred_sense = cell(cols[13]);
    if fill_pred != pred_sense.is_some() {
        return Err(err(format!(
            "FILLPRED {:?} inconsistent with PRED {:?}",
            cols[12], cols[13]
        )));
    }
    Ok(Token {
        id,
        form: cols[1].to_string(),
        plemma: cols[3].to_string(),
        ppos: cols[5].to_string(),
        head,
        fill_pred,
        pred_sense,
        apreds: cols[FIXED_COLUMNS..].iter().map(|c| cell(c)).collect(),
        opaque: [
            cols[2].to_string(),
            cols[4].to_string(),
            cols[6].to_string(),
            cols[7].to_string(),
            cols[9].to_string(),
            cols[10].to_string(),
            cols[11].to_string(),
        ],
    })
}

fn finish_sentence(rows: Vec<(usize, Token)>) -> Result<Sentence> {
    let first_line = rows[0].0;
    let width = rows[0].1.apreds.len();
    for (line, tok) in &rows {
        if tok.apreds.len() != width {
            return Err(Error::Parse {
                line: *line,
                message: format!(
                    "ragged row: {} argument columns, sentence started with {width}",
                    tok.apreds.len()
                ),
            });
        }
    }
    let lines: Vec<usize> = rows.iter().map(|(l, _)| *l).collect();
    let tokens: Vec<Token> = rows.into_iter().map(|(_, t)| t).collect();
    let n_pred = tokens.iter().filter(|t| t.fill_pred).count();
    if n_pred != width {
        return Err(Error::Parse {
            line: first_line,
            message: format!("{n_pred} predicates but {width} argument columns"),
        });
    }
    for (i, t) in tokens.iter().enumerate() {
        if t.id != i + 1 {
            return Err(Error::Parse {
                line: lines[i],
                message: format!("token id {} out of sequence, expected {}", t.id, i + 1),
            });
        }
    }
    Sentence::new(tokens).map_err(|e| Error::Parse {
        line: first_line,
        message: e.to_string(),
    })
}

pub fn read_conll2009<R: BufRead>(reader: R) -> Result<Vec<Sentence>> {
    let mut sentences = Vec::new();
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            if !rows.is_empty() {
                sentences.push(finish_sentence(std::mem::take(&mut rows))?);
            }
            continue;
        }
        rows.push((i + 1, parse_row(line, i + 1)?));
    }
    if !rows.is_empty() {
        sentences.push(finish_sentence(rows)?);
    }
    Ok(sentences)
}

pub fn read_conll2009_str(text: &str) -> Result<Vec<Sentence>> {
    read_conll2009(text.as_bytes())
}

pub fn write_conll2009<W: Write>(mut out: W, sentences: &[Sentence]) -> Result<()> {
    for s in sentences {
        let n_pred = s.predicate_positions.len();
        for t in &s.tokens {
            if t.apreds.len() != n_pred {
                return Err(Error::Format(format!(
                    "missing prediction cell at token {} ({} of {} predicates)",
                    t.id,
                    t.apreds.len(),
                    n_pred
                )));
            }
            let o = &t.opaque;
            let head = t.head.map_or_else(|| EMPTY.to_string(), |h| h.to_string());
            write!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                t.id,
                t.form,
                o[0],
                t.plemma,
                o[1],
                t.ppos,
                o[2],
                o[3],
                head,
                o[4],
                o[5],
                o[6],
                if t.fill_pred { "Y" } else { EMPTY },
                t.pred_sense.as_deref().unwrap_or(EMPTY),
            )?;
            for a in &t.apreds {
                write!(out, "\t{}", a.as_deref().unwrap_or(EMPTY))?;
            }
            writeln!(out)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn to_conll2009_string(sentences: &[Sentence]) -> Result<String> {
    let mut buf = Vec::new();
    write_conll2009(&mut buf, sentences)?;
    Ok(String::from_utf8(buf).expect("written from UTF-8 strings"))
}

/// Canonical layout for comparisons: no carriage returns or trailing
/// whitespace, exactly one blank line after every sentence.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_sentence = false;
    for line in text.lines() {
        let line = line.trim_end();
        if line.is_empty() {
            if in_sentence {
                out.push('\n');
                in_sentence = false;
            }
        } else {
            out.push_str(line);
            out.push('\n');
            in_sentence = true;
        }
    }
    if in_sentence {
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SEQUA: &str = "\
1\tSequa\tsequa\tsequa\tNNP\tNNP\t_\t_\t2\t2\tSBJ\tSBJ\t_\t_\tA0
2\tmakes\tmake\tmake\tVBZ\tVBZ\t_\t_\t0\t0\tROOT\tROOT\tY\tmake.01\t_
3\tand\tand\tand\tCC\tCC\t_\t_\t2\t2\tCOORD\tCOORD\t_\t_\t_
4\trepairs\trepair\trepair\tVBZ\tVBZ\t_\t_\t3\t3\tCONJ\tCONJ\t_\t_\t_
5\tjet\tjet\tjet\tNN\tNN\t_\t_\t6\t6\tNMOD\tNMOD\t_\t_\t_
6\tengines\tengine\tengine\tNNS\tNNS\t_\t_\t2\t2\tOBJ\tOBJ\t_\t_\t_
";

    #[test]
    fn empty_stream() {
        assert!(read_conll2009_str("").unwrap().is_empty());
        assert!(read_conll2009_str("\n\n").unwrap().is_empty());
    }

    #[test]
    fn reads_single_predicate_sentence() {
        let sents = read_conll2009_str(SEQUA).unwrap();
        assert_eq!(sents.len(), 1);
        let s = &sents[0];
        assert_eq!(s.len(), 6);
        assert_eq!(s.predicate_positions(), &[1]);
        assert_eq!(s.tokens()[1].pred_sense.as_deref(), Some("make.01"));
        assert_eq!(s.tokens()[1].sense_lemma(), Some("make"));
        assert_eq!(s.tokens()[0].head, Some(2));
        let inst = extract_instances(s);
        assert_eq!(inst.len(), 1);
        assert_eq!(inst[0].predicate_index, 1);
        let expect: Vec<Option<String>> = std::iter::once(Some("A0".to_string()))
            .chain(std::iter::repeat_n(None, 5))
            .collect();
        assert_eq!(inst[0].gold_roles, expect);
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let text = format!("{SEQUA}\n");
        let sents = read_conll2009_str(&text).unwrap();
        assert_eq!(to_conll2009_string(&sents).unwrap(), normalize(&text));
    }

    #[test]
    fn ragged_rows_report_their_line() {
        let bad = SEQUA.replacen("\tY\tmake.01\t_\n", "\tY\tmake.01\t_\t_\n", 1);
        match read_conll2009_str(&bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn fillpred_without_sense_is_rejected() {
        let bad = SEQUA.replace("\tY\tmake.01\t", "\tY\t_\t");
        assert!(matches!(read_conll2009_str(&bad), Err(Error::Parse { line: 2, .. })));
        let bad = SEQUA.replace("\tY\tmake.01\t", "\t_\tmake.01\t");
        assert!(read_conll2009_str(&bad).is_err());
    }

    #[test]
    fn too_few_columns() {
        assert!(matches!(
            read_conll2009_str("1\tfoo\tbar\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn zero_predicates_write_no_argument_columns() {
        let t = Token::new(1, "Hello", "hello", "UH");
        let s = Sentence::new(vec![t]).unwrap();
        assert!(extract_instances(&s).is_empty());
        let text = to_conll2009_string(&[s]).unwrap();
        assert_eq!(text, "1\tHello\t_\thello\t_\tUH\t_\t_\t_\t_\t_\t_\t_\t_\n\n");
    }

    #[test]
    fn all_null_predictions_write_underscores() {
        let s = read_conll2009_str(SEQUA).unwrap().remove(0);
        let s = s.with_roles(&[vec![None; 6]]).unwrap();
        let text = to_conll2009_string(&[s]).unwrap();
        assert!(text.lines().filter(|l| !l.is_empty()).all(|l| l.ends_with("\t_")));
    }

    #[test]
    fn missing_prediction_cell() {
        let s = read_conll2009_str(SEQUA).unwrap().remove(0);
        assert!(s.with_roles(&[vec![None; 5]]).is_err());
        assert!(s.with_roles(&[]).is_err());
    }

    #[test]
    fn predicate_can_be_argument_of_another() {
        let text = "\
1\tJohn\t_\tjohn\t_\tNNP\t_\t_\t2\t_\t_\t_\t_\t_\tA0\t_
2\twants\t_\twant\t_\tVBZ\t_\t_\t0\t_\t_\t_\tY\twant.01\t_\t_
3\tto\t_\tto\t_\tTO\t_\t_\t2\t_\t_\t_\t_\t_\t_\t_
4\tleave\t_\tleave\t_\tVB\t_\t_\t3\t_\t_\t_\tY\tleave.01\tA1\t_
";
        let sents = read_conll2009_str(text).unwrap();
        let inst = extract_instances(&sents[0]);
        assert_eq!(inst.len(), 2);
        assert_eq!(inst[0].gold_roles[3].as_deref(), Some("A1"));
        assert!(inst[1].gold_roles.iter().all(Option::is_none));
        assert_eq!(to_conll2009_string(&sents).unwrap(), normalize(text));
    }

    #[test]
    fn normalize_handles_crlf_and_blank_runs() {
        let text = "\r\n\r\n1\ta\r\n\r\n\r\n2\tb  \n";
        assert_eq!(normalize(text), "1\ta\n\n2\tb\n\n");
    }
}
