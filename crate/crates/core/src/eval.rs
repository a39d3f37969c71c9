//! Semantic dependency scoring and the analysis breakdowns.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::str::FromStr;

use crate::conll::Sentence;
use crate::error::{Error, Result};

/// One labeled predicate-argument edge. NULL cells are not edges.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SemDep {
    pub sentence: usize,
    /// 0-based token position of the predicate.
    pub predicate: usize,
    /// 0-based token position of the argument.
    pub argument: usize,
    pub role: String,
}

impl SemDep {
    pub fn distance(&self) -> usize {
        self.argument.abs_diff(self.predicate)
    }
}

/// A predicate sense, counted as one labeled item when senses are scored.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SenseItem {
    pub sentence: usize,
    pub predicate: usize,
    pub sense: String,
}

pub fn edges(sentences: &[Sentence]) -> Vec<SemDep> {
    let mut out = Vec::new();
    for (s, sent) in sentences.iter().enumerate() {
        for (rank, &p) in sent.predicate_positions().iter().enumerate() {
            for (a, tok) in sent.tokens().iter().enumerate() {
                if let Some(role) = &tok.apreds[rank] {
                    out.push(SemDep {
                        sentence: s,
                        predicate: p,
                        argument: a,
                        role: role.clone(),
                    });
                }
            }
        }
    }
    out
}

pub fn senses(sentences: &[Sentence]) -> Vec<SenseItem> {
    let mut out = Vec::new();
    for (s, sent) in sentences.iter().enumerate() {
        for &p in sent.predicate_positions() {
            let sense = sent.tokens()[p].pred_sense.clone().unwrap_or_default();
            out.push(SenseItem {
                sentence: s,
                predicate: p,
                sense,
            });
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.correct, self.predicted)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.correct, self.gold)
    }

    /// `2PR / (P + R)`, or 0 when both are 0.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    }

    pub fn add(&mut self, other: Counts) {
        self.gold += other.gold;
        self.predicted += other.predicted;
        self.correct += other.correct;
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Labeled counts: an edge is correct when sentence, predicate, argument
/// and role all match. With `senses`, every predicate sense is one more
/// item on each side.
pub fn score_labeled(gold: &[SemDep], pred: &[SemDep], senses: Option<(&[SenseItem], &[SenseItem])>) -> Counts {
    let gold_set: HashSet<&SemDep> = gold.iter().collect();
    let pred_set: HashSet<&SemDep> = pred.iter().collect();
    let mut c = Counts {
        gold: gold_set.len(),
        predicted: pred_set.len(),
        correct: pred_set.intersection(&gold_set).count(),
    };
    if let Some((gs, ps)) = senses {
        let gs: HashSet<&SenseItem> = gs.iter().collect();
        let ps: HashSet<&SenseItem> = ps.iter().collect();
        c.add(Counts {
            gold: gs.len(),
            predicted: ps.len(),
            correct: ps.intersection(&gs).count(),
        });
    }
    c
}

/// Unlabeled counts: only sentence, predicate and argument must match.
pub fn argument_recognition(gold: &[SemDep], pred: &[SemDep]) -> Counts {
    let key = |d: &SemDep| (d.sentence, d.predicate, d.argument);
    let gold_set: HashSet<_> = gold.iter().map(key).collect();
    let pred_set: HashSet<_> = pred.iter().map(key).collect();
    Counts {
        gold: gold_set.len(),
        predicted: pred_set.len(),
        correct: pred_set.intersection(&gold_set).count(),
    }
}

/// Labeled counts for each role seen on either side.
pub fn per_role(gold: &[SemDep], pred: &[SemDep]) -> BTreeMap<String, Counts> {
    let gold_set: HashSet<&SemDep> = gold.iter().collect();
    let mut out: BTreeMap<String, Counts> = BTreeMap::new();
    for d in &gold_set {
        out.entry(d.role.clone()).or_default().gold += 1;
    }
    for d in pred.iter().collect::<HashSet<_>>() {
        let c = out.entry(d.role.clone()).or_default();
        c.predicted += 1;
        if gold_set.contains(d) {
            c.correct += 1;
        }
    }
    out
}

/// One interval of a bucket partition; `hi = None` is open-ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bucket {
    pub lo: usize,
    pub hi: Option<usize>,
}

/// A partition of the non-negative integers into consecutive intervals.
/// The first interval also absorbs every value below its lower bound.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Buckets(Vec<Bucket>);

impl Default for Buckets {
    fn default() -> Self {
        "1,2,3,4,5,6,7+".parse().unwrap()
    }
}

impl FromStr for Buckets {
    type Err = Error;

    /// Comma-separated items: `n`, `a-b` or a final `n+`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: String| Error::Config(format!("buckets {s:?}: {msg}"));
        let num = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| bad(format!("{t:?} is not a non-negative integer")))
        };
        let mut out: Vec<Bucket> = Vec::new();
        for item in s.split(',') {
            let item = item.trim();
            let b = if let Some(lo) = item.strip_suffix('+') {
                Bucket { lo: num(lo)?, hi: None }
            } else if let Some((a, b)) = item.split_once('-') {
                let (lo, hi) = (num(a)?, num(b)?);
                if hi < lo {
                    return Err(bad(format!("empty range {item:?}")));
                }
                Bucket { lo, hi: Some(hi) }
            } else {
                let v = num(item)?;
                Bucket { lo: v, hi: Some(v) }
            };
            if let Some(prev) = out.last() {
                match prev.hi {
                    None => return Err(bad("open bucket must come last".into())),
                    Some(h) if b.lo <= h => return Err(bad(format!("{item:?} overlaps the previous bucket"))),
                    Some(h) if b.lo > h + 1 => return Err(bad(format!("gap before {item:?}"))),
                    _ => {}
                }
            }
            out.push(b);
        }
        if out.last().is_none_or(|b| b.hi.is_some()) {
            return Err(bad("the last bucket must be open-ended, like \"7+\"".into()));
        }
        Ok(Buckets(out))
    }
}

impl Buckets {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bucket_of(&self, value: usize) -> usize {
        self.0
            .iter()
            .position(|b| b.hi.is_none_or(|h| value <= h))
            .expect("last bucket is open-ended")
    }

    pub fn label(&self, i: usize) -> String {
        let b = self.0[i];
        match b.hi {
            None => format!("{}+", b.lo),
            Some(h) if h == b.lo => b.lo.to_string(),
            Some(h) => format!("{}-{}", b.lo, h),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BucketScore {
    pub label: String,
    pub counts: Counts,
    /// Fraction of all gold edges that fall in this bucket.
    pub share: f64,
}

fn bucketed(
    gold: &[SemDep],
    pred: &[SemDep],
    buckets: &Buckets,
    measure: impl Fn(&SemDep) -> usize,
) -> Vec<BucketScore> {
    let mut g: Vec<Vec<SemDep>> = vec![Vec::new(); buckets.len()];
    let mut p: Vec<Vec<SemDep>> = vec![Vec::new(); buckets.len()];
    for d in gold {
        g[buckets.bucket_of(measure(d))].push(d.clone());
    }
    for d in pred {
        p[buckets.bucket_of(measure(d))].push(d.clone());
    }
    let total: usize = gold.iter().collect::<HashSet<_>>().len();
    (0..buckets.len())
        .map(|i| {
            let counts = score_labeled(&g[i], &p[i], None);
            BucketScore {
                label: buckets.label(i),
                counts,
                share: ratio(counts.gold, total),
            }
        })
        .collect()
}

/// Labeled scores by linear distance between predicate and argument.
pub fn distance_f1(gold: &[SemDep], pred: &[SemDep], buckets: &Buckets) -> Vec<BucketScore> {
    bucketed(gold, pred, buckets, SemDep::distance)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum PredicateClass {
    Verbal,
    Nominal,
    Other,
}

impl PredicateClass {
    /// By predicted POS prefix: `V` verbal, `N` nominal.
    pub fn of_pos(ppos: &str) -> Self {
        if ppos.starts_with('V') {
            PredicateClass::Verbal
        } else if ppos.starts_with('N') {
            PredicateClass::Nominal
        } else {
            PredicateClass::Other
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PredicateClass::Verbal => "verbal",
            PredicateClass::Nominal => "nominal",
            PredicateClass::Other => "other",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Breakdown {
    pub labeled: Counts,
    pub unlabeled: Counts,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PredicateSplit {
    pub verbal: Breakdown,
    pub nominal: Breakdown,
    pub other: Breakdown,
}

impl PredicateSplit {
    pub fn get(&self, class: PredicateClass) -> &Breakdown {
        match class {
            PredicateClass::Verbal => &self.verbal,
            PredicateClass::Nominal => &self.nominal,
            PredicateClass::Other => &self.other,
        }
    }
}

fn class_of(sentences: &[Sentence], d: &SemDep) -> PredicateClass {
    PredicateClass::of_pos(&sentences[d.sentence].tokens()[d.predicate].ppos)
}

fn filter_class(sentences: &[Sentence], edges: &[SemDep], class: PredicateClass) -> Vec<SemDep> {
    edges
        .iter()
        .filter(|d| class_of(sentences, d) == class)
        .cloned()
        .collect()
}

/// Splits edges by the predicate token's POS in `sentences`.
pub fn verbal_nominal_split(gold: &[SemDep], pred: &[SemDep], sentences: &[Sentence]) -> PredicateSplit {
    let part = |class| {
        let g = filter_class(sentences, gold, class);
        let p = filter_class(sentences, pred, class);
        Breakdown {
            labeled: score_labeled(&g, &p, None),
            unlabeled: argument_recognition(&g, &p),
        }
    };
    PredicateSplit {
        verbal: part(PredicateClass::Verbal),
        nominal: part(PredicateClass::Nominal),
        other: part(PredicateClass::Other),
    }
}

/// Number of arcs on the undirected head-tree path between two tokens
/// (0-based positions).
pub fn tree_distance(sentence: &Sentence, a: usize, b: usize) -> Result<usize> {
    let chain_a = ancestors(sentence, a)?;
    let chain_b = ancestors(sentence, b)?;
    for (i, node) in chain_a.iter().enumerate() {
        if let Some(j) = chain_b.iter().position(|n| n == node) {
            return Ok(i + j);
        }
    }
    unreachable!("both chains end at the root")
}

/// Path from a token (1-based id space, root = 0) up to the root.
fn ancestors(sentence: &Sentence, pos: usize) -> Result<Vec<usize>> {
    let tokens = sentence.tokens();
    let mut chain = vec![pos + 1];
    let mut node = pos + 1;
    while node != 0 {
        let head = tokens[node - 1]
            .head
            .ok_or_else(|| Error::Data(format!("token {node} has no HEAD")))?;
        if chain.len() > tokens.len() {
            return Err(Error::Data("HEAD column contains a cycle".into()));
        }
        chain.push(head);
        node = head;
    }
    Ok(chain)
}

/// Labeled scores for nominal predicates by syntactic path length in the
/// gold HEAD tree. Analysis only.
pub fn syntactic_distance_f1(
    gold: &[SemDep],
    pred: &[SemDep],
    sentences: &[Sentence],
    buckets: &Buckets,
) -> Result<Vec<BucketScore>> {
    let g = filter_class(sentences, gold, PredicateClass::Nominal);
    let p = filter_class(sentences, pred, PredicateClass::Nominal);
    let mut lengths = BTreeMap::new();
    for d in g.iter().chain(&p) {
        let key = (d.sentence, d.predicate, d.argument);
        if let Entry::Vacant(slot) = lengths.entry(key) {
            let len = tree_distance(&sentences[d.sentence], d.predicate, d.argument)
                .map_err(|e| Error::Data(format!("sentence {}: {e}", d.sentence + 1)))?;
            slot.insert(len);
        }
    }
    Ok(bucketed(&g, &p, buckets, |d| {
        lengths[&(d.sentence, d.predicate, d.argument)]
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub include_senses: bool,
    pub buckets: Buckets,
    /// Verbal / nominal / other breakdown by predicate POS.
    pub split: bool,
    /// Path-length breakdown for nominal predicates; needs gold heads.
    pub syntactic: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            include_senses: false,
            buckets: Buckets::default(),
            split: true,
            syntactic: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub include_senses: bool,
    pub labeled: Counts,
    pub unlabeled: Counts,
    pub per_role: BTreeMap<String, Counts>,
    pub distance: Vec<BucketScore>,
    pub split: Option<PredicateSplit>,
    pub syntactic: Option<Vec<BucketScore>>,
}

/// Checks that two corpora cover the same sentences and predicates.
pub fn check_alignment(gold: &[Sentence], pred: &[Sentence]) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(Error::Data(format!(
            "gold has {} sentences, prediction has {}",
            gold.len(),
            pred.len()
        )));
    }
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(Error::Data(format!(
                "sentence {}: gold has {} tokens, prediction has {}",
                i + 1,
                g.len(),
                p.len()
            )));
        }
        if g.predicate_positions() != p.predicate_positions() {
            return Err(Error::Data(format!("sentence {}: predicate positions differ", i + 1)));
        }
    }
    Ok(())
}

pub fn evaluate(gold: &[Sentence], pred: &[Sentence], options: &EvalOptions) -> Result<EvalReport> {
    check_alignment(gold, pred)?;
    let g = edges(gold);
    let p = edges(pred);
    let (gs, ps) = (senses(gold), senses(pred));
    let sense_pair = options.include_senses.then_some((gs.as_slice(), ps.as_slice()));
    Ok(EvalReport {
        include_senses: options.include_senses,
        labeled: score_labeled(&g, &p, sense_pair),
        unlabeled: argument_recognition(&g, &p),
        per_role: per_role(&g, &p),
        distance: distance_f1(&g, &p, &options.buckets),
        split: options.split.then(|| verbal_nominal_split(&g, &p, gold)),
        syntactic: if options.syntactic {
            Some(syntactic_distance_f1(&g, &p, gold, &options.buckets)?)
        } else {
            None
        },
    })
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn table_row(out: &mut String, name: &str, c: &Counts) {
    let _ = writeln!(
        out,
        "{:<20} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}",
        name,
        pct(c.precision()),
        pct(c.recall()),
        pct(c.f1()),
        c.gold,
        c.predicted,
        c.correct
    );
}

fn table_header(out: &mut String, first: &str) {
    let _ = writeln!(
        out,
        "{:<20} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}",
        first, "P", "R", "F1", "gold", "pred", "correct"
    );
}

impl EvalReport {
    /// Aligned plain-text tables.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let mode = if self.include_senses {
            "with predicate senses"
        } else {
            "arguments only"
        };
        let _ = writeln!(out, "# semantic scores ({mode})");
        table_header(&mut out, "");
        table_row(&mut out, "labeled", &self.labeled);
        table_row(&mut out, "unlabeled", &self.unlabeled);

        out.push_str("\n# per role\n");
        table_header(&mut out, "role");
        for (role, c) in &self.per_role {
            table_row(&mut out, role, c);
        }

        out.push_str("\n# by word distance\n");
        bucket_table(&mut out, &self.distance);

        if let Some(split) = &self.split {
            out.push_str("\n# by predicate class\n");
            table_header(&mut out, "");
            for class in [PredicateClass::Verbal, PredicateClass::Nominal, PredicateClass::Other] {
                let b = split.get(class);
                table_row(&mut out, &format!("{} labeled", class.label()), &b.labeled);
                table_row(&mut out, &format!("{} unlabeled", class.label()), &b.unlabeled);
            }
        }
        if let Some(syn) = &self.syntactic {
            out.push_str("\n# nominal predicates by syntactic distance\n");
            bucket_table(&mut out, syn);
        }
        out
    }

    /// One `key=value` record per line.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "include_senses={}", self.include_senses);
        counts_kv(&mut out, "labeled", &self.labeled);
        counts_kv(&mut out, "unlabeled", &self.unlabeled);
        for (role, c) in &self.per_role {
            counts_kv(&mut out, &format!("role.{role}"), c);
        }
        for b in &self.distance {
            counts_kv(&mut out, &format!("distance.{}", b.label), &b.counts);
            let _ = writeln!(out, "distance.{}.share={:.6}", b.label, b.share);
        }
        if let Some(split) = &self.split {
            for class in [PredicateClass::Verbal, PredicateClass::Nominal, PredicateClass::Other] {
                let b = split.get(class);
                counts_kv(&mut out, &format!("{}.labeled", class.label()), &b.labeled);
                counts_kv(&mut out, &format!("{}.unlabeled", class.label()), &b.unlabeled);
            }
        }
        if let Some(syn) = &self.syntactic {
            for b in syn {
                counts_kv(&mut out, &format!("syntactic.{}", b.label), &b.counts);
                let _ = writeln!(out, "syntactic.{}.share={:.6}", b.label, b.share);
            }
        }
        out
    }
}

fn bucket_table(out: &mut String, rows: &[BucketScore]) {
    let _ = writeln!(
        out,
        "{:<8} {:>7} {:>7} {:>7} {:>7} {:>7}",
        "bucket", "share%", "P", "R", "F1", "gold"
    );
    for b in rows {
        let _ = writeln!(
            out,
            "{:<8} {:>7} {:>7} {:>7} {:>7} {:>7}",
            b.label,
            pct(b.share),
            pct(b.counts.precision()),
            pct(b.counts.recall()),
            pct(b.counts.f1()),
            b.counts.gold
        );
    }
}

fn counts_kv(out: &mut String, prefix: &str, c: &Counts) {
    let _ = writeln!(
        out,
        "{prefix}.precision={:.6}\n{prefix}.recall={:.6}\n{prefix}.f1={:.6}\n{prefix}.gold={}\n{prefix}.predicted={}\n{prefix}.correct={}",
        c.precision(),
        c.recall(),
        c.f1(),
        c.gold,
        c.predicted,
        c.correct
    );
}
