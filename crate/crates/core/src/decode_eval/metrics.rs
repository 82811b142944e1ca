//! Character error rate, edit alignments and confusion counts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};

/// Unit-cost edit distance.
pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &y) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(x != y))
                .min(prev[j + 1] + 1)
                .min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance over the length of `reference`.
pub fn cer(hyp: &str, reference: &str) -> Result<f64> {
    let r: Vec<char> = reference.chars().collect();
    if r.is_empty() {
        return Err(Error::EmptyReference);
    }
    let h: Vec<char> = hyp.chars().collect();
    Ok(levenshtein(&h, &r) as f64 / r.len() as f64)
}

/// Σ distances / Σ reference lengths, skipping empty references.
pub fn corpus_cer<H: AsRef<str>, R: AsRef<str>>(hyps: &[H], refs: &[R]) -> f64 {
    let (mut dist, mut len) = (0usize, 0usize);
    for (h, r) in hyps.iter().zip(refs) {
        let r: Vec<char> = r.as_ref().chars().collect();
        if r.is_empty() {
            continue;
        }
        let h: Vec<char> = h.as_ref().chars().collect();
        dist += levenshtein(&h, &r);
        len += r.len();
    }
    if len == 0 {
        0.0
    } else {
        dist as f64 / len as f64
    }
}

/// One minimal-cost alignment as `(predicted, gold)` pairs, `None` standing
/// for ε.
///
/// Tracing back from the end, a tie prefers a substitution or match, then a
/// predicted character against ε, then ε against a gold character.
pub fn align(hyp: &str, reference: &str) -> Vec<(Option<char>, Option<char>)> {
    let h: Vec<char> = hyp.chars().collect();
    let r: Vec<char> = reference.chars().collect();
    let (n, m) = (h.len(), r.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            d[i][j] = (d[i - 1][j - 1] + usize::from(h[i - 1] != r[j - 1]))
                .min(d[i - 1][j] + 1)
                .min(d[i][j - 1] + 1);
        }
    }
    let mut out = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + usize::from(h[i - 1] != r[j - 1]) {
            out.push((Some(h[i - 1]), Some(r[j - 1])));
            i -= 1;
            j -= 1;
        } else if i > 0 && d[i][j] == d[i - 1][j] + 1 {
            out.push((Some(h[i - 1]), None));
            i -= 1;
        } else {
            out.push((None, Some(r[j - 1])));
            j -= 1;
        }
    }
    out.reverse();
    out
}

/// Alignment counts keyed by `(predicted, gold)`; rows are predictions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: BTreeMap<(Option<char>, Option<char>), u64>,
}

impl ConfusionMatrix {
    pub fn new() -> ConfusionMatrix {
        ConfusionMatrix::default()
    }

    /// Accumulates one sentence's alignment.
    pub fn add(&mut self, hyp: &str, reference: &str) {
        for pair in align(hyp, reference) {
            *self.counts.entry(pair).or_default() += 1;
        }
    }

    pub fn from_pairs<H: AsRef<str>, R: AsRef<str>>(hyps: &[H], refs: &[R]) -> ConfusionMatrix {
        let mut m = ConfusionMatrix::new();
        for (h, r) in hyps.iter().zip(refs) {
            m.add(h.as_ref(), r.as_ref());
        }
        m
    }

    pub fn get(&self, predicted: Option<char>, gold: Option<char>) -> u64 {
        self.counts.get(&(predicted, gold)).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn row_sum(&self, predicted: Option<char>) -> u64 {
        self.counts
            .iter()
            .filter(|((p, _), _)| *p == predicted)
            .map(|(_, c)| c)
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((Option<char>, Option<char>), u64)> + '_ {
        self.counts.iter().map(|(&k, &v)| (k, v))
    }

    /// Dense TSV: a header of gold symbols, then one row per predicted
    /// symbol. ε is `<eps>` and space is `<sp>`.
    pub fn write_tsv<O: Write + ?Sized>(&self, out: &mut O) -> Result<()> {
        let mut rows: Vec<Option<char>> = self.counts.keys().map(|k| k.0).collect();
        let mut cols: Vec<Option<char>> = self.counts.keys().map(|k| k.1).collect();
        rows.sort();
        rows.dedup();
        cols.sort();
        cols.dedup();
        let mut s = String::from("pred\\gold");
        for &c in &cols {
            write!(s, "\t{}", label(c)).unwrap();
        }
        writeln!(out, "{s}")?;
        for &r in &rows {
            let mut s = label(r);
            for &c in &cols {
                write!(s, "\t{}", self.get(r, c)).unwrap();
            }
            writeln!(out, "{s}")?;
        }
        Ok(())
    }
}

fn label(c: Option<char>) -> String {
    match c {
        None => "<eps>".into(),
        Some(' ') => "<sp>".into(),
        Some('\t') => "<tab>".into(),
        Some(c) => c.to_string(),
    }
}

/// One evaluated sentence. A failed decode has `hyp` of `None` and is
/// scored as the empty string, i.e. every reference character is an error.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub id: usize,
    pub hyp: Option<String>,
    pub reference: String,
    pub distance: usize,
    /// `None` for an empty reference, which is left out of the totals.
    pub cer: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub confusion: ConfusionMatrix,
}

/// Scores hypotheses against references, pairwise in order.
pub fn evaluate<H: AsRef<str>, R: AsRef<str>>(hyps: &[Option<H>], refs: &[R]) -> EvalReport {
    let mut rows = Vec::with_capacity(refs.len());
    let mut confusion = ConfusionMatrix::new();
    for (id, (h, r)) in hyps.iter().zip(refs).enumerate() {
        let hyp = h.as_ref().map(|h| h.as_ref().to_string());
        let reference = r.as_ref().to_string();
        let hc: Vec<char> = hyp.as_deref().unwrap_or("").chars().collect();
        let rc: Vec<char> = reference.chars().collect();
        let distance = levenshtein(&hc, &rc);
        let cer = (!rc.is_empty()).then(|| distance as f64 / rc.len() as f64);
        if cer.is_some() {
            confusion.add(hyp.as_deref().unwrap_or(""), &reference);
        }
        rows.push(EvalRow {
            id,
            hyp,
            reference,
            distance,
            cer,
        });
    }
    EvalReport { rows, confusion }
}

impl EvalReport {
    /// Σ distance and Σ reference length over scored rows.
    pub fn totals(&self) -> (usize, usize) {
        self.rows
            .iter()
            .filter(|r| r.cer.is_some())
            .fold((0, 0), |(d, n), r| {
                (d + r.distance, n + r.reference.chars().count())
            })
    }

    pub fn corpus_cer(&self) -> f64 {
        let (d, n) = self.totals();
        if n == 0 {
            0.0
        } else {
            d as f64 / n as f64
        }
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.hyp.is_none()).count()
    }

    pub fn empty_references(&self) -> Vec<usize> {
        self.rows
            .iter()
            .filter(|r| r.cer.is_none())
            .map(|r| r.id)
            .collect()
    }

    /// `# corpus_cer=… distance=… ref_chars=… sentences=… failures=… empty_refs=…`
    pub fn summary(&self) -> String {
        let (d, n) = self.totals();
        format!(
            "# corpus_cer={:.6} distance={} ref_chars={} sentences={} failures={} empty_refs={}",
            self.corpus_cer(),
            d,
            n,
            self.rows.len(),
            self.failures(),
            self.empty_references().len()
        )
    }

    /// Per-sentence TSV (`id hyp ref distance cer`) closed by the summary
    /// line. Failed decodes show `<fail>` and empty references `NA`.
    pub fn write_tsv<O: Write + ?Sized>(&self, out: &mut O) -> Result<()> {
        writeln!(out, "id\thyp\tref\tdistance\tcer")?;
        for r in &self.rows {
            let cer = r.cer.map_or("NA".to_string(), |c| format!("{c:.6}"));
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.id,
                r.hyp.as_deref().unwrap_or("<fail>"),
                r.reference,
                r.distance,
                cer
            )?;
        }
        writeln!(out, "{}", self.summary())?;
        Ok(())
    }
}
