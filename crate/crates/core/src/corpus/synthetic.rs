//! Synthetic noisy channels and a toy source language for end-to-end tests.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A generative channel: per source character, delete with
/// `deletion_rate` or else draw a substitute from its row; before every
/// source character and at the end, insert uniformly drawn Latin characters
/// while a coin with `insertion_rate` comes up heads. Characters without a
/// row are copied.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticChannel {
    rows: BTreeMap<char, Vec<(char, f64)>>,
    insertion_rate: f64,
    deletion_rate: f64,
    insertion_symbols: Vec<char>,
    seed: u64,
}

impl SyntheticChannel {
    /// Rows are normalized here; weights must be nonnegative with a
    /// positive sum.
    pub fn new(
        rows: BTreeMap<char, Vec<(char, f64)>>,
        insertion_rate: f64,
        deletion_rate: f64,
        seed: u64,
    ) -> Result<SyntheticChannel> {
        for (name, r) in [("insertion", insertion_rate), ("deletion", deletion_rate)] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Config(format!("{name} rate {r} outside [0, 1)")));
            }
        }
        let mut normalized = BTreeMap::new();
        let mut symbols = BTreeSet::new();
        for (o, row) in rows {
            let total: f64 = row.iter().map(|&(_, w)| w).sum();
            if row.iter().any(|&(_, w)| !(w >= 0.0 && w.is_finite())) || total <= 0.0 {
                return Err(Error::Config(format!("row for {o:?} has no positive mass")));
            }
            symbols.extend(row.iter().map(|&(l, _)| l));
            normalized.insert(o, row.into_iter().map(|(l, w)| (l, w / total)).collect());
        }
        Ok(SyntheticChannel {
            rows: normalized,
            insertion_rate,
            deletion_rate,
            insertion_symbols: symbols.into_iter().collect(),
            seed,
        })
    }

    /// A deterministic one-to-one substitution channel.
    pub fn cipher(pairs: &[(char, char)], seed: u64) -> Result<SyntheticChannel> {
        let rows = pairs.iter().map(|&(o, l)| (o, vec![(l, 1.0)])).collect();
        SyntheticChannel::new(rows, 0.0, 0.0, seed)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn insertion_rate(&self) -> f64 {
        self.insertion_rate
    }

    pub fn deletion_rate(&self) -> f64 {
        self.deletion_rate
    }

    /// `p(l | o)` for the substitution step, 0 when absent.
    pub fn substitution(&self, original: char, latin: char) -> f64 {
        match self.rows.get(&original) {
            Some(row) => row.iter().filter(|e| e.0 == latin).map(|e| e.1).sum(),
            None => f64::from(u8::from(original == latin)),
        }
    }

    pub fn rows(&self) -> &BTreeMap<char, Vec<(char, f64)>> {
        &self.rows
    }

    fn insertions(&self, rng: &mut ChaCha8Rng, out: &mut String) {
        if self.insertion_symbols.is_empty() {
            return;
        }
        while rng.gen::<f64>() < self.insertion_rate {
            out.push(*self.insertion_symbols.choose(rng).expect("nonempty"));
        }
    }

    /// Passes one sentence through the channel.
    pub fn apply(&self, original: &str, rng: &mut ChaCha8Rng) -> String {
        let mut out = String::with_capacity(original.len());
        for c in original.chars() {
            self.insertions(rng, &mut out);
            if self.deletion_rate > 0.0 && rng.gen::<f64>() < self.deletion_rate {
                continue;
            }
            match self.rows.get(&c) {
                Some(row) => {
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    let mut pick = row[row.len() - 1].0;
                    for &(l, p) in row {
                        acc += p;
                        if u < acc {
                            pick = l;
                            break;
                        }
                    }
                    out.push(pick);
                }
                None => out.push(c),
            }
        }
        self.insertions(rng, &mut out);
        out
    }

    /// Romanizes every sentence in order with a generator seeded from the
    /// channel's seed.
    pub fn apply_all<S: AsRef<str>>(&self, originals: &[S]) -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        originals
            .iter()
            .map(|o| self.apply(o.as_ref(), &mut rng))
            .collect()
    }

    /// Text form: `@insertion_rate`, `@deletion_rate` and `@seed` headers,
    /// then `original<TAB>latin[<TAB>weight]` lines as in prior mapping
    /// files. A missing weight counts 1; `<sp>` stands for space.
    pub fn parse(name: &str, text: &str) -> Result<SyntheticChannel> {
        let (mut ins, mut del, mut seed) = (0.0, 0.0, 0u64);
        let mut rows: BTreeMap<char, Vec<(char, f64)>> = BTreeMap::new();
        let bad = |i: usize, msg: &str| Error::parse(name, i + 1, msg);
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if let Some(key) = cols[0].strip_prefix('@') {
                let value = cols.get(1).ok_or_else(|| bad(i, "header without value"))?;
                match key {
                    "insertion_rate" => ins = value.parse().map_err(|_| bad(i, "bad rate"))?,
                    "deletion_rate" => del = value.parse().map_err(|_| bad(i, "bad rate"))?,
                    "seed" => seed = value.parse().map_err(|_| bad(i, "bad seed"))?,
                    _ => return Err(bad(i, "unknown header")),
                }
                continue;
            }
            let (o, l, w) = match cols.as_slice() {
                [o, l] => (*o, *l, 1.0),
                [o, l, w] => (*o, *l, w.parse().map_err(|_| bad(i, "bad weight"))?),
                _ => return Err(bad(i, "expected original<TAB>latin[<TAB>weight]")),
            };
            let (Some(o), Some(l)) = (one_char(o), one_char(l)) else {
                return Err(bad(i, "each side must be one character"));
            };
            rows.entry(o).or_default().push((l, w));
        }
        SyntheticChannel::new(rows, ins, del, seed)
    }

    pub fn write<O: Write + ?Sized>(&self, out: &mut O) -> Result<()> {
        writeln!(out, "@insertion_rate\t{}", self.insertion_rate)?;
        writeln!(out, "@deletion_rate\t{}", self.deletion_rate)?;
        writeln!(out, "@seed\t{}", self.seed)?;
        for (&o, row) in &self.rows {
            for &(l, p) in row {
                writeln!(out, "{}\t{}\t{}", show(o), show(l), p)?;
            }
        }
        Ok(())
    }
}

fn one_char(s: &str) -> Option<char> {
    if s == "<sp>" {
        return Some(' ');
    }
    let mut cs = s.chars();
    match (cs.next(), cs.next()) {
        (Some(c), None) => Some(c),
        _ => None,
    }
}

fn show(c: char) -> String {
    if c == ' ' {
        "<sp>".into()
    } else {
        c.to_string()
    }
}

/// Draws `n` sentences from `corpus` with replacement and romanizes them.
/// Returns `(latin, originals)`; reproducible from the channel's seed.
pub fn generate_synthetic<S: AsRef<str>>(
    corpus: &[S],
    channel: &SyntheticChannel,
    n: usize,
) -> Result<(Vec<String>, Vec<String>)> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(channel.seed);
    let mut latin = Vec::with_capacity(n);
    let mut gold = Vec::with_capacity(n);
    for _ in 0..n {
        let o = corpus[rng.gen_range(0..corpus.len())].as_ref();
        latin.push(channel.apply(o, &mut rng));
        gold.push(o.to_string());
    }
    Ok((latin, gold))
}

/// A made-up language: a Zipf-distributed lexicon of syllabic words over
/// a given letter set.
#[derive(Clone, Debug)]
pub struct PseudoLanguage {
    words: Vec<String>,
    cumulative: Vec<f64>,
}

impl PseudoLanguage {
    /// Every third letter acts as a vowel; words are one to three
    /// consonant–vowel syllables, optionally closed by a consonant.
    pub fn new(letters: &[char], lexicon_size: usize, seed: u64) -> Result<PseudoLanguage> {
        let vowels: Vec<char> = letters.iter().copied().step_by(3).collect();
        let consonants: Vec<char> = letters
            .iter()
            .enumerate()
            .filter(|(i, _)| i % 3 != 0)
            .map(|(_, &c)| c)
            .collect();
        if vowels.is_empty() || consonants.is_empty() || lexicon_size == 0 {
            return Err(Error::Config(
                "pseudo-language needs at least two letters and one word".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = BTreeSet::new();
        let mut words = Vec::with_capacity(lexicon_size);
        let mut attempts = 0;
        while words.len() < lexicon_size {
            attempts += 1;
            if attempts > 1000 * lexicon_size {
                return Err(Error::Config("lexicon too large for the letter set".into()));
            }
            let mut w = String::new();
            for _ in 0..rng.gen_range(1..=3) {
                w.push(*consonants.choose(&mut rng).expect("nonempty"));
                w.push(*vowels.choose(&mut rng).expect("nonempty"));
            }
            if rng.gen_bool(0.3) {
                w.push(*consonants.choose(&mut rng).expect("nonempty"));
            }
            if seen.insert(w.clone()) {
                words.push(w);
            }
        }
        let mut acc = 0.0;
        let cumulative = (0..lexicon_size)
            .map(|r| {
                acc += 1.0 / (r + 1) as f64;
                acc
            })
            .collect();
        Ok(PseudoLanguage { words, cumulative })
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    fn word(&self, rng: &mut ChaCha8Rng) -> &str {
        let u = rng.gen::<f64>() * self.cumulative[self.cumulative.len() - 1];
        let i = self
            .cumulative
            .partition_point(|&c| c <= u)
            .min(self.words.len() - 1);
        &self.words[i]
    }

    /// Sentences of two to seven words.
    pub fn sentence(&self, rng: &mut ChaCha8Rng) -> String {
        let n = rng.gen_range(2..=7);
        (0..n).map(|_| self.word(rng)).collect::<Vec<_>>().join(" ")
    }

    /// Sentences until at least `chars` characters are produced.
    pub fn corpus(&self, chars: usize, seed: u64) -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        let mut total = 0;
        while total < chars {
            let s = self.sentence(&mut rng);
            total += s.chars().count();
            out.push(s);
        }
        out
    }
}
