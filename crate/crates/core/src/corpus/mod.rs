//! Corpus readers and normalization.
//!
//! Both sides of the data are lowercased, punctuation is folded to ASCII,
//! whitespace is collapsed and runs of one character longer than two are
//! squashed to two. The Latin side is further stripped to ASCII.

mod synthetic;

pub use synthetic::{generate_synthetic, PseudoLanguage, SyntheticChannel};

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Latin,
    Original,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub text: String,
    pub side: Side,
    /// Where the sentence came from, e.g. `file:line`.
    pub source_id: String,
}

impl Sentence {
    /// Preprocesses `raw`; `None` when nothing is left.
    pub fn new(raw: &str, side: Side, source_id: impl Into<String>) -> Option<Sentence> {
        let text = preprocess(raw, side);
        (!text.is_empty()).then(|| Sentence {
            text,
            side,
            source_id: source_id.into(),
        })
    }
}

/// ASCII replacement for a punctuation or spacing character, if it has one.
///
/// Quotes and dashes fold to `'`, `"` and `-`, the ellipsis to `...`, and
/// every Unicode space to a plain space. Arabic `؟ ، ؛` fold to `? , ;` only
/// on the Latin side.
pub fn fold_punctuation(c: char, side: Side) -> Option<&'static str> {
    Some(match c {
        '\u{2018}' | '\u{2019}' | '\u{201A}' | '\u{201B}' | '\u{2032}' | '\u{00B4}' | '`' => "'",
        '\u{201C}' | '\u{201D}' | '\u{201E}' | '\u{201F}' | '\u{2033}' | '\u{00AB}'
        | '\u{00BB}' => "\"",
        '\u{2010}' | '\u{2011}' | '\u{2012}' | '\u{2013}' | '\u{2014}' | '\u{2015}'
        | '\u{2212}' => "-",
        '\u{2026}' => "...",
        '\u{061F}' if side == Side::Latin => "?",
        '\u{060C}' if side == Side::Latin => ",",
        '\u{061B}' if side == Side::Latin => ";",
        c if c.is_whitespace() => " ",
        _ => return None,
    })
}

fn is_invisible(c: char) -> bool {
    c.is_control() || matches!(c, '\u{200B}'..='\u{200F}' | '\u{2060}' | '\u{FEFF}')
}

/// Normalizes one line of text. Idempotent.
pub fn preprocess(text: &str, side: Side) -> String {
    let mut folded = String::with_capacity(text.len());
    for c in text.to_lowercase().chars() {
        if let Some(s) = fold_punctuation(c, side) {
            folded.push_str(s);
        } else if is_invisible(c) || (side == Side::Latin && !c.is_ascii()) {
            continue;
        } else {
            folded.push(c);
        }
    }
    let mut out = String::with_capacity(folded.len());
    let (mut prev, mut run) = (None, 0);
    for c in folded
        .split(' ')
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
        .chars()
    {
        if Some(c) == prev {
            run += 1;
        } else {
            prev = Some(c);
            run = 1;
        }
        if run <= 2 {
            out.push(c);
        }
    }
    out
}

/// Drops characters outside `alphabet` and re-collapses spaces.
pub fn restrict_to(text: &str, alphabet: &[char]) -> String {
    let kept: String = text.chars().filter(|c| alphabet.contains(c)).collect();
    kept.split(' ')
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Sorted set of characters over `sentences`.
pub fn alphabet<S: AsRef<str>>(sentences: &[S]) -> Vec<char> {
    let set: BTreeSet<char> = sentences.iter().flat_map(|s| s.as_ref().chars()).collect();
    set.into_iter().collect()
}

/// Items read from a file plus the 1-based line numbers dropped as empty
/// after preprocessing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Loaded<T> {
    pub items: Vec<T>,
    pub dropped: Vec<usize>,
}

/// One sentence per line.
pub fn parse_monolingual(name: &str, text: &str, side: Side) -> Loaded<Sentence> {
    let mut items = Vec::new();
    let mut dropped = Vec::new();
    for (i, line) in text.lines().enumerate() {
        match Sentence::new(line, side, format!("{name}:{}", i + 1)) {
            Some(s) => items.push(s),
            None => dropped.push(i + 1),
        }
    }
    Loaded { items, dropped }
}

pub fn read_monolingual(path: &Path, side: Side) -> Result<Loaded<Sentence>> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_monolingual(&path.display().to_string(), &text, side))
}

/// A romanized sentence and its original-script counterpart.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pair {
    pub latin: String,
    pub original: String,
}

/// `latin<TAB>original` per line; both sides preprocessed, order kept. A
/// line that is empty on either side after preprocessing is dropped.
pub fn parse_parallel(name: &str, text: &str) -> Result<Loaded<Pair>> {
    let mut items = Vec::new();
    let mut dropped = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let cols: Vec<&str> = line.split('\t').collect();
        let [latin, original] = cols.as_slice() else {
            return Err(Error::parse(
                name,
                i + 1,
                format!("expected 2 tab-separated columns, found {}", cols.len()),
            ));
        };
        let latin = preprocess(latin, Side::Latin);
        let original = preprocess(original, Side::Original);
        if latin.is_empty() || original.is_empty() {
            dropped.push(i + 1);
        } else {
            items.push(Pair { latin, original });
        }
    }
    Ok(Loaded { items, dropped })
}

pub fn load_parallel(path: &Path) -> Result<Loaded<Pair>> {
    let text = std::fs::read_to_string(path)?;
    parse_parallel(&path.display().to_string(), &text)
}

pub fn write_parallel<O: Write + ?Sized>(pairs: &[Pair], out: &mut O) -> Result<()> {
    for p in pairs {
        writeln!(out, "{}\t{}", p.latin, p.original)?;
    }
    Ok(())
}
