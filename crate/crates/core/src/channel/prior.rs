//! Dirichlet pseudo-counts from character mapping files.
//!
//! A mapping file has `original<TAB>latin` lines and `#` comments. Either
//! side may hold several characters; such a line contributes every
//! single-character pair it spans, once. A pair's pseudo-count is the number
//! of lines, across all files, that contribute it.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::{EditOp, OpTable};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SkippedPair {
    pub file: String,
    pub line: usize,
    pub original: char,
    pub latin: char,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PriorSpec {
    pairs: BTreeMap<(char, char), f64>,
    provenance: Vec<String>,
    skipped: Vec<SkippedPair>,
}

impl PriorSpec {
    /// No pseudo-counts at all.
    pub fn empty() -> PriorSpec {
        PriorSpec::default()
    }

    /// Pseudo-counts given directly per (original, latin) pair.
    pub fn from_pairs<I: IntoIterator<Item = ((char, char), f64)>>(pairs: I) -> PriorSpec {
        let mut prior = PriorSpec::empty();
        for (pair, alpha) in pairs {
            *prior.pairs.entry(pair).or_default() += alpha;
        }
        prior.provenance.push("inline".into());
        prior
    }

    /// Parses one mapping file. Pairs with a character outside `source` or
    /// `latin` are recorded in [`skipped`](Self::skipped) and left out.
    pub fn parse(name: &str, text: &str, source: &[char], latin: &[char]) -> Result<PriorSpec> {
        let mut prior = PriorSpec::empty();
        prior.provenance.push(name.to_string());
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (orig, lat) = match line.split('\t').collect::<Vec<_>>().as_slice() {
                [o, l] if !o.is_empty() && !l.is_empty() => (o.to_lowercase(), l.to_lowercase()),
                _ => return Err(Error::parse(name, i + 1, "expected original<TAB>latin")),
            };
            let pairs: BTreeSet<(char, char)> = orig
                .chars()
                .flat_map(|o| lat.chars().map(move |l| (o, l)))
                .collect();
            for (o, l) in pairs {
                if source.contains(&o) && latin.contains(&l) {
                    *prior.pairs.entry((o, l)).or_default() += 1.0;
                } else {
                    prior.skipped.push(SkippedPair {
                        file: name.to_string(),
                        line: i + 1,
                        original: o,
                        latin: l,
                    });
                }
            }
        }
        Ok(prior)
    }

    pub fn merge(mut self, other: PriorSpec) -> PriorSpec {
        for (pair, alpha) in other.pairs {
            *self.pairs.entry(pair).or_default() += alpha;
        }
        self.provenance.extend(other.provenance);
        self.skipped.extend(other.skipped);
        self
    }

    pub fn pair(&self, original: char, latin: char) -> f64 {
        self.pairs.get(&(original, latin)).copied().unwrap_or(0.0)
    }

    pub fn pairs(&self) -> impl Iterator<Item = ((char, char), f64)> + '_ {
        self.pairs.iter().map(|(&k, &v)| (k, v))
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    pub fn skipped(&self) -> &[SkippedPair] {
        &self.skipped
    }

    /// Pseudo-counts indexed by op id. Only substitutions present in the
    /// table receive mass.
    pub fn alpha(&self, table: &OpTable) -> Vec<f64> {
        table
            .ops()
            .iter()
            .map(|op| match *op {
                EditOp::Sub(o, l) => self.pair(o, l),
                _ => 0.0,
            })
            .collect()
    }
}

/// Reads and merges mapping files from disk.
pub fn load_prior<P: AsRef<Path>>(
    paths: &[P],
    source: &[char],
    latin: &[char],
) -> Result<PriorSpec> {
    let mut prior = PriorSpec::empty();
    for path in paths {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        prior = prior.merge(PriorSpec::parse(
            &path.display().to_string(),
            &text,
            source,
            latin,
        )?);
    }
    Ok(prior)
}

const RU_YAWERTY: &str = include_str!("../../data/priors/ru_yawerty.tsv");
const RU_TRANSLIT: &str = include_str!("../../data/priors/ru_translit.tsv");
const RU_MAC: &str = include_str!("../../data/priors/ru_mac_phonetic.tsv");
const RU_STUDENT: &str = include_str!("../../data/priors/ru_student.tsv");
const AR_PHONETIC: &str = include_str!("../../data/priors/ar_phonetic.tsv");
const AR_CHAT: &str = include_str!("../../data/priors/ar_chat.tsv");
const CONFUSABLES: &str = include_str!("../../data/priors/confusables_cyrillic.tsv");

/// Shipped mapping files as `(name, contents)`. `kind` is `phonetic`,
/// `visual` or `combined`. Arabic has no visual mappings.
pub fn builtin_priors(language: &str, kind: &str) -> Result<Vec<(&'static str, &'static str)>> {
    let phonetic: Vec<(&str, &str)> = match language {
        "russian" => vec![
            ("ru_yawerty.tsv", RU_YAWERTY),
            ("ru_translit.tsv", RU_TRANSLIT),
            ("ru_mac_phonetic.tsv", RU_MAC),
            ("ru_student.tsv", RU_STUDENT),
        ],
        "arabic" => vec![("ar_phonetic.tsv", AR_PHONETIC), ("ar_chat.tsv", AR_CHAT)],
        other => return Err(Error::Config(format!("unknown language {other:?}"))),
    };
    let visual: Vec<(&str, &str)> = match language {
        "russian" => vec![("confusables_cyrillic.tsv", CONFUSABLES)],
        _ => Vec::new(),
    };
    match kind {
        "phonetic" => Ok(phonetic),
        "visual" => Ok(visual),
        "combined" => Ok(phonetic.into_iter().chain(visual).collect()),
        "none" | "uniform" => Ok(Vec::new()),
        other => Err(Error::Config(format!("unknown prior kind {other:?}"))),
    }
}

/// Per-language settings: declared alphabets and delay limit.
#[derive(Clone, Debug, PartialEq)]
pub struct LanguageProfile {
    pub name: String,
    pub delay: usize,
    pub source_alphabet: Vec<char>,
    pub latin_alphabet: Vec<char>,
}

fn sorted(chars: impl IntoIterator<Item = char>) -> Vec<char> {
    let set: BTreeSet<char> = chars.into_iter().collect();
    set.into_iter().collect()
}

fn ascii_latin() -> impl Iterator<Item = char> {
    ('a'..='z')
        .chain('0'..='9')
        .chain((' '..='~').filter(|c| c.is_ascii_punctuation()))
        .chain(std::iter::once(' '))
}

impl LanguageProfile {
    pub fn russian() -> LanguageProfile {
        LanguageProfile {
            name: "russian".into(),
            delay: 2,
            source_alphabet: sorted(
                ('а'..='я')
                    .chain(std::iter::once('ё'))
                    .chain('0'..='9')
                    .chain((' '..='~').filter(|c| c.is_ascii_punctuation()))
                    .chain([' ', '«', '»']),
            ),
            latin_alphabet: sorted(ascii_latin()),
        }
    }

    pub fn arabic() -> LanguageProfile {
        LanguageProfile {
            name: "arabic".into(),
            delay: 5,
            source_alphabet: sorted(
                "ءآأؤإئابةتثجحخدذرزسشصضطظعغفقكلمنهوىي"
                    .chars()
                    .chain('0'..='9')
                    .chain((' '..='~').filter(|c| c.is_ascii_punctuation()))
                    .chain([' ', '،', '؛', '؟']),
            ),
            latin_alphabet: sorted(ascii_latin()),
        }
    }

    pub fn by_name(name: &str) -> Result<LanguageProfile> {
        match name {
            "russian" => Ok(LanguageProfile::russian()),
            "arabic" => Ok(LanguageProfile::arabic()),
            other => Err(Error::Config(format!("unknown language {other:?}"))),
        }
    }

    /// Merged pseudo-counts of the shipped files of the given kind.
    pub fn builtin_prior(&self, kind: &str) -> Result<PriorSpec> {
        builtin_priors(&self.name, kind)?.into_iter().try_fold(
            PriorSpec::empty(),
            |acc, (name, text)| {
                Ok(acc.merge(PriorSpec::parse(
                    name,
                    text,
                    &self.source_alphabet,
                    &self.latin_alphabet,
                )?))
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_emission_fst, Restrictions};
    use crate::semiring::LogWeight;

    #[test]
    fn multi_character_entries_expand_to_pairs() {
        let p = PriorSpec::parse("t", "ю\tLO\n", &['ю'], &['l', 'o']).unwrap();
        assert_eq!(p.pair('ю', 'l'), 1.0);
        assert_eq!(p.pair('ю', 'o'), 1.0);
    }

    #[test]
    fn counts_add_across_files_once_per_line() {
        let a = PriorSpec::parse("a", "в\tvv\nв\tv\n", &['в'], &['v']).unwrap();
        let b = PriorSpec::parse("b", "в\tv\n", &['в'], &['v']).unwrap();
        assert_eq!(a.merge(b).pair('в', 'v'), 3.0);
    }

    #[test]
    fn out_of_alphabet_pairs_are_reported() {
        let p = PriorSpec::parse("f", "# header\nщ\tsh\n", &['щ'], &['s']).unwrap();
        assert_eq!(p.pair('щ', 's'), 1.0);
        assert_eq!(
            p.skipped(),
            &[SkippedPair {
                file: "f".into(),
                line: 2,
                original: 'щ',
                latin: 'h'
            }]
        );
    }

    #[test]
    fn malformed_line_is_rejected_with_its_number() {
        let err = PriorSpec::parse("f", "a\tb\nbroken\n", &['a'], &['b']).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn no_files_means_no_pseudo_counts() {
        let r = LanguageProfile::russian();
        let p = load_prior::<&str>(&[], &r.source_alphabet, &r.latin_alphabet).unwrap();
        assert!(p.is_empty());
        let t = OpTable::new(&r.source_alphabet, &r.latin_alphabet, None);
        assert!(p.alpha(&t).iter().all(|&a| a == 0.0));
    }

    #[test]
    fn shipped_russian_priors_cover_known_pairs() {
        let r = LanguageProfile::russian();
        let p = r.builtin_prior("combined").unwrap();
        assert!(p.pair('в', 'v') >= 1.0);
        assert!(p.pair('в', 'w') >= 1.0);
        assert!(p.pair('в', 'b') >= 1.0);
        assert!(p.pair('ю', 'l') >= 1.0 && p.pair('ю', 'o') >= 1.0);
        assert!(p.pair('б', '6') >= 1.0);
        assert!(p.pair('р', 'p') >= 1.0);
        let phonetic = r.builtin_prior("phonetic").unwrap();
        assert_eq!(phonetic.provenance().len(), 4);
        assert!(phonetic.skipped().is_empty());
    }

    #[test]
    fn shipped_arabic_priors_cover_known_pairs() {
        let a = LanguageProfile::arabic();
        let p = a.builtin_prior("combined").unwrap();
        assert!(p.pair('و', 'w') >= 1.0 && p.pair('و', 'u') >= 1.0);
        assert!(p.pair('خ', 'k') >= 1.0 && p.pair('خ', 'x') >= 1.0);
        assert_eq!(p.provenance().len(), 2);
        assert!(builtin_priors("arabic", "visual").unwrap().is_empty());
    }

    #[test]
    fn alpha_only_on_substitutions() {
        let r = LanguageProfile::russian();
        let t = OpTable::new(
            &r.source_alphabet,
            &r.latin_alphabet,
            Some(&Restrictions::default()),
        );
        let p = r.builtin_prior("combined").unwrap();
        let alpha = p.alpha(&t);
        for (id, &a) in alpha.iter().enumerate() {
            if a > 0.0 {
                assert!(matches!(t.op(id as u32), EditOp::Sub(..)));
            }
        }
    }

    #[test]
    fn restrictions_halve_the_real_machines() {
        for profile in [LanguageProfile::russian(), LanguageProfile::arabic()] {
            let (s, l) = (&profile.source_alphabet, &profile.latin_alphabet);
            let full = std::sync::Arc::new(OpTable::new(s, l, None));
            let restricted =
                std::sync::Arc::new(OpTable::new(s, l, Some(&Restrictions::default())));
            let count = |t| {
                build_emission_fst::<LogWeight>(
                    &crate::channel::EmissionParams::uniform(t),
                    profile.delay,
                )
                .num_arcs()
            };
            let (a, b) = (count(full), count(restricted));
            assert!(2 * b < a, "{}: {b} vs {a}", profile.name);
        }
    }
}
