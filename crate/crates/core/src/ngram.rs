//! Character n-gram language models with interpolated Witten–Bell smoothing,
//! relative-entropy pruning and export to a backoff WFSA.
//!
//! A model stores explicit entries `p(w|h)` for retained histories `h` and a
//! backoff weight `α(h)` per non-root history. Any other probability is
//! `α(h) · p(w|h')`, where `h'` is the longest proper suffix of `h` that is
//! itself a retained history. The root (empty history) holds an explicit
//! entry for every vocabulary token, so nothing over the alphabet has zero
//! probability.
//!
//! ```
//! use romdecipher::ngram::{count_ngrams, witten_bell};
//!
//! let counts = count_ngrams(&["abab"], 2).unwrap();
//! let model = witten_bell(&counts, 10.0);
//! assert!(model.score("ab") < model.score("ba"));
//! ```

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::automata::{
    chain_acceptor, compose, shortest_distance, Arc, SymbolTable, Symbols, Wfst, FAILURE_SYMBOL,
};
use crate::error::{Error, Result};
use crate::semiring::{LogWeight, Semiring};

pub const MIN_ORDER: usize = 2;
pub const MAX_ORDER: usize = 6;
pub const DEFAULT_K: f64 = 10.0;

/// Pruning threshold used for a model of the given order.
pub fn default_prune_threshold(order: usize) -> f64 {
    match order {
        0..=2 => 0.0,
        3 => 1e-5,
        _ => 2e-5,
    }
}

/// A position in a padded sentence. `Bos` only ever starts a history and
/// `Eos` is only ever predicted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Token {
    Bos,
    Char(char),
    Eos,
}

pub type History = Vec<Token>;

fn check_order(order: usize) -> Result<()> {
    if (MIN_ORDER..=MAX_ORDER).contains(&order) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "n-gram order {order} is outside {MIN_ORDER}..={MAX_ORDER}"
        )))
    }
}

fn padded(sentence: &str) -> Vec<Token> {
    std::iter::once(Token::Bos)
        .chain(sentence.chars().map(Token::Char))
        .chain(std::iter::once(Token::Eos))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct NgramCounts {
    order: usize,
    alphabet: Vec<char>,
    counts: HashMap<History, BTreeMap<Token, u64>>,
}

impl NgramCounts {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Sorted characters of the vocabulary, excluding sentinels.
    pub fn alphabet(&self) -> &[char] {
        &self.alphabet
    }

    /// Adds characters to the vocabulary without adding counts.
    pub fn with_alphabet<I: IntoIterator<Item = char>>(mut self, extra: I) -> Self {
        self.alphabet.extend(extra);
        self.alphabet.sort_unstable();
        self.alphabet.dedup();
        self
    }

    pub fn count(&self, history: &[Token], next: Token) -> u64 {
        self.counts
            .get(history)
            .and_then(|m| m.get(&next))
            .copied()
            .unwrap_or(0)
    }

    /// Number of times `history` was followed by anything.
    pub fn history_total(&self, history: &[Token]) -> u64 {
        self.counts
            .get(history)
            .map(|m| m.values().sum())
            .unwrap_or(0)
    }

    pub fn continuations(&self, history: &[Token]) -> Option<&BTreeMap<Token, u64>> {
        self.counts.get(history)
    }

    pub fn histories(&self) -> impl Iterator<Item = &History> {
        self.counts.keys()
    }

    fn merge(mut self, other: NgramCounts) -> NgramCounts {
        for (h, next) in other.counts {
            let mine = self.counts.entry(h).or_default();
            for (w, c) in next {
                *mine.entry(w).or_default() += c;
            }
        }
        self.with_alphabet(other.alphabet)
    }
}

/// Counts every n-gram up to `order` with `<s>`/`</s>` padding.
pub fn count_ngrams<S: AsRef<str> + Sync>(corpus: &[S], order: usize) -> Result<NgramCounts> {
    check_order(order)?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let empty = || NgramCounts {
        order,
        alphabet: Vec::new(),
        counts: HashMap::new(),
    };
    let counts = corpus
        .par_chunks(512)
        .map(|chunk| {
            let mut acc = empty();
            for sentence in chunk {
                let toks = padded(sentence.as_ref());
                for i in 1..toks.len() {
                    for n in 0..order.min(i + 1) {
                        let h = toks[i - n..i].to_vec();
                        *acc.counts.entry(h).or_default().entry(toks[i]).or_default() += 1;
                    }
                }
                acc.alphabet.extend(sentence.as_ref().chars());
            }
            acc.alphabet.sort_unstable();
            acc.alphabet.dedup();
            acc
        })
        .reduce(empty, NgramCounts::merge);
    Ok(counts)
}

#[derive(Clone, Debug, PartialEq)]
struct HistoryState {
    /// Explicit entries as negative log probabilities.
    entries: BTreeMap<Token, f64>,
    /// Negative log backoff weight; unused at the root.
    backoff: f64,
}

impl HistoryState {
    fn blank() -> Self {
        HistoryState {
            entries: BTreeMap::new(),
            backoff: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NgramModel {
    order: usize,
    alphabet: Vec<char>,
    states: HashMap<History, HistoryState>,
}

/// Interpolated Witten–Bell estimate with diversity scale `k`.
///
/// `p(w|h) = (c(hw) + k·d(h)·p(w|h')) / (c(h) + k·d(h))`, where `d(h)` counts
/// distinct successors of `h` including `</s>`. The root interpolates with
/// the uniform distribution over the alphabet plus `</s>`.
pub fn witten_bell(counts: &NgramCounts, k: f64) -> NgramModel {
    assert!(k > 0.0, "Witten-Bell scale must be positive");
    let mut model = NgramModel {
        order: counts.order,
        alphabet: counts.alphabet.clone(),
        states: HashMap::new(),
    };
    let vocab = model.vocabulary();
    let uniform = 1.0 / vocab.len() as f64;
    let empty = BTreeMap::new();
    let root = counts.continuations(&[]).unwrap_or(&empty);
    let (c, d) = (root.values().sum::<u64>() as f64, root.len() as f64);
    let entries = vocab
        .iter()
        .map(|&w| {
            let cw = root.get(&w).copied().unwrap_or(0) as f64;
            let p = if c > 0.0 {
                (cw + k * d * uniform) / (c + k * d)
            } else {
                uniform
            };
            (w, -p.ln())
        })
        .collect();
    model.states.insert(
        Vec::new(),
        HistoryState {
            entries,
            backoff: 0.0,
        },
    );

    let mut histories: Vec<&History> = counts.histories().filter(|h| !h.is_empty()).collect();
    histories.sort_by_key(|h| h.len());
    for h in histories {
        let next = &counts.counts[h];
        let c = next.values().sum::<u64>() as f64;
        let d = next.len() as f64;
        let lower = &h[1..];
        let entries = next
            .iter()
            .map(|(&w, &cw)| {
                let pl = (-model.neg_log_prob(lower, w)).exp();
                (w, -((cw as f64 + k * d * pl) / (c + k * d)).ln())
            })
            .collect();
        let alpha = k * d / (c + k * d);
        model.states.insert(
            h.clone(),
            HistoryState {
                entries,
                backoff: -alpha.ln(),
            },
        );
    }
    model
}

impl NgramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alphabet(&self) -> &[char] {
        &self.alphabet
    }

    /// Predictable tokens: the alphabet followed by `</s>`.
    pub fn vocabulary(&self) -> Vec<Token> {
        self.alphabet
            .iter()
            .map(|&c| Token::Char(c))
            .chain(std::iter::once(Token::Eos))
            .collect()
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    /// Explicit entries, the root's included.
    pub fn num_entries(&self) -> usize {
        self.states.values().map(|s| s.entries.len()).sum()
    }

    pub fn is_state(&self, history: &[Token]) -> bool {
        self.states.contains_key(history)
    }

    /// Retained histories in lexicographic order.
    pub fn histories(&self) -> Vec<&History> {
        let mut hs: Vec<&History> = self.states.keys().collect();
        hs.sort();
        hs
    }

    /// Explicit entries at `history` as `(token, -ln p)`.
    pub fn entries(&self, history: &[Token]) -> impl Iterator<Item = (Token, f64)> + '_ {
        self.states
            .get(history)
            .into_iter()
            .flat_map(|s| s.entries.iter().map(|(&w, &x)| (w, x)))
    }

    /// Negative log backoff weight of a retained non-root history.
    pub fn backoff(&self, history: &[Token]) -> Option<f64> {
        match history {
            [] => None,
            _ => self.states.get(history).map(|s| s.backoff),
        }
    }

    /// Longest suffix of `history` (at most `order - 1` tokens) that is retained.
    pub fn state_suffix<'h>(&self, history: &'h [Token]) -> &'h [Token] {
        let h = &history[history.len().saturating_sub(self.order - 1)..];
        (0..=h.len())
            .map(|i| &h[i..])
            .find(|s| self.states.contains_key(*s))
            .unwrap_or(&[])
    }

    /// Where a retained history backs off to.
    pub fn backoff_history<'h>(&self, history: &'h [Token]) -> &'h [Token] {
        match history {
            [] => &[],
            _ => self.state_suffix(&history[1..]),
        }
    }

    /// Retained history reached after reading `next` in `history`.
    pub fn next_history(&self, history: &[Token], next: Token) -> History {
        let mut h = history.to_vec();
        h.push(next);
        self.state_suffix(&h).to_vec()
    }

    /// `-ln p(next | history)`, following backoffs. Infinite for tokens
    /// outside the vocabulary.
    pub fn neg_log_prob(&self, history: &[Token], next: Token) -> f64 {
        let mut h = self.state_suffix(history);
        let mut acc = 0.0;
        loop {
            let state = &self.states[h];
            if let Some(&x) = state.entries.get(&next) {
                return acc + x;
            }
            if h.is_empty() {
                return f64::INFINITY;
            }
            acc += state.backoff;
            h = self.backoff_history(h);
        }
    }

    pub fn prob(&self, history: &[Token], next: Token) -> f64 {
        (-self.neg_log_prob(history, next)).exp()
    }

    /// Negative log probability of a whole sentence, sentinels included.
    pub fn score(&self, sentence: &str) -> f64 {
        let mut h = vec![Token::Bos];
        let mut total = 0.0;
        for c in sentence.chars() {
            total += self.neg_log_prob(&h, Token::Char(c));
            h = self.next_history(&h, Token::Char(c));
        }
        total + self.neg_log_prob(&h, Token::Eos)
    }

    /// Per-token perplexity over `sentences`, counting `</s>` as a token.
    pub fn perplexity<S: AsRef<str>>(&self, sentences: &[S]) -> f64 {
        let (nll, tokens) = sentences.iter().fold((0.0, 0usize), |(nll, n), s| {
            let s = s.as_ref();
            (nll + self.score(s), n + s.chars().count() + 1)
        });
        (nll / tokens as f64).exp()
    }

    /// Probability of seeing `history` as a context, by the chain rule.
    /// A leading `<s>` has probability one.
    pub fn history_prob(&self, history: &[Token]) -> f64 {
        let start = usize::from(history.first() == Some(&Token::Bos));
        let nll: f64 = (start..history.len())
            .map(|i| self.neg_log_prob(&history[..i], history[i]))
            .sum();
        (-nll).exp()
    }

    /// Relative-entropy increase from removing each explicit non-root entry
    /// on its own, with the backoff weight of its history renormalized.
    pub fn pruning_deltas(&self) -> Vec<(History, Token, f64)> {
        let mut out = Vec::new();
        for h in self.histories() {
            if h.is_empty() {
                continue;
            }
            let state = &self.states[h];
            let bo = self.backoff_history(h);
            let ph = self.history_prob(h);
            let pairs: Vec<(Token, f64, f64)> = state
                .entries
                .iter()
                .map(|(&w, &x)| (w, (-x).exp(), self.prob(bo, w)))
                .collect();
            let num = 1.0 - pairs.iter().map(|p| p.1).sum::<f64>();
            let den = 1.0 - pairs.iter().map(|p| p.2).sum::<f64>();
            for &(w, pw, pl) in &pairs {
                let alpha_new = (num + pw) / (den + pl);
                let mut change = pw * ((alpha_new * pl).ln() - pw.ln());
                if num > 1e-15 && den > 1e-15 {
                    change += num * (alpha_new.ln() - (num / den).ln());
                }
                out.push((h.clone(), w, -ph * change));
            }
        }
        out
    }

    fn renormalize_backoffs(&mut self) {
        let mut hs: Vec<History> = self
            .states
            .keys()
            .filter(|h| !h.is_empty())
            .cloned()
            .collect();
        hs.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        for h in hs {
            let bo = self.backoff_history(&h).to_vec();
            let (mut num, mut den) = (1.0, 1.0);
            for (&w, &x) in &self.states[&h].entries {
                num -= (-x).exp();
                den -= self.prob(&bo, w);
            }
            let alpha = num.max(f64::MIN_POSITIVE) / den.max(f64::MIN_POSITIVE);
            self.states.get_mut(&h).unwrap().backoff = -alpha.ln();
        }
    }
}

/// Stolcke pruning: removes every explicit entry whose relative-entropy
/// delta is below `theta`, then renormalizes backoff weights once.
///
/// Deltas are measured on the unpruned model. Entries are considered from
/// the longest histories down, in ascending delta order, and an entry `(h, w)`
/// stays whenever `hw` is still a history with entries of its own. Bigram
/// models and `theta = 0` are returned unchanged.
pub fn entropy_prune(model: &NgramModel, theta: f64) -> NgramModel {
    assert!(theta >= 0.0, "pruning threshold must be nonnegative");
    if model.order < 3 || theta == 0.0 {
        return model.clone();
    }
    let mut by_len: Vec<Vec<(History, Token, f64)>> = vec![Vec::new(); model.order];
    for (h, w, d) in model.pruning_deltas() {
        if d < theta {
            by_len[h.len()].push((h, w, d));
        }
    }
    let mut pruned = model.clone();
    for candidates in by_len.iter_mut().rev() {
        candidates.sort_by(|a, b| {
            a.2.total_cmp(&b.2)
                .then_with(|| (&a.0, a.1).cmp(&(&b.0, b.1)))
        });
        for (h, w, _) in candidates.iter() {
            let mut extended = h.clone();
            extended.push(*w);
            let protected = pruned
                .states
                .get(&extended)
                .is_some_and(|s| !s.entries.is_empty());
            if !protected {
                pruned.states.get_mut(h).unwrap().entries.remove(w);
            }
        }
    }
    pruned
        .states
        .retain(|h, s| h.is_empty() || *h == [Token::Bos] || !s.entries.is_empty());
    pruned.renormalize_backoffs();
    pruned
}

/// Counts, smooths and prunes in one go, with the default threshold for the
/// order.
pub fn train_lm<S: AsRef<str> + Sync>(
    corpus: &[S],
    order: usize,
    extra_alphabet: &[char],
    k: f64,
) -> Result<NgramModel> {
    let counts = count_ngrams(corpus, order)?.with_alphabet(extra_alphabet.iter().copied());
    Ok(entropy_prune(
        &witten_bell(&counts, k),
        default_prune_threshold(order),
    ))
}

/// Symbol table for the source side: `<eps>`, `<phi>`, then the alphabet.
pub fn source_symbols(alphabet: &[char]) -> Symbols {
    let mut table = SymbolTable::new();
    table.add(FAILURE_SYMBOL);
    for &c in alphabet {
        table.add_char(c);
    }
    Symbols::new(table)
}

/// Exports the model as a WFSA over `symbols`, which must contain `<phi>` and
/// every alphabet character.
///
/// States are the retained histories in lexicographic order, so the root is
/// state 0. The start state is `<s>`. `</s>` entries become final weights and
/// each non-root state has one failure arc to its backoff state.
pub fn to_wfsa(model: &NgramModel, symbols: &Symbols) -> Result<Wfst<LogWeight>> {
    let phi = symbols
        .id(FAILURE_SYMBOL)
        .ok_or_else(|| Error::Config("symbol table has no failure symbol".into()))?;
    let histories = model.histories();
    let index: HashMap<&[Token], usize> = histories
        .iter()
        .enumerate()
        .map(|(i, h)| (h.as_slice(), i))
        .collect();
    let mut m = Wfst::new(symbols.clone(), symbols.clone());
    for _ in &histories {
        m.add_state();
    }
    m.set_start(index[&[Token::Bos][..]]);
    m.set_failure_label(Some(phi));
    for (q, h) in histories.iter().enumerate() {
        for (w, x) in model.entries(h) {
            match w {
                Token::Char(c) => {
                    let label = symbols.id_of_char(c).ok_or_else(|| {
                        Error::Config(format!(
                            "alphabet character {c:?} missing from symbol table"
                        ))
                    })?;
                    let next = index[model.next_history(h, w).as_slice()];
                    m.add_arc(q, Arc::new(label, label, LogWeight(x), next));
                }
                Token::Eos => m.set_final(q, LogWeight(x)),
                Token::Bos => {}
            }
        }
        if !h.is_empty() {
            let bo = index[model.backoff_history(h)];
            let w = LogWeight(model.states[h.as_slice()].backoff);
            m.add_arc(q, Arc::new(phi, phi, w, bo));
        }
    }
    Ok(m)
}

/// Negative log probability of `sentence` computed by composing its chain
/// acceptor with an n-gram WFSA.
pub fn score_wfsa(wfsa: &Wfst<LogWeight>, sentence: &str) -> Result<f64> {
    let chain = chain_acceptor(sentence, wfsa.isyms())?;
    let lattice = compose(&chain, wfsa)?;
    Ok(shortest_distance(&lattice)?.total.neg_log())
}

fn token_text(t: Token) -> String {
    match t {
        Token::Bos => "<s>".into(),
        Token::Eos => "</s>".into(),
        Token::Char(' ') => "<sp>".into(),
        Token::Char(c) => c.to_string(),
    }
}

fn parse_token(s: &str) -> Option<Token> {
    match s {
        "<s>" => Some(Token::Bos),
        "</s>" => Some(Token::Eos),
        "<sp>" => Some(Token::Char(' ')),
        _ => {
            let mut cs = s.chars();
            match (cs.next(), cs.next()) {
                (Some(c), None) => Some(Token::Char(c)),
                _ => None,
            }
        }
    }
}

fn history_text(h: &[Token]) -> String {
    if h.is_empty() {
        return "<eps>".into();
    }
    h.iter()
        .map(|&t| token_text(t))
        .collect::<Vec<_>>()
        .join(" ")
}

impl NgramModel {
    /// Writes the text form:
    ///
    /// ```text
    /// order<TAB>n
    /// alphabet<TAB>c1<TAB>c2...
    /// p<TAB>history<TAB>token<TAB>-ln p
    /// b<TAB>history<TAB>-ln backoff
    /// ```
    ///
    /// Histories are space-separated tokens, `<eps>` for the root. A space
    /// character is `<sp>`. Lines are in lexicographic history order, all `p`
    /// lines before the `b` lines.
    pub fn write<O: Write + ?Sized>(&self, out: &mut O) -> Result<()> {
        writeln!(out, "order\t{}", self.order)?;
        let alphabet: Vec<String> = self
            .alphabet
            .iter()
            .map(|&c| token_text(Token::Char(c)))
            .collect();
        writeln!(out, "alphabet\t{}", alphabet.join("\t"))?;
        let histories = self.histories();
        for h in &histories {
            let ht = history_text(h);
            for (w, x) in self.entries(h) {
                writeln!(out, "p\t{ht}\t{}\t{x}", token_text(w))?;
            }
        }
        for h in histories.iter().filter(|h| !h.is_empty()) {
            writeln!(
                out,
                "b\t{}\t{}",
                history_text(h),
                self.states[h.as_slice()].backoff
            )?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R, source_name: &str) -> Result<NgramModel> {
        let err = |line, msg: String| Error::parse(source_name, line, msg);
        let mut order = None;
        let mut alphabet = Vec::new();
        let mut states: HashMap<History, HistoryState> = HashMap::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let history = |s: &str| -> Result<History> {
                if s == "<eps>" {
                    return Ok(Vec::new());
                }
                s.split(' ')
                    .map(|t| parse_token(t).ok_or_else(|| err(lineno, format!("bad token {t:?}"))))
                    .collect()
            };
            let number = |s: &str| -> Result<f64> {
                match s {
                    "inf" => Ok(f64::INFINITY),
                    _ => s
                        .parse()
                        .map_err(|_| err(lineno, format!("bad number {s:?}"))),
                }
            };
            match fields.as_slice() {
                ["order", n] => {
                    let n: usize = n.parse().map_err(|_| err(lineno, "bad order".into()))?;
                    check_order(n).map_err(|e| err(lineno, e.to_string()))?;
                    order = Some(n);
                }
                ["alphabet", rest @ ..] => {
                    for t in rest {
                        match parse_token(t) {
                            Some(Token::Char(c)) => alphabet.push(c),
                            _ => return Err(err(lineno, format!("bad alphabet symbol {t:?}"))),
                        }
                    }
                }
                ["p", h, w, x] => {
                    let w = parse_token(w)
                        .filter(|&w| w != Token::Bos)
                        .ok_or_else(|| err(lineno, format!("bad token {w:?}")))?;
                    let x = number(x)?;
                    states
                        .entry(history(h)?)
                        .or_insert_with(HistoryState::blank)
                        .entries
                        .insert(w, x);
                }
                ["b", h, x] => {
                    let x = number(x)?;
                    states
                        .entry(history(h)?)
                        .or_insert_with(HistoryState::blank)
                        .backoff = x;
                }
                _ => return Err(err(lineno, "unrecognized line".into())),
            }
        }
        let order = order.ok_or_else(|| err(0, "missing order line".into()))?;
        if let Some(h) = states.keys().find(|h| h.len() >= order) {
            return Err(err(
                0,
                format!("history {} too long for order {order}", history_text(h)),
            ));
        }
        if !states.contains_key(&Vec::new()) {
            return Err(err(0, "missing root entries".into()));
        }
        states
            .entry(vec![Token::Bos])
            .or_insert_with(HistoryState::blank);
        alphabet.sort_unstable();
        alphabet.dedup();
        Ok(NgramModel {
            order,
            alphabet,
            states,
        })
    }
}
