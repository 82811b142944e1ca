//! The emission model: conditional edit-operation distributions and their
//! delay-limited transducer.
//!
//! Each source character `c` has one family over `{c → t}` substitutions and
//! `c → ε` deletion. Insertions form one more family over `{ε → t}` and a
//! "no insertion" outcome. Before every consumed source character, and at
//! the end, the channel draws from that family until it draws "no
//! insertion", so insertions are geometric and the model stays locally
//! normalized.

mod prior;

pub use prior::{builtin_priors, load_prior, LanguageProfile, PriorSpec, SkippedPair};

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::automata::{Arc, Label, SymbolTable, Symbols, Wfst, EPSILON};
use crate::error::{Error, Result};
use crate::ngram::source_symbols;
use crate::semiring::Semiring;

/// Probability deletions are pinned to while they are frozen.
pub const FROZEN_DELETION: f64 = 3.720_075_976_020_836e-44;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EditOp {
    Sub(char, char),
    Del(char),
    Ins(char),
    NoInsert,
}

impl fmt::Display for EditOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EditOp::Sub(o, l) => write!(f, "{}:{}", show(*o), show(*l)),
            EditOp::Del(o) => write!(f, "{}:<eps>", show(*o)),
            EditOp::Ins(l) => write!(f, "<eps>:{}", show(*l)),
            EditOp::NoInsert => write!(f, "<eps>:<none>"),
        }
    }
}

fn show(c: char) -> String {
    if c == ' ' {
        "<sp>".into()
    } else {
        c.to_string()
    }
}

/// Space and punctuation, on either side.
pub fn is_restricted(c: char) -> bool {
    c.is_whitespace()
        || c.is_ascii_punctuation()
        || matches!(c, '،' | '؛' | '؟' | '«' | '»' | '…' | '—' | '–')
}

/// Which substitutions restricted source symbols may use besides identity.
#[derive(Clone, Debug, PartialEq)]
pub struct Restrictions {
    pub special_pairs: Vec<(char, char)>,
}

impl Default for Restrictions {
    fn default() -> Self {
        Restrictions {
            special_pairs: vec![('؟', '?'), ('،', ','), ('؛', ';')],
        }
    }
}

impl Restrictions {
    /// Restricted sources keep identity, their special pairs and deletion.
    /// Unrestricted sources never produce a restricted Latin symbol.
    pub fn allows(&self, op: EditOp) -> bool {
        match op {
            EditOp::Sub(o, l) if is_restricted(o) => o == l || self.special_pairs.contains(&(o, l)),
            EditOp::Sub(_, l) => !is_restricted(l),
            EditOp::Del(_) | EditOp::Ins(_) | EditOp::NoInsert => true,
        }
    }
}

/// Dense numbering of the edit operations over a pair of alphabets.
///
/// Ids run over source characters in order, each with its substitutions in
/// Latin order followed by its deletion; insertions come last, followed by
/// the no-insertion outcome. Each family therefore occupies a contiguous id
/// range.
#[derive(Debug)]
pub struct OpTable {
    source: Vec<char>,
    latin: Vec<char>,
    ops: Vec<EditOp>,
    ids: HashMap<EditOp, u32>,
    families: Vec<Range<u32>>,
    source_syms: Symbols,
    latin_syms: Symbols,
}

impl PartialEq for OpTable {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source && self.latin == other.latin && self.ops == other.ops
    }
}

impl OpTable {
    /// Every operation over the alphabets, filtered by `restrictions`.
    pub fn new(source: &[char], latin: &[char], restrictions: Option<&Restrictions>) -> OpTable {
        let mut ops = Vec::new();
        for &o in source {
            ops.extend(latin.iter().map(|&l| EditOp::Sub(o, l)));
            ops.push(EditOp::Del(o));
        }
        ops.extend(latin.iter().map(|&l| EditOp::Ins(l)));
        ops.push(EditOp::NoInsert);
        if let Some(r) = restrictions {
            ops.retain(|&op| r.allows(op));
        }
        OpTable::from_ops(source, latin, ops).expect("operations are built from the alphabets")
    }

    /// Table holding exactly `ops`, renumbered canonically.
    pub fn from_ops<I: IntoIterator<Item = EditOp>>(
        source: &[char],
        latin: &[char],
        ops: I,
    ) -> Result<OpTable> {
        let sidx: HashMap<char, usize> = source.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let lidx: HashMap<char, usize> = latin.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        if sidx.len() != source.len() || lidx.len() != latin.len() {
            return Err(Error::Config("alphabet has repeated characters".into()));
        }
        let unknown = |c: char| Error::Config(format!("character {c:?} is not in the alphabet"));
        let mut keyed = Vec::new();
        for op in ops {
            let key = match op {
                EditOp::Sub(o, l) => (
                    *sidx.get(&o).ok_or_else(|| unknown(o))?,
                    *lidx.get(&l).ok_or_else(|| unknown(l))?,
                ),
                EditOp::Del(o) => (*sidx.get(&o).ok_or_else(|| unknown(o))?, usize::MAX),
                EditOp::Ins(l) => (usize::MAX, *lidx.get(&l).ok_or_else(|| unknown(l))?),
                EditOp::NoInsert => (usize::MAX, usize::MAX),
            };
            keyed.push((key, op));
        }
        keyed.sort_unstable();
        keyed.dedup();
        let ops: Vec<EditOp> = keyed.into_iter().map(|(_, op)| op).collect();
        let ids = ops
            .iter()
            .enumerate()
            .map(|(i, &op)| (op, i as u32))
            .collect();

        let mut families = vec![0..0; source.len() + 1];
        let family_of = |op: &EditOp| match op {
            EditOp::Sub(o, _) | EditOp::Del(o) => sidx[o],
            EditOp::Ins(_) | EditOp::NoInsert => source.len(),
        };
        let mut start = 0;
        while start < ops.len() {
            let f = family_of(&ops[start]);
            let end = start
                + ops[start..]
                    .iter()
                    .take_while(|op| family_of(op) == f)
                    .count();
            families[f] = start as u32..end as u32;
            start = end;
        }

        let latin_table = SymbolTable::from_chars(latin.iter().copied());
        Ok(OpTable {
            source: source.to_vec(),
            latin: latin.to_vec(),
            ops,
            ids,
            families,
            source_syms: source_symbols(source),
            latin_syms: Symbols::new(latin_table),
        })
    }

    pub fn source(&self) -> &[char] {
        &self.source
    }

    pub fn latin(&self) -> &[char] {
        &self.latin
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn ops(&self) -> &[EditOp] {
        &self.ops
    }

    pub fn op(&self, id: u32) -> EditOp {
        self.ops[id as usize]
    }

    pub fn id(&self, op: EditOp) -> Option<u32> {
        self.ids.get(&op).copied()
    }

    /// Id ranges per family: one per source character, insertions last.
    pub fn families(&self) -> &[Range<u32>] {
        &self.families
    }

    pub fn insertion_family(&self) -> Range<u32> {
        self.families[self.source.len()].clone()
    }

    /// Source-side symbols: `<eps>`, `<phi>`, then the source alphabet.
    pub fn source_symbols(&self) -> &Symbols {
        &self.source_syms
    }

    pub fn latin_symbols(&self) -> &Symbols {
        &self.latin_syms
    }

    /// Arc labels of an operation; the no-insertion outcome has no arc and
    /// maps to `(ε, ε)`.
    pub fn labels(&self, op: EditOp) -> (Label, Label) {
        let s = |c: char| self.source_syms.id_of_char(c).expect("source character");
        let l = |c: char| self.latin_syms.id_of_char(c).expect("latin character");
        match op {
            EditOp::Sub(o, t) => (s(o), l(t)),
            EditOp::Del(o) => (s(o), EPSILON),
            EditOp::Ins(t) => (EPSILON, l(t)),
            EditOp::NoInsert => (EPSILON, EPSILON),
        }
    }

    pub fn no_insert(&self) -> Option<u32> {
        self.id(EditOp::NoInsert)
    }

    /// The operation an emission arc with these labels stands for.
    pub fn op_for_labels(&self, ilabel: Label, olabel: Label) -> Option<u32> {
        let o = (ilabel != EPSILON)
            .then(|| self.source_syms.char_of(ilabel))
            .flatten();
        let l = (olabel != EPSILON)
            .then(|| self.latin_syms.char_of(olabel))
            .flatten();
        let op = match (o, l) {
            (Some(o), Some(l)) => EditOp::Sub(o, l),
            (Some(o), None) => EditOp::Del(o),
            (None, Some(l)) => EditOp::Ins(l),
            (None, None) => return None,
        };
        self.id(op)
    }
}

/// Emission parameters θ over a shared [`OpTable`].
#[derive(Clone, Debug, PartialEq)]
pub struct EmissionParams {
    table: std::sync::Arc<OpTable>,
    probs: Vec<f64>,
    insertions_enabled: bool,
    frozen_deletion: Option<f64>,
}

/// Total insertion probability the insertion family starts with.
pub const INITIAL_INSERTION_RATE: f64 = 0.1;

/// Uniform families perturbed by multiplicative noise `1 + noise·u`,
/// `u ~ U[0, 1)`, drawn from a generator seeded with `seed`. In the
/// insertion family the insertions share [`INITIAL_INSERTION_RATE`] and the
/// no-insertion outcome holds the rest.
pub fn init_params(table: std::sync::Arc<OpTable>, seed: u64, noise: f64) -> EmissionParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probs: Vec<f64> = (0..table.len())
        .map(|_| 1.0 + noise * rng.gen::<f64>())
        .collect();
    let ins = table.insertion_family();
    if let Some(stop) = table.no_insert().filter(|_| ins.len() > 1) {
        let rest: f64 = ins
            .clone()
            .filter(|&i| i != stop)
            .map(|i| probs[i as usize])
            .sum();
        for i in ins.filter(|&i| i != stop) {
            probs[i as usize] *= INITIAL_INSERTION_RATE / rest;
        }
        probs[stop as usize] = 1.0 - INITIAL_INSERTION_RATE;
    }
    let mut params = EmissionParams {
        table,
        probs,
        insertions_enabled: true,
        frozen_deletion: None,
    };
    params.normalize();
    params
}

impl EmissionParams {
    pub fn uniform(table: std::sync::Arc<OpTable>) -> EmissionParams {
        init_params(table, 0, 0.0)
    }

    /// Parameters from raw per-op values, normalized per family.
    pub fn from_probs(table: std::sync::Arc<OpTable>, probs: Vec<f64>) -> Result<EmissionParams> {
        if probs.len() != table.len() {
            return Err(Error::Config(format!(
                "expected {} parameters, got {}",
                table.len(),
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Config(
                "parameters must be finite and nonnegative".into(),
            ));
        }
        let mut params = EmissionParams {
            table,
            probs,
            insertions_enabled: true,
            frozen_deletion: None,
        };
        params.normalize();
        Ok(params)
    }

    pub fn table(&self) -> &std::sync::Arc<OpTable> {
        &self.table
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, id: u32) -> f64 {
        self.probs[id as usize]
    }

    pub fn prob_of(&self, op: EditOp) -> f64 {
        self.table.id(op).map_or(0.0, |id| self.prob(id))
    }

    pub fn insertions_enabled(&self) -> bool {
        self.insertions_enabled
    }

    pub fn frozen_deletion(&self) -> Option<f64> {
        self.frozen_deletion
    }

    /// `-ln θ(no insertion)` while insertions are enabled, else 0.
    pub fn no_insert_cost(&self) -> f64 {
        match (self.insertions_enabled, self.table.no_insert()) {
            (true, Some(id)) => -self.prob(id).ln(),
            _ => 0.0,
        }
    }

    /// The negative log probability pruning compares with its threshold:
    /// `-ln θ` for substitutions and deletions, and for an insertion the
    /// probability of its character given that an insertion happens.
    pub fn prune_cost(&self, op: EditOp) -> f64 {
        let p = self.prob_of(op);
        match op {
            EditOp::Ins(_) => {
                let rest = 1.0 - self.table.no_insert().map_or(0.0, |id| self.prob(id));
                -(p / rest).ln()
            }
            _ => -p.ln(),
        }
    }

    /// Which operations survive pruning at `threshold`, by id. Every source
    /// character keeps at least its cheapest operation so that each source
    /// string still has an emission.
    pub fn surviving_ops(&self, threshold: f64) -> Vec<bool> {
        let ops = self.table.ops();
        let mut keep: Vec<bool> = ops
            .iter()
            .map(|&op| self.prune_cost(op) <= threshold)
            .collect();
        let insertions = self.table.insertion_family();
        for family in self.table.families() {
            if *family == insertions || family.clone().any(|id| keep[id as usize]) {
                continue;
            }
            if let Some(best) = family
                .clone()
                .filter(|&id| self.prob(id) > 0.0)
                .min_by(|&a, &b| {
                    self.prune_cost(ops[a as usize])
                        .total_cmp(&self.prune_cost(ops[b as usize]))
                })
            {
                keep[best as usize] = true;
            }
        }
        keep
    }

    /// `-ln p(l, e | o)` of an edit sequence, including the no-insertion
    /// draws before every consumed character and at the end.
    pub fn path_cost(&self, ops: &[EditOp]) -> f64 {
        let stop = self.no_insert_cost();
        let mut cost = stop;
        for &op in ops {
            cost -= self.prob_of(op).ln();
            if matches!(op, EditOp::Sub(..) | EditOp::Del(_)) {
                cost += stop;
            }
        }
        cost
    }

    pub fn family_sum(&self, family: &Range<u32>) -> f64 {
        self.probs[family.start as usize..family.end as usize]
            .iter()
            .sum()
    }

    /// Same parameters under a curriculum stage's switches. Freezing pins
    /// every deletion to `value` and rescales the rest of its family; a family
    /// whose only member is the deletion is left alone.
    pub fn with_stage(&self, insertions_enabled: bool, frozen_deletion: Option<f64>) -> Self {
        let mut p = self.clone();
        p.insertions_enabled = insertions_enabled;
        p.frozen_deletion = frozen_deletion;
        p.normalize();
        p
    }

    /// Drops operations the restrictions disallow and renormalizes.
    pub fn apply_restrictions(&self, restrictions: &Restrictions) -> EmissionParams {
        let t = &self.table;
        let table = OpTable::from_ops(
            t.source(),
            t.latin(),
            t.ops()
                .iter()
                .copied()
                .filter(|&op| restrictions.allows(op)),
        )
        .expect("subset of a valid table");
        let probs = table.ops().iter().map(|&op| self.prob_of(op)).collect();
        let mut params = EmissionParams {
            table: std::sync::Arc::new(table),
            probs,
            insertions_enabled: self.insertions_enabled,
            frozen_deletion: self.frozen_deletion,
        };
        params.normalize();
        params
    }

    /// Renormalizes each family; families with no mass become uniform.
    pub(crate) fn normalize(&mut self) {
        for (f, range) in self.table.families.iter().enumerate() {
            let (lo, hi) = (range.start as usize, range.end as usize);
            if lo == hi {
                continue;
            }
            let deletion = (f < self.table.source.len())
                .then(|| self.table.id(EditOp::Del(self.table.source[f])))
                .flatten()
                .map(|id| id as usize);
            let frozen = match (self.frozen_deletion, deletion) {
                (Some(v), Some(d)) if hi - lo > 1 => Some((v, d)),
                _ => None,
            };
            let rest: f64 = (lo..hi)
                .filter(|&i| Some(i) != frozen.map(|f| f.1))
                .map(|i| self.probs[i])
                .sum();
            let target = frozen.map_or(1.0, |(v, _)| 1.0 - v);
            let count = (hi - lo - usize::from(frozen.is_some())) as f64;
            for i in lo..hi {
                if Some(i) == frozen.map(|f| f.1) {
                    continue;
                }
                self.probs[i] = if rest > 0.0 {
                    self.probs[i] / rest * target
                } else {
                    target / count
                };
            }
            if let Some((v, d)) = frozen {
                self.probs[d] = v;
            }
        }
    }

    pub(crate) fn set_probs(&mut self, probs: Vec<f64>) {
        debug_assert_eq!(probs.len(), self.probs.len());
        self.probs = probs;
        self.normalize();
    }

    /// Most probable substitution target per source character.
    pub fn argmax_substitutions(&self) -> Vec<(char, Option<char>)> {
        let t = &self.table;
        t.source()
            .iter()
            .zip(&t.families)
            .map(|(&o, range)| {
                let best = range
                    .clone()
                    .filter_map(|id| match t.op(id) {
                        EditOp::Sub(_, l) => Some((l, self.prob(id))),
                        _ => None,
                    })
                    .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(&a.0)));
                (o, best.map(|b| b.0))
            })
            .collect()
    }
}

/// The delay-limited emission transducer.
///
/// State `k + delay` tracks delay `k` in `-delay..=delay`, starting at 0.
/// Substitutions loop on every state, deletions move from `k` to `k + 1` and
/// insertions from `k` to `k - 1`. Every state is final. Arc weights are
/// `-ln θ` and identical across states for the same operation.
///
/// With insertions enabled, every substitution and deletion arc and every
/// final weight also carries the no-insertion probability. With insertions
/// disabled there are no insertion arcs and no such factor.
pub fn build_emission_fst<W: Semiring>(params: &EmissionParams, delay: usize) -> Wfst<W> {
    build(params, delay, |_| true)
}

/// [`build_emission_fst`] without the operations pruned at `threshold`
/// (see [`EmissionParams::surviving_ops`]).
pub fn build_pruned_emission_fst<W: Semiring>(
    params: &EmissionParams,
    delay: usize,
    threshold: f64,
) -> Wfst<W> {
    let keep = params.surviving_ops(threshold);
    build(params, delay, |id| keep[id])
}

fn build<W: Semiring>(
    params: &EmissionParams,
    delay: usize,
    keep: impl Fn(usize) -> bool,
) -> Wfst<W> {
    let t = &params.table;
    let mut m = Wfst::new(t.source_symbols().clone(), t.latin_symbols().clone());
    let n = 2 * delay + 1;
    for _ in 0..n {
        m.add_state();
    }
    m.set_start(delay);
    let stop = params.no_insert_cost();
    for q in 0..n {
        m.set_final(q, W::from_neg_log(stop));
    }
    for (id, &op) in t.ops().iter().enumerate() {
        let w = -params.probs[id].ln();
        if w == f64::INFINITY || !keep(id) {
            continue;
        }
        let (il, ol) = t.labels(op);
        for q in 0..n {
            let (next, w) = match op {
                EditOp::Sub(..) => (Some(q), w + stop),
                EditOp::Del(_) => ((q + 1 < n).then_some(q + 1), w + stop),
                EditOp::Ins(_) if params.insertions_enabled => (q.checked_sub(1), w),
                EditOp::Ins(_) | EditOp::NoInsert => (None, w),
            };
            if let Some(r) = next {
                m.add_arc(q, Arc::new(il, ol, W::from_neg_log(w), r));
            }
        }
    }
    m
}

const DELETE: &str = "DELETE";
const INSERT: &str = "INSERT";
const NOTHING: &str = "NONE";

fn parse_symbol(s: &str) -> Option<char> {
    if s == "<sp>" {
        return Some(' ');
    }
    let mut cs = s.chars();
    match (cs.next(), cs.next()) {
        (Some(c), None) => Some(c),
        _ => None,
    }
}

fn format_prob(p: f64) -> String {
    if p != 0.0 && p.abs() < 1e-4 {
        format!("{p:e}")
    } else {
        format!("{p}")
    }
}

impl EmissionParams {
    /// Writes the text form: `@`-directives for the alphabets and stage
    /// switches, then one `source<TAB>target<TAB>probability` line per
    /// operation in id order, with `DELETE` and `INSERT` standing in for ε
    /// and `INSERT<TAB>NONE` for the no-insertion outcome.
    pub fn write<O: Write + ?Sized>(&self, out: &mut O) -> Result<()> {
        let t = &self.table;
        let list = |cs: &[char]| cs.iter().map(|&c| show(c)).collect::<Vec<_>>().join("\t");
        writeln!(out, "@source\t{}", list(t.source()))?;
        writeln!(out, "@latin\t{}", list(t.latin()))?;
        writeln!(out, "@insertions\t{}", self.insertions_enabled)?;
        match self.frozen_deletion {
            Some(v) => writeln!(out, "@frozen_deletion\t{}", format_prob(v))?,
            None => writeln!(out, "@frozen_deletion\tnone")?,
        }
        for (id, &op) in t.ops().iter().enumerate() {
            let (s, l) = match op {
                EditOp::Sub(o, l) => (show(o), show(l)),
                EditOp::Del(o) => (show(o), DELETE.to_string()),
                EditOp::Ins(l) => (INSERT.to_string(), show(l)),
                EditOp::NoInsert => (INSERT.to_string(), NOTHING.to_string()),
            };
            writeln!(out, "{s}\t{l}\t{}", format_prob(self.probs[id]))?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R, source_name: &str) -> Result<EmissionParams> {
        let err = |line, msg: String| Error::parse(source_name, line, msg);
        let mut source = None;
        let mut latin = None;
        let mut insertions = true;
        let mut frozen = None;
        let mut entries = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let chars = |fs: &[&str]| -> Result<Vec<char>> {
                fs.iter()
                    .filter(|f| !f.is_empty())
                    .map(|f| {
                        parse_symbol(f).ok_or_else(|| err(lineno, format!("bad symbol {f:?}")))
                    })
                    .collect()
            };
            match fields.as_slice() {
                ["@source", rest @ ..] => source = Some(chars(rest)?),
                ["@latin", rest @ ..] => latin = Some(chars(rest)?),
                ["@insertions", v] => {
                    insertions = v
                        .parse()
                        .map_err(|_| err(lineno, format!("bad flag {v:?}")))?
                }
                ["@frozen_deletion", "none"] => frozen = None,
                ["@frozen_deletion", v] => {
                    frozen = Some(
                        v.parse()
                            .map_err(|_| err(lineno, format!("bad value {v:?}")))?,
                    )
                }
                [s, l, p] => {
                    let p: f64 = p
                        .parse()
                        .map_err(|_| err(lineno, format!("bad probability {p:?}")))?;
                    let sym = |x: &str| {
                        parse_symbol(x).ok_or_else(|| err(lineno, format!("bad symbol {x:?}")))
                    };
                    let op = match (*s, *l) {
                        (INSERT, NOTHING) => EditOp::NoInsert,
                        (INSERT, l) => EditOp::Ins(sym(l)?),
                        (s, DELETE) => EditOp::Del(sym(s)?),
                        (s, l) => EditOp::Sub(sym(s)?, sym(l)?),
                    };
                    entries.push((op, p, lineno));
                }
                _ => return Err(err(lineno, "unrecognized line".into())),
            }
        }
        let source = source.ok_or_else(|| err(0, "missing @source".into()))?;
        let latin = latin.ok_or_else(|| err(0, "missing @latin".into()))?;
        let table = OpTable::from_ops(&source, &latin, entries.iter().map(|e| e.0))
            .map_err(|e| err(0, e.to_string()))?;
        let mut probs = vec![0.0; table.len()];
        for (op, p, lineno) in entries {
            if !(p.is_finite() && p >= 0.0) {
                return Err(err(lineno, format!("probability {p} out of range")));
            }
            probs[table.id(op).expect("listed op") as usize] = p;
        }
        Ok(EmissionParams {
            table: std::sync::Arc::new(table),
            probs,
            insertions_enabled: insertions,
            frozen_deletion: frozen,
        })
    }
}
