//! Forward–backward and Viterbi over `T ∘ S ∘ A(l)` without building it.
//!
//! A lattice state is a position in `l`, a delay, and a source-model state.
//! The emission side is read straight from the parameters and the source
//! side from a [`SourceModel`], whose transitions already include any
//! backoff. Paths and weights are exactly those of the composed lattice;
//! only the bookkeeping differs.

use std::collections::HashMap;

use crate::channel::{EditOp, EmissionParams};
use crate::error::{Error, Result};
use crate::ngram::{NgramModel, Token};
use crate::semiring::neg_log_sum_exp;
use crate::training::SentenceStats;

/// A deterministic weighted automaton over source-alphabet indices.
pub trait SourceModel: Sync {
    fn num_states(&self) -> usize;
    fn start(&self) -> u32;
    /// Successor and `-ln` cost of reading source symbol `c`.
    fn next(&self, state: u32, c: usize) -> Option<(u32, f64)>;
    /// `-ln` stopping cost; infinite where the model cannot stop.
    fn final_cost(&self, state: u32) -> f64;
}

/// An n-gram model as a dense transition table over a source alphabet.
pub struct LmTable {
    width: usize,
    next: Vec<u32>,
    cost: Vec<f64>,
    finals: Vec<f64>,
    start: u32,
}

const NONE: u32 = u32::MAX;

impl LmTable {
    /// States are the model's retained histories; symbols are `source` in
    /// order. Symbols outside the model's alphabet get no transition.
    pub fn new(model: &NgramModel, source: &[char]) -> LmTable {
        let histories = model.histories();
        let index: HashMap<&[Token], u32> = histories
            .iter()
            .enumerate()
            .map(|(i, h)| (h.as_slice(), i as u32))
            .collect();
        let width = source.len();
        let mut next = vec![NONE; histories.len() * width];
        let mut cost = vec![f64::INFINITY; histories.len() * width];
        let mut finals = Vec::with_capacity(histories.len());
        for (q, h) in histories.iter().enumerate() {
            for (c, &ch) in source.iter().enumerate() {
                let w = model.neg_log_prob(h, Token::Char(ch));
                if w < f64::INFINITY {
                    next[q * width + c] = index[model.next_history(h, Token::Char(ch)).as_slice()];
                    cost[q * width + c] = w;
                }
            }
            finals.push(model.neg_log_prob(h, Token::Eos));
        }
        LmTable {
            width,
            next,
            cost,
            finals,
            start: index[&[Token::Bos][..]],
        }
    }
}

impl SourceModel for LmTable {
    fn num_states(&self) -> usize {
        self.finals.len()
    }

    fn start(&self) -> u32 {
        self.start
    }

    fn next(&self, state: u32, c: usize) -> Option<(u32, f64)> {
        let i = state as usize * self.width + c;
        let n = self.next[i];
        (n != NONE).then(|| (n, self.cost[i]))
    }

    fn final_cost(&self, state: u32) -> f64 {
        self.finals[state as usize]
    }
}

/// A single source sentence scored by an n-gram model: state `j` has read
/// its first `j` characters.
pub struct SourceChain {
    symbols: Vec<usize>,
    costs: Vec<f64>,
    stop: f64,
}

impl SourceChain {
    pub fn new(model: &NgramModel, source: &[char], sentence: &str) -> Result<SourceChain> {
        let mut symbols = Vec::new();
        let mut costs = Vec::new();
        let mut h = vec![Token::Bos];
        for (position, ch) in sentence.chars().enumerate() {
            let c = source
                .iter()
                .position(|&s| s == ch)
                .ok_or(Error::UnknownSymbol {
                    position,
                    symbol: ch,
                })?;
            symbols.push(c);
            costs.push(model.neg_log_prob(&h, Token::Char(ch)));
            h = model.next_history(&h, Token::Char(ch));
        }
        Ok(SourceChain {
            symbols,
            costs,
            stop: model.neg_log_prob(&h, Token::Eos),
        })
    }
}

impl SourceModel for SourceChain {
    fn num_states(&self) -> usize {
        self.symbols.len() + 1
    }

    fn start(&self) -> u32 {
        0
    }

    fn next(&self, state: u32, c: usize) -> Option<(u32, f64)> {
        let j = state as usize;
        (j < self.symbols.len() && self.symbols[j] == c && self.costs[j] < f64::INFINITY)
            .then(|| (state + 1, self.costs[j]))
    }

    fn final_cost(&self, state: u32) -> f64 {
        if state as usize == self.symbols.len() {
            self.stop
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Clone, Copy)]
struct Move {
    source: usize,
    op: u32,
    cost: f64,
}

/// Emission operations indexed for the sweep. Costs are arc weights of the
/// emission transducer, no-insertion charges included.
pub struct Channel {
    delay: usize,
    stop: f64,
    no_insert: Option<u32>,
    subs: Vec<Vec<Move>>,
    dels: Vec<Move>,
    ins: Vec<Option<(u32, f64)>>,
    latin_index: HashMap<char, usize>,
}

impl Channel {
    /// `keep`, if given, masks operations by id (see
    /// [`EmissionParams::surviving_ops`]).
    pub fn new(params: &EmissionParams, delay: usize, keep: Option<&[bool]>) -> Channel {
        let table = params.table();
        let src: HashMap<char, usize> = table
            .source()
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i))
            .collect();
        let latin_index: HashMap<char, usize> = table
            .latin()
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i))
            .collect();
        let stop = params.no_insert_cost();
        let mut subs = vec![Vec::new(); table.latin().len()];
        let mut dels = Vec::new();
        let mut ins = vec![None; table.latin().len()];
        for (id, &op) in table.ops().iter().enumerate() {
            let w = -params.prob(id as u32).ln();
            if w == f64::INFINITY || keep.is_some_and(|k| !k[id]) {
                continue;
            }
            let op_id = id as u32;
            match op {
                EditOp::Sub(o, l) => subs[latin_index[&l]].push(Move {
                    source: src[&o],
                    op: op_id,
                    cost: w + stop,
                }),
                EditOp::Del(o) => dels.push(Move {
                    source: src[&o],
                    op: op_id,
                    cost: w + stop,
                }),
                EditOp::Ins(l) if params.insertions_enabled() => {
                    ins[latin_index[&l]] = Some((op_id, w))
                }
                EditOp::Ins(_) | EditOp::NoInsert => {}
            }
        }
        Channel {
            delay,
            stop,
            no_insert: params
                .insertions_enabled()
                .then(|| table.no_insert())
                .flatten(),
            subs,
            dels,
            ins,
            latin_index,
        }
    }

    fn encode(&self, latin: &str) -> Result<Vec<usize>> {
        latin
            .chars()
            .enumerate()
            .map(|(position, c)| {
                self.latin_index
                    .get(&c)
                    .copied()
                    .ok_or(Error::UnknownSymbol {
                        position,
                        symbol: c,
                    })
            })
            .collect()
    }

    fn width(&self) -> usize {
        2 * self.delay + 1
    }
}

/// Column index of position `i` and delay state `q`; increasing indices
/// are a topological order.
fn column(i: usize, q: usize, width: usize) -> usize {
    i * width + q
}

/// A neighbouring column, the source-consuming moves into or out of it, and
/// the insertion move if any.
type Step<'c> = (usize, &'c [Move], Option<(u32, f64)>);

/// Viterbi cell: state, cost, predecessor column, predecessor index, op.
type Cell = (u32, f64, u32, u32, u32);

/// Edge families entering column `(i, q)`: the source column, its
/// source-consuming moves, and the insertion move if any.
fn incoming<'c>(ch: &'c Channel, l: &[usize], i: usize, q: usize) -> Vec<Step<'c>> {
    let w = ch.width();
    let mut steps = Vec::with_capacity(3);
    if q > 0 {
        steps.push((column(i, q - 1, w), ch.dels.as_slice(), None));
    }
    if i > 0 {
        steps.push((column(i - 1, q, w), ch.subs[l[i - 1]].as_slice(), None));
        if q + 1 < w {
            if let Some(m) = ch.ins[l[i - 1]] {
                steps.push((column(i - 1, q + 1, w), &[][..], Some(m)));
            }
        }
    }
    steps
}

/// Edge families leaving column `(i, q)`, in the same form.
fn outgoing<'c>(ch: &'c Channel, l: &[usize], i: usize, q: usize) -> Vec<Step<'c>> {
    let w = ch.width();
    let mut steps = Vec::with_capacity(3);
    if q + 1 < w {
        steps.push((column(i, q + 1, w), ch.dels.as_slice(), None));
    }
    if i < l.len() {
        steps.push((column(i + 1, q, w), ch.subs[l[i]].as_slice(), None));
        if q > 0 {
            if let Some(m) = ch.ins[l[i]] {
                steps.push((column(i + 1, q - 1, w), &[][..], Some(m)));
            }
        }
    }
    steps
}

/// Dense scratch row over source-model states with a list of touched slots.
struct Scratch {
    value: Vec<f64>,
    extra: Vec<(u32, u32, u32)>,
    touched: Vec<u32>,
}

impl Scratch {
    fn new(n: usize) -> Scratch {
        Scratch {
            value: vec![f64::INFINITY; n],
            extra: vec![(0, 0, 0); n],
            touched: Vec::new(),
        }
    }

    fn clear(&mut self) {
        for &t in &self.touched {
            self.value[t as usize] = f64::INFINITY;
        }
        self.touched.clear();
    }
}

type Cells = Vec<Vec<(u32, f64)>>;

fn accumulate(acc: &mut Scratch, t: u32, v: f64) {
    let slot = &mut acc.value[t as usize];
    if *slot == f64::INFINITY {
        acc.touched.push(t);
        *slot = v;
    } else {
        *slot = neg_log_sum_exp(*slot, v);
    }
}

fn forward<M: SourceModel>(m: &M, ch: &Channel, l: &[usize]) -> Cells {
    let w = ch.width();
    let start = column(0, ch.delay, w);
    let mut alpha: Cells = vec![Vec::new(); (l.len() + 1) * w];
    alpha[start].push((m.start(), 0.0));
    let mut acc = Scratch::new(m.num_states());
    for i in 0..=l.len() {
        for q in 0..w {
            let here = column(i, q, w);
            if here == start {
                continue;
            }
            for (from, moves, insertion) in incoming(ch, l, i, q) {
                for &(t, a) in &alpha[from] {
                    for mv in moves {
                        if let Some((t2, b)) = m.next(t, mv.source) {
                            accumulate(&mut acc, t2, a + mv.cost + b);
                        }
                    }
                    if let Some((_, cost)) = insertion {
                        accumulate(&mut acc, t, a + cost);
                    }
                }
            }
            alpha[here] = acc
                .touched
                .iter()
                .map(|&t| (t, acc.value[t as usize]))
                .collect();
            acc.clear();
        }
    }
    alpha
}

/// Expected operation counts and log-likelihood of `latin`, as the
/// forward–backward E-step over the composed lattice would give them.
pub fn forward_backward<M: SourceModel>(
    m: &M,
    ch: &Channel,
    num_ops: usize,
    latin: &str,
) -> Result<SentenceStats> {
    let l = ch.encode(latin)?;
    let w = ch.width();
    let alpha = forward(m, ch, &l);
    let last = l.len();
    let mut z = f64::INFINITY;
    for q in 0..w {
        for &(t, a) in &alpha[column(last, q, w)] {
            z = neg_log_sum_exp(z, a + ch.stop + m.final_cost(t));
        }
    }
    if z == f64::INFINITY {
        return Err(Error::NoPath);
    }

    let mut counts = vec![0.0; num_ops];
    // Aligned with `alpha`: one backward cost per forward cell.
    let mut beta: Vec<Vec<f64>> = vec![Vec::new(); alpha.len()];
    let mut dense = Scratch::new(m.num_states());
    let credit = |counts: &mut Vec<f64>, op: u32, consuming: bool, post: f64| {
        counts[op as usize] += post;
        if consuming {
            if let Some(s) = ch.no_insert {
                counts[s as usize] += post;
            }
        }
    };
    for i in (0..=last).rev() {
        for q in (0..w).rev() {
            let here = column(i, q, w);
            let cells = &alpha[here];
            if cells.is_empty() {
                continue;
            }
            let mut b: Vec<f64> = cells
                .iter()
                .map(|&(t, _)| {
                    if i == last {
                        ch.stop + m.final_cost(t)
                    } else {
                        f64::INFINITY
                    }
                })
                .collect();
            for (to, moves, insertion) in outgoing(ch, &l, i, q) {
                if beta[to].is_empty() {
                    continue;
                }
                for (&(t, _), &bt) in alpha[to].iter().zip(&beta[to]) {
                    dense.value[t as usize] = bt;
                    dense.touched.push(t);
                }
                for (k, &(t, a)) in cells.iter().enumerate() {
                    for mv in moves {
                        if let Some((t2, c)) = m.next(t, mv.source) {
                            let rest = mv.cost + c + dense.value[t2 as usize];
                            if rest < f64::INFINITY {
                                b[k] = neg_log_sum_exp(b[k], rest);
                                credit(&mut counts, mv.op, true, (z - a - rest).exp());
                            }
                        }
                    }
                    if let Some((op, cost)) = insertion {
                        let rest = cost + dense.value[t as usize];
                        if rest < f64::INFINITY {
                            b[k] = neg_log_sum_exp(b[k], rest);
                            credit(&mut counts, op, false, (z - a - rest).exp());
                        }
                    }
                }
                dense.clear();
            }
            beta[here] = b;
        }
    }
    if let Some(s) = ch.no_insert {
        counts[s as usize] += 1.0;
    }
    Ok(SentenceStats { loglik: -z, counts })
}

fn relax(acc: &mut Scratch, t: u32, v: f64, back: (u32, u32, u32)) {
    let slot = &mut acc.value[t as usize];
    if *slot == f64::INFINITY {
        acc.touched.push(t);
    }
    if v < *slot {
        *slot = v;
        acc.extra[t as usize] = back;
    }
}

/// Best path as its operation ids in order, and its cost. Among equal-cost
/// predecessors the first one relaxed wins.
pub fn viterbi<M: SourceModel>(m: &M, ch: &Channel, latin: &str) -> Result<(Vec<u32>, f64)> {
    let l = ch.encode(latin)?;
    let w = ch.width();
    let start = column(0, ch.delay, w);
    let mut cells: Vec<Vec<Cell>> = vec![Vec::new(); (l.len() + 1) * w];
    cells[start].push((m.start(), 0.0, NONE, NONE, NONE));
    let mut acc = Scratch::new(m.num_states());
    for i in 0..=l.len() {
        for q in 0..w {
            let here = column(i, q, w);
            if here == start {
                continue;
            }
            for (from, moves, insertion) in incoming(ch, &l, i, q) {
                for (k, &(t, a, ..)) in cells[from].iter().enumerate() {
                    for mv in moves {
                        if let Some((t2, b)) = m.next(t, mv.source) {
                            relax(
                                &mut acc,
                                t2,
                                a + mv.cost + b,
                                (from as u32, k as u32, mv.op),
                            );
                        }
                    }
                    if let Some((op, cost)) = insertion {
                        relax(&mut acc, t, a + cost, (from as u32, k as u32, op));
                    }
                }
            }
            cells[here] = acc
                .touched
                .iter()
                .map(|&t| {
                    let (pc, pk, op) = acc.extra[t as usize];
                    (t, acc.value[t as usize], pc, pk, op)
                })
                .collect();
            acc.clear();
        }
    }
    let last = l.len();
    let mut best: Option<(f64, usize, usize)> = None;
    for q in 0..w {
        let c = column(last, q, w);
        for (k, &(t, v, ..)) in cells[c].iter().enumerate() {
            let total = v + ch.stop + m.final_cost(t);
            if total < f64::INFINITY && best.is_none_or(|b| total < b.0) {
                best = Some((total, c, k));
            }
        }
    }
    let (score, mut c, mut k) = best.ok_or(Error::NoPath)?;
    let mut ops = Vec::new();
    while c != start {
        let (_, _, pc, pk, op) = cells[c][k];
        ops.push(op);
        c = pc as usize;
        k = pk as usize;
    }
    ops.reverse();
    Ok((ops, score))
}
