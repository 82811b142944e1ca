//! Independent reference computations shared by the integration tests and
//! the acceptance runner. Nothing here calls the library's algorithms; each
//! oracle recomputes its quantity from first principles.

#![allow(dead_code)]

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use romdecipher::channel::{EditOp, EmissionParams};
use romdecipher::ngram::Token;

/// One path of a small acyclic machine: probability and the op ids it
/// carries (`None` for unlabeled arcs).
pub struct RandomDag {
    pub states: usize,
    /// `(from, to, op, probability)`
    pub arcs: Vec<(usize, usize, Option<u32>, f64)>,
    pub finals: Vec<Option<f64>>,
}

impl RandomDag {
    /// A random DAG over `states` states with start 0, arcs only forward.
    pub fn generate(rng: &mut ChaCha8Rng, states: usize, ops: u32) -> RandomDag {
        let mut arcs = Vec::new();
        for from in 0..states {
            for to in from + 1..states {
                if rng.gen_bool(0.45) {
                    let op = rng.gen_bool(0.8).then(|| rng.gen_range(0..ops));
                    arcs.push((from, to, op, rng.gen_range(0.01..1.0)));
                }
            }
        }
        let mut finals: Vec<Option<f64>> = (0..states)
            .map(|_| rng.gen_bool(0.3).then(|| rng.gen_range(0.05..1.0)))
            .collect();
        finals[states - 1] = Some(rng.gen_range(0.05..1.0));
        RandomDag {
            states,
            arcs,
            finals,
        }
    }

    /// Every accepting path as (probability, op ids).
    pub fn paths(&self) -> Vec<(f64, Vec<u32>)> {
        fn walk(
            dag: &RandomDag,
            q: usize,
            p: f64,
            ops: &mut Vec<u32>,
            out: &mut Vec<(f64, Vec<u32>)>,
        ) {
            if let Some(f) = dag.finals[q] {
                out.push((p * f, ops.clone()));
            }
            for &(from, to, op, w) in &dag.arcs {
                if from == q {
                    if let Some(o) = op {
                        ops.push(o);
                    }
                    walk(dag, to, p * w, ops, out);
                    if op.is_some() {
                        ops.pop();
                    }
                }
            }
        }
        let mut out = Vec::new();
        walk(self, 0, 1.0, &mut Vec::new(), &mut out);
        out
    }

    /// Number of accepting paths, by counting.
    pub fn num_paths(&self) -> u64 {
        let mut n = vec![0u64; self.states];
        for q in (0..self.states).rev() {
            n[q] = u64::from(self.finals[q].is_some());
            for &(from, to, ..) in &self.arcs {
                if from == q {
                    n[q] += n[to];
                }
            }
        }
        n[0]
    }
}

/// Total mass and expected op counts by summing over explicit paths.
pub fn brute_force_expectation(paths: &[(f64, Vec<u32>)], ops: u32) -> (f64, Vec<f64>) {
    let mut counts = vec![0.0; ops as usize];
    let mut mass = 0.0;
    for (p, path) in paths {
        mass += p;
        for &o in path {
            counts[o as usize] += p;
        }
    }
    (mass, counts.into_iter().map(|c| c / mass).collect())
}

/// Interpolated Witten–Bell probabilities straight from raw n-gram counts,
/// recomputed recursively at every query.
pub struct WittenBellOracle {
    order: usize,
    k: f64,
    vocab: usize,
    counts: HashMap<Vec<Token>, HashMap<Token, f64>>,
}

impl WittenBellOracle {
    pub fn new(corpus: &[String], order: usize, k: f64) -> WittenBellOracle {
        let mut counts: HashMap<Vec<Token>, HashMap<Token, f64>> = HashMap::new();
        let mut alphabet = std::collections::BTreeSet::new();
        for s in corpus {
            let mut toks = vec![Token::Bos];
            toks.extend(s.chars().map(Token::Char));
            toks.push(Token::Eos);
            alphabet.extend(s.chars());
            for i in 1..toks.len() {
                for start in i.saturating_sub(order - 1)..=i {
                    *counts
                        .entry(toks[start..i].to_vec())
                        .or_default()
                        .entry(toks[i])
                        .or_default() += 1.0;
                }
            }
        }
        WittenBellOracle {
            order,
            k,
            vocab: alphabet.len() + 1,
            counts,
        }
    }

    pub fn prob(&self, history: &[Token], w: Token) -> f64 {
        let lower = || {
            if history.is_empty() {
                1.0 / self.vocab as f64
            } else {
                self.prob(&history[1..], w)
            }
        };
        match self.counts.get(history) {
            None => lower(),
            Some(next) => {
                let c: f64 = next.values().sum();
                let d = next.len() as f64;
                let cw = next.get(&w).copied().unwrap_or(0.0);
                (cw + self.k * d * lower()) / (c + self.k * d)
            }
        }
    }

    /// `-ln p(sentence)` with sentinels.
    pub fn score(&self, sentence: &str) -> f64 {
        let mut toks = vec![Token::Bos];
        toks.extend(sentence.chars().map(Token::Char));
        toks.push(Token::Eos);
        (1..toks.len())
            .map(|i| {
                -self
                    .prob(&toks[i.saturating_sub(self.order - 1)..i], toks[i])
                    .ln()
            })
            .sum()
    }
}

/// Every edit sequence turning `o` into `l` whose running deletion minus
/// insertion count stays within `±delay`.
pub fn edit_sequences(o: &[char], l: &[char], delay: usize, insertions: bool) -> Vec<Vec<EditOp>> {
    fn go(
        o: &[char],
        l: &[char],
        d: i64,
        bound: i64,
        ins: bool,
        prefix: &mut Vec<EditOp>,
        out: &mut Vec<Vec<EditOp>>,
    ) {
        if o.is_empty() && l.is_empty() {
            out.push(prefix.clone());
        }
        if let (Some(&a), Some(&b)) = (o.first(), l.first()) {
            prefix.push(EditOp::Sub(a, b));
            go(&o[1..], &l[1..], d, bound, ins, prefix, out);
            prefix.pop();
        }
        if let Some(&a) = o.first() {
            if d < bound {
                prefix.push(EditOp::Del(a));
                go(&o[1..], l, d + 1, bound, ins, prefix, out);
                prefix.pop();
            }
        }
        if let Some(&b) = l.first() {
            if ins && d > -bound {
                prefix.push(EditOp::Ins(b));
                go(o, &l[1..], d - 1, bound, ins, prefix, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(o, l, 0, delay as i64, insertions, &mut Vec::new(), &mut out);
    out
}

/// `p(l, e | o)` of one edit sequence as a product of probabilities.
pub fn sequence_prob(params: &EmissionParams, ops: &[EditOp]) -> f64 {
    let stop = if params.insertions_enabled() {
        params.prob_of(EditOp::NoInsert)
    } else {
        1.0
    };
    let mut p = stop;
    for &op in ops {
        p *= params.prob_of(op);
        if matches!(op, EditOp::Sub(..) | EditOp::Del(_)) {
            p *= stop;
        }
    }
    p
}

/// `p(l | o)` by explicit enumeration of edit sequences.
pub fn channel_brute_force(params: &EmissionParams, o: &str, l: &str, delay: usize) -> f64 {
    let o: Vec<char> = o.chars().collect();
    let l: Vec<char> = l.chars().collect();
    edit_sequences(&o, &l, delay, params.insertions_enabled())
        .iter()
        .map(|e| sequence_prob(params, e))
        .sum()
}

/// `p(l | o)` by a forward table over (consumed, emitted, delay).
pub fn channel_dp(params: &EmissionParams, o: &str, l: &str, delay: usize) -> f64 {
    let o: Vec<char> = o.chars().collect();
    let l: Vec<char> = l.chars().collect();
    let ins = params.insertions_enabled();
    let stop = if ins {
        params.prob_of(EditOp::NoInsert)
    } else {
        1.0
    };
    let width = 2 * delay + 1;
    let idx = |i: usize, j: usize, q: usize| (i * (l.len() + 1) + j) * width + q;
    let mut f = vec![0.0; (o.len() + 1) * (l.len() + 1) * width];
    f[idx(0, 0, delay)] = 1.0;
    for i in 0..=o.len() {
        for j in 0..=l.len() {
            for q in 0..width {
                let mut v = f[idx(i, j, q)];
                if i > 0 && j > 0 {
                    v += f[idx(i - 1, j - 1, q)]
                        * params.prob_of(EditOp::Sub(o[i - 1], l[j - 1]))
                        * stop;
                }
                if i > 0 && q > 0 {
                    v += f[idx(i - 1, j, q - 1)] * params.prob_of(EditOp::Del(o[i - 1])) * stop;
                }
                if ins && j > 0 && q + 1 < width {
                    v += f[idx(i, j - 1, q + 1)] * params.prob_of(EditOp::Ins(l[j - 1]));
                }
                f[idx(i, j, q)] = v;
            }
        }
    }
    (0..width).map(|q| f[idx(o.len(), l.len(), q)]).sum::<f64>() * stop
}

/// All strings over `alphabet` with length in `lengths`.
pub fn strings(alphabet: &[char], lengths: std::ops::RangeInclusive<usize>) -> Vec<String> {
    let mut layer = vec![String::new()];
    let mut out = Vec::new();
    for n in 0..=*lengths.end() {
        if lengths.contains(&n) {
            out.extend(layer.iter().cloned());
        }
        layer = layer
            .iter()
            .flat_map(|s| alphabet.iter().map(move |&c| format!("{s}{c}")))
            .collect();
    }
    out
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
