//! Viterbi decoding of romanized text and its evaluation.
//!
//! [`decode`] runs a tropical shortest path over the composed lattice
//! `T ∘ S ∘ A(l)` and reads the source sentence and edit sequence off the
//! best path. [`Decoder`] finds the same path without composing (see
//! [`crate::cascade`]); it prunes the emission model and falls back to the
//! unpruned one when pruning leaves no path. The [`metrics`] submodule holds
//! character error rate, alignments and confusion counts.

pub mod metrics;

pub use metrics::{
    align, cer, corpus_cer, evaluate, levenshtein, ConfusionMatrix, EvalReport, EvalRow,
};

use rayon::prelude::*;

use crate::automata::{shortest_path, Wfst, EPSILON};
use crate::cascade::{viterbi, Channel, LmTable};
use crate::channel::{EditOp, EmissionParams, OpTable};
use crate::error::{Error, Result};
use crate::ngram::NgramModel;
use crate::semiring::{Semiring, TropicalWeight};
use crate::training::observation_lattice;

/// Emission arcs costlier than this are dropped before decoding.
pub const DEFAULT_DECODE_PRUNE: f64 = 4.5;

#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    /// The predicted original-script sentence.
    pub source: String,
    /// Edit operations along the best path, in order.
    pub ops: Vec<EditOp>,
    /// Tropical path weight: `-ln p(o) - ln p(l, e | o)`.
    pub score: f64,
}

impl Decoded {
    /// The romanized string the edit sequence emits.
    pub fn emitted(&self) -> String {
        emitted(&self.ops)
    }
}

/// Latin side of an edit sequence.
pub fn emitted(ops: &[EditOp]) -> String {
    ops.iter()
        .filter_map(|op| match *op {
            EditOp::Sub(_, l) | EditOp::Ins(l) => Some(l),
            _ => None,
        })
        .collect()
}

/// Source side of an edit sequence.
pub fn consumed(ops: &[EditOp]) -> String {
    ops.iter()
        .filter_map(|op| match *op {
            EditOp::Sub(o, _) | EditOp::Del(o) => Some(o),
            _ => None,
        })
        .collect()
}

/// Best source sentence for `latin` under an n-gram acceptor `lm` and an
/// emission transducer built over `table`.
pub fn decode(
    lm: &Wfst<TropicalWeight>,
    emission: &Wfst<TropicalWeight>,
    table: &OpTable,
    latin: &str,
) -> Result<Decoded> {
    let lattice = observation_lattice(lm, emission, latin)?;
    let path = shortest_path(&lattice)?;
    let mut ops = Vec::with_capacity(path.arcs.len());
    for arc in path.arc_refs(&lattice) {
        if arc.ilabel == EPSILON && arc.olabel == EPSILON {
            continue;
        }
        let id = table
            .op_for_labels(arc.ilabel, arc.olabel)
            .ok_or_else(|| Error::Config("lattice arc outside the operation table".into()))?;
        ops.push(table.op(id));
    }
    Ok(Decoded {
        source: consumed(&ops),
        ops,
        score: path.weight.neg_log(),
    })
}

/// A trained model ready for decoding.
pub struct Decoder {
    params: EmissionParams,
    lm: LmTable,
    pruned: Option<Channel>,
    full: Channel,
}

impl Decoder {
    /// `prune` of `None` decodes with the full emission model only.
    pub fn new(
        lm: &NgramModel,
        params: &EmissionParams,
        delay: usize,
        prune: Option<f64>,
    ) -> Result<Decoder> {
        let pruned = prune
            .map(|t| params.surviving_ops(t))
            .filter(|keep| keep.iter().any(|k| !k))
            .map(|keep| Channel::new(params, delay, Some(&keep)));
        Ok(Decoder {
            params: params.clone(),
            lm: LmTable::new(lm, params.table().source()),
            pruned,
            full: Channel::new(params, delay, None),
        })
    }

    pub fn params(&self) -> &EmissionParams {
        &self.params
    }

    pub fn decode(&self, latin: &str) -> Result<Decoded> {
        let best = match &self.pruned {
            Some(ch) => match viterbi(&self.lm, ch, latin) {
                Err(Error::NoPath) => viterbi(&self.lm, &self.full, latin),
                r => r,
            },
            None => viterbi(&self.lm, &self.full, latin),
        };
        let (ids, score) = best?;
        let table = self.params.table();
        let ops: Vec<EditOp> = ids.into_iter().map(|id| table.op(id)).collect();
        Ok(Decoded {
            source: consumed(&ops),
            ops,
            score,
        })
    }

    /// Decodes every sentence in parallel; results keep input order.
    pub fn decode_all<S: AsRef<str> + Sync>(&self, latin: &[S]) -> Vec<Result<Decoded>> {
        latin.par_iter().map(|l| self.decode(l.as_ref())).collect()
    }

    /// Re-scores a decoded path through the language model and the channel.
    pub fn rescore(&self, lm: &NgramModel, decoded: &Decoded) -> f64 {
        lm.score(&decoded.source) + self.params.path_cost(&decoded.ops)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::OpTable;
    use crate::ngram::train_lm;
    use std::sync::Arc;

    fn cipher(source: &str, latin: &str, pairs: &[(char, char)], hit: f64) -> EmissionParams {
        let s: Vec<char> = source.chars().collect();
        let l: Vec<char> = latin.chars().collect();
        let table = Arc::new(OpTable::new(&s, &l, None));
        let probs = table
            .ops()
            .iter()
            .map(|op| match *op {
                EditOp::Sub(o, t) if pairs.contains(&(o, t)) => hit,
                EditOp::Sub(..) | EditOp::Del(_) => (1.0 - hit) / l.len() as f64,
                EditOp::Ins(_) => 0.01 / l.len() as f64,
                EditOp::NoInsert => 0.99,
            })
            .collect();
        EmissionParams::from_probs(table, probs).unwrap()
    }

    #[test]
    fn identity_channel_returns_the_input() {
        let lm = train_lm(&["abba", "ba", "aab"], 2, &[], 10.0).unwrap();
        let params = cipher("ab", "ab", &[('a', 'a'), ('b', 'b')], 0.9);
        let d = Decoder::new(&lm, &params, 2, None).unwrap();
        for l in ["ab", "bbaa", "a"] {
            assert_eq!(d.decode(l).unwrap().source, l);
        }
    }

    #[test]
    fn toy_cipher_is_inverted() {
        let lm = train_lm(&["ab", "ba", "aa", "bb"], 2, &[], 10.0).unwrap();
        let params = cipher("ab", "xy", &[('a', 'x'), ('b', 'y')], 0.97);
        let d = Decoder::new(&lm, &params, 2, None).unwrap();
        let out = d.decode("xy").unwrap();
        assert_eq!(out.source, "ab");
        assert_eq!(out.ops, vec![EditOp::Sub('a', 'x'), EditOp::Sub('b', 'y')]);
    }

    #[test]
    fn path_reproduces_input_and_rescores() {
        let lm = train_lm(&["abab", "abba", "ba"], 3, &[], 10.0).unwrap();
        let params = cipher("ab", "ab", &[('a', 'a'), ('b', 'b')], 0.6);
        let d = Decoder::new(&lm, &params, 2, Some(DEFAULT_DECODE_PRUNE)).unwrap();
        for l in ["aab", "bbbb", "ba", "abab"] {
            let out = d.decode(l).unwrap();
            assert_eq!(out.emitted(), l);
            assert!((d.rescore(&lm, &out) - out.score).abs() < 1e-8);
        }
    }

    #[test]
    fn unknown_latin_character_is_reported() {
        let lm = train_lm(&["ab"], 2, &[], 10.0).unwrap();
        let params = cipher("ab", "ab", &[('a', 'a'), ('b', 'b')], 0.9);
        let d = Decoder::new(&lm, &params, 1, None).unwrap();
        assert!(matches!(
            d.decode("az"),
            Err(Error::UnknownSymbol {
                position: 1,
                symbol: 'z'
            })
        ));
    }

    #[test]
    fn pruned_decoder_falls_back_when_no_path_survives() {
        let lm = train_lm(&["ab"], 2, &[], 10.0).unwrap();
        // Only a → x survives a tight prune, so "yy" is undecodable without
        // the fallback.
        let params = cipher("ab", "xy", &[('a', 'x')], 0.999);
        let d = Decoder::new(&lm, &params, 0, Some(1.0)).unwrap();
        let out = d.decode("yy").unwrap();
        assert_eq!(out.emitted(), "yy");
    }

    #[test]
    fn decode_all_keeps_order() {
        let lm = train_lm(&["ab", "ba"], 2, &[], 10.0).unwrap();
        let params = cipher("ab", "xy", &[('a', 'x'), ('b', 'y')], 0.97);
        let d = Decoder::new(&lm, &params, 1, None).unwrap();
        let out: Vec<String> = d
            .decode_all(&["xy", "yx", "x"])
            .into_iter()
            .map(|r| r.unwrap().source)
            .collect();
        assert_eq!(out, ["ab", "ba", "a"]);
    }

    #[test]
    fn decoder_matches_the_composed_lattice() {
        use crate::channel::{build_pruned_emission_fst, init_params};
        use crate::ngram::to_wfsa;
        let lm = train_lm(&["ab ba", "aab", "b a b"], 3, &[], 10.0).unwrap();
        let table = Arc::new(OpTable::new(&['a', 'b', ' '], &['x', 'y', ' '], None));
        let params = init_params(table.clone(), 3, 0.8);
        let acceptor = to_wfsa(&lm, table.source_symbols())
            .unwrap()
            .map_weights(|w| TropicalWeight::from_neg_log(w.neg_log()));
        for (prune, delay) in [(None, 1), (Some(4.5), 2), (Some(2.0), 0)] {
            let d = Decoder::new(&lm, &params, delay, prune).unwrap();
            let fst = build_pruned_emission_fst::<TropicalWeight>(
                &params,
                delay,
                prune.unwrap_or(f64::INFINITY),
            );
            for l in ["xy", "y x", "xxy", "yx y"] {
                let (got, want) = (d.decode(l), decode(&acceptor, &fst, &table, l));
                match (got, want) {
                    (Ok(g), Ok(w)) => assert!((g.score - w.score).abs() < 1e-9, "{l}"),
                    (Ok(g), Err(Error::NoPath)) => assert_eq!(g.emitted(), l),
                    (g, w) => panic!("{l}: {g:?} vs {w:?}"),
                }
            }
        }
    }
}
