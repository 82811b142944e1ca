mod common;

use std::sync::Arc;

use romdecipher::channel::{init_params, OpTable};
use romdecipher::decode_eval::{evaluate, Decoder};
use romdecipher::ngram::train_lm;

use common::{edit_sequences, sequence_prob, strings};

/// The decoder's best path against scoring every (source, edit sequence)
/// candidate by hand.
#[test]
fn viterbi_matches_exhaustive_search() {
    let source = ['a', 'b'];
    let latin = ['x', 'y'];
    let lm = train_lm(&["ab", "ba", "abb", "a"], 3, &source, 10.0).unwrap();
    let table = Arc::new(OpTable::new(&source, &latin, None));
    let mut checked = 0;
    for seed in 0..6 {
        let params = init_params(table.clone(), seed, 0.9);
        for delay in 1..=2 {
            let decoder = Decoder::new(&lm, &params, delay, None).unwrap();
            for l in strings(&latin, 1..=3) {
                let lc: Vec<char> = l.chars().collect();
                let mut candidates = 0;
                let mut best = f64::INFINITY;
                for o in strings(&source, lc.len().saturating_sub(delay)..=lc.len() + delay) {
                    let oc: Vec<char> = o.chars().collect();
                    for e in edit_sequences(&oc, &lc, delay, params.insertions_enabled()) {
                        candidates += 1;
                        best = best.min(lm.score(&o) - sequence_prob(&params, &e).ln());
                    }
                }
                if candidates > 500 {
                    continue;
                }
                let out = decoder.decode(&l).unwrap();
                assert!(
                    (out.score - best).abs() < 1e-9,
                    "{l:?}: {} vs {best}",
                    out.score
                );
                assert_eq!(out.emitted(), l);
                assert!((decoder.rescore(&lm, &out) - best).abs() < 1e-9);
                checked += 1;
            }
        }
    }
    assert!(checked >= 40, "only {checked} instances were small enough");
}

#[test]
fn failed_decodes_count_as_fully_wrong() {
    let report = evaluate(&[Some("abc"), None], &["abd", "xyz"]);
    assert_eq!(report.failures(), 1);
    assert!((report.corpus_cer() - 4.0 / 6.0).abs() < 1e-12);
}
