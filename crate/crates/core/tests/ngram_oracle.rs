mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use romdecipher::corpus::PseudoLanguage;
use romdecipher::ngram::{
    count_ngrams, default_prune_threshold, entropy_prune, score_wfsa, source_symbols, to_wfsa,
    witten_bell, NgramModel, DEFAULT_K,
};

use common::WittenBellOracle;

fn corpus() -> Vec<String> {
    let letters: Vec<char> = "абвгдежз".chars().collect();
    PseudoLanguage::new(&letters, 200, 3)
        .unwrap()
        .corpus(6000, 4)
}

fn random_strings(alphabet: &[char], n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(0..12);
            (0..len)
                .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
                .collect()
        })
        .collect()
}

fn check_wfsa(model: &NgramModel, strings: &[String]) {
    let wfsa = to_wfsa(model, &source_symbols(model.alphabet())).unwrap();
    for s in strings {
        let direct = model.score(s);
        let composed = score_wfsa(&wfsa, s).unwrap();
        assert!(
            (direct - composed).abs() <= 1e-8,
            "{s:?}: {direct} vs {composed}"
        );
    }
}

fn check_normalized(model: &NgramModel) {
    for h in model.histories() {
        let total: f64 = model.vocabulary().iter().map(|&w| model.prob(h, w)).sum();
        assert!((total - 1.0).abs() <= 1e-6, "{h:?} sums to {total}");
    }
}

#[test]
fn unpruned_models_match_direct_witten_bell() {
    let corpus = corpus();
    for order in 2..=6 {
        let model = witten_bell(&count_ngrams(&corpus, order).unwrap(), DEFAULT_K);
        let oracle = WittenBellOracle::new(&corpus, order, DEFAULT_K);
        let strings = random_strings(model.alphabet(), 1000, order as u64);
        for s in &strings {
            assert!((model.score(s) - oracle.score(s)).abs() <= 1e-8, "{s:?}");
        }
        check_wfsa(&model, &strings);
        check_normalized(&model);
    }
}

#[test]
fn pruned_models_score_the_same_through_the_wfsa() {
    let corpus = corpus();
    for order in 3..=6 {
        let full = witten_bell(&count_ngrams(&corpus, order).unwrap(), DEFAULT_K);
        let pruned = entropy_prune(&full, default_prune_threshold(order) * 50.0);
        assert!(pruned.num_entries() < full.num_entries());
        check_wfsa(
            &pruned,
            &random_strings(pruned.alphabet(), 1000, 100 + order as u64),
        );
        check_normalized(&pruned);
    }
}

#[test]
fn pruning_is_monotone_in_the_threshold() {
    let full = witten_bell(&count_ngrams(&corpus(), 5).unwrap(), DEFAULT_K);
    let sizes: Vec<usize> = [0.0, 1e-6, 1e-5, 1e-4, 1e-3]
        .iter()
        .map(|&t| entropy_prune(&full, t).num_entries())
        .collect();
    assert!(sizes.windows(2).all(|w| w[0] >= w[1]), "{sizes:?}");
}
