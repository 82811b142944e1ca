mod common;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use romdecipher::automata::{self, shortest_distance, SymbolTable, Wfst};
use romdecipher::semiring::{arc_weight_with_basis, ExpectationWeight, LogWeight, Semiring};

use common::{rel_err, RandomDag};

const OPS: u32 = 6;

fn to_machine<W: Semiring>(dag: &RandomDag, arc: impl Fn(Option<u32>, f64) -> W) -> Wfst<W> {
    let syms = Arc::new(SymbolTable::from_chars("abcdef".chars()));
    let mut m = Wfst::new(syms.clone(), syms);
    for _ in 0..dag.states {
        m.add_state();
    }
    m.set_start(0);
    for &(from, to, op, p) in &dag.arcs {
        let label = op.map_or(0, |o| o + 1);
        m.add_arc(from, automata::Arc::new(label, label, arc(op, p), to));
    }
    for (q, f) in dag.finals.iter().enumerate() {
        if let Some(f) = f {
            m.set_final(q, W::from_neg_log(-f.ln()));
        }
    }
    m
}

/// Random DAGs with between 1 and 200 accepting paths.
fn dags(n: usize, seed: u64) -> Vec<RandomDag> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < n {
        let states = 2 + out.len() % 7;
        let dag = RandomDag::generate(&mut rng, states, OPS);
        if (1..=200).contains(&dag.num_paths()) {
            out.push(dag);
        }
    }
    out
}

#[test]
fn expectation_distance_matches_path_enumeration() {
    for dag in dags(100, 11) {
        let m = to_machine(&dag, |op, p| match op {
            Some(o) => arc_weight_with_basis(o, -p.ln()),
            None => ExpectationWeight::from_neg_log(-p.ln()),
        });
        let total = shortest_distance(&m).unwrap().total;
        let paths = dag.paths();
        assert_eq!(paths.len() as u64, dag.num_paths());
        let (mass, counts) = common::brute_force_expectation(&paths, OPS);
        assert!(rel_err(total.mass().prob(), mass) < 1e-8);
        for (o, &c) in counts.iter().enumerate() {
            assert!(
                rel_err(total.expected_counts().get(o as u32), c) < 1e-8,
                "op {o}"
            );
        }
    }
}

#[test]
fn log_distance_is_the_expectation_mass() {
    for dag in dags(30, 12) {
        let log = shortest_distance(&to_machine(&dag, |_, p| LogWeight::from_prob(p))).unwrap();
        let exp = shortest_distance(&to_machine(&dag, |op, p| match op {
            Some(o) => arc_weight_with_basis(o, -p.ln()),
            None => ExpectationWeight::from_neg_log(-p.ln()),
        }))
        .unwrap();
        assert!((log.total.0 - exp.total.neg_log()).abs() < 1e-12);
    }
}
