use std::collections::VecDeque;

use super::{Arc, StateId, Wfst, EPSILON};
use crate::error::{Error, Result};
use crate::semiring::{Semiring, TropicalWeight};

/// Removes states that are not on some start-to-final path. State order is
/// preserved among the survivors.
pub fn connect<W: Semiring>(m: &Wfst<W>) -> Wfst<W> {
    let n = m.num_states();
    let empty = || Wfst::new(m.isyms().clone(), m.osyms().clone());
    let Some(start) = m.start() else {
        return empty();
    };

    let mut accessible = vec![false; n];
    let mut stack = vec![start];
    accessible[start] = true;
    let mut reverse: Vec<Vec<StateId>> = vec![Vec::new(); n];
    while let Some(q) = stack.pop() {
        for arc in m.arcs(q) {
            reverse[arc.nextstate].push(q);
            if !accessible[arc.nextstate] {
                accessible[arc.nextstate] = true;
                stack.push(arc.nextstate);
            }
        }
    }

    let mut coaccessible = vec![false; n];
    let mut stack: Vec<StateId> = (0..n).filter(|&q| accessible[q] && m.is_final(q)).collect();
    for &q in &stack {
        coaccessible[q] = true;
    }
    while let Some(q) = stack.pop() {
        for &p in &reverse[q] {
            if !coaccessible[p] {
                coaccessible[p] = true;
                stack.push(p);
            }
        }
    }

    if !coaccessible[start] {
        return empty();
    }
    let mut remap = vec![usize::MAX; n];
    let mut next_id = 0;
    for q in 0..n {
        if accessible[q] && coaccessible[q] {
            remap[q] = next_id;
            next_id += 1;
        }
    }
    if next_id == n {
        return m.clone();
    }
    let mut arcs = Vec::with_capacity(next_id);
    let mut finals = Vec::with_capacity(next_id);
    for q in (0..n).filter(|&q| remap[q] != usize::MAX) {
        arcs.push(
            m.arcs(q)
                .iter()
                .filter(|a| remap[a.nextstate] != usize::MAX)
                .map(|a| Arc::new(a.ilabel, a.olabel, a.weight.clone(), remap[a.nextstate]))
                .collect(),
        );
        finals.push(m.final_weight(q).clone());
    }
    Wfst::from_parts(
        arcs,
        finals,
        Some(remap[start]),
        m.isyms().clone(),
        m.osyms().clone(),
        m.failure_label(),
    )
}

/// Topological order of the states reachable from the start state.
///
/// Fails with [`Error::Cyclic`] if a reachable cycle exists.
pub fn topological_order<W: Semiring>(m: &Wfst<W>) -> Result<Vec<StateId>> {
    let Some(start) = m.start() else {
        return Ok(Vec::new());
    };
    let n = m.num_states();
    let mut reachable = vec![false; n];
    reachable[start] = true;
    let mut stack = vec![start];
    while let Some(q) = stack.pop() {
        for arc in m.arcs(q) {
            if !reachable[arc.nextstate] {
                reachable[arc.nextstate] = true;
                stack.push(arc.nextstate);
            }
        }
    }
    let mut indegree = vec![0usize; n];
    for q in (0..n).filter(|&q| reachable[q]) {
        for arc in m.arcs(q) {
            indegree[arc.nextstate] += 1;
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::from([start]);
    if indegree[start] != 0 {
        return Err(Error::Cyclic);
    }
    while let Some(q) = queue.pop_front() {
        order.push(q);
        for arc in m.arcs(q) {
            indegree[arc.nextstate] -= 1;
            if indegree[arc.nextstate] == 0 {
                queue.push_back(arc.nextstate);
            }
        }
    }
    if order.len() != reachable.iter().filter(|&&r| r).count() {
        return Err(Error::Cyclic);
    }
    Ok(order)
}

#[derive(Clone, Debug)]
pub struct ShortestDistance<W> {
    /// Sum of all path weights from the start to each state.
    pub forward: Vec<W>,
    /// Sum over final states of `forward ⊗ final weight`.
    pub total: W,
}

/// Single-source shortest distance over an acyclic machine, computed in
/// topological order.
pub fn shortest_distance<W: Semiring>(m: &Wfst<W>) -> Result<ShortestDistance<W>> {
    let order = topological_order(m)?;
    let mut forward = vec![W::zero(); m.num_states()];
    let mut total = W::zero();
    let Some(start) = m.start() else {
        return Ok(ShortestDistance { forward, total });
    };
    forward[start] = W::one();
    for q in order {
        if forward[q].is_zero() {
            continue;
        }
        let here = forward[q].clone();
        for arc in m.arcs(q) {
            let w = here.times(&arc.weight);
            forward[arc.nextstate] = forward[arc.nextstate].plus(&w);
        }
        if m.is_final(q) {
            total = total.plus(&here.times(m.final_weight(q)));
        }
    }
    Ok(ShortestDistance { forward, total })
}

/// Sum of all path weights from each state to a final state.
pub fn backward_distance<W: Semiring>(m: &Wfst<W>) -> Result<Vec<W>> {
    let order = topological_order(m)?;
    let mut backward = vec![W::zero(); m.num_states()];
    for &q in order.iter().rev() {
        let mut acc = m.final_weight(q).clone();
        for arc in m.arcs(q) {
            acc = acc.plus(&arc.weight.times(&backward[arc.nextstate]));
        }
        backward[q] = acc;
    }
    Ok(backward)
}

#[derive(Clone, Debug)]
pub struct ShortestPath {
    /// `(state, arc index)` for every arc on the path, in order.
    pub arcs: Vec<(StateId, usize)>,
    pub weight: TropicalWeight,
}

impl ShortestPath {
    pub fn arc_refs<'m>(&self, m: &'m Wfst<TropicalWeight>) -> Vec<&'m Arc<TropicalWeight>> {
        self.arcs.iter().map(|&(q, i)| &m.arcs(q)[i]).collect()
    }
}

/// Minimum-weight start-to-final path of an acyclic tropical machine.
///
/// Among equal-weight paths the one whose `(state, arc index)` sequence is
/// lexicographically smallest wins; ending at a final state sorts before
/// leaving it.
pub fn shortest_path(m: &Wfst<TropicalWeight>) -> Result<ShortestPath> {
    let order = topological_order(m)?;
    let Some(start) = m.start() else {
        return Err(Error::NoPath);
    };
    let n = m.num_states();
    let mut best = vec![f64::INFINITY; n];
    let mut choice: Vec<Option<usize>> = vec![None; n];
    for &q in order.iter().rev() {
        let mut cost = m.final_weight(q).0;
        let mut pick = None;
        for (i, arc) in m.arcs(q).iter().enumerate() {
            let c = arc.weight.0 + best[arc.nextstate];
            if c < cost {
                cost = c;
                pick = Some(i);
            }
        }
        best[q] = cost;
        choice[q] = pick;
    }
    if best[start] == f64::INFINITY {
        return Err(Error::NoPath);
    }
    let mut arcs = Vec::new();
    let mut q = start;
    while let Some(i) = choice[q] {
        arcs.push((q, i));
        q = m.arcs(q)[i].nextstate;
    }
    Ok(ShortestPath {
        arcs,
        weight: TropicalWeight(best[start]),
    })
}

/// Drops arcs whose negative-log weight exceeds `threshold`, then trims.
///
/// For every state and non-epsilon input label the cheapest arc is always
/// kept, so no input symbol loses all of its outgoing arcs. Failure arcs are
/// never pruned.
pub fn prune_arcs<W: Semiring>(m: &Wfst<W>, threshold: f64) -> Wfst<W> {
    let phi = m.failure_label();
    let mut arcs = Vec::with_capacity(m.num_states());
    for q in m.states() {
        let src = m.arcs(q);
        let mut keep = vec![false; src.len()];
        let mut i = 0;
        while i < src.len() {
            let label = src[i].ilabel;
            let mut j = i;
            while j < src.len() && src[j].ilabel == label {
                j += 1;
            }
            let structural = Some(label) == phi;
            let mut any = false;
            for k in i..j {
                if structural || src[k].weight.neg_log() <= threshold {
                    keep[k] = true;
                    any = true;
                }
            }
            if !any && label != EPSILON {
                let cheapest = (i..j)
                    .min_by(|&x, &y| {
                        src[x]
                            .weight
                            .neg_log()
                            .partial_cmp(&src[y].weight.neg_log())
                            .unwrap_or(std::cmp::Ordering::Equal)
                    })
                    .expect("non-empty label group");
                if !src[cheapest].weight.is_zero() {
                    keep[cheapest] = true;
                }
            }
            i = j;
        }
        arcs.push(
            src.iter()
                .zip(keep)
                .filter(|(_, k)| *k)
                .map(|(a, _)| a.clone())
                .collect(),
        );
    }
    let finals = m.states().map(|q| m.final_weight(q).clone()).collect();
    let pruned = Wfst::from_parts(
        arcs,
        finals,
        m.start(),
        m.isyms().clone(),
        m.osyms().clone(),
        phi,
    );
    connect(&pruned)
}
