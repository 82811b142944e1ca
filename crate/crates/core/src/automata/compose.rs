use std::collections::{HashMap, VecDeque};

use super::{connect, Arc, Label, StateId, Wfst, EPSILON};
use crate::error::{Error, Result};
use crate::semiring::Semiring;

/// Which operand carries failure (backoff) arcs.
#[derive(Clone, Copy, PartialEq, Eq)]
enum FailureSide {
    None,
    Left(Label),
    Right(Label),
}

// Epsilon filter states. After an epsilon move on one side alone, the other
// side may not move alone until a synchronizing move happens; simultaneous
// epsilon moves are only allowed before any lone move.
const FILTER_SYNC: u8 = 0;
const FILTER_RIGHT_ALONE: u8 = 1;
const FILTER_LEFT_ALONE: u8 = 2;

/// Composes `a` with `b`, matching `a`'s output labels against `b`'s input
/// labels.
///
/// Epsilon paths are deduplicated with a three-state filter. One operand may
/// declare a failure label; its failure arcs are followed only when the
/// current state has no arc for the symbol being matched ("else"
/// semantics) and are folded into the matched arc's weight. The failure
/// machine must be deterministic and epsilon-free on its matching side. The
/// result is trimmed.
pub fn compose<W: Semiring>(a: &Wfst<W>, b: &Wfst<W>) -> Result<Wfst<W>> {
    if !std::sync::Arc::ptr_eq(a.osyms(), b.isyms()) && a.osyms() != b.isyms() {
        return Err(Error::SymbolTableMismatch);
    }
    let side = match (a.failure_label(), b.failure_label()) {
        (Some(_), Some(_)) => {
            return Err(Error::UnsupportedComposition(
                "both operands declare failure labels".into(),
            ))
        }
        (Some(f), None) => FailureSide::Left(f),
        (None, Some(f)) => FailureSide::Right(f),
        (None, None) => FailureSide::None,
    };
    match side {
        FailureSide::Left(_) => {
            let p = a.properties();
            if !p.olabel_deterministic || p.has_output_epsilons {
                return Err(Error::UnsupportedComposition(
                    "failure machine must be deterministic and epsilon-free on its output side"
                        .into(),
                ));
            }
        }
        FailureSide::Right(_) => {
            let p = b.properties();
            if !p.ilabel_deterministic || p.has_input_epsilons {
                return Err(Error::UnsupportedComposition(
                    "failure machine must be deterministic and epsilon-free on its input side"
                        .into(),
                ));
            }
        }
        FailureSide::None => {}
    }

    let mut c = Composer {
        a,
        b,
        side,
        left_index: OutputIndex::new(a),
        states: HashMap::new(),
        queue: VecDeque::new(),
        arcs: Vec::new(),
        finals: Vec::new(),
    };
    let (Some(sa), Some(sb)) = (a.start(), b.start()) else {
        return Ok(Wfst::new(a.isyms().clone(), b.osyms().clone()));
    };
    let start = c.state((sa, sb, FILTER_SYNC));
    while let Some((id, (qa, qb, filter))) = c.queue.pop_front() {
        c.expand(id, qa, qb, filter);
    }

    let mut arcs = c.arcs;
    for state_arcs in &mut arcs {
        state_arcs.sort_by_key(|arc| (arc.ilabel, arc.olabel));
    }
    let out = Wfst::from_parts(
        arcs,
        c.finals,
        Some(start),
        a.isyms().clone(),
        b.osyms().clone(),
        None,
    );
    Ok(connect(&out))
}

type Tuple = (StateId, StateId, u8);

struct Composer<'m, W> {
    a: &'m Wfst<W>,
    b: &'m Wfst<W>,
    side: FailureSide,
    left_index: OutputIndex,
    states: HashMap<Tuple, StateId>,
    queue: VecDeque<(StateId, Tuple)>,
    arcs: Vec<Vec<Arc<W>>>,
    finals: Vec<W>,
}

impl<W: Semiring> Composer<'_, W> {
    fn state(&mut self, tuple: Tuple) -> StateId {
        if let Some(&id) = self.states.get(&tuple) {
            return id;
        }
        let id = self.arcs.len();
        self.arcs.push(Vec::new());
        self.finals.push(W::zero());
        self.states.insert(tuple, id);
        self.queue.push_back((id, tuple));
        id
    }

    fn push(&mut self, from: StateId, ilabel: Label, olabel: Label, weight: W, to: Tuple) {
        if weight.is_zero() {
            return;
        }
        let next = self.state(to);
        self.arcs[from].push(Arc::new(ilabel, olabel, weight, next));
    }

    fn expand(&mut self, id: StateId, qa: StateId, qb: StateId, filter: u8) {
        let (a, b) = (self.a, self.b);

        let fa = final_weight(a, qa, self.left_failure());
        let fb = final_weight(b, qb, self.right_failure());
        if !fa.is_zero() && !fb.is_zero() {
            self.finals[id] = fa.times(&fb);
        }

        // Lone epsilon moves on the left (output epsilon), right stays put.
        for ea in a.arcs(qa) {
            if ea.olabel != EPSILON {
                continue;
            }
            if filter != FILTER_RIGHT_ALONE {
                self.push(
                    id,
                    ea.ilabel,
                    EPSILON,
                    ea.weight.clone(),
                    (ea.nextstate, qb, FILTER_LEFT_ALONE),
                );
            }
            if filter == FILTER_SYNC {
                for eb in b.arcs_with_ilabel(qb, EPSILON) {
                    self.push(
                        id,
                        ea.ilabel,
                        eb.olabel,
                        ea.weight.times(&eb.weight),
                        (ea.nextstate, eb.nextstate, FILTER_SYNC),
                    );
                }
            }
        }
        // Lone epsilon moves on the right (input epsilon), left stays put.
        if filter != FILTER_LEFT_ALONE {
            for eb in b.arcs_with_ilabel(qb, EPSILON) {
                self.push(
                    id,
                    EPSILON,
                    eb.olabel,
                    eb.weight.clone(),
                    (qa, eb.nextstate, FILTER_RIGHT_ALONE),
                );
            }
        }

        // Symbol matches.
        match self.side {
            FailureSide::Left(phi) => {
                for eb in b.arcs(qb) {
                    if eb.ilabel == EPSILON {
                        continue;
                    }
                    let (state, backoff) = self.follow_left(qa, eb.ilabel, phi);
                    let Some(state) = state else { continue };
                    for idx in self.left_index.lookup(a, state, eb.ilabel) {
                        let ea = &a.arcs(state)[idx];
                        let w = backoff.times(&ea.weight).times(&eb.weight);
                        self.push(
                            id,
                            ea.ilabel,
                            eb.olabel,
                            w,
                            (ea.nextstate, eb.nextstate, FILTER_SYNC),
                        );
                    }
                }
            }
            FailureSide::Right(phi) => {
                for ea in a.arcs(qa) {
                    if ea.olabel == EPSILON {
                        continue;
                    }
                    let (state, backoff) = follow_right(b, qb, ea.olabel, phi);
                    let Some(state) = state else { continue };
                    for eb in b.arcs_with_ilabel(state, ea.olabel) {
                        let w = ea.weight.times(&backoff).times(&eb.weight);
                        self.push(
                            id,
                            ea.ilabel,
                            eb.olabel,
                            w,
                            (ea.nextstate, eb.nextstate, FILTER_SYNC),
                        );
                    }
                }
            }
            FailureSide::None => {
                for ea in a.arcs(qa) {
                    if ea.olabel == EPSILON {
                        continue;
                    }
                    for eb in b.arcs_with_ilabel(qb, ea.olabel) {
                        self.push(
                            id,
                            ea.ilabel,
                            eb.olabel,
                            ea.weight.times(&eb.weight),
                            (ea.nextstate, eb.nextstate, FILTER_SYNC),
                        );
                    }
                }
            }
        }
    }

    fn left_failure(&self) -> Option<Label> {
        match self.side {
            FailureSide::Left(l) => Some(l),
            _ => None,
        }
    }

    fn right_failure(&self) -> Option<Label> {
        match self.side {
            FailureSide::Right(l) => Some(l),
            _ => None,
        }
    }

    /// Walks failure arcs of the left machine until `label` can be matched.
    fn follow_left(
        &mut self,
        mut state: StateId,
        label: Label,
        phi: Label,
    ) -> (Option<StateId>, W) {
        let a = self.a;
        let mut weight = W::one();
        for _ in 0..=a.num_states() {
            if !self.left_index.lookup(a, state, label).is_empty() {
                return (Some(state), weight);
            }
            match self.left_index.lookup(a, state, phi).first() {
                Some(idx) => {
                    let arc = &a.arcs(state)[idx];
                    weight = weight.times(&arc.weight);
                    state = arc.nextstate;
                }
                None => return (None, weight),
            }
        }
        (None, weight)
    }
}

fn follow_right<W: Semiring>(
    b: &Wfst<W>,
    mut state: StateId,
    label: Label,
    phi: Label,
) -> (Option<StateId>, W) {
    let mut weight = W::one();
    for _ in 0..=b.num_states() {
        if !b.arcs_with_ilabel(state, label).is_empty() {
            return (Some(state), weight);
        }
        match b.arcs_with_ilabel(state, phi).first() {
            Some(arc) => {
                weight = weight.times(&arc.weight);
                state = arc.nextstate;
            }
            None => return (None, weight),
        }
    }
    (None, weight)
}

/// Final weight of `state`, reached through failure arcs when the state
/// itself is not final.
fn final_weight<W: Semiring>(m: &Wfst<W>, mut state: StateId, phi: Option<Label>) -> W {
    let Some(phi) = phi else {
        return m.final_weight(state).clone();
    };
    let mut weight = W::one();
    for _ in 0..=m.num_states() {
        if m.is_final(state) {
            return weight.times(m.final_weight(state));
        }
        let next = m
            .arcs(state)
            .iter()
            .find(|a| a.ilabel == phi || a.olabel == phi);
        match next {
            Some(arc) => {
                weight = weight.times(&arc.weight);
                state = arc.nextstate;
            }
            None => break,
        }
    }
    W::zero()
}

/// Lookup of arcs by output label on the left operand. Acceptors and other
/// output-sorted machines are searched directly; otherwise a per-state index
/// is built on first use.
struct OutputIndex {
    sorted: bool,
    cache: HashMap<StateId, Vec<usize>>,
}

impl OutputIndex {
    fn new<W: Semiring>(m: &Wfst<W>) -> Self {
        OutputIndex {
            sorted: m.properties().olabel_sorted,
            cache: HashMap::new(),
        }
    }

    fn lookup<W: Semiring>(&mut self, m: &Wfst<W>, state: StateId, label: Label) -> Matches {
        let arcs = m.arcs(state);
        if self.sorted {
            let lo = arcs.partition_point(|a| a.olabel < label);
            let hi = lo + arcs[lo..].partition_point(|a| a.olabel == label);
            return Matches::Range(lo..hi);
        }
        let index = self.cache.entry(state).or_insert_with(|| {
            let mut idx: Vec<usize> = (0..arcs.len()).collect();
            idx.sort_by_key(|&i| arcs[i].olabel);
            idx
        });
        let lo = index.partition_point(|&i| arcs[i].olabel < label);
        let hi = lo + index[lo..].partition_point(|&i| arcs[i].olabel == label);
        Matches::List(index[lo..hi].to_vec())
    }
}

enum Matches {
    Range(std::ops::Range<usize>),
    List(Vec<usize>),
}

impl Matches {
    fn is_empty(&self) -> bool {
        match self {
            Matches::Range(r) => r.is_empty(),
            Matches::List(l) => l.is_empty(),
        }
    }

    fn first(&self) -> Option<usize> {
        match self {
            Matches::Range(r) => (!r.is_empty()).then_some(r.start),
            Matches::List(l) => l.first().copied(),
        }
    }
}

impl IntoIterator for Matches {
    type Item = usize;
    type IntoIter = std::iter::Chain<std::ops::Range<usize>, std::vec::IntoIter<usize>>;

    fn into_iter(self) -> Self::IntoIter {
        match self {
            Matches::Range(r) => r.chain(Vec::new()),
            Matches::List(l) => (0..0).chain(l),
        }
    }
}
