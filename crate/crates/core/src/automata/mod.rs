//! Weighted finite-state transducers and the lattice algorithms run on them.
//!
//! Machines are generic over a [`Semiring`]. Arcs of every state are kept
//! sorted by `(ilabel, olabel)` so that composition can match by binary
//! search on the right-hand machine.

mod algorithms;
mod compose;
mod text;

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::semiring::Semiring;

pub use algorithms::{
    backward_distance, connect, prune_arcs, shortest_distance, shortest_path, topological_order,
    ShortestDistance, ShortestPath,
};
pub use compose::compose;
pub use text::{read_symbols, read_text, write_symbols, write_text};

pub type Label = u32;
pub type StateId = usize;

/// Reserved epsilon label.
pub const EPSILON: Label = 0;

/// Shared, immutable symbol table.
pub type Symbols = std::sync::Arc<SymbolTable>;

/// Bidirectional map between labels and symbol strings. Id 0 is always
/// `<eps>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolTable {
    symbols: Vec<String>,
    ids: HashMap<String, Label>,
}

pub const EPSILON_SYMBOL: &str = "<eps>";
pub const FAILURE_SYMBOL: &str = "<phi>";

impl Default for SymbolTable {
    fn default() -> Self {
        Self::new()
    }
}

impl SymbolTable {
    pub fn new() -> Self {
        let mut table = SymbolTable {
            symbols: Vec::new(),
            ids: HashMap::new(),
        };
        table.add(EPSILON_SYMBOL);
        table
    }

    /// Table holding one symbol per character, in the given order.
    pub fn from_chars<I: IntoIterator<Item = char>>(chars: I) -> Self {
        let mut table = SymbolTable::new();
        for c in chars {
            table.add_char(c);
        }
        table
    }

    /// Returns the existing id if the symbol is already present.
    pub fn add(&mut self, symbol: &str) -> Label {
        if let Some(&id) = self.ids.get(symbol) {
            return id;
        }
        let id = self.symbols.len() as Label;
        self.symbols.push(symbol.to_string());
        self.ids.insert(symbol.to_string(), id);
        id
    }

    pub fn add_char(&mut self, c: char) -> Label {
        self.add(c.encode_utf8(&mut [0; 4]))
    }

    pub fn id(&self, symbol: &str) -> Option<Label> {
        self.ids.get(symbol).copied()
    }

    pub fn id_of_char(&self, c: char) -> Option<Label> {
        self.id(c.encode_utf8(&mut [0; 4]))
    }

    pub fn symbol(&self, id: Label) -> Option<&str> {
        self.symbols.get(id as usize).map(String::as_str)
    }

    /// The character a label stands for, if it is a single-character symbol.
    pub fn char_of(&self, id: Label) -> Option<char> {
        let s = self.symbol(id)?;
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Some(c),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.len() <= 1
    }

    pub fn iter(&self) -> impl Iterator<Item = (Label, &str)> {
        self.symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (i as Label, s.as_str()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Arc<W> {
    pub ilabel: Label,
    pub olabel: Label,
    pub weight: W,
    pub nextstate: StateId,
}

impl<W> Arc<W> {
    pub fn new(ilabel: Label, olabel: Label, weight: W, nextstate: StateId) -> Self {
        Arc {
            ilabel,
            olabel,
            weight,
            nextstate,
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Properties {
    pub olabel_sorted: bool,
    pub ilabel_deterministic: bool,
    pub olabel_deterministic: bool,
    pub has_input_epsilons: bool,
    pub has_output_epsilons: bool,
}

/// A weighted finite-state transducer.
#[derive(Clone, Debug)]
pub struct Wfst<W> {
    arcs: Vec<Vec<Arc<W>>>,
    finals: Vec<W>,
    start: Option<StateId>,
    isyms: Symbols,
    osyms: Symbols,
    failure_label: Option<Label>,
    props: OnceLock<Properties>,
}

impl<W: Semiring> Wfst<W> {
    pub fn new(isyms: Symbols, osyms: Symbols) -> Self {
        Wfst {
            arcs: Vec::new(),
            finals: Vec::new(),
            start: None,
            isyms,
            osyms,
            failure_label: None,
            props: OnceLock::new(),
        }
    }

    pub fn add_state(&mut self) -> StateId {
        self.props = OnceLock::new();
        self.arcs.push(Vec::new());
        self.finals.push(W::zero());
        self.arcs.len() - 1
    }

    pub fn set_start(&mut self, state: StateId) {
        assert!(state < self.arcs.len(), "start state out of range");
        self.start = Some(state);
    }

    pub fn set_final(&mut self, state: StateId, weight: W) {
        self.finals[state] = weight;
    }

    /// Appends an arc, keeping the state's arcs sorted by `(ilabel, olabel)`
    /// with insertion order preserved among equal labels.
    pub fn add_arc(&mut self, state: StateId, arc: Arc<W>) {
        assert!(arc.nextstate < self.arcs.len(), "arc target out of range");
        self.props = OnceLock::new();
        let arcs = &mut self.arcs[state];
        let key = (arc.ilabel, arc.olabel);
        let pos = arcs.partition_point(|a| (a.ilabel, a.olabel) <= key);
        arcs.insert(pos, arc);
    }

    pub fn set_failure_label(&mut self, label: Option<Label>) {
        self.props = OnceLock::new();
        self.failure_label = label;
    }

    pub fn failure_label(&self) -> Option<Label> {
        self.failure_label
    }

    pub fn start(&self) -> Option<StateId> {
        self.start
    }

    pub fn num_states(&self) -> usize {
        self.arcs.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.iter().map(Vec::len).sum()
    }

    pub fn arcs(&self, state: StateId) -> &[Arc<W>] {
        &self.arcs[state]
    }

    pub fn final_weight(&self, state: StateId) -> &W {
        &self.finals[state]
    }

    pub fn is_final(&self, state: StateId) -> bool {
        !self.finals[state].is_zero()
    }

    pub fn isyms(&self) -> &Symbols {
        &self.isyms
    }

    pub fn osyms(&self) -> &Symbols {
        &self.osyms
    }

    pub fn states(&self) -> std::ops::Range<StateId> {
        0..self.arcs.len()
    }

    /// Arcs of `state` whose input label is `label`.
    pub fn arcs_with_ilabel(&self, state: StateId, label: Label) -> &[Arc<W>] {
        let arcs = &self.arcs[state];
        let lo = arcs.partition_point(|a| a.ilabel < label);
        let hi = lo + arcs[lo..].partition_point(|a| a.ilabel == label);
        &arcs[lo..hi]
    }

    pub fn is_acceptor(&self) -> bool {
        self.arcs.iter().flatten().all(|a| a.ilabel == a.olabel)
    }

    /// Converts every weight with `f`, keeping topology and labels.
    pub fn map_weights<V: Semiring>(&self, mut f: impl FnMut(&W) -> V) -> Wfst<V> {
        Wfst {
            arcs: self
                .arcs
                .iter()
                .map(|arcs| {
                    arcs.iter()
                        .map(|a| Arc::new(a.ilabel, a.olabel, f(&a.weight), a.nextstate))
                        .collect()
                })
                .collect(),
            finals: self.finals.iter().map(&mut f).collect(),
            start: self.start,
            isyms: self.isyms.clone(),
            osyms: self.osyms.clone(),
            failure_label: self.failure_label,
            props: OnceLock::new(),
        }
    }

    /// Same machine with arc weights rewritten by `f(arc)`; finals unchanged.
    pub fn map_arc_weights<V: Semiring>(
        &self,
        mut arc_weight: impl FnMut(&Arc<W>) -> V,
        mut final_weight: impl FnMut(&W) -> V,
    ) -> Wfst<V> {
        Wfst {
            arcs: self
                .arcs
                .iter()
                .map(|arcs| {
                    arcs.iter()
                        .map(|a| Arc::new(a.ilabel, a.olabel, arc_weight(a), a.nextstate))
                        .collect()
                })
                .collect(),
            finals: self.finals.iter().map(&mut final_weight).collect(),
            start: self.start,
            isyms: self.isyms.clone(),
            osyms: self.osyms.clone(),
            failure_label: self.failure_label,
            props: OnceLock::new(),
        }
    }

    pub(crate) fn properties(&self) -> Properties {
        *self.props.get_or_init(|| {
            let mut p = Properties {
                olabel_sorted: true,
                ilabel_deterministic: true,
                olabel_deterministic: true,
                ..Properties::default()
            };
            let mut seen = Vec::new();
            for arcs in &self.arcs {
                for pair in arcs.windows(2) {
                    if pair[0].olabel > pair[1].olabel {
                        p.olabel_sorted = false;
                    }
                    if pair[0].ilabel == pair[1].ilabel {
                        p.ilabel_deterministic = false;
                    }
                }
                seen.clear();
                seen.extend(arcs.iter().map(|a| a.olabel));
                seen.sort_unstable();
                if seen.windows(2).any(|w| w[0] == w[1]) {
                    p.olabel_deterministic = false;
                }
                p.has_input_epsilons |= arcs.iter().any(|a| a.ilabel == EPSILON);
                p.has_output_epsilons |= arcs.iter().any(|a| a.olabel == EPSILON);
            }
            p
        })
    }

    pub(crate) fn from_parts(
        arcs: Vec<Vec<Arc<W>>>,
        finals: Vec<W>,
        start: Option<StateId>,
        isyms: Symbols,
        osyms: Symbols,
        failure_label: Option<Label>,
    ) -> Self {
        Wfst {
            arcs,
            finals,
            start,
            isyms,
            osyms,
            failure_label,
            props: OnceLock::new(),
        }
    }
}

/// Linear acceptor of `seq` with unit weights.
///
/// Fails with the position of the first character missing from `table`.
pub fn chain_acceptor<W: Semiring>(seq: &str, table: &Symbols) -> Result<Wfst<W>> {
    let mut m = Wfst::new(table.clone(), table.clone());
    let mut state = m.add_state();
    m.set_start(state);
    for (position, c) in seq.chars().enumerate() {
        let label = table
            .id_of_char(c)
            .filter(|&l| l != EPSILON)
            .ok_or(Error::UnknownSymbol {
                position,
                symbol: c,
            })?;
        let next = m.add_state();
        m.add_arc(state, Arc::new(label, label, W::one(), next));
        state = next;
    }
    m.set_final(state, W::one());
    Ok(m)
}

/// Labels along `arcs` on the input side with epsilons removed, as text.
pub fn input_string<W>(m: &Wfst<W>, arcs: &[&Arc<W>]) -> String {
    arcs.iter()
        .filter(|a| a.ilabel != EPSILON)
        .filter_map(|a| m.isyms.char_of(a.ilabel))
        .collect()
}
