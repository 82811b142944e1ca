//! Tab-separated text interchange for machines and symbol tables.
//!
//! Machine format, one record per line:
//!
//! ```text
//! src<TAB>dst<TAB>ilabel<TAB>olabel<TAB>weight
//! state<TAB>weight            (final state)
//! state                       (final state with weight one)
//! ```
//!
//! Labels are numeric ids and weights are negative log values. The first
//! record's leading state is the start state; states are renumbered on
//! write so that the start is 0. A `#failure<TAB>label` line declares the
//! failure label; other lines starting with `#` are comments. Only the
//! scalar mass of a weight is written.
//!
//! Symbol tables are `symbol<TAB>id` lines. A space is written as `<space>`
//! and a tab as `<tab>`.

use std::io::{BufRead, Write};

use super::{Arc, Label, SymbolTable, Symbols, Wfst};
use crate::error::{Error, Result};
use crate::semiring::Semiring;

fn format_weight(w: f64) -> String {
    if w == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{w}")
    }
}

fn parse_weight(s: &str, name: &str, line: usize) -> Result<f64> {
    match s {
        "inf" | "Infinity" => Ok(f64::INFINITY),
        _ => s
            .parse()
            .map_err(|_| Error::parse(name, line, format!("bad weight {s:?}"))),
    }
}

pub fn write_text<W: Semiring, O: Write>(m: &Wfst<W>, out: &mut O) -> Result<()> {
    if let Some(phi) = m.failure_label() {
        writeln!(out, "#failure\t{phi}")?;
    }
    let Some(start) = m.start() else {
        return Ok(());
    };
    // Start state first, everything else in order.
    let order: Vec<usize> = std::iter::once(start)
        .chain(m.states().filter(|&q| q != start))
        .collect();
    let mut id = vec![0; m.num_states()];
    for (new, &old) in order.iter().enumerate() {
        id[old] = new;
    }
    for &q in &order {
        for a in m.arcs(q) {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                id[q],
                id[a.nextstate],
                a.ilabel,
                a.olabel,
                format_weight(a.weight.neg_log())
            )?;
        }
        if m.is_final(q) {
            writeln!(
                out,
                "{}\t{}",
                id[q],
                format_weight(m.final_weight(q).neg_log())
            )?;
        }
    }
    Ok(())
}

pub fn read_text<W: Semiring, R: BufRead>(
    input: R,
    isyms: Symbols,
    osyms: Symbols,
) -> Result<Wfst<W>> {
    const NAME: &str = "fst";
    let mut m = Wfst::new(isyms, osyms);
    let ensure = |m: &mut Wfst<W>, q: usize| {
        while m.num_states() <= q {
            m.add_state();
        }
    };
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if let Some(rest) = line.strip_prefix("#failure\t") {
            let label: Label = rest
                .trim()
                .parse()
                .map_err(|_| Error::parse(NAME, lineno, "bad failure label"))?;
            m.set_failure_label(Some(label));
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let state = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::parse(NAME, lineno, format!("bad state {s:?}")))
        };
        let label = |s: &str| -> Result<Label> {
            s.parse()
                .map_err(|_| Error::parse(NAME, lineno, format!("bad label {s:?}")))
        };
        match fields.len() {
            1 | 2 => {
                let q = state(fields[0])?;
                ensure(&mut m, q);
                if m.start().is_none() {
                    m.set_start(q);
                }
                let w = match fields.get(1) {
                    Some(w) => parse_weight(w, NAME, lineno)?,
                    None => 0.0,
                };
                m.set_final(q, W::from_neg_log(w));
            }
            5 => {
                let (q, r) = (state(fields[0])?, state(fields[1])?);
                ensure(&mut m, q.max(r));
                if m.start().is_none() {
                    m.set_start(q);
                }
                let w = parse_weight(fields[4], NAME, lineno)?;
                m.add_arc(
                    q,
                    Arc::new(label(fields[2])?, label(fields[3])?, W::from_neg_log(w), r),
                );
            }
            n => {
                return Err(Error::parse(
                    NAME,
                    lineno,
                    format!("expected 1, 2 or 5 fields, got {n}"),
                ))
            }
        }
    }
    Ok(m)
}

fn escape(symbol: &str) -> &str {
    match symbol {
        " " => "<space>",
        "\t" => "<tab>",
        s => s,
    }
}

fn unescape(symbol: &str) -> &str {
    match symbol {
        "<space>" => " ",
        "<tab>" => "\t",
        s => s,
    }
}

pub fn write_symbols<O: Write + ?Sized>(table: &SymbolTable, out: &mut O) -> Result<()> {
    for (id, symbol) in table.iter() {
        writeln!(out, "{}\t{}", escape(symbol), id)?;
    }
    Ok(())
}

/// Reads a symbol table. Ids must be dense and start with `<eps>` at 0.
pub fn read_symbols<R: BufRead>(input: R) -> Result<SymbolTable> {
    const NAME: &str = "symbols";
    let mut table = SymbolTable::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (symbol, id) = line
            .rsplit_once('\t')
            .ok_or_else(|| Error::parse(NAME, i + 1, "expected symbol<TAB>id"))?;
        let id: Label = id
            .parse()
            .map_err(|_| Error::parse(NAME, i + 1, format!("bad id {id:?}")))?;
        let got = table.add(unescape(symbol));
        if got != id {
            return Err(Error::parse(
                NAME,
                i + 1,
                format!("id {id} out of sequence"),
            ));
        }
    }
    Ok(table)
}
