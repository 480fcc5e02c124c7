//! Rewrite of a halt/decision machine into an accept/reject machine.
//!
//! Input contract, on top of the [`MachineIr`] phase tags:
//!
//! - `cell halt` and `cell decision` are declared, the decision cell being
//!   the leftmost cell the machine ever touches;
//! - every transition into the final state belongs to a writer row;
//! - halted writers (at most one per outcome) reach the decision cell with
//!   the head on it and write their outcome in one step;
//! - unhalted writers are entered from the halt cell by the branch that
//!   fails to halt;
//! - if `initwriter` names a state, its blank column is the single
//!   deterministic step that initializes the decision cell, moving right.
//!
//! The rewrite renames the decision cell to the accept cell and places a
//! fresh reject cell one position to its left. The initialization is
//! replaced (or inserted) so the accept cell starts at 1 and the reject
//! cell at 0; halted writers write their outcome to both cells; unhalted
//! branches are parked on the other side of the halt cell so they never
//! touch either. The step overhead is a constant: +2 for the spliced
//! initialization (+6 when inserted from scratch) and +1 for the two-cell
//! write.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::machine::{Direction, DirectionSet, Machine, RuleEntry, StateId, SymbolId};
use crate::parser::{ParsedMachine, Phase, WriterKind};

use super::ir::MachineIr;

/// String-level rule entry used while states and symbols are in flux.
#[derive(Debug, Clone)]
struct Entry {
    amplitude: Complex64,
    write: String,
    next: String,
    dir: Direction,
}

struct Builder {
    name: String,
    symbols: Vec<String>,
    states: Vec<String>,
    initial: String,
    final_state: String,
    rules: BTreeMap<(String, String), Vec<Entry>>,
    phases: BTreeMap<String, Phase>,
    writers: BTreeMap<String, WriterKind>,
    init_writer: Option<String>,
    cells: BTreeMap<String, i64>,
}

impl Builder {
    fn from_ir(ir: &MachineIr) -> Builder {
        let m = ir.machine();
        let mut rules = BTreeMap::new();
        for ((state, symbol), entries) in &m.table {
            let key = (
                m.state_name(*state).to_string(),
                m.symbol_name(*symbol).to_string(),
            );
            let entries = entries
                .iter()
                .map(|e| Entry {
                    amplitude: e.amplitude,
                    write: m.symbol_name(e.write).to_string(),
                    next: m.state_name(e.next).to_string(),
                    dir: e.dir,
                })
                .collect();
            rules.insert(key, entries);
        }
        Builder {
            name: format!("{}-zbqp-star", m.name),
            symbols: m.symbols().map(|s| m.symbol_name(s).to_string()).collect(),
            states: m.states().map(|s| m.state_name(s).to_string()).collect(),
            initial: m.state_name(m.initial).to_string(),
            final_state: m.state_name(m.final_state).to_string(),
            rules,
            phases: ir
                .parsed
                .phases
                .iter()
                .map(|(s, p)| (m.state_name(*s).to_string(), *p))
                .collect(),
            writers: ir
                .parsed
                .writers
                .iter()
                .map(|(s, w)| (m.state_name(*s).to_string(), *w))
                .collect(),
            init_writer: ir.parsed.init_writer.map(|s| m.state_name(s).to_string()),
            cells: m.cells.clone(),
        }
    }

    fn fresh_state(&mut self, base: &str) -> String {
        let mut candidate = base.to_string();
        let mut i = 0;
        while self.states.contains(&candidate) {
            i += 1;
            candidate = format!("{base}{i}");
        }
        self.states.push(candidate.clone());
        candidate
    }

    fn fresh_symbol(&mut self, base: &str) -> String {
        let mut candidate = base.to_string();
        let mut i = 0;
        while self.symbols.contains(&candidate) {
            i += 1;
            candidate = format!("{base}{i}");
        }
        self.symbols.push(candidate.clone());
        candidate
    }

    fn det(&mut self, state: &str, read: &str, write: &str, next: &str, dir: Direction) {
        self.rules.insert(
            (state.to_string(), read.to_string()),
            vec![Entry {
                amplitude: Complex64::new(1.0, 0.0),
                write: write.to_string(),
                next: next.to_string(),
                dir,
            }],
        );
    }

    fn remove_row(&mut self, state: &str) {
        self.rules.retain(|(s, _), _| s != state);
    }

    /// Fills every missing column with a junk transition into a free target
    /// slot, honoring each state's established entry direction so the local
    /// well-formedness conditions keep holding.
    fn complete(&mut self) -> Result<()> {
        let mut used: BTreeSet<(String, String, Direction)> = BTreeSet::new();
        let mut dir_of: BTreeMap<String, Direction> = BTreeMap::new();
        for entries in self.rules.values() {
            for e in entries {
                used.insert((e.write.clone(), e.next.clone(), e.dir));
                if let Some(prev) = dir_of.insert(e.next.clone(), e.dir) {
                    if prev != e.dir {
                        return Err(Error::Transform(format!(
                            "state `{}` is entered with both {} and {}",
                            e.next, prev, e.dir
                        )));
                    }
                }
            }
        }

        let states = self.states.clone();
        let symbols = self.symbols.clone();
        let mut missing = Vec::new();
        for state in &states {
            if *state == self.final_state {
                continue;
            }
            for symbol in &symbols {
                if !self.rules.contains_key(&(state.clone(), symbol.clone())) {
                    missing.push((state.clone(), symbol.clone()));
                }
            }
        }
        for (state, symbol) in missing {
            let mut assigned = false;
            'search: for target in &states {
                let dir = *dir_of.entry(target.clone()).or_insert(Direction::Right);
                for tau in &symbols {
                    let slot = (tau.clone(), target.clone(), dir);
                    if !used.contains(&slot) {
                        used.insert(slot);
                        let phase = self.phases.get(&state).copied();
                        self.det(&state, &symbol, tau, target, dir);
                        if let Some(p) = phase {
                            self.phases.insert(state.clone(), p);
                        }
                        assigned = true;
                        break 'search;
                    }
                }
            }
            if !assigned {
                return Err(Error::Transform(format!(
                    "no free target slot for column ({state}, {symbol})"
                )));
            }
        }
        Ok(())
    }

    fn build(self) -> Result<ParsedMachine> {
        let state_index: BTreeMap<&str, StateId> = self
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), StateId(i as u16)))
            .collect();
        let symbol_index: BTreeMap<&str, SymbolId> = self
            .symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), SymbolId(i as u16)))
            .collect();
        let mut table = BTreeMap::new();
        for ((state, symbol), entries) in &self.rules {
            let key = (state_index[state.as_str()], symbol_index[symbol.as_str()]);
            let entries: Vec<RuleEntry> = entries
                .iter()
                .map(|e| RuleEntry {
                    amplitude: e.amplitude,
                    write: symbol_index[e.write.as_str()],
                    next: state_index[e.next.as_str()],
                    dir: e.dir,
                })
                .collect();
            table.insert(key, entries);
        }
        let machine = Machine::new(
            self.name,
            self.symbols.clone(),
            self.states.clone(),
            state_index[self.initial.as_str()],
            state_index[self.final_state.as_str()],
            DirectionSet::LeftStayRight,
            table,
            self.cells,
        )?;
        Ok(ParsedMachine {
            machine,
            phases: self
                .phases
                .iter()
                .map(|(s, p)| (state_index[s.as_str()], *p))
                .collect(),
            writers: self
                .writers
                .iter()
                .map(|(s, w)| (state_index[s.as_str()], *w))
                .collect(),
            init_writer: self.init_writer.as_deref().map(|s| state_index[s]),
        })
    }
}

/// Step overhead of the rewrite, measured on probe inputs.
fn measure_overhead(original: &Machine, transformed: &Machine) -> Result<u32> {
    let mut k: Option<u32> = None;
    for probe in ["1", "10", "101"] {
        let before = original
            .halting_steps(&original.parse_input(probe)?, 200)?
            .ok_or_else(|| {
                Error::Transform(format!("original machine does not halt on `{probe}`"))
            })?;
        let after = transformed
            .halting_steps(&transformed.parse_input(probe)?, 200)?
            .ok_or_else(|| {
                Error::Transform(format!("transformed machine does not halt on `{probe}`"))
            })?;
        let diff = after.checked_sub(before).ok_or_else(|| {
            Error::Transform("transformed machine halts earlier than the original".into())
        })?;
        if let Some(prev) = k {
            if prev != diff {
                return Err(Error::Transform(format!(
                    "step overhead is input-dependent: {prev} vs {diff}"
                )));
            }
        }
        k = Some(diff);
    }
    Ok(k.unwrap())
}

/// Rewrites a halt/decision machine into the accept/reject form.
pub fn transform_zqp_to_zbqp_star(ir: &MachineIr) -> Result<MachineIr> {
    let m = ir.machine();
    let halt_cell = *m
        .cells
        .get("halt")
        .ok_or_else(|| Error::Transform("machine declares no halt cell".into()))?;
    let decision_cell = *m
        .cells
        .get("decision")
        .ok_or_else(|| Error::Transform("machine declares no decision cell".into()))?;

    let halted = ir.halted_writers();
    let unhalted = ir.unhalted_writers();
    if halted.is_empty() {
        return Err(Error::Transform("machine declares no halted writer".into()));
    }
    {
        let mut outcomes: Vec<u8> = halted.iter().map(|&(_, o)| o).collect();
        outcomes.dedup();
        if outcomes.len() != halted.len() {
            return Err(Error::Transform(
                "two halted writers share an outcome".into(),
            ));
        }
    }
    for name in ["0", "1"] {
        if m.symbol_id(name).is_none() {
            return Err(Error::Transform(format!(
                "alphabet lacks the decision symbol `{name}`"
            )));
        }
    }

    let mut b = Builder::from_ir(ir);
    let final_name = b.final_state.clone();
    let halted_names: Vec<(String, u8)> = halted
        .iter()
        .map(|&(s, o)| (m.state_name(s).to_string(), o))
        .collect();
    let unhalted_names: BTreeSet<String> = unhalted
        .iter()
        .map(|&s| m.state_name(s).to_string())
        .collect();

    // Remember where the spliced initialization rejoins before rows vanish.
    let init_rejoin = match ir.parsed.init_writer {
        Some(iw) => {
            let column = m
                .column(iw, m.blank())
                .ok_or_else(|| Error::Transform("initwriter has no blank column".into()))?;
            if column.len() != 1 || column[0].dir != Direction::Right {
                return Err(Error::Transform(
                    "initwriter blank column must be one deterministic right-moving step".into(),
                ));
            }
            Some((
                m.state_name(iw).to_string(),
                m.state_name(column[0].next).to_string(),
            ))
        }
        None => None,
    };

    // Drop writer rows (and the initialization row being replaced).
    for (name, _) in &halted_names {
        b.remove_row(name);
    }
    for name in &unhalted_names {
        b.remove_row(name);
    }
    if let Some((iw, _)) = &init_rejoin {
        b.remove_row(iw);
    }

    // No transition outside the writer rows may enter the final state.
    for ((state, symbol), entries) in &b.rules {
        for e in entries {
            if e.next == final_name {
                return Err(Error::Transform(format!(
                    "column ({state}, {symbol}) enters the final state but is not a writer row"
                )));
            }
        }
    }

    // Unhalted branches park on the far side of the halt cell: flip the
    // direction of the split entries that feed them; deterministic feeds
    // are junk from deleted rows and are dropped for re-completion.
    let mut dropped_columns = Vec::new();
    for ((state, symbol), entries) in b.rules.iter_mut() {
        if entries.len() == 1 && unhalted_names.contains(&entries[0].next) {
            dropped_columns.push((state.clone(), symbol.clone()));
            continue;
        }
        for e in entries.iter_mut() {
            if unhalted_names.contains(&e.next) {
                e.dir = Direction::Right;
            }
        }
    }
    for key in dropped_columns {
        b.rules.remove(&key);
    }

    // Initialization: accept cell (the old decision cell) starts at 1, the
    // fresh reject cell one step further left starts at 0.
    match &init_rejoin {
        Some((iw, rejoin)) => {
            let f1 = b.fresh_state("j1");
            let f2 = b.fresh_state("j2");
            b.det(iw, "#", "1", &f1, Direction::Left);
            b.det(&f1, "#", "0", &f2, Direction::Right);
            b.det(&f2, "1", "1", rejoin, Direction::Right);
            b.phases.insert(f1.clone(), Phase::Init);
            b.phases.insert(f2.clone(), Phase::Init);
        }
        None => {
            let names: Vec<String> = (0..6).map(|i| b.fresh_state(&format!("g{i}"))).collect();
            let old_initial = b.initial.clone();
            for symbol in b.symbols.clone() {
                b.det(&names[0], &symbol, &symbol, &names[1], Direction::Left);
                b.det(&names[1], &symbol, &symbol, &names[2], Direction::Left);
            }
            b.det(&names[2], "#", "1", &names[3], Direction::Left);
            b.det(&names[3], "#", "0", &names[4], Direction::Right);
            b.det(&names[4], "1", "1", &names[5], Direction::Right);
            b.det(&names[5], "#", "#", &old_initial, Direction::Right);
            for n in &names {
                b.phases.insert(n.clone(), Phase::Init);
            }
            b.initial = names[0].clone();
            b.init_writer = Some(names[2].clone());
        }
    }

    // Halted writers now read the initialized accept cell (value 1), write
    // their outcome there, then write it again into the reject cell.
    for (name, outcome) in &halted_names {
        let second = b.fresh_state(&format!("{name}2"));
        let written = if *outcome == 1 { "1" } else { "0" };
        b.det(name, "1", written, &second, Direction::Left);
        b.det(&second, "0", written, &final_name, Direction::Stay);
        b.phases.insert(second.clone(), Phase::Write);
        b.writers
            .insert(second.clone(), WriterKind::Halted(*outcome));
    }

    // Parker rows: each unhalted branch halts on the first input cell,
    // folding the erased bit into a private final-state slot.
    let mut qf_slots: Vec<String> = Vec::new();
    {
        let taken: BTreeSet<&str> = halted_names
            .iter()
            .map(|(_, o)| if *o == 1 { "1" } else { "0" })
            .collect();
        for s in b.symbols.clone() {
            if !taken.contains(s.as_str()) {
                qf_slots.push(s);
            }
        }
        let mut needed = 2 * unhalted_names.len();
        let mut i = 0;
        while qf_slots.len() < needed {
            qf_slots.push(b.fresh_symbol(match i {
                0 => "v",
                1 => "w",
                _ => "x",
            }));
            i += 1;
        }
        needed = 2 * unhalted_names.len();
        qf_slots.truncate(needed);
    }
    for (i, name) in unhalted_names.iter().enumerate() {
        b.det(name, "0", &qf_slots[2 * i], &final_name, Direction::Stay);
        b.det(
            name,
            "1",
            &qf_slots[2 * i + 1],
            &final_name,
            Direction::Stay,
        );
    }

    b.cells.remove("decision");
    b.cells.insert("halt".into(), halt_cell);
    b.cells.insert("accept".into(), decision_cell);
    b.cells.insert("reject".into(), decision_cell - 1);

    b.complete()?;
    let parsed = b.build()?;
    let mut out = MachineIr::from_parsed(parsed)?;
    out.lower()?;
    out.overhead_k = Some(measure_overhead(m, out.machine())?);
    Ok(out)
}
