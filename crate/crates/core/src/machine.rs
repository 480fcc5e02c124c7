//! Machine definition: alphabet, state set and the quantum transition table.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Index into a machine's alphabet. Index 0 is always the blank `#`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SymbolId(pub u16);

/// Index into a machine's state list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct StateId(pub u16);

/// Head movement of a single step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Direction {
    Left,
    Stay,
    Right,
}

impl Direction {
    pub fn offset(self) -> i64 {
        match self {
            Direction::Left => -1,
            Direction::Stay => 0,
            Direction::Right => 1,
        }
    }

    pub fn parse(token: &str) -> Option<Direction> {
        match token {
            "L" => Some(Direction::Left),
            "N" => Some(Direction::Stay),
            "R" => Some(Direction::Right),
            _ => None,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Left => "L",
            Direction::Stay => "N",
            Direction::Right => "R",
        })
    }
}

/// Declared direction set of a machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DirectionSet {
    LeftRight,
    LeftStayRight,
}

impl DirectionSet {
    pub fn allows(self, dir: Direction) -> bool {
        match self {
            DirectionSet::LeftRight => dir != Direction::Stay,
            DirectionSet::LeftStayRight => true,
        }
    }
}

impl fmt::Display for DirectionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DirectionSet::LeftRight => "LR",
            DirectionSet::LeftStayRight => "LNR",
        })
    }
}

/// One superposed target of a transition column.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleEntry {
    pub amplitude: Complex64,
    pub write: SymbolId,
    pub next: StateId,
    pub dir: Direction,
}

/// The quantum transition function, stored column by column.
///
/// A column is the list of targets for one `(state, read symbol)` pair.
/// Columns exist only for non-final states; the final state is stationary
/// by convention (see [`crate::state`]).
pub type TransitionTable = BTreeMap<(StateId, SymbolId), Vec<RuleEntry>>;

/// A quantum Turing machine over a finite alphabet with a blank symbol,
/// a finite state set with one initial and one final state, and a
/// transition table with complex amplitudes.
#[derive(Debug, Clone)]
pub struct Machine {
    pub name: String,
    symbols: Vec<String>,
    states: Vec<String>,
    pub initial: StateId,
    pub final_state: StateId,
    pub directions: DirectionSet,
    pub table: TransitionTable,
    /// Tape cells with declared roles (`halt`, `decision`, ...), if any.
    pub cells: BTreeMap<String, i64>,
}

impl Machine {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: String,
        symbols: Vec<String>,
        states: Vec<String>,
        initial: StateId,
        final_state: StateId,
        directions: DirectionSet,
        table: TransitionTable,
        cells: BTreeMap<String, i64>,
    ) -> Result<Machine> {
        let m = Machine {
            name,
            symbols,
            states,
            initial,
            final_state,
            directions,
            table,
            cells,
        };
        m.check_structure()?;
        Ok(m)
    }

    fn check_structure(&self) -> Result<()> {
        if self.symbols.first().map(String::as_str) != Some("#") {
            return Err(Error::Machine(
                "alphabet must start with the blank symbol `#`".into(),
            ));
        }
        if self.initial == self.final_state {
            return Err(Error::Machine(
                "final state must not equal the initial state".into(),
            ));
        }
        for ((state, symbol), entries) in &self.table {
            if *state == self.final_state {
                return Err(Error::Machine(format!(
                    "state `{}` is final; transitions out of the final state are implicit identity self-loops",
                    self.state_name(*state)
                )));
            }
            if entries.is_empty() {
                return Err(Error::Machine(format!(
                    "empty transition column ({}, {})",
                    self.state_name(*state),
                    self.symbol_name(*symbol)
                )));
            }
            if symbol.0 as usize >= self.symbols.len() {
                return Err(Error::Machine("symbol index out of range".into()));
            }
            for e in entries {
                if !self.directions.allows(e.dir) {
                    return Err(Error::Machine(format!(
                        "direction {} not in the declared set {} (column ({}, {}))",
                        e.dir,
                        self.directions,
                        self.state_name(*state),
                        self.symbol_name(*symbol)
                    )));
                }
                if !e.amplitude.re.is_finite() || !e.amplitude.im.is_finite() {
                    return Err(Error::Machine("non-finite amplitude".into()));
                }
                if e.amplitude.norm() > 1.0 + 1e-9 {
                    return Err(Error::Machine(format!(
                        "amplitude modulus {} exceeds 1 in column ({}, {})",
                        e.amplitude.norm(),
                        self.state_name(*state),
                        self.symbol_name(*symbol)
                    )));
                }
            }
        }
        // Totality: every non-final (state, symbol) pair must have a column.
        for s in 0..self.states.len() as u16 {
            if StateId(s) == self.final_state {
                continue;
            }
            for sym in 0..self.symbols.len() as u16 {
                if !self.table.contains_key(&(StateId(s), SymbolId(sym))) {
                    return Err(Error::Machine(format!(
                        "missing transition column ({}, {})",
                        self.state_name(StateId(s)),
                        self.symbol_name(SymbolId(sym))
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn blank(&self) -> SymbolId {
        SymbolId(0)
    }

    pub fn symbol_count(&self) -> usize {
        self.symbols.len()
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    /// Total number of transition entries across all declared columns.
    pub fn transition_count(&self) -> usize {
        self.table.values().map(Vec::len).sum()
    }

    pub fn symbol_name(&self, id: SymbolId) -> &str {
        &self.symbols[id.0 as usize]
    }

    pub fn state_name(&self, id: StateId) -> &str {
        &self.states[id.0 as usize]
    }

    pub fn symbol_id(&self, name: &str) -> Option<SymbolId> {
        self.symbols
            .iter()
            .position(|s| s == name)
            .map(|i| SymbolId(i as u16))
    }

    pub fn state_id(&self, name: &str) -> Option<StateId> {
        self.states
            .iter()
            .position(|s| s == name)
            .map(|i| StateId(i as u16))
    }

    pub fn symbols(&self) -> impl Iterator<Item = SymbolId> + '_ {
        (0..self.symbols.len() as u16).map(SymbolId)
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> + '_ {
        (0..self.states.len() as u16).map(StateId)
    }

    pub fn column(&self, state: StateId, symbol: SymbolId) -> Option<&[RuleEntry]> {
        self.table.get(&(state, symbol)).map(Vec::as_slice)
    }

    /// Parses each symbol of an input word. Single-character symbols may be
    /// written back to back (`1101`); longer names must be space-separated.
    pub fn parse_input(&self, input: &str) -> Result<Vec<SymbolId>> {
        if input.is_empty() {
            return Ok(Vec::new());
        }
        if input.contains(' ') {
            input
                .split_whitespace()
                .map(|tok| {
                    self.symbol_id(tok).ok_or(Error::Undeclared {
                        kind: "symbol",
                        token: tok.to_string(),
                        line: 0,
                    })
                })
                .collect()
        } else {
            input
                .chars()
                .map(|c| {
                    let tok = c.to_string();
                    self.symbol_id(&tok).ok_or(Error::Undeclared {
                        kind: "symbol",
                        token: tok,
                        line: 0,
                    })
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::parser::parse_machine;

    #[test]
    fn final_state_rules_are_rejected() {
        let text = "machine bad\nalphabet # 0 1\nstates q0 qf\ninitial q0\nfinal qf\ndirections LNR\n\
                    rule q0 0 -> 1 0 qf N\nrule q0 1 -> 1 1 qf N\nrule q0 # -> 1 # qf N\nrule qf 0 -> 1 0 qf N\n";
        let err = parse_machine(text).unwrap_err();
        assert!(err.to_string().contains("final state"), "{err}");
    }

    #[test]
    fn missing_column_is_rejected() {
        let text =
            "machine bad\nalphabet # 0 1\nstates q0 qf\ninitial q0\nfinal qf\ndirections LNR\n\
                    rule q0 0 -> 1 0 qf N\n";
        let err = parse_machine(text).unwrap_err();
        assert!(
            err.to_string().contains("missing transition column"),
            "{err}"
        );
    }

    #[test]
    fn undeclared_direction_is_rejected() {
        let text =
            "machine bad\nalphabet # 0 1\nstates q0 qf\ninitial q0\nfinal qf\ndirections LR\n\
                    rule q0 0 -> 1 0 qf N\nrule q0 1 -> 1 1 qf R\nrule q0 # -> 1 # qf R\n";
        let err = parse_machine(text).unwrap_err();
        assert!(err.to_string().contains("direction"), "{err}");
    }
}
