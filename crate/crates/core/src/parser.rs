//! Line-oriented machine file format.
//!
//! ```text
//! machine <name>
//! alphabet # 0 1 ...
//! states q0 ... qf
//! initial q0
//! final qf
//! directions LR|LNR
//! cell <role> <index>                                  (optional)
//! phase INIT|COMPUTE|WRITE                             (optional section header)
//! initwriter <state>                                   (optional, phased machines)
//! writer <state> halted <0|1>                          (optional, phased machines)
//! writer <state> unhalted
//! rule <state> <symbol> -> <ampl> <symbol> <state> <dir> ; <ampl> <symbol> <state> <dir>
//! ```
//!
//! `#` at the start of a line begins a comment. Rules for the final state are
//! rejected: the final state idles in place by convention.

use std::collections::BTreeMap;

use crate::amplitude::parse_amplitude;
use crate::error::{Error, Result};
use crate::machine::{
    Direction, DirectionSet, Machine, RuleEntry, StateId, SymbolId, TransitionTable,
};

/// Rule-group tag of a phased machine description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
pub enum Phase {
    Init,
    Compute,
    Write,
}

impl Phase {
    pub fn parse(token: &str) -> Option<Phase> {
        match token {
            "INIT" => Some(Phase::Init),
            "COMPUTE" => Some(Phase::Compute),
            "WRITE" => Some(Phase::Write),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Init => "INIT",
            Phase::Compute => "COMPUTE",
            Phase::Write => "WRITE",
        }
    }
}

/// Outcome annotation for a terminal writer state of a phased machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriterKind {
    /// Writes the decision result (0 or 1) on the halted branch.
    Halted(u8),
    /// Carries an unhalted branch; never writes a result.
    Unhalted,
}

/// Parse result carrying both the machine and any phased-IR annotations.
#[derive(Debug, Clone)]
pub struct ParsedMachine {
    pub machine: Machine,
    pub phases: BTreeMap<StateId, Phase>,
    pub writers: BTreeMap<StateId, WriterKind>,
    pub init_writer: Option<StateId>,
}

pub fn parse_machine(text: &str) -> Result<Machine> {
    Ok(parse_machine_full(text)?.machine)
}

pub fn parse_machine_full(text: &str) -> Result<ParsedMachine> {
    let mut name = None;
    let mut symbols: Option<Vec<String>> = None;
    let mut states: Option<Vec<String>> = None;
    let mut initial_name = None;
    let mut final_name = None;
    let mut directions = None;
    let mut cells = BTreeMap::new();
    let mut raw_rules: Vec<(usize, String)> = Vec::new();
    let mut current_phase: Option<Phase> = None;
    let mut phase_of_rule: Vec<Option<Phase>> = Vec::new();
    let mut raw_writers: Vec<(usize, String, Option<u8>)> = Vec::new();
    let mut raw_init_writer: Option<(usize, String)> = None;

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (keyword, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        let syntax = |msg: &str| Error::Syntax {
            line: lineno,
            col: 1,
            msg: msg.to_string(),
        };
        match keyword {
            "machine" => name = Some(rest.to_string()),
            "alphabet" => symbols = Some(rest.split_whitespace().map(str::to_string).collect()),
            "states" => states = Some(rest.split_whitespace().map(str::to_string).collect()),
            "initial" => initial_name = Some(rest.to_string()),
            "final" => final_name = Some(rest.to_string()),
            "directions" => {
                directions = Some(match rest {
                    "LR" => DirectionSet::LeftRight,
                    "LNR" => DirectionSet::LeftStayRight,
                    _ => return Err(syntax("directions must be LR or LNR")),
                })
            }
            "cell" => {
                let mut it = rest.split_whitespace();
                let role = it
                    .next()
                    .ok_or_else(|| syntax("cell needs a role and an index"))?;
                let index: i64 = it
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| syntax("cell index must be an integer"))?;
                cells.insert(role.to_string(), index);
            }
            "phase" => {
                current_phase = Some(
                    Phase::parse(rest)
                        .ok_or_else(|| syntax("phase must be INIT, COMPUTE or WRITE"))?,
                );
            }
            "initwriter" => raw_init_writer = Some((lineno, rest.to_string())),
            "writer" => {
                let mut it = rest.split_whitespace();
                let state = it
                    .next()
                    .ok_or_else(|| syntax("writer needs a state"))?
                    .to_string();
                match it.next() {
                    Some("halted") => {
                        let outcome = match it.next() {
                            Some("0") => 0,
                            Some("1") => 1,
                            _ => return Err(syntax("halted writer needs outcome 0 or 1")),
                        };
                        raw_writers.push((lineno, state, Some(outcome)));
                    }
                    Some("unhalted") => raw_writers.push((lineno, state, None)),
                    _ => return Err(syntax("writer must be `halted 0|1` or `unhalted`")),
                }
            }
            "rule" => {
                raw_rules.push((lineno, rest.to_string()));
                phase_of_rule.push(current_phase);
            }
            _ => return Err(syntax(&format!("unknown directive `{keyword}`"))),
        }
    }

    let name = name.ok_or(Error::Machine("missing machine name".into()))?;
    let symbols = symbols.ok_or(Error::Machine("missing alphabet".into()))?;
    let states = states.ok_or(Error::Machine("missing states".into()))?;
    let initial_name = initial_name.ok_or(Error::Machine("missing initial state".into()))?;
    let final_name = final_name.ok_or(Error::Machine("missing final state".into()))?;
    let directions = directions.ok_or(Error::Machine("missing directions declaration".into()))?;

    let lookup_state = |tok: &str, line: usize| -> Result<StateId> {
        states
            .iter()
            .position(|s| s == tok)
            .map(|i| StateId(i as u16))
            .ok_or(Error::Undeclared {
                kind: "state",
                token: tok.to_string(),
                line,
            })
    };
    let lookup_symbol = |tok: &str, line: usize| -> Result<SymbolId> {
        symbols
            .iter()
            .position(|s| s == tok)
            .map(|i| SymbolId(i as u16))
            .ok_or(Error::Undeclared {
                kind: "symbol",
                token: tok.to_string(),
                line,
            })
    };

    let initial = lookup_state(&initial_name, 0)?;
    let final_state = lookup_state(&final_name, 0)?;

    let mut table: TransitionTable = BTreeMap::new();
    let mut phases: BTreeMap<StateId, Phase> = BTreeMap::new();

    for ((lineno, body), phase) in raw_rules.iter().zip(&phase_of_rule) {
        let lineno = *lineno;
        let syntax = |msg: String| Error::Syntax {
            line: lineno,
            col: 1,
            msg,
        };
        let (head, targets) = body
            .split_once("->")
            .ok_or_else(|| syntax("rule needs `->` between source and targets".into()))?;
        let mut head_it = head.split_whitespace();
        let state_tok = head_it
            .next()
            .ok_or_else(|| syntax("rule needs a source state".into()))?;
        let symbol_tok = head_it
            .next()
            .ok_or_else(|| syntax("rule needs a read symbol".into()))?;
        if head_it.next().is_some() {
            return Err(syntax("rule source must be `<state> <symbol>`".into()));
        }
        let state = lookup_state(state_tok, lineno)?;
        let symbol = lookup_symbol(symbol_tok, lineno)?;

        let mut entries = Vec::new();
        for target in targets.split(';') {
            let tokens: Vec<&str> = target.split_whitespace().collect();
            if tokens.len() < 4 {
                return Err(syntax(format!(
                    "target `{}` needs `<ampl> <symbol> <state> <dir>`",
                    target.trim()
                )));
            }
            let (ampl_tokens, tail) = tokens.split_at(tokens.len() - 3);
            let amplitude = parse_amplitude(&ampl_tokens.join(" ")).map_err(|e| match e {
                Error::Amplitude { pos, msg } => Error::Syntax {
                    line: lineno,
                    col: pos + 1,
                    msg,
                },
                other => other,
            })?;
            let write = lookup_symbol(tail[0], lineno)?;
            let next = lookup_state(tail[1], lineno)?;
            let dir = Direction::parse(tail[2])
                .ok_or_else(|| syntax(format!("unknown direction `{}`", tail[2])))?;
            if entries
                .iter()
                .any(|e: &RuleEntry| e.write == write && e.next == next && e.dir == dir)
            {
                return Err(Error::DuplicateRule {
                    target: format!(
                        "({state_tok}, {symbol_tok}) -> ({}, {}, {dir})",
                        symbols[write.0 as usize], states[next.0 as usize]
                    ),
                    line: lineno,
                });
            }
            entries.push(RuleEntry {
                amplitude,
                write,
                next,
                dir,
            });
        }

        if table.insert((state, symbol), entries).is_some() {
            return Err(syntax(format!(
                "column ({state_tok}, {symbol_tok}) defined twice"
            )));
        }
        if let Some(phase) = phase {
            if let Some(prev) = phases.insert(state, *phase) {
                if prev != *phase {
                    return Err(syntax(format!(
                        "state `{state_tok}` has rules in phases {} and {}",
                        prev.name(),
                        phase.name()
                    )));
                }
            }
        }
    }

    let mut writers = BTreeMap::new();
    for (line, state_tok, outcome) in raw_writers {
        let id = lookup_state(&state_tok, line)?;
        let kind = match outcome {
            Some(o) => WriterKind::Halted(o),
            None => WriterKind::Unhalted,
        };
        writers.insert(id, kind);
    }
    let init_writer = match raw_init_writer {
        Some((line, tok)) => Some(lookup_state(&tok, line)?),
        None => None,
    };

    let machine = Machine::new(
        name,
        symbols,
        states,
        initial,
        final_state,
        directions,
        table,
        cells,
    )?;

    Ok(ParsedMachine {
        machine,
        phases,
        writers,
        init_writer,
    })
}

/// Renders a machine back to the file format, preserving IR annotations.
pub fn render_machine(parsed: &ParsedMachine) -> String {
    let m = &parsed.machine;
    let mut out = String::new();
    out.push_str(&format!("machine {}\n", m.name));
    let alphabet: Vec<&str> = m.symbols().map(|s| m.symbol_name(s)).collect();
    out.push_str(&format!("alphabet {}\n", alphabet.join(" ")));
    let states: Vec<&str> = m.states().map(|s| m.state_name(s)).collect();
    out.push_str(&format!("states {}\n", states.join(" ")));
    out.push_str(&format!("initial {}\n", m.state_name(m.initial)));
    out.push_str(&format!("final {}\n", m.state_name(m.final_state)));
    out.push_str(&format!("directions {}\n", m.directions));
    for (role, index) in &m.cells {
        out.push_str(&format!("cell {role} {index}\n"));
    }
    for (state, kind) in &parsed.writers {
        match kind {
            WriterKind::Halted(o) => {
                out.push_str(&format!("writer {} halted {o}\n", m.state_name(*state)))
            }
            WriterKind::Unhalted => {
                out.push_str(&format!("writer {} unhalted\n", m.state_name(*state)))
            }
        }
    }
    if let Some(iw) = parsed.init_writer {
        out.push_str(&format!("initwriter {}\n", m.state_name(iw)));
    }

    let mut by_phase: BTreeMap<Option<Phase>, Vec<(StateId, SymbolId)>> = BTreeMap::new();
    for key in m.table.keys() {
        by_phase
            .entry(parsed.phases.get(&key.0).copied())
            .or_default()
            .push(*key);
    }
    for (phase, keys) in by_phase {
        if let Some(phase) = phase {
            out.push_str(&format!("phase {}\n", phase.name()));
        }
        for (state, symbol) in keys {
            let entries = m.column(state, symbol).unwrap();
            let targets: Vec<String> = entries
                .iter()
                .map(|e| {
                    format!(
                        "{} {} {} {}",
                        format_amplitude(e.amplitude),
                        m.symbol_name(e.write),
                        m.state_name(e.next),
                        e.dir
                    )
                })
                .collect();
            out.push_str(&format!(
                "rule {} {} -> {}\n",
                m.state_name(state),
                m.symbol_name(symbol),
                targets.join(" ; ")
            ));
        }
    }
    out
}

/// Formats an amplitude value as a grammar expression. Exact for the values
/// the bundled machines use; falls back to a rational approximation of the
/// parts otherwise.
fn format_amplitude(v: num_complex::Complex64) -> String {
    fn real_part(x: f64) -> Option<String> {
        if x == 0.0 {
            return Some("0".into());
        }
        // small rationals p/q with q <= 64
        for q in 1u64..=64 {
            let p = x * q as f64;
            if (p - p.round()).abs() < 1e-12 && p.round() != 0.0 {
                let p = p.round() as i64;
                return Some(if q == 1 {
                    format!("{p}")
                } else {
                    format!("{p}/{q}")
                });
            }
        }
        // p*sqrt(k)/q for small k, q
        for k in 2u64..=8 {
            for q in 1u64..=64 {
                let p = x * q as f64 / (k as f64).sqrt();
                if (p - p.round()).abs() < 1e-9 && p.round() != 0.0 {
                    let p = p.round() as i64;
                    let num = if p == 1 {
                        format!("sqrt({k})")
                    } else {
                        format!("{p}*sqrt({k})")
                    };
                    return Some(if q == 1 { num } else { format!("{num}/{q}") });
                }
            }
        }
        None
    }
    match (real_part(v.re), v.im == 0.0) {
        (Some(re), true) => re,
        _ => {
            let re = real_part(v.re).unwrap_or_else(|| {
                format!(
                    "{}/{}",
                    (v.re * (1u64 << 48) as f64).round() as i64,
                    1u64 << 48
                )
            });
            if v.im == 0.0 {
                re
            } else {
                let im = real_part(v.im).unwrap_or_else(|| {
                    format!(
                        "{}/{}",
                        (v.im * (1u64 << 48) as f64).round() as i64,
                        1u64 << 48
                    )
                });
                format!("{re} + ({im})i")
            }
        }
    }
}
