//! Phase-tagged machine descriptions.
//!
//! The constructive rewrites need more structure than a bare transition
//! table: which rule groups initialize cells, which states write results,
//! and which tape cells carry the halt and decision roles. A [`MachineIr`]
//! is a machine whose rules are tagged INIT / COMPUTE / WRITE, whose
//! terminal writer states are annotated with their outcome, and whose
//! special cells are declared.

use crate::error::{Error, Result};
use crate::machine::{Machine, StateId};
use crate::parser::{parse_machine_full, ParsedMachine, Phase, WriterKind};

#[derive(Debug, Clone)]
pub struct MachineIr {
    pub parsed: ParsedMachine,
    /// Step overhead recorded by a rewrite that produced this description.
    pub overhead_k: Option<u32>,
}

impl MachineIr {
    pub fn parse(text: &str) -> Result<MachineIr> {
        let parsed = parse_machine_full(text)?;
        let ir = MachineIr {
            parsed,
            overhead_k: None,
        };
        ir.check_contract()?;
        Ok(ir)
    }

    pub fn from_parsed(parsed: ParsedMachine) -> Result<MachineIr> {
        let ir = MachineIr {
            parsed,
            overhead_k: None,
        };
        ir.check_contract()?;
        Ok(ir)
    }

    pub fn machine(&self) -> &Machine {
        &self.parsed.machine
    }

    fn check_contract(&self) -> Result<()> {
        let m = self.machine();
        if self.parsed.phases.is_empty() {
            return Err(Error::Instance(format!(
                "machine `{}` carries no phase tags",
                m.name
            )));
        }
        for (state, _) in m.table.keys() {
            if !self.parsed.phases.contains_key(state) {
                return Err(Error::Instance(format!(
                    "state `{}` has rules outside any phase",
                    m.state_name(*state)
                )));
            }
        }
        for &state in self.parsed.writers.keys() {
            if self.parsed.phases.get(&state) != Some(&Phase::Write) {
                return Err(Error::Instance(format!(
                    "writer state `{}` is not in the WRITE phase",
                    m.state_name(state)
                )));
            }
        }
        if let Some(iw) = self.parsed.init_writer {
            if self.parsed.phases.get(&iw) != Some(&Phase::Init) {
                return Err(Error::Instance(format!(
                    "initwriter `{}` is not in the INIT phase",
                    m.state_name(iw)
                )));
            }
        }
        Ok(())
    }

    pub fn halted_writers(&self) -> Vec<(StateId, u8)> {
        self.parsed
            .writers
            .iter()
            .filter_map(|(&s, &k)| match k {
                WriterKind::Halted(o) => Some((s, o)),
                WriterKind::Unhalted => None,
            })
            .collect()
    }

    pub fn unhalted_writers(&self) -> Vec<StateId> {
        self.parsed
            .writers
            .iter()
            .filter_map(|(&s, &k)| match k {
                WriterKind::Unhalted => Some(s),
                WriterKind::Halted(_) => None,
            })
            .collect()
    }

    /// Lowers to a plain machine, re-running the well-formedness checks.
    pub fn lower(&self) -> Result<&Machine> {
        let report = self.machine().well_formedness();
        if !report.pass {
            return Err(Error::Transform(format!(
                "lowered machine fails well-formedness: {}",
                report.failures().join("; ")
            )));
        }
        Ok(self.machine())
    }
}
