//! Configurations, superpositions and the induced time evolution.
//!
//! A configuration is a complete machine snapshot: finite-support tape, head
//! position and control state. A superposition is a unit-norm complex linear
//! combination of configurations with finite support.
//!
//! The final state is stationary: configurations in `q_f` are carried through
//! a step unchanged, as if every `(q_f, s)` column were the identity self-loop
//! `(s, q_f, N)`. This keeps post-halt evolution well-defined when a run is
//! given more steps than the machine needs.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::machine::{Machine, StateId, SymbolId};

/// Amplitudes below this threshold are dropped after each step so that the
/// support stays finite. Purely a simulation artifact.
pub const PRUNE_EPS: f64 = 1e-14;

/// Tolerance for norm checks on superpositions and marginals.
pub const NORM_TOL: f64 = 1e-9;

/// Finite-support tape. Blank cells are never stored, so equal tapes have
/// equal representations and configurations can be ordered and hashed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Tape(Vec<(i64, SymbolId)>);

impl Tape {
    pub fn from_word(word: &[SymbolId], start: i64) -> Tape {
        let mut cells = Vec::new();
        for (i, &sym) in word.iter().enumerate() {
            if sym != SymbolId(0) {
                cells.push((start + i as i64, sym));
            }
        }
        Tape(cells)
    }

    pub fn get(&self, cell: i64) -> SymbolId {
        match self.0.binary_search_by_key(&cell, |&(c, _)| c) {
            Ok(i) => self.0[i].1,
            Err(_) => SymbolId(0),
        }
    }

    pub fn with(&self, cell: i64, symbol: SymbolId) -> Tape {
        let mut cells = self.0.clone();
        match cells.binary_search_by_key(&cell, |&(c, _)| c) {
            Ok(i) => {
                if symbol == SymbolId(0) {
                    cells.remove(i);
                } else {
                    cells[i].1 = symbol;
                }
            }
            Err(i) => {
                if symbol != SymbolId(0) {
                    cells.insert(i, (cell, symbol));
                }
            }
        }
        Tape(cells)
    }

    pub fn support(&self) -> impl Iterator<Item = (i64, SymbolId)> + '_ {
        self.0.iter().copied()
    }
}

/// Complete machine snapshot. Ordering is canonical (state, head, tape) so
/// iteration over superpositions is deterministic.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Configuration {
    pub state: StateId,
    pub head: i64,
    pub tape: Tape,
}

impl Configuration {
    /// Standard starting configuration: input on cells `0..len`, head at 0,
    /// control in the initial state.
    pub fn initial(machine: &Machine, input: &[SymbolId]) -> Configuration {
        Configuration {
            state: machine.initial,
            head: 0,
            tape: Tape::from_word(input, 0),
        }
    }

    pub fn render(&self, machine: &Machine) -> String {
        let cells: Vec<String> = self
            .tape
            .support()
            .map(|(c, s)| format!("{c}:{}", machine.symbol_name(s)))
            .collect();
        format!(
            "state={} head={} tape[{}]",
            machine.state_name(self.state),
            self.head,
            cells.join(" ")
        )
    }
}

/// Finite complex linear combination of configurations.
#[derive(Debug, Clone)]
pub struct Superposition {
    terms: BTreeMap<Configuration, Complex64>,
    consumed: bool,
}

impl Superposition {
    pub fn basis(config: Configuration) -> Superposition {
        let mut terms = BTreeMap::new();
        terms.insert(config, Complex64::new(1.0, 0.0));
        Superposition {
            terms,
            consumed: false,
        }
    }

    pub fn from_terms(terms: BTreeMap<Configuration, Complex64>) -> Superposition {
        Superposition {
            terms,
            consumed: false,
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Configuration, Complex64)> {
        self.terms.iter().map(|(c, &a)| (c, a))
    }

    pub fn support_size(&self) -> usize {
        self.terms.len()
    }

    pub fn amplitude(&self, config: &Configuration) -> Complex64 {
        self.terms.get(config).copied().unwrap_or_default()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.terms.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn inner(&self, other: &Superposition) -> Complex64 {
        // Iterate the smaller support.
        let (small, big) = if self.terms.len() <= other.terms.len() {
            (self, other)
        } else {
            (other, self)
        };
        let mut acc = Complex64::default();
        for (c, a) in &small.terms {
            if let Some(b) = big.terms.get(c) {
                // <self, other> = sum conj(self) * other
                if std::ptr::eq(small, self) {
                    acc += a.conj() * b;
                } else {
                    acc += b.conj() * a;
                }
            }
        }
        acc
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    /// Marks the superposition as destroyed by a terminal measurement.
    /// Every later operation fails.
    pub fn consume(&mut self) {
        self.consumed = true;
    }

    fn check_live(&self) -> Result<()> {
        if self.consumed {
            Err(Error::Consumed)
        } else {
            Ok(())
        }
    }

    /// Probability distribution of the symbol at one tape cell.
    pub fn marginal(&self, cell: i64) -> Result<BTreeMap<SymbolId, f64>> {
        self.check_live()?;
        let mut dist: BTreeMap<SymbolId, f64> = BTreeMap::new();
        for (config, amp) in &self.terms {
            *dist.entry(config.tape.get(cell)).or_default() += amp.norm_sqr();
        }
        Ok(dist)
    }

    /// Projects onto the branch where `cell` holds `symbol` and renormalizes
    /// by a positive real factor (phases of surviving terms are untouched).
    pub fn condition(
        &self,
        cell: i64,
        symbol: SymbolId,
        machine: &Machine,
    ) -> Result<Superposition> {
        self.check_live()?;
        let mut terms = BTreeMap::new();
        let mut mass = 0.0;
        for (config, amp) in &self.terms {
            if config.tape.get(cell) == symbol {
                mass += amp.norm_sqr();
                terms.insert(config.clone(), *amp);
            }
        }
        if mass <= 0.0 {
            return Err(Error::ZeroProbability {
                symbol: machine.symbol_name(symbol).to_string(),
                cell,
            });
        }
        let scale = 1.0 / mass.sqrt();
        for amp in terms.values_mut() {
            *amp *= scale;
        }
        Ok(Superposition {
            terms,
            consumed: false,
        })
    }
}

impl fmt::Display for Superposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} configuration(s)", self.terms.len())
    }
}

impl Machine {
    /// Applies the time evolution operator once.
    pub fn step(&self, s: &Superposition) -> Result<Superposition> {
        if s.is_consumed() {
            return Err(Error::Consumed);
        }
        let mut out: BTreeMap<Configuration, Complex64> = BTreeMap::new();
        for (config, amp) in s.terms() {
            if config.state == self.final_state {
                *out.entry(config.clone()).or_default() += amp;
                continue;
            }
            let read = config.tape.get(config.head);
            let entries = self.column(config.state, read).ok_or_else(|| {
                Error::Machine(format!(
                    "no transition column ({}, {})",
                    self.state_name(config.state),
                    self.symbol_name(read)
                ))
            })?;
            for e in entries {
                let next = Configuration {
                    state: e.next,
                    head: config.head + e.dir.offset(),
                    tape: config.tape.with(config.head, e.write),
                };
                *out.entry(next).or_default() += amp * e.amplitude;
            }
        }
        out.retain(|_, a| a.norm() >= PRUNE_EPS);
        Ok(Superposition {
            terms: out,
            consumed: false,
        })
    }

    /// Writes `input` on cells `0..len`, puts the head at 0 in the initial
    /// state and applies `steps` evolution steps.
    pub fn run(&self, input: &[SymbolId], steps: u32) -> Result<Superposition> {
        let mut s = Superposition::basis(Configuration::initial(self, input));
        for _ in 0..steps {
            s = self.step(&s)?;
        }
        Ok(s)
    }

    /// First step count at which the whole superposition sits in the final
    /// state, searched up to `cap`.
    pub fn halting_steps(&self, input: &[SymbolId], cap: u32) -> Result<Option<u32>> {
        let mut s = Superposition::basis(Configuration::initial(self, input));
        for t in 0..=cap {
            if s.terms().all(|(c, _)| c.state == self.final_state) {
                return Ok(Some(t));
            }
            s = self.step(&s)?;
        }
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::parser::parse_machine;

    fn marginal_of(m: &Machine, s: &Superposition, cell: i64) -> BTreeMap<String, f64> {
        s.marginal(cell)
            .unwrap()
            .into_iter()
            .map(|(sym, p)| (m.symbol_name(sym).to_string(), p))
            .collect()
    }

    #[test]
    fn identity_machine_maps_basis_to_basis() {
        let m = parse_machine(fixtures::IDENTITY).unwrap();
        let input = m.parse_input("1").unwrap();
        let s = m.run(&input, 1).unwrap();
        assert_eq!(s.support_size(), 1);
        let (config, amp) = s.terms().next().unwrap();
        assert_eq!(config.state, m.final_state);
        assert_eq!(config.head, 0);
        assert_eq!(config.tape.get(0), m.symbol_id("1").unwrap());
        assert!((amp - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn hadamard_step_on_zero_and_one() {
        // Oracle: the 2x2 Hadamard matrix-vector product by hand.
        let m = parse_machine(fixtures::HADAMARD).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;

        let s = m.run(&m.parse_input("0").unwrap(), 1).unwrap();
        assert_eq!(s.support_size(), 2);
        let amps: Vec<Complex64> = s.terms().map(|(_, a)| a).collect();
        assert!(amps.iter().all(|a| (a.re - r).abs() < 1e-12 && a.im == 0.0));

        let s = m.run(&m.parse_input("1").unwrap(), 1).unwrap();
        let mut seen = Vec::new();
        for (config, amp) in s.terms() {
            seen.push((m.symbol_name(config.tape.get(0)).to_string(), amp.re));
        }
        seen.sort_by(|a, b| a.0.cmp(&b.0));
        assert_eq!(seen.len(), 2);
        assert_eq!(seen[0].0, "0");
        assert!((seen[0].1 - r).abs() < 1e-12);
        assert_eq!(seen[1].0, "1");
        assert!((seen[1].1 + r).abs() < 1e-12);
    }

    #[test]
    fn run_with_zero_steps_is_the_initial_configuration() {
        let m = parse_machine(fixtures::HADAMARD).unwrap();
        let s = m.run(&m.parse_input("0").unwrap(), 0).unwrap();
        assert_eq!(s.support_size(), 1);
        let (config, _) = s.terms().next().unwrap();
        assert_eq!(config.state, m.initial);
    }

    #[test]
    fn parity_of_1101_is_one() {
        // Oracle: classical parity of 1101, traced by hand.
        let m = parse_machine(fixtures::PARITY).unwrap();
        let input = m.parse_input("1101").unwrap();
        let s = m.run(&input, 6).unwrap();
        assert_eq!(s.support_size(), 1);
        let dist = marginal_of(&m, &s, 4);
        assert_eq!(dist.len(), 1);
        assert!((dist["1"] - 1.0).abs() < 1e-12);
        assert_eq!(m.halting_steps(&input, 20).unwrap(), Some(5));
    }

    #[test]
    fn marginal_sums_to_one_and_far_cells_are_blank() {
        let m = parse_machine(fixtures::HADAMARD).unwrap();
        let s = m.run(&m.parse_input("0").unwrap(), 1).unwrap();
        let dist = marginal_of(&m, &s, 0);
        assert!((dist["0"] - 0.5).abs() < 1e-12);
        assert!((dist["1"] - 0.5).abs() < 1e-12);
        let far = marginal_of(&m, &s, 100);
        assert!((far["#"] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn condition_projects_and_renormalizes() {
        let m = parse_machine(fixtures::HADAMARD).unwrap();
        let s = m.run(&m.parse_input("0").unwrap(), 1).unwrap();
        let one = m.symbol_id("1").unwrap();
        let c = s.condition(0, one, &m).unwrap();
        assert_eq!(c.support_size(), 1);
        assert!((c.norm_sqr() - 1.0).abs() < 1e-12);
        let dist = marginal_of(&m, &c, 0);
        assert!((dist["1"] - 1.0).abs() < 1e-12);

        // Conditioning on a point mass leaves the superposition unchanged.
        let c2 = c.condition(0, one, &m).unwrap();
        assert_eq!(c2.support_size(), 1);

        // Zero-probability branch is an error.
        let blank = m.symbol_id("#").unwrap();
        assert!(matches!(
            c.condition(0, blank, &m),
            Err(Error::ZeroProbability { .. })
        ));
    }

    #[test]
    fn condition_preserves_phases() {
        let m = parse_machine(fixtures::HADAMARD).unwrap();
        let s = m.run(&m.parse_input("1").unwrap(), 1).unwrap();
        let one = m.symbol_id("1").unwrap();
        let c = s.condition(0, one, &m).unwrap();
        let (_, amp) = c.terms().next().unwrap();
        // The surviving branch had amplitude -1/sqrt(2); the sign survives.
        assert!((amp.re + 1.0).abs() < 1e-12);
    }

    #[test]
    fn consumed_superpositions_reject_operations() {
        let m = parse_machine(fixtures::HADAMARD).unwrap();
        let mut s = m.run(&m.parse_input("0").unwrap(), 1).unwrap();
        s.consume();
        assert!(matches!(m.step(&s), Err(Error::Consumed)));
        assert!(matches!(s.marginal(0), Err(Error::Consumed)));
        assert!(matches!(
            s.condition(0, SymbolId(0), &m),
            Err(Error::Consumed)
        ));
    }

    #[test]
    fn norm_is_conserved_on_bundled_machines() {
        for text in [
            fixtures::HADAMARD,
            fixtures::IDENTITY,
            fixtures::PARITY,
            fixtures::BQP_DEMO,
            fixtures::ZQP_DEMO,
        ] {
            let m = parse_machine(text).unwrap();
            let input = m.parse_input("101").unwrap();
            for steps in [0u32, 1, 5, 20] {
                let s = m.run(&input, steps).unwrap();
                assert!(
                    (s.norm_sqr() - 1.0).abs() < 1e-8,
                    "machine {} at {} steps has norm^2 {}",
                    m.name,
                    steps,
                    s.norm_sqr()
                );
            }
        }
    }
}
