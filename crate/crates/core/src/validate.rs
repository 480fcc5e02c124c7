//! Unitarity checks for transition tables.
//!
//! Two complementary checks are provided. [`Machine::well_formedness`]
//! verifies the local algebraic conditions a transition table must satisfy
//! for the induced time evolution to be an isometry on the pre-halt
//! configuration space:
//!
//! 1. every column has unit squared norm;
//! 2. distinct columns are orthogonal under the full (write, state, move)
//!    inner product;
//! 3. for column pairs and write-symbol pairs, the move-shifted overlap
//!    sums vanish for the direction pairs (R,N), (N,L) and (R,L), which is
//!    where computations at adjacent head positions could interfere.
//!
//! The final state is excluded: its columns are the implicit identity
//! self-loops of the stationarity convention, and a stationary state fed by
//! ordinary transitions can never satisfy the conditions above. The checks
//! therefore certify the evolution of computations that have not halted yet;
//! they are necessary conditions, not a full unitarity proof.
//!
//! [`Machine::unitarity_window`] complements them behaviorally: it evolves
//! random superpositions of initial-state configurations drawn inside a
//! bounded window and verifies that inner products are preserved.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::machine::{Direction, Machine, StateId, SymbolId};
use crate::state::{Configuration, Superposition, Tape, NORM_TOL};

/// Tolerance of the randomized isometry check.
pub const WINDOW_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct ColumnNorm {
    pub column: String,
    pub norm_sqr: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairOverlap {
    pub left: String,
    pub right: String,
    pub magnitude: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ShiftOverlap {
    pub left: String,
    pub right: String,
    pub writes: (String, String),
    pub directions: (String, String),
    pub magnitude: f64,
}

/// Report of the local well-formedness conditions.
#[derive(Debug, Clone, Serialize)]
pub struct WellFormedness {
    /// What this report certifies.
    pub label: &'static str,
    pub norms: Vec<ColumnNorm>,
    pub orthogonality_failures: Vec<PairOverlap>,
    pub shift_failures: Vec<ShiftOverlap>,
    pub pass: bool,
}

impl WellFormedness {
    /// Human-readable list of failing checks, naming the columns involved.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for n in &self.norms {
            if !n.ok {
                out.push(format!(
                    "column {} has squared norm {:.6}",
                    n.column, n.norm_sqr
                ));
            }
        }
        for p in &self.orthogonality_failures {
            out.push(format!(
                "columns {} and {} have overlap {}",
                p.left, p.right, p.magnitude
            ));
        }
        for s in &self.shift_failures {
            out.push(format!(
                "columns {} and {} interfere for writes ({}, {}) and moves ({}, {}): overlap {}",
                s.left,
                s.right,
                s.writes.0,
                s.writes.1,
                s.directions.0,
                s.directions.1,
                s.magnitude
            ));
        }
        out
    }
}

/// Verdict of the randomized isometry check.
#[derive(Debug, Clone, Serialize)]
pub struct WindowVerdict {
    pub pass: bool,
    pub worst_deviation: f64,
    pub radius: i64,
    pub steps: u32,
    pub samples: u32,
    pub seed: u64,
}

impl Machine {
    /// Checks the local unitarity conditions column by column.
    pub fn well_formedness(&self) -> WellFormedness {
        let columns: Vec<(StateId, SymbolId)> = self.table.keys().copied().collect();
        let name = |k: &(StateId, SymbolId)| {
            format!("({}, {})", self.state_name(k.0), self.symbol_name(k.1))
        };

        let mut norms = Vec::new();
        for key in &columns {
            let norm_sqr: f64 = self.table[key].iter().map(|e| e.amplitude.norm_sqr()).sum();
            norms.push(ColumnNorm {
                column: name(key),
                norm_sqr,
                ok: (norm_sqr - 1.0).abs() <= NORM_TOL,
            });
        }

        let mut orthogonality_failures = Vec::new();
        for (i, a) in columns.iter().enumerate() {
            for b in &columns[i + 1..] {
                let mut acc = Complex64::default();
                for ea in &self.table[a] {
                    for eb in &self.table[b] {
                        if (ea.write, ea.next, ea.dir) == (eb.write, eb.next, eb.dir) {
                            acc += ea.amplitude.conj() * eb.amplitude;
                        }
                    }
                }
                if acc.norm() > NORM_TOL {
                    orthogonality_failures.push(PairOverlap {
                        left: name(a),
                        right: name(b),
                        magnitude: acc.norm(),
                    });
                }
            }
        }

        // Shifted overlaps: sum over the next state of products of entries
        // writing fixed symbols with the direction pairs that can land two
        // adjacent computations on the same configuration.
        let dir_pairs = [
            (Direction::Right, Direction::Stay),
            (Direction::Stay, Direction::Left),
            (Direction::Right, Direction::Left),
        ];
        let mut shift_failures = Vec::new();
        for a in &columns {
            for b in &columns {
                for (d1, d2) in dir_pairs {
                    for t1 in self.symbols() {
                        for t2 in self.symbols() {
                            let mut acc = Complex64::default();
                            for ea in self.table[a]
                                .iter()
                                .filter(|e| e.dir == d1 && e.write == t1)
                            {
                                for eb in self.table[b]
                                    .iter()
                                    .filter(|e| e.dir == d2 && e.write == t2)
                                {
                                    if ea.next == eb.next {
                                        acc += ea.amplitude.conj() * eb.amplitude;
                                    }
                                }
                            }
                            if acc.norm() > NORM_TOL {
                                shift_failures.push(ShiftOverlap {
                                    left: name(a),
                                    right: name(b),
                                    writes: (
                                        self.symbol_name(t1).to_string(),
                                        self.symbol_name(t2).to_string(),
                                    ),
                                    directions: (d1.to_string(), d2.to_string()),
                                    magnitude: acc.norm(),
                                });
                            }
                        }
                    }
                }
            }
        }

        let pass = norms.iter().all(|n| n.ok)
            && orthogonality_failures.is_empty()
            && shift_failures.is_empty();
        WellFormedness {
            label: "necessary local conditions; final-state columns are implicit identity self-loops and excluded",
            norms,
            orthogonality_failures,
            shift_failures,
            pass,
        }
    }

    /// Randomized isometry check on a bounded window.
    ///
    /// Draws random superpositions of initial-state configurations whose head
    /// and tape support lie inside `[-radius, radius]`, evolves them `steps`
    /// times and verifies that pairwise inner products are preserved within
    /// [`WINDOW_TOL`].
    pub fn unitarity_window(
        &self,
        radius: i64,
        steps: u32,
        samples: u32,
        seed: u64,
    ) -> Result<WindowVerdict> {
        if radius < steps as i64 {
            return Err(Error::WindowTooSmall { radius, steps });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;

        for _ in 0..samples {
            let head = rng.gen_range(-radius..radius.max(-radius + 1));
            let mut base = Tape::default();
            for cell in -radius..=radius {
                if rng.gen_bool(0.5) {
                    let sym = SymbolId(rng.gen_range(1..self.symbol_count() as u16));
                    base = base.with(cell, sym);
                }
            }
            // All symbol pairs at the head cell and its right neighbour, in
            // the initial control state. Aligned pairs like these are where
            // norm and orthogonality defects show as interference.
            let mut cluster = Vec::new();
            for s1 in self.symbols() {
                for s2 in self.symbols() {
                    cluster.push(Configuration {
                        state: self.initial,
                        head,
                        tape: base.with(head, s1).with(head + 1, s2),
                    });
                }
            }
            let mut phi = random_vector(&cluster, &mut rng);
            let mut psi = random_vector(&cluster, &mut rng);
            let expected = phi.inner(&psi);

            for _ in 0..steps {
                phi = self.step(&phi)?;
                psi = self.step(&psi)?;
                worst = worst
                    .max((phi.norm_sqr() - 1.0).abs())
                    .max((psi.norm_sqr() - 1.0).abs())
                    .max((phi.inner(&psi) - expected).norm());
            }
        }

        Ok(WindowVerdict {
            pass: worst < WINDOW_TOL,
            worst_deviation: worst,
            radius,
            steps,
            samples,
            seed,
        })
    }
}

fn random_vector(cluster: &[Configuration], rng: &mut ChaCha8Rng) -> Superposition {
    use rand_distr::{Distribution, StandardNormal};
    let mut terms = std::collections::BTreeMap::new();
    let mut norm_sqr = 0.0;
    for config in cluster {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        let amp = Complex64::new(re, im);
        norm_sqr += amp.norm_sqr();
        terms.insert(config.clone(), amp);
    }
    let scale = 1.0 / norm_sqr.sqrt();
    let mut s = Superposition::from_terms(terms);
    s = Superposition::from_terms(s.terms().map(|(c, a)| (c.clone(), a * scale)).collect());
    s
}

#[cfg(test)]
mod tests {
    use crate::fixtures;
    use crate::parser::parse_machine;

    #[test]
    fn bundled_machines_are_well_formed() {
        for name in [
            "hadamard",
            "identity",
            "parity",
            "bqp-demo",
            "zqp-demo",
            "zqp-demo-noinit",
        ] {
            let text = fixtures::all().iter().find(|(n, _)| *n == name).unwrap().1;
            let m = parse_machine(text).unwrap();
            let report = m.well_formedness();
            assert!(report.pass, "{name} failed: {:?}", report.failures());
        }
    }

    #[test]
    fn norm_085_column_is_named() {
        let m = parse_machine(fixtures::NONUNITARY).unwrap();
        let report = m.well_formedness();
        assert!(!report.pass);
        let failures = report.failures().join("\n");
        assert!(failures.contains("(q0, 0)"), "{failures}");
        assert!(failures.contains("0.85"), "{failures}");
        // The companion column was chosen orthogonal, so the norm defect is
        // the only failure.
        assert!(report.orthogonality_failures.is_empty(), "{failures}");
    }

    #[test]
    fn duplicate_columns_fail_orthogonality() {
        let m = parse_machine(fixtures::DUPCOL).unwrap();
        let report = m.well_formedness();
        assert!(!report.pass);
        assert_eq!(report.orthogonality_failures.len(), 1);
        let f = &report.orthogonality_failures[0];
        assert!((f.magnitude - 1.0).abs() < 1e-12);
        assert!(f.left.contains("q0") && f.right.contains("q0"));
        assert!(report.norms.iter().all(|n| n.ok));
    }

    #[test]
    fn unbalanced_column_norm_is_computed() {
        let text = "machine bad\nalphabet # 0 1\nstates q0 qf\ninitial q0\nfinal qf\ndirections LNR\n\
                    rule q0 0 -> 3/5 0 qf N ; 7/10 1 qf N\nrule q0 1 -> 7/sqrt(85) 0 qf N ; -6/sqrt(85) 1 qf N\nrule q0 # -> 1 # qf N\n";
        let m = parse_machine(text).unwrap();
        let report = m.well_formedness();
        let bad = report.norms.iter().find(|n| !n.ok).unwrap();
        assert!((bad.norm_sqr - 0.85).abs() < 1e-12);
    }

    #[test]
    fn window_accepts_bundled_machines() {
        for (name, text) in [
            ("hadamard", fixtures::HADAMARD),
            ("identity", fixtures::IDENTITY),
            ("parity", fixtures::PARITY),
        ] {
            let m = parse_machine(text).unwrap();
            let v = m.unitarity_window(4, 2, 32, 7).unwrap();
            assert!(v.pass, "{name}: worst {}", v.worst_deviation);
            assert!(
                v.worst_deviation < 1e-9,
                "{name}: worst {}",
                v.worst_deviation
            );
        }
    }

    #[test]
    fn window_accepts_phased_machines_over_their_init() {
        for text in [fixtures::ZQP_DEMO, fixtures::ZQP_DEMO_NOINIT] {
            let m = parse_machine(text).unwrap();
            let v = m.unitarity_window(6, 4, 16, 11).unwrap();
            assert!(v.pass, "worst {}", v.worst_deviation);
        }
    }

    #[test]
    fn window_rejects_norm_09_column() {
        let text =
            "machine bad\nalphabet # 0 1\nstates q0 qf\ninitial q0\nfinal qf\ndirections LNR\n\
                    rule q0 0 -> 9/10 0 qf N\nrule q0 1 -> 1 1 qf N\nrule q0 # -> 1 # qf N\n";
        let m = parse_machine(text).unwrap();
        let v = m.unitarity_window(4, 2, 32, 7).unwrap();
        assert!(!v.pass, "worst {}", v.worst_deviation);
    }

    #[test]
    fn window_rejects_seeded_fixtures() {
        for text in [fixtures::NONUNITARY, fixtures::DUPCOL] {
            let m = parse_machine(text).unwrap();
            let v = m.unitarity_window(4, 2, 32, 7).unwrap();
            assert!(
                !v.pass,
                "machine {} passed with worst {}",
                m.name, v.worst_deviation
            );
        }
    }

    #[test]
    fn window_requires_enough_radius() {
        let m = parse_machine(fixtures::HADAMARD).unwrap();
        assert!(m.unitarity_window(1, 2, 4, 7).is_err());
    }
}
