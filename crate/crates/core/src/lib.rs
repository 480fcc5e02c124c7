//! Simulation toolkit for quantum Turing machines with bulk-ensemble
//! measurement semantics.
//!
//! The crate simulates three machine models that share one transition-table
//! formalism and differ in how a designated tape cell is read out:
//!
//! - plain projective observation, full or of a single cell;
//! - non-collapsing bulk measurement that returns the cell's ±1 expectation
//!   within a bounded error `theta`;
//! - collapsing `(epsilon, theta)`-measurement that returns the expectation
//!   within `theta` except with probability `epsilon`, exact on eigenstates,
//!   and consumes the superposition.
//!
//! The third model is realized operationally as an ensemble of independent
//! machine runs whose ±1 outcomes are averaged; [`statistics`] carries the
//! de Moivre–Laplace calculator connecting the ensemble size to `(epsilon,
//! theta)`, and [`complexity`] the acceptance checkers for the polynomial-time
//! class definitions built on each readout model.

pub mod amplitude;
pub mod complexity;
pub mod ensemble;
pub mod error;
pub mod fixtures;
pub mod machine;
pub mod measurement;
pub mod parser;
pub mod state;
pub mod statistics;
pub mod validate;

pub use amplitude::{parse_amplitude, Amplitude};
pub use complexity::{
    check, derive_bbqp_params, transform_eqp_to_ebqp_star, transform_zqp_to_zbqp_star, CheckMode,
    CheckParams, ClassId, Instance, MachineIr, StepBudget, Verdict,
};
pub use ensemble::{
    empirical_error_rate, ensemble_measure, realize_mbqtm, EnsembleConfig, EnsembleReport,
    ErrorScale,
};
pub use error::{Error, Result};
pub use machine::{Direction, DirectionSet, Machine, RuleEntry, StateId, SymbolId};
pub use measurement::{
    bulk_measure, et_measure, observe_cell, observe_full, qubit_marginal, MeasurementOutcome,
    NoiseKind, NoiseModel, QubitMarginal,
};
pub use parser::{parse_machine, parse_machine_full, ParsedMachine, Phase, WriterKind};
pub use state::{Configuration, Superposition, Tape};
pub use statistics::{
    achieved_epsilon, achieved_theta, audit_table1, build_table, normal_cdf, normal_quantile,
    required_n, TailConvention,
};
pub use validate::{WellFormedness, WindowVerdict};
