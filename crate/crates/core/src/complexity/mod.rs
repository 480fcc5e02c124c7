//! Acceptance-criterion checkers for the polynomial-time class definitions.
//!
//! A checker certifies evidence about one concrete input, not language
//! membership: membership quantifies over all inputs and polynomials and is
//! not decidable from finitely many runs. [`Verdict::in_class_evidence`]
//! says whether the run exhibited the accepting (or rejecting) behaviour
//! the class definition demands on this input.
//!
//! Exact mode evaluates the class thresholds on analytically computed
//! marginals with a small guard band. Empirical mode replays the protocol
//! with seeded randomness: projective observations for the plain classes,
//! bulk or `(epsilon, theta)` readings (optionally with adversarial in-band
//! noise) or full ensemble realizations for the bulk classes.

pub mod ir;
pub mod transform;

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ensemble::{ensemble_measure, EnsembleConfig, ErrorScale};
use crate::error::{Error, Result};
use crate::machine::Machine;
use crate::measurement::{
    et_measure_with_noise, observe_cell, qubit_marginal, NoiseKind, NoiseModel, QubitMarginal,
};
use crate::parser::parse_machine_full;
use crate::state::Superposition;
use crate::statistics::{achieved_epsilon, required_n, TailConvention};

pub use ir::MachineIr;
pub use transform::transform_zqp_to_zbqp_star;

/// Comparison guard band for the strict class thresholds.
pub const GUARD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum ClassId {
    #[serde(rename = "EQP")]
    Eqp,
    #[serde(rename = "EBQP")]
    Ebqp,
    #[serde(rename = "EBQP*")]
    EbqpStar,
    #[serde(rename = "BQP")]
    Bqp,
    #[serde(rename = "BBQP")]
    Bbqp,
    #[serde(rename = "BBQP*")]
    BbqpStar,
    #[serde(rename = "ZQP")]
    Zqp,
    #[serde(rename = "ZBQP")]
    Zbqp,
    #[serde(rename = "ZBQP*")]
    ZbqpStar,
}

impl ClassId {
    pub fn parse(token: &str) -> Option<ClassId> {
        Some(match token {
            "EQP" => ClassId::Eqp,
            "EBQP" => ClassId::Ebqp,
            "EBQP*" => ClassId::EbqpStar,
            "BQP" => ClassId::Bqp,
            "BBQP" => ClassId::Bbqp,
            "BBQP*" => ClassId::BbqpStar,
            "ZQP" => ClassId::Zqp,
            "ZBQP" => ClassId::Zbqp,
            "ZBQP*" => ClassId::ZbqpStar,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassId::Eqp => "EQP",
            ClassId::Ebqp => "EBQP",
            ClassId::EbqpStar => "EBQP*",
            ClassId::Bqp => "BQP",
            ClassId::Bbqp => "BBQP",
            ClassId::BbqpStar => "BBQP*",
            ClassId::Zqp => "ZQP",
            ClassId::Zbqp => "ZBQP",
            ClassId::ZbqpStar => "ZBQP*",
        }
    }

    /// Tape-cell roles the class reads.
    pub fn required_cells(self) -> &'static [&'static str] {
        match self {
            ClassId::Eqp
            | ClassId::Ebqp
            | ClassId::EbqpStar
            | ClassId::Bqp
            | ClassId::Bbqp
            | ClassId::BbqpStar => &["acceptance"],
            ClassId::Zqp => &["halt", "decision"],
            ClassId::Zbqp | ClassId::ZbqpStar => &["halt", "accept", "reject"],
        }
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Step budget: an explicit count, or a polynomial in the input length
/// given as a coefficient list `c0 + c1 l + c2 l^2 + ...`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum StepBudget {
    Steps(u32),
    Poly(Vec<u64>),
}

impl StepBudget {
    pub fn eval(&self, input_len: usize) -> Result<u32> {
        let value = match self {
            StepBudget::Steps(t) => u64::from(*t),
            StepBudget::Poly(coeffs) => {
                let l = input_len as u64;
                let mut acc = 0u64;
                let mut power = 1u64;
                for &c in coeffs {
                    acc = acc.saturating_add(c.saturating_mul(power));
                    power = power.saturating_mul(l).min(1 << 40);
                }
                acc
            }
        };
        if value == 0 {
            return Err(Error::Parameter("step budget evaluates to 0".into()));
        }
        u32::try_from(value).map_err(|_| Error::Parameter(format!("step budget {value} overflows")))
    }
}

/// One machine plus everything a checker needs: class, budget, input and
/// the role map of the cells the class reads.
#[derive(Debug, Clone)]
pub struct Instance {
    pub class: ClassId,
    pub machine_ref: String,
    pub machine: Machine,
    pub budget: StepBudget,
    pub input: String,
    pub cells: BTreeMap<String, i64>,
}

impl Instance {
    /// Parses the instance file format:
    ///
    /// ```text
    /// class BBQP*
    /// machine bqp-demo.mqt
    /// budget poly 2 0 1        # or: budget steps 12
    /// cell acceptance 0
    /// input 101
    /// ```
    ///
    /// `load` resolves the machine reference to machine file text.
    pub fn parse(text: &str, load: impl FnOnce(&str) -> Result<String>) -> Result<Instance> {
        let mut class = None;
        let mut machine_ref = None;
        let mut budget = None;
        let mut input = None;
        let mut cells = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (keyword, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            let syntax = |msg: String| Error::Syntax {
                line: lineno,
                col: 1,
                msg,
            };
            match keyword {
                "class" => {
                    class = Some(
                        ClassId::parse(rest)
                            .ok_or_else(|| syntax(format!("unknown class `{rest}`")))?,
                    )
                }
                "machine" => machine_ref = Some(rest.to_string()),
                "budget" => {
                    let mut it = rest.split_whitespace();
                    budget = Some(match it.next() {
                        Some("steps") => StepBudget::Steps(
                            it.next()
                                .and_then(|t| t.parse().ok())
                                .ok_or_else(|| syntax("budget steps needs an integer".into()))?,
                        ),
                        Some("poly") => {
                            let coeffs: Vec<u64> = it
                                .map(|t| t.parse::<u64>())
                                .collect::<std::result::Result<_, _>>()
                                .map_err(|_| {
                                    syntax("budget poly needs integer coefficients".into())
                                })?;
                            if coeffs.is_empty() {
                                return Err(syntax(
                                    "budget poly needs at least one coefficient".into(),
                                ));
                            }
                            StepBudget::Poly(coeffs)
                        }
                        _ => {
                            return Err(syntax(
                                "budget must be `steps <t>` or `poly <c0> <c1> ...`".into(),
                            ))
                        }
                    });
                }
                "cell" => {
                    let mut it = rest.split_whitespace();
                    let role = it
                        .next()
                        .ok_or_else(|| syntax("cell needs a role".into()))?;
                    let index: i64 = it
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| syntax("cell needs an integer index".into()))?;
                    cells.insert(role.to_string(), index);
                }
                "input" => input = Some(rest.to_string()),
                _ => return Err(syntax(format!("unknown directive `{keyword}`"))),
            }
        }
        let class = class.ok_or(Error::Instance("missing class".into()))?;
        let machine_ref = machine_ref.ok_or(Error::Instance("missing machine reference".into()))?;
        let budget = budget.ok_or(Error::Instance("missing budget".into()))?;
        let input = input.ok_or(Error::Instance("missing input".into()))?;
        let machine = parse_machine_full(&load(&machine_ref)?)?.machine;

        // Instance cells override machine-declared cells.
        let mut merged = machine.cells.clone();
        merged.extend(cells);
        let inst = Instance {
            class,
            machine_ref,
            machine,
            budget,
            input,
            cells: merged,
        };
        inst.check_cells()?;
        Ok(inst)
    }

    /// Builds an instance over an already-parsed machine. `extra_cells`
    /// add to (or override) the machine's own role declarations.
    pub fn from_machine(
        class: ClassId,
        machine: Machine,
        budget: StepBudget,
        input: &str,
        extra_cells: &[(&str, i64)],
    ) -> Result<Instance> {
        let mut cells = machine.cells.clone();
        for (role, index) in extra_cells {
            cells.insert(role.to_string(), *index);
        }
        let inst = Instance {
            class,
            machine_ref: machine.name.clone(),
            machine,
            budget,
            input: input.to_string(),
            cells,
        };
        inst.check_cells()?;
        Ok(inst)
    }

    fn check_cells(&self) -> Result<()> {
        let mut seen = Vec::new();
        for role in self.class.required_cells() {
            let index = self.cells.get(*role).ok_or_else(|| {
                Error::Instance(format!("class {} needs a `{role}` cell", self.class))
            })?;
            if seen.contains(index) {
                return Err(Error::Instance(format!(
                    "cell index {index} is used by two roles"
                )));
            }
            seen.push(*index);
        }
        Ok(())
    }

    pub fn cell(&self, role: &str) -> i64 {
        self.cells[role]
    }

    /// Evolves the machine for the budgeted number of steps.
    pub fn finished(&self) -> Result<Superposition> {
        let word = self.machine.parse_input(&self.input)?;
        let steps = self.budget.eval(word.len())?;
        self.machine.run(&word, steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CheckMode {
    #[serde(rename = "exact")]
    Exact,
    #[serde(rename = "empirical")]
    Empirical,
}

/// Where empirical draws for the starred classes come from: the abstract
/// measurement model, or a full binomial ensemble realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EmpiricalSource {
    Abstract,
    Ensemble,
}

#[derive(Debug, Clone)]
pub struct CheckParams {
    pub mode: CheckMode,
    pub epsilon: f64,
    pub theta: f64,
    /// Ensemble size; defaults to the size realizing `(epsilon, theta)`.
    pub n: Option<u64>,
    pub trials: u64,
    pub seed: u64,
    pub noise: NoiseKind,
    pub source: EmpiricalSource,
}

impl Default for CheckParams {
    fn default() -> Self {
        CheckParams {
            mode: CheckMode::Exact,
            epsilon: 0.0455,
            theta: 0.03125,
            n: None,
            trials: 1000,
            seed: 0,
            noise: NoiseKind::Uniform,
            source: EmpiricalSource::Abstract,
        }
    }
}

impl CheckParams {
    fn ensemble_n(&self) -> Result<u64> {
        match self.n {
            Some(n) => Ok(n),
            None => required_n(self.theta, self.epsilon, TailConvention::TwoSided),
        }
    }

    /// Largest failure count still compatible with failure probability
    /// `epsilon` over the trial budget (mean plus three sigma).
    fn tolerated_failures(&self) -> u64 {
        let t = self.trials as f64;
        (self.epsilon * t + 3.0 * (self.epsilon * (1.0 - self.epsilon) * t).sqrt()).ceil() as u64
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub class: ClassId,
    pub in_class_evidence: bool,
    /// `accept` / `reject` on success; a short reason otherwise.
    pub label: String,
    pub margins: BTreeMap<String, f64>,
    pub mode: CheckMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
}

impl Verdict {
    fn exact(class: ClassId, evidence: bool, label: &str) -> Verdict {
        Verdict {
            class,
            in_class_evidence: evidence,
            label: label.to_string(),
            margins: BTreeMap::new(),
            mode: CheckMode::Exact,
            trials: None,
            seed: None,
            k: None,
        }
    }

    fn empirical(class: ClassId, evidence: bool, label: &str, trials: u64, seed: u64) -> Verdict {
        Verdict {
            class,
            in_class_evidence: evidence,
            label: label.to_string(),
            margins: BTreeMap::new(),
            mode: CheckMode::Empirical,
            trials: Some(trials),
            seed: Some(seed),
            k: None,
        }
    }

    fn with(mut self, name: &str, value: f64) -> Verdict {
        self.margins.insert(name.to_string(), value);
        self
    }
}

fn acceptance_marginal(inst: &Instance) -> Result<QubitMarginal> {
    let finished = inst.finished()?;
    qubit_marginal(&finished, inst.cell("acceptance"), &inst.machine)
}

/// Exact observation gives 1 (or 0) with probability 1: the acceptance cell
/// must be an eigenstate.
pub fn check_eqp(inst: &Instance) -> Result<Verdict> {
    let q = acceptance_marginal(inst)?;
    let verdict = if q.p1 >= 1.0 - GUARD {
        Verdict::exact(ClassId::Eqp, true, "accept")
    } else if q.p1 <= GUARD {
        Verdict::exact(ClassId::Eqp, true, "reject")
    } else {
        Verdict::exact(ClassId::Eqp, false, "acceptance cell is not an eigenstate")
    };
    Ok(verdict.with("p1", q.p1))
}

/// Starred (and bulk) exact classes: a reading beyond `1 - theta` (below
/// `-1 + theta`) with probability one requires an eigenstate; in empirical
/// mode every single reading must clear the threshold.
pub fn check_ebqp_star(inst: &Instance, params: &CheckParams) -> Result<Verdict> {
    let class = inst.class;
    let q = acceptance_marginal(inst)?;
    let theta = params.theta;
    match params.mode {
        CheckMode::Exact => {
            let verdict = if q.p1 >= 1.0 - GUARD {
                Verdict::exact(class, true, "accept")
                    .with("value", 1.0)
                    .with("threshold", 1.0 - theta)
            } else if q.p1 <= GUARD {
                Verdict::exact(class, true, "reject")
                    .with("value", -1.0)
                    .with("threshold", -1.0 + theta)
            } else {
                Verdict::exact(class, false, "acceptance cell is not an eigenstate")
            };
            Ok(verdict.with("p1", q.p1))
        }
        CheckMode::Empirical => {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            let mut noise = NoiseModel::new(params.noise, theta)?;
            let fault_free = class == ClassId::Ebqp;
            let mut above = 0u64;
            let mut below = 0u64;
            for _ in 0..params.trials {
                let value = if fault_free {
                    crate::measurement::bulk_measure(q, &mut noise, &mut rng).value
                } else {
                    et_measure_with_noise(q, params.epsilon, &mut noise, &mut rng)?.value
                };
                if value > 1.0 - theta {
                    above += 1;
                }
                if value < -1.0 + theta {
                    below += 1;
                }
            }
            let (evidence, label) = if above == params.trials {
                (true, "accept")
            } else if below == params.trials {
                (true, "reject")
            } else {
                (
                    false,
                    "readings do not clear the threshold with probability 1",
                )
            };
            Ok(
                Verdict::empirical(class, evidence, label, params.trials, params.seed)
                    .with("p1", q.p1)
                    .with("above", above as f64)
                    .with("below", below as f64),
            )
        }
    }
}

/// Observation gives the right answer with probability more than 2/3.
pub fn check_bqp(inst: &Instance) -> Result<Verdict> {
    let q = acceptance_marginal(inst)?;
    let verdict = if q.p1 > 2.0 / 3.0 + GUARD {
        Verdict::exact(ClassId::Bqp, true, "accept").with("margin", q.p1 - 2.0 / 3.0)
    } else if q.p1 < 1.0 / 3.0 - GUARD {
        Verdict::exact(ClassId::Bqp, true, "reject").with("margin", 1.0 / 3.0 - q.p1)
    } else {
        Verdict::exact(ClassId::Bqp, false, "p1 lies between the thresholds")
            .with("accept_gap", (2.0 / 3.0 - q.p1).max(0.0))
            .with("reject_gap", (q.p1 - 1.0 / 3.0).max(0.0))
    };
    Ok(verdict.with("p1", q.p1).with("threshold", 2.0 / 3.0))
}

/// Bounded-error bulk classes. The starred threshold is a reading beyond
/// ±1/3; the non-starred bulk threshold is ±(1/3 - theta). Exact mode uses
/// the sufficient condition `|p1 - p0| - theta` beyond the threshold, which
/// holds under any in-band noise.
pub fn check_bbqp_star(inst: &Instance, params: &CheckParams) -> Result<Verdict> {
    let class = inst.class;
    let q = acceptance_marginal(inst)?;
    let theta = params.theta;
    let threshold = if class == ClassId::Bbqp {
        1.0 / 3.0 - theta
    } else {
        1.0 / 3.0
    };
    let d = q.expectation();
    match params.mode {
        CheckMode::Exact => {
            let verdict = if d - theta > threshold + GUARD {
                Verdict::exact(class, true, "accept").with("slack", d - theta - threshold)
            } else if d + theta < -threshold - GUARD {
                Verdict::exact(class, true, "reject").with("slack", -threshold - (d + theta))
            } else {
                Verdict::exact(class, false, "exact check inconclusive; use empirical mode")
            };
            Ok(verdict
                .with("p1", q.p1)
                .with("threshold", threshold)
                .with("theta", theta))
        }
        CheckMode::Empirical => {
            let trials = params.trials;
            let (accepting, rejecting) = match params.source {
                EmpiricalSource::Abstract => {
                    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
                    let mut noise = NoiseModel::new(params.noise, theta)?;
                    let fault_free = class == ClassId::Bbqp;
                    let mut acc = 0u64;
                    let mut rej = 0u64;
                    for _ in 0..trials {
                        let value = if fault_free {
                            crate::measurement::bulk_measure(q, &mut noise, &mut rng).value
                        } else {
                            et_measure_with_noise(q, params.epsilon, &mut noise, &mut rng)?.value
                        };
                        if value > threshold {
                            acc += 1;
                        }
                        if value < -threshold {
                            rej += 1;
                        }
                    }
                    (acc, rej)
                }
                EmpiricalSource::Ensemble => {
                    let n = params.ensemble_n()?;
                    let word = inst.machine.parse_input(&inst.input)?;
                    let steps = inst.budget.eval(word.len())?;
                    let mut acc = 0u64;
                    let mut rej = 0u64;
                    for trial in 0..trials {
                        let mut cfg = EnsembleConfig::new(n, params.seed.wrapping_add(trial));
                        cfg.scale = ErrorScale::PlusMinus;
                        let report = ensemble_measure(
                            &inst.machine,
                            &inst.input,
                            steps,
                            inst.cell("acceptance"),
                            &cfg,
                        )?;
                        if report.average > threshold {
                            acc += 1;
                        }
                        if report.average < -threshold {
                            rej += 1;
                        }
                    }
                    (acc, rej)
                }
            };
            let tolerated = if class == ClassId::Bbqp {
                0
            } else {
                params.tolerated_failures()
            };
            let (evidence, label) = if trials - accepting <= tolerated {
                (true, "accept")
            } else if trials - rejecting <= tolerated {
                (true, "reject")
            } else {
                (false, "readings miss the threshold too often")
            };
            Ok(
                Verdict::empirical(class, evidence, label, trials, params.seed)
                    .with("p1", q.p1)
                    .with("threshold", threshold)
                    .with("accepting", accepting as f64)
                    .with("rejecting", rejecting as f64)
                    .with("tolerated_failures", tolerated as f64),
            )
        }
    }
}

/// Inequality chain behind the bounded-error transfer: any band width below
/// `p - 2/3` keeps every in-band reading beyond 1/3.
#[derive(Debug, Clone, Serialize)]
pub struct BbqpDerivation {
    pub p_bound: f64,
    pub theta_max: f64,
    /// Chain values at `theta = theta_max (1 - 1e-9)`:
    /// `2p - 1 - theta > p - 1/3 > 1/3`.
    pub reading_lower_bound: f64,
    pub middle_bound: f64,
    pub certified: bool,
}

pub fn derive_bbqp_params(p_bound: f64) -> Result<BbqpDerivation> {
    if !(p_bound > 2.0 / 3.0 && p_bound <= 1.0) {
        return Err(Error::Parameter(format!(
            "p must lie in (2/3, 1], got {p_bound}"
        )));
    }
    let theta_max = p_bound - 2.0 / 3.0;
    let theta = theta_max * (1.0 - 1e-9);
    let reading_lower_bound = 2.0 * p_bound - 1.0 - theta;
    let middle_bound = p_bound - 1.0 / 3.0;
    let certified = reading_lower_bound > middle_bound - 1e-15 && middle_bound > 1.0 / 3.0;
    Ok(BbqpDerivation {
        p_bound,
        theta_max,
        reading_lower_bound,
        middle_bound,
        certified,
    })
}

/// Halt cell reads 1 with probability more than 1/2, and the decision cell
/// conditioned on halting is an eigenstate.
pub fn check_zqp(inst: &Instance, params: &CheckParams) -> Result<Verdict> {
    let finished = inst.finished()?;
    let halt_cell = inst.cell("halt");
    let decision_cell = inst.cell("decision");
    let halt = qubit_marginal(&finished, halt_cell, &inst.machine)?;
    let one = inst
        .machine
        .symbol_id("1")
        .ok_or_else(|| Error::Instance("machine lacks symbol `1`".into()))?;

    match params.mode {
        CheckMode::Exact => {
            if halt.p1 <= 0.5 + GUARD {
                return Ok(Verdict::exact(
                    ClassId::Zqp,
                    false,
                    "halt probability is not more than 1/2",
                )
                .with("halt_p1", halt.p1));
            }
            let halted = finished.condition(halt_cell, one, &inst.machine)?;
            let decision = qubit_marginal(&halted, decision_cell, &inst.machine)?;
            let verdict = if decision.p1 >= 1.0 - GUARD {
                Verdict::exact(ClassId::Zqp, true, "accept")
            } else if decision.p1 <= GUARD {
                Verdict::exact(ClassId::Zqp, true, "reject")
            } else {
                Verdict::exact(
                    ClassId::Zqp,
                    false,
                    "decision cell is not an eigenstate given halt=1",
                )
            };
            Ok(verdict
                .with("halt_p1", halt.p1)
                .with("decision_p1", decision.p1))
        }
        CheckMode::Empirical => {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            let mut halted_runs = 0u64;
            let mut decision_ones = 0u64;
            let mut decision_zeros = 0u64;
            for _ in 0..params.trials {
                let (symbol, collapsed) =
                    observe_cell(&finished, halt_cell, &inst.machine, &mut rng)?;
                if symbol == one {
                    halted_runs += 1;
                    let (d, _) = observe_cell(&collapsed, decision_cell, &inst.machine, &mut rng)?;
                    if d == one {
                        decision_ones += 1;
                    } else {
                        decision_zeros += 1;
                    }
                }
            }
            // Binomial three-sigma bound around 1/2 for the halt frequency.
            let needed = params.trials as f64 * 0.5 - 3.0 * (params.trials as f64 * 0.25).sqrt();
            let halt_ok = (halted_runs as f64) > needed;
            let (evidence, label) = if !halt_ok {
                (false, "halt frequency is not more than 1/2")
            } else if decision_ones == halted_runs {
                (true, "accept")
            } else if decision_zeros == halted_runs {
                (true, "reject")
            } else {
                (false, "decision cell varies given halt=1")
            };
            Ok(
                Verdict::empirical(ClassId::Zqp, evidence, label, params.trials, params.seed)
                    .with("halted_runs", halted_runs as f64)
                    .with("decision_ones", decision_ones as f64),
            )
        }
    }
}

/// Ensemble halt-average more than 0 with failure probability at most
/// `epsilon`, then an exact reading of the accept cell (1, scoring +1) or
/// the reject cell (0, scoring -1), which requires an eigenstate.
pub fn check_zbqp_star(inst: &Instance, params: &CheckParams) -> Result<Verdict> {
    let class = inst.class;
    let finished = inst.finished()?;
    let machine = &inst.machine;
    let halt = qubit_marginal(&finished, inst.cell("halt"), machine)?;
    let accept = qubit_marginal(&finished, inst.cell("accept"), machine);
    let reject = qubit_marginal(&finished, inst.cell("reject"), machine);
    let n = params.ensemble_n()?;

    // Probability of the ensemble halt-average failing to exceed 0: the
    // average sits within `p1 - 1/2` (probability scale) of its mean except
    // with the two-sided tail probability.
    let halt_margin = halt.p1 - 0.5;
    let halt_failure = if halt_margin > GUARD {
        achieved_epsilon(halt_margin.min(0.5 - 1e-9), n)?
    } else {
        1.0
    };
    let bulk_fault_free = class == ClassId::Zbqp;
    let halt_ok = if bulk_fault_free {
        halt_margin > GUARD
    } else {
        halt_failure <= params.epsilon
    };

    match params.mode {
        CheckMode::Exact => {
            if !halt_ok {
                return Ok(Verdict::exact(
                    class,
                    false,
                    "halt average is not more than 0 with the required confidence",
                )
                .with("halt_p1", halt.p1)
                .with("halt_failure", halt_failure)
                .with("n", n as f64));
            }
            let accept_eigen_one = accept
                .as_ref()
                .map(|q| q.p1 >= 1.0 - GUARD)
                .unwrap_or(false);
            let reject_eigen_zero = reject.as_ref().map(|q| q.p1 <= GUARD).unwrap_or(false);
            let mut verdict = if accept_eigen_one {
                let mut v = Verdict::exact(class, true, "accept").with("accept_value", 1.0);
                if let Ok(q) = &reject {
                    v = v.with("wrong_cell_p1", q.p1);
                }
                v
            } else if reject_eigen_zero {
                let mut v = Verdict::exact(class, true, "reject").with("reject_value", -1.0);
                if let Ok(q) = &accept {
                    v = v.with("wrong_cell_p1", q.p1);
                }
                v
            } else {
                Verdict::exact(
                    class,
                    false,
                    "neither accept nor reject cell is the required eigenstate",
                )
            };
            if let Ok(q) = &accept {
                verdict = verdict.with("accept_p1", q.p1);
            }
            if let Ok(q) = &reject {
                verdict = verdict.with("reject_p1", q.p1);
            }
            Ok(verdict
                .with("halt_p1", halt.p1)
                .with("halt_failure", halt_failure)
                .with("n", n as f64))
        }
        CheckMode::Empirical => {
            let trials = params.trials;
            let word = machine.parse_input(&inst.input)?;
            let steps = inst.budget.eval(word.len())?;
            let mut halt_positive = 0u64;
            for trial in 0..trials {
                let mut cfg = EnsembleConfig::new(n, params.seed.wrapping_add(trial));
                cfg.scale = ErrorScale::PlusMinus;
                let report =
                    ensemble_measure(machine, &inst.input, steps, inst.cell("halt"), &cfg)?;
                if report.average > 0.0 {
                    halt_positive += 1;
                }
            }
            let halt_ok = trials - halt_positive <= params.tolerated_failures();

            let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x5eed);
            let mut noise = NoiseModel::new(params.noise, params.theta)?;
            let mut read_exact = |q: &QubitMarginal, expected: f64| -> Result<bool> {
                for _ in 0..trials {
                    let out = et_measure_with_noise(*q, params.epsilon, &mut noise, &mut rng)?;
                    if out.value != expected {
                        return Ok(false);
                    }
                }
                Ok(true)
            };
            let accept_exact = match &accept {
                Ok(q) => read_exact(q, 1.0)?,
                Err(_) => false,
            };
            let reject_exact = match &reject {
                Ok(q) => read_exact(q, -1.0)?,
                Err(_) => false,
            };
            let (evidence, label) = if !halt_ok {
                (false, "ensemble halt average fails to exceed 0 too often")
            } else if accept_exact {
                (true, "accept")
            } else if reject_exact {
                (true, "reject")
            } else {
                (false, "neither cell reads exactly with probability 1")
            };
            Ok(
                Verdict::empirical(class, evidence, label, trials, params.seed)
                    .with("halt_positive", halt_positive as f64)
                    .with("halt_p1", halt.p1)
                    .with("n", n as f64),
            )
        }
    }
}

/// Re-tags an exact-class instance for the starred measurement model: the
/// transition function is unchanged, so the eigenstate readout carries over.
pub fn transform_eqp_to_ebqp_star(inst: &Instance) -> Result<Instance> {
    let verdict = check_eqp(inst)?;
    if !verdict.in_class_evidence {
        return Err(Error::Instance(
            "the acceptance cell is not an eigenstate, so the exact readout does not transfer"
                .into(),
        ));
    }
    let mut out = inst.clone();
    out.class = ClassId::EbqpStar;
    Ok(out)
}

/// Runs the checker matching the instance's class.
pub fn check(inst: &Instance, params: &CheckParams) -> Result<Verdict> {
    match inst.class {
        ClassId::Eqp => check_eqp(inst),
        ClassId::Ebqp | ClassId::EbqpStar => check_ebqp_star(inst, params),
        ClassId::Bqp => check_bqp(inst),
        ClassId::Bbqp | ClassId::BbqpStar => check_bbqp_star(inst, params),
        ClassId::Zqp => check_zqp(inst, params),
        ClassId::Zbqp | ClassId::ZbqpStar => check_zbqp_star(inst, params),
    }
}
