//! The three readout semantics.
//!
//! - [`observe_full`] / [`observe_cell`]: projective observation. Sampling a
//!   configuration (or one cell) collapses the superposition onto the
//!   matching branch. Partial observation belongs to the plain machine model
//!   only; the command-line harness refuses it under the bulk models.
//! - [`bulk_measure`]: returns `p1 - p0` of a qubit cell within an error band
//!   of width `theta`, with probability one, without disturbing the state.
//!   Repeatable.
//! - [`et_measure`]: returns `p1 - p0` within `theta` except with probability
//!   `epsilon`; exact when the cell is an eigenstate. Collapses the whole
//!   superposition, so the caller must mark it consumed; a second measurement
//!   is an error.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::machine::{Machine, SymbolId};
use crate::state::{Configuration, Superposition};

/// Probability tolerance under which a qubit counts as an eigenstate.
pub const EIGENSTATE_TOL: f64 = 1e-9;

/// The `(p1, p0)` pair of a tape cell restricted to the symbols 1 and 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QubitMarginal {
    pub p1: f64,
    pub p0: f64,
}

impl QubitMarginal {
    pub fn new(p1: f64, p0: f64) -> QubitMarginal {
        QubitMarginal { p1, p0 }
    }

    /// The ±1 expectation value `p1 - p0`.
    pub fn expectation(&self) -> f64 {
        self.p1 - self.p0
    }

    pub fn is_eigenstate(&self) -> bool {
        self.p1 <= EIGENSTATE_TOL || self.p0 <= EIGENSTATE_TOL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MeasurementModel {
    #[serde(rename = "qtm-observe")]
    QtmObserve,
    #[serde(rename = "qtm-partial")]
    QtmPartial,
    #[serde(rename = "bqtm-bulk")]
    BqtmBulk,
    #[serde(rename = "mbqtm-et")]
    MbqtmEt,
}

/// Result record of a bulk or `(epsilon, theta)` measurement.
#[derive(Debug, Clone, Serialize)]
pub struct MeasurementOutcome {
    pub model: MeasurementModel,
    /// Reading clamped to `[-1, 1]`.
    pub value: f64,
    /// Reading before clamping; the true value plus in-band noise can leave
    /// the interval near the edges.
    pub value_unclamped: f64,
    pub fault: bool,
    pub collapsed: bool,
    pub theta: Option<f64>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
}

/// Shape of the in-band measurement noise. The error-band width is all the
/// model specifies, so checkers are exercised both with uniform noise and
/// with noise pinned to the band edges with alternating sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NoiseKind {
    Uniform,
    AdversarialEdge,
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub theta: f64,
    #[serde(skip)]
    edge_sign: f64,
}

impl NoiseModel {
    pub fn uniform(theta: f64) -> Result<NoiseModel> {
        Self::new(NoiseKind::Uniform, theta)
    }

    pub fn adversarial_edge(theta: f64) -> Result<NoiseModel> {
        Self::new(NoiseKind::AdversarialEdge, theta)
    }

    pub fn new(kind: NoiseKind, theta: f64) -> Result<NoiseModel> {
        if !(theta > 0.0 && theta < 0.5) {
            return Err(Error::Parameter(format!(
                "theta must lie in (0, 1/2), got {theta}"
            )));
        }
        Ok(NoiseModel {
            kind,
            theta,
            edge_sign: 1.0,
        })
    }

    /// Draws one in-band error, |e| < theta.
    pub fn sample(&mut self, rng: &mut impl Rng) -> f64 {
        match self.kind {
            NoiseKind::Uniform => rng.gen_range(-self.theta..self.theta),
            NoiseKind::AdversarialEdge => {
                let e = self.edge_sign * (self.theta - 1e-12);
                self.edge_sign = -self.edge_sign;
                e
            }
        }
    }
}

/// Samples a full configuration with probability `|amplitude|^2` and returns
/// it together with the collapsed superposition.
pub fn observe_full(
    s: &Superposition,
    rng: &mut impl Rng,
) -> Result<(Configuration, Superposition)> {
    if s.is_consumed() {
        return Err(Error::Consumed);
    }
    let u: f64 = rng.gen::<f64>() * s.norm_sqr();
    let mut acc = 0.0;
    let mut chosen = None;
    for (config, amp) in s.terms() {
        acc += amp.norm_sqr();
        if u < acc {
            chosen = Some(config.clone());
            break;
        }
    }
    // Guard against accumulated rounding at u ~ norm^2.
    let chosen = match chosen {
        Some(c) => c,
        None => s
            .terms()
            .last()
            .expect("superposition has support")
            .0
            .clone(),
    };
    Ok((chosen.clone(), Superposition::basis(chosen)))
}

/// Observes one tape cell: samples a symbol from the cell marginal and
/// projects the superposition onto the matching branch.
pub fn observe_cell(
    s: &Superposition,
    cell: i64,
    machine: &Machine,
    rng: &mut impl Rng,
) -> Result<(SymbolId, Superposition)> {
    let dist = s.marginal(cell)?;
    let total: f64 = dist.values().sum();
    let u: f64 = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut chosen = None;
    for (&symbol, &p) in &dist {
        acc += p;
        if u < acc {
            chosen = Some(symbol);
            break;
        }
    }
    let symbol = chosen.unwrap_or_else(|| *dist.keys().last().expect("marginal has support"));
    let collapsed = s.condition(cell, symbol, machine)?;
    Ok((symbol, collapsed))
}

/// Reads the `(p1, p0)` pair of a cell that must carry only the symbols
/// 0 and 1; anything else signals a malformed decision machine.
pub fn qubit_marginal(s: &Superposition, cell: i64, machine: &Machine) -> Result<QubitMarginal> {
    let dist = s.marginal(cell)?;
    let one = machine.symbol_id("1");
    let zero = machine.symbol_id("0");
    let mut p1 = 0.0;
    let mut p0 = 0.0;
    for (symbol, p) in dist {
        if Some(symbol) == one {
            p1 = p;
        } else if Some(symbol) == zero {
            p0 = p;
        } else if p > EIGENSTATE_TOL {
            return Err(Error::NotAQubit {
                cell,
                symbol: machine.symbol_name(symbol).to_string(),
                prob: p,
            });
        }
    }
    Ok(QubitMarginal { p1, p0 })
}

/// Bulk measurement: `p1 - p0` plus bounded noise, no collapse.
pub fn bulk_measure(
    q: QubitMarginal,
    noise: &mut NoiseModel,
    rng: &mut impl Rng,
) -> MeasurementOutcome {
    let raw = q.expectation() + noise.sample(rng);
    MeasurementOutcome {
        model: MeasurementModel::BqtmBulk,
        value: raw.clamp(-1.0, 1.0),
        value_unclamped: raw,
        fault: false,
        collapsed: false,
        theta: Some(noise.theta),
        epsilon: None,
        seed: None,
    }
}

/// `(epsilon, theta)`-measurement with the default uniform in-band noise.
pub fn et_measure(
    q: QubitMarginal,
    epsilon: f64,
    theta: f64,
    rng: &mut impl Rng,
) -> Result<MeasurementOutcome> {
    let mut noise = NoiseModel::uniform(theta)?;
    et_measure_with_noise(q, epsilon, &mut noise, rng)
}

/// `(epsilon, theta)`-measurement with a caller-chosen in-band noise shape.
///
/// On an eigenstate the reading is exactly ±1 and never faults. Otherwise
/// the reading is in-band except with probability `epsilon`, in which case
/// it is drawn uniformly from the out-of-band part of `[-1, 1]`. Always
/// collapsing: the caller must mark the superposition consumed.
pub fn et_measure_with_noise(
    q: QubitMarginal,
    epsilon: f64,
    noise: &mut NoiseModel,
    rng: &mut impl Rng,
) -> Result<MeasurementOutcome> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::Parameter(format!(
            "epsilon must lie in (0, 1/2), got {epsilon}"
        )));
    }
    let theta = noise.theta;
    let d = q.expectation();

    let (value, fault) = if q.is_eigenstate() {
        (if q.p1 > q.p0 { 1.0 } else { -1.0 }, false)
    } else if rng.gen::<f64>() < epsilon {
        (sample_out_of_band(d, theta, rng), true)
    } else {
        (d + noise.sample(rng), false)
    };

    Ok(MeasurementOutcome {
        model: MeasurementModel::MbqtmEt,
        value: value.clamp(-1.0, 1.0),
        value_unclamped: value,
        fault,
        collapsed: true,
        theta: Some(theta),
        epsilon: Some(epsilon),
        seed: None,
    })
}

/// Uniform draw from `[-1, 1]` minus the open band `(d - theta, d + theta)`.
fn sample_out_of_band(d: f64, theta: f64, rng: &mut impl Rng) -> f64 {
    let left_len = ((d - theta) - (-1.0)).max(0.0);
    let right_len = (1.0 - (d + theta)).max(0.0);
    let u: f64 = rng.gen::<f64>() * (left_len + right_len);
    if u < left_len {
        -1.0 + u
    } else {
        (d + theta) + (u - left_len)
    }
}
