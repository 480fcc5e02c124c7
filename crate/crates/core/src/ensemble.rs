//! Bulk measurement realized as `n` statistically independent machine runs.
//!
//! All members share the transition table and the input and take no partial
//! measurements, so the pre-measurement state is the same for every member:
//! one state-vector evolution suffices, and the per-member ±1 outcomes are
//! independent draws from the final cell marginal. The fast path therefore
//! samples `count_plus ~ Binomial(n, p1)`; a slow path that re-runs the
//! evolution once per member is kept for validation.
//!
//! Determinism contract: a report is a pure function of `(seed, n,
//! partitions)`. Worker `i` draws from a ChaCha stream derived from the seed
//! with stream index `i`, and partial counts merge by addition, so the
//! result does not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::machine::Machine;
use crate::measurement::{observe_cell, qubit_marginal, QubitMarginal};
use crate::statistics::{required_n, TailConvention};

/// Which scale an error band lives on: the probability estimate
/// `count_plus / n`, or the ±1 ensemble average `2 count_plus / n - 1`.
/// The two differ by a factor of two; both are first-class because the
/// size formula is stated on the former while the measurement contract is
/// stated on the latter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ErrorScale {
    #[serde(rename = "probability")]
    Probability,
    #[serde(rename = "plusminus")]
    PlusMinus,
}

impl ErrorScale {
    pub fn parse(token: &str) -> Option<ErrorScale> {
        match token {
            "probability" => Some(ErrorScale::Probability),
            "plusminus" => Some(ErrorScale::PlusMinus),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleConfig {
    /// Member (molecule) count.
    pub n: u64,
    pub seed: u64,
    /// Worker split; must not exceed `n`.
    pub partitions: u64,
    /// Replaces binomial sampling with one full simulation per member.
    pub slow_path: bool,
    /// Error band for the `within_theta` report field, with its scale.
    pub theta: Option<f64>,
    pub scale: ErrorScale,
}

impl EnsembleConfig {
    pub fn new(n: u64, seed: u64) -> EnsembleConfig {
        EnsembleConfig {
            n,
            seed,
            partitions: 1,
            slow_path: false,
            theta: None,
            scale: ErrorScale::PlusMinus,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Parameter(
                "ensemble needs at least one member".into(),
            ));
        }
        if self.partitions == 0 || self.partitions > self.n {
            return Err(Error::Parameter(format!(
                "partitions must lie in 1..={}, got {}",
                self.n, self.partitions
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleReport {
    pub n: u64,
    /// Members observed as 1, scored +1.
    pub count_plus: u64,
    /// Members observed as 0, scored -1.
    pub count_minus: u64,
    /// `(count_plus - count_minus) / n`.
    pub average: f64,
    /// The analytically computed marginal the draws came from.
    pub exact_p1: f64,
    pub theta: Option<f64>,
    pub within_theta: Option<bool>,
    pub scale: ErrorScale,
    pub seed: u64,
    pub partitions: u64,
    pub slow_path: bool,
}

/// Per-worker ChaCha stream: one generator per partition index on a common
/// seed, so reports are reproducible for any worker count.
fn worker_rng(seed: u64, worker: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(worker);
    rng
}

/// Splits `n` into `partitions` near-equal chunks.
fn chunk_sizes(n: u64, partitions: u64) -> Vec<u64> {
    let base = n / partitions;
    let extra = n % partitions;
    (0..partitions)
        .map(|i| base + u64::from(i < extra))
        .collect()
}

fn sample_count_plus(p1: f64, chunk: u64, rng: &mut ChaCha8Rng) -> u64 {
    if p1 <= 0.0 {
        return 0;
    }
    if p1 >= 1.0 {
        return chunk;
    }
    Binomial::new(chunk, p1).expect("p1 in [0,1]").sample(rng)
}

/// Ensemble readout of an already-computed qubit marginal: `n` independent
/// ±1 draws via binomial sampling.
pub fn measure_marginal(q: QubitMarginal, cfg: &EnsembleConfig) -> Result<EnsembleReport> {
    cfg.validate()?;
    let count_plus: u64 = chunk_sizes(cfg.n, cfg.partitions)
        .into_par_iter()
        .enumerate()
        .map(|(worker, chunk)| {
            let mut rng = worker_rng(cfg.seed, worker as u64);
            sample_count_plus(q.p1, chunk, &mut rng)
        })
        .sum();
    Ok(finish_report(q, count_plus, cfg))
}

fn finish_report(q: QubitMarginal, count_plus: u64, cfg: &EnsembleConfig) -> EnsembleReport {
    let count_minus = cfg.n - count_plus;
    let average = (count_plus as f64 - count_minus as f64) / cfg.n as f64;
    let within_theta = cfg.theta.map(|theta| match cfg.scale {
        ErrorScale::Probability => (count_plus as f64 / cfg.n as f64 - q.p1).abs() < theta,
        ErrorScale::PlusMinus => (average - q.expectation()).abs() < theta,
    });
    EnsembleReport {
        n: cfg.n,
        count_plus,
        count_minus,
        average,
        exact_p1: q.p1,
        theta: cfg.theta,
        within_theta,
        scale: cfg.scale,
        seed: cfg.seed,
        partitions: cfg.partitions,
        slow_path: cfg.slow_path,
    }
}

/// Runs the machine for `steps`, then measures `cell` across the ensemble.
/// Terminal for the run: the returned superposition (if the caller keeps
/// one) cannot be measured again, matching the non-repeatable contract.
pub fn ensemble_measure(
    machine: &Machine,
    input: &str,
    steps: u32,
    cell: i64,
    cfg: &EnsembleConfig,
) -> Result<EnsembleReport> {
    cfg.validate()?;
    let word = machine.parse_input(input)?;
    let finished = machine.run(&word, steps)?;
    let q = qubit_marginal(&finished, cell, machine)?;

    if !cfg.slow_path {
        return measure_marginal(q, cfg);
    }
    let count_plus = {
        // One independent evolution and projective readout per member.
        let one = machine.symbol_id("1");
        chunk_sizes(cfg.n, cfg.partitions)
            .into_par_iter()
            .enumerate()
            .map(|(worker, chunk)| -> Result<u64> {
                let mut rng = worker_rng(cfg.seed, worker as u64);
                let mut plus = 0u64;
                for _ in 0..chunk {
                    let member = machine.run(&word, steps)?;
                    let (symbol, _) = observe_cell(&member, cell, machine, &mut rng)?;
                    if Some(symbol) == one {
                        plus += 1;
                    }
                }
                Ok(plus)
            })
            .try_reduce(|| 0, |a, b| Ok(a + b))?
    };
    Ok(finish_report(q, count_plus, cfg))
}

/// Member count at which the ensemble meets the `(epsilon, theta)` contract
/// under the given tail convention.
pub fn realize_mbqtm(theta: f64, epsilon: f64, conv: TailConvention) -> Result<u64> {
    required_n(theta, epsilon, conv)
}

/// Monte Carlo estimate of `P(|estimate - truth| >= theta)` for an ensemble
/// of size `n` drawn from a cell with marginal `p1`.
pub fn empirical_error_rate(
    p1: f64,
    n: u64,
    theta: f64,
    scale: ErrorScale,
    trials: u64,
    seed: u64,
    partitions: u64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&p1) {
        return Err(Error::Parameter(format!("p1 must lie in [0, 1], got {p1}")));
    }
    if trials == 0 || n == 0 {
        return Err(Error::Parameter("trials and n must be at least 1".into()));
    }
    let partitions = partitions.clamp(1, trials);
    let errors: u64 = chunk_sizes(trials, partitions)
        .into_par_iter()
        .enumerate()
        .map(|(worker, chunk)| {
            let mut rng = worker_rng(seed, worker as u64);
            let mut errs = 0u64;
            for _ in 0..chunk {
                let k = sample_count_plus(p1, n, &mut rng);
                let deviation = match scale {
                    ErrorScale::Probability => (k as f64 / n as f64 - p1).abs(),
                    ErrorScale::PlusMinus => {
                        ((2.0 * k as f64 - n as f64) / n as f64 - (2.0 * p1 - 1.0)).abs()
                    }
                };
                if deviation >= theta {
                    errs += 1;
                }
            }
            errs
        })
        .sum();
    Ok(errors as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::parser::parse_machine;

    fn hadamard() -> Machine {
        parse_machine(fixtures::HADAMARD).unwrap()
    }

    #[test]
    fn deterministic_acceptor_averages_exactly_one() {
        let m = parse_machine(fixtures::IDENTITY).unwrap();
        for n in [1, 7, 1024] {
            let report = ensemble_measure(&m, "1", 1, 0, &EnsembleConfig::new(n, 3)).unwrap();
            assert_eq!(report.count_plus, n);
            assert_eq!(report.average, 1.0);
        }
    }

    #[test]
    fn reports_are_reproducible_and_consistent() {
        let m = hadamard();
        let mut cfg = EnsembleConfig::new(1024, 42);
        cfg.partitions = 4;
        cfg.theta = Some(1.0 / 32.0);
        cfg.scale = ErrorScale::Probability;
        let a = ensemble_measure(&m, "0", 1, 0, &cfg).unwrap();
        let b = ensemble_measure(&m, "0", 1, 0, &cfg).unwrap();
        assert_eq!(a.count_plus, b.count_plus);
        assert_eq!(a.count_plus + a.count_minus, a.n);
        assert_eq!(
            a.average,
            (2.0 * a.count_plus as f64 - a.n as f64) / a.n as f64
        );
        assert_eq!(a.exact_p1, 0.4999999999999999);
    }

    #[test]
    fn partition_counts_do_not_shift_the_mean() {
        let m = hadamard();
        let reps = 10_000u64;
        let n = 64u64;
        let mut means = Vec::new();
        for partitions in [1u64, 8] {
            let mut total = 0u64;
            for rep in 0..reps {
                let mut cfg = EnsembleConfig::new(n, 1000 + rep);
                cfg.partitions = partitions;
                total += ensemble_measure(&m, "0", 1, 0, &cfg).unwrap().count_plus;
            }
            means.push(total as f64 / reps as f64);
        }
        // 4 sigma of the difference of two mean estimators.
        let sigma = (2.0 * n as f64 * 0.25 / reps as f64).sqrt();
        assert!((means[0] - means[1]).abs() < 4.0 * sigma, "{means:?}");
    }

    #[test]
    fn slow_path_matches_the_marginal() {
        let m = hadamard();
        let mut cfg = EnsembleConfig::new(256, 5);
        cfg.slow_path = true;
        cfg.partitions = 4;
        let report = ensemble_measure(&m, "0", 1, 0, &cfg).unwrap();
        // Loose 4-sigma band around n/2.
        let sigma = (256.0f64 * 0.25).sqrt();
        assert!(
            (report.count_plus as f64 - 128.0).abs() < 4.0 * sigma,
            "{}",
            report.count_plus
        );
    }

    #[test]
    fn realize_matches_reference_sizes() {
        assert_eq!(
            realize_mbqtm(0.03125, 0.0455, TailConvention::TwoSided).unwrap(),
            1024
        );
        assert_eq!(
            realize_mbqtm(0.015625, 0.0455, TailConvention::TwoSided).unwrap(),
            4096
        );
        assert_eq!(
            realize_mbqtm(0.5 - 1e-12, 0.0455, TailConvention::TwoSided).unwrap(),
            4
        );
    }

    #[test]
    fn error_rate_on_the_probability_scale_matches_the_binomial_tail() {
        // Oracle: exact binomial tail P(|k - 512| >= 32) for n = 1024.
        use statrs::distribution::{Binomial as B, DiscreteCDF};
        let exact = {
            let b = B::new(0.5, 1024).unwrap();
            2.0 * b.cdf(480)
        };
        let rate = empirical_error_rate(
            0.5,
            1024,
            1.0 / 32.0,
            ErrorScale::Probability,
            100_000,
            7,
            8,
        )
        .unwrap();
        let mc_sigma = (exact * (1.0 - exact) / 100_000.0).sqrt();
        assert!(
            (rate - exact).abs() < 4.0 * mc_sigma,
            "rate {rate} vs exact {exact}"
        );
        // The normal approximation without continuity correction reads 0.0455;
        // the exact tail sits near 0.0489.
        assert!((rate - 0.0455).abs() < 0.005, "rate {rate}");
    }

    #[test]
    fn error_rate_on_the_plusminus_scale_doubles_the_band() {
        // Oracle: exact binomial tail P(|k - 512| >= 16) for n = 1024; the
        // same theta bounds the ±1 average, which moves twice as fast.
        use statrs::distribution::{Binomial as B, DiscreteCDF};
        let exact = {
            let b = B::new(0.5, 1024).unwrap();
            2.0 * b.cdf(496)
        };
        let rate =
            empirical_error_rate(0.5, 1024, 1.0 / 32.0, ErrorScale::PlusMinus, 100_000, 7, 8)
                .unwrap();
        let mc_sigma = (exact * (1.0 - exact) / 100_000.0).sqrt();
        assert!(
            (rate - exact).abs() < 4.0 * mc_sigma,
            "rate {rate} vs exact {exact}"
        );
        // The scale ambiguity in the size formula: one sigma instead of two.
        assert!((rate - 0.317).abs() < 0.02, "rate {rate}");
    }

    #[test]
    fn within_theta_fraction_matches_the_error_law() {
        // The miss fraction over seeded repetitions is the size table's
        // error probability (exact binomial tail ~0.049 at this point).
        let m = hadamard();
        let reps = 10_000u64;
        let mut misses = 0u64;
        for rep in 0..reps {
            let mut cfg = EnsembleConfig::new(1024, 50_000 + rep);
            cfg.theta = Some(1.0 / 32.0);
            cfg.scale = ErrorScale::Probability;
            let report = ensemble_measure(&m, "0", 1, 0, &cfg).unwrap();
            if !report.within_theta.unwrap() {
                misses += 1;
            }
        }
        let rate = misses as f64 / reps as f64;
        assert!((rate - 0.0455).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn error_rate_is_zero_for_eigenstates() {
        let rate = empirical_error_rate(1.0, 64, 0.25, ErrorScale::PlusMinus, 1000, 1, 1).unwrap();
        assert_eq!(rate, 0.0);
    }

    #[test]
    fn error_rate_decreases_with_n() {
        let mut prev = 1.0f64;
        for n in [256u64, 1024, 4096] {
            let rate =
                empirical_error_rate(0.5, n, 1.0 / 32.0, ErrorScale::Probability, 100_000, 11, 8)
                    .unwrap();
            assert!(
                rate < prev + 3.0 * (prev.max(1e-4) / 100_000f64).sqrt(),
                "n={n}: {rate} vs {prev}"
            );
            prev = rate;
        }
        assert!(prev < 0.01, "largest n should be accurate, got {prev}");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let m = hadamard();
        let cfg = EnsembleConfig::new(0, 1);
        assert!(ensemble_measure(&m, "0", 1, 0, &cfg).is_err());
        let mut cfg = EnsembleConfig::new(4, 1);
        cfg.partitions = 8;
        assert!(ensemble_measure(&m, "0", 1, 0, &cfg).is_err());
        assert!(empirical_error_rate(1.5, 4, 0.1, ErrorScale::PlusMinus, 10, 1, 1).is_err());
    }
}
