//! Property tests for the simulation and statistics invariants.

use std::collections::BTreeMap;

use num_complex::Complex64;
use proptest::prelude::*;

use mbqtm::ensemble::{empirical_error_rate, measure_marginal, EnsembleConfig, ErrorScale};
use mbqtm::measurement::{bulk_measure, NoiseModel, QubitMarginal};
use mbqtm::statistics::{achieved_epsilon, achieved_theta, normal_cdf, required_n, TailConvention};
use mbqtm::{
    fixtures, parse_amplitude, parse_machine, Configuration, Machine, Superposition, SymbolId, Tape,
};

fn bit_string() -> impl Strategy<Value = String> {
    proptest::collection::vec(0u8..2, 0..8)
        .prop_map(|bits| bits.iter().map(|b| b.to_string()).collect())
}

fn scale(s: &Superposition, factor: Complex64) -> BTreeMap<Configuration, Complex64> {
    s.terms().map(|(c, a)| (c.clone(), a * factor)).collect()
}

fn random_superposition(machine: &Machine, picks: &[(u8, i8, [u8; 3])]) -> Superposition {
    let mut terms = BTreeMap::new();
    let mut norm = 0.0f64;
    for (i, (state, head, cells)) in picks.iter().enumerate() {
        let state = mbqtm::StateId((*state as usize % machine.state_count()) as u16);
        let mut tape = Tape::default();
        for (offset, &sym) in cells.iter().enumerate() {
            let sym = SymbolId((sym as usize % machine.symbol_count()) as u16);
            tape = tape.with(*head as i64 + offset as i64, sym);
        }
        let amp = Complex64::new(1.0 + i as f64 * 0.25, 0.5 - i as f64 * 0.125);
        norm += amp.norm_sqr();
        terms.insert(
            Configuration {
                state,
                head: *head as i64,
                tape,
            },
            amp,
        );
    }
    let factor = 1.0 / norm.sqrt();
    Superposition::from_terms(terms.into_iter().map(|(c, a)| (c, a * factor)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn norm_is_conserved_for_random_inputs(input in bit_string(), steps in 0u32..=20) {
        for text in [fixtures::HADAMARD, fixtures::IDENTITY, fixtures::PARITY, fixtures::BQP_DEMO, fixtures::ZQP_DEMO] {
            let machine = parse_machine(text).unwrap();
            let word = machine.parse_input(&input).unwrap();
            let s = machine.run(&word, steps).unwrap();
            prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn evolution_is_linear(
        picks1 in proptest::collection::vec((0u8..8, -3i8..3, proptest::array::uniform3(0u8..4)), 1..4),
        picks2 in proptest::collection::vec((0u8..8, -3i8..3, proptest::array::uniform3(0u8..4)), 1..4),
        a in -1.0f64..1.0,
        b in -1.0f64..1.0,
    ) {
        let machine = parse_machine(fixtures::ZQP_DEMO).unwrap();
        let s1 = random_superposition(&machine, &picks1);
        let s2 = random_superposition(&machine, &picks2);
        let a = Complex64::new(a, 0.25);
        let b = Complex64::new(b, -0.5);

        let mut combined = scale(&s1, a);
        for (config, amp) in scale(&s2, b) {
            *combined.entry(config).or_insert_with(|| Complex64::new(0.0, 0.0)) += amp;
        }
        let lhs = machine.step(&Superposition::from_terms(combined)).unwrap();

        let mut rhs = scale(&machine.step(&s1).unwrap(), a);
        for (config, amp) in scale(&machine.step(&s2).unwrap(), b) {
            *rhs.entry(config).or_insert_with(|| Complex64::new(0.0, 0.0)) += amp;
        }

        for (config, amp) in rhs {
            prop_assert!((lhs.amplitude(&config) - amp).norm() < 1e-9);
        }
    }

    #[test]
    fn deterministic_machines_stay_on_basis_configurations(input in bit_string(), steps in 0u32..=24) {
        for text in [fixtures::IDENTITY, fixtures::PARITY] {
            let machine = parse_machine(text).unwrap();
            let word = machine.parse_input(&input).unwrap();
            let s = machine.run(&word, steps).unwrap();
            prop_assert_eq!(s.support_size(), 1);
        }
    }

    #[test]
    fn conditioning_pins_the_conditioned_cell(input in bit_string()) {
        let machine = parse_machine(fixtures::ZQP_DEMO).unwrap();
        let word = machine.parse_input(&input).unwrap();
        let steps = 7 + 2 * input.len() as u32;
        let s = machine.run(&word, steps).unwrap();
        let dist = s.marginal(-1).unwrap();
        for (&symbol, &p) in dist.iter() {
            if p > 1e-12 {
                let conditioned = s.condition(-1, symbol, &machine).unwrap();
                let pinned = conditioned.marginal(-1).unwrap();
                prop_assert!((pinned[&symbol] - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn band_and_error_probability_round_trip(theta_exp in 3u32..=8, n in 4u64..1_000_000) {
        let theta = 0.5f64.powi(theta_exp as i32);
        let eps = achieved_epsilon(theta, n).unwrap();
        if eps > 1e-12 && eps < 0.5 {
            let back = achieved_theta(eps, n, TailConvention::TwoSided).unwrap();
            prop_assert!((back - theta).abs() < 1e-9, "theta {theta} -> eps {eps} -> {back}");
        }
    }

    #[test]
    fn required_n_is_monotone(
        theta in 0.01f64..0.4,
        eps in 0.005f64..0.4,
        dtheta in 0.01f64..0.09,
        deps in 0.005f64..0.09,
    ) {
        let conv = TailConvention::TwoSided;
        let base = required_n(theta, eps, conv).unwrap();
        prop_assert!(required_n(theta + dtheta, eps, conv).unwrap() <= base);
        prop_assert!(required_n(theta, eps + deps, conv).unwrap() <= base);
    }

    #[test]
    fn cdf_symmetry_holds(x in -8.0f64..8.0) {
        prop_assert!((normal_cdf(x) + normal_cdf(-x) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grammar_expressions_evaluate_to_their_parts(
        num in -20i64..20,
        den in 1i64..20,
        root in 0u64..10,
        imag in proptest::bool::ANY,
    ) {
        let expected = num as f64 / den as f64 * (root as f64).sqrt();
        let text = format!("{num}/{den}*sqrt({root}){}", if imag { "i" } else { "" });
        let value = parse_amplitude(&text).unwrap();
        let got = if imag { value.im } else { value.re };
        prop_assert!((got - expected).abs() <= 1e-12 * expected.abs().max(1.0));
    }

    #[test]
    fn ensemble_reports_are_deterministic_and_consistent(
        n in 1u64..4096,
        seed in proptest::num::u64::ANY,
        partitions in 1u64..8,
        p1_percent in 0u32..=100,
    ) {
        let q = QubitMarginal::new(p1_percent as f64 / 100.0, 1.0 - p1_percent as f64 / 100.0);
        let mut cfg = EnsembleConfig::new(n, seed);
        cfg.partitions = partitions.min(n);
        let a = measure_marginal(q, &cfg).unwrap();
        let b = measure_marginal(q, &cfg).unwrap();
        prop_assert_eq!(a.count_plus, b.count_plus);
        prop_assert_eq!(a.count_plus + a.count_minus, n);
        let expected_avg = (2.0 * a.count_plus as f64 - n as f64) / n as f64;
        prop_assert_eq!(a.average, expected_avg);
    }

    #[test]
    fn bulk_noise_stays_strictly_inside_the_band(
        p1_percent in 0u32..=100,
        theta in 0.001f64..0.499,
        seed in proptest::num::u64::ANY,
    ) {
        use rand::SeedableRng;
        let q = QubitMarginal::new(p1_percent as f64 / 100.0, 1.0 - p1_percent as f64 / 100.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for kind in [NoiseModel::uniform(theta).unwrap(), NoiseModel::adversarial_edge(theta).unwrap()] {
            let mut noise = kind;
            for _ in 0..16 {
                let out = bulk_measure(q, &mut noise, &mut rng);
                prop_assert!((out.value_unclamped - q.expectation()).abs() < theta);
                prop_assert!(!out.collapsed);
            }
        }
    }
}

#[test]
fn monte_carlo_rate_matches_the_normal_approximation() {
    // At large n the lattice correction of the binomial is negligible and
    // the Monte Carlo rate lands on the normal tail within noise.
    let theta = 0.0078125;
    let n = 65_536;
    let trials = 100_000;
    let expected = achieved_epsilon(theta, n).unwrap();
    let rate = empirical_error_rate(0.5, n, theta, ErrorScale::Probability, trials, 40, 8).unwrap();
    let sigma = (expected * (1.0 - expected) / trials as f64).sqrt();
    assert!(
        (rate - expected).abs() < 3.0 * sigma,
        "rate {rate} vs normal {expected}"
    );

    // At n = 1024 the band edge falls on a lattice point and the exact
    // binomial tail sits about 0.003 above the normal value; the agreement
    // is correspondingly coarser.
    let rate =
        empirical_error_rate(0.5, 1024, 0.03125, ErrorScale::Probability, trials, 41, 8).unwrap();
    let expected = achieved_epsilon(0.03125, 1024).unwrap();
    assert!(
        (rate - expected).abs() < 0.005,
        "rate {rate} vs normal {expected}"
    );
}
