use dcnet_core::fec::{
    self, approx, codeword_error_rate, fec_latency, frame_error_rate, frame_loss_probability, symbol_error_rate,
    FecScheme,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sums the probability of every error pattern with more than `t` symbol errors.
fn enumerate_cer(n: u32, t: u32, ser: f64) -> f64 {
    let mut total = 0.0;
    for pattern in 0u32..(1 << n) {
        let errors = pattern.count_ones();
        if errors > t {
            total += ser.powi(errors as i32) * (1.0 - ser).powi((n - errors) as i32);
        }
    }
    total
}

#[test]
fn cer_matches_exhaustive_enumeration() {
    let bers = [1e-6, 1e-4, 1e-3, 0.01, 0.05, 0.2, 0.5, 0.9];
    let mut checked = 0;
    for n in 1..=12u32 {
        for k in 1..=n {
            for m in 1..=3u32 {
                let scheme = FecScheme::new(n, k, m).unwrap();
                for &ber in &bers {
                    let ser = symbol_error_rate(ber, m).unwrap();
                    let expected = enumerate_cer(n, scheme.correctable_symbols(), ser);
                    let got = codeword_error_rate(&scheme, ser).unwrap();
                    if expected == 0.0 {
                        assert_eq!(got, 0.0);
                    } else {
                        let rel = ((got - expected) / expected).abs();
                        assert!(rel <= 1e-9, "RS({n},{k}) m={m} ber={ber}: {got:e} vs {expected:e}");
                    }
                    checked += 1;
                }
            }
        }
    }
    assert_eq!(checked, 78 * 3 * bers.len());
}

#[test]
fn cer_within_three_standard_errors_of_monte_carlo() {
    let scheme = FecScheme::new(15, 11, 4).unwrap();
    let ser: f64 = 0.05;
    // per-bit probability that gives a symbol error rate of exactly 0.05
    let ber = 1.0 - (1.0 - ser).powf(1.0 / 4.0);
    assert!((symbol_error_rate(ber, 4).unwrap() - ser).abs() < 1e-15);
    let threshold = (ber * 2f64.powi(64)) as u64;
    let trials = 10_000_000u64;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_f00d);
    let mut failures = 0u64;
    for _ in 0..trials {
        let mut symbols_hit = 0;
        for _ in 0..scheme.n() {
            let mut hit = false;
            for _ in 0..scheme.m() {
                hit |= rng.gen::<u64>() < threshold;
            }
            symbols_hit += u32::from(hit);
        }
        failures += u64::from(symbols_hit > scheme.correctable_symbols());
    }
    let estimate = failures as f64 / trials as f64;
    let analytic = codeword_error_rate(&scheme, ser).unwrap();
    let stderr = (analytic * (1.0 - analytic) / trials as f64).sqrt();
    let z = (estimate - analytic) / stderr;
    assert!(
        z.abs() <= 3.0,
        "analytic {analytic:e}, monte carlo {estimate:e}, z = {z:.2}"
    );
}

#[test]
fn go_back_n_desk_numbers() {
    let four_k = fec::raw_frame_loss(1e-12, 32768).unwrap();
    assert!(((four_k - 3.3e-8) / 3.3e-8).abs() < 0.02);
    let waste = fec::goback_n_waste(3.3e-8, 800e9 * 3.6e-6, 73728).unwrap();
    assert!(((waste - 1.29e-6) / 1.29e-6).abs() < 0.005);
    // 0.00013 % at two significant figures
    assert_eq!(format!("{:.2e}", waste * 100.0), "1.29e-4");
    let nine_k = fec::raw_frame_loss(1e-12, 73728).unwrap();
    assert!(((nine_k - 7.37e-8) / 7.37e-8).abs() < 1e-3);
}

proptest! {
    #[test]
    fn ser_is_monotone(ber in 0.0f64..=1.0, dber in 0.0f64..0.1, m in 1u32..16) {
        let hi = (ber + dber).min(1.0);
        let a = symbol_error_rate(ber, m).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(symbol_error_rate(hi, m).unwrap() >= a);
        prop_assert!(symbol_error_rate(ber, m + 1).unwrap() >= a);
    }

    #[test]
    fn cer_is_monotone_in_ser(n in 2u32..600, parity in 0u32..40, ser in 0.0f64..=1.0, d in 0.0f64..0.05) {
        let k = n.saturating_sub(parity).max(1);
        let s = FecScheme::new(n, k, 10).unwrap();
        let lo = codeword_error_rate(&s, ser).unwrap();
        let hi = codeword_error_rate(&s, (ser + d).min(1.0)).unwrap();
        prop_assert!((0.0..=1.0).contains(&lo));
        prop_assert!(hi >= lo * (1.0 - 1e-12), "{hi:e} < {lo:e}");
    }

    #[test]
    fn fer_and_loss_are_monotone(cer in 0.0f64..=1.0, frame in 1u64..200_000, extra in 0u64..100_000, hops in 0u32..10) {
        let f1 = frame_error_rate(cer, frame, 5440).unwrap();
        let f2 = frame_error_rate(cer, frame + extra, 5440).unwrap();
        prop_assert!(f2 >= f1);
        let p1 = frame_loss_probability(f1, hops).unwrap();
        prop_assert!(frame_loss_probability(f1, hops + 1).unwrap() >= p1);
        prop_assert!(p1 >= f1);
    }

    #[test]
    fn small_probability_approximations_agree(ber in 1e-15f64..1e-7, m in 1u32..16, hops in 0u32..10, frame in 1u64..100_000) {
        let exact = symbol_error_rate(ber, m).unwrap();
        let first_order = approx::symbol_error_rate(ber, m);
        // the neglected terms are O((m ber)^2)
        prop_assert!(((exact - first_order) / first_order).abs() <= m as f64 * ber);
        let fer = frame_error_rate(exact, frame, 5440).unwrap();
        let afer = approx::frame_error_rate(exact, frame, 5440);
        let count = fec::codewords_per_frame(frame, 5440) as f64;
        prop_assert!(((fer - afer) / afer).abs() <= count * exact);
        let p = frame_loss_probability(fer, hops).unwrap();
        let ap = approx::frame_loss_probability(fer, hops);
        prop_assert!(((p - ap) / ap).abs() <= (hops as f64 + 1.0) * fer);
    }

    #[test]
    fn accumulation_halves_per_bandwidth_doubling(bits in 1u64..100_000, gbps in 1.0f64..10_000.0, compute in 0.0f64..200.0) {
        let a = fec_latency(bits, gbps * 1e9, compute).unwrap();
        let b = fec_latency(bits, 2.0 * gbps * 1e9, compute).unwrap();
        prop_assert!((a.accumulation_ns - 2.0 * b.accumulation_ns).abs() <= 1e-12 * a.accumulation_ns);
        prop_assert_eq!(b.compute_ns, compute);
        prop_assert!(b.total_ns() < a.total_ns());
        prop_assert!(b.total_ns() >= compute);
    }
}

#[test]
fn fec_latency_converges_to_compute_cost() {
    let mut prev = f64::INFINITY;
    for doubling in 0..30 {
        let l = fec_latency(5140, 100e9 * 2f64.powi(doubling), 20.0).unwrap();
        assert!(l.total_ns() < prev);
        assert!(l.total_ns() > 20.0);
        prev = l.total_ns();
    }
    assert!(prev - 20.0 < 1e-6);
}
