use proptest::prelude::*;
use unic_core::apd::*;

fn quiet_det() -> DetectorConfig {
    DetectorConfig {
        eta_gate: 0.25,
        dark_per_gate: 0.0,
        traps_per_avalanche: 0.0,
        ..Default::default()
    }
}

/// Detector where every illuminated gate fires and illuminated gates are
/// far enough apart that their afterpulse tails never interact.
fn always_fire(n_traps: f64, p_trigger: f64, tau: f64) -> (DetectorConfig, SourceConfig) {
    let det = DetectorConfig {
        eta_gate: 0.5,
        dark_per_gate: 0.0,
        traps_per_avalanche: n_traps,
        p_trigger,
        detrap_tau_s: tau,
        f_g_hz: 1.25e9,
        gate_width_s: 0.15e-9,
        ..Default::default()
    };
    let src = SourceConfig {
        laser_rate_hz: 1.25e9 / 64.0,
        mu: 100.0,
        ..Default::default()
    };
    (det, src)
}

fn within_sigma(observed: f64, expected: f64, sigma: f64, k: f64) -> bool {
    (observed - expected).abs() <= k * sigma
}

#[test]
fn illuminated_click_fraction_matches_bernoulli() {
    let det = quiet_det();
    let src = SourceConfig::cw_carved(det.f_g_hz, 0.1);
    let n = 10_000_000u64;
    let s = simulate(&det, &src, n, 11).unwrap();
    let p = 1.0 - (-0.025f64).exp();
    assert!((p - 0.02469).abs() < 5e-6);
    let frac = s.counts().photon as f64 / n as f64;
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    assert!(within_sigma(frac, p, sigma, 3.0), "{frac} vs {p}");
    assert_eq!(s.counts().afterpulse, 0);
    assert_eq!(s.counts().dark, 0);
}

#[test]
fn afterpulses_per_avalanche_match_oracle() {
    let (det, src) = always_fire(2.0, 0.1, 2e-9);
    let a = expected_afterpulses(&det);
    approx::assert_relative_eq!(a, 0.029383, max_relative = 2e-5);
    let n_gates = 64 * 1_050_000;
    let s = simulate(&det, &src, n_gates, 5).unwrap();
    let c = s.counts();
    assert!(c.photon >= 1_000_000);
    let sigma = (a / c.photon as f64).sqrt();
    let got = c.afterpulse_ratio();
    assert!(within_sigma(got, a, sigma, 3.0), "{got} vs {a} (σ {sigma})");
}

#[test]
fn charge_statistics() {
    let det = DetectorConfig {
        dark_per_gate: 0.01,
        ..quiet_det()
    };
    let src = SourceConfig::default();
    let s = simulate(&det, &src, 4_000_000, 2).unwrap();
    let n = s.len() as f64;
    assert!(n > 1e4);
    assert!(s.events.iter().all(|e| e.charge_c > 0.0));
    let mean = s.total_charge() / n;
    let sigma = det.charge_cv * det.mean_charge_c / n.sqrt();
    assert!(within_sigma(mean, det.mean_charge_c, sigma, 3.0), "{mean}");
}

#[test]
fn labels_and_windows() {
    let det = DetectorConfig {
        dark_per_gate: 1e-3,
        traps_per_avalanche: 3.0,
        p_trigger: 0.2,
        ..Default::default()
    };
    let src = SourceConfig {
        mu: 2.0,
        illuminated_gate_phase: 3,
        ..Default::default()
    };
    let r = src.ratio(det.f_g_hz).unwrap();
    let s = simulate(&det, &src, 3_000_000, 8).unwrap();
    let half = 0.5 * det.gate_width_s;
    let mut prev = None;
    for e in &s.events {
        if e.kind == EventKind::Photon {
            assert_eq!(e.gate_index % r, 3);
        }
        let centre = e.gate_index as f64 / det.f_g_hz;
        assert!((e.time_s - centre).abs() <= half * (1.0 + 1e-9) + 1e-18);
        if let Some(p) = prev {
            assert!(e.gate_index > p, "two avalanches in gate {p}");
        }
        prev = Some(e.gate_index);
    }
    let c = s.counts();
    assert!(c.photon > 0 && c.dark > 0 && c.afterpulse > 0);
}

#[test]
fn disabling_traps_never_adds_events() {
    let on = DetectorConfig {
        dark_per_gate: 1e-3,
        traps_per_avalanche: 4.0,
        p_trigger: 0.3,
        ..Default::default()
    };
    let off = DetectorConfig {
        traps_per_avalanche: 0.0,
        ..on.clone()
    };
    let src = SourceConfig {
        mu: 1.0,
        ..Default::default()
    };
    for seed in 0..4 {
        let a = simulate(&on, &src, 1 << 21, seed).unwrap();
        let b = simulate(&off, &src, 1 << 21, seed).unwrap();
        assert!(b.len() <= a.len());
        // primaries are drawn from the same streams
        assert_eq!(a.counts().primaries(), b.counts().primaries());
    }
}

#[test]
fn shorter_runs_are_prefixes() {
    // chunk streams are fixed, so the run length and chunk boundaries
    // do not change what happens in a given gate
    let det = DetectorConfig {
        dark_per_gate: 1e-2,
        traps_per_avalanche: 2.0,
        p_trigger: 0.3,
        detrap_tau_s: 5e-9,
        ..Default::default()
    };
    let src = SourceConfig::default();
    let long = simulate(&det, &src, CHUNK_GATES * 2 + 1234, 77).unwrap();
    for n in [1000, CHUNK_GATES - 3, CHUNK_GATES + 5] {
        let short = simulate(&det, &src, n, 77).unwrap();
        let expect: Vec<Event> = long.events.iter().copied().filter(|e| e.gate_index < n).collect();
        assert_eq!(short.events, expect, "n = {n}");
    }
}

#[cfg(feature = "parallel")]
#[test]
fn thread_count_does_not_change_results() {
    let det = DetectorConfig {
        dark_per_gate: 1e-2,
        traps_per_avalanche: 2.0,
        p_trigger: 0.3,
        ..Default::default()
    };
    let src = SourceConfig::default();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate(&det, &src, CHUNK_GATES * 3 + 17, 4).unwrap())
    };
    assert_eq!(run(1), run(3));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn afterpulse_oracle_holds_for_random_trap_models(
        n_traps in 0.5f64..3.0,
        p_trigger in 0.01f64..0.1,
        tau in 0.5e-9f64..4e-9,
    ) {
        let (det, src) = always_fire(n_traps, p_trigger, tau);
        let a = expected_afterpulses(&det);
        prop_assume!(a <= 0.1 && a > 1e-4);
        let s = simulate(&det, &src, 64 * 1_000_000, 9).unwrap();
        let c = s.counts();
        let sigma = (a / c.photon as f64).sqrt();
        prop_assert!(within_sigma(c.afterpulse_ratio(), a, sigma, 3.0),
            "{} vs {}", c.afterpulse_ratio(), a);
    }
}
