use proptest::prelude::*;
use unic_core::apd::*;
use unic_core::characterize::*;
use unic_core::presets;

const F_G: f64 = 1.25e9;

fn trap_config() -> DetectorConfig {
    DetectorConfig {
        eta_gate: 0.25,
        dark_per_gate: 1e-6,
        traps_per_avalanche: 2.0,
        p_trigger: 0.1,
        detrap_tau_s: 2e-9,
        ..Default::default()
    }
}

/// Every afterpulse reaches the classifier.
fn transparent_acq() -> AcquisitionConfig {
    AcquisitionConfig::dead_time_free()
}

#[test]
fn generator_identity_without_noise() {
    let det = DetectorConfig {
        dark_per_gate: 0.0,
        traps_per_avalanche: 0.0,
        ..Default::default()
    };
    let r = run_characterization(&det, &SourceConfig::default(), &AcquisitionConfig::default(), 400_000_000, 1)
        .unwrap();
    let eta = r.eta_net.unwrap();
    assert!((eta - 0.25).abs() <= 3.0 * r.sigma_eta_net.unwrap(), "{eta}");
    assert_eq!((r.p_ni, r.p_d), (0.0, 0.0));
    assert_eq!(r.p_a, Some(0.0));
    assert!(r.anomaly.is_some());
}

#[test]
fn estimator_matches_label_count_ratio() {
    let det = trap_config();
    assert!((expected_afterpulses(&det) - 0.029383).abs() < 1e-6);
    let n = 250_000_000;
    let r = run_characterization(&det, &SourceConfig::default(), &transparent_acq(), n, 2).unwrap();
    let pa = r.p_a.unwrap();
    // label ratio is itself a Poisson estimate over the primaries
    let primaries = r.counts.clicks_illuminated as f64;
    let sigma_label = (r.label_afterpulse_ratio / primaries).sqrt();
    let sigma = r.sigma_p_a.unwrap().hypot(sigma_label);
    assert!(
        (pa - r.label_afterpulse_ratio).abs() <= 3.0 * sigma,
        "{pa} vs {} (σ {sigma})",
        r.label_afterpulse_ratio
    );
}

#[test]
fn table_preset_reproduces_one_percent() {
    let det = presets::detector("apd1_minus30C").unwrap();
    let r = run_characterization(&det, &SourceConfig::default(), &AcquisitionConfig::default(), 1_250_000_000, 3)
        .unwrap();
    let pa = r.p_a.unwrap();
    assert!((pa - 0.01).abs() <= 3.0 * r.sigma_p_a.unwrap(), "P_A {pa}");
    let eta = r.eta_net.unwrap();
    assert!((eta - 0.212).abs() <= 3.0 * r.sigma_eta_net.unwrap(), "eta {eta}");
    assert!((r.p_d - 5.4e-7).abs() <= 3.0 * r.sigma_p_d);
    // non-illuminated gates at least three orders of magnitude quieter
    assert!(r.p_ni * 1e3 <= r.p_i);
}

#[test]
fn intervals_scale_with_root_n() {
    let det = trap_config();
    let src = SourceConfig::default();
    let acq = AcquisitionConfig::default();
    let a = run_characterization(&det, &src, &acq, 25_000_000, 4).unwrap();
    let b = run_characterization(&det, &src, &acq, 100_000_000, 4).unwrap();
    let ratio_eta = b.sigma_eta_net.unwrap() / a.sigma_eta_net.unwrap();
    let ratio_pa = b.sigma_p_a.unwrap() / a.sigma_p_a.unwrap();
    assert!((ratio_eta - 0.5).abs() <= 0.05, "{ratio_eta}");
    assert!((ratio_pa - 0.5).abs() <= 0.05, "{ratio_pa}");
}

#[test]
fn sweep_orders_and_duplicates() {
    let src = SourceConfig::default();
    let acq = transparent_acq();
    let low = Scenario {
        label: "low".into(),
        detector: DetectorConfig {
            eta_gate: 0.15,
            traps_per_avalanche: 1.0,
            ..trap_config()
        },
    };
    let high = Scenario {
        label: "high".into(),
        detector: DetectorConfig {
            eta_gate: 0.3,
            traps_per_avalanche: 2.5,
            ..trap_config()
        },
    };
    let out = efficiency_sweep(&[low.clone(), high], &src, &acq, 100_000_000, 5).unwrap();
    assert!(out[0].1.eta_net < out[1].1.eta_net);
    assert!(out[0].1.p_a < out[1].1.p_a);

    let dup = efficiency_sweep(&[low.clone(), low.clone()], &src, &acq, 10_000_000, 5).unwrap();
    assert_eq!(dup[0].1, dup[1].1);

    assert!(efficiency_sweep(&[low], &src, &acq, 10_000_000, 5).is_err());
}

#[test]
fn doubling_traps_doubles_afterpulsing() {
    let src = SourceConfig::default();
    let acq = transparent_acq();
    let one = Scenario {
        label: "x1".into(),
        detector: DetectorConfig {
            traps_per_avalanche: 1.0,
            ..trap_config()
        },
    };
    let two = Scenario {
        label: "x2".into(),
        detector: DetectorConfig {
            traps_per_avalanche: 2.0,
            ..trap_config()
        },
    };
    let out = efficiency_sweep(&[one, two], &src, &acq, 400_000_000, 6).unwrap();
    let (a, b) = (&out[0].1, &out[1].1);
    let diff = b.p_a.unwrap() - 2.0 * a.p_a.unwrap();
    let sigma = b.sigma_p_a.unwrap().hypot(2.0 * a.sigma_p_a.unwrap());
    assert!(diff.abs() <= 3.0 * sigma, "{} vs 2×{}", b.p_a.unwrap(), a.p_a.unwrap());
}

#[test]
fn calibrated_sweep_hits_reported_efficiencies() {
    let sweep = presets::sweep("apd1_minus30C").unwrap();
    let out = efficiency_sweep(&sweep, &SourceConfig::default(), &AcquisitionConfig::default(), 1_250_000_000, 7)
        .unwrap();
    let pts: Vec<(f64, f64)> = out.iter().map(|(_, r)| (r.eta_net.unwrap(), r.p_a.unwrap())).collect();
    let at_1 = efficiency_at_afterpulse(&pts, 0.01).unwrap();
    let at_05 = efficiency_at_afterpulse(&pts, 0.005).unwrap();
    assert!((at_1 - 0.212).abs() <= 0.02, "η at 1% = {at_1}");
    assert!((at_05 - 0.05).abs() <= 0.02, "η at 0.5% = {at_05}");
}

#[test]
fn count_rate_at_three_photons() {
    let det = DetectorConfig {
        eta_gate: 0.253,
        dark_per_gate: 0.0,
        traps_per_avalanche: 0.0,
        ..Default::default()
    };
    let n = 10_000_000;
    let pts = count_rate_vs_flux(&det, &transparent_acq(), &[3.0], n, 8).unwrap();
    let want = F_G * (1.0 - (-0.759f64).exp());
    assert!((want - 665e6).abs() < 1e6);
    assert!((pts[0].rate_hz - want).abs() <= 3.0 * pts[0].sigma_rate_hz);
}

#[test]
fn low_flux_rate_is_linear() {
    let det = DetectorConfig {
        eta_gate: 0.253,
        dark_per_gate: 0.0,
        traps_per_avalanche: 0.0,
        ..Default::default()
    };
    let flux = [0.005, 0.01, 0.02, 0.0395];
    let pts = count_rate_vs_flux(&det, &transparent_acq(), &flux, 20_000_000, 9).unwrap();
    for p in &pts {
        let lin = p.rate_hz / (F_G * p.flux * det.eta_gate);
        assert!((lin - 1.0).abs() <= 0.02, "μ {}: {lin}", p.flux);
    }
    assert!(pts.windows(2).all(|w| w[0].rate_hz < w[1].rate_hz));
}

#[test]
fn photocurrent_recovers_charge() {
    let det = DetectorConfig {
        eta_gate: 0.253,
        dark_per_gate: 0.0,
        traps_per_avalanche: 0.0,
        ..Default::default()
    };
    let p = count_rate_vs_flux(&det, &transparent_acq(), &[1.0], 2_000_000, 10).unwrap()[0];
    let q = charge_from_photocurrent(p.photocurrent_a, p.rate_hz).unwrap();
    let sigma = det.charge_cv * det.mean_charge_c / (p.clicks as f64).sqrt();
    assert!((q - 38e-15).abs() <= 3.0 * sigma, "{q}");
    assert_eq!(p.clicks, p.avalanches);
}

proptest! {
    #[test]
    fn interpolation_is_monotone_in_target(
        mut etas in prop::collection::vec(0.01f64..0.6, 2..8),
        mut pas in prop::collection::vec(0.001f64..0.1, 8),
        u in 0.0f64..1.0,
        v in 0.0f64..1.0,
    ) {
        etas.sort_by(f64::total_cmp);
        pas.truncate(etas.len());
        pas.sort_by(f64::total_cmp);
        let pts: Vec<(f64, f64)> = etas.iter().copied().zip(pas.iter().copied()).collect();
        let (lo, hi) = (pas[0], pas[pas.len() - 1]);
        let (a, b) = (lo + (hi - lo) * u.min(v), lo + (hi - lo) * u.max(v));
        let ea = efficiency_at_afterpulse(&pts, a).unwrap();
        let eb = efficiency_at_afterpulse(&pts, b).unwrap();
        prop_assert!(ea <= eb + 1e-15);
    }
}
