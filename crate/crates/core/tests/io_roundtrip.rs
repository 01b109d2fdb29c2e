use approx::assert_relative_eq;
use proptest::prelude::*;
use unic_core::acquisition::*;
use unic_core::apd::*;
use unic_core::characterize::*;
use unic_core::io::*;
use unic_core::rf::*;
use unic_core::waveform::*;

#[test]
fn spectrum_csv_roundtrip() {
    let grid = FrequencyGrid::uniform(1.0e9, 1.5e9, 501).unwrap();
    let saw = BlockSpec::SawBpf {
        f_center_hz: 1.25e9,
        passband_20db_hz: 35e6,
        insertion_loss_db: 3.0,
        group_delay_s: 33.845e-9,
    };
    let d = solve_unic_delay(33.845e-9, 1.25e9).unwrap().balanced(&saw).unwrap();
    let resp = unic_response(&d, &saw, &grid).unwrap();
    let mut buf = Vec::new();
    write_spectrum_csv(&resp, &mut buf).unwrap();
    let rows = read_spectrum_csv(buf.as_slice()).unwrap();
    assert_eq!(rows, spectrum_rows(&resp));
    let back = response_from_rows(&rows).unwrap();
    for (a, b) in resp.values().iter().zip(back.values()) {
        assert!((a - b).norm() <= 1e-12 * a.norm().max(1e-12));
    }
}

#[test]
fn design_json_roundtrip() {
    let d = solve_unic_delay(33.845e-9, 1.25e9).unwrap();
    let rep = DesignReport::from(&d);
    let mut buf = Vec::new();
    write_json(&rep, &mut buf).unwrap();
    let back: DesignReport = read_json(buf.as_slice()).unwrap();
    assert_eq!(back, rep);
}

#[test]
fn path_wrappers_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("counts.json");
    let c = GateCounts::from_counts(10, 1240, 3, 1);
    save_json(&c, &path).unwrap();
    assert_eq!(load_json::<GateCounts>(&path).unwrap(), c);

    let ts_path = dir.path().join("ts.bin");
    let ts = vec![0.0, 1e-9, 2.5e-9];
    save_with(&ts_path, |w| write_timestamps_bin(&ts, w)).unwrap();
    assert_eq!(load_with(&ts_path, read_timestamps_bin).unwrap(), ts);
    assert!(matches!(load_json::<GateCounts>(&dir.path().join("missing.json")), Err(IoError::File { .. })));
}

#[test]
fn waveform_roundtrips() {
    let w = add_noise(&Waveform::zeros(40e9, -1e-9, 3000).unwrap(), 1e-3, 1).unwrap();
    let mut bin = Vec::new();
    write_waveform_bin(&w, &mut bin).unwrap();
    assert_eq!(bin.len(), 24 + 8 * 3000);
    assert_eq!(read_waveform_bin(bin.as_slice()).unwrap(), w);

    let mut text = Vec::new();
    write_waveform_csv(&w, &mut text).unwrap();
    let back = read_waveform_csv(text.as_slice()).unwrap();
    assert_eq!(back.samples, w.samples);
    assert_eq!(back.t0, w.t0);
    assert_relative_eq!(back.sample_rate, w.sample_rate, max_relative = 1e-9);
}

#[test]
fn events_roundtrip() {
    let det = DetectorConfig {
        dark_per_gate: 1e-2,
        traps_per_avalanche: 2.0,
        p_trigger: 0.3,
        ..Default::default()
    };
    let s = simulate(&det, &SourceConfig::default(), 200_000, 3).unwrap();
    let mut buf = Vec::new();
    write_events_csv(&s, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("gate_index,time_s,kind,charge_c\n"));
    assert_eq!(read_events_csv(buf.as_slice()).unwrap(), s.events);
}

#[test]
fn histogram_and_timestamps_roundtrip() {
    let ts: Vec<f64> = (0..5000).map(|i| (i * 7919 % 100_000) as f64 * 1e-12 + i as f64 * 1e-7).collect();
    let h = histogram(&ts, 100e-9, 10e-12).unwrap();
    let mut buf = Vec::new();
    write_histogram_csv(&h, &mut buf).unwrap();
    let back = read_histogram_csv(buf.as_slice()).unwrap();
    assert_eq!(back.bins, h.bins);
    assert_relative_eq!(back.bin_width_s, h.bin_width_s, max_relative = 1e-9);
    assert_relative_eq!(back.period_s, h.period_s, max_relative = 1e-9);

    let q = tdc(&ts, &TdcSpec { dead_time_s: 0.0, ..Default::default() }).unwrap();
    let mut bin = Vec::new();
    write_timestamps_bin(&q, &mut bin).unwrap();
    let back = read_timestamps_bin(bin.as_slice()).unwrap();
    assert_eq!(back.len(), q.len());
    for (a, b) in q.iter().zip(&back) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn reports_roundtrip() {
    let c = GateCounts::from_counts(1000, 124_000, 25, 3);
    let mut buf = Vec::new();
    write_json(&c, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    for key in ["n_gates_illuminated", "n_gates_non_illuminated", "clicks_illuminated", "clicks_non_illuminated", "p_i", "p_ni"] {
        assert!(text.contains(key));
    }
    assert_eq!(read_json::<GateCounts, _>(buf.as_slice()).unwrap(), c);

    let r = RunReport::from_counts(c, 125_000, 1, 125, 0.1);
    let mut buf = Vec::new();
    write_json(&r, &mut buf).unwrap();
    assert_eq!(read_json::<RunReport, _>(buf.as_slice()).unwrap(), r);
}

proptest! {
    #[test]
    fn sweep_csv_roundtrip(
        rows in prop::collection::vec(
            (
                "[a-z_0-9]{1,12}",
                prop::option::of(0.0f64..1.0),
                prop::option::of(0.0f64..1.0),
                prop::option::of(1e-9f64..1e-3),
                prop::option::of(0.0f64..10.0),
                prop::option::of(0.0f64..1.25e9),
                prop::option::of(0.0f64..1e-4),
            ),
            0..20,
        )
    ) {
        let pts: Vec<SweepPoint> = rows
            .into_iter()
            .map(|(label, eta_net, p_a, p_d, flux, rate_hz, photocurrent_a)| SweepPoint {
                label, eta_net, p_a, p_d, flux, rate_hz, photocurrent_a,
            })
            .collect();
        let mut buf = Vec::new();
        write_sweep_csv(&pts, &mut buf).unwrap();
        prop_assert_eq!(read_sweep_csv(buf.as_slice()).unwrap(), pts);
    }
}
