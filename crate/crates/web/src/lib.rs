//! WebAssembly bindings for the static demo page. Every entry point takes
//! plain numbers and returns a JSON string.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use unic_core::apd::DetectorConfig;
use unic_core::characterize::{count_rate_vs_flux, AcquisitionConfig};
use unic_core::rf::{
    amplitude_to_db, null_metrics, solve_unic_delay, BlockSpec, DesignReport, FrequencyGrid, NullMetrics,
    ReadoutChain, UnicDesign,
};

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

fn saw(t_g_s: f64, f_g_hz: f64) -> BlockSpec {
    BlockSpec::SawBpf {
        f_center_hz: f_g_hz,
        passband_20db_hz: 35e6,
        insertion_loss_db: 3.0,
        group_delay_s: t_g_s,
    }
}

fn balanced(t_g_ns: f64, f_g_ghz: f64) -> Result<(UnicDesign, BlockSpec), String> {
    let (t_g, f_g) = (t_g_ns * 1e-9, f_g_ghz * 1e9);
    let s = saw(t_g, f_g);
    let d = solve_unic_delay(t_g, f_g)
        .and_then(|d| d.balanced(&s))
        .map_err(|e| e.to_string())?;
    Ok((d, s))
}

#[derive(Serialize)]
struct DesignOut {
    #[serde(flatten)]
    report: DesignReport,
    delta_t_ps: f64,
}

/// Track delay and balance attenuation for a SAW delay `t_g_ns` at `f_g_ghz`.
pub fn design_json(t_g_ns: f64, f_g_ghz: f64) -> Result<String, String> {
    let (d, _) = balanced(t_g_ns, f_g_ghz)?;
    Ok(to_json(&DesignOut {
        report: DesignReport::from(&d),
        delta_t_ps: d.delta_t_s * 1e12,
    }))
}

#[derive(Serialize)]
struct SpectrumOut {
    freq_hz: Vec<f64>,
    mag_db: Vec<f64>,
    metrics: Option<NullMetrics>,
}

/// |S21| around the gate frequency for `stages` identical interferometers
/// with `imbalance_db` of extra filtered-arm loss.
pub fn spectrum_json(t_g_ns: f64, f_g_ghz: f64, stages: u32, imbalance_db: f64, span_mhz: f64) -> Result<String, String> {
    let err = |e: unic_core::rf::RfError| e.to_string();
    let (d, s) = balanced(t_g_ns, f_g_ghz)?;
    if !(1..=4).contains(&stages) {
        return Err("stages must be 1 to 4".into());
    }
    let d = d.clone().with_attenuation((d.att_balance_db + imbalance_db).max(0.0));
    let f_g = d.f_g_hz;
    let half = (span_mhz * 0.5e6).clamp(1e6, 0.4 * f_g);
    let chain = ReadoutChain {
        design: d,
        saw: s,
        stages: stages as usize,
        amplifiers: Vec::new(),
        band_stop: None,
    };
    // plotting grid plus a fine window for the metrics
    let plot = FrequencyGrid::uniform(f_g - half, f_g + half, 1201).map_err(err)?;
    let resp = chain.response(&plot).map_err(err)?;
    let fine = FrequencyGrid::dense_around(f_g, 1e6, 1e3, 0.1 * f_g, 1.6 * f_g, 1e6).map_err(err)?;
    let metrics = chain
        .response(&fine)
        .ok()
        .and_then(|r| null_metrics(&r, f_g).ok());
    Ok(to_json(&SpectrumOut {
        freq_hz: plot.points().to_vec(),
        mag_db: resp.magnitudes().into_iter().map(amplitude_to_db).collect(),
        metrics,
    }))
}

#[derive(Serialize)]
struct RateOut {
    flux: Vec<f64>,
    rate_hz: Vec<f64>,
    linear_hz: Vec<f64>,
    saturation_hz: Vec<f64>,
}

/// Simulated click rate against mean photon number per gate, with the
/// low-flux line and the closed-form saturation curve.
pub fn count_rate_json(eta: f64, flux_max: f64, points: u32, n_gates: u32, seed: u32) -> Result<String, String> {
    let det = DetectorConfig {
        eta_gate: eta,
        dark_per_gate: 0.0,
        traps_per_avalanche: 0.0,
        ..Default::default()
    };
    let points = points.clamp(2, 60) as usize;
    if !(flux_max > 0.0 && flux_max <= 100.0) {
        return Err("flux_max must be in (0, 100]".into());
    }
    let flux: Vec<f64> = (1..=points).map(|i| flux_max * i as f64 / points as f64).collect();
    let pts = count_rate_vs_flux(
        &det,
        &AcquisitionConfig::dead_time_free(),
        &flux,
        u64::from(n_gates.max(1000)),
        u64::from(seed),
    )
    .map_err(|e| e.to_string())?;
    let f_g = det.f_g_hz;
    Ok(to_json(&RateOut {
        rate_hz: pts.iter().map(|p| p.rate_hz).collect(),
        linear_hz: flux.iter().map(|m| f_g * m * eta).collect(),
        saturation_hz: flux.iter().map(|m| f_g * (1.0 - (-m * eta).exp())).collect(),
        flux,
    }))
}

#[wasm_bindgen]
pub fn design(t_g_ns: f64, f_g_ghz: f64) -> Result<String, JsError> {
    design_json(t_g_ns, f_g_ghz).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn spectrum(t_g_ns: f64, f_g_ghz: f64, stages: u32, imbalance_db: f64, span_mhz: f64) -> Result<String, JsError> {
    spectrum_json(t_g_ns, f_g_ghz, stages, imbalance_db, span_mhz).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn count_rate(eta: f64, flux_max: f64, points: u32, n_gates: u32, seed: u32) -> Result<String, JsError> {
    count_rate_json(eta, flux_max, points, n_gates, seed).map_err(|e| JsError::new(&e))
}
