//! Counting-probability estimators and the experiment drivers built on
//! the event-level simulator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{
    apply_dead_time, classify, tdc, AcqError, DiscriminatorSpec, GateCounts, GateMap, TdcSpec, Timestamps,
};
use crate::apd::{simulate, ApdError, DetectorConfig, EventStream, SourceConfig, SourceMode};
use crate::rng::derive_seed;

/// Seed tag for the laser-off dark run.
const TAG_LASER_OFF: u64 = 0x6c61_7365_725f_6f66;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CharError {
    #[error("no net photon signal: p_i = {p_i} <= p_ni = {p_ni}")]
    NoNetSignal { p_i: f64, p_ni: f64 },
    #[error("non-illuminated below dark: p_ni = {p_ni} < p_d = {p_d}")]
    BelowDark { p_ni: f64, p_d: f64 },
    #[error("invalid {what}: {detail}")]
    Invalid { what: &'static str, detail: String },
    #[error("target {target} outside swept range [{lo}, {hi}]")]
    NotBracketed { target: f64, lo: f64, hi: f64 },
    #[error(transparent)]
    Apd(#[from] ApdError),
    #[error(transparent)]
    Acq(#[from] AcqError),
}

fn invalid(what: &'static str, detail: impl Into<String>) -> CharError {
    CharError::Invalid {
        what,
        detail: detail.into(),
    }
}

/// Afterpulses per photon-induced event, `(p_ni − p_d)·r / (p_i − p_ni)`.
pub fn afterpulse_probability(p_i: f64, p_ni: f64, p_d: f64, r: u64) -> Result<f64, CharError> {
    if r < 1 {
        return Err(invalid("r", "must be >= 1"));
    }
    for (name, p) in [("p_i", p_i), ("p_ni", p_ni), ("p_d", p_d)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid("probability", format!("{name} = {p}")));
        }
    }
    if p_i <= p_ni {
        return Err(CharError::NoNetSignal { p_i, p_ni });
    }
    if p_ni < p_d {
        return Err(CharError::BelowDark { p_ni, p_d });
    }
    Ok((p_ni - p_d) * r as f64 / (p_i - p_ni))
}

/// Net detection efficiency `ln((1 − p_ni)/(1 − p_i)) / μ`.
pub fn net_efficiency(p_i: f64, p_ni: f64, mu: f64) -> Result<f64, CharError> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(invalid("mu", format!("must be positive, got {mu}")));
    }
    if !(0.0..1.0).contains(&p_i) || !(0.0..1.0).contains(&p_ni) {
        return Err(invalid("probability", format!("p_i = {p_i}, p_ni = {p_ni} must lie in [0, 1)")));
    }
    Ok(((1.0 - p_ni) / (1.0 - p_i)).ln() / mu)
}

/// Avalanche charge implied by a photocurrent at a given count rate.
pub fn charge_from_photocurrent(current_a: f64, rate_hz: f64) -> Result<f64, CharError> {
    if !(rate_hz > 0.0 && rate_hz.is_finite()) {
        return Err(invalid("rate", format!("must be positive, got {rate_hz}")));
    }
    Ok(current_a / rate_hz)
}

/// Acquisition settings for the event-level path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionConfig {
    #[serde(default)]
    pub discriminator: DiscriminatorSpec,
    #[serde(default)]
    pub tdc: TdcSpec,
    /// Skip the TDC; clicks are timestamped exactly.
    #[serde(default)]
    pub bypass_tdc: bool,
}

impl AcquisitionConfig {
    /// Ideal counting for rate measurements: no dead time anywhere.
    pub fn dead_time_free() -> Self {
        Self {
            discriminator: DiscriminatorSpec {
                dead_time_s: 0.0,
                ..Default::default()
            },
            tdc: TdcSpec {
                dead_time_s: 0.0,
                ..Default::default()
            },
            bypass_tdc: false,
        }
    }

    pub fn issues(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .discriminator
            .issues()
            .into_iter()
            .map(|s| format!("discriminator.{s}"))
            .collect();
        v.extend(self.tdc.issues().into_iter().map(|s| format!("tdc.{s}")));
        v
    }
}

/// Discriminator dead time then TDC, applied to avalanche times.
pub fn event_timestamps(stream: &EventStream, acq: &AcquisitionConfig) -> Result<Timestamps, CharError> {
    let clicks = apply_dead_time(&stream.times(), acq.discriminator.dead_time_s);
    if acq.bypass_tdc {
        return Ok(clicks);
    }
    Ok(tdc(&clicks, &acq.tdc)?)
}

/// Estimates from one laser-on and one laser-off run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub p_i: f64,
    pub p_ni: f64,
    pub p_d: f64,
    pub r: u64,
    pub mu: f64,
    /// Absent when the estimator is undefined for these counts.
    pub p_a: Option<f64>,
    pub eta_net: Option<f64>,
    pub sigma_p_i: f64,
    pub sigma_p_ni: f64,
    pub sigma_p_d: f64,
    pub sigma_p_a: Option<f64>,
    pub sigma_eta_net: Option<f64>,
    pub counts: GateCounts,
    pub dark_gates: u64,
    pub dark_clicks: u64,
    /// Afterpulse labels per primary avalanche in the laser-on run.
    pub label_afterpulse_ratio: f64,
    pub anomaly: Option<String>,
}

fn binomial_sigma(p: f64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        (p * (1.0 - p) / n as f64).sqrt()
    }
}

impl RunReport {
    /// Apply the estimators with delta-method 1σ propagation.
    pub fn from_counts(counts: GateCounts, dark_gates: u64, dark_clicks: u64, r: u64, mu: f64) -> Self {
        let p_d = if dark_gates == 0 {
            0.0
        } else {
            dark_clicks as f64 / dark_gates as f64
        };
        let (p_i, p_ni) = (counts.p_i, counts.p_ni);
        let s_i = binomial_sigma(p_i, counts.n_gates_illuminated);
        let s_ni = binomial_sigma(p_ni, counts.n_gates_non_illuminated);
        let s_d = binomial_sigma(p_d, dark_gates);
        let mut anomaly = None;

        let (p_a, sigma_p_a) = match afterpulse_probability(p_i, p_ni, p_d, r) {
            Ok(pa) => {
                let rf = r as f64;
                let den = p_i - p_ni;
                let d_ni = rf * (p_i - p_d) / (den * den);
                let d_i = -(p_ni - p_d) * rf / (den * den);
                let d_d = -rf / den;
                let var = (d_ni * s_ni).powi(2) + (d_i * s_i).powi(2) + (d_d * s_d).powi(2);
                if p_ni == 0.0 && p_d == 0.0 {
                    anomaly = Some("p_ni = p_d = 0: no excess counts observed".to_string());
                }
                (Some(pa), Some(var.sqrt()))
            }
            Err(e) => {
                anomaly = Some(e.to_string());
                (None, None)
            }
        };
        let (eta_net, sigma_eta_net) = match net_efficiency(p_i, p_ni, mu) {
            Ok(eta) => {
                let d_i = 1.0 / (mu * (1.0 - p_i));
                let d_ni = -1.0 / (mu * (1.0 - p_ni));
                let var = (d_i * s_i).powi(2) + (d_ni * s_ni).powi(2);
                (Some(eta), Some(var.sqrt()))
            }
            Err(e) => {
                let msg = e.to_string();
                anomaly = Some(match anomaly {
                    Some(a) => format!("{a}; {msg}"),
                    None => msg,
                });
                (None, None)
            }
        };
        Self {
            p_i,
            p_ni,
            p_d,
            r,
            mu,
            p_a,
            eta_net,
            sigma_p_i: s_i,
            sigma_p_ni: s_ni,
            sigma_p_d: s_d,
            sigma_p_a,
            sigma_eta_net,
            counts,
            dark_gates,
            dark_clicks,
            label_afterpulse_ratio: 0.0,
            anomaly,
        }
    }
}

fn check_run(src: &SourceConfig, r: u64, n_gates: u64) -> Result<(), CharError> {
    if src.mode != SourceMode::Pulsed {
        return Err(invalid("source", "characterisation needs a pulsed source"));
    }
    if r < 2 {
        return Err(invalid("source", format!("gate-to-laser ratio R = {r} must be >= 2")));
    }
    if n_gates < 10 * r {
        return Err(invalid("n_gates", format!("{n_gates} is below 10·R = {}", 10 * r)));
    }
    Ok(())
}

/// Laser-on run classified into illuminated/non-illuminated gates, plus a
/// laser-off run of equal length for the dark probability.
pub fn run_characterization(
    det: &DetectorConfig,
    src: &SourceConfig,
    acq: &AcquisitionConfig,
    n_gates: u64,
    seed: u64,
) -> Result<RunReport, CharError> {
    let r = src.ratio(det.f_g_hz)?;
    check_run(src, r, n_gates)?;
    let v = acq.issues();
    if !v.is_empty() {
        return Err(invalid("acquisition", v.join("; ")));
    }
    let map = GateMap {
        f_g_hz: det.f_g_hz,
        ratio: r,
        illuminated_index: src.illuminated_gate_phase,
        n_gates,
        offset_s: 0.0,
    };
    let on = simulate(det, src, n_gates, seed)?;
    let counts = classify(&event_timestamps(&on, acq)?, &map)?;

    let dark_src = SourceConfig { mu: 0.0, ..src.clone() };
    let off = simulate(det, &dark_src, n_gates, derive_seed(seed, TAG_LASER_OFF))?;
    let dark_ts = event_timestamps(&off, acq)?;
    let dark = classify(&dark_ts, &map)?;
    let dark_clicks = dark.clicks_illuminated + dark.clicks_non_illuminated;

    let mut report = RunReport::from_counts(counts, n_gates, dark_clicks, r, src.mu);
    report.label_afterpulse_ratio = on.counts().afterpulse_ratio();
    Ok(report)
}

/// A named detector operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub label: String,
    pub detector: DetectorConfig,
}

/// One row of a sweep table; columns a sweep does not measure are empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SweepPoint {
    pub label: String,
    pub eta_net: Option<f64>,
    pub p_a: Option<f64>,
    pub p_d: Option<f64>,
    pub flux: Option<f64>,
    pub rate_hz: Option<f64>,
    pub photocurrent_a: Option<f64>,
}

impl SweepPoint {
    pub fn from_report(label: &str, r: &RunReport) -> Self {
        Self {
            label: label.to_string(),
            eta_net: r.eta_net,
            p_a: r.p_a,
            p_d: Some(r.p_d),
            flux: Some(r.mu),
            rate_hz: None,
            photocurrent_a: None,
        }
    }
}

/// Characterise every scenario with the same seed, so differences between
/// points come from the configurations rather than from sampling noise.
pub fn efficiency_sweep(
    scenarios: &[Scenario],
    src: &SourceConfig,
    acq: &AcquisitionConfig,
    n_gates: u64,
    seed: u64,
) -> Result<Vec<(String, RunReport)>, CharError> {
    if scenarios.len() < 2 {
        return Err(invalid("scenarios", format!("need at least 2, got {}", scenarios.len())));
    }
    let jobs: Vec<&Scenario> = scenarios.iter().collect();
    let results = crate::par::map_collect(jobs, |s| {
        run_characterization(&s.detector, src, acq, n_gates, seed).map(|r| (s.label.clone(), r))
    });
    results.into_iter().collect()
}

/// `eta_net` at `target_pa`, by linear interpolation between the sweep
/// points ordered by `p_a`.
pub fn efficiency_at_afterpulse(points: &[(f64, f64)], target_pa: f64) -> Result<f64, CharError> {
    if points.is_empty() {
        return Err(invalid("sweep", "no points"));
    }
    let mut pts: Vec<(f64, f64)> = points.iter().map(|&(eta, pa)| (pa, eta)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let (lo, hi) = (pts[0].0, pts[pts.len() - 1].0);
    if !(target_pa >= lo && target_pa <= hi) {
        return Err(CharError::NotBracketed {
            target: target_pa,
            lo,
            hi,
        });
    }
    for pair in pts.windows(2) {
        let ((pa0, e0), (pa1, e1)) = (pair[0], pair[1]);
        if target_pa >= pa0 && target_pa <= pa1 {
            if pa1 == pa0 {
                return Ok(e0.max(e1));
            }
            return Ok(e0 + (e1 - e0) * (target_pa - pa0) / (pa1 - pa0));
        }
    }
    Ok(pts[0].1)
}

/// One flux point of a carved-CW count-rate measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub flux: f64,
    pub rate_hz: f64,
    pub sigma_rate_hz: f64,
    /// Total avalanche charge over the run span.
    pub photocurrent_a: f64,
    pub avalanches: u64,
    pub clicks: u64,
}

impl RatePoint {
    pub fn sweep_point(&self, label: &str) -> SweepPoint {
        SweepPoint {
            label: label.to_string(),
            flux: Some(self.flux),
            rate_hz: Some(self.rate_hz),
            photocurrent_a: Some(self.photocurrent_a),
            ..Default::default()
        }
    }
}

/// Count rate and photocurrent under a CW laser carved at the gate rate.
pub fn count_rate_vs_flux(
    det: &DetectorConfig,
    acq: &AcquisitionConfig,
    flux_list: &[f64],
    n_gates: u64,
    seed: u64,
) -> Result<Vec<RatePoint>, CharError> {
    det.validate()?;
    let v = acq.issues();
    if !v.is_empty() {
        return Err(invalid("acquisition", v.join("; ")));
    }
    if let Some(bad) = flux_list.iter().find(|f| !(**f >= 0.0 && f.is_finite())) {
        return Err(invalid("flux", format!("{bad} is not a photon number")));
    }
    let span = n_gates as f64 / det.f_g_hz;
    let points = crate::par::map_collect(flux_list.to_vec(), |mu| -> Result<RatePoint, CharError> {
        let src = SourceConfig::cw_carved(det.f_g_hz, mu);
        let s = simulate(det, &src, n_gates, seed)?;
        let ts = event_timestamps(&s, acq)?;
        let rate = ts.len() as f64 / span;
        let p = ts.len() as f64 / n_gates as f64;
        Ok(RatePoint {
            flux: mu,
            rate_hz: rate,
            sigma_rate_hz: det.f_g_hz * binomial_sigma(p, n_gates),
            photocurrent_a: s.total_charge() / span,
            avalanches: s.len() as u64,
            clicks: ts.len() as u64,
        })
    });
    points.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn afterpulse_arithmetic() {
        assert_relative_eq!(afterpulse_probability(0.02, 2e-5, 4e-6, 125).unwrap(), 0.1001, max_relative = 1e-3);
        assert_eq!(afterpulse_probability(0.02, 4e-6, 4e-6, 125).unwrap(), 0.0);
        assert!(matches!(
            afterpulse_probability(0.01, 0.01, 0.0, 125),
            Err(CharError::NoNetSignal { .. })
        ));
        assert!(matches!(
            afterpulse_probability(0.02, 1e-6, 2e-6, 125),
            Err(CharError::BelowDark { .. })
        ));
    }

    #[test]
    fn afterpulse_error_messages() {
        let e = afterpulse_probability(0.01, 0.02, 0.0, 125).unwrap_err();
        assert!(e.to_string().contains("no net photon signal"));
        let e = afterpulse_probability(0.02, 1e-6, 2e-6, 125).unwrap_err();
        assert!(e.to_string().contains("non-illuminated below dark"));
    }

    #[test]
    fn efficiency_arithmetic() {
        assert_relative_eq!(net_efficiency(0.0211, 1e-5, 0.1).unwrap(), 0.213158, max_relative = 1e-5);
        assert_relative_eq!(net_efficiency(0.0211, 0.0, 0.1).unwrap(), 0.21326, max_relative = 1e-4);
        assert_eq!(net_efficiency(0.3, 0.3, 0.1).unwrap(), 0.0);
        assert_relative_eq!(net_efficiency(1e-4, 0.0, 0.1).unwrap(), 1.00005e-3, max_relative = 1e-5);
        assert!(net_efficiency(1.0, 0.0, 0.1).is_err());
        assert!(net_efficiency(0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn interpolation() {
        let pts = [(0.10, 0.004), (0.20, 0.012)];
        assert_relative_eq!(efficiency_at_afterpulse(&pts, 0.01).unwrap(), 0.175, max_relative = 1e-12);
        assert!(matches!(
            efficiency_at_afterpulse(&pts, 0.001),
            Err(CharError::NotBracketed { .. })
        ));
        assert!(efficiency_at_afterpulse(&pts, 0.02).is_err());
        assert_eq!(efficiency_at_afterpulse(&pts, 0.004).unwrap(), 0.10);
    }

    #[test]
    fn charge_inversion() {
        assert_relative_eq!(charge_from_photocurrent(26.6e-6, 700e6).unwrap(), 38e-15, max_relative = 1e-3);
        assert_eq!(charge_from_photocurrent(0.0, 1e6).unwrap(), 0.0);
        assert!(charge_from_photocurrent(1e-6, 0.0).is_err());
    }

    #[test]
    fn report_is_recomputable() {
        let counts = GateCounts::from_counts(1000, 124_000, 25, 3);
        let r = RunReport::from_counts(counts, 125_000, 1, 125, 0.1);
        let pa = afterpulse_probability(r.p_i, r.p_ni, r.p_d, r.r).unwrap();
        assert_eq!(r.p_a, Some(pa));
        assert_eq!(r.eta_net, Some(net_efficiency(r.p_i, r.p_ni, r.mu).unwrap()));
        assert!(r.sigma_p_a.unwrap() > 0.0 && r.sigma_eta_net.unwrap() > 0.0);
        assert!(r.anomaly.is_none());
    }

    #[test]
    fn anomalies_are_reported_not_clamped() {
        let counts = GateCounts::from_counts(1000, 124_000, 25, 0);
        let r = RunReport::from_counts(counts, 125_000, 5, 125, 0.1);
        assert_eq!(r.p_a, None);
        assert!(r.anomaly.unwrap().contains("below dark"));
        let quiet = RunReport::from_counts(counts, 125_000, 0, 125, 0.1);
        assert_eq!(quiet.p_a, Some(0.0));
        assert!(quiet.anomaly.is_some());
    }

    #[test]
    fn run_rejects_bad_setups() {
        let det = DetectorConfig::default();
        let acq = AcquisitionConfig::default();
        let cw = SourceConfig::cw_carved(det.f_g_hz, 0.1);
        assert!(run_characterization(&det, &cw, &acq, 10_000, 0).is_err());
        assert!(run_characterization(&det, &SourceConfig::default(), &acq, 1000, 0).is_err());
    }
}
