//! Experiment configuration: one JSON document, one section per module.
//!
//! Sections are parsed independently over their defaults so that every
//! offending path is reported at once, then checked semantically.

use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use unic_core::apd::{DetectorConfig, SourceConfig};
use unic_core::characterize::{AcquisitionConfig, Scenario};
use unic_core::presets;
use unic_core::rf::BlockSpec;
use unic_core::waveform::Harmonic;

use crate::error::Issue;

pub const DEFAULT_N_GATES: u64 = 125_000_000;
pub const DEFAULT_OUTPUT_DIR: &str = "unic-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emit {
    Csv,
    Json,
    Bin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignSection {
    pub f_g_hz: f64,
    pub t_g_saw_s: f64,
    pub coupler_tap: f64,
    pub saw_passband_20db_hz: f64,
    pub saw_insertion_loss_db: f64,
}

impl Default for DesignSection {
    fn default() -> Self {
        Self {
            f_g_hz: 1.25e9,
            t_g_saw_s: 33.845e-9,
            coupler_tap: unic_core::rf::DEFAULT_COUPLER_TAP,
            saw_passband_20db_hz: 35e6,
            saw_insertion_loss_db: 3.0,
        }
    }
}

impl DesignSection {
    pub fn saw(&self) -> BlockSpec {
        BlockSpec::SawBpf {
            f_center_hz: self.f_g_hz,
            passband_20db_hz: self.saw_passband_20db_hz,
            insertion_loss_db: self.saw_insertion_loss_db,
            group_delay_s: self.t_g_saw_s,
        }
    }

    fn issues(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.f_g_hz > 0.0 && self.f_g_hz.is_finite()) {
            v.push(format!("f_g_hz: must be positive, got {}", self.f_g_hz));
        }
        if !(self.t_g_saw_s >= 0.0 && self.t_g_saw_s.is_finite()) {
            v.push(format!("t_g_saw_s: must be >= 0, got {}", self.t_g_saw_s));
        }
        if !(self.coupler_tap > 0.0 && self.coupler_tap < 1.0) {
            v.push(format!("coupler_tap: must be in (0, 1), got {}", self.coupler_tap));
        }
        if !(self.saw_passband_20db_hz > 0.0 && self.saw_passband_20db_hz.is_finite()) {
            v.push(format!(
                "saw_passband_20db_hz: must be positive, got {}",
                self.saw_passband_20db_hz
            ));
        }
        if !(self.saw_insertion_loss_db >= 0.0 && self.saw_insertion_loss_db.is_finite()) {
            v.push(format!(
                "saw_insertion_loss_db: must be >= 0, got {}",
                self.saw_insertion_loss_db
            ));
        }
        v
    }
}

/// Coarse grid with a fine window around the gate frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub f_start_hz: f64,
    pub f_stop_hz: f64,
    pub coarse_step_hz: f64,
    pub fine_half_span_hz: f64,
    pub fine_step_hz: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            f_start_hz: 0.1e9,
            f_stop_hz: 2.0e9,
            coarse_step_hz: 1e5,
            fine_half_span_hz: 1e6,
            fine_step_hz: 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    pub stages: usize,
    /// Extra attenuation in the filtered arm beyond the balance value.
    pub imbalance_db: f64,
    /// Gain blocks restoring the through-arm loss of all stages.
    pub amplifiers: bool,
    pub band_stop: bool,
    pub grid: GridSection,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            stages: 1,
            imbalance_db: 0.0,
            amplifiers: false,
            band_stop: false,
            grid: GridSection::default(),
        }
    }
}

impl SpectrumSection {
    fn issues(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.stages == 0 {
            v.push("stages: must be >= 1".to_string());
        }
        if !self.imbalance_db.is_finite() {
            v.push(format!("imbalance_db: must be finite, got {}", self.imbalance_db));
        }
        let g = &self.grid;
        for (name, x) in [
            ("coarse_step_hz", g.coarse_step_hz),
            ("fine_step_hz", g.fine_step_hz),
            ("f_stop_hz", g.f_stop_hz),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                v.push(format!("grid.{name}: must be positive, got {x}"));
            }
        }
        if !(g.f_start_hz >= 0.0 && g.f_start_hz < g.f_stop_hz) {
            v.push(format!(
                "grid.f_start_hz: must be in [0, f_stop_hz), got {}",
                g.f_start_hz
            ));
        }
        if !(g.fine_half_span_hz >= 0.0 && g.fine_half_span_hz.is_finite()) {
            v.push(format!(
                "grid.fine_half_span_hz: must be >= 0, got {}",
                g.fine_half_span_hz
            ));
        }
        if g.coarse_step_hz > 0.0 && (g.f_stop_hz - g.f_start_hz) / g.coarse_step_hz > 5e7 {
            v.push("grid.coarse_step_hz: more than 5e7 grid points".to_string());
        }
        v
    }
}

/// Capacitive gate response plus injected avalanches, filtered by the
/// default two-stage chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveformSection {
    pub amplitude_v: f64,
    /// Defaults to the built-in harmonic content when absent.
    pub harmonics: Option<Vec<Harmonic>>,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub avalanche_peak_v: f64,
    pub avalanche_fwhm_s: f64,
    /// Chance that a given gate carries an avalanche.
    pub avalanche_probability: f64,
    pub noise_rms_v: f64,
    /// Discriminator threshold in units of the filtered background RMS.
    pub threshold_factor: f64,
    pub direct_check_points: usize,
}

impl Default for WaveformSection {
    fn default() -> Self {
        Self {
            amplitude_v: 0.42,
            harmonics: None,
            duration_s: 10e-6,
            sample_rate_hz: 40e9,
            avalanche_peak_v: 1e-3,
            avalanche_fwhm_s: 150e-12,
            avalanche_probability: 0.002,
            noise_rms_v: 0.0,
            threshold_factor: 5.0,
            direct_check_points: 2000,
        }
    }
}

impl WaveformSection {
    fn issues(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, x) in [
            ("duration_s", self.duration_s),
            ("sample_rate_hz", self.sample_rate_hz),
            ("avalanche_fwhm_s", self.avalanche_fwhm_s),
            ("threshold_factor", self.threshold_factor),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                v.push(format!("{name}: must be positive, got {x}"));
            }
        }
        for (name, x) in [
            ("amplitude_v", self.amplitude_v),
            ("avalanche_peak_v", self.avalanche_peak_v),
            ("noise_rms_v", self.noise_rms_v),
        ] {
            if !(x >= 0.0 && x.is_finite()) {
                v.push(format!("{name}: must be >= 0, got {x}"));
            }
        }
        if !(0.0..=1.0).contains(&self.avalanche_probability) {
            v.push(format!(
                "avalanche_probability: must be a probability, got {}",
                self.avalanche_probability
            ));
        }
        if self.duration_s * self.sample_rate_hz > 2e9 {
            v.push("duration_s: record longer than 2e9 samples".to_string());
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HistogramSection {
    pub bin_width_s: f64,
}

impl Default for HistogramSection {
    fn default() -> Self {
        Self { bin_width_s: 10e-12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub preset: Option<String>,
    pub scenarios: Option<Vec<Scenario>>,
    pub targets_pa: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            preset: None,
            scenarios: None,
            targets_pa: vec![0.005, 0.01],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaxrateSection {
    pub flux: Vec<f64>,
    /// Rate measurements default to dead-time-free counting.
    pub acquisition: AcquisitionConfig,
}

impl Default for MaxrateSection {
    fn default() -> Self {
        Self {
            flux: vec![0.01, 0.03, 0.1, 0.2, 0.3, 1.0, 2.0, 3.0, 5.0, 10.0],
            acquisition: AcquisitionConfig::dead_time_free(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub n_gates: u64,
    pub output_dir: PathBuf,
    pub emit: Vec<Emit>,
    pub design: DesignSection,
    pub spectrum: SpectrumSection,
    pub waveform: WaveformSection,
    pub detector: DetectorConfig,
    pub source: SourceConfig,
    pub acquisition: AcquisitionConfig,
    pub histogram: HistogramSection,
    pub sweep: SweepSection,
    pub maxrate: MaxrateSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: None,
            n_gates: DEFAULT_N_GATES,
            output_dir: PathBuf::from(DEFAULT_OUTPUT_DIR),
            emit: vec![Emit::Csv, Emit::Json, Emit::Bin],
            design: DesignSection::default(),
            spectrum: SpectrumSection::default(),
            waveform: WaveformSection::default(),
            detector: DetectorConfig::default(),
            source: SourceConfig::default(),
            acquisition: AcquisitionConfig::default(),
            histogram: HistogramSection::default(),
            sweep: SweepSection::default(),
            maxrate: MaxrateSection::default(),
        }
    }
}

const SECTIONS: [&str; 13] = [
    "seed",
    "n_gates",
    "output_dir",
    "emit",
    "design",
    "spectrum",
    "waveform",
    "detector",
    "source",
    "acquisition",
    "histogram",
    "sweep",
    "maxrate",
];

/// Recursive object merge; `over` wins, non-objects are replaced whole.
fn overlay(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => overlay(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

fn parse_at<T: DeserializeOwned>(path: &str, v: Value, issues: &mut Vec<Issue>) -> Option<T> {
    match serde_path_to_error::deserialize::<_, T>(v) {
        Ok(t) => Some(t),
        Err(e) => {
            let inner = e.path().to_string();
            let full = if inner == "." || inner.is_empty() {
                path.to_string()
            } else if inner.starts_with('[') {
                format!("{path}{inner}")
            } else {
                format!("{path}.{inner}")
            };
            issues.push(Issue::new(full, e.into_inner().to_string()));
            None
        }
    }
}

fn parse_over_default<T: DeserializeOwned + Serialize + Clone>(
    path: &str,
    base: &T,
    user: Option<Value>,
    issues: &mut Vec<Issue>,
) -> Option<T> {
    let Some(user) = user else {
        return Some(base.clone());
    };
    if !user.is_object() {
        issues.push(Issue::new(path, "must be an object"));
        return None;
    }
    let mut v = serde_json::to_value(base).expect("defaults serialize");
    overlay(&mut v, user);
    parse_at(path, v, issues)
}

/// A detector object, optionally `{"preset": name, ...overrides}`.
fn parse_detector(path: &str, user: Option<Value>, issues: &mut Vec<Issue>) -> Option<DetectorConfig> {
    let mut base = DetectorConfig::default();
    let mut user = user;
    if let Some(Value::Object(m)) = user.as_mut() {
        if let Some(p) = m.remove("preset") {
            match p.as_str().map(|s| (s, presets::detector(s))) {
                Some((_, Some(d))) => base = d,
                Some((name, None)) => {
                    issues.push(Issue::new(
                        format!("{path}.preset"),
                        format!(
                            "unknown detector preset {name:?} (known: {})",
                            presets::detector_names().join(", ")
                        ),
                    ));
                    return None;
                }
                None => {
                    issues.push(Issue::new(format!("{path}.preset"), "must be a string"));
                    return None;
                }
            }
        }
    }
    let d = parse_over_default(path, &base, user, issues)?;
    let found: Vec<Issue> = d
        .issues()
        .into_iter()
        .map(|s| Issue::from_field(path, &s))
        .collect();
    if found.is_empty() {
        Some(d)
    } else {
        issues.extend(found);
        None
    }
}

fn parse_sweep(user: Option<Value>, issues: &mut Vec<Issue>) -> Option<SweepSection> {
    let Some(user) = user else {
        return Some(SweepSection::default());
    };
    let Value::Object(mut m) = user else {
        issues.push(Issue::new("sweep", "must be an object"));
        return None;
    };
    // scenario detectors may themselves use presets
    let mut scenarios = None;
    if let Some(raw) = m.remove("scenarios") {
        let Value::Array(items) = raw else {
            issues.push(Issue::new("sweep.scenarios", "must be a list"));
            return None;
        };
        let mut out = Vec::new();
        let mut ok = true;
        for (i, item) in items.into_iter().enumerate() {
            let at = format!("sweep.scenarios[{i}]");
            let Value::Object(mut s) = item else {
                issues.push(Issue::new(at, "must be an object"));
                ok = false;
                continue;
            };
            let label = match s.remove("label") {
                Some(Value::String(l)) => l,
                _ => {
                    issues.push(Issue::new(format!("{at}.label"), "must be a string"));
                    ok = false;
                    continue;
                }
            };
            if let Some(k) = s.keys().find(|k| *k != "detector") {
                issues.push(Issue::new(format!("{at}.{k}"), "unknown field"));
                ok = false;
                continue;
            }
            match parse_detector(&format!("{at}.detector"), s.remove("detector"), issues) {
                Some(detector) => out.push(Scenario { label, detector }),
                None => ok = false,
            }
        }
        if !ok {
            return None;
        }
        scenarios = Some(out);
    }
    let mut sec: SweepSection = parse_at("sweep", Value::Object(m), issues)?;
    sec.scenarios = scenarios;
    Some(sec)
}

impl ExperimentConfig {
    /// Parse and validate a full config document.
    pub fn from_json_str(text: &str) -> Result<Self, Vec<Issue>> {
        let doc: Value = serde_json::from_str(text).map_err(|e| vec![Issue::new("$", e.to_string())])?;
        Self::from_value(doc)
    }

    pub fn from_value(doc: Value) -> Result<Self, Vec<Issue>> {
        let Value::Object(mut m) = doc else {
            return Err(vec![Issue::new("$", "config must be a JSON object")]);
        };
        let mut issues = Vec::new();
        for k in m.keys() {
            if !SECTIONS.contains(&k.as_str()) {
                issues.push(Issue::new(k.clone(), "unknown field"));
            }
        }
        let d = Self::default();
        let mut take = |k: &str| m.remove(k);

        let seed = match take("seed") {
            None | Some(Value::Null) => Some(None),
            Some(v) => parse_at::<u64>("seed", v, &mut issues).map(Some),
        };
        let n_gates = match take("n_gates") {
            None => Some(d.n_gates),
            Some(v) => parse_at::<u64>("n_gates", v, &mut issues),
        };
        let output_dir = match take("output_dir") {
            None => Some(d.output_dir.clone()),
            Some(v) => parse_at::<PathBuf>("output_dir", v, &mut issues),
        };
        let emit = match take("emit") {
            None => Some(d.emit.clone()),
            Some(v) => parse_at::<Vec<Emit>>("emit", v, &mut issues),
        };
        let design = parse_over_default("design", &d.design, take("design"), &mut issues);
        let spectrum = parse_over_default("spectrum", &d.spectrum, take("spectrum"), &mut issues);
        let waveform = parse_over_default("waveform", &d.waveform, take("waveform"), &mut issues);
        let detector = parse_detector("detector", take("detector"), &mut issues);
        let source = parse_over_default("source", &d.source, take("source"), &mut issues);
        let acquisition = parse_over_default("acquisition", &d.acquisition, take("acquisition"), &mut issues);
        let histogram = parse_over_default("histogram", &d.histogram, take("histogram"), &mut issues);
        let sweep = parse_sweep(take("sweep"), &mut issues);
        let maxrate = parse_over_default("maxrate", &d.maxrate, take("maxrate"), &mut issues);

        // failed sections fall back to defaults so the semantic checks
        // still cover everything that did parse
        let complete = [
            seed.is_some(),
            n_gates.is_some(),
            output_dir.is_some(),
            emit.is_some(),
            design.is_some(),
            spectrum.is_some(),
            waveform.is_some(),
            detector.is_some(),
            source.is_some(),
            acquisition.is_some(),
            histogram.is_some(),
            sweep.is_some(),
            maxrate.is_some(),
        ]
        .iter()
        .all(|x| *x);
        let cfg = Self {
            seed: seed.unwrap_or(d.seed),
            n_gates: n_gates.unwrap_or(d.n_gates),
            output_dir: output_dir.unwrap_or(d.output_dir),
            emit: emit.unwrap_or(d.emit),
            design: design.unwrap_or(d.design),
            spectrum: spectrum.unwrap_or(d.spectrum),
            waveform: waveform.unwrap_or(d.waveform),
            detector: detector.unwrap_or(d.detector),
            source: source.unwrap_or(d.source),
            acquisition: acquisition.unwrap_or(d.acquisition),
            histogram: histogram.unwrap_or(d.histogram),
            sweep: sweep.unwrap_or(d.sweep),
            maxrate: maxrate.unwrap_or(d.maxrate),
        };
        issues.extend(cfg.issues());
        if complete && issues.is_empty() {
            Ok(cfg)
        } else {
            Err(issues)
        }
    }

    /// Cross-field checks on an already well-typed config.
    pub fn issues(&self) -> Vec<Issue> {
        let mut v = Vec::new();
        let mut add = |prefix: &str, list: Vec<String>| {
            v.extend(list.into_iter().map(|s| Issue::from_field(prefix, &s)));
        };
        add("design", self.design.issues());
        add("spectrum", self.spectrum.issues());
        add("waveform", self.waveform.issues());
        add("source", self.source.issues(self.detector.f_g_hz));
        add("acquisition", self.acquisition.issues());
        add("maxrate.acquisition", self.maxrate.acquisition.issues());
        if self.n_gates == 0 {
            v.push(Issue::new("n_gates", "must be positive"));
        }
        if !(self.histogram.bin_width_s > 0.0 && self.histogram.bin_width_s.is_finite()) {
            v.push(Issue::new(
                "histogram.bin_width_s",
                format!("must be positive, got {}", self.histogram.bin_width_s),
            ));
        }
        if let Some(name) = &self.sweep.preset {
            if presets::sweep(name).is_none() {
                v.push(Issue::new(
                    "sweep.preset",
                    format!(
                        "unknown sweep preset {name:?} (known: {})",
                        presets::sweep_names().join(", ")
                    ),
                ));
            }
            if self.sweep.scenarios.is_some() {
                v.push(Issue::new("sweep.scenarios", "give either preset or scenarios, not both"));
            }
        }
        for (i, t) in self.sweep.targets_pa.iter().enumerate() {
            if !(*t >= 0.0 && t.is_finite()) {
                v.push(Issue::new(format!("sweep.targets_pa[{i}]"), format!("must be >= 0, got {t}")));
            }
        }
        for (i, f) in self.maxrate.flux.iter().enumerate() {
            if !(*f >= 0.0 && f.is_finite()) {
                v.push(Issue::new(format!("maxrate.flux[{i}]"), format!("must be >= 0, got {f}")));
            }
        }
        if self.maxrate.flux.is_empty() {
            v.push(Issue::new("maxrate.flux", "must not be empty"));
        }
        if self.emit.is_empty() {
            v.push(Issue::new("emit", "must list at least one of csv, json, bin"));
        }
        v
    }

    pub fn emits(&self, e: Emit) -> bool {
        self.emit.contains(&e)
    }

    /// The scenarios a sweep runs over: explicit list, preset, or the
    /// configured detector alone.
    pub fn sweep_scenarios(&self) -> Vec<Scenario> {
        if let Some(s) = &self.sweep.scenarios {
            return s.clone();
        }
        if let Some(name) = &self.sweep.preset {
            return presets::sweep(name).unwrap_or_default();
        }
        vec![Scenario {
            label: "detector".into(),
            detector: self.detector.clone(),
        }]
    }
}
