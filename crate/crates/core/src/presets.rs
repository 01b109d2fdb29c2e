//! Named detector operating points and efficiency sweeps.
//!
//! Trap means are calibrated against the default acquisition (2 ns TDC
//! dead time hides afterpulses in the first two gates), so the gate-classified
//! estimator lands on the target afterpulse probability.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use crate::apd::DetectorConfig;
use crate::characterize::Scenario;

const DETECTORS: &str = include_str!("../presets/detectors.json");
const SWEEPS: &str = include_str!("../presets/sweeps.json");

fn detectors() -> &'static BTreeMap<String, DetectorConfig> {
    static CELL: OnceLock<BTreeMap<String, DetectorConfig>> = OnceLock::new();
    CELL.get_or_init(|| serde_json::from_str(DETECTORS).expect("bundled detector presets parse"))
}

fn sweeps() -> &'static BTreeMap<String, Vec<Scenario>> {
    static CELL: OnceLock<BTreeMap<String, Vec<Scenario>>> = OnceLock::new();
    CELL.get_or_init(|| serde_json::from_str(SWEEPS).expect("bundled sweep presets parse"))
}

pub fn detector(name: &str) -> Option<DetectorConfig> {
    detectors().get(name).cloned()
}

pub fn sweep(name: &str) -> Option<Vec<Scenario>> {
    sweeps().get(name).cloned()
}

pub fn detector_names() -> Vec<&'static str> {
    detectors().keys().map(String::as_str).collect()
}

pub fn sweep_names() -> Vec<&'static str> {
    sweeps().keys().map(String::as_str).collect()
}
