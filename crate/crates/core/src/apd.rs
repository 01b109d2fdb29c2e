//! Gated APD Monte Carlo.
//!
//! Gates are indexed from 0; gate `g` is centred at `g/f_g` and open for
//! `gate_width` around the centre. Each gate holds at most one avalanche,
//! with precedence photon > dark > afterpulse. Primary avalanches trap a
//! Poisson number of carriers at the opening of their gate; each carrier
//! detraps after an exponential time and fires an afterpulse with
//! probability `p_trigger` if it is released while a later gate is open.
//!
//! Randomness is drawn per fixed chunk of [`CHUNK_GATES`] gates from
//! counter-based streams, so results do not depend on thread count.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Geometric, LogNormal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{stream_rng, DOMAIN_CASCADE, DOMAIN_DARK, DOMAIN_PHOTON, DOMAIN_TRAP};

pub const CHUNK_GATES: u64 = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApdError {
    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
}

fn check(issues: &mut Vec<String>, ok: bool, msg: impl FnOnce() -> String) {
    if !ok {
        issues.push(msg());
    }
}

fn is_prob(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub f_g_hz: f64,
    pub gate_width_s: f64,
    /// Single-gate detection efficiency η.
    pub eta_gate: f64,
    pub dark_per_gate: f64,
    pub mean_charge_c: f64,
    pub charge_cv: f64,
    /// Mean trapped carriers per avalanche.
    pub traps_per_avalanche: f64,
    pub detrap_tau_s: f64,
    pub p_trigger: f64,
    pub jitter_sigma_s: f64,
    /// Experimental: afterpulses trap carriers too. Excluded from the
    /// analytic oracle.
    #[serde(default)]
    pub cascade_afterpulses: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            f_g_hz: 1.25e9,
            gate_width_s: 150e-12,
            eta_gate: 0.25,
            dark_per_gate: 1e-6,
            mean_charge_c: 38e-15,
            charge_cv: 0.3,
            traps_per_avalanche: 0.0,
            detrap_tau_s: 2e-9,
            p_trigger: 0.1,
            jitter_sigma_s: 30e-12,
            cascade_afterpulses: false,
        }
    }
}

impl DetectorConfig {
    pub fn period(&self) -> f64 {
        1.0 / self.f_g_hz
    }

    /// Field-level problems, each prefixed with the field name.
    pub fn issues(&self) -> Vec<String> {
        let mut v = Vec::new();
        check(&mut v, self.f_g_hz > 0.0 && self.f_g_hz.is_finite(), || {
            format!("f_g_hz: must be positive, got {}", self.f_g_hz)
        });
        check(
            &mut v,
            self.gate_width_s > 0.0 && self.gate_width_s * self.f_g_hz < 1.0,
            || format!("gate_width_s: must be in (0, 1/f_g), got {}", self.gate_width_s),
        );
        for (name, p) in [
            ("eta_gate", self.eta_gate),
            ("dark_per_gate", self.dark_per_gate),
            ("p_trigger", self.p_trigger),
        ] {
            check(&mut v, is_prob(p), || format!("{name}: must be a probability, got {p}"));
        }
        check(&mut v, self.mean_charge_c > 0.0 && self.mean_charge_c.is_finite(), || {
            format!("mean_charge_c: must be positive, got {}", self.mean_charge_c)
        });
        check(&mut v, self.charge_cv >= 0.0 && self.charge_cv.is_finite(), || {
            format!("charge_cv: must be >= 0, got {}", self.charge_cv)
        });
        check(
            &mut v,
            self.traps_per_avalanche >= 0.0 && self.traps_per_avalanche.is_finite(),
            || format!("traps_per_avalanche: must be >= 0, got {}", self.traps_per_avalanche),
        );
        check(&mut v, self.detrap_tau_s > 0.0 && self.detrap_tau_s.is_finite(), || {
            format!("detrap_tau_s: must be positive, got {}", self.detrap_tau_s)
        });
        check(&mut v, self.jitter_sigma_s >= 0.0 && self.jitter_sigma_s.is_finite(), || {
            format!("jitter_sigma_s: must be >= 0, got {}", self.jitter_sigma_s)
        });
        v
    }

    pub fn validate(&self) -> Result<(), ApdError> {
        let v = self.issues();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ApdError::InvalidConfig(v))
        }
    }

    pub fn traps_on(&self) -> bool {
        self.traps_per_avalanche * self.p_trigger > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SourceMode {
    /// Mode-locked laser at a sub-multiple of the gate rate.
    #[default]
    Pulsed,
    /// CW laser carved into pulses at the gate rate: every gate illuminated.
    CwCarved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    #[serde(default)]
    pub mode: SourceMode,
    pub laser_rate_hz: f64,
    /// Mean photons per pulse μ.
    pub mu: f64,
    #[serde(default)]
    pub illuminated_gate_phase: u64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            mode: SourceMode::Pulsed,
            laser_rate_hz: 10e6,
            mu: 0.1,
            illuminated_gate_phase: 0,
        }
    }
}

impl SourceConfig {
    pub fn cw_carved(f_g_hz: f64, mu: f64) -> Self {
        Self {
            mode: SourceMode::CwCarved,
            laser_rate_hz: f_g_hz,
            mu,
            illuminated_gate_phase: 0,
        }
    }

    /// Gate-to-laser ratio R (1 in carved-CW mode).
    pub fn ratio(&self, f_g_hz: f64) -> Result<u64, ApdError> {
        let v = self.issues(f_g_hz);
        if !v.is_empty() {
            return Err(ApdError::InvalidConfig(v));
        }
        Ok(match self.mode {
            SourceMode::CwCarved => 1,
            SourceMode::Pulsed => (f_g_hz / self.laser_rate_hz).round() as u64,
        })
    }

    pub fn issues(&self, f_g_hz: f64) -> Vec<String> {
        let mut v = Vec::new();
        check(&mut v, self.mu >= 0.0 && self.mu.is_finite(), || {
            format!("mu: must be >= 0, got {}", self.mu)
        });
        if self.mode == SourceMode::Pulsed {
            let ok_rate = self.laser_rate_hz > 0.0 && self.laser_rate_hz.is_finite();
            check(&mut v, ok_rate, || {
                format!("laser_rate_hz: must be positive, got {}", self.laser_rate_hz)
            });
            if ok_rate {
                let r = (f_g_hz / self.laser_rate_hz).round();
                check(
                    &mut v,
                    r >= 1.0 && (r * self.laser_rate_hz - f_g_hz).abs() <= 1e-9 * f_g_hz,
                    || {
                        format!(
                            "laser_rate_hz: {} does not divide the gate rate {}",
                            self.laser_rate_hz, f_g_hz
                        )
                    },
                );
                check(&mut v, (self.illuminated_gate_phase as f64) < r.max(1.0), || {
                    format!(
                        "illuminated_gate_phase: must be below R = {r}, got {}",
                        self.illuminated_gate_phase
                    )
                });
            }
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Photon,
    Dark,
    Afterpulse,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Photon => "photon",
            EventKind::Dark => "dark",
            EventKind::Afterpulse => "afterpulse",
        }
    }
}

impl std::fmt::Display for EventKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EventKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "photon" => Ok(EventKind::Photon),
            "dark" => Ok(EventKind::Dark),
            "afterpulse" => Ok(EventKind::Afterpulse),
            other => Err(format!("unknown event kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub gate_index: u64,
    pub time_s: f64,
    pub kind: EventKind,
    pub charge_c: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventStream {
    pub n_gates: u64,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KindCounts {
    pub photon: u64,
    pub dark: u64,
    pub afterpulse: u64,
}

impl KindCounts {
    pub fn primaries(&self) -> u64 {
        self.photon + self.dark
    }

    pub fn total(&self) -> u64 {
        self.photon + self.dark + self.afterpulse
    }

    /// Afterpulses per primary avalanche, counted from the labels.
    pub fn afterpulse_ratio(&self) -> f64 {
        if self.primaries() == 0 {
            0.0
        } else {
            self.afterpulse as f64 / self.primaries() as f64
        }
    }
}

impl EventStream {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn counts(&self) -> KindCounts {
        let mut c = KindCounts::default();
        for e in &self.events {
            match e.kind {
                EventKind::Photon => c.photon += 1,
                EventKind::Dark => c.dark += 1,
                EventKind::Afterpulse => c.afterpulse += 1,
            }
        }
        c
    }

    pub fn times(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.time_s).collect()
    }

    pub fn total_charge(&self) -> f64 {
        self.events.iter().map(|e| e.charge_c).sum()
    }
}

/// Per-gate click probabilities under illumination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickProbabilities {
    pub p_illuminated: f64,
    pub p_non_illuminated: f64,
}

/// Probability a carrier trapped at the opening of gate 0 is released
/// while some gate `k ≥ first_gate` is open.
pub fn release_in_window_from(det: &DetectorConfig, first_gate: u64) -> f64 {
    let t = det.period();
    let tau = det.detrap_tau_s;
    if t / tau > 700.0 {
        return 0.0;
    }
    let open = -(-det.gate_width_s / tau).exp_m1();
    let denom = -(-t / tau).exp_m1();
    open * (-(first_gate as f64) * t / tau).exp() / denom
}

/// First-generation afterpulses per primary avalanche.
pub fn expected_afterpulses(det: &DetectorConfig) -> f64 {
    det.traps_per_avalanche * det.p_trigger * release_in_window_from(det, 1)
}

/// First-order click model: Poisson photon statistics, independent dark
/// counts and the mean afterpulse yield spread uniformly over gates.
pub fn expected_click_prob(det: &DetectorConfig, src: &SourceConfig) -> Result<ClickProbabilities, ApdError> {
    det.validate()?;
    let r = src.ratio(det.f_g_hz)? as f64;
    let p_d = det.dark_per_gate;
    let p_ill0 = 1.0 - (1.0 - p_d) * (-src.mu * det.eta_gate).exp();
    let mean_rate = (p_ill0 + (r - 1.0) * p_d) / r;
    let ap = expected_afterpulses(det) * mean_rate;
    let p_ni = if r > 1.0 { p_d + ap } else { p_ill0 + ap };
    Ok(ClickProbabilities {
        p_illuminated: (p_ill0 + ap).min(1.0),
        p_non_illuminated: p_ni.min(1.0),
    })
}

struct Samplers {
    charge: Option<LogNormal<f64>>,
    mean_charge: f64,
    jitter: f64,
    half_width: f64,
    period: f64,
    exp: Exp<f64>,
    trap_count: Option<Poisson<f64>>,
}

impl Samplers {
    fn new(det: &DetectorConfig) -> Self {
        let charge = (det.charge_cv > 0.0).then(|| {
            let s2 = (1.0 + det.charge_cv * det.charge_cv).ln();
            LogNormal::new(det.mean_charge_c.ln() - 0.5 * s2, s2.sqrt()).expect("finite lognormal")
        });
        let lambda = det.traps_per_avalanche * det.p_trigger;
        Self {
            charge,
            mean_charge: det.mean_charge_c,
            jitter: det.jitter_sigma_s,
            half_width: 0.5 * det.gate_width_s,
            period: det.period(),
            exp: Exp::new(1.0 / det.detrap_tau_s).expect("positive rate"),
            trap_count: (lambda > 0.0).then(|| Poisson::new(lambda).expect("positive mean")),
        }
    }

    fn charge(&self, rng: &mut ChaCha8Rng) -> f64 {
        match &self.charge {
            Some(d) => d.sample(rng),
            None => self.mean_charge,
        }
    }

    /// Gaussian jitter truncated to the open window (rejection, uniform
    /// fallback for pathological σ ≫ width).
    fn offset(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.jitter == 0.0 {
            return 0.0;
        }
        for _ in 0..64 {
            let z: f64 = StandardNormal.sample(rng);
            let o = z * self.jitter;
            if o.abs() <= self.half_width {
                return o;
            }
        }
        rng.random_range(-self.half_width..=self.half_width)
    }

    fn center(&self, gate: u64) -> f64 {
        gate as f64 * self.period
    }

    fn push_trap_candidates(&self, gate: u64, rng: &mut ChaCha8Rng, out: &mut Vec<Event>) {
        let Some(count) = &self.trap_count else { return };
        let n = count.sample(rng) as u64;
        let width = 2.0 * self.half_width;
        for _ in 0..n {
            let rel = self.exp.sample(rng);
            let k = (rel / self.period).floor();
            let off = rel - k * self.period;
            let charge = self.charge(rng);
            if k >= 1.0 && off < width && k < 1e15 {
                let target = gate + k as u64;
                out.push(Event {
                    gate_index: target,
                    time_s: self.center(target) - self.half_width + off,
                    kind: EventKind::Afterpulse,
                    charge_c: charge,
                });
            }
        }
    }
}

/// Visit successes of independent Bernoulli(p) trials `0..m` by
/// geometric skipping.
fn bernoulli_hits(p: f64, m: u64, rng: &mut ChaCha8Rng, mut hit: impl FnMut(u64, &mut ChaCha8Rng)) {
    if p <= 0.0 || m == 0 {
        return;
    }
    if p >= 1.0 {
        for j in 0..m {
            hit(j, rng);
        }
        return;
    }
    let geo = Geometric::new(p).expect("probability in (0,1)");
    let mut j = geo.sample(rng);
    while j < m {
        hit(j, rng);
        j = match j.checked_add(1 + geo.sample(rng)) {
            Some(v) => v,
            None => break,
        };
    }
}

struct ChunkOutput {
    primaries: Vec<Event>,
    candidates: Vec<Event>,
}

fn simulate_chunk(
    det: &DetectorConfig,
    s: &Samplers,
    ratio: u64,
    phase: u64,
    p_photon: f64,
    n_gates: u64,
    seed: u64,
    chunk: u64,
) -> ChunkOutput {
    let lo = chunk * CHUNK_GATES;
    let hi = (lo + CHUNK_GATES).min(n_gates);

    let mut photons = Vec::new();
    {
        let mut rng = stream_rng(seed, DOMAIN_PHOTON, chunk);
        let first = lo + (phase + ratio - lo % ratio) % ratio;
        let m = if first < hi { (hi - 1 - first) / ratio + 1 } else { 0 };
        bernoulli_hits(p_photon, m, &mut rng, |j, rng| {
            let g = first + j * ratio;
            let time_s = s.center(g) + s.offset(rng);
            photons.push(Event {
                gate_index: g,
                time_s,
                kind: EventKind::Photon,
                charge_c: s.charge(rng),
            });
        });
    }

    let mut darks = Vec::new();
    {
        let mut rng = stream_rng(seed, DOMAIN_DARK, chunk);
        bernoulli_hits(det.dark_per_gate, hi - lo, &mut rng, |j, rng| {
            let g = lo + j;
            let time_s = s.center(g) + s.offset(rng);
            darks.push(Event {
                gate_index: g,
                time_s,
                kind: EventKind::Dark,
                charge_c: s.charge(rng),
            });
        });
    }

    let mut primaries = Vec::with_capacity(photons.len() + darks.len());
    let (mut i, mut j) = (0, 0);
    while i < photons.len() || j < darks.len() {
        let take_photon = match (photons.get(i), darks.get(j)) {
            (Some(p), Some(d)) => p.gate_index <= d.gate_index,
            (Some(_), None) => true,
            _ => false,
        };
        if take_photon {
            if darks.get(j).is_some_and(|d| d.gate_index == photons[i].gate_index) {
                j += 1;
            }
            primaries.push(photons[i]);
            i += 1;
        } else {
            primaries.push(darks[j]);
            j += 1;
        }
    }

    let mut candidates = Vec::new();
    if det.traps_on() {
        let mut rng = stream_rng(seed, DOMAIN_TRAP, chunk);
        for p in &primaries {
            s.push_trap_candidates(p.gate_index, &mut rng, &mut candidates);
        }
    }
    ChunkOutput { primaries, candidates }
}

fn heap_key(e: &Event) -> Reverse<(u64, u64)> {
    Reverse((e.gate_index, e.time_s.to_bits()))
}

/// Run `n_gates` gates. Deterministic in `(det, src, n_gates, seed)`.
pub fn simulate(det: &DetectorConfig, src: &SourceConfig, n_gates: u64, seed: u64) -> Result<EventStream, ApdError> {
    det.validate()?;
    let ratio = src.ratio(det.f_g_hz)?;
    if n_gates == 0 {
        return Err(ApdError::InvalidConfig(vec!["n_gates: must be >= 1".into()]));
    }
    let phase = match src.mode {
        SourceMode::Pulsed => src.illuminated_gate_phase,
        SourceMode::CwCarved => 0,
    };
    let p_photon = -(-src.mu * det.eta_gate).exp_m1();
    let samplers = Samplers::new(det);

    let n_chunks = n_gates.div_ceil(CHUNK_GATES);
    let chunks: Vec<u64> = (0..n_chunks).collect();
    let outputs = crate::par::map_collect(chunks, |c| {
        simulate_chunk(det, &samplers, ratio, phase, p_photon, n_gates, seed, c)
    });

    let mut primaries = Vec::new();
    let mut heap = BinaryHeap::new();
    for out in outputs {
        primaries.extend(out.primaries);
        for c in out.candidates {
            heap.push((heap_key(&c), HeapEvent(c)));
        }
    }

    let occupied = |g: u64, prim: &[Event]| prim.binary_search_by(|e| e.gate_index.cmp(&g)).is_ok();
    let mut afterpulses: Vec<Event> = Vec::new();
    while let Some((_, HeapEvent(c))) = heap.pop() {
        if c.gate_index >= n_gates {
            // heap is ordered by gate, nothing later can land inside the run
            break;
        }
        if occupied(c.gate_index, &primaries) || afterpulses.last().is_some_and(|a| a.gate_index == c.gate_index) {
            continue;
        }
        afterpulses.push(c);
        if det.cascade_afterpulses {
            let mut rng = stream_rng(seed, DOMAIN_CASCADE, c.gate_index);
            let mut spawned = Vec::new();
            samplers.push_trap_candidates(c.gate_index, &mut rng, &mut spawned);
            for e in spawned {
                heap.push((heap_key(&e), HeapEvent(e)));
            }
        }
    }

    let mut events = Vec::with_capacity(primaries.len() + afterpulses.len());
    let (mut i, mut j) = (0, 0);
    while i < primaries.len() || j < afterpulses.len() {
        let take_primary = match (primaries.get(i), afterpulses.get(j)) {
            (Some(p), Some(a)) => p.gate_index < a.gate_index,
            (Some(_), None) => true,
            _ => false,
        };
        if take_primary {
            events.push(primaries[i]);
            i += 1;
        } else {
            events.push(afterpulses[j]);
            j += 1;
        }
    }
    Ok(EventStream { n_gates, events })
}

/// Heap payload ordered only through its key.
struct HeapEvent(Event);

impl PartialEq for HeapEvent {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}
impl Eq for HeapEvent {}
impl PartialOrd for HeapEvent {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEvent {
    fn cmp(&self, _: &Self) -> std::cmp::Ordering {
        std::cmp::Ordering::Equal
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn trap_det() -> DetectorConfig {
        DetectorConfig {
            traps_per_avalanche: 2.0,
            p_trigger: 0.1,
            detrap_tau_s: 2e-9,
            f_g_hz: 1.25e9,
            gate_width_s: 0.15e-9,
            ..Default::default()
        }
    }

    #[test]
    fn afterpulse_oracle_closed_form() {
        assert_relative_eq!(expected_afterpulses(&trap_det()), 0.029383, max_relative = 2e-5);
    }

    #[test]
    fn afterpulse_oracle_matches_gate_sum() {
        // sum release-in-window probabilities gate by gate
        let d = trap_det();
        let (t, tau, w) = (d.period(), d.detrap_tau_s, d.gate_width_s);
        let sum: f64 = (1..10_000)
            .map(|k| {
                let open = k as f64 * t;
                (-open / tau).exp() - (-(open + w) / tau).exp()
            })
            .sum();
        assert_relative_eq!(
            expected_afterpulses(&d),
            d.traps_per_avalanche * d.p_trigger * sum,
            max_relative = 1e-12
        );
    }

    #[test]
    fn afterpulse_oracle_limits() {
        let mut d = trap_det();
        d.detrap_tau_s = 1e-15;
        assert_eq!(expected_afterpulses(&d), 0.0);
        let mut d = trap_det();
        d.p_trigger = 0.0;
        assert_eq!(expected_afterpulses(&d), 0.0);
    }

    #[test]
    fn click_prob_arithmetic() {
        let det = DetectorConfig {
            eta_gate: 0.25,
            dark_per_gate: 1e-6,
            ..Default::default()
        };
        let src = SourceConfig::default();
        let p = expected_click_prob(&det, &src).unwrap();
        assert_relative_eq!(p.p_illuminated, 1.0 - (1.0 - 1e-6) * (-0.025f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(p.p_illuminated, 0.024691, epsilon = 5e-7);
        assert_eq!(p.p_non_illuminated, 1e-6);

        let dark_src = SourceConfig { mu: 0.0, ..src.clone() };
        assert_relative_eq!(expected_click_prob(&det, &dark_src).unwrap().p_illuminated, 1e-6, max_relative = 1e-9);
        let quiet = DetectorConfig {
            dark_per_gate: 0.0,
            ..det
        };
        assert_eq!(expected_click_prob(&quiet, &src).unwrap().p_non_illuminated, 0.0);
    }

    #[test]
    fn empty_when_blind_and_dark_free() {
        let det = DetectorConfig {
            eta_gate: 0.0,
            dark_per_gate: 0.0,
            traps_per_avalanche: 2.0,
            ..Default::default()
        };
        let s = simulate(&det, &SourceConfig::default(), 5_000_000, 1).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn invalid_configs_list_every_field() {
        let det = DetectorConfig {
            eta_gate: 1.5,
            dark_per_gate: -0.1,
            gate_width_s: 1e-9,
            ..Default::default()
        };
        match det.validate() {
            Err(ApdError::InvalidConfig(v)) => {
                assert_eq!(v.len(), 3, "{v:?}");
                assert!(v.iter().any(|s| s.starts_with("eta_gate")));
            }
            other => panic!("{other:?}"),
        }
        let src = SourceConfig {
            laser_rate_hz: 3e6,
            ..Default::default()
        };
        assert!(src.ratio(1.25e9).is_err());
        assert!(simulate(&DetectorConfig::default(), &SourceConfig::default(), 0, 1).is_err());
    }

    #[test]
    fn events_respect_windows_and_labels() {
        let det = DetectorConfig {
            dark_per_gate: 1e-4,
            traps_per_avalanche: 3.0,
            p_trigger: 0.3,
            jitter_sigma_s: 200e-12,
            ..Default::default()
        };
        let src = SourceConfig {
            mu: 2.0,
            illuminated_gate_phase: 7,
            ..Default::default()
        };
        let s = simulate(&det, &src, 3_000_000, 11).unwrap();
        assert!(s.counts().afterpulse > 0 && s.counts().dark > 0 && s.counts().photon > 0);
        let half = 0.5 * det.gate_width_s;
        let mut last = 0;
        for e in &s.events {
            let c = e.gate_index as f64 / det.f_g_hz;
            assert!(e.time_s >= c - half - 1e-18 && e.time_s <= c + half + 1e-18);
            assert!(e.charge_c > 0.0);
            assert!(e.gate_index >= last);
            last = e.gate_index;
            if e.kind == EventKind::Photon {
                assert_eq!(e.gate_index % 125, 7);
            }
        }
        assert!(s.events.windows(2).all(|w| w[0].gate_index < w[1].gate_index));
    }

    #[test]
    fn seed_determinism() {
        let det = trap_det();
        let src = SourceConfig::default();
        let a = simulate(&det, &src, 2_500_000, 5).unwrap();
        let b = simulate(&det, &src, 2_500_000, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, simulate(&det, &src, 2_500_000, 6).unwrap());
    }

    #[test]
    fn cascade_mode_runs() {
        let det = DetectorConfig {
            cascade_afterpulses: true,
            traps_per_avalanche: 5.0,
            p_trigger: 0.5,
            ..Default::default()
        };
        let src = SourceConfig { mu: 1.0, ..Default::default() };
        let plain = simulate(&DetectorConfig { cascade_afterpulses: false, ..det.clone() }, &src, 2_000_000, 3).unwrap();
        let casc = simulate(&det, &src, 2_000_000, 3).unwrap();
        assert!(casc.counts().afterpulse > plain.counts().afterpulse);
        assert_eq!(casc.counts().photon, plain.counts().photon);
    }
}
