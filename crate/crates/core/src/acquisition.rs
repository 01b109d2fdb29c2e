//! Measurement chain after the detector: threshold discrimination, TDC
//! quantisation, folded histograms and gate classification.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::apd::EventStream;
use crate::waveform::{
    add_noise, charge_pulse, GateWaveSpec, ImpulseSpec, Waveform, WaveformError, DEFAULT_AVALANCHE_FWHM,
    DEFAULT_LOAD_OHM, DEFAULT_SAMPLE_RATE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcqError {
    #[error("invalid {what}: {detail}")]
    Invalid { what: &'static str, detail: String },
    #[error("input not time-sorted at index {index}")]
    Unsorted { index: usize },
    #[error("timestamp {time_s} s maps to gate {gate}, outside [0, {n_gates})")]
    OutOfRange { time_s: f64, gate: i64, n_gates: u64 },
    #[error(transparent)]
    Waveform(#[from] WaveformError),
}

fn invalid(what: &'static str, detail: impl Into<String>) -> AcqError {
    AcqError::Invalid {
        what,
        detail: detail.into(),
    }
}

/// Times of accepted clicks, seconds.
pub type ClickTimes = Vec<f64>;
/// TDC output, seconds, integer multiples of the resolution.
pub type Timestamps = Vec<f64>;

/// Rising-edge threshold discriminator with non-paralyzable dead time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorSpec {
    pub threshold_v: f64,
    #[serde(default)]
    pub dead_time_s: f64,
}

impl Default for DiscriminatorSpec {
    fn default() -> Self {
        Self {
            threshold_v: 4e-3,
            dead_time_s: 0.0,
        }
    }
}

impl DiscriminatorSpec {
    pub fn issues(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !self.threshold_v.is_finite() {
            v.push(format!("threshold_v: must be finite, got {}", self.threshold_v));
        }
        if !(self.dead_time_s >= 0.0 && self.dead_time_s.is_finite()) {
            v.push(format!("dead_time_s: must be >= 0, got {}", self.dead_time_s));
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TdcSpec {
    pub resolution_s: f64,
    pub dead_time_s: f64,
}

impl Default for TdcSpec {
    fn default() -> Self {
        Self {
            resolution_s: 1e-12,
            dead_time_s: 2e-9,
        }
    }
}

impl TdcSpec {
    pub fn issues(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.resolution_s > 0.0 && self.resolution_s.is_finite()) {
            v.push(format!("resolution_s: must be positive, got {}", self.resolution_s));
        }
        if !(self.dead_time_s >= 0.0 && self.dead_time_s.is_finite()) {
            v.push(format!("dead_time_s: must be >= 0, got {}", self.dead_time_s));
        }
        v
    }
}

/// Upward crossings of `spec.threshold_v`, linearly interpolated between
/// samples. A crossing closer than `dead_time_s` to the last accepted
/// click is dropped and does not extend the dead period.
pub fn discriminate(w: &Waveform, spec: &DiscriminatorSpec) -> ClickTimes {
    let th = spec.threshold_v;
    let dt = w.dt();
    let mut out = Vec::new();
    let mut last: Option<f64> = None;
    for (i, pair) in w.samples.windows(2).enumerate() {
        let (a, b) = (pair[0], pair[1]);
        if a < th && b >= th {
            let t = w.time_at(i) + dt * (th - a) / (b - a);
            if last.is_none_or(|l| t - l >= spec.dead_time_s) {
                out.push(t);
                last = Some(t);
            }
        }
    }
    out
}

/// Event-level discriminator: keep sorted avalanche times that are at
/// least `dead_time` after the last kept one.
pub fn apply_dead_time(times: &[f64], dead_time: f64) -> ClickTimes {
    let mut out = Vec::with_capacity(times.len());
    let mut last: Option<f64> = None;
    for &t in times {
        if last.is_none_or(|l| t - l >= dead_time) {
            out.push(t);
            last = Some(t);
        }
    }
    out
}

fn quantize(t: f64, res: f64) -> f64 {
    (t / res).round_ties_even() * res
}

/// Quantise to the TDC resolution, then apply the non-paralyzable dead time.
pub fn tdc(clicks: &[f64], spec: &TdcSpec) -> Result<Timestamps, AcqError> {
    let v = spec.issues();
    if !v.is_empty() {
        return Err(invalid("tdc spec", v.join("; ")));
    }
    if let Some(i) = clicks.windows(2).position(|p| p[1] < p[0]) {
        return Err(AcqError::Unsorted { index: i + 1 });
    }
    let mut out = Vec::with_capacity(clicks.len());
    let mut last: Option<f64> = None;
    // compare in resolution units so that e.g. 2.0 ns − 0 ns is not 1.9999 ns
    let dead_ticks = spec.dead_time_s / spec.resolution_s;
    for &c in clicks {
        let q = quantize(c, spec.resolution_s);
        if last.is_none_or(|l| (q - l) / spec.resolution_s >= dead_ticks * (1.0 - 1e-12)) {
            out.push(q);
            last = Some(q);
        }
    }
    Ok(out)
}

/// Timestamps folded modulo `period`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width_s: f64,
    pub period_s: f64,
    pub bins: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }

    pub fn bin_start(&self, i: usize) -> f64 {
        i as f64 * self.bin_width_s
    }

    pub fn peak_index(&self) -> Option<usize> {
        let (i, &c) = self.bins.iter().enumerate().max_by_key(|&(i, c)| (*c, std::cmp::Reverse(i)))?;
        (c > 0).then_some(i)
    }

    /// Full width of the contiguous (circular) region around the peak
    /// whose counts stay at or above `peak·10^(−db/10)`.
    pub fn width_at_db(&self, db: f64) -> Option<f64> {
        let p = self.peak_index()?;
        let level = self.bins[p] as f64 * 10f64.powf(-db / 10.0);
        let n = self.bins.len();
        let above = |i: usize| self.bins[i % n] as f64 >= level;
        let mut right = 0;
        while right + 1 < n && above(p + right + 1) {
            right += 1;
        }
        let mut left = 0;
        while left + right + 1 < n && above(p + n - left - 1) {
            left += 1;
        }
        Some((left + right + 1) as f64 * self.bin_width_s)
    }
}

/// Fold timestamps into `period / bin_width` bins.
pub fn histogram(ts: &[f64], period: f64, bin_width: f64) -> Result<Histogram, AcqError> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(invalid("period", format!("must be positive, got {period}")));
    }
    if !(bin_width > 0.0 && bin_width <= period) {
        return Err(invalid("bin_width", format!("{bin_width} s must lie in (0, period = {period} s]")));
    }
    let ratio = period / bin_width;
    let n = ratio.round();
    if (ratio - n).abs() > 1e-9 * ratio {
        return Err(invalid("bin_width", format!("{bin_width} s does not divide period {period} s")));
    }
    let n = n as usize;
    let mut bins = vec![0u64; n];
    for &t in ts {
        // snap values within 1e-9 bin of an edge up, so k·period lands in bin 0
        let x = t / bin_width;
        let k = (x + 1e-9).floor() as i64;
        bins[k.rem_euclid(n as i64) as usize] += 1;
    }
    Ok(Histogram {
        bin_width_s: bin_width,
        period_s: period,
        bins,
    })
}

/// Gate-classified counting probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateCounts {
    pub n_gates_illuminated: u64,
    pub n_gates_non_illuminated: u64,
    pub clicks_illuminated: u64,
    pub clicks_non_illuminated: u64,
    pub p_i: f64,
    pub p_ni: f64,
}

impl GateCounts {
    pub fn from_counts(n_ill: u64, n_non: u64, c_ill: u64, c_non: u64) -> Self {
        let ratio = |c: u64, n: u64| if n == 0 { 0.0 } else { c as f64 / n as f64 };
        Self {
            n_gates_illuminated: n_ill,
            n_gates_non_illuminated: n_non,
            clicks_illuminated: c_ill,
            clicks_non_illuminated: c_non,
            p_i: ratio(c_ill, n_ill),
            p_ni: ratio(c_non, n_non),
        }
    }

    /// Combine counts from disjoint gate ranges.
    pub fn merge(&self, other: &GateCounts) -> GateCounts {
        Self::from_counts(
            self.n_gates_illuminated + other.n_gates_illuminated,
            self.n_gates_non_illuminated + other.n_gates_non_illuminated,
            self.clicks_illuminated + other.clicks_illuminated,
            self.clicks_non_illuminated + other.clicks_non_illuminated,
        )
    }
}

/// Gate assignment parameters for [`classify`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateMap {
    pub f_g_hz: f64,
    pub ratio: u64,
    pub illuminated_index: u64,
    pub n_gates: u64,
    /// Readout latency subtracted before rounding to the nearest gate.
    #[serde(default)]
    pub offset_s: f64,
}

impl GateMap {
    pub fn issues(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.f_g_hz > 0.0 && self.f_g_hz.is_finite()) {
            v.push(format!("f_g_hz: must be positive, got {}", self.f_g_hz));
        }
        if self.ratio < 2 {
            v.push(format!("ratio: must be >= 2, got {}", self.ratio));
        }
        if self.illuminated_index >= self.ratio.max(1) {
            v.push(format!(
                "illuminated_index: must be below ratio {}, got {}",
                self.ratio, self.illuminated_index
            ));
        }
        if self.n_gates == 0 {
            v.push("n_gates: must be >= 1".into());
        }
        if !self.offset_s.is_finite() {
            v.push(format!("offset_s: must be finite, got {}", self.offset_s));
        }
        v
    }

    pub fn gate_of(&self, t: f64) -> i64 {
        ((t - self.offset_s) * self.f_g_hz).round() as i64
    }

    pub fn is_illuminated(&self, gate: u64) -> bool {
        gate % self.ratio == self.illuminated_index
    }

    pub fn illuminated_gates(&self) -> u64 {
        if self.illuminated_index >= self.n_gates {
            0
        } else {
            (self.n_gates - self.illuminated_index).div_ceil(self.ratio)
        }
    }
}

/// Drop timestamps that fall outside the mapped gate range.
pub fn retain_in_range(ts: &mut Timestamps, map: &GateMap) {
    ts.retain(|&t| {
        let g = map.gate_of(t);
        g >= 0 && (g as u64) < map.n_gates
    });
}

/// Assign timestamps to gates and count at most one click per gate.
pub fn classify(ts: &[f64], map: &GateMap) -> Result<GateCounts, AcqError> {
    let v = map.issues();
    if !v.is_empty() {
        return Err(invalid("gate map", v.join("; ")));
    }
    let mut gates = Vec::with_capacity(ts.len());
    for &t in ts {
        let g = map.gate_of(t);
        if g < 0 || g as u64 >= map.n_gates {
            return Err(AcqError::OutOfRange {
                time_s: t,
                gate: g,
                n_gates: map.n_gates,
            });
        }
        gates.push(g as u64);
    }
    if gates.windows(2).any(|p| p[1] < p[0]) {
        gates.sort_unstable();
    }
    gates.dedup();
    let c_ill = gates.iter().filter(|&&g| map.is_illuminated(g)).count() as u64;
    let n_ill = map.illuminated_gates();
    Ok(GateCounts::from_counts(
        n_ill,
        map.n_gates - n_ill,
        c_ill,
        gates.len() as u64 - c_ill,
    ))
}

/// Counts per second over `span`.
pub fn count_rate(ts: &[f64], span: f64) -> Result<f64, AcqError> {
    if !(span > 0.0 && span.is_finite()) {
        return Err(invalid("span", format!("must be positive, got {span}")));
    }
    Ok(ts.len() as f64 / span)
}

/// How an event stream is rendered into a digitiser record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderSpec {
    pub sample_rate_hz: f64,
    pub avalanche_fwhm_s: f64,
    pub load_ohm: f64,
    /// Capacitive gate response added under the avalanches.
    #[serde(default)]
    pub gate_wave: Option<GateWaveSpec>,
    #[serde(default)]
    pub noise_rms_v: f64,
    #[serde(default)]
    pub noise_seed: u64,
    /// Extra record length before gate 0 and after the last gate, so
    /// filter start-up transients settle outside the counted gates.
    #[serde(default)]
    pub pad_s: f64,
}

impl Default for RenderSpec {
    fn default() -> Self {
        Self {
            sample_rate_hz: DEFAULT_SAMPLE_RATE,
            avalanche_fwhm_s: DEFAULT_AVALANCHE_FWHM,
            load_ohm: DEFAULT_LOAD_OHM,
            gate_wave: None,
            noise_rms_v: 0.0,
            noise_seed: 0,
            pad_s: 0.0,
        }
    }
}

/// Raw APD output for `stream`, covering gates `0..n_gates` plus half a
/// period and `pad_s` either side. Every avalanche is a Gaussian pulse of
/// its charge.
pub fn render_events(stream: &EventStream, f_g_hz: f64, spec: &RenderSpec) -> Result<Waveform, AcqError> {
    let rate = spec.sample_rate_hz;
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(invalid("sample_rate_hz", format!("must be positive, got {rate}")));
    }
    if !(spec.pad_s >= 0.0 && spec.pad_s.is_finite()) {
        return Err(invalid("pad_s", format!("must be >= 0, got {}", spec.pad_s)));
    }
    let t_end = (stream.n_gates as f64 + 0.5) / f_g_hz + spec.pad_s;
    let t0 = -0.5 / f_g_hz - spec.pad_s;
    let n = ((t_end - t0) * rate).ceil() as usize;
    let mut w = Waveform::zeros(rate, t0, n)?;
    if let Some(g) = &spec.gate_wave {
        g.validate()?;
        if !(rate > 2.0 * g.highest_frequency()) {
            return Err(WaveformError::BelowNyquist {
                rate,
                f_max: g.highest_frequency(),
            }
            .into());
        }
        for (i, s) in w.samples.iter_mut().enumerate() {
            *s = g.value_at(t0 + i as f64 / rate);
        }
    }
    for e in &stream.events {
        let pulse = charge_pulse(e.charge_c, spec.avalanche_fwhm_s, spec.load_ohm, e.time_s);
        // gate 0 avalanches may peak slightly before t = 0
        ImpulseSpec { onset: 0.0, ..pulse }.validate()?;
        w.add_impulse(&pulse);
    }
    Ok(add_noise(&w, spec.noise_rms_v, spec.noise_seed)?)
}
