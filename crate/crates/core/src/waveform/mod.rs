//! Time-domain readout signals: gate capacitive response, avalanche
//! impulses, noise, and LTI filtering by a sampled two-port response.

mod filter;

use std::f64::consts::{LN_2, PI};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{stream_rng, DOMAIN_NOISE};

pub use filter::{apply_response, FirKernel, DEFAULT_KERNEL_LEN};

/// Default digitizer rate, 32 samples per 1.25 GHz gate period.
pub const DEFAULT_SAMPLE_RATE: f64 = 40e9;
/// Default avalanche FWHM (matches the effective gate width).
pub const DEFAULT_AVALANCHE_FWHM: f64 = 150e-12;
/// Noise is generated in chunks of this many samples, each from its own stream.
pub const NOISE_CHUNK: usize = 1 << 16;

/// `∫ exp(−4 ln2 t²/fwhm²) dt / fwhm`.
pub fn gaussian_area_factor() -> f64 {
    (PI / (4.0 * LN_2)).sqrt()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaveformError {
    #[error("invalid waveform: {0}")]
    Invalid(String),
    #[error("sample rate {rate} Hz does not resolve {f_max} Hz content")]
    BelowNyquist { rate: f64, f_max: f64 },
    #[error("pulse FWHM {fwhm} s is too short for sample rate {rate} Hz (need >= 4 samples)")]
    Unresolvable { fwhm: f64, rate: f64 },
    #[error("response grid does not cover [0, {nyquist}] Hz: {detail}")]
    GridCoverage { nyquist: f64, detail: String },
}

/// Uniformly sampled voltage trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub sample_rate: f64,
    pub t0: f64,
    pub samples: Vec<f64>,
}

impl Waveform {
    pub fn new(sample_rate: f64, t0: f64, samples: Vec<f64>) -> Result<Self, WaveformError> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(WaveformError::Invalid(format!("sample rate {sample_rate}")));
        }
        if !t0.is_finite() || samples.iter().any(|s| !s.is_finite()) {
            return Err(WaveformError::Invalid("non-finite sample or start time".into()));
        }
        Ok(Self {
            sample_rate,
            t0,
            samples,
        })
    }

    pub fn zeros(sample_rate: f64, t0: f64, n: usize) -> Result<Self, WaveformError> {
        Self::new(sample_rate, t0, vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn time_at(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    pub fn peak_to_peak(&self) -> f64 {
        let max = self.samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = self.samples.iter().cloned().fold(f64::INFINITY, f64::min);
        if self.samples.is_empty() {
            0.0
        } else {
            max - min
        }
    }

    /// Pointwise `a·self + b·other`; both traces must share timing.
    pub fn linear_combination(&self, a: f64, other: &Waveform, b: f64) -> Result<Waveform, WaveformError> {
        if self.len() != other.len() || self.sample_rate != other.sample_rate || self.t0 != other.t0 {
            return Err(WaveformError::Invalid("waveforms do not share a time base".into()));
        }
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Waveform {
            samples,
            ..self.clone()
        })
    }

    /// Add a Gaussian pulse in place, evaluated over ±6 FWHM of its peak.
    pub fn add_impulse(&mut self, spec: &ImpulseSpec) {
        let span = 6.0 * spec.fwhm;
        let k = 4.0 * LN_2 / (spec.fwhm * spec.fwhm);
        let first = ((spec.onset - span - self.t0) * self.sample_rate).floor().max(0.0) as usize;
        let last = (((spec.onset + span - self.t0) * self.sample_rate).ceil().max(0.0) as usize).min(self.len());
        for i in first..last {
            let dt = self.time_at(i) - spec.onset;
            self.samples[i] += spec.peak * (-k * dt * dt).exp();
        }
    }
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub order: u32,
    pub amplitude_v: f64,
    #[serde(default)]
    pub phase_rad: f64,
}

/// Periodic capacitive response to sinusoidal gating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateWaveSpec {
    pub f_g_hz: f64,
    pub fundamental_amp_v: f64,
    #[serde(default)]
    pub harmonics: Vec<Harmonic>,
}

impl GateWaveSpec {
    /// Fundamental plus a second harmonic at 20 % of its amplitude.
    pub fn with_default_harmonics(f_g_hz: f64, fundamental_amp_v: f64) -> Self {
        Self {
            f_g_hz,
            fundamental_amp_v,
            harmonics: vec![Harmonic {
                order: 2,
                amplitude_v: 0.2 * fundamental_amp_v,
                phase_rad: 0.0,
            }],
        }
    }

    pub fn validate(&self) -> Result<(), WaveformError> {
        if !(self.f_g_hz > 0.0 && self.f_g_hz.is_finite()) {
            return Err(WaveformError::Invalid(format!("gate frequency {}", self.f_g_hz)));
        }
        if !(self.fundamental_amp_v >= 0.0 && self.fundamental_amp_v.is_finite()) {
            return Err(WaveformError::Invalid(format!(
                "fundamental amplitude {}",
                self.fundamental_amp_v
            )));
        }
        let mut orders: Vec<u32> = self.harmonics.iter().map(|h| h.order).collect();
        orders.sort_unstable();
        if orders.iter().any(|&o| o < 2) || orders.windows(2).any(|w| w[0] == w[1]) {
            return Err(WaveformError::Invalid("harmonic orders must be distinct and >= 2".into()));
        }
        if self.harmonics.iter().any(|h| !h.amplitude_v.is_finite() || !h.phase_rad.is_finite()) {
            return Err(WaveformError::Invalid("non-finite harmonic".into()));
        }
        Ok(())
    }

    pub fn highest_frequency(&self) -> f64 {
        let max_order = self.harmonics.iter().map(|h| h.order).max().unwrap_or(1);
        self.f_g_hz * max_order as f64
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let w = 2.0 * PI * self.f_g_hz;
        let mut v = self.fundamental_amp_v * (w * t).sin();
        for h in &self.harmonics {
            v += h.amplitude_v * (h.order as f64 * w * t + h.phase_rad).sin();
        }
        v
    }
}

/// Sample the capacitive response over `duration` seconds starting at t = 0.
pub fn synth_capacitive(spec: &GateWaveSpec, duration: f64, rate: f64) -> Result<Waveform, WaveformError> {
    spec.validate()?;
    if !(duration >= 10.0 / spec.f_g_hz * (1.0 - 1e-12)) {
        return Err(WaveformError::Invalid(format!(
            "duration {duration} s is shorter than 10 gate periods"
        )));
    }
    let f_max = spec.highest_frequency();
    if !(rate > 2.0 * f_max) {
        return Err(WaveformError::BelowNyquist { rate, f_max });
    }
    let n = (duration * rate).round() as usize;
    let samples = (0..n).map(|i| spec.value_at(i as f64 / rate)).collect();
    Waveform::new(rate, 0.0, samples)
}

/// Gaussian avalanche impulse. `onset` is the time of the pulse maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpulseSpec {
    pub fwhm: f64,
    pub peak: f64,
    pub onset: f64,
}

impl ImpulseSpec {
    pub fn area(&self) -> f64 {
        self.peak * self.fwhm * gaussian_area_factor()
    }

    pub fn validate(&self) -> Result<(), WaveformError> {
        if !(self.fwhm > 0.0 && self.fwhm.is_finite()) {
            return Err(WaveformError::Invalid(format!("pulse fwhm {}", self.fwhm)));
        }
        if !(self.peak > 0.0 && self.peak.is_finite()) {
            return Err(WaveformError::Invalid(format!("pulse peak {}", self.peak)));
        }
        if !(self.onset >= 0.0 && self.onset.is_finite()) {
            return Err(WaveformError::Invalid(format!("pulse onset {}", self.onset)));
        }
        Ok(())
    }
}

/// Load impedance used to turn avalanche charge into a voltage pulse.
pub const DEFAULT_LOAD_OHM: f64 = 50.0;

/// Gaussian pulse carrying `charge` into `load_ohm`, peaking at `peak_time`.
pub fn charge_pulse(charge: f64, fwhm: f64, load_ohm: f64, peak_time: f64) -> ImpulseSpec {
    ImpulseSpec {
        fwhm,
        peak: charge * load_ohm / (fwhm * gaussian_area_factor()),
        onset: peak_time,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedPulse {
    pub waveform: Waveform,
    /// Analytic pulse area, V·s.
    pub area: f64,
}

/// A single pulse on a record spanning `[0, onset + 4·fwhm]`.
pub fn synth_avalanche(spec: &ImpulseSpec, rate: f64) -> Result<SynthesizedPulse, WaveformError> {
    spec.validate()?;
    if spec.fwhm < 4.0 / rate {
        return Err(WaveformError::Unresolvable { fwhm: spec.fwhm, rate });
    }
    let n = ((spec.onset + 4.0 * spec.fwhm) * rate).ceil() as usize + 1;
    let mut waveform = Waveform::zeros(rate, 0.0, n)?;
    waveform.add_impulse(spec);
    Ok(SynthesizedPulse {
        waveform,
        area: spec.area(),
    })
}

/// Add white Gaussian noise of the given RMS. Chunk `c` of the record
/// draws from stream `(seed, noise, c)`.
pub fn add_noise(w: &Waveform, rms_v: f64, seed: u64) -> Result<Waveform, WaveformError> {
    if !(rms_v >= 0.0 && rms_v.is_finite()) {
        return Err(WaveformError::Invalid(format!("noise rms {rms_v}")));
    }
    if rms_v == 0.0 {
        return Ok(w.clone());
    }
    let chunks: Vec<(usize, &[f64])> = w.samples.chunks(NOISE_CHUNK).enumerate().collect();
    let noisy = crate::par::map_collect(chunks, |(c, chunk)| {
        let mut rng = stream_rng(seed, DOMAIN_NOISE, c as u64);
        chunk
            .iter()
            .map(|x| {
                let z: f64 = StandardNormal.sample(&mut rng);
                x + rms_v * z
            })
            .collect::<Vec<f64>>()
    });
    Ok(Waveform {
        samples: noisy.concat(),
        ..w.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn capacitive_peak_to_peak_is_twice_amplitude() {
        let spec = GateWaveSpec {
            f_g_hz: 1.25e9,
            fundamental_amp_v: 0.42,
            harmonics: vec![],
        };
        let w = synth_capacitive(&spec, 20e-9, 40e9).unwrap();
        assert_relative_eq!(w.peak_to_peak(), 0.84, max_relative = 1e-12);
    }

    #[test]
    fn zero_fundamental_is_silent() {
        let spec = GateWaveSpec {
            f_g_hz: 1.25e9,
            fundamental_amp_v: 0.0,
            harmonics: vec![],
        };
        let w = synth_capacitive(&spec, 10e-9, 40e9).unwrap();
        assert!(w.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn capacitive_rejects_undersampling_and_short_records() {
        let spec = GateWaveSpec::with_default_harmonics(1.25e9, 0.42);
        assert!(matches!(
            synth_capacitive(&spec, 10e-9, 4.9e9),
            Err(WaveformError::BelowNyquist { .. })
        ));
        assert!(synth_capacitive(&spec, 1e-9, 40e9).is_err());
        let dup = GateWaveSpec {
            harmonics: vec![
                Harmonic {
                    order: 2,
                    amplitude_v: 0.1,
                    phase_rad: 0.0,
                },
                Harmonic {
                    order: 2,
                    amplitude_v: 0.1,
                    phase_rad: 0.0,
                },
            ],
            ..spec
        };
        assert!(dup.validate().is_err());
    }

    #[test]
    fn avalanche_peak_and_area() {
        let p = synth_avalanche(
            &ImpulseSpec {
                fwhm: 100e-12,
                peak: 1e-3,
                onset: 1e-9,
            },
            40e9,
        )
        .unwrap();
        let max = p.waveform.samples.iter().cloned().fold(0.0, f64::max);
        assert_relative_eq!(max, 1e-3, max_relative = 0.01);

        let s = ImpulseSpec {
            fwhm: 150e-12,
            peak: 1e-3,
            onset: 1e-9,
        };
        assert_relative_eq!(s.area(), 1.597e-13, max_relative = 1e-3);
        let w = synth_avalanche(&s, 40e9).unwrap().waveform;
        let riemann: f64 = w.samples.iter().sum::<f64>() / 40e9;
        assert_relative_eq!(riemann, s.area(), max_relative = 1e-6);
    }

    #[test]
    fn unresolvable_pulse() {
        let s = ImpulseSpec {
            fwhm: 50e-12,
            peak: 1e-3,
            onset: 0.0,
        };
        assert!(matches!(
            synth_avalanche(&s, 40e9),
            Err(WaveformError::Unresolvable { .. })
        ));
    }

    #[test]
    fn onset_shift_moves_correlation_peak() {
        let rate = 40e9;
        let base = ImpulseSpec {
            fwhm: 150e-12,
            peak: 1e-3,
            onset: 1e-9,
        };
        let shifted = ImpulseSpec {
            onset: 1.1e-9,
            ..base
        };
        let n = 200;
        let mut a = Waveform::zeros(rate, 0.0, n).unwrap();
        let mut b = a.clone();
        a.add_impulse(&base);
        b.add_impulse(&shifted);
        let best = (0..40)
            .max_by(|&l1, &l2| {
                let c = |lag: usize| (0..n - lag).map(|i| a.samples[i] * b.samples[i + lag]).sum::<f64>();
                c(l1).total_cmp(&c(l2))
            })
            .unwrap();
        assert_relative_eq!(best as f64 / rate, 100e-12, max_relative = 1e-9);
    }

    #[test]
    fn noise_is_deterministic_and_calibrated() {
        let w = Waveform::zeros(40e9, 0.0, 1_000_000).unwrap();
        assert_eq!(add_noise(&w, 0.0, 1).unwrap(), w);
        let a = add_noise(&w, 1e-3, 42).unwrap();
        let b = add_noise(&w, 1e-3, 42).unwrap();
        assert_eq!(a, b);
        let mean = a.samples.iter().sum::<f64>() / a.len() as f64;
        let sd = (a.samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (a.len() - 1) as f64).sqrt();
        // chi-square: relative sd of the sample sd is 1/sqrt(2n) = 0.07 %
        assert_relative_eq!(sd, 1e-3, max_relative = 0.005);
        assert_ne!(add_noise(&w, 1e-3, 43).unwrap(), a);
    }
}
