use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{FrequencyGrid, RfError};

/// Order of the Butterworth prototype behind the SAW band-pass magnitude.
pub const SAW_BUTTERWORTH_ORDER: i32 = 4;

/// Which output of a directional coupler a path leaves through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CouplerPort {
    #[default]
    Tap,
    Through,
}

/// One linear, matched, unidirectional block of the readout chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BlockSpec {
    /// Power splitter; `tap_fraction` of the input power leaves the tap port.
    Coupler {
        tap_fraction: f64,
        #[serde(default)]
        port: CouplerPort,
    },
    /// Flat resistive attenuator (pi pad).
    Attenuator { loss_db: f64 },
    /// Pure transport delay.
    Delay { t_s: f64 },
    /// Surface acoustic wave band-pass filter.
    SawBpf {
        f_center_hz: f64,
        passband_20db_hz: f64,
        insertion_loss_db: f64,
        group_delay_s: f64,
    },
    /// RF gain block with a single-pole roll-off.
    Amplifier { gain_db: f64, bandwidth_hz: f64 },
    /// Second-order band-stop with finite depth at `f_center_hz`.
    Notch {
        f_center_hz: f64,
        depth_db: f64,
        width_10db_hz: f64,
    },
}

impl BlockSpec {
    /// The SAW filter used in the 1.25 GHz circuit.
    pub fn default_saw() -> Self {
        BlockSpec::SawBpf {
            f_center_hz: 1.25e9,
            passband_20db_hz: 35e6,
            insertion_loss_db: 3.0,
            group_delay_s: 34e-9,
        }
    }

    /// LC band-stop for the second gating harmonic.
    pub fn default_band_stop() -> Self {
        BlockSpec::Notch {
            f_center_hz: 2.5e9,
            depth_db: 100.0,
            width_10db_hz: 100e6,
        }
    }

    pub fn validate(&self) -> Result<(), RfError> {
        let bad = |msg: String| Err(RfError::InvalidBlock(msg));
        match *self {
            BlockSpec::Coupler { tap_fraction, .. } => {
                if !(tap_fraction > 0.0 && tap_fraction < 1.0) {
                    return bad(format!("coupler tap_fraction must be in (0,1), got {tap_fraction}"));
                }
            }
            BlockSpec::Attenuator { loss_db } => {
                if !loss_db.is_finite() {
                    return bad(format!("attenuator loss must be finite, got {loss_db}"));
                }
            }
            BlockSpec::Delay { t_s } => {
                if !(t_s.is_finite() && t_s >= 0.0) {
                    return bad(format!("delay must be finite and >= 0, got {t_s}"));
                }
            }
            BlockSpec::SawBpf {
                f_center_hz,
                passband_20db_hz,
                insertion_loss_db,
                group_delay_s,
            } => {
                if !(f_center_hz > 0.0 && f_center_hz.is_finite()) {
                    return bad(format!("SAW center must be positive, got {f_center_hz}"));
                }
                if !(passband_20db_hz > 0.0 && passband_20db_hz.is_finite()) {
                    return bad(format!("SAW passband must be positive, got {passband_20db_hz}"));
                }
                if !insertion_loss_db.is_finite() {
                    return bad("SAW insertion loss must be finite".into());
                }
                if !(group_delay_s >= 0.0 && group_delay_s.is_finite()) {
                    return bad(format!("SAW group delay must be >= 0, got {group_delay_s}"));
                }
            }
            BlockSpec::Amplifier {
                gain_db,
                bandwidth_hz,
            } => {
                if !gain_db.is_finite() {
                    return bad("amplifier gain must be finite".into());
                }
                if !(bandwidth_hz > 0.0 && bandwidth_hz.is_finite()) {
                    return bad(format!("amplifier bandwidth must be positive, got {bandwidth_hz}"));
                }
            }
            BlockSpec::Notch {
                f_center_hz,
                depth_db,
                width_10db_hz,
            } => {
                if !(f_center_hz > 0.0 && f_center_hz.is_finite()) {
                    return bad(format!("notch center must be positive, got {f_center_hz}"));
                }
                if !(depth_db > 10.0 && depth_db.is_finite()) {
                    return bad(format!(
                        "notch depth must exceed its 10 dB width reference, got {depth_db} dB"
                    ));
                }
                if !(width_10db_hz > 0.0 && width_10db_hz.is_finite()) {
                    return bad(format!("notch width must be positive, got {width_10db_hz}"));
                }
            }
        }
        Ok(())
    }

    /// Complex voltage transfer at a single frequency. Assumes a validated block.
    pub fn transfer_at(&self, f: f64) -> Complex64 {
        match *self {
            BlockSpec::Coupler { tap_fraction, port } => match port {
                CouplerPort::Tap => Complex64::new(tap_fraction.sqrt(), 0.0),
                CouplerPort::Through => Complex64::new((1.0 - tap_fraction).sqrt(), 0.0),
            },
            BlockSpec::Attenuator { loss_db } => Complex64::new(db_to_amplitude(-loss_db), 0.0),
            BlockSpec::Delay { t_s } => delay_phasor(f, t_s),
            BlockSpec::SawBpf {
                f_center_hz,
                passband_20db_hz,
                insertion_loss_db,
                group_delay_s,
            } => {
                let mag = saw_magnitude(f, f_center_hz, passband_20db_hz)
                    * db_to_amplitude(-insertion_loss_db);
                delay_phasor(f, group_delay_s) * mag
            }
            BlockSpec::Amplifier {
                gain_db,
                bandwidth_hz,
            } => Complex64::new(db_to_amplitude(gain_db), 0.0) / Complex64::new(1.0, f / bandwidth_hz),
            BlockSpec::Notch {
                f_center_hz,
                depth_db,
                width_10db_hz,
            } => notch_transfer(f, f_center_hz, depth_db, width_10db_hz),
        }
    }
}

pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

pub fn amplitude_to_db(a: f64) -> f64 {
    20.0 * a.log10()
}

fn delay_phasor(f: f64, t: f64) -> Complex64 {
    Complex64::from_polar(1.0, -2.0 * PI * f * t)
}

/// Band-pass Butterworth magnitude via the low-pass to band-pass map
/// `Ω = (f² − f0²) / (f·B)`, with `B` chosen so the 20 dB points are
/// `passband_20db` apart (the map preserves `f_hi − f_lo = B·Ω`).
fn saw_magnitude(f: f64, f0: f64, passband_20db: f64) -> f64 {
    if f <= 0.0 {
        return 0.0;
    }
    let n2 = 2 * SAW_BUTTERWORTH_ORDER;
    let omega_20 = 99f64.powf(1.0 / n2 as f64);
    let b = passband_20db / omega_20;
    let omega = (f * f - f0 * f0) / (f * b);
    1.0 / (1.0 + omega.powi(n2)).sqrt()
}

/// `H = (d·a + j·u) / (a + j·u)` with `u = f/f0 − f0/f`, `d` the linear
/// depth and `a` set so `|H| ≤ −10 dB` over exactly `width_10db`.
fn notch_transfer(f: f64, f0: f64, depth_db: f64, width_10db: f64) -> Complex64 {
    if f <= 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let d = db_to_amplitude(-depth_db);
    let g2 = 0.1;
    let u_edge = width_10db / f0;
    let a = u_edge / ((g2 - d * d) / (1.0 - g2)).sqrt();
    let u = f / f0 - f0 / f;
    Complex64::new(d * a, u) / Complex64::new(a, u)
}

/// Complex voltage transfer function sampled on a [`FrequencyGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPortResponse {
    grid: FrequencyGrid,
    values: Vec<Complex64>,
}

impl TwoPortResponse {
    pub fn new(grid: FrequencyGrid, values: Vec<Complex64>) -> Result<Self, RfError> {
        if values.len() != grid.len() {
            return Err(RfError::InvalidResponse(format!(
                "{} values for {} grid points",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(RfError::InvalidResponse("non-finite transfer value".into()));
        }
        Ok(Self { grid, values })
    }

    /// All-pass response (H = 1) on `grid`.
    pub fn unity(grid: FrequencyGrid) -> Self {
        let values = vec![Complex64::new(1.0, 0.0); grid.len()];
        Self { grid, values }
    }

    pub fn from_fn(grid: FrequencyGrid, h: impl Fn(f64) -> Complex64) -> Result<Self, RfError> {
        let values = grid.points().iter().map(|&f| h(f)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * k).collect(),
        }
    }

    /// Unwrapped phase in radians.
    pub fn unwrapped_phase(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.values.len());
        let mut offset = 0.0;
        let mut prev = None;
        for v in &self.values {
            let p = v.arg();
            if let Some(q) = prev {
                let mut d: f64 = p + offset - q;
                while d > PI {
                    offset -= 2.0 * PI;
                    d -= 2.0 * PI;
                }
                while d < -PI {
                    offset += 2.0 * PI;
                    d += 2.0 * PI;
                }
            }
            let unwrapped = p + offset;
            out.push(unwrapped);
            prev = Some(unwrapped);
        }
        out
    }

    /// Group delay `−dφ/dω` in seconds by centered finite differences
    /// (one-sided at the ends). Only meaningful where the grid is fine
    /// enough that the phase moves less than π between points.
    pub fn group_delay(&self) -> Vec<f64> {
        let phase = self.unwrapped_phase();
        let f = self.grid.points();
        let n = f.len();
        (0..n)
            .map(|i| {
                let (a, b) = match i {
                    0 => (0, 1),
                    _ if i == n - 1 => (n - 2, n - 1),
                    _ => (i - 1, i + 1),
                };
                -(phase[b] - phase[a]) / (2.0 * PI * (f[b] - f[a]))
            })
            .collect()
    }

    /// Linear interpolation of the complex response at `f`, which must
    /// lie within the grid.
    pub fn interpolate(&self, f: f64) -> Option<Complex64> {
        let pts = self.grid.points();
        if f < pts[0] || f > pts[pts.len() - 1] {
            return None;
        }
        let i = match pts.binary_search_by(|p| p.total_cmp(&f)) {
            Ok(i) => return Some(self.values[i]),
            Err(i) => i,
        };
        let (f0, f1) = (pts[i - 1], pts[i]);
        let t = (f - f0) / (f1 - f0);
        Some(self.values[i - 1] * (1.0 - t) + self.values[i] * t)
    }
}

/// Sample one block on `grid`.
pub fn block_response(block: &BlockSpec, grid: &FrequencyGrid) -> Result<TwoPortResponse, RfError> {
    block.validate()?;
    TwoPortResponse::from_fn(grid.clone(), |f| block.transfer_at(f))
}

/// Series connection: pointwise product of responses on an identical grid.
pub fn cascade(responses: &[TwoPortResponse]) -> Result<TwoPortResponse, RfError> {
    let first = responses
        .first()
        .ok_or_else(|| RfError::InvalidResponse("cascade of zero responses".into()))?;
    let mut values = first.values.clone();
    for r in &responses[1..] {
        if r.grid != first.grid {
            return Err(RfError::GridMismatch);
        }
        for (v, w) in values.iter_mut().zip(&r.values) {
            *v *= w;
        }
    }
    TwoPortResponse::new(first.grid.clone(), values)
}
