use serde::{Deserialize, Serialize};

use super::{RfError, TwoPortResponse};

/// Background band used to reference null depth.
pub const BACKGROUND_BAND_HZ: (f64, f64) = (0.1e9, 2.0e9);
/// Half-width of the exclusion window around the null.
pub const BACKGROUND_EXCLUSION_HZ: f64 = 50e6;
/// Required grid resolution next to the null.
pub const MAX_NULL_STEP_HZ: f64 = 1e3;
/// A dip shallower than this is not reported as a null.
pub const MIN_NULL_DEPTH_DB: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullMetrics {
    pub f_null_hz: f64,
    /// Null depth below the background, dB.
    pub depth_db: f64,
    /// Full width over which the response is at least 30 dB below background.
    pub width_30db_hz: f64,
    /// Background loss, dB (positive for loss).
    pub background_loss_db: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Locate and characterize the interference null closest to `f_g`.
pub fn null_metrics(resp: &TwoPortResponse, f_g: f64) -> Result<NullMetrics, RfError> {
    let grid = resp.grid();
    let f = grid.points();
    if f_g < grid.f_start() || f_g > grid.f_stop() || grid.local_step(f_g) > MAX_NULL_STEP_HZ * (1.0 + 1e-9) {
        return Err(RfError::GridTooCoarse {
            f_g,
            step: grid.local_step(f_g),
        });
    }
    let mag = resp.magnitudes();

    let (lo, hi) = BACKGROUND_BAND_HZ;
    let bg_samples: Vec<f64> = f
        .iter()
        .zip(&mag)
        .filter(|(&fi, _)| fi >= lo && fi <= hi && (fi - f_g).abs() > BACKGROUND_EXCLUSION_HZ)
        .map(|(_, &m)| m)
        .collect();
    if bg_samples.is_empty() {
        return Err(RfError::NoBackground);
    }
    let background = median(bg_samples);
    if !(background > 0.0) {
        return Err(RfError::NoBackground);
    }

    // search for the minimum inside the exclusion window
    let (i_min, m_min) = f
        .iter()
        .zip(&mag)
        .enumerate()
        .filter(|(_, (&fi, _))| (fi - f_g).abs() <= BACKGROUND_EXCLUSION_HZ)
        .map(|(i, (_, &m))| (i, m))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(RfError::NoNull { depth_db: 0.0 })?;

    let rel = (m_min / background).max(f64::MIN_POSITIVE);
    let depth_db = (-20.0 * rel.log10()).max(0.0);
    if depth_db < MIN_NULL_DEPTH_DB {
        return Err(RfError::NoNull { depth_db });
    }

    let width_30db_hz = if depth_db > 30.0 {
        let level = background * 10f64.powf(-30.0 / 20.0);
        let db = |i: usize| 20.0 * (mag[i].max(f64::MIN_POSITIVE)).log10();
        let level_db = 20.0 * level.log10();
        let crossing = |inside: usize, outside: usize| {
            let (a, b) = (db(inside), db(outside));
            let t = if b != a { (level_db - a) / (b - a) } else { 0.5 };
            f[inside] + t * (f[outside] - f[inside])
        };
        let mut l = i_min;
        while l > 0 && mag[l - 1] <= level {
            l -= 1;
        }
        let mut r = i_min;
        while r + 1 < mag.len() && mag[r + 1] <= level {
            r += 1;
        }
        let left = if l > 0 { crossing(l, l - 1) } else { f[0] };
        let right = if r + 1 < mag.len() { crossing(r, r + 1) } else { f[f.len() - 1] };
        right - left
    } else {
        0.0
    };

    Ok(NullMetrics {
        f_null_hz: f[i_min],
        depth_db,
        width_30db_hz,
        background_loss_db: -20.0 * background.log10(),
    })
}
