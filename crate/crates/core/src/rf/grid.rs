use serde::{Deserialize, Serialize};

use super::RfError;

/// Ordered set of frequencies (Hz) on which two-port responses are sampled.
///
/// Most grids are uniform, but spectra that must resolve a sub-MHz null
/// use [`FrequencyGrid::dense_around`], which merges a coarse background
/// grid with a fine window around the null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    points: Vec<f64>,
}

impl FrequencyGrid {
    /// `n_points` uniformly spaced frequencies from `f_start` to `f_stop` inclusive.
    pub fn uniform(f_start: f64, f_stop: f64, n_points: usize) -> Result<Self, RfError> {
        if !(f_start.is_finite() && f_stop.is_finite()) || f_start < 0.0 || f_stop <= f_start {
            return Err(RfError::InvalidGrid(format!(
                "need 0 <= f_start < f_stop, got [{f_start}, {f_stop}]"
            )));
        }
        if n_points < 2 {
            return Err(RfError::InvalidGrid(format!(
                "need at least 2 points, got {n_points}"
            )));
        }
        let step = (f_stop - f_start) / (n_points - 1) as f64;
        let mut points: Vec<f64> = (0..n_points).map(|i| f_start + step * i as f64).collect();
        points[n_points - 1] = f_stop;
        Ok(Self { points })
    }

    /// The non-negative bins of a real FFT of length `fft_len` at `sample_rate`.
    pub fn fft_bins(sample_rate: f64, fft_len: usize) -> Result<Self, RfError> {
        if fft_len < 2 || fft_len % 2 != 0 {
            return Err(RfError::InvalidGrid(format!(
                "fft length must be even and >= 2, got {fft_len}"
            )));
        }
        if !(sample_rate > 0.0) {
            return Err(RfError::InvalidGrid(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        let df = sample_rate / fft_len as f64;
        let points = (0..=fft_len / 2).map(|k| k as f64 * df).collect();
        Ok(Self { points })
    }

    /// Arbitrary strictly increasing, non-negative frequencies.
    pub fn from_points(points: Vec<f64>) -> Result<Self, RfError> {
        if points.len() < 2 {
            return Err(RfError::InvalidGrid(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(RfError::InvalidGrid("frequencies must be finite and >= 0".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(RfError::InvalidGrid("frequencies must be strictly increasing".into()));
        }
        Ok(Self { points })
    }

    /// Coarse grid over `[f_start, f_stop]` with `coarse_step`, refined to
    /// `fine_step` within `center ± fine_half_span`. `center` itself is always
    /// a grid point.
    pub fn dense_around(
        center: f64,
        fine_half_span: f64,
        fine_step: f64,
        f_start: f64,
        f_stop: f64,
        coarse_step: f64,
    ) -> Result<Self, RfError> {
        if !(fine_step > 0.0 && coarse_step > 0.0 && fine_half_span >= 0.0) {
            return Err(RfError::InvalidGrid("steps must be positive".into()));
        }
        if !(f_start >= 0.0 && f_stop > f_start && center > f_start && center < f_stop) {
            return Err(RfError::InvalidGrid(format!(
                "center {center} must lie inside ({f_start}, {f_stop})"
            )));
        }
        let lo = (center - fine_half_span).max(f_start);
        let hi = (center + fine_half_span).min(f_stop);
        let mut points = Vec::new();
        let n_coarse = ((f_stop - f_start) / coarse_step).floor() as usize;
        for i in 0..=n_coarse {
            let f = f_start + coarse_step * i as f64;
            if f < lo || f > hi {
                points.push(f);
            }
        }
        if *points.last().unwrap_or(&f_start) < f_stop && hi < f_stop {
            points.push(f_stop);
        }
        // fine points are laid out symmetrically from the center so the
        // center is hit exactly
        let n_fine = (fine_half_span / fine_step).floor() as i64;
        for j in -n_fine..=n_fine {
            let f = center + fine_step * j as f64;
            if f >= lo && f <= hi {
                points.push(f);
            }
        }
        points.sort_by(f64::total_cmp);
        points.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * fine_step);
        Self::from_points(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn f_start(&self) -> f64 {
        self.points[0]
    }

    pub fn f_stop(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Index of the grid point closest to `f`.
    pub fn nearest_index(&self, f: f64) -> usize {
        match self.points.binary_search_by(|p| p.total_cmp(&f)) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) if i >= self.points.len() => self.points.len() - 1,
            Err(i) => {
                if f - self.points[i - 1] <= self.points[i] - f {
                    i - 1
                } else {
                    i
                }
            }
        }
    }

    /// Largest neighbour spacing around the grid point nearest to `f`.
    pub fn local_step(&self, f: f64) -> f64 {
        let i = self.nearest_index(f);
        let left = if i > 0 { self.points[i] - self.points[i - 1] } else { 0.0 };
        let right = if i + 1 < self.points.len() {
            self.points[i + 1] - self.points[i]
        } else {
            0.0
        };
        left.max(right)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_rejects_bad_bounds() {
        assert!(FrequencyGrid::uniform(1.0, 1.0, 10).is_err());
        assert!(FrequencyGrid::uniform(-1.0, 1.0, 10).is_err());
        assert!(FrequencyGrid::uniform(0.0, 1.0, 1).is_err());
        let g = FrequencyGrid::uniform(0.0, 10.0, 11).unwrap();
        assert_eq!(g.points()[3], 3.0);
        assert_eq!(g.f_stop(), 10.0);
    }

    #[test]
    fn fft_bins_hit_gate_frequency() {
        let g = FrequencyGrid::fft_bins(40e9, 1 << 16).unwrap();
        assert_eq!(g.len(), (1 << 15) + 1);
        assert_eq!(g.points()[2048], 1.25e9);
        assert_eq!(g.f_stop(), 20e9);
    }

    #[test]
    fn dense_grid_contains_center_and_fine_steps() {
        let g = FrequencyGrid::dense_around(1.25e9, 1e6, 1e3, 1e8, 2.6e9, 1e5).unwrap();
        let i = g.nearest_index(1.25e9);
        assert_eq!(g.points()[i], 1.25e9);
        assert!(g.local_step(1.25e9) <= 1e3 * (1.0 + 1e-9));
        assert!(g.local_step(0.5e9) <= 1e5 * (1.0 + 1e-9));
        assert_eq!(g.f_start(), 1e8);
        assert_eq!(g.f_stop(), 2.6e9);
    }

    #[test]
    fn from_points_requires_increasing() {
        assert!(FrequencyGrid::from_points(vec![1.0, 1.0]).is_err());
        assert!(FrequencyGrid::from_points(vec![2.0, 1.0]).is_err());
        assert!(FrequencyGrid::from_points(vec![0.0, 1.0]).is_ok());
    }
}
