use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{Waveform, WaveformError};
use crate::rf::{FrequencyGrid, TwoPortResponse};

/// Kernel length used when a response has to be resampled onto FFT bins.
/// At 40 GS/s this is 1.64 µs with bins at exact multiples of 1.25 GHz/2048.
pub const DEFAULT_KERNEL_LEN: usize = 1 << 16;

/// Fraction of the kernel reserved for negative lags (linear-phase blocks
/// have impulse responses symmetric about their group delay).
const PRECURSOR_DIVISOR: usize = 4;

/// Blocks transformed between merges; bounds peak memory on long records.
const MERGE_BATCH: usize = 32;

/// Real FIR kernel obtained by frequency sampling a two-port response on
/// the bins of a length-`len` FFT. Tap `m` acts at lag `m − precursor`.
#[derive(Clone)]
pub struct FirKernel {
    sample_rate: f64,
    taps: Vec<f64>,
    precursor: usize,
}

impl std::fmt::Debug for FirKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FirKernel")
            .field("sample_rate", &self.sample_rate)
            .field("len", &self.taps.len())
            .field("precursor", &self.precursor)
            .finish()
    }
}

fn matches_fft_bins(grid: &FrequencyGrid, rate: f64) -> Option<usize> {
    let n = 2 * (grid.len() - 1);
    let reference = FrequencyGrid::fft_bins(rate, n).ok()?;
    let df = rate / n as f64;
    let ok = grid
        .points()
        .iter()
        .zip(reference.points())
        .all(|(a, b)| (a - b).abs() <= 1e-9 * df);
    ok.then_some(n)
}

impl FirKernel {
    /// Build a kernel for `resp` at `rate`. If the response grid is exactly
    /// the bin set of some even FFT length it is used as is; otherwise the
    /// response is linearly interpolated onto [`DEFAULT_KERNEL_LEN`] bins.
    pub fn from_response(resp: &TwoPortResponse, rate: f64) -> Result<Self, WaveformError> {
        let nyquist = rate / 2.0;
        let grid = resp.grid();
        let (len, half): (usize, Vec<Complex64>) = match matches_fft_bins(grid, rate) {
            Some(n) => (n, resp.values().to_vec()),
            None => {
                if grid.f_start() > 0.0 || grid.f_stop() < nyquist * (1.0 - 1e-12) {
                    return Err(WaveformError::GridCoverage {
                        nyquist,
                        detail: format!("grid spans [{}, {}] Hz", grid.f_start(), grid.f_stop()),
                    });
                }
                let n = DEFAULT_KERNEL_LEN;
                let df = rate / n as f64;
                let half = (0..=n / 2)
                    .map(|k| resp.interpolate((k as f64 * df).min(grid.f_stop())).unwrap_or_default())
                    .collect();
                (n, half)
            }
        };
        let mut spectrum = vec![Complex64::default(); len];
        for (k, v) in half.iter().enumerate() {
            spectrum[k] = *v;
        }
        spectrum[0] = Complex64::new(half[0].re, 0.0);
        spectrum[len / 2] = Complex64::new(half[len / 2].re, 0.0);
        for k in 1..len / 2 {
            spectrum[len - k] = spectrum[k].conj();
        }
        FftPlanner::new().plan_fft_inverse(len).process(&mut spectrum);
        let precursor = len / PRECURSOR_DIVISOR;
        let scale = 1.0 / len as f64;
        // rotate so negative lags come first
        let taps = (0..len)
            .map(|m| spectrum[(m + len - precursor) % len].re * scale)
            .collect();
        Ok(Self {
            sample_rate: rate,
            taps,
            precursor,
        })
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Number of taps at negative lag.
    pub fn precursor(&self) -> usize {
        self.precursor
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Lag of the largest tap, seconds. For a broadband pulse this is the
    /// readout latency to subtract before gate assignment.
    pub fn peak_lag_s(&self) -> f64 {
        let m = self
            .taps
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map_or(0, |(m, _)| m);
        (m as f64 - self.precursor as f64) / self.sample_rate
    }

    /// `y[n] = Σ_m taps[m]·x[n + precursor − m]`, samples outside the record
    /// taken as zero.
    pub fn direct_at(&self, x: &[f64], n: usize) -> f64 {
        let shift = n + self.precursor;
        let m_lo = shift.saturating_sub(x.len() - 1);
        let m_hi = shift.min(self.taps.len() - 1);
        if m_lo > m_hi {
            return 0.0;
        }
        (m_lo..=m_hi).map(|m| self.taps[m] * x[shift - m]).sum()
    }

    /// Overlap-add convolution with input blocks of `block_len` samples.
    pub fn apply_blocks(&self, x: &[f64], block_len: usize) -> Vec<f64> {
        let n_out = x.len();
        if n_out == 0 {
            return Vec::new();
        }
        let block_len = block_len.clamp(1, n_out);
        let fft_len = (block_len + self.taps.len() - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd: Arc<dyn Fft<f64>> = planner.plan_fft_forward(fft_len);
        let inv: Arc<dyn Fft<f64>> = planner.plan_fft_inverse(fft_len);

        let mut kernel_spec: Vec<Complex64> = self
            .taps
            .iter()
            .map(|&t| Complex64::new(t, 0.0))
            .chain(std::iter::repeat(Complex64::default()))
            .take(fft_len)
            .collect();
        fwd.process(&mut kernel_spec);
        let scale = 1.0 / fft_len as f64;

        // z has full linear-convolution support; keep [precursor, precursor + n)
        let mut y = vec![0.0; n_out];
        let blocks: Vec<(usize, &[f64])> = x.chunks(block_len).enumerate().collect();
        for batch in blocks.chunks(MERGE_BATCH) {
            let partials = crate::par::map_collect(batch.to_vec(), |(b, chunk)| {
                let mut buf: Vec<Complex64> = chunk
                    .iter()
                    .map(|&v| Complex64::new(v, 0.0))
                    .chain(std::iter::repeat(Complex64::default()))
                    .take(fft_len)
                    .collect();
                fwd.process(&mut buf);
                for (v, k) in buf.iter_mut().zip(&kernel_spec) {
                    *v *= k;
                }
                inv.process(&mut buf);
                let used = chunk.len() + self.taps.len() - 1;
                (b * block_len, buf[..used].iter().map(|c| c.re * scale).collect::<Vec<f64>>())
            });
            for (start, part) in partials {
                for (j, v) in part.into_iter().enumerate() {
                    let z_idx = start + j;
                    if z_idx >= self.precursor {
                        let n = z_idx - self.precursor;
                        if n < n_out {
                            y[n] += v;
                        }
                    }
                }
            }
        }
        y
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.apply_blocks(x, self.taps.len())
    }
}

/// Filter `w` through `resp`. Output has the same length and time base.
pub fn apply_response(w: &Waveform, resp: &TwoPortResponse) -> Result<Waveform, WaveformError> {
    let kernel = FirKernel::from_response(resp, w.sample_rate)?;
    Ok(Waveform {
        samples: kernel.apply(&w.samples),
        ..w.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn unity_response_is_identity() {
        let rate = 40e9;
        let grid = FrequencyGrid::fft_bins(rate, 1024).unwrap();
        let k = FirKernel::from_response(&TwoPortResponse::unity(grid), rate).unwrap();
        let x: Vec<f64> = (0..3000).map(|i| ((i * 37 % 101) as f64 - 50.0) * 1e-3).collect();
        let y = k.apply_blocks(&x, 700);
        let err: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(err / norm < 1e-9);
    }

    #[test]
    fn pure_delay_shifts_samples() {
        let rate = 40e9;
        let grid = FrequencyGrid::fft_bins(rate, 256).unwrap();
        let resp = TwoPortResponse::from_fn(grid, |f| {
            Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f * 10.0 / rate)
        })
        .unwrap();
        let k = FirKernel::from_response(&resp, rate).unwrap();
        let mut x = vec![0.0; 100];
        x[20] = 1.0;
        let y = k.apply(&x);
        assert_relative_eq!(y[30], 1.0, epsilon = 1e-12);
        assert!(y[29].abs() < 1e-12);
        assert_relative_eq!(k.direct_at(&x, 30), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn coverage_is_checked() {
        let grid = FrequencyGrid::uniform(0.0, 10e9, 101).unwrap();
        let resp = TwoPortResponse::unity(grid);
        assert!(matches!(
            FirKernel::from_response(&resp, 40e9),
            Err(WaveformError::GridCoverage { .. })
        ));
    }
}
