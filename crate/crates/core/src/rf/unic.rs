//! Asymmetric RF interferometer that nulls the gating fundamental.
//!
//! The input coupler sends `coupler_tap` of the power into the filtered
//! arm (attenuator, SAW band-pass, track delay `delta_t`) and the rest into
//! the through arm. The output coupler recombines them. With the arm
//! delay difference equal to a half-integer number of gate periods and
//! equal arm amplitudes at `f_g`, the two phasors cancel at `f_g` while
//! frequencies outside the SAW passband see only the through arm.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::blocks::{amplitude_to_db, db_to_amplitude};
use super::{block_response, cascade, BlockSpec, CouplerPort, FrequencyGrid, RfError, TwoPortResponse};

/// Default power fraction routed into the filtered arm (the "9:1" couplers
/// with the 90 % ports facing the SAW arm).
pub const DEFAULT_COUPLER_TAP: f64 = 0.9;

const EQ_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnicDesign {
    pub f_g_hz: f64,
    pub t_g_saw_s: f64,
    pub n: u64,
    pub delta_t_s: f64,
    pub att_balance_db: f64,
    pub coupler_tap: f64,
    /// Set when `delta_t` is not below the half-wave `1/(2 f_g)`.
    pub half_wave_warning: bool,
}

/// Flat record written as the JSON design report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub f_g_hz: f64,
    pub t_g_saw_s: f64,
    pub n: u64,
    pub delta_t_s: f64,
    pub att_balance_db: f64,
    pub half_wave_warning: bool,
}

impl From<&UnicDesign> for DesignReport {
    fn from(d: &UnicDesign) -> Self {
        Self {
            f_g_hz: d.f_g_hz,
            t_g_saw_s: d.t_g_saw_s,
            n: d.n,
            delta_t_s: d.delta_t_s,
            att_balance_db: d.att_balance_db,
            half_wave_warning: d.half_wave_warning,
        }
    }
}

impl UnicDesign {
    /// Total differential delay `T_g + δt` between the arms.
    pub fn differential_delay(&self) -> f64 {
        self.t_g_saw_s + self.delta_t_s
    }

    /// `(N + 1/2)/f_g − T_g − δt`, zero for a consistent design.
    pub fn delay_residual(&self) -> f64 {
        (self.n as f64 + 0.5) / self.f_g_hz - self.t_g_saw_s - self.delta_t_s
    }

    pub fn with_coupler_tap(mut self, tap: f64) -> Self {
        self.coupler_tap = tap;
        self
    }

    pub fn with_attenuation(mut self, att_db: f64) -> Self {
        self.att_balance_db = att_db;
        self
    }

    /// Attenuation solved by [`balance_attenuation`] for `saw`.
    pub fn balanced(mut self, saw: &BlockSpec) -> Result<Self, RfError> {
        self.att_balance_db = balance_attenuation(&self, saw)?;
        Ok(self)
    }
}

/// Smallest `N ≥ 0` with a non-negative track delay
/// `δt = (N + 1/2)/f_g − T_g`.
pub fn solve_unic_delay(t_g_saw: f64, f_g: f64) -> Result<UnicDesign, RfError> {
    if !(t_g_saw >= 0.0 && t_g_saw.is_finite()) {
        return Err(RfError::InvalidDesign(format!(
            "SAW group delay must be finite and >= 0, got {t_g_saw}"
        )));
    }
    if !(f_g > 0.0 && f_g.is_finite()) {
        return Err(RfError::InvalidDesign(format!(
            "gating frequency must be positive, got {f_g}"
        )));
    }
    let periods = t_g_saw * f_g;
    // tolerance so that an exact half-integer T_g·f_g gives δt = 0 rather
    // than a full extra period
    let n = (periods - 0.5 - EQ_TOL * periods.max(1.0)).ceil().max(0.0) as u64;
    let mut delta_t = (n as f64 + 0.5) / f_g - t_g_saw;
    if delta_t < 0.0 {
        delta_t = 0.0;
    }
    let half_wave = 0.5 / f_g;
    let half_wave_warning = delta_t >= half_wave * (1.0 - EQ_TOL);
    Ok(UnicDesign {
        f_g_hz: f_g,
        t_g_saw_s: t_g_saw,
        n,
        delta_t_s: delta_t,
        att_balance_db: 0.0,
        coupler_tap: DEFAULT_COUPLER_TAP,
        half_wave_warning,
    })
}

fn saw_group_delay(saw: &BlockSpec) -> Result<f64, RfError> {
    match saw {
        BlockSpec::SawBpf { group_delay_s, .. } => Ok(*group_delay_s),
        other => Err(RfError::InvalidDesign(format!(
            "filtered arm needs a SAW band-pass, got {other:?}"
        ))),
    }
}

fn check_design(design: &UnicDesign, saw: &BlockSpec) -> Result<(), RfError> {
    saw.validate()?;
    BlockSpec::Coupler {
        tap_fraction: design.coupler_tap,
        port: CouplerPort::Tap,
    }
    .validate()?;
    let gd = saw_group_delay(saw)?;
    let scale = gd.abs().max(design.t_g_saw_s.abs()).max(1e-15);
    if (gd - design.t_g_saw_s).abs() > 1e-9 * scale {
        return Err(RfError::DesignMismatch {
            design_s: design.t_g_saw_s,
            saw_s: gd,
        });
    }
    Ok(())
}

fn filtered_arm_blocks(design: &UnicDesign, saw: &BlockSpec) -> [BlockSpec; 5] {
    let tap = BlockSpec::Coupler {
        tap_fraction: design.coupler_tap,
        port: CouplerPort::Tap,
    };
    [
        tap.clone(),
        BlockSpec::Attenuator {
            loss_db: design.att_balance_db,
        },
        saw.clone(),
        BlockSpec::Delay {
            t_s: design.delta_t_s,
        },
        tap,
    ]
}

fn through_arm_blocks(design: &UnicDesign) -> [BlockSpec; 2] {
    let thr = BlockSpec::Coupler {
        tap_fraction: design.coupler_tap,
        port: CouplerPort::Through,
    };
    [thr.clone(), thr]
}

fn chain_at(blocks: &[BlockSpec], f: f64) -> Complex64 {
    blocks.iter().map(|b| b.transfer_at(f)).product()
}

/// Attenuation (dB, ≥ 0) that equalizes the arm amplitudes at `f_g`.
pub fn balance_attenuation(design: &UnicDesign, saw: &BlockSpec) -> Result<f64, RfError> {
    check_design(design, saw)?;
    let unpadded = design.clone().with_attenuation(0.0);
    let filtered = chain_at(&filtered_arm_blocks(&unpadded, saw), design.f_g_hz).norm();
    let through = chain_at(&through_arm_blocks(design), design.f_g_hz).norm();
    let att = amplitude_to_db(filtered / through);
    if att < -1e-12 {
        return Err(RfError::InfeasibleBalance { filtered, through });
    }
    Ok(att.max(0.0))
}

/// Transfer of the whole interferometer at one frequency.
pub fn unic_transfer_at(design: &UnicDesign, saw: &BlockSpec, f: f64) -> Complex64 {
    chain_at(&through_arm_blocks(design), f) + chain_at(&filtered_arm_blocks(design, saw), f)
}

/// Through arm + filtered arm, sampled on `grid`.
pub fn unic_response(
    design: &UnicDesign,
    saw: &BlockSpec,
    grid: &FrequencyGrid,
) -> Result<TwoPortResponse, RfError> {
    check_design(design, saw)?;
    TwoPortResponse::from_fn(grid.clone(), |f| unic_transfer_at(design, saw, f))
}

/// The through-arm amplitude alone, i.e. the broadband loss of one stage.
pub fn through_amplitude(design: &UnicDesign) -> f64 {
    1.0 - design.coupler_tap
}

/// Full readout chain: `stages` identical interferometers, gain blocks and
/// an optional harmonic band-stop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutChain {
    pub design: UnicDesign,
    pub saw: BlockSpec,
    pub stages: usize,
    #[serde(default)]
    pub amplifiers: Vec<BlockSpec>,
    #[serde(default)]
    pub band_stop: Option<BlockSpec>,
}

impl ReadoutChain {
    /// Two balanced 1.25 GHz stages, three 6 GHz amplifiers restoring the
    /// through-arm loss, and the 2.5 GHz band-stop.
    pub fn default_two_stage() -> Result<Self, RfError> {
        let saw = BlockSpec::SawBpf {
            f_center_hz: 1.25e9,
            passband_20db_hz: 35e6,
            insertion_loss_db: 3.0,
            group_delay_s: 33.845e-9,
        };
        let design = solve_unic_delay(33.845e-9, 1.25e9)?.balanced(&saw)?;
        let loss_db = -2.0 * amplitude_to_db(through_amplitude(&design));
        let amp = |gain_db: f64| BlockSpec::Amplifier {
            gain_db,
            bandwidth_hz: 6e9,
        };
        Ok(Self {
            design,
            saw,
            stages: 2,
            amplifiers: vec![amp(loss_db / 3.0), amp(loss_db / 3.0), amp(loss_db / 3.0)],
            band_stop: Some(BlockSpec::default_band_stop()),
        })
    }

    pub fn response(&self, grid: &FrequencyGrid) -> Result<TwoPortResponse, RfError> {
        let unic = unic_response(&self.design, &self.saw, grid)?;
        let mut parts = vec![unic; self.stages.max(1)];
        if self.stages == 0 {
            parts = vec![TwoPortResponse::unity(grid.clone())];
        }
        for a in &self.amplifiers {
            parts.push(block_response(a, grid)?);
        }
        if let Some(b) = &self.band_stop {
            parts.push(block_response(b, grid)?);
        }
        cascade(&parts)
    }

    /// Broadband voltage gain seen by avalanche impulses (DC limit of the
    /// amplifiers times the through-arm amplitudes).
    pub fn broadband_gain(&self) -> f64 {
        let amps: f64 = self
            .amplifiers
            .iter()
            .map(|a| match a {
                BlockSpec::Amplifier { gain_db, .. } => db_to_amplitude(*gain_db),
                _ => 1.0,
            })
            .product();
        amps * through_amplitude(&self.design).powi(self.stages as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn saw(gd: f64, loss: f64) -> BlockSpec {
        BlockSpec::SawBpf {
            f_center_hz: 1.25e9,
            passband_20db_hz: 35e6,
            insertion_loss_db: loss,
            group_delay_s: gd,
        }
    }

    #[test]
    fn design_point_n42() {
        let d = solve_unic_delay(33.845e-9, 1.25e9).unwrap();
        assert_eq!(d.n, 42);
        assert_relative_eq!(d.delta_t_s, 155e-12, max_relative = 1e-9);
        assert!(!d.half_wave_warning);
        assert!(d.delay_residual().abs() <= 1e-12 * d.differential_delay());
    }

    #[test]
    fn zero_group_delay_hits_half_wave() {
        let d = solve_unic_delay(0.0, 1.25e9).unwrap();
        assert_eq!(d.n, 0);
        assert_relative_eq!(d.delta_t_s, 400e-12, max_relative = 1e-12);
        assert!(d.half_wave_warning);
    }

    #[test]
    fn exact_half_integer_gives_zero_track_delay() {
        let d = solve_unic_delay(34.0e-9, 1.25e9).unwrap();
        assert_eq!(d.n, 42);
        assert!(d.delta_t_s.abs() < 1e-21);
        assert!(d.delay_residual().abs() <= 1e-12 * 34e-9);
    }

    #[test]
    fn invalid_design_inputs() {
        assert!(solve_unic_delay(-1e-9, 1.25e9).is_err());
        assert!(solve_unic_delay(1e-9, 0.0).is_err());
    }

    #[test]
    fn symmetric_interferometer_needs_no_pad() {
        let s = saw(0.0, 0.0);
        let d = solve_unic_delay(0.0, 1.25e9).unwrap().with_coupler_tap(0.5);
        assert!(balance_attenuation(&d, &s).unwrap().abs() < 1e-12);
    }

    #[test]
    fn ninety_percent_filtered_arm_pad() {
        let s = saw(34e-9, 3.0);
        let d = solve_unic_delay(34e-9, 1.25e9).unwrap().with_coupler_tap(0.9);
        let att = balance_attenuation(&d, &s).unwrap();
        // 0.9·10^(-(3+x)/20) = 0.1
        let expect = 20.0 * (0.9f64 / 0.1).log10() - 3.0;
        assert_relative_eq!(att, expect, max_relative = 1e-12);
        assert_relative_eq!(att, 16.1, epsilon = 0.05);
    }

    #[test]
    fn ten_percent_filtered_arm_is_infeasible() {
        let s = saw(34e-9, 3.0);
        let d = solve_unic_delay(34e-9, 1.25e9).unwrap().with_coupler_tap(0.1);
        match balance_attenuation(&d, &s) {
            Err(RfError::InfeasibleBalance { filtered, through }) => {
                assert_relative_eq!(filtered, 0.1 * 10f64.powf(-0.15), max_relative = 1e-12);
                assert_relative_eq!(through, 0.9, max_relative = 1e-12);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn mismatched_saw_rejected() {
        let d = solve_unic_delay(33.845e-9, 1.25e9).unwrap();
        let g = FrequencyGrid::uniform(1e9, 2e9, 11).unwrap();
        assert!(matches!(
            unic_response(&d, &saw(34e-9, 3.0), &g),
            Err(RfError::DesignMismatch { .. })
        ));
        assert!(unic_response(&d, &BlockSpec::Attenuator { loss_db: 1.0 }, &g).is_err());
    }

    #[test]
    fn balanced_null_and_out_of_band() {
        let s = saw(33.845e-9, 3.0);
        let d = solve_unic_delay(33.845e-9, 1.25e9).unwrap().balanced(&s).unwrap();
        let at_null = unic_transfer_at(&d, &s, 1.25e9).norm();
        let background = through_amplitude(&d);
        assert!(at_null <= background * 1e-5, "{at_null}");
        let far = unic_transfer_at(&d, &s, 0.6e9);
        assert_relative_eq!(far.norm(), background, max_relative = 1e-6);
    }

    #[test]
    fn default_chain_restores_broadband_gain() {
        let c = ReadoutChain::default_two_stage().unwrap();
        assert_relative_eq!(c.broadband_gain(), 1.0, max_relative = 1e-12);
    }
}
