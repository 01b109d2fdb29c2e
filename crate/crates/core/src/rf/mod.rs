//! Frequency-domain model of the readout chain.
//!
//! Every block is a matched, unidirectional two-port described by its
//! complex voltage transfer. Responses on a common grid multiply in series.

mod blocks;
mod grid;
mod metrics;
mod unic;

use thiserror::Error;

pub use blocks::{
    amplitude_to_db, block_response, cascade, db_to_amplitude, BlockSpec, CouplerPort, TwoPortResponse,
    SAW_BUTTERWORTH_ORDER,
};
pub use grid::FrequencyGrid;
pub use metrics::{
    null_metrics, NullMetrics, BACKGROUND_BAND_HZ, BACKGROUND_EXCLUSION_HZ, MAX_NULL_STEP_HZ, MIN_NULL_DEPTH_DB,
};
pub use unic::{
    balance_attenuation, solve_unic_delay, through_amplitude, unic_response, unic_transfer_at, DesignReport,
    ReadoutChain, UnicDesign, DEFAULT_COUPLER_TAP,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RfError {
    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),
    #[error("invalid block: {0}")]
    InvalidBlock(String),
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("responses are sampled on different grids")]
    GridMismatch,
    #[error("design group delay {design_s} s does not match SAW group delay {saw_s} s")]
    DesignMismatch { design_s: f64, saw_s: f64 },
    #[error(
        "cannot balance arms: filtered arm amplitude {filtered} is below through arm amplitude {through} even without attenuation"
    )]
    InfeasibleBalance { filtered: f64, through: f64 },
    #[error("grid too coarse near {f_g} Hz (local step {step} Hz)")]
    GridTooCoarse { f_g: f64, step: f64 },
    #[error("no background samples in the reference band")]
    NoBackground,
    #[error("no null found (deepest dip {depth_db} dB)")]
    NoNull { depth_db: f64 },
}
