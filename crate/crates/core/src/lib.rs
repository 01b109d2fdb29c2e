//! Simulation and characterization toolkit for sine-gated InGaAs/InP
//! avalanche photodiodes read out through ultra-narrowband interference
//! circuits (UNICs).

pub mod rf;
pub mod acquisition;
pub mod apd;
pub mod characterize;
pub mod io;
pub mod presets;
pub mod rng;
pub mod waveform;

mod par;
