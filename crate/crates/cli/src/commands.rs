//! The subcommands. Each one reads a validated config, runs the model and
//! writes its files; the list of written paths is returned.

use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use unic_core::acquisition::{classify, discriminate, histogram, DiscriminatorSpec, GateCounts, GateMap};
use unic_core::apd::{simulate, KindCounts, SourceMode};
use unic_core::characterize::{
    charge_from_photocurrent, count_rate_vs_flux, efficiency_at_afterpulse, efficiency_sweep, event_timestamps,
    run_characterization, RatePoint, RunReport, SweepPoint,
};
use unic_core::io;
use unic_core::rf::{
    amplitude_to_db, null_metrics, solve_unic_delay, through_amplitude, BlockSpec, DesignReport, FrequencyGrid,
    NullMetrics, ReadoutChain, UnicDesign,
};
use unic_core::rng::{derive_seed, stream_rng, DOMAIN_NOISE};
use unic_core::waveform::{
    add_noise, rms, synth_capacitive, FirKernel, GateWaveSpec, ImpulseSpec, Waveform, DEFAULT_KERNEL_LEN,
};

use crate::config::{Emit, ExperimentConfig};
use crate::error::{CliError, Issue};

/// Stream domain for placing injected avalanches in the waveform record.
const DOMAIN_INJECT: u64 = 0x696e_6a65_6374;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Design,
    Spectrum,
    Waveform,
    Simulate,
    Characterize,
    Sweep,
    Maxrate,
}

impl Command {
    /// Commands that draw random numbers and therefore need a seed.
    pub fn is_stochastic(self) -> bool {
        !matches!(self, Command::Design | Command::Spectrum)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Command::Design => "design",
            Command::Spectrum => "spectrum",
            Command::Waveform => "waveform",
            Command::Simulate => "simulate",
            Command::Characterize => "characterize",
            Command::Sweep => "sweep",
            Command::Maxrate => "maxrate",
        };
        f.write_str(s)
    }
}

pub fn run(cmd: Command, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let seed = match (cmd.is_stochastic(), cfg.seed) {
        (true, None) => {
            return Err(CliError::Config(vec![Issue::new(
                "seed",
                format!("required for {cmd} (pass --seed or set it in the config)"),
            )]))
        }
        (_, s) => s.unwrap_or(0),
    };
    if cmd == Command::Sweep && cfg.sweep_scenarios().len() < 2 {
        return Err(CliError::Config(vec![Issue::new(
            "sweep",
            "needs a preset or at least two scenarios",
        )]));
    }
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", cfg.output_dir.display())))?;
    let mut out = Output {
        dir: &cfg.output_dir,
        cfg,
        written: Vec::new(),
    };
    match cmd {
        Command::Design => cmd_design(cfg, &mut out)?,
        Command::Spectrum => cmd_spectrum(cfg, &mut out)?,
        Command::Waveform => cmd_waveform(cfg, seed, &mut out)?,
        Command::Simulate => cmd_simulate(cfg, seed, &mut out)?,
        Command::Characterize => cmd_characterize(cfg, seed, &mut out)?,
        Command::Sweep => cmd_sweep(cfg, seed, &mut out)?,
        Command::Maxrate => cmd_maxrate(cfg, seed, &mut out)?,
    }
    Ok(out.written)
}

struct Output<'a> {
    dir: &'a Path,
    cfg: &'a ExperimentConfig,
    written: Vec<PathBuf>,
}

impl Output<'_> {
    fn file<F>(&mut self, kind: Emit, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(BufWriter<File>) -> Result<(), io::IoError>,
    {
        if !self.cfg.emits(kind) {
            return Ok(());
        }
        let path = self.dir.join(name);
        io::save_with(&path, f).map_err(CliError::runtime)?;
        self.written.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.file(Emit::Json, name, |w| io::write_json(value, w))
    }
}

/// Balanced single-stage design from the `design` section.
pub fn solve_design(cfg: &ExperimentConfig) -> Result<(UnicDesign, BlockSpec), CliError> {
    let sec = &cfg.design;
    let saw = sec.saw();
    let d = solve_unic_delay(sec.t_g_saw_s, sec.f_g_hz)
        .map_err(CliError::runtime)?
        .with_coupler_tap(sec.coupler_tap)
        .balanced(&saw)
        .map_err(CliError::runtime)?;
    Ok((d, saw))
}

/// `stages` copies of the designed interferometer, optionally followed by
/// gain restoring the through-arm loss and a band-stop at `2 f_g`.
pub fn build_chain(
    design: &UnicDesign,
    saw: &BlockSpec,
    stages: usize,
    amplifiers: bool,
    band_stop: bool,
) -> ReadoutChain {
    let amps = if amplifiers {
        let loss_db = -(stages as f64) * amplitude_to_db(through_amplitude(design));
        vec![
            BlockSpec::Amplifier {
                gain_db: loss_db / 3.0,
                bandwidth_hz: 6e9,
            };
            3
        ]
    } else {
        Vec::new()
    };
    let stop = band_stop.then(|| match BlockSpec::default_band_stop() {
        BlockSpec::Notch {
            depth_db,
            width_10db_hz,
            ..
        } => BlockSpec::Notch {
            f_center_hz: 2.0 * design.f_g_hz,
            depth_db,
            width_10db_hz,
        },
        other => other,
    });
    ReadoutChain {
        design: design.clone(),
        saw: saw.clone(),
        stages,
        amplifiers: amps,
        band_stop: stop,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignOutput {
    #[serde(flatten)]
    pub report: DesignReport,
    pub coupler_tap: f64,
    pub differential_delay_s: f64,
}

fn cmd_design(cfg: &ExperimentConfig, out: &mut Output) -> Result<(), CliError> {
    let (d, _) = solve_design(cfg)?;
    out.json(
        "design.json",
        &DesignOutput {
            report: DesignReport::from(&d),
            coupler_tap: d.coupler_tap,
            differential_delay_s: d.differential_delay(),
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub stages: usize,
    pub imbalance_db: f64,
    pub att_db: f64,
    pub grid_points: usize,
    pub metrics: NullMetrics,
}

fn cmd_spectrum(cfg: &ExperimentConfig, out: &mut Output) -> Result<(), CliError> {
    let sec = &cfg.spectrum;
    let (d, saw) = solve_design(cfg)?;
    let att = d.att_balance_db + sec.imbalance_db;
    let d = d.with_attenuation(att);
    let chain = build_chain(&d, &saw, sec.stages, sec.amplifiers, sec.band_stop);
    let g = &sec.grid;
    let grid = FrequencyGrid::dense_around(
        d.f_g_hz,
        g.fine_half_span_hz,
        g.fine_step_hz,
        g.f_start_hz,
        g.f_stop_hz,
        g.coarse_step_hz,
    )
    .map_err(|e| CliError::Config(vec![Issue::new("spectrum.grid", e.to_string())]))?;
    let resp = chain.response(&grid).map_err(CliError::runtime)?;
    let metrics = null_metrics(&resp, d.f_g_hz).map_err(CliError::runtime)?;
    out.file(Emit::Csv, "spectrum.csv", |w| io::write_spectrum_csv(&resp, w))?;
    out.json(
        "null_metrics.json",
        &SpectrumSummary {
            stages: sec.stages,
            imbalance_db: sec.imbalance_db,
            att_db: att,
            grid_points: grid.len(),
            metrics,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformReport {
    pub samples: usize,
    pub sample_rate_hz: f64,
    pub kernel_len: usize,
    /// Sample range where the filter output has full support.
    pub valid_start: usize,
    pub valid_end: usize,
    pub latency_s: f64,
    pub input_rms_v: f64,
    pub background_rms_v: f64,
    pub threshold_v: f64,
    pub injected: u64,
    pub recovered: u64,
    pub recovered_fraction: f64,
    pub false_clicks: u64,
    pub direct_check_points: usize,
    pub direct_check_max_abs_error_v: f64,
}

/// Filtered record plus the report describing it.
pub struct WaveformRun {
    pub filtered: Waveform,
    pub report: WaveformReport,
}

pub fn waveform_run(cfg: &ExperimentConfig, seed: u64) -> Result<WaveformRun, CliError> {
    let sec = &cfg.waveform;
    let (d, saw) = solve_design(cfg)?;
    let f_g = d.f_g_hz;
    let rate = sec.sample_rate_hz;

    let mut gate = GateWaveSpec::with_default_harmonics(f_g, sec.amplitude_v);
    if let Some(h) = &sec.harmonics {
        gate.harmonics = h.clone();
    }
    gate.validate()
        .map_err(|e| CliError::Config(vec![Issue::new("waveform.harmonics", e.to_string())]))?;
    let cap = synth_capacitive(&gate, sec.duration_s, rate).map_err(CliError::runtime)?;
    let noise_seed = derive_seed(seed, DOMAIN_NOISE);
    let background = if sec.noise_rms_v > 0.0 {
        add_noise(&cap, sec.noise_rms_v, noise_seed).map_err(CliError::runtime)?
    } else {
        cap
    };

    // avalanches at the gate centres of randomly chosen gates, clear of
    // the record edges
    let mut rng = stream_rng(seed, DOMAIN_INJECT, 0);
    let n_gate_slots = (sec.duration_s * f_g).floor() as u64;
    let mut peaks = Vec::new();
    let mut raw = background.clone();
    if sec.avalanche_peak_v > 0.0 {
        for k in 1..n_gate_slots.saturating_sub(1) {
            if rng.random::<f64>() < sec.avalanche_probability {
                let t = k as f64 / f_g;
                peaks.push(t);
                raw.add_impulse(&ImpulseSpec {
                    fwhm: sec.avalanche_fwhm_s,
                    peak: sec.avalanche_peak_v,
                    onset: t,
                });
            }
        }
    }

    let chain = build_chain(&d, &saw, 2, true, true);
    let fft_grid = FrequencyGrid::fft_bins(rate, DEFAULT_KERNEL_LEN).map_err(CliError::runtime)?;
    let resp = chain.response(&fft_grid).map_err(CliError::runtime)?;
    let kernel = FirKernel::from_response(&resp, rate).map_err(CliError::runtime)?;
    let n = raw.len();
    let (lo, hi) = (kernel.len() - kernel.precursor(), n.saturating_sub(kernel.precursor()));
    if lo >= hi {
        return Err(CliError::Config(vec![Issue::new(
            "waveform.duration_s",
            format!("record of {n} samples is shorter than the {}-tap filter", kernel.len()),
        )]));
    }
    let y = kernel.apply(&raw.samples);
    let y_bg = kernel.apply(&background.samples);
    let background_rms = rms(&y_bg[lo..hi]);
    let threshold = (sec.threshold_factor * background_rms).max(f64::MIN_POSITIVE);

    let filtered = Waveform {
        samples: y,
        ..raw.clone()
    };
    // zero dead time: ringing left by earlier avalanches must not mask the
    // leading edge of a later one
    let clicks = discriminate(
        &filtered,
        &DiscriminatorSpec {
            threshold_v: threshold,
            dead_time_s: 0.0,
        },
    );
    let (t_lo, t_hi) = (raw.time_at(lo), raw.time_at(hi - 1));
    let latency = kernel.peak_lag_s();
    // a low threshold is crossed well before the pulse maximum, so a click
    // up to one gate period early still belongs to the avalanche
    let (early, late) = (1.0 / f_g, 0.5 * sec.avalanche_fwhm_s);
    let arrivals: Vec<f64> = peaks
        .iter()
        .map(|t| t + latency)
        .filter(|t| *t - early >= t_lo && *t + late <= t_hi)
        .collect();
    let in_window: Vec<f64> = clicks.iter().copied().filter(|c| *c >= t_lo && *c <= t_hi).collect();
    let matches = |a: f64, c: f64| c >= a - early && c <= a + late;
    let recovered = arrivals
        .iter()
        .filter(|&&a| {
            let i = in_window.partition_point(|c| *c < a - early);
            in_window.get(i).is_some_and(|&c| matches(a, c))
        })
        .count() as u64;
    let false_clicks = in_window
        .iter()
        .filter(|&&c| {
            let i = arrivals.partition_point(|a| *a + late < c);
            !arrivals.get(i).is_some_and(|&a| matches(a, c))
        })
        .count() as u64;

    let m = sec.direct_check_points.min(hi - lo);
    let step = (hi - lo) / m.max(1);
    let mut max_err = 0.0f64;
    for j in 0..m {
        let i = lo + j * step;
        let e = (kernel.direct_at(&raw.samples, i) - filtered.samples[i]).abs();
        max_err = max_err.max(e);
    }

    let injected = arrivals.len() as u64;
    let report = WaveformReport {
        samples: n,
        sample_rate_hz: rate,
        kernel_len: kernel.len(),
        valid_start: lo,
        valid_end: hi,
        latency_s: latency,
        input_rms_v: rms(&raw.samples[lo..hi]),
        background_rms_v: background_rms,
        threshold_v: threshold,
        injected,
        recovered,
        recovered_fraction: if injected > 0 {
            recovered as f64 / injected as f64
        } else {
            0.0
        },
        false_clicks,
        direct_check_points: m,
        direct_check_max_abs_error_v: max_err,
    };
    Ok(WaveformRun { filtered, report })
}

fn cmd_waveform(cfg: &ExperimentConfig, seed: u64, out: &mut Output) -> Result<(), CliError> {
    let run = waveform_run(cfg, seed)?;
    out.file(Emit::Bin, "waveform.bin", |w| io::write_waveform_bin(&run.filtered, w))?;
    out.file(Emit::Csv, "waveform.csv", |w| io::write_waveform_csv(&run.filtered, w))?;
    out.json("waveform_report.json", &run.report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub n_gates: u64,
    pub seed: u64,
    pub mu: f64,
    pub events: KindCounts,
    pub clicks: u64,
    pub count_rate_hz: f64,
    pub fold_period_s: f64,
    pub histogram_peak_s: Option<f64>,
    pub histogram_width_30db_s: Option<f64>,
    /// Laser-off runs report only the dark probability.
    pub p_d: Option<f64>,
    pub sigma_p_d: Option<f64>,
    pub gate_counts: Option<GateCounts>,
}

fn cmd_simulate(cfg: &ExperimentConfig, seed: u64, out: &mut Output) -> Result<(), CliError> {
    let det = &cfg.detector;
    let src = &cfg.source;
    let n_gates = cfg.n_gates;
    let period = match src.mode {
        SourceMode::Pulsed => 1.0 / src.laser_rate_hz,
        SourceMode::CwCarved => 1.0 / det.f_g_hz,
    };
    let bins = period / cfg.histogram.bin_width_s;
    if cfg.histogram.bin_width_s > period || (bins - bins.round()).abs() > 1e-6 {
        return Err(CliError::Config(vec![Issue::new(
            "histogram.bin_width_s",
            format!("{} does not divide the fold period {period}", cfg.histogram.bin_width_s),
        )]));
    }
    let stream = simulate(det, src, n_gates, seed).map_err(CliError::runtime)?;
    let ts = event_timestamps(&stream, &cfg.acquisition).map_err(CliError::runtime)?;
    let hist = histogram(&ts, period, period / bins.round()).map_err(CliError::runtime)?;

    let laser_off = src.mu == 0.0;
    let gate_counts = match (laser_off, src.mode) {
        (false, SourceMode::Pulsed) => {
            let ratio = src.ratio(det.f_g_hz).map_err(CliError::runtime)?;
            if ratio >= 2 {
                let map = GateMap {
                    f_g_hz: det.f_g_hz,
                    ratio,
                    illuminated_index: src.illuminated_gate_phase,
                    n_gates,
                    offset_s: 0.0,
                };
                Some(classify(&ts, &map).map_err(CliError::runtime)?)
            } else {
                None
            }
        }
        _ => None,
    };
    let clicks = ts.len() as u64;
    let p = clicks as f64 / n_gates as f64;
    let summary = SimulateSummary {
        n_gates,
        seed,
        mu: src.mu,
        events: stream.counts(),
        clicks,
        count_rate_hz: clicks as f64 * det.f_g_hz / n_gates as f64,
        fold_period_s: period,
        histogram_peak_s: hist.peak_index().map(|i| hist.bin_start(i)),
        histogram_width_30db_s: hist.width_at_db(30.0),
        p_d: laser_off.then_some(p),
        sigma_p_d: laser_off.then(|| (p * (1.0 - p) / n_gates as f64).sqrt()),
        gate_counts,
    };

    out.file(Emit::Csv, "events.csv", |w| io::write_events_csv(&stream, w))?;
    out.file(Emit::Bin, "timestamps.bin", |w| io::write_timestamps_bin(&ts, w))?;
    out.file(Emit::Csv, "histogram.csv", |w| io::write_histogram_csv(&hist, w))?;
    if let Some(c) = &summary.gate_counts {
        out.json("gate_counts.json", c)?;
    }
    out.json("simulate.json", &summary)
}

fn cmd_characterize(cfg: &ExperimentConfig, seed: u64, out: &mut Output) -> Result<(), CliError> {
    let r = run_characterization(&cfg.detector, &cfg.source, &cfg.acquisition, cfg.n_gates, seed)
        .map_err(CliError::runtime)?;
    out.json("report.json", &r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledReport {
    pub label: String,
    pub report: RunReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetEfficiency {
    pub target_pa: f64,
    pub eta_net: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub points: Vec<LabeledReport>,
    pub at_targets: Vec<TargetEfficiency>,
}

pub fn sweep_run(cfg: &ExperimentConfig, seed: u64) -> Result<SweepOutput, CliError> {
    let scenarios = cfg.sweep_scenarios();
    let reports = efficiency_sweep(&scenarios, &cfg.source, &cfg.acquisition, cfg.n_gates, seed)
        .map_err(CliError::runtime)?;
    let pts: Vec<(f64, f64)> = reports
        .iter()
        .filter_map(|(_, r)| Some((r.eta_net?, r.p_a?)))
        .collect();
    let at_targets = cfg
        .sweep
        .targets_pa
        .iter()
        .map(|&t| match efficiency_at_afterpulse(&pts, t) {
            Ok(eta) => TargetEfficiency {
                target_pa: t,
                eta_net: Some(eta),
                error: None,
            },
            Err(e) => TargetEfficiency {
                target_pa: t,
                eta_net: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    Ok(SweepOutput {
        points: reports
            .into_iter()
            .map(|(label, report)| LabeledReport { label, report })
            .collect(),
        at_targets,
    })
}

fn cmd_sweep(cfg: &ExperimentConfig, seed: u64, out: &mut Output) -> Result<(), CliError> {
    let s = sweep_run(cfg, seed)?;
    let rows: Vec<SweepPoint> = s
        .points
        .iter()
        .map(|p| SweepPoint::from_report(&p.label, &p.report))
        .collect();
    out.file(Emit::Csv, "sweep.csv", |w| io::write_sweep_csv(&rows, w))?;
    out.json("sweep.json", &s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxratePoint {
    #[serde(flatten)]
    pub point: RatePoint,
    /// Rate over the low-flux line `f_g·μ·η`.
    pub linearity: Option<f64>,
    pub charge_c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxrateOutput {
    pub f_g_hz: f64,
    pub eta_gate: f64,
    pub points: Vec<MaxratePoint>,
    pub max_rate_hz: f64,
}

pub fn maxrate_run(cfg: &ExperimentConfig, seed: u64) -> Result<MaxrateOutput, CliError> {
    let det = &cfg.detector;
    let pts = count_rate_vs_flux(det, &cfg.maxrate.acquisition, &cfg.maxrate.flux, cfg.n_gates, seed)
        .map_err(CliError::runtime)?;
    let line = |mu: f64| det.f_g_hz * mu * det.eta_gate;
    Ok(MaxrateOutput {
        f_g_hz: det.f_g_hz,
        eta_gate: det.eta_gate,
        max_rate_hz: pts.iter().map(|p| p.rate_hz).fold(0.0, f64::max),
        points: pts
            .into_iter()
            .map(|p| MaxratePoint {
                linearity: (line(p.flux) > 0.0).then(|| p.rate_hz / line(p.flux)),
                charge_c: charge_from_photocurrent(p.photocurrent_a, p.rate_hz).ok(),
                point: p,
            })
            .collect(),
    })
}

fn cmd_maxrate(cfg: &ExperimentConfig, seed: u64, out: &mut Output) -> Result<(), CliError> {
    let m = maxrate_run(cfg, seed)?;
    let rows: Vec<SweepPoint> = m
        .points
        .iter()
        .map(|p| p.point.sweep_point(&format!("mu={}", p.point.flux)))
        .collect();
    out.file(Emit::Csv, "maxrate.csv", |w| io::write_sweep_csv(&rows, w))?;
    out.json("maxrate.json", &m)
}
