//! File formats. CSV and JSON numbers use the shortest decimal that
//! round-trips, so identical runs give identical bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{Histogram, Timestamps};
use crate::apd::{Event, EventStream};
use crate::characterize::SweepPoint;
use crate::rf::{FrequencyGrid, TwoPortResponse};
use crate::waveform::Waveform;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("malformed data: {0}")]
    Format(String),
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path).map(BufWriter::new).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

fn open(path: &Path) -> Result<BufReader<File>, IoError> {
    File::open(path).map(BufReader::new).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize, W: Write>(value: &T, mut w: W) -> Result<(), IoError> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned, R: Read>(r: R) -> Result<T, IoError> {
    Ok(serde_json::from_reader(r)?)
}

pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<(), IoError> {
    write_json(value, create(path)?)
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    read_json(open(path)?)
}

fn write_rows<T: Serialize, W: Write>(rows: &[T], w: W) -> Result<(), IoError> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

fn read_rows<T: DeserializeOwned, R: Read>(r: R) -> Result<Vec<T>, IoError> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    Ok(rd.deserialize().collect::<Result<_, _>>()?)
}

/// Header-only CSV for an empty table, so readers still see the columns.
fn write_header<W: Write>(header: &[&str], w: W) -> Result<(), IoError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(header)?;
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub freq_hz: f64,
    pub mag_db: f64,
    pub phase_rad: f64,
    pub group_delay_ns: f64,
}

pub fn spectrum_rows(resp: &TwoPortResponse) -> Vec<SpectrumRow> {
    let phase = resp.unwrapped_phase();
    let gd = resp.group_delay();
    resp.grid()
        .points()
        .iter()
        .zip(resp.values())
        .enumerate()
        .map(|(i, (&f, h))| SpectrumRow {
            freq_hz: f,
            mag_db: 20.0 * h.norm().max(f64::MIN_POSITIVE).log10(),
            phase_rad: phase[i],
            group_delay_ns: gd[i] * 1e9,
        })
        .collect()
}

/// Rebuild a response from magnitude and phase columns.
pub fn response_from_rows(rows: &[SpectrumRow]) -> Result<TwoPortResponse, IoError> {
    let grid = FrequencyGrid::from_points(rows.iter().map(|r| r.freq_hz).collect())
        .map_err(|e| IoError::Format(e.to_string()))?;
    let values = rows
        .iter()
        .map(|r| Complex64::from_polar(10f64.powf(r.mag_db / 20.0), r.phase_rad))
        .collect();
    TwoPortResponse::new(grid, values).map_err(|e| IoError::Format(e.to_string()))
}

pub fn write_spectrum_csv<W: Write>(resp: &TwoPortResponse, w: W) -> Result<(), IoError> {
    write_rows(&spectrum_rows(resp), w)
}

pub fn read_spectrum_csv<R: Read>(r: R) -> Result<Vec<SpectrumRow>, IoError> {
    read_rows(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct WaveRow {
    time_s: f64,
    volts: f64,
}

pub fn write_waveform_csv<W: Write>(wf: &Waveform, w: W) -> Result<(), IoError> {
    if wf.is_empty() {
        return write_header(&["time_s", "volts"], w);
    }
    let rows: Vec<WaveRow> = (0..wf.len())
        .map(|i| WaveRow {
            time_s: wf.time_at(i),
            volts: wf.samples[i],
        })
        .collect();
    write_rows(&rows, w)
}

/// Reads a CSV written by [`write_waveform_csv`]; the sample rate is taken
/// from the span of the time column.
pub fn read_waveform_csv<R: Read>(r: R) -> Result<Waveform, IoError> {
    let rows: Vec<WaveRow> = read_rows(r)?;
    if rows.len() < 2 {
        return Err(IoError::Format("waveform CSV needs at least two samples".into()));
    }
    if rows.windows(2).any(|p| !(p[1].time_s > p[0].time_s)) {
        return Err(IoError::Format("waveform time column is not increasing".into()));
    }
    let rate = (rows.len() - 1) as f64 / (rows[rows.len() - 1].time_s - rows[0].time_s);
    let samples = rows.iter().map(|r| r.volts).collect();
    Waveform::new(rate, rows[0].time_s, samples).map_err(|e| IoError::Format(e.to_string()))
}

/// Little-endian: f64 sample rate, f64 t0, u64 count, then f64 samples.
pub fn write_waveform_bin<W: Write>(wf: &Waveform, mut w: W) -> Result<(), IoError> {
    w.write_all(&wf.sample_rate.to_le_bytes())?;
    w.write_all(&wf.t0.to_le_bytes())?;
    w.write_all(&(wf.len() as u64).to_le_bytes())?;
    for s in &wf.samples {
        w.write_all(&s.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, IoError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, IoError> {
    Ok(f64::from_bits(read_u64(r)?))
}

fn ensure_eof<R: Read>(r: &mut R) -> Result<(), IoError> {
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(IoError::Format("trailing bytes after payload".into()));
    }
    Ok(())
}

pub fn read_waveform_bin<R: Read>(mut r: R) -> Result<Waveform, IoError> {
    let rate = read_f64(&mut r)?;
    let t0 = read_f64(&mut r)?;
    let n = read_u64(&mut r)?;
    let mut samples = Vec::with_capacity(n.min(1 << 28) as usize);
    for _ in 0..n {
        samples.push(read_f64(&mut r)?);
    }
    ensure_eof(&mut r)?;
    Waveform::new(rate, t0, samples).map_err(|e| IoError::Format(e.to_string()))
}

const EVENT_HEADER: [&str; 4] = ["gate_index", "time_s", "kind", "charge_c"];

pub fn write_events_csv<W: Write>(s: &EventStream, w: W) -> Result<(), IoError> {
    if s.is_empty() {
        return write_header(&EVENT_HEADER, w);
    }
    write_rows(&s.events, w)
}

/// Events only; the gate count of the run is not stored in the file.
pub fn read_events_csv<R: Read>(r: R) -> Result<Vec<Event>, IoError> {
    let events: Vec<Event> = read_rows(r)?;
    if events.windows(2).any(|p| p[1].gate_index < p[0].gate_index) {
        return Err(IoError::Format("gate_index decreases".into()));
    }
    Ok(events)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct HistRow {
    bin_start_s: f64,
    counts: u64,
}

pub fn write_histogram_csv<W: Write>(h: &Histogram, w: W) -> Result<(), IoError> {
    let rows: Vec<HistRow> = h
        .bins
        .iter()
        .enumerate()
        .map(|(i, &c)| HistRow {
            bin_start_s: h.bin_start(i),
            counts: c,
        })
        .collect();
    write_rows(&rows, w)
}

/// Bin width comes from the first two rows, the period from the row count.
pub fn read_histogram_csv<R: Read>(r: R) -> Result<Histogram, IoError> {
    let rows: Vec<HistRow> = read_rows(r)?;
    let bin_width_s = match rows.as_slice() {
        [a, b, ..] => b.bin_start_s - a.bin_start_s,
        _ => return Err(IoError::Format("histogram CSV needs at least two bins".into())),
    };
    if !(bin_width_s > 0.0) {
        return Err(IoError::Format("bin starts are not increasing".into()));
    }
    Ok(Histogram {
        bin_width_s,
        period_s: bin_width_s * rows.len() as f64,
        bins: rows.iter().map(|r| r.counts).collect(),
    })
}

/// Little-endian u64 count followed by i64 picosecond values.
pub fn write_timestamps_bin<W: Write>(ts: &[f64], mut w: W) -> Result<(), IoError> {
    w.write_all(&(ts.len() as u64).to_le_bytes())?;
    for &t in ts {
        let ps = (t * 1e12).round();
        if !(ps.abs() < 9.2e18) {
            return Err(IoError::Format(format!("timestamp {t} s does not fit in i64 ps")));
        }
        w.write_all(&(ps as i64).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_timestamps_bin<R: Read>(mut r: R) -> Result<Timestamps, IoError> {
    let n = read_u64(&mut r)?;
    let mut out = Vec::with_capacity(n.min(1 << 28) as usize);
    for _ in 0..n {
        out.push(read_u64(&mut r)? as i64 as f64 / 1e12);
    }
    ensure_eof(&mut r)?;
    Ok(out)
}

const SWEEP_HEADER: [&str; 7] = ["label", "eta_net", "p_a", "p_d", "flux", "rate_hz", "photocurrent_a"];

pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], w: W) -> Result<(), IoError> {
    if points.is_empty() {
        return write_header(&SWEEP_HEADER, w);
    }
    write_rows(points, w)
}

pub fn read_sweep_csv<R: Read>(r: R) -> Result<Vec<SweepPoint>, IoError> {
    read_rows(r)
}

/// Path-based wrappers.
pub fn save_with<F>(path: &Path, f: F) -> Result<(), IoError>
where
    F: FnOnce(BufWriter<File>) -> Result<(), IoError>,
{
    f(create(path)?)
}

pub fn load_with<T, F>(path: &Path, f: F) -> Result<T, IoError>
where
    F: FnOnce(BufReader<File>) -> Result<T, IoError>,
{
    f(open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_tables_keep_headers() {
        let mut buf = Vec::new();
        write_sweep_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), SWEEP_HEADER.join(",") + "\n");
        assert!(read_sweep_csv(buf.as_slice()).unwrap().is_empty());
        let mut buf = Vec::new();
        write_events_csv(&EventStream::default(), &mut buf).unwrap();
        assert!(read_events_csv(buf.as_slice()).unwrap().is_empty());
    }

    #[test]
    fn timestamps_binary_layout() {
        let mut buf = Vec::new();
        write_timestamps_bin(&[1e-12, 2.5e-9], &mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 2 * 8);
        assert_eq!(&buf[..8], &2u64.to_le_bytes());
        assert_eq!(&buf[8..16], &1i64.to_le_bytes());
        assert_eq!(&buf[16..24], &2500i64.to_le_bytes());
        assert!(read_timestamps_bin(&buf[..20]).is_err());
    }

    #[test]
    fn sweep_csv_leaves_missing_fields_empty() {
        let p = SweepPoint {
            label: "a".into(),
            flux: Some(0.5),
            rate_hz: Some(1e8),
            ..Default::default()
        };
        let mut buf = Vec::new();
        write_sweep_csv(&[p], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "a,,,,0.5,100000000.0,");
    }
}
