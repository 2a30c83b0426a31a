//! Telemetry and time-tag files.
//!
//! Tables go out as CSV (header row, one record per sample) or as a JSON
//! array of records. Time tags additionally have a little-endian binary
//! form: 9 bytes per tag, `f64` seconds followed by a `u8` channel code.

use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::channel::LinkState;
use crate::pat::PatRun;
use crate::polarization::PcsRun;
use crate::receiver::{Channel, Origin, TimeTag};

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed time-tag data: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Binary,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Binary => "bin",
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> TelemetryError + '_ {
    move |source| TelemetryError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, TelemetryError> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err(path))?))
}

/// Writes records as CSV, or as a JSON array for [`Format::Json`].
/// Binary falls back to CSV; only time tags have a binary layout.
pub fn write_table<T: Serialize>(path: &Path, rows: &[T], format: Format) -> Result<(), TelemetryError> {
    let mut out = create(path)?;
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, rows)?;
            out.write_all(b"\n").map_err(io_err(path))?;
        }
        Format::Csv | Format::Binary => {
            let mut w = csv::Writer::from_writer(&mut out);
            for r in rows {
                w.serialize(r)?;
            }
            w.flush().map_err(io_err(path))?;
        }
    }
    out.flush().map_err(io_err(path))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), TelemetryError> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n").map_err(io_err(path))?;
    out.flush().map_err(io_err(path))
}

#[derive(Debug, Clone, Serialize)]
pub struct PatRow {
    pub time_s: f64,
    pub phase: &'static str,
    pub true_err_x_arcsec: f64,
    pub true_err_y_arcsec: f64,
    pub meas_err_x_arcsec: Option<f64>,
    pub meas_err_y_arcsec: Option<f64>,
    pub mount_cmd_x_arcsec: f64,
    pub mount_cmd_y_arcsec: f64,
    pub fsm_cmd_x_arcsec: f64,
    pub fsm_cmd_y_arcsec: f64,
    pub residual_arcsec: f64,
    pub downlink: bool,
}

pub fn pat_rows(run: &PatRun) -> Vec<PatRow> {
    run.states
        .iter()
        .map(|s| PatRow {
            time_s: s.time,
            phase: s.phase.name(),
            true_err_x_arcsec: s.true_error.x,
            true_err_y_arcsec: s.true_error.y,
            meas_err_x_arcsec: s.measured_error.map(|m| m.x),
            meas_err_y_arcsec: s.measured_error.map(|m| m.y),
            mount_cmd_x_arcsec: s.mount_offset_cmd.x,
            mount_cmd_y_arcsec: s.mount_offset_cmd.y,
            fsm_cmd_x_arcsec: s.fsm_offset_cmd.x,
            fsm_cmd_y_arcsec: s.fsm_offset_cmd.y,
            residual_arcsec: s.residual,
            downlink: s.downlink,
        })
        .collect()
}

pub fn write_pat(path: &Path, run: &PatRun, format: Format) -> Result<(), TelemetryError> {
    write_table(path, &pat_rows(run), format)
}

pub fn write_pcs(path: &Path, run: &PcsRun, format: Format) -> Result<(), TelemetryError> {
    // Visibilities are NaN when the loop is disabled; leave those cells empty.
    #[derive(Serialize)]
    struct Row {
        time_s: f64,
        theta_true_deg: f64,
        theta_hat_deg: f64,
        residual_deg: f64,
        v0: Option<f64>,
        v22_5: Option<f64>,
    }
    let finite = |v: f64| v.is_finite().then_some(v);
    let rows: Vec<Row> = run
        .samples
        .iter()
        .map(|s| Row {
            time_s: s.time_s,
            theta_true_deg: s.theta_true_deg,
            theta_hat_deg: s.theta_hat_deg,
            residual_deg: s.residual_deg,
            v0: finite(s.v0),
            v22_5: finite(s.v22_5),
        })
        .collect();
    write_table(path, &rows, format)
}

pub fn write_link(path: &Path, states: &[LinkState], format: Format) -> Result<(), TelemetryError> {
    #[derive(Serialize)]
    struct Row {
        time_s: f64,
        elevation_deg: f64,
        range_km: f64,
        residual_arcsec: Option<f64>,
        geometric_loss_db: f64,
        atmospheric_loss_db: f64,
        pointing_loss_db: Option<f64>,
        optics_loss_db: f64,
        total_transmittance: f64,
        background_rate: f64,
    }
    let finite = |v: f64| v.is_finite().then_some(v);
    let rows: Vec<Row> = states
        .iter()
        .map(|s| Row {
            time_s: s.time,
            elevation_deg: s.elevation_deg,
            range_km: s.range_km,
            residual_arcsec: finite(s.residual_arcsec),
            geometric_loss_db: s.geometric_loss_db,
            atmospheric_loss_db: s.atmospheric_loss_db,
            pointing_loss_db: finite(s.pointing_loss_db),
            optics_loss_db: s.optics_loss_db,
            total_transmittance: s.total_transmittance,
            background_rate: s.background_rate,
        })
        .collect();
    write_table(path, &rows, format)
}

/// Time tags as exported: detection time and channel only.
pub fn write_tags(path: &Path, tags: &[TimeTag], format: Format) -> Result<(), TelemetryError> {
    let mut out = create(path)?;
    match format {
        Format::Csv => {
            writeln!(out, "time_s,channel").map_err(io_err(path))?;
            for t in tags {
                writeln!(out, "{:.15e},{}", t.time, t.channel.token()).map_err(io_err(path))?;
            }
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Tag {
                time_s: f64,
                channel: &'static str,
            }
            let rows: Vec<Tag> = tags
                .iter()
                .map(|t| Tag {
                    time_s: t.time,
                    channel: t.channel.token(),
                })
                .collect();
            serde_json::to_writer(&mut out, &rows)?;
            out.write_all(b"\n").map_err(io_err(path))?;
        }
        Format::Binary => {
            for t in tags {
                out.write_all(&t.time.to_le_bytes()).map_err(io_err(path))?;
                out.write_all(&[t.channel.code()]).map_err(io_err(path))?;
            }
        }
    }
    out.flush().map_err(io_err(path))
}

fn exported(time: f64, channel: Channel) -> TimeTag {
    TimeTag {
        time,
        channel,
        origin: Origin::Signal,
        pair: None,
    }
}

/// Reads tags written by [`write_tags`] in CSV or binary form. Origin and
/// pair index are not stored; read tags carry `Signal` and `None`.
pub fn read_tags(path: &Path, format: Format) -> Result<Vec<TimeTag>, TelemetryError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    match format {
        Format::Binary => {
            if bytes.len() % 9 != 0 {
                return Err(TelemetryError::Malformed(format!("{} bytes is not a multiple of 9", bytes.len())));
            }
            bytes
                .chunks_exact(9)
                .map(|c| {
                    let time = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
                    let channel = Channel::from_code(c[8])
                        .ok_or_else(|| TelemetryError::Malformed(format!("unknown channel code {}", c[8])))?;
                    Ok(exported(time, channel))
                })
                .collect()
        }
        Format::Csv => {
            let mut r = csv::Reader::from_reader(bytes.as_slice());
            r.records()
                .map(|rec| {
                    let rec = rec?;
                    let time: f64 = rec
                        .get(0)
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| TelemetryError::Malformed(format!("bad time in {rec:?}")))?;
                    let channel = rec
                        .get(1)
                        .and_then(Channel::from_token)
                        .ok_or_else(|| TelemetryError::Malformed(format!("bad channel in {rec:?}")))?;
                    Ok(exported(time, channel))
                })
                .collect()
        }
        Format::Json => Err(TelemetryError::Malformed("JSON tags are write-only".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_tags() -> Vec<TimeTag> {
        [(0.0, Channel::H), (1.25e-9, Channel::A), (123.456_789_012_345, Channel::Beacon), (7.0, Channel::D)]
            .iter()
            .map(|&(t, c)| exported(t, c))
            .collect()
    }

    #[test]
    fn binary_tags_round_trip_exactly() {
        let dir = std::env::temp_dir().join(format!("qkdsim-tags-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("tags.bin");
        write_tags(&path, &sample_tags(), Format::Binary).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 36);
        assert_eq!(read_tags(&path, Format::Binary).unwrap(), sample_tags());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn csv_tags_keep_femtosecond_resolution() {
        let dir = std::env::temp_dir().join(format!("qkdsim-tags-csv-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("tags.csv");
        write_tags(&path, &sample_tags(), Format::Csv).unwrap();
        let back = read_tags(&path, Format::Csv).unwrap();
        for (a, b) in back.iter().zip(sample_tags()) {
            assert_eq!(a.channel, b.channel);
            assert!((a.time - b.time).abs() <= 1e-15 * b.time.abs().max(1e-9));
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
