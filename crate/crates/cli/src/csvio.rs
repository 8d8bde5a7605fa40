//! Trace CSV files: one row per bin, fixed column set, floats in `{:.10e}`.
//! Everything a bin holds is written, so a trace read back can be stitched
//! or compared like the original.

use std::io::{Read, Write};

use nuotdr::engine::{BinStatus, PartialTrace, TraceBin};

use crate::error::CliError;

pub const TRACE_HEADER: [&str; 14] = [
    "distance_km",
    "delay_s",
    "gates_applied",
    "gates_activated",
    "detections",
    "expected_dark",
    "attenuation_db",
    "est_power_w",
    "power_lo_w",
    "power_hi_w",
    "trace_db",
    "offset_sigma_db",
    "status",
    "provenance",
];

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.10e}")
}

fn status_name(s: BinStatus) -> &'static str {
    match s {
        BinStatus::Ok => "ok",
        BinStatus::NoData => "no_data",
        BinStatus::Saturated => "saturated",
        BinStatus::BelowDark => "below_dark",
    }
}

fn parse_status(s: &str) -> Option<BinStatus> {
    Some(match s {
        "ok" => BinStatus::Ok,
        "no_data" => BinStatus::NoData,
        "saturated" => BinStatus::Saturated,
        "below_dark" => BinStatus::BelowDark,
        _ => return None,
    })
}

pub fn write_trace<W: Write>(out: W, bins: &[TraceBin]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for b in bins {
        w.write_record([
            fmt_f64(b.distance_km),
            fmt_f64(b.delay_s),
            b.gates_applied.to_string(),
            b.gates_activated.to_string(),
            b.detections.to_string(),
            fmt_f64(b.expected_dark),
            fmt_f64(b.attenuation_db),
            fmt_f64(b.estimated_power_w),
            fmt_f64(b.power_interval_w.0),
            fmt_f64(b.power_interval_w.1),
            fmt_f64(b.db_value),
            fmt_f64(b.offset_sigma_db),
            status_name(b.status).to_string(),
            b.provenance.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<T, CliError> {
    let raw = rec.get(i).unwrap_or("");
    raw.trim()
        .parse()
        .map_err(|_| CliError::Io(format!("line {line}: column {} = {raw:?} is not valid", TRACE_HEADER[i])))
}

/// Read a trace written by [`write_trace`].
pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceBin>, CliError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().map(str::trim).ne(TRACE_HEADER) {
        return Err(CliError::Io(format!(
            "unexpected header {:?}, expected {}",
            header.iter().collect::<Vec<_>>(),
            TRACE_HEADER.join(",")
        )));
    }
    let mut bins = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let raw_status = rec.get(12).unwrap_or("").trim();
        let status = parse_status(raw_status)
            .ok_or_else(|| CliError::Io(format!("line {line}: unknown status {raw_status:?}")))?;
        bins.push(TraceBin {
            distance_km: field(&rec, 0, line)?,
            delay_s: field(&rec, 1, line)?,
            gates_applied: field(&rec, 2, line)?,
            gates_activated: field(&rec, 3, line)?,
            detections: field(&rec, 4, line)?,
            expected_dark: field(&rec, 5, line)?,
            attenuation_db: field(&rec, 6, line)?,
            estimated_power_w: field(&rec, 7, line)?,
            power_interval_w: (field(&rec, 8, line)?, field(&rec, 9, line)?),
            db_value: field(&rec, 10, line)?,
            offset_sigma_db: field(&rec, 11, line)?,
            status,
            provenance: field(&rec, 13, line)?,
        });
    }
    Ok(bins)
}

/// A trace file read back as one partial trace of a campaign.
pub fn read_partial<R: Read>(input: R) -> Result<PartialTrace, CliError> {
    let bins = read_trace(input)?;
    let attenuation_db = bins.first().map_or(0.0, |b| b.attenuation_db);
    Ok(PartialTrace { bins, attenuation_db, overlap_span_km: 0.0, floor_reached: false })
}
