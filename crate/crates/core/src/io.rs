//! Patient-level CSV: header `time,event,treatment,stratum`.

use crate::cox::{PatientRecord, SiteData};
use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

const HEADER: [&str; 4] = ["time", "event", "treatment", "stratum"];

fn parse_flag(field: &str, name: &str) -> std::result::Result<bool, String> {
    match field.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(format!("{name} must be 0 or 1, got '{other}'")),
    }
}

fn parse_record(fields: &csv::StringRecord) -> std::result::Result<PatientRecord, String> {
    if fields.len() != 4 {
        return Err(format!("expected 4 fields, found {}", fields.len()));
    }
    let time: f64 = fields[0]
        .trim()
        .parse()
        .map_err(|_| format!("time is not a number: '{}'", &fields[0]))?;
    if !(time > 0.0 && time.is_finite()) {
        return Err(format!("time must be positive, got {time}"));
    }
    let event = parse_flag(&fields[1], "event")?;
    let treated = parse_flag(&fields[2], "treatment")?;
    let stratum: u64 = fields[3].trim().parse().map_err(|_| {
        format!(
            "stratum must be a non-negative integer, got '{}'",
            &fields[3]
        )
    })?;
    Ok(PatientRecord {
        time,
        event,
        treated,
        stratum,
    })
}

/// Reads patient records; `source` names the input in error messages.
pub fn read_patient_csv<R: Read>(reader: R, source: &str, site_id: &str) -> Result<SiteData> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = csv.headers()?.clone();
    if header.iter().map(str::trim).ne(HEADER) {
        return Err(Error::Parse {
            path: source.to_string(),
            line: 1,
            message: format!("expected header '{}'", HEADER.join(",")),
        });
    }
    let mut records = Vec::new();
    for row in csv.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let record = parse_record(&row).map_err(|message| Error::Parse {
            path: source.to_string(),
            line,
            message,
        })?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::Parse {
            path: source.to_string(),
            line: 1,
            message: "no patient records".into(),
        });
    }
    SiteData::new(site_id, records)
}

pub fn read_patient_file(path: &Path, site_id: &str) -> Result<SiteData> {
    let file = std::fs::File::open(path)?;
    read_patient_csv(file, &path.display().to_string(), site_id)
}

pub fn write_patient_csv<W: Write>(data: &SiteData, writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(HEADER)?;
    for r in data.records() {
        csv.write_record([
            r.time.to_string(),
            (r.event as u8).to_string(),
            (r.treated as u8).to_string(),
            r.stratum.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}
