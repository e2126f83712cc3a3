//! Driving-log CSV: `t,timestamp_ns,frame_path,angle_rad,throttle,brake`.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! save/load cycle reproduces values bit-exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::record::{check_order, DrivingRecord};
use crate::error::{Error, Result};

pub const LOG_HEADER: &str = "t,timestamp_ns,frame_path,angle_rad,throttle,brake";

pub fn load_log(path: impl AsRef<Path>) -> Result<Vec<DrivingRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == LOG_HEADER => {}
        Some(h) => {
            return Err(Error::Header {
                path: path.to_path_buf(),
                msg: format!("expected `{LOG_HEADER}`, found `{h}`"),
            })
        }
        None => {
            return Err(Error::Header {
                path: path.to_path_buf(),
                msg: "empty file".into(),
            })
        }
    }

    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(parse_err(path, line_no, format!("expected 6 fields, found {}", fields.len())));
        }
        let t = parse_field::<usize>(path, line_no, "t", fields[0])?;
        let timestamp_ns = if fields[1].is_empty() {
            None
        } else {
            Some(parse_field::<i64>(path, line_no, "timestamp_ns", fields[1])?)
        };
        let record = DrivingRecord {
            t,
            timestamp_ns,
            frame_path: fields[2].to_string(),
            angle: parse_field::<f64>(path, line_no, "angle_rad", fields[3])?,
            throttle: parse_field::<f64>(path, line_no, "throttle", fields[4])?,
            brake: parse_field::<f64>(path, line_no, "brake", fields[5])?,
        };
        if let Err(e) = record.validate() {
            return Err(parse_err(path, line_no, e.to_string()));
        }
        records.push(record);
    }

    if let Err(idx) = check_order(&records) {
        // Record idx sits on data line idx+2 (header is line 1).
        return Err(Error::NonMonotone {
            path: path.to_path_buf(),
            line: idx + 2,
        });
    }
    Ok(records)
}

pub fn save_log(path: impl AsRef<Path>, records: &[DrivingRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(records.len() * 48 + LOG_HEADER.len() + 1);
    out.push_str(LOG_HEADER);
    out.push('\n');
    for r in records {
        let ts = r.timestamp_ns.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.t, ts, r.frame_path, r.angle, r.throttle, r.brake
        ));
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    line: usize,
    name: &str,
    raw: &str,
) -> Result<T> {
    raw.parse()
        .map_err(|_| parse_err(path, line, format!("invalid {name} value `{raw}`")))
}

fn parse_err(path: &Path, line: usize, msg: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    }
}
