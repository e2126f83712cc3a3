//! Adapter for Udacity-style `interpolated.csv` logs.
//!
//! Source layout (column names located via the header): `timestamp`,
//! `frame_id`, `filename`, `angle`, plus optional `torque` and `speed`
//! which this pipeline ignores. Throttle/brake columns are honored when
//! present and default to 0 with a warning otherwise.

use std::fs;
use std::path::Path;

use super::record::{check_order, DrivingRecord};
use crate::error::{Error, Result};

pub fn load_udacity_csv(path: impl AsRef<Path>) -> Result<Vec<DrivingRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Header {
        path: path.to_path_buf(),
        msg: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| cols.iter().position(|c| *c == name);

    let idx_ts = find("timestamp");
    let idx_file = find("filename").ok_or_else(|| Error::Header {
        path: path.to_path_buf(),
        msg: "missing `filename` column".into(),
    })?;
    let idx_angle = find("angle").ok_or_else(|| Error::Header {
        path: path.to_path_buf(),
        msg: "missing `angle` column".into(),
    })?;
    let idx_throttle = find("throttle");
    let idx_brake = find("brake");
    if idx_throttle.is_none() {
        log::warn!("{}: no throttle column, defaulting to 0", path.display());
    }
    if idx_brake.is_none() {
        log::warn!("{}: no brake column, defaulting to 0", path.display());
    }

    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                msg: format!("expected {} fields, found {}", cols.len(), fields.len()),
            });
        }
        let get_f64 = |idx: Option<usize>, name: &str| -> Result<Option<f64>> {
            match idx {
                None => Ok(None),
                Some(j) => fields[j]
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| Error::Parse {
                        path: path.to_path_buf(),
                        line: line_no,
                        msg: format!("invalid {name} value `{}`", fields[j]),
                    }),
            }
        };
        let timestamp_ns = match idx_ts {
            None => None,
            Some(j) => Some(fields[j].parse::<i64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                msg: format!("invalid timestamp value `{}`", fields[j]),
            })?),
        };
        let record = DrivingRecord {
            t: records.len(),
            timestamp_ns,
            frame_path: fields[idx_file].to_string(),
            angle: get_f64(Some(idx_angle), "angle")?.unwrap(),
            throttle: get_f64(idx_throttle, "throttle")?.unwrap_or(0.0).clamp(0.0, 1.0),
            brake: get_f64(idx_brake, "brake")?.unwrap_or(0.0).clamp(0.0, 1.0),
        };
        records.push(record);
    }
    if let Err(idx) = check_order(&records) {
        return Err(Error::NonMonotone {
            path: path.to_path_buf(),
            line: idx + 2,
        });
    }
    Ok(records)
}
