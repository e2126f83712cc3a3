//! One row of a driving log.

use crate::error::{Error, Result};

/// A single time step of the driving stream. `t` indexes samples from 0 and
/// must be strictly increasing across a log; timestamps, when present, must
/// be non-decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct DrivingRecord {
    pub t: usize,
    pub timestamp_ns: Option<i64>,
    pub frame_path: String,
    /// Steering angle in radians.
    pub angle: f64,
    /// Throttle pressure in [0, 1].
    pub throttle: f64,
    /// Brake pressure in [0, 1].
    pub brake: f64,
}

impl DrivingRecord {
    /// Range checks that do not depend on neighboring records.
    pub fn validate(&self) -> Result<()> {
        if !self.angle.is_finite() {
            return Err(Error::contract(format!(
                "record t={}: non-finite angle",
                self.t
            )));
        }
        for (name, v) in [("throttle", self.throttle), ("brake", self.brake)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::contract(format!(
                    "record t={}: {name} {v} outside [0, 1]",
                    self.t
                )));
            }
        }
        Ok(())
    }
}

/// Checks the cross-record invariants: strictly increasing `t`, monotone
/// timestamps. Returns the offending 0-based record index on failure.
pub fn check_order(records: &[DrivingRecord]) -> std::result::Result<(), usize> {
    for i in 1..records.len() {
        if records[i].t <= records[i - 1].t {
            return Err(i);
        }
        if let (Some(a), Some(b)) = (records[i - 1].timestamp_ns, records[i].timestamp_ns) {
            if b < a {
                return Err(i);
            }
        }
    }
    Ok(())
}
