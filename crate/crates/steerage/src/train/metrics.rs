//! Per-epoch metrics and the two CSV surfaces: metrics history and
//! prediction dumps. Floats are written with Rust's shortest round-trip
//! formatting, so identical runs produce identical bytes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{Mode, PredictionRecord, SubroutineId};

pub const METRICS_HEADER: &str = "epoch,train_loss,test_rmse,test_mae";
pub const PREDICTIONS_HEADER: &str = "n,truth,predicted,sub_id_0,sub_id_1";

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    pub test_rmse: f64,
    pub test_mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsHistory {
    pub mode: Mode,
    pub epochs: Vec<EpochMetrics>,
}

impl MetricsHistory {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            epochs: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.epoch, e.train_loss, e.test_rmse, e.test_mae
            ));
        }
        out
    }
}

pub fn predictions_to_csv(records: &[PredictionRecord]) -> String {
    let mut out = String::from(PREDICTIONS_HEADER);
    out.push('\n');
    for r in records {
        let (id0, id1) = match r.sub_id {
            SubroutineId::None => (String::new(), String::new()),
            SubroutineId::LearnedScalar(g) => (g.to_string(), String::new()),
            SubroutineId::Centroid2d([x, y]) => (x.to_string(), y.to_string()),
        };
        out.push_str(&format!("{},{},{},{},{}\n", r.n, r.truth, r.predicted, id0, id1));
    }
    out
}

/// Parses a predictions CSV back into records, reporting the 1-based line
/// number of the first malformed row.
pub fn parse_predictions_csv(text: &str, origin: &Path) -> Result<Vec<PredictionRecord>> {
    let err = |line: usize, msg: &str| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg: msg.to_string(),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == PREDICTIONS_HEADER => {}
        _ => {
            return Err(Error::Header {
                path: origin.to_path_buf(),
                msg: format!("expected `{PREDICTIONS_HEADER}`"),
            })
        }
    }
    let mut out = Vec::new();
    for (i, row) in lines {
        let line = i + 1;
        if row.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 5 {
            return Err(err(line, &format!("expected 5 fields, got {}", fields.len())));
        }
        let n = fields[0]
            .parse()
            .map_err(|_| err(line, &format!("bad sample index `{}`", fields[0])))?;
        let truth = fields[1]
            .parse()
            .map_err(|_| err(line, &format!("bad truth `{}`", fields[1])))?;
        let predicted = fields[2]
            .parse()
            .map_err(|_| err(line, &format!("bad prediction `{}`", fields[2])))?;
        let sub_id = match (fields[3].is_empty(), fields[4].is_empty()) {
            (true, true) => SubroutineId::None,
            (false, true) => SubroutineId::LearnedScalar(
                fields[3]
                    .parse()
                    .map_err(|_| err(line, &format!("bad sub_id_0 `{}`", fields[3])))?,
            ),
            (false, false) => SubroutineId::Centroid2d([
                fields[3]
                    .parse()
                    .map_err(|_| err(line, &format!("bad sub_id_0 `{}`", fields[3])))?,
                fields[4]
                    .parse()
                    .map_err(|_| err(line, &format!("bad sub_id_1 `{}`", fields[4])))?,
            ]),
            (true, false) => return Err(err(line, "sub_id_1 present without sub_id_0")),
        };
        out.push(PredictionRecord {
            n,
            truth,
            predicted,
            sub_id,
        });
    }
    Ok(out)
}
