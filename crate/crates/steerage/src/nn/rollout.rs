//! Autoregressive evaluation: the worker predicts each angle from its own
//! previous prediction, with LSTM state carried across the whole range.

use super::manager::{Manager, SubroutineId};
use super::worker::WorkerNet;
use crate::autodiff::Tensor;
use crate::data::{sequence_ending_at, DrivingRecord};
use crate::error::{Error, Result};

/// One rollout step's outcome, CSV-ready.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    /// Position in the records slice.
    pub n: usize,
    pub truth: f64,
    pub predicted: f64,
    pub sub_id: SubroutineId,
}

/// Smallest `start` index a rollout over this manager can serve: the worker
/// needs m frames of history; the learned manager needs m previous angles.
pub fn min_start(worker_m: usize, manager: &Manager) -> usize {
    match manager {
        Manager::Learned(net) => (worker_m - 1).max(net.config.m),
        _ => worker_m - 1,
    }
}

/// Predicts angles for `start..end` over index-aligned `frames` (one
/// [C×H×W] tensor per record) and `records`. The first step seeds the
/// previous angle with 0; every later step feeds back the prediction.
/// The learned manager's angle window uses ground truth for positions
/// before `start` and predictions afterwards, never any index ≥ n.
pub fn rollout(
    worker: &WorkerNet,
    manager: &Manager,
    frames: &[Tensor],
    records: &[DrivingRecord],
    start: usize,
    end: usize,
) -> Result<Vec<PredictionRecord>> {
    if frames.len() != records.len() {
        return Err(Error::contract(format!(
            "{} frames for {} records",
            frames.len(),
            records.len()
        )));
    }
    if start >= end || end > records.len() {
        return Err(Error::contract(format!(
            "rollout range {start}..{end} invalid for {} records",
            records.len()
        )));
    }
    let m = worker.config.m;
    if start < min_start(m, manager) {
        return Err(Error::contract(format!(
            "insufficient history before index {start} (first predictable index is {})",
            min_start(m, manager)
        )));
    }

    let mut out: Vec<PredictionRecord> = Vec::with_capacity(end - start);
    let mut worker_state: Option<(Tensor, Tensor)> = None;
    let mut manager_state: Option<(Tensor, Tensor)> = None;

    for n in start..end {
        let sub_id = match manager {
            Manager::None => SubroutineId::None,
            Manager::GtTsne(lookup) => SubroutineId::Centroid2d(lookup.lookup(records[n].t)?),
            Manager::PredTsne(net) => SubroutineId::Centroid2d(net.predict(&frames[n])?),
            Manager::Learned(net) => {
                let mm = net.config.m;
                let window: Vec<f64> = (n - mm..n)
                    .map(|p| {
                        assert!(p < n, "manager window index {p} >= {n}");
                        if p >= start {
                            out[p - start].predicted
                        } else {
                            records[p].angle
                        }
                    })
                    .collect();
                let (g, state) = net.predict(&window, manager_state.take())?;
                manager_state = Some(state);
                SubroutineId::LearnedScalar(g)
            }
        };

        let seq = sequence_ending_at(frames, n, m)?;
        let prev = out.last().map_or(0.0, |r| r.predicted);
        let (predicted, state) = worker.predict(seq.tensor(), &sub_id, prev, worker_state.take())?;
        worker_state = Some(state);
        out.push(PredictionRecord {
            n,
            truth: records[n].angle,
            predicted,
            sub_id,
        });
    }
    Ok(out)
}
