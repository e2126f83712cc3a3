//! The three reported losses, as plain reductions and as tape ops.
//! RMSE is defined as √MSE of the same vector, exactly.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{Tape, ValueId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    Rmse,
    Mae,
}

impl LossKind {
    pub const ALL: [LossKind; 3] = [LossKind::Mse, LossKind::Rmse, LossKind::Mae];

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Rmse => "rmse",
            LossKind::Mae => "mae",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "rmse" => Ok(LossKind::Rmse),
            "mae" => Ok(LossKind::Mae),
            other => Err(Error::config(format!(
                "unknown loss kind `{other}` (expected mse, rmse, or mae)"
            ))),
        }
    }
}

fn check_lengths(preds: &[f64], truths: &[f64]) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::contract("loss over zero predictions"));
    }
    if preds.len() != truths.len() {
        return Err(Error::contract(format!(
            "{} predictions vs {} truths",
            preds.len(),
            truths.len()
        )));
    }
    Ok(())
}

pub fn mse(preds: &[f64], truths: &[f64]) -> Result<f64> {
    check_lengths(preds, truths)?;
    let n = preds.len() as f64;
    Ok(preds
        .iter()
        .zip(truths)
        .map(|(a, t)| (a - t) * (a - t))
        .sum::<f64>()
        / n)
}

pub fn rmse(preds: &[f64], truths: &[f64]) -> Result<f64> {
    Ok(mse(preds, truths)?.sqrt())
}

pub fn mae(preds: &[f64], truths: &[f64]) -> Result<f64> {
    check_lengths(preds, truths)?;
    let n = preds.len() as f64;
    Ok(preds.iter().zip(truths).map(|(a, t)| (a - t).abs()).sum::<f64>() / n)
}

pub fn loss(kind: LossKind, preds: &[f64], truths: &[f64]) -> Result<f64> {
    match kind {
        LossKind::Mse => mse(preds, truths),
        LossKind::Rmse => rmse(preds, truths),
        LossKind::Mae => mae(preds, truths),
    }
}

/// Differentiable loss between two equal-length 1-D tape values.
pub fn tape_loss(tape: &mut Tape, kind: LossKind, preds: ValueId, truths: ValueId) -> Result<ValueId> {
    if tape.value(preds).is_empty() {
        return Err(Error::contract("loss over zero predictions"));
    }
    if tape.value(preds).shape() != tape.value(truths).shape() {
        return Err(Error::contract(format!(
            "{} predictions vs {} truths",
            tape.value(preds).len(),
            tape.value(truths).len()
        )));
    }
    let diff = tape.sub(preds, truths)?;
    match kind {
        LossKind::Mse => {
            let sq = tape.mul(diff, diff)?;
            tape.mean_all(sq)
        }
        LossKind::Rmse => {
            let sq = tape.mul(diff, diff)?;
            let m = tape.mean_all(sq)?;
            tape.sqrt(m)
        }
        LossKind::Mae => {
            let a = tape.abs(diff)?;
            tape.mean_all(a)
        }
    }
}
