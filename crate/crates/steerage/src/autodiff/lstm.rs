//! One LSTM cell step composed from tape primitives, so gradients flow
//! through every path for free.
//!
//! Gate layout along the stacked dimension is [input, forget, candidate,
//! output]; weights are `w_ih: [4·d_h × d_in]`, `w_hh: [4·d_h × d_h]` with
//! bias vectors `b_ih`, `b_hh` of length `4·d_h`.

use super::tape::{Tape, ValueId};
use crate::error::{Error, Result};

/// Tape handles for one cell's weights, bound for the current graph.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeightIds {
    pub w_ih: ValueId,
    pub w_hh: ValueId,
    pub b_ih: ValueId,
    pub b_hh: ValueId,
}

/// c' = f⊙c + i⊙g̃, h' = o⊙tanh(c'). Returns (h', c').
pub fn lstm_step(
    tape: &mut Tape,
    x: ValueId,
    h: ValueId,
    c: ValueId,
    w: &LstmWeightIds,
) -> Result<(ValueId, ValueId)> {
    let d_in = expect_rank1(tape, x, "lstm input x")?;
    let d_h = expect_rank1(tape, h, "lstm state h")?;
    let d_c = expect_rank1(tape, c, "lstm state c")?;
    if d_c != d_h {
        return Err(Error::shape(format!(
            "lstm states disagree: h has {d_h} units, c has {d_c}"
        )));
    }
    let s_ih = tape.value(w.w_ih).shape().to_vec();
    let s_hh = tape.value(w.w_hh).shape().to_vec();
    if s_ih != [4 * d_h, d_in] {
        return Err(Error::shape(format!(
            "lstm w_ih must be [{}×{d_in}], got {s_ih:?}",
            4 * d_h
        )));
    }
    if s_hh != [4 * d_h, d_h] {
        return Err(Error::shape(format!(
            "lstm w_hh must be [{}×{d_h}], got {s_hh:?}",
            4 * d_h
        )));
    }
    for (name, id) in [("b_ih", w.b_ih), ("b_hh", w.b_hh)] {
        let s = tape.value(id).shape();
        if s != [4 * d_h] {
            return Err(Error::shape(format!(
                "lstm {name} must be [{}], got {s:?}",
                4 * d_h
            )));
        }
    }

    let zx = tape.matvec(w.w_ih, x)?;
    let zx = tape.add(zx, w.b_ih)?;
    let zh = tape.matvec(w.w_hh, h)?;
    let zh = tape.add(zh, w.b_hh)?;
    let z = tape.add(zx, zh)?;

    let i_gate = {
        let s = tape.slice(z, 0, d_h)?;
        tape.sigmoid(s)?
    };
    let f_gate = {
        let s = tape.slice(z, d_h, d_h)?;
        tape.sigmoid(s)?
    };
    let g_cand = {
        let s = tape.slice(z, 2 * d_h, d_h)?;
        tape.tanh(s)?
    };
    let o_gate = {
        let s = tape.slice(z, 3 * d_h, d_h)?;
        tape.sigmoid(s)?
    };

    let fc = tape.mul(f_gate, c)?;
    let ig = tape.mul(i_gate, g_cand)?;
    let c_next = tape.add(fc, ig)?;
    let tc = tape.tanh(c_next)?;
    let h_next = tape.mul(o_gate, tc)?;
    Ok((h_next, c_next))
}

fn expect_rank1(tape: &Tape, id: ValueId, what: &str) -> Result<usize> {
    let s = tape.value(id).shape();
    if s.len() != 1 {
        return Err(Error::shape(format!("{what} must be rank 1, got {s:?}")));
    }
    Ok(s[0])
}
