//! The τ-shift rule: predictions inside window τ+1 use the centroid of
//! window τ, so the target angle can never inform its own subroutine id.

use super::kmeans::CentroidSet;
use super::window::ActionWindow;
use crate::error::{Error, Result};

/// τ-shift core rule: the 1-based window number serving sample `t`, given
/// that `n_windows` windows were embedded. Shared by every lookup surface.
pub fn serving_window(t: usize, m: usize, n_windows: usize) -> Result<usize> {
    if m == 0 {
        return Err(Error::config("window length m must be >= 1"));
    }
    if t < 2 * m {
        return Err(Error::contract(format!(
            "insufficient history: t = {t} needs at least one complete prior window (t >= {})",
            2 * m
        )));
    }
    let tau = t / m;
    if tau > n_windows {
        return Err(Error::contract(format!(
            "window τ = {tau} is outside the embedded range (1..={n_windows}); \
             the embedding covers its construction split only"
        )));
    }
    Ok(tau)
}

/// Centroid coordinates serving sample `t`.
///
/// For t ∈ [τm, (τ+1)m) this returns the centroid assigned to window τ,
/// which was built from samples [(τ−1)m, τm) only — every sample it can
/// read lies strictly below ⌊t/m⌋·m.
pub fn subroutine_lookup(
    t: usize,
    m: usize,
    centroids: &CentroidSet,
    windows: &[ActionWindow],
) -> Result<[f64; 2]> {
    let tau = serving_window(t, m, windows.len())?;
    let window = &windows[tau - 1];
    if window.tau != tau {
        return Err(Error::contract(format!(
            "window list is not the contiguous 1-based sequence: slot {} holds τ = {}",
            tau - 1,
            window.tau
        )));
    }
    let assigned = centroids.assignment.get(tau - 1).copied().ok_or_else(|| {
        Error::contract(format!(
            "no cluster assignment for window τ = {tau} (assignments cover {})",
            centroids.assignment.len()
        ))
    })?;
    Ok(centroids.centroids[assigned])
}
