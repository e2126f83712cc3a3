//! Exact (O(N²)) t-SNE.
//!
//! Per-point Gaussian bandwidths are found by bisection so every
//! conditional row hits the target perplexity; the joint P is the
//! symmetrized average; the embedding minimizes KL(P‖Q) with a Student-t
//! (df=1) Q via gradient descent with momentum, per-coordinate gains, and
//! early exaggeration.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::window::ActionWindow;
use crate::error::{Error, Result};

pub const DEFAULT_PERPLEXITY: f64 = 30.0;
pub const DEFAULT_ITERATIONS: usize = 1000;
const LEARNING_RATE: f64 = 200.0;
const MOMENTUM_EARLY: f64 = 0.5;
const MOMENTUM_LATE: f64 = 0.8;
const MOMENTUM_SWITCH: usize = 250;
const EXAGGERATION: f64 = 12.0;
const EXAGGERATION_END: usize = 250;
const INIT_SIGMA: f64 = 1e-4;
const Q_FLOOR: f64 = 1e-12;
const MIN_GAIN: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: DEFAULT_PERPLEXITY,
            iterations: DEFAULT_ITERATIONS,
            seed: 0,
        }
    }
}

/// Window τ placed in the 2-D embedding plane.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedPoint {
    pub tau: usize,
    pub coords: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct TsneDiagnostics {
    /// 2^entropy of each conditional row after bandwidth search.
    pub row_perplexities: Vec<f64>,
    /// KL(P‖Q) of the initial embedding, un-exaggerated P.
    pub kl_start: f64,
    /// KL(P‖Q) after the final iteration.
    pub kl_final: f64,
}

#[derive(Debug, Clone)]
pub struct TsneResult {
    pub points: Vec<EmbeddedPoint>,
    pub diagnostics: TsneDiagnostics,
}

/// Squared Euclidean distances, row-major N×N with zero diagonal.
pub fn pairwise_sq_dists(vectors: &[Vec<f64>]) -> Vec<f64> {
    let n = vectors.len();
    let mut d2 = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let s: f64 = vectors[i]
                .iter()
                .zip(&vectors[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d2[i * n + j] = s;
            d2[j * n + i] = s;
        }
    }
    d2
}

/// Entropy (nats) and conditional probabilities of row `i` at precision
/// `beta` = 1/(2σ²). The row is written into `p_row` (self slot left 0).
fn row_entropy(d2: &[f64], n: usize, i: usize, beta: f64, p_row: &mut [f64]) -> f64 {
    let row = &d2[i * n..(i + 1) * n];
    let shift = row
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let mut sum_w = 0.0;
    let mut sum_wd = 0.0;
    for j in 0..n {
        if j == i {
            p_row[j] = 0.0;
            continue;
        }
        let w = (-beta * (row[j] - shift)).exp();
        p_row[j] = w;
        sum_w += w;
        sum_wd += w * (row[j] - shift);
    }
    for p in p_row.iter_mut() {
        *p /= sum_w;
    }
    sum_w.ln() + beta * sum_wd / sum_w
}

/// Conditional probability matrix (rows sum to 1) and per-row perplexities.
pub fn conditional_probabilities(
    d2: &[f64],
    n: usize,
    perplexity: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if perplexity <= 1.0 {
        return Err(Error::config(format!(
            "perplexity must be > 1, got {perplexity}"
        )));
    }
    let target_h = perplexity.ln();
    let mut p_cond = vec![0.0; n * n];
    let mut row_perp = vec![0.0; n];
    let mut row = vec![0.0; n];

    for i in 0..n {
        let mut beta = 1.0;
        let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
        let mut h = row_entropy(d2, n, i, beta, &mut row);
        for _ in 0..200 {
            if (h - target_h).abs() < 1e-9 {
                break;
            }
            if h > target_h {
                // Too diffuse: raise beta.
                lo = beta;
                beta = if hi.is_finite() { (lo + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (lo + hi) / 2.0;
            }
            h = row_entropy(d2, n, i, beta, &mut row);
        }
        row_perp[i] = h.exp();
        p_cond[i * n..(i + 1) * n].copy_from_slice(&row);
    }
    Ok((p_cond, row_perp))
}

/// P = (P_cond + P_condᵀ) / (2N); entries sum to 1.
pub fn symmetrize(p_cond: &[f64], n: usize) -> Vec<f64> {
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (p_cond[i * n + j] + p_cond[j * n + i]) / (2.0 * n as f64);
        }
    }
    p
}

/// KL(P‖Q) over off-diagonal entries; zero-probability P entries contribute 0.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pv, _)| **pv > 0.0)
        .map(|(pv, qv)| pv * (pv / qv.max(Q_FLOOR)).ln())
        .sum()
}

fn student_t_q(y: &[[f64; 2]]) -> (Vec<f64>, Vec<f64>) {
    let n = y.len();
    let mut w = vec![0.0; n * n];
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            w[i * n + j] = v;
            w[j * n + i] = v;
            total += 2.0 * v;
        }
    }
    let q: Vec<f64> = w.iter().map(|v| (v / total).max(Q_FLOOR)).collect();
    (q, w)
}

/// Core embedding over raw vectors; callers supply any row identity.
pub fn tsne_embed_vectors(
    vectors: &[Vec<f64>],
    cfg: &TsneConfig,
) -> Result<(Vec<[f64; 2]>, TsneDiagnostics)> {
    let n = vectors.len();
    if cfg.perplexity <= 1.0 {
        return Err(Error::config(format!(
            "perplexity must be > 1, got {}",
            cfg.perplexity
        )));
    }
    if (n as f64) <= 3.0 * cfg.perplexity {
        return Err(Error::contract(format!(
            "t-SNE needs more than 3×perplexity = {} points, got {n}",
            3.0 * cfg.perplexity
        )));
    }
    if let Some(bad) = vectors.iter().position(|v| v.len() != vectors[0].len()) {
        return Err(Error::shape(format!(
            "vector {bad} has length {}, expected {}",
            vectors[bad].len(),
            vectors[0].len()
        )));
    }

    let d2 = pairwise_sq_dists(vectors);
    let (p_cond, row_perplexities) = conditional_probabilities(&d2, n, cfg.perplexity)?;
    let p = symmetrize(&p_cond, n);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, INIT_SIGMA).expect("positive sigma");
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)])
        .collect();
    let mut velocity = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0_f64; 2]; n];

    let (q0, _) = student_t_q(&y);
    let kl_start = kl_divergence(&p, &q0);

    let mut grad = vec![[0.0; 2]; n];
    for iter in 0..cfg.iterations {
        let exaggeration = if iter < EXAGGERATION_END { EXAGGERATION } else { 1.0 };
        let momentum = if iter < MOMENTUM_SWITCH {
            MOMENTUM_EARLY
        } else {
            MOMENTUM_LATE
        };
        let (q, w) = student_t_q(&y);
        for g in grad.iter_mut() {
            *g = [0.0; 2];
        }
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let coeff = 4.0 * (exaggeration * p[i * n + j] - q[i * n + j]) * w[i * n + j];
                grad[i][0] += coeff * (y[i][0] - y[j][0]);
                grad[i][1] += coeff * (y[i][1] - y[j][1]);
            }
        }
        for i in 0..n {
            for a in 0..2 {
                // Per-coordinate gains damp oscillation along coordinates
                // where the gradient keeps agreeing with the velocity and
                // boost it where they fight; without them the step size is
                // unstable during exaggeration.
                let same_sign = (grad[i][a] > 0.0) == (velocity[i][a] > 0.0);
                gains[i][a] = if same_sign {
                    (gains[i][a] * 0.8).max(MIN_GAIN)
                } else {
                    gains[i][a] + 0.2
                };
                velocity[i][a] =
                    momentum * velocity[i][a] - LEARNING_RATE * gains[i][a] * grad[i][a];
                y[i][a] += velocity[i][a];
            }
        }
        // Recenter so the embedding does not drift.
        let mean = y.iter().fold([0.0; 2], |m, p| [m[0] + p[0], m[1] + p[1]]);
        let mean = [mean[0] / n as f64, mean[1] / n as f64];
        for p in y.iter_mut() {
            p[0] -= mean[0];
            p[1] -= mean[1];
        }
    }

    let (q, _) = student_t_q(&y);
    let kl_final = kl_divergence(&p, &q);
    Ok((
        y,
        TsneDiagnostics {
            row_perplexities,
            kl_start,
            kl_final,
        },
    ))
}

/// Embeds action windows; point order follows window order.
pub fn tsne_embed(windows: &[ActionWindow], cfg: &TsneConfig) -> Result<TsneResult> {
    let vectors: Vec<Vec<f64>> = windows.iter().map(|w| w.vector.clone()).collect();
    let (coords, diagnostics) = tsne_embed_vectors(&vectors, cfg)?;
    let points = windows
        .iter()
        .zip(coords)
        .map(|(w, c)| EmbeddedPoint {
            tau: w.tau,
            coords: c,
        })
        .collect();
    Ok(TsneResult {
        points,
        diagnostics,
    })
}
