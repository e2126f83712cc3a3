//! Release gate: one test per numbered criterion. Each test checks its
//! stated tolerance end to end and prints a PASS line with the measured
//! numbers (visible under --nocapture).

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use steerage::autodiff::{lstm_step, LstmWeightIds, Tape, Tensor, ValueId};
use steerage::data::{
    augment_flip, flip_width, load_log, normalize_image, read_ppm, synth_generate, DrivingRecord,
    FrameSequence, SynthConfig,
};
use steerage::embed::tsne::{conditional_probabilities, pairwise_sq_dists, symmetrize};
use steerage::embed::{
    kmeans_coords, make_windows, purity, serving_window, subroutine_lookup, tsne_embed,
    tsne_embed_vectors, TsneConfig,
};
use steerage::nn::{
    rollout, Manager, Mode, SubroutineIdNet, SubroutineIdNetConfig, WorkerConfig, WorkerNet,
};
use steerage::train::{
    compare_k, compare_k_csv, mae, mse, rmse, tape_loss, train_joint, LossKind, TrainConfig,
    TrainInputs,
};

// ---------------------------------------------------------------------------
// Criterion 1: reverse-mode gradients vs central finite differences.

const FD_H: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Max relative error between reverse-mode gradients and central finite
/// differences over every scalar of every leaf. `graph` must create its
/// leaves from `shapes` in order and return the scalar loss.
fn fd_check(
    name: &str,
    shapes: &[&[usize]],
    flat: &[f64],
    graph: &dyn Fn(&mut Tape, &[ValueId]) -> ValueId,
) -> f64 {
    let eval = |flat: &[f64]| -> (Tape, ValueId, Vec<ValueId>) {
        let mut tape = Tape::new();
        let mut leaves = Vec::with_capacity(shapes.len());
        let mut off = 0;
        for &shape in shapes {
            let len: usize = shape.iter().product();
            let t = Tensor::new(shape.to_vec(), flat[off..off + len].to_vec()).unwrap();
            leaves.push(tape.leaf(t));
            off += len;
        }
        assert_eq!(off, flat.len(), "{name}: leaf shapes disagree with input length");
        let loss = graph(&mut tape, &leaves);
        (tape, loss, leaves)
    };

    let (tape, loss, leaves) = eval(flat);
    let grads = tape.backward(loss).unwrap();
    let analytic: Vec<f64> = leaves
        .iter()
        .flat_map(|&id| grads.wrt(id).to_vec())
        .collect();

    let mut worst = 0.0_f64;
    for i in 0..flat.len() {
        let mut plus = flat.to_vec();
        plus[i] += FD_H;
        let mut minus = flat.to_vec();
        minus[i] -= FD_H;
        let (tp, lp, _) = eval(&plus);
        let (tm, lm, _) = eval(&minus);
        let numeric =
            (tp.value(lp).item().unwrap() - tm.value(lm).item().unwrap()) / (2.0 * FD_H);
        let e = rel_err(analytic[i], numeric);
        assert!(
            e < FD_TOL,
            "{name}: grad[{i}] analytic {} vs numeric {numeric}, rel err {e:.3e}",
            analytic[i]
        );
        worst = worst.max(e);
    }
    worst
}

fn uniform_vec(len: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Values in ±[0.3, 1.0]: far from the relu/elu/abs kinks relative to the
/// finite-difference step.
fn kink_free(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len)
        .map(|_| {
            let v = rng.gen_range(0.3..1.0);
            if rng.gen_bool(0.5) {
                -v
            } else {
                v
            }
        })
        .collect()
}

fn squared_mean(tape: &mut Tape, y: ValueId) -> ValueId {
    let sq = tape.mul(y, y).unwrap();
    tape.mean_all(sq).unwrap()
}

/// Finite differences over every parameter of a small but complete worker
/// (conv stages, skips, group norm, LSTM, head) driven through one step.
fn worker_fd_max_err() -> f64 {
    let config = WorkerConfig {
        m: 2,
        in_channels: 2,
        height: 8,
        width: 8,
        conv_channels: [2, 2, 2, 2],
        kernel_depth: 1,
        kernel_hw: 3,
        pool_after: vec![2, 4],
        feature_width: 6,
        lstm_hidden: 5,
        dropout: 0.0,
        norm_groups: 2,
        id_arity: 1,
    };
    let proto = WorkerNet::seeded(config.clone(), 21).unwrap();
    let flat0 = proto.params.flatten();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let frames = Tensor::uniform(vec![2, 2, 8, 8], -1.0, 1.0, &mut rng);

    let build = |flat: &[f64]| -> (Tape, ValueId, Vec<ValueId>) {
        let mut net = WorkerNet::zeros(config.clone()).unwrap();
        net.params.assign_flat(flat).unwrap();
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape);
        let fid = tape.constant(frames.clone());
        let gid = Some(tape.constant(Tensor::vector(vec![0.37])));
        let prev = tape.constant(Tensor::scalar(0.1));
        let state = net.zero_state(&mut tape);
        let mut fwd_rng = ChaCha8Rng::seed_from_u64(0);
        let step = net
            .forward(&mut tape, &bound, fid, gid, prev, state, false, &mut fwd_rng)
            .unwrap();
        let cat = tape.concat(&[step.angle, step.h, step.feature]).unwrap();
        let loss = squared_mean(&mut tape, cat);
        (tape, loss, bound)
    };
    let value = |flat: &[f64]| -> f64 {
        let (tape, loss, _) = build(flat);
        tape.value(loss).item().unwrap()
    };

    let (tape, loss, bound) = build(&flat0);
    let grads = tape.backward(loss).unwrap();
    let analytic: Vec<f64> = bound
        .iter()
        .flat_map(|&id| grads.wrt(id).to_vec())
        .collect();
    let mut worst = 0.0_f64;
    for i in 0..flat0.len() {
        let mut plus = flat0.clone();
        plus[i] += FD_H;
        let mut minus = flat0.clone();
        minus[i] -= FD_H;
        let numeric = (value(&plus) - value(&minus)) / (2.0 * FD_H);
        let e = rel_err(analytic[i], numeric);
        assert!(
            e < FD_TOL,
            "worker param {i}: analytic {} vs numeric {numeric}, rel err {e:.3e}",
            analytic[i]
        );
        worst = worst.max(e);
    }
    worst
}

#[test]
fn c01_gradients_match_central_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0_f64;
    let mut track = |v: f64| worst = worst.max(v);

    track(fd_check(
        "matmul",
        &[&[3, 4], &[4, 2]],
        &uniform_vec(20, -1.0, 1.0, &mut rng),
        &|tape, l| {
            let y = tape.matmul(l[0], l[1]).unwrap();
            squared_mean(tape, y)
        },
    ));

    track(fd_check(
        "matvec",
        &[&[4, 3], &[3]],
        &uniform_vec(15, -1.0, 1.0, &mut rng),
        &|tape, l| {
            let y = tape.matvec(l[0], l[1]).unwrap();
            squared_mean(tape, y)
        },
    ));

    track(fd_check(
        "conv3d",
        &[&[2, 3, 5, 5], &[2, 2, 2, 3, 3]],
        &uniform_vec(150 + 72, -1.0, 1.0, &mut rng),
        &|tape, l| {
            let y = tape.conv3d(l[0], l[1], [1, 2, 2], [1, 1, 1]).unwrap();
            squared_mean(tape, y)
        },
    ));

    track(fd_check(
        "conv1d",
        &[&[2, 9], &[3, 2, 3]],
        &uniform_vec(18 + 18, -1.0, 1.0, &mut rng),
        &|tape, l| {
            let y = tape.conv1d(l[0], l[1], 2, 1).unwrap();
            squared_mean(tape, y)
        },
    ));

    track(fd_check(
        "lstm_step",
        &[&[3], &[2], &[2], &[8, 3], &[8, 2], &[8], &[8]],
        &uniform_vec(3 + 2 + 2 + 24 + 16 + 8 + 8, -0.8, 0.8, &mut rng),
        &|tape, l| {
            let w = LstmWeightIds {
                w_ih: l[3],
                w_hh: l[4],
                b_ih: l[5],
                b_hh: l[6],
            };
            let (h, c) = lstm_step(tape, l[0], l[1], l[2], &w).unwrap();
            let cat = tape.concat(&[h, c]).unwrap();
            squared_mean(tape, cat)
        },
    ));

    track(fd_check(
        "group_norm",
        &[&[6, 2, 2], &[6], &[6]],
        &uniform_vec(24 + 6 + 6, -1.0, 1.0, &mut rng),
        &|tape, l| {
            let y = tape.group_norm(l[0], 3, 1e-5, l[1], l[2]).unwrap();
            squared_mean(tape, y)
        },
    ));

    track(fd_check(
        "activations",
        &[&[6]],
        &kink_free(6, &mut rng),
        &|tape, l| {
            let r = tape.relu(l[0]).unwrap();
            let e = tape.elu(l[0]).unwrap();
            let s = tape.sigmoid(l[0]).unwrap();
            let t = tape.tanh(l[0]).unwrap();
            let cat = tape.concat(&[r, e, s, t]).unwrap();
            squared_mean(tape, cat)
        },
    ));

    track(fd_check(
        "sqrt_abs",
        &[&[5], &[5]],
        &[uniform_vec(5, 0.5, 2.0, &mut rng), kink_free(5, &mut rng)].concat(),
        &|tape, l| {
            let q = tape.sqrt(l[0]).unwrap();
            let a = tape.abs(l[1]).unwrap();
            let cat = tape.concat(&[q, a]).unwrap();
            squared_mean(tape, cat)
        },
    ));

    // Fixed-seed mask inside the closure keeps dropout identical across the
    // difference evaluations, so the masked path is differentiable.
    track(fd_check(
        "dropout",
        &[&[8]],
        &uniform_vec(8, -1.0, 1.0, &mut rng),
        &|tape, l| {
            let mut mask_rng = ChaCha8Rng::seed_from_u64(42);
            let d = tape.dropout(l[0], 0.5, true, &mut mask_rng).unwrap();
            squared_mean(tape, d)
        },
    ));

    // Elementwise and shape plumbing in one graph: add, sub, scale,
    // channel bias, pooling, global average, slice, reshape, concat.
    track(fd_check(
        "plumbing",
        &[&[2, 4, 4], &[2, 4, 4], &[2]],
        &uniform_vec(32 + 32 + 2, -1.0, 1.0, &mut rng),
        &|tape, l| {
            let s = tape.add(l[0], l[1]).unwrap();
            let d = tape.sub(s, l[0]).unwrap();
            let m = tape.mul(d, l[1]).unwrap();
            let k = tape.scale(m, 1.7).unwrap();
            let b = tape.add_channel_bias(k, l[2]).unwrap();
            let p = tape.avg_pool2x2(b).unwrap();
            let g = tape.global_avg(p).unwrap();
            let flat = tape.reshape(p, vec![8]).unwrap();
            let sl = tape.slice(flat, 2, 4).unwrap();
            let cat = tape.concat(&[g, sl]).unwrap();
            squared_mean(tape, cat)
        },
    ));

    // Loss heads: preds and truths kept at distance >= 1 so MAE stays away
    // from its kink.
    for kind in LossKind::ALL {
        track(fd_check(
            kind.as_str(),
            &[&[7], &[7]],
            &[
                uniform_vec(7, 0.5, 1.5, &mut rng),
                uniform_vec(7, -1.5, -0.5, &mut rng),
            ]
            .concat(),
            &|tape, l| tape_loss(tape, kind, l[0], l[1]).unwrap(),
        ));
    }

    track(worker_fd_max_err());

    assert!(worst < FD_TOL);
    println!("criterion 1 PASS: max relative gradient error {worst:.3e} (limit {FD_TOL:.0e})");
}

// ---------------------------------------------------------------------------
// Criterion 2: convolutions vs naive nested-loop references.

fn conv3d_ref(x: &Tensor, k: &Tensor, stride: [usize; 3], pad: [usize; 3]) -> Vec<f64> {
    let (xs, ks) = (x.shape(), k.shape());
    let (ci, d, h, w) = (xs[0], xs[1], xs[2], xs[3]);
    let (co, kd, kh, kw) = (ks[0], ks[2], ks[3], ks[4]);
    let od = (d + 2 * pad[0] - kd) / stride[0] + 1;
    let oh = (h + 2 * pad[1] - kh) / stride[1] + 1;
    let ow = (w + 2 * pad[2] - kw) / stride[2] + 1;
    let (xd, kt) = (x.data(), k.data());
    let mut out = vec![0.0; co * od * oh * ow];
    for c in 0..co {
        for z in 0..od {
            for y in 0..oh {
                for q in 0..ow {
                    let mut acc = 0.0;
                    for ic in 0..ci {
                        for dz in 0..kd {
                            for dy in 0..kh {
                                for dx in 0..kw {
                                    let iz = (z * stride[0] + dz) as isize - pad[0] as isize;
                                    let iy = (y * stride[1] + dy) as isize - pad[1] as isize;
                                    let ix = (q * stride[2] + dx) as isize - pad[2] as isize;
                                    if iz < 0 || iy < 0 || ix < 0 {
                                        continue;
                                    }
                                    let (iz, iy, ix) = (iz as usize, iy as usize, ix as usize);
                                    if iz >= d || iy >= h || ix >= w {
                                        continue;
                                    }
                                    acc += xd[((ic * d + iz) * h + iy) * w + ix]
                                        * kt[(((c * ci + ic) * kd + dz) * kh + dy) * kw + dx];
                                }
                            }
                        }
                    }
                    out[((c * od + z) * oh + y) * ow + q] = acc;
                }
            }
        }
    }
    out
}

fn conv1d_ref(x: &Tensor, k: &Tensor, stride: usize, pad: usize) -> Vec<f64> {
    let (xs, ks) = (x.shape(), k.shape());
    let (ci, len) = (xs[0], xs[1]);
    let (co, kw) = (ks[0], ks[2]);
    let ol = (len + 2 * pad - kw) / stride + 1;
    let (xd, kt) = (x.data(), k.data());
    let mut out = vec![0.0; co * ol];
    for c in 0..co {
        for q in 0..ol {
            let mut acc = 0.0;
            for ic in 0..ci {
                for dx in 0..kw {
                    let ix = (q * stride + dx) as isize - pad as isize;
                    if ix < 0 || ix as usize >= len {
                        continue;
                    }
                    acc += xd[ic * len + ix as usize] * kt[(c * ci + ic) * kw + dx];
                }
            }
            out[c * ol + q] = acc;
        }
    }
    out
}

fn tape_conv3d(x: &Tensor, k: &Tensor, stride: [usize; 3], pad: [usize; 3]) -> Vec<f64> {
    let mut tape = Tape::new();
    let xi = tape.constant(x.clone());
    let ki = tape.constant(k.clone());
    let y = tape.conv3d(xi, ki, stride, pad).unwrap();
    tape.value(y).data().to_vec()
}

fn tape_conv1d(x: &Tensor, k: &Tensor, stride: usize, pad: usize) -> Vec<f64> {
    let mut tape = Tape::new();
    let xi = tape.constant(x.clone());
    let ki = tape.constant(k.clone());
    let y = tape.conv1d(xi, ki, stride, pad).unwrap();
    tape.value(y).data().to_vec()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "output lengths differ");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn c02_convolutions_match_naive_loop_references() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut combos = 0usize;
    let mut worst = 0.0_f64;

    for _ in 0..12 {
        let ci = rng.gen_range(1..=3);
        let co = rng.gen_range(1..=3);
        let kd = rng.gen_range(1..=2);
        let kh = rng.gen_range(1..=3);
        let kw = rng.gen_range(1..=3);
        let d = kd + rng.gen_range(0..=2);
        let h = kh + rng.gen_range(0..=3);
        let w = kw + rng.gen_range(0..=3);
        let stride = [rng.gen_range(1..=2), rng.gen_range(1..=2), rng.gen_range(1..=2)];
        let pad = [rng.gen_range(0..=1), rng.gen_range(0..=1), rng.gen_range(0..=1)];
        let x = Tensor::uniform(vec![ci, d, h, w], -1.0, 1.0, &mut rng);
        let k = Tensor::uniform(vec![co, ci, kd, kh, kw], -1.0, 1.0, &mut rng);
        let diff = max_abs_diff(
            &tape_conv3d(&x, &k, stride, pad),
            &conv3d_ref(&x, &k, stride, pad),
        );
        assert!(diff <= 1e-10, "conv3d {:?}*{:?} s{stride:?} p{pad:?}: {diff:e}", x.shape(), k.shape());
        worst = worst.max(diff);
        combos += 1;
    }

    for _ in 0..12 {
        let ci = rng.gen_range(1..=3);
        let co = rng.gen_range(1..=4);
        let kw = rng.gen_range(1..=4);
        let len = kw + rng.gen_range(0..=5);
        let stride = rng.gen_range(1..=3);
        let pad = rng.gen_range(0..=2);
        let x = Tensor::uniform(vec![ci, len], -1.0, 1.0, &mut rng);
        let k = Tensor::uniform(vec![co, ci, kw], -1.0, 1.0, &mut rng);
        let diff = max_abs_diff(&tape_conv1d(&x, &k, stride, pad), &conv1d_ref(&x, &k, stride, pad));
        assert!(diff <= 1e-10, "conv1d {:?}*{:?} s{stride} p{pad}: {diff:e}", x.shape(), k.shape());
        worst = worst.max(diff);
        combos += 1;
    }

    // Fixed cases: a mid-size 3-D shape, the identity kernel, and a 1-D
    // difference kernel with a hand-computed result.
    let x = Tensor::uniform(vec![2, 4, 6, 6], -1.0, 1.0, &mut rng);
    let k = Tensor::uniform(vec![3, 2, 2, 3, 3], -1.0, 1.0, &mut rng);
    let diff = max_abs_diff(
        &tape_conv3d(&x, &k, [1, 1, 1], [0, 0, 0]),
        &conv3d_ref(&x, &k, [1, 1, 1], [0, 0, 0]),
    );
    assert!(diff <= 1e-10);
    worst = worst.max(diff);
    combos += 1;

    let x = Tensor::uniform(vec![1, 3, 4, 4], -1.0, 1.0, &mut rng);
    let unit = Tensor::new(vec![1, 1, 1, 1, 1], vec![1.0]).unwrap();
    assert_eq!(tape_conv3d(&x, &unit, [1, 1, 1], [0, 0, 0]), x.data());
    combos += 1;

    let x = Tensor::new(vec![1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let k = Tensor::new(vec![1, 1, 2], vec![1.0, -1.0]).unwrap();
    assert_eq!(tape_conv1d(&x, &k, 1, 0), vec![-1.0, -1.0, -1.0]);
    combos += 1;

    assert!(combos >= 20);
    println!("criterion 2 PASS: {combos} shape/stride/padding combos, max |diff| {worst:.2e} (limit 1e-10)");
}

// ---------------------------------------------------------------------------
// Criterion 3: t-SNE properties on labeled Gaussian blobs.

/// 3 blobs x 30 points in 30-D: blob b is centered at 8 on dims
/// [10b, 10b+10) and 0 elsewhere, sigma 0.5 everywhere.
fn gaussian_blobs() -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let noise = Normal::new(0.0, 0.5).unwrap();
    let mut vectors = Vec::with_capacity(90);
    let mut labels = Vec::with_capacity(90);
    for blob in 0..3usize {
        for _ in 0..30 {
            let v: Vec<f64> = (0..30)
                .map(|dim| {
                    let center = if dim / 10 == blob { 8.0 } else { 0.0 };
                    center + noise.sample(&mut rng)
                })
                .collect();
            vectors.push(v);
            labels.push(blob);
        }
    }
    (vectors, labels)
}

#[test]
fn c03_tsne_probabilities_kl_and_blob_purity() {
    let t0 = Instant::now();
    let (vectors, labels) = gaussian_blobs();
    let n = vectors.len();
    let perplexity = 15.0;

    let d2 = pairwise_sq_dists(&vectors);
    let (p_cond, row_perp) = conditional_probabilities(&d2, n, perplexity).unwrap();
    let mut worst_perp = 0.0_f64;
    for (i, rp) in row_perp.iter().enumerate() {
        let e = (rp - perplexity).abs();
        assert!(e < 1e-3, "row {i}: perplexity {rp}");
        worst_perp = worst_perp.max(e);
    }
    for i in 0..n {
        let row_sum: f64 = p_cond[i * n..(i + 1) * n].iter().sum();
        assert!((row_sum - 1.0).abs() < 1e-9, "row {i} sums to {row_sum}");
        assert_eq!(p_cond[i * n + i], 0.0, "self-affinity must be zero");
    }

    let p = symmetrize(&p_cond, n);
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v = p[i * n + j];
            assert!(v >= 0.0);
            assert_eq!(v, p[j * n + i], "P must be symmetric at ({i},{j})");
            total += v;
        }
    }
    assert!((total - 1.0).abs() < 1e-9, "P sums to {total}");

    let cfg = TsneConfig {
        perplexity,
        iterations: 1000,
        seed: 4,
    };
    let (coords, diag) = tsne_embed_vectors(&vectors, &cfg).unwrap();
    assert!(
        diag.kl_final < diag.kl_start,
        "KL did not fall: {} -> {}",
        diag.kl_start,
        diag.kl_final
    );
    for (i, rp) in diag.row_perplexities.iter().enumerate() {
        assert!((rp - perplexity).abs() < 1e-3, "embed row {i}: perplexity {rp}");
    }

    let set = kmeans_coords(&coords, 3, 9).unwrap();
    let pur = purity(&set.assignment, &labels, 3);
    assert!(pur >= 0.95, "purity {pur}");

    let dt = t0.elapsed().as_secs_f64();
    assert!(dt < 60.0, "ran {dt:.1}s");
    println!(
        "criterion 3 PASS: perplexity within {worst_perp:.1e}, KL {:.4} -> {:.4}, purity {pur:.3}, {dt:.1}s",
        diag.kl_start, diag.kl_final
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: K-means invariants.

fn d2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

#[test]
fn c04_kmeans_monotone_inertia_exact_pairs_no_empty_clusters() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let points: Vec<[f64; 2]> = (0..200)
        .map(|_| [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)])
        .collect();

    let mut longest_trace = 0usize;
    for k in [2, 7, 10] {
        let set = kmeans_coords(&points, k, 13).unwrap();
        longest_trace = longest_trace.max(set.inertia_trace.len());
        for w in set.inertia_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "k={k}: inertia rose {} -> {}", w[0], w[1]);
        }
        let mut counts = vec![0usize; k];
        for (i, &p) in points.iter().enumerate() {
            let a = set.assignment[i];
            counts[a] += 1;
            let da = d2(p, set.centroids[a]);
            for &c in &set.centroids {
                assert!(da <= d2(p, c) + 1e-9, "k={k}: point {i} not nearest-assigned");
            }
        }
        assert!(counts.iter().all(|&c| c > 0), "k={k}: empty cluster, counts {counts:?}");
    }

    // Two coincident pairs: exact centroid recovery and zero inertia.
    let pairs = vec![[0.0, 0.0], [0.0, 0.0], [5.0, 5.0], [5.0, 5.0]];
    let set = kmeans_coords(&pairs, 2, 1).unwrap();
    let mut cs = set.centroids.clone();
    cs.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
    assert_eq!(cs, vec![[0.0, 0.0], [5.0, 5.0]]);
    assert_eq!(*set.inertia_trace.last().unwrap(), 0.0);

    // k = n: every point its own centroid.
    let six: Vec<[f64; 2]> = (0..6).map(|i| [i as f64, -(i as f64)]).collect();
    let set = kmeans_coords(&six, 6, 2).unwrap();
    assert_eq!(*set.inertia_trace.last().unwrap(), 0.0);
    let mut seen = set.assignment.clone();
    seen.sort_unstable();
    assert_eq!(seen, (0..6).collect::<Vec<_>>());

    // Duplicate-heavy input forces empty-cluster repair.
    let mut dup = vec![[1.0, 1.0]; 40];
    dup.push([10.0, 0.0]);
    dup.push([0.0, 10.0]);
    let set = kmeans_coords(&dup, 4, 3).unwrap();
    let mut counts = vec![0usize; 4];
    for &a in &set.assignment {
        counts[a] += 1;
    }
    assert!(counts.iter().all(|&c| c > 0), "repair left an empty cluster: {counts:?}");

    println!("criterion 4 PASS: monotone traces (longest {longest_trace}), exact pair centroids, no empty clusters");
}

// ---------------------------------------------------------------------------
// Criterion 5: no target leakage through the subroutine id path.

fn leakage_records(n: usize) -> Vec<DrivingRecord> {
    (0..n)
        .map(|t| DrivingRecord {
            t,
            timestamp_ns: None,
            frame_path: String::new(),
            angle: (t as f64 * 0.31).sin() * 0.8,
            throttle: (t as f64 * 0.17).cos().abs() * 0.6,
            brake: if t % 13 == 0 { 0.2 } else { 0.0 },
        })
        .collect()
}

#[test]
fn c05_lookup_and_learned_manager_never_read_the_target() {
    // Part 1: subroutine_lookup(t) is invariant to any sample at index
    // >= floor(t/m)*m, including t itself.
    let m = 10usize;
    let records = leakage_records(120);
    let windows = make_windows(&records, m).unwrap();
    let coords: Vec<[f64; 2]> = windows
        .iter()
        .map(|w| {
            let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
            [mean(w.steering()), mean(w.throttle())]
        })
        .collect();
    let set = kmeans_coords(&coords, 3, 0).unwrap();

    let mut checked = 0usize;
    for t in 2 * m..records.len() {
        let id = subroutine_lookup(t, m, &set, &windows).unwrap();
        let boundary = (t / m) * m;
        for j in [t, boundary, records.len() - 1] {
            let mut perturbed = records.clone();
            perturbed[j].angle += 7.5;
            perturbed[j].throttle = 0.93;
            perturbed[j].brake = 0.91;
            let windows2 = make_windows(&perturbed, m).unwrap();
            let id2 = subroutine_lookup(t, m, &set, &windows2).unwrap();
            assert_eq!(id, id2, "t={t}: lookup changed after perturbing index {j}");
            checked += 1;
        }
        // The serving window itself does depend on earlier samples: a
        // perturbation inside [(tau-1)m, tau m) changes its vector.
        let tau = t / m;
        let mut inside = records.clone();
        inside[t - m].angle += 7.5;
        let windows3 = make_windows(&inside, m).unwrap();
        assert_ne!(
            windows3[tau - 1].vector, windows[tau - 1].vector,
            "t={t}: perturbing index {} should alter window {tau}",
            t - m
        );
    }

    // tau-shift hand checks: t in [2m, 3m) serves window 2; below 2m there
    // is no complete prior window.
    assert_eq!(serving_window(20, m, windows.len()).unwrap(), 2);
    assert_eq!(serving_window(29, m, windows.len()).unwrap(), 2);
    assert_eq!(serving_window(19, m, windows.len()).unwrap_err().kind_tag(), "contract");
    let served = subroutine_lookup(20, m, &set, &windows).unwrap();
    assert_eq!(served, set.centroids[set.assignment[1]]);

    // Part 2: a learned-mode rollout never reads any ground-truth angle at
    // index >= start, so per-index perturbations leave every prediction
    // bit-identical.
    let worker = WorkerNet::seeded(
        WorkerConfig {
            m: 2,
            in_channels: 3,
            height: 8,
            width: 8,
            conv_channels: [2, 2, 2, 2],
            kernel_depth: 1,
            kernel_hw: 3,
            pool_after: vec![2, 4],
            feature_width: 8,
            lstm_hidden: 6,
            dropout: 0.0,
            norm_groups: 2,
            id_arity: 1,
        },
        11,
    )
    .unwrap();
    let net = SubroutineIdNet::seeded(
        SubroutineIdNetConfig {
            m: 3,
            conv_channels: [2, 2, 2],
            kernel_len: 3,
            feature_width: 4,
            lstm_hidden: 3,
            dropout: 0.0,
            norm_groups: 2,
        },
        5,
    )
    .unwrap();
    let records = leakage_records(14);
    let frames: Vec<Tensor> = records
        .iter()
        .map(|r| Tensor::full(vec![3, 8, 8], r.angle * 0.9))
        .collect();
    let (start, end) = (4usize, 12usize);
    let manager = Manager::Learned(net);
    let preds = |rs: &[DrivingRecord]| -> Vec<f64> {
        rollout(&worker, &manager, &frames, rs, start, end)
            .unwrap()
            .iter()
            .map(|r| r.predicted)
            .collect()
    };
    let base = preds(&records);

    for n in start..end {
        let mut perturbed = records.clone();
        perturbed[n].angle += 10.0;
        assert_eq!(base, preds(&perturbed), "prediction moved after perturbing angle {n}");
        checked += 1;
    }
    let mut all = records.clone();
    for r in all[start..].iter_mut() {
        r.angle += 10.0;
    }
    assert_eq!(base, preds(&all));

    // Teeth: the warm-up prefix is legitimately read, so changing it moves
    // the predictions.
    let mut warmup = records.clone();
    warmup[2].angle += 10.0;
    assert_ne!(base, preds(&warmup));

    println!("criterion 5 PASS: {checked} perturbations left lookups and rollouts bit-identical");
}

// ---------------------------------------------------------------------------
// Criterion 6: loss identities.

#[test]
fn c06_loss_identities_and_hand_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for trial in 0..1000 {
        let len = rng.gen_range(1..=32);
        let preds = uniform_vec(len, -2.0, 2.0, &mut rng);
        let truths = uniform_vec(len, -2.0, 2.0, &mut rng);
        let r = rmse(&preds, &truths).unwrap();
        let q = mse(&preds, &truths).unwrap();
        let a = mae(&preds, &truths).unwrap();
        assert_eq!(r.to_bits(), q.sqrt().to_bits(), "trial {trial}: RMSE != sqrt(MSE)");
        assert!(a <= r * (1.0 + 1e-12), "trial {trial}: MAE {a} > RMSE {r}");
    }

    assert_eq!(mse(&[1.0, -1.0], &[0.0, 0.0]).unwrap(), 1.0);
    assert_eq!(rmse(&[1.0, -1.0], &[0.0, 0.0]).unwrap(), 1.0);
    assert_eq!(mae(&[1.0, -1.0], &[0.0, 0.0]).unwrap(), 1.0);
    assert_eq!(mse(&[3.0, 0.0], &[0.0, 0.0]).unwrap(), 4.5);
    assert_eq!(rmse(&[3.0, 0.0], &[0.0, 0.0]).unwrap(), 4.5_f64.sqrt());
    assert_eq!(mae(&[3.0, 0.0], &[0.0, 0.0]).unwrap(), 1.5);
    assert!(rmse(&[3.0, 0.0], &[0.0, 0.0]).unwrap() >= mae(&[3.0, 0.0], &[0.0, 0.0]).unwrap());

    // The differentiable losses agree with the plain reductions.
    let preds = uniform_vec(9, -1.0, 1.0, &mut rng);
    let truths = uniform_vec(9, -1.0, 1.0, &mut rng);
    for kind in LossKind::ALL {
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::vector(preds.clone()));
        let t = tape.constant(Tensor::vector(truths.clone()));
        let l = tape_loss(&mut tape, kind, p, t).unwrap();
        let tape_value = tape.value(l).item().unwrap();
        let plain = steerage::train::loss(kind, &preds, &truths).unwrap();
        assert!(
            (tape_value - plain).abs() < 1e-12,
            "{kind}: tape {tape_value} vs plain {plain}"
        );
    }

    println!("criterion 6 PASS: 1000 vectors hold RMSE = sqrt(MSE) bit-exactly and MAE <= RMSE");
}

// ---------------------------------------------------------------------------
// Criterion 7: synthetic end-to-end budget run.

fn synth_dataset(dir: &Path, cfg: &SynthConfig) -> (Vec<DrivingRecord>, Vec<Tensor>) {
    synth_generate(dir, cfg).unwrap();
    let records = load_log(dir.join("log.csv")).unwrap();
    let frames = records
        .iter()
        .map(|r| normalize_image(&read_ppm(dir.join(&r.frame_path)).unwrap()))
        .collect();
    (records, frames)
}

fn budget_config(mode: Mode) -> TrainConfig {
    TrainConfig {
        mode,
        m: 5,
        lr: 1e-3,
        epochs: 30,
        batch_size: 4,
        steps_per_sequence: 5,
        seed: 0,
        dropout: 0.1,
        augment: true,
        conv_channels: [4, 6, 8, 10],
        kernel_depth: 2,
        kernel_hw: 3,
        feature_width: 32,
        lstm_hidden: 32,
        norm_groups: 4,
        manager_channels: [4, 6, 8],
        manager_kernel: 3,
        manager_feature: 16,
        manager_hidden: 16,
        ..TrainConfig::default()
    }
}

#[test]
fn c07_learned_mode_beats_no_manager_within_budget() {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let (records, frames) = synth_dataset(
        dir.path(),
        &SynthConfig {
            n: 2000,
            seed: 7,
            image_size: 16,
            noise: 0.1,
            m: 10,
        },
    );
    let inputs = TrainInputs {
        records: &records,
        frames: &frames,
        n_train: 1500,
        lookup: None,
    };

    let final_rmse = |mode: Mode| -> f64 {
        let (_, history) = train_joint(&inputs, &budget_config(mode)).unwrap();
        history.epochs.last().unwrap().test_rmse
    };
    let none = final_rmse(Mode::None);
    let learned = final_rmse(Mode::Learned);
    let dt = t0.elapsed().as_secs_f64();

    assert!(learned < 0.15, "learned-mode test RMSE {learned}");
    assert!(
        learned < none,
        "learned {learned} should beat no-manager {none}"
    );
    assert!(dt < 900.0, "budget exceeded: {dt:.0}s");
    println!(
        "criterion 7 PASS: test RMSE learned {learned:.5} < none {none:.5}, both runs in {dt:.0}s (budget 900s)"
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: k comparison table, bit-reproducible.

#[test]
fn c08_compare_k_emits_a_deterministic_table() {
    let dir = tempfile::tempdir().unwrap();
    let (records, frames) = synth_dataset(
        dir.path(),
        &SynthConfig {
            n: 500,
            seed: 11,
            image_size: 16,
            noise: 0.1,
            m: 10,
        },
    );
    let windows = make_windows(&records, 10).unwrap();
    let base = TrainConfig {
        mode: Mode::PredTsne,
        m: 10,
        lr: 1e-3,
        epochs: 1,
        batch_size: 4,
        steps_per_sequence: 5,
        seed: 0,
        dropout: 0.1,
        augment: false,
        conv_channels: [2, 3, 3, 4],
        kernel_depth: 2,
        kernel_hw: 3,
        feature_width: 8,
        lstm_hidden: 8,
        norm_groups: 2,
        manager_channels: [2, 3, 4],
        manager_kernel: 3,
        manager_feature: 8,
        manager_hidden: 8,
        ..TrainConfig::default()
    };

    let run = || -> String {
        let tsne = tsne_embed(
            &windows,
            &TsneConfig {
                perplexity: 12.0,
                iterations: 500,
                seed: 2,
            },
        )
        .unwrap();
        let rows = compare_k(&records, &frames, 375, &tsne.points, &base, &[10, 15, 20]).unwrap();
        compare_k_csv(&rows)
    };
    let csv1 = run();
    let csv2 = run();
    assert_eq!(csv1, csv2, "same seed must reproduce the table byte for byte");

    let lines: Vec<&str> = csv1.trim_end().lines().collect();
    assert_eq!(lines[0], "k,test_rmse");
    assert_eq!(lines.len(), 4);
    for (line, k) in lines[1..].iter().zip([10usize, 15, 20]) {
        let (col_k, col_rmse) = line.split_once(',').unwrap();
        assert_eq!(col_k.parse::<usize>().unwrap(), k);
        assert!(col_rmse.parse::<f64>().unwrap().is_finite());
    }
    println!("criterion 8 PASS: three-row k table identical across reruns\n{csv1}");
}

// ---------------------------------------------------------------------------
// Criterion 9: CLI determinism, byte for byte.

fn cli(args: &[&str], what: &str) {
    let out = Command::new(env!("CARGO_BIN_EXE_steerage"))
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{what} failed: {}\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_bytes(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

/// Sorted (name, bytes) listing of one directory level.
fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .collect();
    entries.sort();
    entries
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), read_bytes(&p)))
        .collect()
}

/// Per stage: the artifact (name, bytes) snapshots from the two runs.
type StageSnapshots = [Vec<(String, Vec<u8>)>; 2];

#[test]
fn c09_cli_runs_are_byte_identical_under_a_fixed_seed() {
    let root = tempfile::tempdir().unwrap();
    let dirs = [root.path().join("a"), root.path().join("b")];
    let mut stages: Vec<StageSnapshots> = Vec::new();

    for (i, dir) in dirs.iter().enumerate() {
        let d = dir.to_str().unwrap();
        let log = dir.join("log.csv");
        let log = log.to_str().unwrap();
        let emb = dir.join("embedding.txt");
        let emb_s = emb.to_str().unwrap();

        let mut snapshot = |stage: usize, files: Vec<(String, Vec<u8>)>| {
            if stages.len() <= stage {
                stages.push([Vec::new(), Vec::new()]);
            }
            stages[stage][i] = files;
        };

        cli(
            &["--seed", "3", "--out-dir", d, "synth", "--n", "240", "--image-size", "8", "--noise", "0.1"],
            "synth",
        );
        let mut synth_files = vec![("log.csv".into(), read_bytes(&dir.join("log.csv")))];
        synth_files.extend(dir_contents(&dir.join("frames")));
        snapshot(0, synth_files);

        cli(
            &["--seed", "3", "--out-dir", d, "embed", "--log", log, "--m", "10", "--perplexity", "5", "--iterations", "500"],
            "embed",
        );
        snapshot(
            1,
            vec![
                ("embedding.txt".into(), read_bytes(&emb)),
                ("embedding_scatter.svg".into(), read_bytes(&dir.join("embedding_scatter.svg"))),
            ],
        );

        cli(
            &["--seed", "3", "--out-dir", d, "cluster", "--embedding", emb_s, "--k", "3", "--log", log],
            "cluster",
        );
        snapshot(
            2,
            vec![
                ("embedding.txt".into(), read_bytes(&emb)),
                ("cluster_report.txt".into(), read_bytes(&dir.join("cluster_report.txt"))),
            ],
        );

        cli(
            &[
                "--seed", "0", "--out-dir", d, "train", "--log", log, "--mode", "learned",
                "--epochs", "1", "--set", "m=3", "--set", "kernel_depth=1",
                "--set", "conv_channels=2,3,4,5", "--set", "feature_width=6",
                "--set", "lstm_hidden=6", "--set", "norm_groups=2",
                "--set", "manager_channels=2,3,4", "--set", "manager_feature=6",
                "--set", "manager_hidden=6", "--set", "batch_size=2",
                "--set", "steps_per_sequence=2", "--set", "dropout=0.1",
            ],
            "train",
        );
        snapshot(
            3,
            vec![
                ("metrics.csv".into(), read_bytes(&dir.join("metrics.csv"))),
                ("model.ckpt".into(), read_bytes(&dir.join("model.ckpt"))),
                ("predictions.csv".into(), read_bytes(&dir.join("predictions.csv"))),
            ],
        );
    }

    let names = ["synth", "embed", "cluster", "train"];
    for (stage, name) in names.iter().enumerate() {
        let [a, b] = &stages[stage];
        assert!(!a.is_empty(), "{name}: nothing captured");
        assert_eq!(
            a.iter().map(|(n, _)| n).collect::<Vec<_>>(),
            b.iter().map(|(n, _)| n).collect::<Vec<_>>(),
            "{name}: file lists differ"
        );
        for ((file, bytes_a), (_, bytes_b)) in a.iter().zip(b) {
            assert_eq!(bytes_a, bytes_b, "{name}: {file} differs between runs");
        }
    }
    let total: usize = stages.iter().map(|s| s[0].len()).sum();
    println!("criterion 9 PASS: synth/embed/cluster/train reruns byte-identical across {total} files");
}

// ---------------------------------------------------------------------------
// Criterion 10: horizontal flip is an involution on the data.

#[test]
fn c10_flip_is_an_involution_on_frames_and_angle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    for shape in [vec![3, 5, 7], vec![1, 4, 4], vec![2, 3, 8], vec![3, 2, 5]] {
        let t = Tensor::uniform(shape.clone(), -1.0, 1.0, &mut rng);
        let round_trip = flip_width(&flip_width(&t));
        assert_eq!(round_trip.shape(), t.shape());
        assert_eq!(round_trip.data(), t.data(), "shape {shape:?}");
        if shape[2] > 1 {
            assert_ne!(flip_width(&t).data(), t.data(), "flip must move something");
        }
    }

    let frames: Vec<Tensor> = (0..2)
        .map(|_| Tensor::uniform(vec![3, 6, 6], -1.0, 1.0, &mut rng))
        .collect();
    let seq = FrameSequence::stack(&frames).unwrap();
    for angle in [0.37, -1.25, 0.0, -0.0] {
        let (once, a1) = augment_flip(&seq, angle).unwrap();
        let (twice, a2) = augment_flip(&once, a1).unwrap();
        assert_eq!(twice.tensor().data(), seq.tensor().data());
        assert_eq!(a2.to_bits(), angle.to_bits(), "angle {angle} did not round-trip");
    }
    println!("criterion 10 PASS: flip(flip(frames, angle)) is bit-identical to the input");
}
