//! Forward and backward compute kernels behind the tape ops.
//!
//! All convolutions are cross-correlations (no kernel flip). Shapes are
//! validated by the tape builders; kernels assume consistent dimensions.

/// Output extent of one convolution axis: floor((in + 2*pad - k) / stride) + 1.
pub fn conv_out_len(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

// ---------------------------------------------------------------- matmul ---

/// C[r×c] = A[r×k] · B[k×c]
pub fn matmul_forward(a: &[f64], b: &[f64], r: usize, k: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for t in 0..k {
            let av = a[i * k + t];
            let brow = &b[t * c..(t + 1) * c];
            let orow = &mut out[i * c..(i + 1) * c];
            for j in 0..c {
                orow[j] += av * brow[j];
            }
        }
    }
    out
}

/// dA += dC · Bᵀ ; dB += Aᵀ · dC
#[allow(clippy::too_many_arguments)]
pub fn matmul_backward(
    a: &[f64],
    b: &[f64],
    grad_out: &[f64],
    r: usize,
    k: usize,
    c: usize,
    grad_a: &mut [f64],
    grad_b: &mut [f64],
) {
    for i in 0..r {
        let grow = &grad_out[i * c..(i + 1) * c];
        for t in 0..k {
            let brow = &b[t * c..(t + 1) * c];
            let mut acc = 0.0;
            for j in 0..c {
                acc += grow[j] * brow[j];
            }
            grad_a[i * k + t] += acc;
            let av = a[i * k + t];
            let gbrow = &mut grad_b[t * c..(t + 1) * c];
            for j in 0..c {
                gbrow[j] += av * grow[j];
            }
        }
    }
}

/// y[r] = M[r×k] · x[k]
pub fn matvec_forward(m: &[f64], x: &[f64], r: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; r];
    for i in 0..r {
        let mrow = &m[i * k..(i + 1) * k];
        let mut acc = 0.0;
        for t in 0..k {
            acc += mrow[t] * x[t];
        }
        out[i] = acc;
    }
    out
}

pub fn matvec_backward(
    m: &[f64],
    x: &[f64],
    grad_out: &[f64],
    r: usize,
    k: usize,
    grad_m: &mut [f64],
    grad_x: &mut [f64],
) {
    for i in 0..r {
        let g = grad_out[i];
        if g == 0.0 {
            continue;
        }
        let mrow = &m[i * k..(i + 1) * k];
        let gmrow = &mut grad_m[i * k..(i + 1) * k];
        for t in 0..k {
            gmrow[t] += g * x[t];
            grad_x[t] += g * mrow[t];
        }
    }
}

// ---------------------------------------------------------------- conv3d ---

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv3dDims {
    pub c_in: usize,
    pub d: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kd: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: [usize; 3],
    pub pad: [usize; 3],
}

impl Conv3dDims {
    pub fn out_d(&self) -> usize {
        conv_out_len(self.d, self.kd, self.stride[0], self.pad[0])
    }
    pub fn out_h(&self) -> usize {
        conv_out_len(self.h, self.kh, self.stride[1], self.pad[1])
    }
    pub fn out_w(&self) -> usize {
        conv_out_len(self.w, self.kw, self.stride[2], self.pad[2])
    }
}

/// input [C_in×D×H×W], kernels [C_out×C_in×kd×kh×kw] -> [C_out×D'×H'×W']
pub fn conv3d_forward(input: &[f64], kernels: &[f64], dm: &Conv3dDims) -> Vec<f64> {
    let (od_n, oh_n, ow_n) = (dm.out_d(), dm.out_h(), dm.out_w());
    let mut out = vec![0.0; dm.c_out * od_n * oh_n * ow_n];
    let in_hw = dm.h * dm.w;
    let in_dhw = dm.d * in_hw;
    let k_per_ci = dm.kd * dm.kh * dm.kw;
    let k_per_co = dm.c_in * k_per_ci;

    for co in 0..dm.c_out {
        let kbase_co = co * k_per_co;
        let obase_co = co * od_n * oh_n * ow_n;
        for od in 0..od_n {
            let id0 = (od * dm.stride[0]) as isize - dm.pad[0] as isize;
            for oh in 0..oh_n {
                let ih0 = (oh * dm.stride[1]) as isize - dm.pad[1] as isize;
                for ow in 0..ow_n {
                    let iw0 = (ow * dm.stride[2]) as isize - dm.pad[2] as isize;
                    let mut acc = 0.0;
                    for ci in 0..dm.c_in {
                        let ibase_ci = ci * in_dhw;
                        let kbase_ci = kbase_co + ci * k_per_ci;
                        for fd in 0..dm.kd {
                            let id = id0 + fd as isize;
                            if id < 0 || id >= dm.d as isize {
                                continue;
                            }
                            let ibase_d = ibase_ci + id as usize * in_hw;
                            let kbase_d = kbase_ci + fd * dm.kh * dm.kw;
                            for fh in 0..dm.kh {
                                let ih = ih0 + fh as isize;
                                if ih < 0 || ih >= dm.h as isize {
                                    continue;
                                }
                                let ibase_h = ibase_d + ih as usize * dm.w;
                                let kbase_h = kbase_d + fh * dm.kw;
                                for fw in 0..dm.kw {
                                    let iw = iw0 + fw as isize;
                                    if iw < 0 || iw >= dm.w as isize {
                                        continue;
                                    }
                                    acc += input[ibase_h + iw as usize] * kernels[kbase_h + fw];
                                }
                            }
                        }
                    }
                    out[obase_co + (od * oh_n + oh) * ow_n + ow] = acc;
                }
            }
        }
    }
    out
}

pub fn conv3d_backward(
    input: &[f64],
    kernels: &[f64],
    grad_out: &[f64],
    dm: &Conv3dDims,
    grad_input: &mut [f64],
    grad_kernels: &mut [f64],
) {
    let (od_n, oh_n, ow_n) = (dm.out_d(), dm.out_h(), dm.out_w());
    let in_hw = dm.h * dm.w;
    let in_dhw = dm.d * in_hw;
    let k_per_ci = dm.kd * dm.kh * dm.kw;
    let k_per_co = dm.c_in * k_per_ci;

    for co in 0..dm.c_out {
        let kbase_co = co * k_per_co;
        let obase_co = co * od_n * oh_n * ow_n;
        for od in 0..od_n {
            let id0 = (od * dm.stride[0]) as isize - dm.pad[0] as isize;
            for oh in 0..oh_n {
                let ih0 = (oh * dm.stride[1]) as isize - dm.pad[1] as isize;
                for ow in 0..ow_n {
                    let g = grad_out[obase_co + (od * oh_n + oh) * ow_n + ow];
                    if g == 0.0 {
                        continue;
                    }
                    let iw0 = (ow * dm.stride[2]) as isize - dm.pad[2] as isize;
                    for ci in 0..dm.c_in {
                        let ibase_ci = ci * in_dhw;
                        let kbase_ci = kbase_co + ci * k_per_ci;
                        for fd in 0..dm.kd {
                            let id = id0 + fd as isize;
                            if id < 0 || id >= dm.d as isize {
                                continue;
                            }
                            let ibase_d = ibase_ci + id as usize * in_hw;
                            let kbase_d = kbase_ci + fd * dm.kh * dm.kw;
                            for fh in 0..dm.kh {
                                let ih = ih0 + fh as isize;
                                if ih < 0 || ih >= dm.h as isize {
                                    continue;
                                }
                                let ibase_h = ibase_d + ih as usize * dm.w;
                                let kbase_h = kbase_d + fh * dm.kw;
                                for fw in 0..dm.kw {
                                    let iw = iw0 + fw as isize;
                                    if iw < 0 || iw >= dm.w as isize {
                                        continue;
                                    }
                                    grad_input[ibase_h + iw as usize] += g * kernels[kbase_h + fw];
                                    grad_kernels[kbase_h + fw] += g * input[ibase_h + iw as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------- conv1d ---

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv1dDims {
    pub c_in: usize,
    pub l: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv1dDims {
    pub fn out_l(&self) -> usize {
        conv_out_len(self.l, self.k, self.stride, self.pad)
    }
}

/// input [C_in×L], kernels [C_out×C_in×k] -> [C_out×L']
pub fn conv1d_forward(input: &[f64], kernels: &[f64], dm: &Conv1dDims) -> Vec<f64> {
    let ol_n = dm.out_l();
    let mut out = vec![0.0; dm.c_out * ol_n];
    for co in 0..dm.c_out {
        for ol in 0..ol_n {
            let il0 = (ol * dm.stride) as isize - dm.pad as isize;
            let mut acc = 0.0;
            for ci in 0..dm.c_in {
                let ibase = ci * dm.l;
                let kbase = (co * dm.c_in + ci) * dm.k;
                for f in 0..dm.k {
                    let il = il0 + f as isize;
                    if il < 0 || il >= dm.l as isize {
                        continue;
                    }
                    acc += input[ibase + il as usize] * kernels[kbase + f];
                }
            }
            out[co * ol_n + ol] = acc;
        }
    }
    out
}

pub fn conv1d_backward(
    input: &[f64],
    kernels: &[f64],
    grad_out: &[f64],
    dm: &Conv1dDims,
    grad_input: &mut [f64],
    grad_kernels: &mut [f64],
) {
    let ol_n = dm.out_l();
    for co in 0..dm.c_out {
        for ol in 0..ol_n {
            let g = grad_out[co * ol_n + ol];
            if g == 0.0 {
                continue;
            }
            let il0 = (ol * dm.stride) as isize - dm.pad as isize;
            for ci in 0..dm.c_in {
                let ibase = ci * dm.l;
                let kbase = (co * dm.c_in + ci) * dm.k;
                for f in 0..dm.k {
                    let il = il0 + f as isize;
                    if il < 0 || il >= dm.l as isize {
                        continue;
                    }
                    grad_input[ibase + il as usize] += g * kernels[kbase + f];
                    grad_kernels[kbase + f] += g * input[ibase + il as usize];
                }
            }
        }
    }
}

// ------------------------------------------------------------ group norm ---

/// Cached forward intermediates needed by the backward pass.
#[derive(Debug, Clone)]
pub struct GroupNormCache {
    /// Normalized values (before the affine), same layout as the input.
    pub x_hat: Vec<f64>,
    /// 1/sqrt(var + eps) per group.
    pub inv_std: Vec<f64>,
}

/// x [C×S] flattened (S = spatial elements per channel, may be 1).
/// Normalizes over each group of (C/groups)·S elements, then applies the
/// per-channel affine `gain[c]·x̂ + bias[c]`.
pub fn group_norm_forward(
    x: &[f64],
    gain: &[f64],
    bias: &[f64],
    channels: usize,
    spatial: usize,
    groups: usize,
    eps: f64,
) -> (Vec<f64>, GroupNormCache) {
    let cg = channels / groups;
    let group_len = cg * spatial;
    let mut out = vec![0.0; x.len()];
    let mut x_hat = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; groups];

    for (g, istd_slot) in inv_std.iter_mut().enumerate() {
        let start = g * group_len;
        let xs = &x[start..start + group_len];
        let mean = xs.iter().sum::<f64>() / group_len as f64;
        let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / group_len as f64;
        let istd = 1.0 / (var + eps).sqrt();
        *istd_slot = istd;
        for (i, &v) in xs.iter().enumerate() {
            let idx = start + i;
            let xh = (v - mean) * istd;
            x_hat[idx] = xh;
            let c = idx / spatial;
            out[idx] = gain[c] * xh + bias[c];
        }
    }
    (
        out,
        GroupNormCache { x_hat, inv_std },
    )
}

#[allow(clippy::too_many_arguments)]
pub fn group_norm_backward(
    grad_out: &[f64],
    gain: &[f64],
    cache: &GroupNormCache,
    channels: usize,
    spatial: usize,
    groups: usize,
    grad_x: &mut [f64],
    grad_gain: &mut [f64],
    grad_bias: &mut [f64],
) {
    let cg = channels / groups;
    let group_len = cg * spatial;
    let n = group_len as f64;

    for (idx, &g) in grad_out.iter().enumerate() {
        let c = idx / spatial;
        grad_gain[c] += g * cache.x_hat[idx];
        grad_bias[c] += g;
    }

    for g in 0..groups {
        let start = g * group_len;
        let istd = cache.inv_std[g];
        // dyh = dy * gain[c]; dx = istd*(dyh - mean(dyh) - x̂*mean(dyh·x̂))
        let mut sum_dyh = 0.0;
        let mut sum_dyh_xhat = 0.0;
        for i in 0..group_len {
            let idx = start + i;
            let c = idx / spatial;
            let dyh = grad_out[idx] * gain[c];
            sum_dyh += dyh;
            sum_dyh_xhat += dyh * cache.x_hat[idx];
        }
        let mean_dyh = sum_dyh / n;
        let mean_dyh_xhat = sum_dyh_xhat / n;
        for i in 0..group_len {
            let idx = start + i;
            let c = idx / spatial;
            let dyh = grad_out[idx] * gain[c];
            grad_x[idx] += istd * (dyh - mean_dyh - cache.x_hat[idx] * mean_dyh_xhat);
        }
    }
}

// --------------------------------------------------------------- pooling ---

/// 2×2 mean pool over the trailing two axes of `[lead..., H, W]`.
/// H and W must be even.
pub fn avg_pool2x2_forward(x: &[f64], lead: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; lead * oh * ow];
    for b in 0..lead {
        let ibase = b * h * w;
        let obase = b * oh * ow;
        for i in 0..oh {
            for j in 0..ow {
                let p = ibase + 2 * i * w + 2 * j;
                out[obase + i * ow + j] = 0.25 * (x[p] + x[p + 1] + x[p + w] + x[p + w + 1]);
            }
        }
    }
    out
}

pub fn avg_pool2x2_backward(grad_out: &[f64], lead: usize, h: usize, w: usize, grad_x: &mut [f64]) {
    let (oh, ow) = (h / 2, w / 2);
    for b in 0..lead {
        let ibase = b * h * w;
        let obase = b * oh * ow;
        for i in 0..oh {
            for j in 0..ow {
                let g = 0.25 * grad_out[obase + i * ow + j];
                let p = ibase + 2 * i * w + 2 * j;
                grad_x[p] += g;
                grad_x[p + 1] += g;
                grad_x[p + w] += g;
                grad_x[p + w + 1] += g;
            }
        }
    }
}

/// `[C, S]` -> `[C]` mean over the trailing S elements of each channel.
pub fn global_avg_forward(x: &[f64], channels: usize, spatial: usize) -> Vec<f64> {
    (0..channels)
        .map(|c| x[c * spatial..(c + 1) * spatial].iter().sum::<f64>() / spatial as f64)
        .collect()
}

pub fn global_avg_backward(grad_out: &[f64], channels: usize, spatial: usize, grad_x: &mut [f64]) {
    for c in 0..channels {
        let g = grad_out[c] / spatial as f64;
        for v in &mut grad_x[c * spatial..(c + 1) * spatial] {
            *v += g;
        }
    }
}
