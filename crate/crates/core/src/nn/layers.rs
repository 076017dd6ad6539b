//! Layer primitives on flat f64 buffers (NCHW layout).

use rand::Rng;

pub const BN_EPS: f64 = 1e-5;

/// Same-padded stride-1 convolution.
/// x: [b][cin][h][w], w: [cout][cin][k][k], y: [b][cout][h][w]
#[allow(clippy::too_many_arguments)]
pub fn conv_forward(
    x: &[f64],
    w: &[f64],
    bias: &[f64],
    batch: usize,
    cin: usize,
    cout: usize,
    hw: usize,
    k: usize,
    y: &mut [f64],
) {
    let pad = (k / 2) as isize;
    let plane = hw * hw;
    for b in 0..batch {
        for co in 0..cout {
            let y_base = (b * cout + co) * plane;
            y[y_base..y_base + plane].fill(bias[co]);
            for ci in 0..cin {
                let x_base = (b * cin + ci) * plane;
                let w_base = (co * cin + ci) * k * k;
                for u in 0..k {
                    for v in 0..k {
                        let wt = w[w_base + u * k + v];
                        if wt == 0.0 {
                            continue;
                        }
                        let di = u as isize - pad;
                        let dj = v as isize - pad;
                        let i_lo = (-di).max(0) as usize;
                        let i_hi = ((hw as isize - di).min(hw as isize)) as usize;
                        for i in i_lo..i_hi {
                            let xi = (i as isize + di) as usize;
                            let j_lo = (-dj).max(0) as usize;
                            let j_hi = ((hw as isize - dj).min(hw as isize)) as usize;
                            let yrow = y_base + i * hw;
                            let xrow = x_base + xi * hw;
                            for j in j_lo..j_hi {
                                let xj = (j as isize + dj) as usize;
                                y[yrow + j] += wt * x[xrow + xj];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Gradients of `conv_forward` w.r.t. input, weights and bias.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    batch: usize,
    cin: usize,
    cout: usize,
    hw: usize,
    k: usize,
    dx: &mut [f64],
    dw: &mut [f64],
    db: &mut [f64],
) {
    let pad = (k / 2) as isize;
    let plane = hw * hw;
    dx.fill(0.0);
    dw.fill(0.0);
    db.fill(0.0);
    for b in 0..batch {
        for co in 0..cout {
            let y_base = (b * cout + co) * plane;
            for p in &dy[y_base..y_base + plane] {
                db[co] += p;
            }
            for ci in 0..cin {
                let x_base = (b * cin + ci) * plane;
                let w_base = (co * cin + ci) * k * k;
                for u in 0..k {
                    for v in 0..k {
                        let di = u as isize - pad;
                        let dj = v as isize - pad;
                        let wt = w[w_base + u * k + v];
                        let mut acc = 0.0;
                        let i_lo = (-di).max(0) as usize;
                        let i_hi = ((hw as isize - di).min(hw as isize)) as usize;
                        for i in i_lo..i_hi {
                            let xi = (i as isize + di) as usize;
                            let j_lo = (-dj).max(0) as usize;
                            let j_hi = ((hw as isize - dj).min(hw as isize)) as usize;
                            let yrow = y_base + i * hw;
                            let xrow = x_base + xi * hw;
                            for j in j_lo..j_hi {
                                let xj = (j as isize + dj) as usize;
                                let g = dy[yrow + j];
                                acc += g * x[xrow + xj];
                                dx[xrow + xj] += g * wt;
                            }
                        }
                        dw[w_base + u * k + v] += acc;
                    }
                }
            }
        }
    }
}

/// Cache of the per-channel statistics of one batch-norm forward pass.
pub struct BnCache {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// normalized values x_hat, same shape as the input
    pub x_hat: Vec<f64>,
}

/// Batch normalization over (batch, spatial) per channel.
/// In training mode computes batch statistics and returns them for the
/// backward pass; in inference mode uses the provided running statistics.
#[allow(clippy::too_many_arguments)]
pub fn bn_forward(
    x: &[f64],
    gamma: &[f64],
    beta: &[f64],
    batch: usize,
    ch: usize,
    plane: usize,
    stats: Option<(&[f64], &[f64])>, // (mean, var) when running in inference
    y: &mut [f64],
) -> BnCache {
    let m = (batch * plane) as f64;
    let mut mean = vec![0.0; ch];
    let mut var = vec![0.0; ch];
    match stats {
        Some((rm, rv)) => {
            mean.copy_from_slice(rm);
            var.copy_from_slice(rv);
        }
        None => {
            for b in 0..batch {
                for c in 0..ch {
                    let base = (b * ch + c) * plane;
                    for &v in &x[base..base + plane] {
                        mean[c] += v;
                    }
                }
            }
            for v in mean.iter_mut() {
                *v /= m;
            }
            for b in 0..batch {
                for c in 0..ch {
                    let base = (b * ch + c) * plane;
                    for &v in &x[base..base + plane] {
                        let d = v - mean[c];
                        var[c] += d * d;
                    }
                }
            }
            for v in var.iter_mut() {
                *v /= m;
            }
        }
    }
    let mut x_hat = vec![0.0; x.len()];
    for b in 0..batch {
        for c in 0..ch {
            let inv_std = 1.0 / (var[c] + BN_EPS).sqrt();
            let base = (b * ch + c) * plane;
            for i in base..base + plane {
                let xh = (x[i] - mean[c]) * inv_std;
                x_hat[i] = xh;
                y[i] = gamma[c] * xh + beta[c];
            }
        }
    }
    BnCache { mean, var, x_hat }
}

/// Full batch-statistics backward pass.
#[allow(clippy::too_many_arguments)]
pub fn bn_backward(
    cache: &BnCache,
    gamma: &[f64],
    dy: &[f64],
    batch: usize,
    ch: usize,
    plane: usize,
    dx: &mut [f64],
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) {
    let m = (batch * plane) as f64;
    dgamma.fill(0.0);
    dbeta.fill(0.0);
    let mut sum_dy = vec![0.0; ch];
    let mut sum_dy_xhat = vec![0.0; ch];
    for b in 0..batch {
        for c in 0..ch {
            let base = (b * ch + c) * plane;
            for i in base..base + plane {
                sum_dy[c] += dy[i];
                sum_dy_xhat[c] += dy[i] * cache.x_hat[i];
            }
        }
    }
    for c in 0..ch {
        dgamma[c] = sum_dy_xhat[c];
        dbeta[c] = sum_dy[c];
    }
    for b in 0..batch {
        for c in 0..ch {
            let inv_std = 1.0 / (cache.var[c] + BN_EPS).sqrt();
            let base = (b * ch + c) * plane;
            for i in base..base + plane {
                dx[i] = gamma[c] * inv_std / m
                    * (m * dy[i] - sum_dy[c] - cache.x_hat[i] * sum_dy_xhat[c]);
            }
        }
    }
}

/// Max pooling with size = stride = p; trailing rows/columns that do not
/// fill a window are dropped. Returns the input argmax index per output.
pub fn pool_forward(
    x: &[f64],
    batch: usize,
    ch: usize,
    hw_in: usize,
    p: usize,
    y: &mut [f64],
    argmax: &mut [usize],
) {
    let hw_out = hw_in / p;
    let plane_in = hw_in * hw_in;
    let plane_out = hw_out * hw_out;
    for b in 0..batch {
        for c in 0..ch {
            let in_base = (b * ch + c) * plane_in;
            let out_base = (b * ch + c) * plane_out;
            for i in 0..hw_out {
                for j in 0..hw_out {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0;
                    for di in 0..p {
                        for dj in 0..p {
                            let idx = in_base + (i * p + di) * hw_in + (j * p + dj);
                            if x[idx] > best {
                                best = x[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    y[out_base + i * hw_out + j] = best;
                    argmax[out_base + i * hw_out + j] = best_idx;
                }
            }
        }
    }
}

pub fn pool_backward(dy: &[f64], argmax: &[usize], dx: &mut [f64]) {
    dx.fill(0.0);
    for (g, &idx) in dy.iter().zip(argmax.iter()) {
        dx[idx] += g;
    }
}

/// Inverted dropout: zeroes units with probability `rate` and scales the
/// survivors by 1/(1-rate). Returns the per-unit keep mask scale.
pub fn dropout_forward<R: Rng>(x: &mut [f64], rate: f64, rng: &mut R) -> Vec<f64> {
    let scale = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = x
        .iter()
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { scale })
        .collect();
    for (v, &m) in x.iter_mut().zip(mask.iter()) {
        *v *= m;
    }
    mask
}

pub fn leaky_forward(x: &mut [f64], slope: f64) {
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v *= slope;
        }
    }
}

/// Backward through leaky ReLU given the pre-activation values.
pub fn leaky_backward(pre: &[f64], dy: &mut [f64], slope: f64) {
    for (g, &x) in dy.iter_mut().zip(pre.iter()) {
        if x <= 0.0 {
            *g *= slope;
        }
    }
}

/// Dense layer: y = W x + b, W stored [out][in].
pub fn dense_forward(
    x: &[f64],
    w: &[f64],
    bias: &[f64],
    batch: usize,
    n_in: usize,
    n_out: usize,
    y: &mut [f64],
) {
    for b in 0..batch {
        let xb = &x[b * n_in..(b + 1) * n_in];
        let yb = &mut y[b * n_out..(b + 1) * n_out];
        for o in 0..n_out {
            let row = &w[o * n_in..(o + 1) * n_in];
            let mut acc = bias[o];
            for (wi, xi) in row.iter().zip(xb.iter()) {
                acc += wi * xi;
            }
            yb[o] = acc;
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn dense_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    batch: usize,
    n_in: usize,
    n_out: usize,
    dx: &mut [f64],
    dw: &mut [f64],
    db: &mut [f64],
) {
    dx.fill(0.0);
    dw.fill(0.0);
    db.fill(0.0);
    for b in 0..batch {
        let xb = &x[b * n_in..(b + 1) * n_in];
        let dyb = &dy[b * n_out..(b + 1) * n_out];
        let dxb = &mut dx[b * n_in..(b + 1) * n_in];
        for o in 0..n_out {
            let g = dyb[o];
            db[o] += g;
            let row = &w[o * n_in..(o + 1) * n_in];
            let drow = &mut dw[o * n_in..(o + 1) * n_in];
            for i in 0..n_in {
                drow[i] += g * xb[i];
                dxb[i] += g * row[i];
            }
        }
    }
}

/// Numerically stable softmax per row, in place.
pub fn softmax_rows(logits: &mut [f64], batch: usize, classes: usize) {
    for b in 0..batch {
        let row = &mut logits[b * classes..(b + 1) * classes];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}
