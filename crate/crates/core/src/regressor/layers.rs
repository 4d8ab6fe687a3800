//! Layer kernels with hand-written backward passes.
//!
//! Activations are `[image][channel][slice][cell]` with the cell axis
//! contiguous, so the innermost loops run along the 256-cell range axis.

/// A batch of multichannel 2-D maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Act {
    pub n: usize,
    pub c: usize,
    /// Slice (time) axis.
    pub w: usize,
    /// Cell (range) axis, contiguous.
    pub h: usize,
    pub data: Vec<f64>,
}

impl Act {
    pub fn zeros(n: usize, c: usize, w: usize, h: usize) -> Self {
        Self {
            n,
            c,
            w,
            h,
            data: vec![0.0; n * c * w * h],
        }
    }

    #[inline]
    pub fn plane(&self, n: usize, c: usize) -> usize {
        (n * self.c + c) * self.w * self.h
    }

    pub fn per_image(&self) -> usize {
        self.c * self.w * self.h
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Valid output cell range and input offset for kernel tap `kh`.
#[inline]
fn cell_span(h: usize, k: usize, kh: usize) -> (usize, usize, isize) {
    let p = (k / 2) as isize;
    let off = kh as isize - p;
    let y0 = (-off).max(0) as usize;
    let y1 = (h as isize - off).min(h as isize).max(0) as usize;
    (y0, y1, off)
}

/// Same-padded convolution, odd kernel `k`, weights `[out][in][kh][kw]`
/// (`kh` along cells, `kw` along slices), no bias.
pub fn conv_forward(x: &Act, weight: &[f64], cout: usize, k: usize) -> Act {
    let mut out = Act::zeros(x.n, cout, x.w, x.h);
    let p = (k / 2) as isize;
    let (w, h) = (x.w, x.h);
    for n in 0..x.n {
        for o in 0..cout {
            let ob = out.plane(n, o);
            for i in 0..x.c {
                let ib = x.plane(n, i);
                for kh in 0..k {
                    let (y0, y1, off) = cell_span(h, k, kh);
                    if y0 >= y1 {
                        continue;
                    }
                    for kw in 0..k {
                        let wv = weight[((o * x.c + i) * k + kh) * k + kw];
                        for xw in 0..w {
                            let sx = xw as isize + kw as isize - p;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let src = ib + sx as usize * h;
                            let dst = ob + xw * h;
                            let s0 = (y0 as isize + off) as usize;
                            axpy(
                                wv,
                                &x.data[src + s0..src + s0 + (y1 - y0)],
                                &mut out.data[dst + y0..dst + y1],
                            );
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of [`conv_forward`]: accumulates into `dweight`, returns `dx`
/// when `want_dx`.
pub fn conv_backward(x: &Act, weight: &[f64], k: usize, dout: &Act, dweight: &mut [f64], want_dx: bool) -> Option<Act> {
    let p = (k / 2) as isize;
    let (w, h) = (x.w, x.h);
    let cout = dout.c;
    let mut dx = want_dx.then(|| Act::zeros(x.n, x.c, w, h));
    for n in 0..x.n {
        for o in 0..cout {
            let ob = dout.plane(n, o);
            for i in 0..x.c {
                let ib = x.plane(n, i);
                for kh in 0..k {
                    let (y0, y1, off) = cell_span(h, k, kh);
                    if y0 >= y1 {
                        continue;
                    }
                    let s0 = (y0 as isize + off) as usize;
                    for kw in 0..k {
                        let widx = ((o * x.c + i) * k + kh) * k + kw;
                        let wv = weight[widx];
                        let mut acc = 0.0;
                        for xw in 0..w {
                            let sx = xw as isize + kw as isize - p;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let src = ib + sx as usize * h + s0;
                            let g = ob + xw * h;
                            let grow = &dout.data[g + y0..g + y1];
                            acc += dot(grow, &x.data[src..src + (y1 - y0)]);
                            if let Some(dx) = dx.as_mut() {
                                axpy(wv, grow, &mut dx.data[src..src + (y1 - y0)]);
                            }
                        }
                        dweight[widx] += acc;
                    }
                }
            }
        }
    }
    dx
}

pub const BN_EPS: f64 = 1e-5;

/// Saved state of a training-mode batch normalisation.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    /// Unbiased batch variance, for running statistics.
    pub var_unbiased: Vec<f64>,
}

/// Per-channel normalisation over images and positions. With `running`
/// the given statistics are used (evaluation mode); otherwise batch
/// statistics are computed and cached.
pub fn bn_forward(x: &Act, gamma: &[f64], beta: &[f64], running: Option<(&[f64], &[f64])>) -> (Act, Option<BnCache>) {
    let plane = x.w * x.h;
    let m = (x.n * plane) as f64;
    let mut out = x.clone();
    let mut cache = running.is_none().then(|| BnCache {
        xhat: vec![0.0; x.data.len()],
        inv_std: vec![0.0; x.c],
        mean: vec![0.0; x.c],
        var_unbiased: vec![0.0; x.c],
    });
    for c in 0..x.c {
        let (mean, var) = match running {
            Some((rm, rv)) => (rm[c], rv[c]),
            None => {
                let mut s = 0.0;
                for n in 0..x.n {
                    let b = x.plane(n, c);
                    s += x.data[b..b + plane].iter().sum::<f64>();
                }
                let mean = s / m;
                let mut v = 0.0;
                for n in 0..x.n {
                    let b = x.plane(n, c);
                    v += x.data[b..b + plane]
                        .iter()
                        .map(|a| (a - mean) * (a - mean))
                        .sum::<f64>();
                }
                if let Some(cache) = cache.as_mut() {
                    cache.mean[c] = mean;
                    cache.var_unbiased[c] = if m > 1.0 { v / (m - 1.0) } else { 0.0 };
                }
                (mean, v / m)
            }
        };
        let inv = 1.0 / (var + BN_EPS).sqrt();
        for n in 0..x.n {
            let b = x.plane(n, c);
            for j in b..b + plane {
                let xh = (x.data[j] - mean) * inv;
                out.data[j] = gamma[c] * xh + beta[c];
                if let Some(cache) = cache.as_mut() {
                    cache.xhat[j] = xh;
                }
            }
        }
        if let Some(cache) = cache.as_mut() {
            cache.inv_std[c] = inv;
        }
    }
    (out, cache)
}

/// Training-mode batch-norm backward; accumulates `dgamma`, `dbeta`.
pub fn bn_backward(dout: &Act, cache: &BnCache, gamma: &[f64], dgamma: &mut [f64], dbeta: &mut [f64]) -> Act {
    let plane = dout.w * dout.h;
    let m = (dout.n * plane) as f64;
    let mut dx = Act::zeros(dout.n, dout.c, dout.w, dout.h);
    for c in 0..dout.c {
        let (mut sum_dy, mut sum_dy_xh) = (0.0, 0.0);
        for n in 0..dout.n {
            let b = dout.plane(n, c);
            for j in b..b + plane {
                sum_dy += dout.data[j];
                sum_dy_xh += dout.data[j] * cache.xhat[j];
            }
        }
        dgamma[c] += sum_dy_xh;
        dbeta[c] += sum_dy;
        let k = gamma[c] * cache.inv_std[c] / m;
        for n in 0..dout.n {
            let b = dout.plane(n, c);
            for j in b..b + plane {
                dx.data[j] = k * (m * dout.data[j] - sum_dy - cache.xhat[j] * sum_dy_xh);
            }
        }
    }
    dx
}

pub fn relu_forward(x: &mut Act) {
    for v in &mut x.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zero the gradient where the rectified output was zero.
pub fn relu_backward(out: &Act, dout: &mut Act) {
    for (g, y) in dout.data.iter_mut().zip(&out.data) {
        if *y <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Non-overlapping `p x p` max pooling (floor on both axes); returns the
/// pooled map and the flat source index of every output.
pub fn maxpool_forward(x: &Act, p: usize) -> (Act, Vec<usize>) {
    let (ow, oh) = (x.w / p, x.h / p);
    let mut out = Act::zeros(x.n, x.c, ow, oh);
    let mut idx = vec![0usize; out.data.len()];
    for n in 0..x.n {
        for c in 0..x.c {
            let ib = x.plane(n, c);
            let ob = out.plane(n, c);
            for xw in 0..ow {
                for y in 0..oh {
                    let mut best = ib + (xw * p) * x.h + y * p;
                    for dw in 0..p {
                        for dh in 0..p {
                            let j = ib + (xw * p + dw) * x.h + y * p + dh;
                            if x.data[j] > x.data[best] {
                                best = j;
                            }
                        }
                    }
                    let o = ob + xw * oh + y;
                    out.data[o] = x.data[best];
                    idx[o] = best;
                }
            }
        }
    }
    (out, idx)
}

pub fn maxpool_backward(input_like: &Act, idx: &[usize], dout: &Act) -> Act {
    let mut dx = Act::zeros(input_like.n, input_like.c, input_like.w, input_like.h);
    for (g, &j) in dout.data.iter().zip(idx) {
        dx.data[j] += g;
    }
    dx
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Saved activations of an LSTM run over a batch of sequences.
#[derive(Debug, Clone)]
pub struct LstmCache {
    pub batch: usize,
    pub steps: usize,
    pub hidden: usize,
    /// Post-activation gates `[b][t][4H]` in order i, f, g, o.
    pub gates: Vec<f64>,
    /// Cell states `[b][t + 1][H]`, index 0 is the zero initial state.
    pub cells: Vec<f64>,
    /// Hidden states `[b][t + 1][H]`.
    pub hiddens: Vec<f64>,
}

/// LSTM over `x[b][t][d]`; returns final hidden states `[b][H]`.
pub fn lstm_forward(
    x: &[f64],
    batch: usize,
    steps: usize,
    d: usize,
    hidden: usize,
    w_ih: &[f64],
    w_hh: &[f64],
    bias: &[f64],
) -> (Vec<f64>, LstmCache) {
    let g4 = 4 * hidden;
    let mut cache = LstmCache {
        batch,
        steps,
        hidden,
        gates: vec![0.0; batch * steps * g4],
        cells: vec![0.0; batch * (steps + 1) * hidden],
        hiddens: vec![0.0; batch * (steps + 1) * hidden],
    };
    let mut z = vec![0.0; g4];
    for b in 0..batch {
        for t in 0..steps {
            let xt = &x[(b * steps + t) * d..(b * steps + t + 1) * d];
            let hp = (b * (steps + 1) + t) * hidden;
            let hprev = cache.hiddens[hp..hp + hidden].to_vec();
            for r in 0..g4 {
                z[r] = bias[r] + dot(&w_ih[r * d..(r + 1) * d], xt) + dot(&w_hh[r * hidden..(r + 1) * hidden], &hprev);
            }
            let gb = (b * steps + t) * g4;
            let hn = hp + hidden;
            for j in 0..hidden {
                let i = sigmoid(z[j]);
                let f = sigmoid(z[hidden + j]);
                let g = z[2 * hidden + j].tanh();
                let o = sigmoid(z[3 * hidden + j]);
                cache.gates[gb + j] = i;
                cache.gates[gb + hidden + j] = f;
                cache.gates[gb + 2 * hidden + j] = g;
                cache.gates[gb + 3 * hidden + j] = o;
                let c = f * cache.cells[hp + j] + i * g;
                cache.cells[hn + j] = c;
                cache.hiddens[hn + j] = o * c.tanh();
            }
        }
    }
    let mut last = vec![0.0; batch * hidden];
    for b in 0..batch {
        let hb = (b * (steps + 1) + steps) * hidden;
        last[b * hidden..(b + 1) * hidden].copy_from_slice(&cache.hiddens[hb..hb + hidden]);
    }
    (last, cache)
}

/// Backpropagation through time from the gradient of the final hidden
/// states. Accumulates weight gradients and returns `dx[b][t][d]`.
#[allow(clippy::too_many_arguments)]
pub fn lstm_backward(
    x: &[f64],
    d: usize,
    w_ih: &[f64],
    w_hh: &[f64],
    cache: &LstmCache,
    dlast: &[f64],
    dw_ih: &mut [f64],
    dw_hh: &mut [f64],
    dbias: &mut [f64],
) -> Vec<f64> {
    let (batch, steps, hidden) = (cache.batch, cache.steps, cache.hidden);
    let g4 = 4 * hidden;
    let mut dx = vec![0.0; batch * steps * d];
    let mut dz = vec![0.0; g4];
    for b in 0..batch {
        let mut dh = dlast[b * hidden..(b + 1) * hidden].to_vec();
        let mut dc = vec![0.0; hidden];
        for t in (0..steps).rev() {
            let gb = (b * steps + t) * g4;
            let hp = (b * (steps + 1) + t) * hidden;
            let hn = hp + hidden;
            for j in 0..hidden {
                let i = cache.gates[gb + j];
                let f = cache.gates[gb + hidden + j];
                let g = cache.gates[gb + 2 * hidden + j];
                let o = cache.gates[gb + 3 * hidden + j];
                let tc = cache.cells[hn + j].tanh();
                let dcj = dc[j] + dh[j] * o * (1.0 - tc * tc);
                dz[j] = dcj * g * i * (1.0 - i);
                dz[hidden + j] = dcj * cache.cells[hp + j] * f * (1.0 - f);
                dz[2 * hidden + j] = dcj * i * (1.0 - g * g);
                dz[3 * hidden + j] = dh[j] * tc * o * (1.0 - o);
                dc[j] = dcj * f;
            }
            let xt = &x[(b * steps + t) * d..(b * steps + t + 1) * d];
            let hprev = &cache.hiddens[hp..hp + hidden];
            let dxt = &mut dx[(b * steps + t) * d..(b * steps + t + 1) * d];
            let mut dh_prev = vec![0.0; hidden];
            for r in 0..g4 {
                let g = dz[r];
                if g == 0.0 {
                    continue;
                }
                dbias[r] += g;
                axpy(g, xt, &mut dw_ih[r * d..(r + 1) * d]);
                axpy(g, hprev, &mut dw_hh[r * hidden..(r + 1) * hidden]);
                axpy(g, &w_ih[r * d..(r + 1) * d], dxt);
                axpy(g, &w_hh[r * hidden..(r + 1) * hidden], &mut dh_prev);
            }
            dh = dh_prev;
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_matches_direct_sum() {
        let x = Act {
            n: 1,
            c: 2,
            w: 3,
            h: 4,
            data: (0..24).map(|v| (v as f64 * 0.37).sin()).collect(),
        };
        let wt: Vec<f64> = (0..2 * 2 * 9).map(|v| (v as f64 * 0.11).cos()).collect();
        let out = conv_forward(&x, &wt, 2, 3);
        for o in 0..2 {
            for xw in 0..3i64 {
                for y in 0..4i64 {
                    let mut s = 0.0;
                    for i in 0..2 {
                        for kh in 0..3i64 {
                            for kw in 0..3i64 {
                                let (sx, sy) = (xw + kw - 1, y + kh - 1);
                                if (0..3).contains(&sx) && (0..4).contains(&sy) {
                                    s += wt[((o * 2 + i) * 3 + kh as usize) * 3 + kw as usize]
                                        * x.data[x.plane(0, i) + sx as usize * 4 + sy as usize];
                                }
                            }
                        }
                    }
                    let got = out.data[out.plane(0, o) + xw as usize * 4 + y as usize];
                    assert!((got - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pool_floors_odd_sizes() {
        let x = Act {
            n: 1,
            c: 1,
            w: 5,
            h: 4,
            data: (0..20).map(|v| v as f64).collect(),
        };
        let (p, idx) = maxpool_forward(&x, 2);
        assert_eq!((p.w, p.h), (2, 2));
        assert_eq!(p.data, vec![5.0, 7.0, 13.0, 15.0]);
        assert_eq!(idx, vec![5, 7, 13, 15]);
    }

    #[test]
    fn bn_output_is_standardised() {
        let x = Act {
            n: 3,
            c: 2,
            w: 2,
            h: 2,
            data: (0..24).map(|v| (v * v) as f64).collect(),
        };
        let (y, cache) = bn_forward(&x, &[1.0, 1.0], &[0.0, 0.0], None);
        let cache = cache.unwrap();
        for c in 0..2 {
            let vals: Vec<f64> = (0..3)
                .flat_map(|n| y.data[y.plane(n, c)..y.plane(n, c) + 4].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / 12.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 12.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3);
            assert!(cache.var_unbiased[c] > 0.0);
        }
    }
}
